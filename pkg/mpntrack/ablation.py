#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Ablation sweeps on a seeded synthetic benchmark.

    Every run trains on one synthetic sequence and is evaluated on another
    generated with a different seed: edge accuracy on unaugmented clips of
    the test sequence, tracking metrics on the whole of it.

    Modes
        arch      vanilla against time-aware node updates
        depth     number of message passing steps L
        features  time / time+pos / time+pos+app edge features
        rounding  greedy against exact rounding of one trained model
'''

import logging
import time

import pandas as pd
import tqdm

from mpntrack.datasets.synthetic import ConfigSynthetic, generate_synthetic
from mpntrack.encoders.features import FEATURE_MASKS
from mpntrack.metrics   import evaluate
from mpntrack.model     import MPNModel
from mpntrack.pipeline  import ConfigPipeline, track_sequence
from mpntrack.trainer   import ConfigTrainer, sample_clip, train
from mpntrack.utils     import make_rng
from mpntrack.validator import clip_metrics

logger = logging.getLogger(__name__)

MODES = ('arch', 'depth', 'features', 'rounding')

TEST_SEED_OFFSET = 10000


class ConfigAblation:
    mode             = 'arch'
    seeds            = (0,)
    iterations       = 3000
    depths           = (0, 1, 2, 4, 6, 8, 12)
    schemes          = ('greedy', 'exact')
    n_tracks         = 20
    n_frames         = 300
    miss_prob        = 0.15
    fp_rate          = 0.5
    appearance_sigma = 0.3
    appearance_dim   = 32
    num_eval_clips   = 16
    rounding         = 'greedy'
    trainer          = {}
    tqdm_disable     = True

    def __init__(self, **kwargs):
        logger.info(f"___/ Configure Ablation \\___")

        # Set values of attributes that are not known when obj is created
        for k, v in kwargs.items():
            setattr(self, k, v)
            logger.info(f"KV - {k:16s} : {v}")

        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode}.")
        if not self.seeds:
            raise ValueError("At least one seed is needed.")




def variants(config):
    ''' (name, trainer overrides) of every run the mode asks for.  '''
    if config.mode == 'arch':
        return [ ('vanilla', dict(mode = 'vanilla')), ('time_aware', dict(mode = 'time_aware')) ]
    if config.mode == 'depth':
        return [ (f"L={L}", dict(L = L, l0 = None)) for L in config.depths ]
    if config.mode == 'features':
        return [ (feature_set, dict(feature_set = feature_set)) for feature_set in FEATURE_MASKS ]

    return [ ('time_aware', {}) ]




def benchmark(config, seed):
    ''' The training and the test sequence for one seed.  '''
    sequences = []
    for name, seed_seq in (('train', seed), ('test', seed + TEST_SEED_OFFSET)):
        config_synth = ConfigSynthetic( name             = f"synth-{name}-{seed}",
                                        n_tracks         = config.n_tracks,
                                        n_frames         = config.n_frames,
                                        miss_prob        = config.miss_prob,
                                        fp_rate          = config.fp_rate,
                                        appearance_sigma = config.appearance_sigma,
                                        appearance_dim   = config.appearance_dim,
                                        seed             = seed_seq, )
        sequences.append(generate_synthetic(config_synth))

    return sequences




def trainer_config(config, seed, overrides):
    settings = dict( iterations     = config.iterations,
                     appearance_dim = config.appearance_dim,
                     seed           = seed,
                     tqdm_disable   = True, )
    settings.update(config.trainer)
    settings.update(overrides)

    return ConfigTrainer(**settings)




def eval_clips(sequence, config_train, num_clips, seed):
    clips = []
    for clip_id in range(num_clips):
        clip = sample_clip(sequence, config_train, make_rng(seed, 2, clip_id))
        if clip is not None: clips.append(clip)

    return clips




def score_model(model, sequence, config_train, num_clips, seed, rounding):
    ''' Edge and tracking metrics of a trained model on the test sequence.  '''
    clips = eval_clips(sequence, config_train, num_clips, seed)
    edge  = clip_metrics(model, clips, l0 = config_train.l0, pos_weight = config_train.pos_weight)

    config_pipe = ConfigPipeline( rounding   = rounding,
                                  fps_static = config_train.fps_static,
                                  fps_moving = config_train.fps_moving,
                                  k          = config_train.k, )
    time_0 = time.perf_counter()
    result = track_sequence( sequence.detections, model, config_pipe,
                             native_fps = sequence.native_fps,
                             static     = sequence.static, )
    seconds = time.perf_counter() - time_0

    metrics = evaluate(sequence.trajectories(), result.trajectories, name = sequence.name,
                       constr          = result.diagnostics['constraint_satisfaction'],
                       num_constraints = result.diagnostics['num_constraints'], )

    return dict( metrics.to_dict(),
                 edge_accuracy  = edge['edge_accuracy'],
                 clip_constr    = edge['constraint_satisfaction'],
                 rounding       = rounding,
                 hz             = sequence.num_frames / seconds if seconds > 0 else float('inf'), )




def run_ablation(config):
    ''' One row per (variant, seed, rounding scheme).  '''
    schemes = config.schemes if config.mode == 'rounding' else (config.rounding,)
    runs    = [ (name, overrides, seed) for seed in config.seeds for name, overrides in variants(config) ]

    rows = []
    for name, overrides, seed in tqdm.tqdm(runs, disable = config.tqdm_disable):
        logger.info(f"MSG - ablation {config.mode}, variant {name}, seed {seed}")
        train_seq, test_seq = benchmark(config, seed)
        config_train = trainer_config(config, seed, overrides)

        params, log = train([train_seq], config_train)
        model = MPNModel(config_train.model_config(), params = params)
        model.eval()

        for scheme in schemes:
            row = score_model(model, test_seq, config_train, config.num_eval_clips, seed, scheme)
            row.update( name       = name if config.mode != 'rounding' else scheme,
                        mode       = config.mode,
                        variant    = name,
                        seed       = seed,
                        train_loss = log.rows[-1]['loss'] if log.rows else None, )
            rows.append(row)

    return rows




COUNT_COLUMNS = ('mt', 'ml', 'fp', 'fn', 'idsw')


def summarize(rows):
    ''' DataFrame with the mean of every numeric column per row name, in
        first-seen order.  Counts are rounded back to integers.
    '''
    df = pd.DataFrame(rows)
    numeric = [ c for c in df.select_dtypes(include = 'number').columns if c != 'seed' ]

    grouped = df.groupby('name', sort = False)
    summary = grouped.first()
    summary[numeric] = grouped[numeric].mean()
    for c in COUNT_COLUMNS:
        if c in summary: summary[c] = summary[c].round().astype(int)
    summary['seed'] = 'mean'

    return summary.reset_index()
