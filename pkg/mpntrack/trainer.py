#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Clip sampling, augmentation and the training loop.

    Every clip draws from its own generator make_rng(seed, 0, iteration,
    clip, attempt), so a batch does not depend on how the clips before it
    were prepared.
'''

import csv
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch
import tqdm
from torch.utils.data import DataLoader, Dataset

from mpntrack.criterion import bce_loss, bce_sum, positive_weight
from mpntrack.datasets.transform import RandomDrop, RandomShift
from mpntrack.encoders.features import SyntheticAppearance
from mpntrack.engine import Tape, adam_step, backward, grad_check
from mpntrack.graph  import Detection, TrackingGraph, build_graph, ground_truth_labels
from mpntrack.model  import ConfigMPNModel, MPNModel
from mpntrack.utils  import frame_stride, make_rng, split_frames
from mpntrack.validator import ConfigValidator, EdgeValidator, clip_metrics

logger = logging.getLogger(__name__)

LOG_COLUMNS = ('iteration', 'loss', 'edge_accuracy', 'constraint_satisfaction', 'wall_ms')


def default_l0(L):
    ''' Supervise the later half of the steps: ceil(L/2) + 1, capped at L.  '''
    return min(math.ceil(L / 2) + 1, L)




class ConfigTrainer:
    iterations             = 15000
    lr                     = 3e-4
    weight_decay           = 1e-4
    decoupled_weight_decay = False
    beta1                  = 0.9
    beta2                  = 0.999
    eps                    = 1e-8
    batch_graphs           = 8
    clip_frames            = 15
    fps_static             = 6.0
    fps_moving             = 9.0
    L                      = 12
    l0                     = None
    mode                   = 'time_aware'
    feature_set            = 'time+pos+app'
    shared_weights         = True
    appearance_dim         = 32
    k                      = 50
    drop_prob              = 0.1
    jitter_scale           = 0.05
    pos_weight             = None
    holdout_frac           = 0.2
    num_holdout_clips      = 8
    log_interval           = 100
    max_resample           = 20
    num_workers            = 0
    path_chkpt             = None
    path_log               = None
    seed                   = 0
    tqdm_disable           = False

    FIELDS = ( 'iterations', 'lr', 'weight_decay', 'decoupled_weight_decay', 'beta1', 'beta2', 'eps',
               'batch_graphs', 'clip_frames', 'fps_static', 'fps_moving', 'L', 'l0', 'mode', 'feature_set',
               'shared_weights', 'appearance_dim', 'k', 'drop_prob', 'jitter_scale', 'pos_weight',
               'holdout_frac', 'num_holdout_clips', 'log_interval', 'max_resample', 'num_workers',
               'path_chkpt', 'path_log', 'seed', 'tqdm_disable', )

    def __init__(self, **kwargs):
        logger.info(f"___/ Configure Trainer \\___")
        # Set values of attributes that are not known when obj is created
        for k, v in kwargs.items():
            if k not in self.FIELDS:
                raise ValueError(f"Unknown trainer setting {k}.")
            setattr(self, k, v)
            logger.info(f"KV - {k:16s} : {v}")

        if self.l0 is None:
            self.l0 = default_l0(self.L)
            logger.info(f"KV - {'l0':16s} : {self.l0}")

        if self.L >= 1 and not 1 <= self.l0 <= self.L:
            raise ValueError(f"l0 must satisfy 1 <= l0 <= L, got l0 {self.l0}, L {self.L}.")
        if self.L == 0 and self.l0 != 0:
            raise ValueError(f"l0 must be 0 when L is 0, got {self.l0}.")
        if self.batch_graphs < 1:
            raise ValueError(f"batch_graphs must be at least 1, got {self.batch_graphs}.")
        if self.iterations < 0:
            raise ValueError(f"iterations must be nonnegative, got {self.iterations}.")
        if self.lr <= 0:
            raise ValueError(f"Learning rate must be positive, got {self.lr}.")
        if not 0 <= self.drop_prob < 1:
            raise ValueError(f"drop_prob must be in [0, 1), got {self.drop_prob}.")
        if self.pos_weight is not None and self.pos_weight <= 0:
            raise ValueError(f"pos_weight must be positive, got {self.pos_weight}.")
        if self.num_workers < 0:
            raise ValueError(f"num_workers must be nonnegative, got {self.num_workers}.")


    @classmethod
    def from_json(cls, path, **overrides):
        ''' Settings from a JSON object, then keyword overrides on top.  '''
        with open(path, 'r') as fh:
            settings = json.load(fh)
        if not isinstance(settings, dict):
            raise ValueError(f"{path} must hold a JSON object.")
        settings.update({ k : v for k, v in overrides.items() if v is not None })

        return cls(**settings)


    def to_dict(self):
        return { k : getattr(self, k) for k in self.FIELDS }


    def model_config(self):
        return ConfigMPNModel( mode           = self.mode,
                               L              = self.L,
                               appearance_dim = self.appearance_dim,
                               shared_weights = self.shared_weights,
                               feature_set    = self.feature_set,
                               seed           = self.seed, )




@dataclass
class ClipGraph:
    ''' A clip's tracking graph with its edge labels.  '''
    graph         : object
    labels        : np.ndarray
    fps           : float
    k             : int = None
    max_frame_gap : int = None
    name          : str = ''




class TrainingDivergedError(FloatingPointError):
    def __init__(self, iteration, last_loss):
        self.iteration = iteration
        self.last_loss = last_loss
        super().__init__(f"Loss is not finite at iteration {iteration}, last finite loss {last_loss}.")




@dataclass
class TrainingLog:
    rows            : list  = field(default_factory = list)
    best_checkpoint : str   = None
    best_loss       : float = float('inf')




def target_stride(sequence, config):
    return frame_stride(sequence.native_fps, config.fps_static if sequence.static else config.fps_moving)


def max_clip_frames(sequence, config):
    ''' Largest number of subsampled frames the sequence can hold.  '''
    if not sequence.num_frames: return 0
    return (sequence.frames[-1] - sequence.frames[0]) // target_stride(sequence, config) + 1


def fits_clip(sequence, config):
    return max_clip_frames(sequence, config) >= config.clip_frames


def sample_clip(sequence, config, rng, clip_frames = None):
    ''' Sample clip_frames frames at the target fps and build their graph.

        Returns None when the sampled frames hold no detection.
    '''
    clip_frames = config.clip_frames if clip_frames is None else clip_frames
    stride      = target_stride(sequence, config)
    span        = (clip_frames - 1) * stride + 1

    first, last = sequence.frames[0], sequence.frames[-1]
    if last - first + 1 < span:
        raise ValueError(f"Sequence {sequence.name} has {last - first + 1} frames, a clip spans {span}.")

    start  = int(rng.integers(first, last - span + 2))
    frames = set(range(start, start + span, stride))
    dets   = [ det for det in sequence.detections if det.frame in frames ]
    logger.debug(f"DATA - {sequence.name}, start {start}, stride {stride}, {len(dets)} detections")
    if not dets: return None

    max_frame_gap = clip_frames * stride
    graph = build_graph(dets, max_frame_gap = max_frame_gap, k = config.k)

    return ClipGraph( graph         = graph,
                      labels        = ground_truth_labels(graph),
                      fps           = sequence.native_fps,
                      k             = config.k,
                      max_frame_gap = max_frame_gap,
                      name          = f"{sequence.name}:{start}", )




def augment(clip, rng, drop_prob = 0.1, jitter_scale = 0.05):
    ''' Drop nodes, jitter the survivors and rebuild graph and labels.

        Returns None when every node was dropped, the caller resamples.
    '''
    if drop_prob == 0 and jitter_scale == 0: return clip

    dets = RandomDrop(drop_prob)(list(clip.graph.nodes), rng)
    if not dets: return None
    dets = RandomShift(jitter_scale)(dets, rng)

    graph = build_graph(dets, max_frame_gap = clip.max_frame_gap, k = clip.k)

    return ClipGraph( graph         = graph,
                      labels        = ground_truth_labels(graph),
                      fps           = clip.fps,
                      k             = clip.k,
                      max_frame_gap = clip.max_frame_gap,
                      name          = clip.name, )




def split_sequence(sequence, holdout_frac = 0.2):
    ''' Training head and held-out tail of a sequence, split by frames.  '''
    head, tail = split_frames(sequence.frames, holdout_frac)

    return sequence.restrict(head), sequence.restrict(tail, name = f"{sequence.name}-holdout")




class ClipDataset(Dataset):
    ''' Augmented training clips, one item per (iteration, clip) slot.

        Item iteration * batch_graphs + clip_id draws from make_rng(seed, 0,
        iteration, clip_id, attempt), so the loader may prepare clips in any
        order or worker and still yield the same batches.
    '''

    def __init__(self, sequences, config):
        self.sequences = sequences
        self.config    = config

        return None


    def __len__(self):
        return self.config.iterations * self.config.batch_graphs


    def __getitem__(self, idx):
        config = self.config
        iteration, clip_id = divmod(idx, config.batch_graphs)
        for attempt in range(config.max_resample):
            rng  = make_rng(config.seed, 0, iteration, clip_id, attempt)
            seq  = self.sequences[int(rng.integers(len(self.sequences)))]
            clip = sample_clip(seq, config, rng)
            if clip is not None:
                clip = augment(clip, rng, drop_prob = config.drop_prob, jitter_scale = config.jitter_scale)
            if clip is not None: return clip

        raise RuntimeError(f"No usable clip after {config.max_resample} attempts at iteration {iteration}.")




def collate_clips(batch):
    ''' Clips differ in size, a batch stays a plain list.  '''
    return list(batch)




class Trainer:
    def __init__(self, model, dataset_train, config_train, validator = None):
        self.model         = model
        self.dataset_train = dataset_train
        self.config_train  = config_train
        self.validator     = validator
        self.log           = TrainingLog()

        # Only sequences long enough for a clip can be sampled...
        self.sequences = [ seq for seq in dataset_train if fits_clip(seq, config_train) ]
        if not self.sequences:
            raise ValueError("No training sequence is long enough for one clip.")
        self.dataset_clips = ClipDataset(self.sequences, config_train)

        return None


    def save_checkpoint(self, path = None, **metadata):
        path = path or self.config_train.path_chkpt
        self.model.save_checkpoint(path, train_config = self.config_train.to_dict(), **metadata)


    def sample_batch(self, iteration):
        ''' The clips the loader yields at the given iteration.  '''
        offset = iteration * self.config_train.batch_graphs
        return [ self.dataset_clips[offset + clip_id] for clip_id in range(self.config_train.batch_graphs) ]


    def step(self, clips):
        ''' One optimizer step on a batch, returning the batch scores and loss.  '''
        config = self.config_train
        params = self.model.params

        labels_all = np.concatenate([ clip.labels for clip in clips ])
        w = positive_weight(labels_all) if config.pos_weight is None else config.pos_weight

        tape   = Tape()
        scores = [ self.model(clip.graph, fps = clip.fps, tape = tape, l0 = config.l0) for clip in clips ]
        total  = sum(bce_sum(s, clip.labels, w, l0 = config.l0) for s, clip in zip(scores, clips))
        loss   = total / len(labels_all) if len(labels_all) else total
        tape.record('loss', loss)

        if not torch.isfinite(loss):
            return scores, loss

        if loss.requires_grad:
            backward(tape)
        adam_step( params, lr           = config.lr,
                           beta1        = config.beta1,
                           beta2        = config.beta2,
                           eps          = config.eps,
                           weight_decay = config.weight_decay,
                           decoupled_weight_decay = config.decoupled_weight_decay, )

        return scores, loss


    def train(self):
        """ The training loop.  """
        config   = self.config_train
        log      = self.log
        time_0   = time.perf_counter()
        loss_last = None

        fh_csv = None
        if config.path_log is not None:
            is_new = not os.path.exists(config.path_log)
            fh_csv = open(config.path_log, 'a', newline = '')
            writer = csv.DictWriter(fh_csv, fieldnames = LOG_COLUMNS)
            if is_new: writer.writeheader()

        try:
            self.model.train()
            loader_train = DataLoader( self.dataset_clips, shuffle     = False,
                                                           batch_size  = config.batch_graphs,
                                                           num_workers = config.num_workers,
                                                           collate_fn  = collate_clips, )
            batch = tqdm.tqdm(enumerate(loader_train), total = len(loader_train), disable = config.tqdm_disable)
            for iteration, clips in batch:
                for clip in clips:
                    logger.debug(f"DATA - iteration {iteration}, clip {clip.name}, {clip.graph.num_edges} edges")

                scores, loss = self.step(clips)
                loss_val = float(loss)
                if not math.isfinite(loss_val):
                    raise TrainingDivergedError(iteration, loss_last)
                loss_last = loss_val

                is_last = iteration == config.iterations - 1
                if (iteration + 1) % config.log_interval != 0 and not is_last: continue

                # Held-out metrics when available, else the batch itself...
                if self.validator is not None:
                    self.validator.model = self.model
                    metrics = self.validator.validate()
                else:
                    metrics = clip_metrics(self.model, clips, scores_list = scores, l0 = config.l0, pos_weight = config.pos_weight)

                row = dict( iteration               = iteration + 1,
                            loss                    = metrics["loss"],
                            edge_accuracy           = metrics["edge_accuracy"],
                            constraint_satisfaction = metrics["constraint_satisfaction"],
                            wall_ms                 = round(1000 * (time.perf_counter() - time_0), 3), )
                log.rows.append(row)
                if fh_csv is not None:
                    writer.writerow(row)
                    fh_csv.flush()

                logger.info(f"MSG - iteration {iteration + 1}, train loss {loss_val:.8f}, "
                            f"monitor loss {metrics['loss']:.8f}, edge accuracy {metrics['edge_accuracy']:.4f}, "
                            f"constraint satisfaction {metrics['constraint_satisfaction']:.4f}")

                # Save checkpoint whenever the monitored loss gets smaller...
                if metrics["loss"] < log.best_loss:
                    log.best_loss = metrics["loss"]
                    if config.path_chkpt is not None:
                        self.save_checkpoint(iteration = iteration + 1, monitor_loss = metrics["loss"])
                        log.best_checkpoint = config.path_chkpt
        finally:
            if fh_csv is not None: fh_csv.close()
            self.model.eval()

        return log




def train(dataset, config):
    ''' Train a model on a list of Sequences.

        The last holdout_frac of every sequence's frames is kept for
        monitoring.  Returns (ModelParams, TrainingLog).
    '''
    splits   = [ split_sequence(seq, config.holdout_frac) for seq in dataset ]
    train_ds = [ head for head, _ in splits ]
    holdout  = [ tail for _, tail in splits if tail.num_frames ]

    model = MPNModel(config.model_config())

    # Fixed held-out clips without augmentation, shortened to fit the tail...
    clips   = []
    fitting = [ seq for seq in holdout if max_clip_frames(seq, config) >= 2 ]
    for clip_id in range(config.num_holdout_clips if fitting else 0):
        rng  = make_rng(config.seed, 1, clip_id)
        seq  = fitting[clip_id % len(fitting)]
        clip = sample_clip(seq, config, rng, clip_frames = min(config.clip_frames, max_clip_frames(seq, config)))
        if clip is not None: clips.append(clip)
    if not clips:
        logger.warning("No held-out clip available, monitoring the training batches instead.")

    validator = None
    if clips:
        config_validator = ConfigValidator( l0          = config.l0,
                                            pos_weight  = config.pos_weight,
                                            num_workers = config.num_workers, )
        validator = EdgeValidator(model, clips, config_validator)

    trainer = Trainer(model, train_ds, config, validator = validator)
    log     = trainer.train()

    return model.params, log




def gradcheck_clip(appearance_dim = 8, seed = 0):
    ''' A 6-node, 8-edge clip: two tracks over three frames, every edge
        between neighbouring frames.
    '''
    provider = SyntheticAppearance(dim = appearance_dim, sigma = 0.1, seed = seed)
    rng      = make_rng(seed, 3)

    dets = []
    for frame in range(3):
        for track in (1, 2):
            x = 100.0 * track + 5.0 * frame + rng.normal(0.0, 1.0)
            y = 50.0 + 2.0 * frame + rng.normal(0.0, 1.0)
            dets.append(Detection(id = len(dets), frame = frame, box = (x, y, 40.0 + track, 100.0), gt_track = track))
    dets  = provider.attach(dets)
    pairs = [ (i, j) for i in range(6) for j in range(6) if dets[j].frame == dets[i].frame + 1 ]
    graph = TrackingGraph.from_edges(dets, pairs)

    return ClipGraph(graph = graph, labels = ground_truth_labels(graph), fps = 6.0, name = 'gradcheck')


def check_gradients(mode = 'time_aware', L = 2, l0 = 1, seed = 0, tolerance = 1e-4, max_entries = None):
    ''' Finite-difference check of the full training loss for one mode.  '''
    config = ConfigMPNModel(mode = mode, L = L, appearance_dim = 8, seed = seed)
    model  = MPNModel(config)
    clip   = gradcheck_clip(appearance_dim = config.appearance_dim, seed = seed)
    w      = positive_weight(clip.labels)

    loss_fn = lambda: bce_loss(model(clip.graph, fps = clip.fps, l0 = l0), clip.labels, w, l0 = l0)

    return grad_check(loss_fn, model.params, tolerance = tolerance, max_entries = max_entries, seed = seed)
