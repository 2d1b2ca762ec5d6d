#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Command line surface: ``mpntrack <command> ...``.

    Usage errors exit with code 2 (argparse), domain errors with code 1.
    Every command that writes an output also writes ``<output>.log`` whose
    header echoes the version, the command line, the seed and the settings.
'''

import argparse
import json
import logging
import os
import sys

from mpntrack import __version__
from mpntrack.ablation  import ConfigAblation, run_ablation, summarize
from mpntrack.datasets.mot import ( read_detections, read_ground_truth, read_seqinfo, read_sequence_dir, read_tracks,
                                    write_results, write_sequence_dir, )
from mpntrack.datasets.synthetic import ConfigSynthetic, generate_synthetic
from mpntrack.encoders.features import FEATURE_MASKS, FileAppearance
from mpntrack.metrics   import aggregate, evaluate, format_summary, write_metrics_csv
from mpntrack.model     import MODES, MPNModel
from mpntrack.pipeline  import ConfigPipeline, track_sequence
from mpntrack.rounding  import ( SCHEMES, dump_violated_subgraph, read_scored_edges, round_scores,
                                 write_rounded_edges, )
from mpntrack.trainer   import ConfigTrainer, check_gradients, train
from mpntrack.utils     import MetaLog, configure_logging

logger = logging.getLogger(__name__)

DOMAIN_ERRORS = (ValueError, KeyError, FileNotFoundError, RuntimeError, FloatingPointError)


def log_path(output):
    return os.path.normpath(output) + '.log'


def resolved_seed(args):
    ''' The seed a run actually uses, None for commands without one.  '''
    if args.command == 'ablate':
        return tuple(args.seeds)
    if args.command == 'train' and args.seed is None:
        if not args.config: return ConfigTrainer.seed
        with open(args.config, 'r') as fh:
            settings = json.load(fh)
        return settings.get('seed', ConfigTrainer.seed) if isinstance(settings, dict) else None

    return getattr(args, 'seed', None)


def start_log(path_log, args, argv):
    configure_logging(path_log, level = logging.DEBUG if args.verbose else logging.INFO)
    settings = { k : v for k, v in vars(args).items() if k not in ('func', 'verbose', 'command', 'seed', 'seeds') }
    seed     = resolved_seed(args)
    if seed is not None:
        settings['seed'] = seed
    MetaLog( version    = __version__,
             command    = ' '.join(['mpntrack', *argv]),
             subcommand = args.command,
             **settings ).report()




def sequence_dirs(paths):
    ''' Sequence directories given directly or as children of a root.  '''
    drcs = []
    for path in paths:
        if os.path.exists(os.path.join(path, 'det.txt')):
            drcs.append(path)
            continue
        if not os.path.isdir(path):
            raise FileNotFoundError(path)
        drcs += sorted( os.path.join(path, name) for name in os.listdir(path)
                        if os.path.exists(os.path.join(path, name, 'det.txt')) )
    if not drcs:
        raise FileNotFoundError(f"No sequence directory (with det.txt) under {paths}.")

    return drcs




def cmd_synth(args):
    config = ConfigSynthetic( name             = args.name,
                              n_tracks         = args.n_tracks,
                              n_frames         = args.n_frames,
                              native_fps       = args.native_fps,
                              static           = not args.moving,
                              miss_prob        = args.miss_prob,
                              fp_rate          = args.fp_rate,
                              jitter           = args.jitter,
                              appearance_dim   = args.appearance_dim,
                              appearance_sigma = args.sigma,
                              seed             = args.seed, )
    write_sequence_dir(args.out, generate_synthetic(config))

    return 0


def cmd_train(args):
    overrides = dict( iterations             = args.iterations,
                      lr                     = args.lr,
                      batch_graphs           = args.batch_graphs,
                      L                      = args.L,
                      l0                     = args.l0,
                      mode                   = args.mode,
                      feature_set            = args.feature_set,
                      shared_weights         = False if args.unshared else None,
                      decoupled_weight_decay = True if args.decoupled_weight_decay else None,
                      log_interval           = args.log_interval,
                      seed                   = args.seed, )
    overrides = { k : v for k, v in overrides.items() if v is not None }
    overrides.update( path_chkpt = args.out,
                      path_log   = args.log_csv or os.path.splitext(args.out)[0] + '.csv', )

    config = ConfigTrainer.from_json(args.config, **overrides) if args.config else ConfigTrainer(**overrides)

    dataset = [ read_sequence_dir(drc) for drc in sequence_dirs(args.data) ]
    for seq in dataset:
        if not seq.ground_truth:
            raise ValueError(f"Sequence {seq.name} has no ground truth to train on.")
        if seq.detections and seq.detections[0].appearance is None:
            raise ValueError(f"Sequence {seq.name} has no appearance.csv.")

    params, log = train(dataset, config)
    if log.best_checkpoint is None:
        MPNModel(config.model_config(), params = params).save_checkpoint(args.out, train_config = config.to_dict())
    logger.info(f"MSG - best monitored loss {log.best_loss}, checkpoint {args.out}")

    return 0


def cmd_track(args):
    detections = read_detections(args.inp)
    path_app   = args.appearance or os.path.join(os.path.dirname(os.path.abspath(args.inp)), 'appearance.csv')
    if not os.path.exists(path_app):
        raise FileNotFoundError(f"No appearance vectors, expected {path_app}.")

    model = MPNModel.load_checkpoint(args.params)
    model.eval()

    settings = dict(rounding = args.rounding, threshold = args.threshold, tqdm_disable = not args.progress)
    if args.window_frames is not None:  settings['window_frames']  = args.window_frames
    if args.overlap_frames is not None: settings['overlap_frames'] = args.overlap_frames
    config = ConfigPipeline.preset(args.preset, **settings)

    # Frame rate and camera motion from seqinfo.ini unless given...
    path_info = os.path.join(os.path.dirname(os.path.abspath(args.inp)), 'seqinfo.ini')
    info      = read_seqinfo(path_info) if os.path.exists(path_info) else {}
    native_fps = args.native_fps or info.get('native_fps', 30.0)
    static     = info.get('static', True) if args.moving is None else not args.moving

    result = track_sequence( detections, model, config,
                             native_fps = native_fps,
                             static     = static,
                             provider   = FileAppearance(path_app), )
    write_results(args.out, result.trajectories)

    path_diag = args.diagnostics or os.path.splitext(args.out)[0] + '.json'
    with open(path_diag, 'w') as fh:
        json.dump(result.diagnostics, fh, indent = 2, sort_keys = True)
    logger.info(f"SAVE - {path_diag}")

    if args.dump_violated:
        dump_violated_subgraph(args.dump_violated, result.scores, result.graph, result.solution, t = config.threshold)

    return 0


def cmd_eval(args):
    if len(args.gt) != len(args.pred):
        raise ValueError(f"Got {len(args.gt)} ground truth files and {len(args.pred)} result files.")
    diagnostics = args.diagnostics or [ None ] * len(args.pred)
    if len(diagnostics) != len(args.pred):
        raise ValueError("Give one diagnostics file per result file.")

    results = []
    for path_gt, path_pred, path_diag in zip(args.gt, args.pred, diagnostics):
        diag = {}
        if path_diag is not None:
            with open(path_diag, 'r') as fh:
                diag = json.load(fh)
        results.append(evaluate( read_ground_truth(path_gt), read_tracks(path_pred),
                                 name            = os.path.basename(path_pred),
                                 iou_min         = args.iou_min,
                                 constr          = diag.get('constraint_satisfaction'),
                                 num_constraints = diag.get('num_constraints'), ))
    rows = results + ([ aggregate(results) ] if len(results) > 1 else [])

    print(format_summary(rows))
    if args.csv:
        write_metrics_csv(args.csv, rows)

    return 0


def cmd_round(args):
    graph, scores, pairs = read_scored_edges(args.inp)
    solution = round_scores(args.scheme, scores, graph, args.threshold)
    write_rounded_edges(args.out, graph, scores, solution, pairs = pairs)
    logger.info(f"MSG - {args.scheme} rounding, feasible {solution.feasible}, "
                f"{int(solution.labels.sum())} of {graph.num_edges} edges active")

    return 0


def cmd_gradcheck(args):
    failed = 0
    for mode in args.modes:
        report = check_gradients(mode = mode, L = args.L, l0 = min(args.l0, args.L) if args.L else 0,
                                 seed = args.seed, tolerance = args.tolerance, max_entries = args.max_entries)
        print(f"{mode:12s} {report}")
        failed += not report.passed

    return 1 if failed else 0


def cmd_ablate(args):
    config = ConfigAblation( mode             = args.mode,
                             seeds            = tuple(args.seeds),
                             iterations       = args.iterations,
                             n_tracks         = args.n_tracks,
                             n_frames         = args.n_frames,
                             miss_prob        = args.miss_prob,
                             appearance_sigma = args.sigma,
                             tqdm_disable     = not args.progress, )
    rows    = run_ablation(config)
    summary = summarize(rows)

    write_metrics_csv(os.path.splitext(args.out)[0] + '.runs.csv', rows)
    write_metrics_csv(args.out, summary)
    print(format_summary(summary))

    return 0




def build_parser():
    parser = argparse.ArgumentParser(prog = 'mpntrack', description = 'Graph-based multi-object tracking with a time-aware message passing network.')
    parser.add_argument('--version', action = 'version', version = f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest = 'command', required = True)

    def add(name, func, help):
        p = sub.add_parser(name, help = help)
        p.add_argument('--verbose', action = 'store_true', help = 'Log debug records.')
        p.set_defaults(func = func)
        return p

    p = add('synth', cmd_synth, 'Write a synthetic sequence directory.')
    p.add_argument('--out',            required = True, help = 'Root directory, the sequence goes to <out>/<name>.')
    p.add_argument('--name',           default = 'synth')
    p.add_argument('--n-tracks',       type = int,   default = 20)
    p.add_argument('--n-frames',       type = int,   default = 300)
    p.add_argument('--native-fps',     type = float, default = 30.0)
    p.add_argument('--moving',         action = 'store_true', help = 'Mark the camera as moving.')
    p.add_argument('--miss-prob',      type = float, default = 0.15)
    p.add_argument('--fp-rate',        type = float, default = 0.5, help = 'Mean false positives per frame.')
    p.add_argument('--jitter',         type = float, default = 0.02)
    p.add_argument('--sigma',          type = float, default = 0.1, help = 'Appearance noise scale.')
    p.add_argument('--appearance-dim', type = int,   default = 32)
    p.add_argument('--seed',           type = int,   default = 0)

    p = add('train', cmd_train, 'Train a model on sequence directories with ground truth.')
    p.add_argument('--data',           required = True, nargs = '+', help = 'Sequence directories or their roots.')
    p.add_argument('--out',            required = True, help = 'Checkpoint path.')
    p.add_argument('--config',         help = 'JSON object of trainer settings, flags override it.')
    p.add_argument('--log-csv',        help = 'Training CSV log, default <out stem>.csv.')
    p.add_argument('--iterations',     type = int)
    p.add_argument('--lr',             type = float)
    p.add_argument('--batch-graphs',   type = int)
    p.add_argument('--L',              type = int, dest = 'L')
    p.add_argument('--l0',             type = int)
    p.add_argument('--mode',           choices = MODES)
    p.add_argument('--feature-set',    choices = tuple(FEATURE_MASKS))
    p.add_argument('--unshared',       action = 'store_true', help = 'One set of update networks per step.')
    p.add_argument('--decoupled-weight-decay', action = 'store_true')
    p.add_argument('--log-interval',   type = int)
    p.add_argument('--seed',           type = int)

    p = add('track', cmd_track, 'Track one detection file.')
    p.add_argument('--in',             required = True, dest = 'inp', help = 'MOT detection file.')
    p.add_argument('--params',         required = True, help = 'Checkpoint from train.')
    p.add_argument('--out',            required = True, help = 'MOT result file.')
    p.add_argument('--appearance',     help = 'Appearance CSV, default appearance.csv next to --in.')
    p.add_argument('--rounding',       choices = SCHEMES, default = 'greedy')
    p.add_argument('--threshold',      type = float, default = 0.5)
    p.add_argument('--preset',         choices = tuple(ConfigPipeline.PRESETS), default = 'default')
    p.add_argument('--window-frames',  type = int)
    p.add_argument('--overlap-frames', type = int)
    p.add_argument('--native-fps',     type = float, help = 'Default from seqinfo.ini next to --in, else 30.')
    p.add_argument('--moving',         action = 'store_true', default = None, help = 'Default from seqinfo.ini, else static.')
    p.add_argument('--diagnostics',    help = 'Diagnostics JSON, default <out stem>.json.')
    p.add_argument('--dump-violated',  help = 'Write the violated subgraph edge list here.')
    p.add_argument('--progress',       action = 'store_true')

    p = add('eval', cmd_eval, 'Evaluate result files against ground truth.')
    p.add_argument('--gt',             required = True, nargs = '+')
    p.add_argument('--pred',           required = True, nargs = '+')
    p.add_argument('--diagnostics',    nargs = '+', help = 'Diagnostics JSON per result, fills the Constr column.')
    p.add_argument('--iou-min',        type = float, default = 0.5)
    p.add_argument('--csv',            help = 'Also write the table as CSV.')

    p = add('round', cmd_round, 'Round a scored edge list.')
    p.add_argument('--in',             required = True, dest = 'inp', help = "Lines of 'src dst score'.")
    p.add_argument('--out',            required = True, help = "Lines of 'src dst score label'.")
    p.add_argument('--scheme',         choices = SCHEMES, default = 'greedy')
    p.add_argument('--threshold',      type = float, default = 0.5)

    p = add('gradcheck', cmd_gradcheck, 'Finite-difference check of the training loss gradient.')
    p.add_argument('--modes',          nargs = '+', choices = MODES, default = list(MODES))
    p.add_argument('--L',              type = int, dest = 'L', default = 2)
    p.add_argument('--l0',             type = int, default = 1)
    p.add_argument('--tolerance',      type = float, default = 1e-4)
    p.add_argument('--max-entries',    type = int)
    p.add_argument('--seed',           type = int, default = 0)

    p = add('ablate', cmd_ablate, 'Run an ablation sweep on synthetic data.')
    p.add_argument('--mode',           required = True, choices = ('arch', 'depth', 'features', 'rounding'))
    p.add_argument('--out',            required = True, help = 'Summary CSV, per-run rows go to <out stem>.runs.csv.')
    p.add_argument('--seeds',          type = int, nargs = '+', default = [0])
    p.add_argument('--iterations',     type = int, default = 3000)
    p.add_argument('--n-tracks',       type = int, default = 20)
    p.add_argument('--n-frames',       type = int, default = 300)
    p.add_argument('--miss-prob',      type = float, default = 0.15)
    p.add_argument('--sigma',          type = float, default = 0.3)
    p.add_argument('--progress',       action = 'store_true')

    return parser




def output_of(args):
    ''' The path the run's log file sits next to, None for stderr only.  '''
    if args.command == 'synth':
        return os.path.join(args.out, args.name)
    if args.command == 'eval':
        return args.csv
    if args.command == 'gradcheck':
        return None

    return args.out


def main(argv = None):
    argv   = sys.argv[1:] if argv is None else list(argv)
    args   = build_parser().parse_args(argv)
    output = output_of(args)

    try:
        if output is not None:
            drc = os.path.dirname(os.path.abspath(output))
            os.makedirs(drc, exist_ok = True)
        start_log(log_path(output) if output is not None else None, args, argv)
        return args.func(args)
    except DOMAIN_ERRORS as err:
        logger.error(f"{type(err).__name__}: {err}")
        return 1
