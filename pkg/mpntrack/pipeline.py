#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Sequence inference with overlapping windows.

    Detections are filtered, subsampled to the working frame rate and cut
    into windows of window_frames frames that advance by
    window_frames - overlap_frames.  Each window is scored on its own; an
    edge seen by several windows gets the mean of its step-L scores.  The
    union of all window graphs is then rounded once and read out as
    trajectories.
'''

import logging
from dataclasses import dataclass, field

import numpy as np
import tqdm

from mpntrack.graph    import Detection, Trajectory, TrackingGraph, build_graph
from mpntrack.rounding import SCHEMES, extract_trajectories, round_scores, threshold
from mpntrack.utils    import box_iou, frame_stride

logger = logging.getLogger(__name__)


class ConfigPipeline:
    window_frames   = 15
    overlap_frames  = 14
    fps_static      = 6.0
    fps_moving      = 9.0
    native_fps      = None
    static          = None
    k               = 50
    max_frame_gap   = None
    threshold       = 0.5
    rounding        = 'greedy'
    conf_min        = 0.5
    nms_iou         = 0.85
    interpolate     = True
    drop_singletons = True
    tqdm_disable    = True

    PRESETS = {
        'default' : {},
        'dense'   : dict( fps_static = 9.0, fps_moving = 15.0, window_frames = 25, overlap_frames = 24 ),
    }

    def __init__(self, **kwargs):
        logger.info(f"___/ Configure Pipeline \\___")

        # Set values of attributes that are not known when obj is created
        for k, v in kwargs.items():
            setattr(self, k, v)
            logger.info(f"KV - {k:16s} : {v}")

        if self.window_frames < 1:
            raise ValueError(f"window_frames must be positive, got {self.window_frames}.")
        if not 0 <= self.overlap_frames < self.window_frames:
            raise ValueError(f"overlap_frames must be in [0, window_frames), got {self.overlap_frames}.")
        if self.rounding not in SCHEMES:
            raise ValueError(f"rounding must be one of {SCHEMES}, got {self.rounding}.")
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}.")


    @classmethod
    def preset(cls, name, **kwargs):
        if name not in cls.PRESETS:
            raise ValueError(f"Unknown preset {name}, expected one of {sorted(cls.PRESETS)}.")

        return cls(**{ **cls.PRESETS[name], **kwargs })




@dataclass
class SequenceResult:
    trajectories : list
    scores       : np.ndarray
    graph        : object
    solution     : object
    diagnostics  : dict = field(default_factory = dict)




def prefilter(detections, conf_min = 0.5, nms_iou = 0.85):
    ''' Drop boxes below conf_min, then per-frame greedy NMS.

        Within a frame boxes are visited by descending confidence (ties by
        id); a box is suppressed when its IoU with a kept box exceeds nms_iou.
        Survivors keep their input order.
    '''
    by_frame = {}
    for det in detections:
        if det.confidence < conf_min: continue
        by_frame.setdefault(det.frame, []).append(det)

    keep_ids = set()
    for dets in by_frame.values():
        dets = sorted(dets, key = lambda d: (-d.confidence, d.id))
        iou  = box_iou([ d.box for d in dets ], [ d.box for d in dets ])
        kept = []
        for idx in range(len(dets)):
            if all(iou[idx, j] <= nms_iou for j in kept):
                kept.append(idx)
        keep_ids.update(id(dets[idx]) for idx in kept)

    survivors = [ det for det in detections if id(det) in keep_ids ]
    logger.debug(f"MSG - prefilter kept {len(survivors)} of {len(detections)} detections")

    return survivors




def subsample_frames(frames, native_fps, target_fps):
    ''' Every stride-th frame counted from the first one.  '''
    frames = sorted(frames)
    if not frames: return []
    stride = frame_stride(native_fps, target_fps)

    return [ t for t in frames if (t - frames[0]) % stride == 0 ]


def window_starts(num_frames, window_frames, overlap_frames):
    ''' Window start indices; the last window always ends at the last frame.  '''
    if num_frames <= 0: return []
    step   = window_frames - overlap_frames
    starts = list(range(0, max(num_frames - window_frames, 0) + 1, step))
    if starts[-1] + window_frames < num_frames:
        starts.append(num_frames - window_frames)

    return starts




def track_sequence(detections, model, config, native_fps = None, static = None, provider = None):
    ''' Run filtering, windowed scoring, averaging, rounding and
        post-processing over one sequence.

        model is anything with ``score(graph, fps = ...)`` and
        ``check_networks()``, normally an MPNModel.
    '''
    if not detections:
        raise ValueError("empty input")
    model.check_networks()

    native_fps = native_fps or config.native_fps or 30.0
    static     = (config.static if config.static is not None else True) if static is None else static
    target_fps = config.fps_static if static else config.fps_moving
    stride     = frame_stride(native_fps, target_fps)

    dets = prefilter(detections, conf_min = config.conf_min, nms_iou = config.nms_iou)
    if provider is not None and dets:
        dets = provider.attach(dets)

    # Working frames...
    if dets:
        frame_min = min(det.frame for det in dets)
        frame_max = max(det.frame for det in dets)
        frames    = subsample_frames(range(frame_min, frame_max + 1), native_fps, target_fps)
    else:
        frames = []
    frame_set = set(frames)
    nodes     = [ det for det in dets if det.frame in frame_set ]
    nodes_by_frame = {}
    for g, det in enumerate(nodes): nodes_by_frame.setdefault(det.frame, []).append(g)

    # Score every window, accumulate per global edge...
    max_frame_gap = config.max_frame_gap or config.window_frames * stride
    score_sum, score_cnt = {}, {}
    starts      = window_starts(len(frames), config.window_frames, config.overlap_frames)
    num_windows = 0
    for start in tqdm.tqdm(starts, disable = config.tqdm_disable):
        g_ids = [ g for t in frames[start : start + config.window_frames] for g in nodes_by_frame.get(t, []) ]
        if not g_ids: continue
        num_windows += 1

        graph_w  = build_graph([ nodes[g] for g in g_ids ], max_frame_gap = max_frame_gap, k = config.k)
        scores_w = model.score(graph_w, fps = native_fps)
        for (i, j), s in zip(graph_w.edges, scores_w):
            key = (g_ids[i], g_ids[j])
            score_sum[key] = score_sum.get(key, 0.0) + float(s)
            score_cnt[key] = score_cnt.get(key, 0) + 1

    graph  = TrackingGraph.from_edges(nodes, list(score_sum.keys()))
    scores = np.array([ score_sum[(int(i), int(j))] / score_cnt[(int(i), int(j))] for i, j in graph.edges ], dtype = np.float64)

    report   = threshold(scores, graph, config.threshold).report
    solution = round_scores(config.rounding, scores, graph, config.threshold)
    trajectories = postprocess(extract_trajectories(graph, solution), config)

    diagnostics = dict( constraint_satisfaction = report.satisfaction_ratio,
                        num_constraints         = report.total_constraints,
                        num_windows             = num_windows,
                        num_averaged_edges      = sum(1 for c in score_cnt.values() if c > 1),
                        num_edges               = graph.num_edges,
                        num_nodes               = graph.num_nodes,
                        rounding                = config.rounding, )
    logger.info(f"MSG - tracked {len(trajectories)} trajectories, " +
                ", ".join(f"{k} {v}" for k, v in diagnostics.items()))

    return SequenceResult( trajectories = trajectories,
                           scores       = scores,
                           graph        = graph,
                           solution     = solution,
                           diagnostics  = diagnostics, )




def interpolate_trajectory(traj):
    ''' Fill missing frames with linearly interpolated boxes (id -1).  '''
    dets = sorted(traj.detections, key = lambda d: d.frame)
    if len(dets) < 2:
        return traj

    filled = [dets[0]]
    for a, b in zip(dets[:-1], dets[1:]):
        gap = b.frame - a.frame
        box_a, box_b = np.array(a.box), np.array(b.box)
        for step in range(1, gap):
            box = box_a + (box_b - box_a) * step / gap
            filled.append(Detection(id = -1, frame = a.frame + step, box = tuple(box),
                                    confidence = min(a.confidence, b.confidence)))
        filled.append(b)

    return Trajectory(detections = filled, track_id = traj.track_id, nodes = list(traj.nodes))




def postprocess(trajectories, config):
    ''' Drop singletons, interpolate gaps and number tracks 1..n by first
        appearance.
    '''
    kept = [ traj for traj in trajectories if not (config.drop_singletons and len(traj) < 2) ]
    if config.interpolate:
        kept = [ interpolate_trajectory(traj) for traj in kept ]

    order = sorted(range(len(kept)), key = lambda n: (min(kept[n].frames), n))
    final = []
    for track_id, n in enumerate(order, start = 1):
        traj = kept[n]
        final.append(Trajectory(detections = sorted(traj.detections, key = lambda d: d.frame),
                                track_id = track_id, nodes = list(traj.nodes)))

    return final
