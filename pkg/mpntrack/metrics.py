#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' CLEAR-MOT and identity metrics.

    Ground truth and predictions are lists of Trajectory with track_id set.
    A prediction covers a ground truth box when their IoU is at least
    iou_min (0.5).
'''

import logging
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from mpntrack.utils import box_iou, iou_assignment

logger = logging.getLogger(__name__)

MT_RATIO = 0.8
ML_RATIO = 0.2

CSV_COLUMNS = ('name', 'mota', 'idf1', 'mt', 'ml', 'fp', 'fn', 'idsw', 'constr',
               'num_gt', 'num_pred', 'idtp', 'num_gt_tracks', 'num_constraints')

SUMMARY_COLUMNS = { 'name' : 'name', 'mota' : 'MOTA', 'idf1' : 'IDF1', 'mt' : 'MT', 'ml' : 'ML',
                    'fp' : 'FP', 'fn' : 'FN', 'idsw' : 'ID Sw.', 'constr' : 'Constr', }


@dataclass
class EvalResult:
    name          : str
    mota          : float
    idf1          : float
    mt            : int
    ml            : int
    fp            : int
    fn            : int
    idsw          : int
    num_gt        : int
    num_pred      : int
    idtp          : int
    num_gt_tracks : int
    constr          : float = None
    num_constraints : int   = None

    def to_dict(self):
        return asdict(self)




def _by_frame(trajectories):
    ''' frame -> (ids, boxes) with boxes as an n x 4 array.  '''
    frames = {}
    for traj in trajectories:
        for det in traj.detections:
            frames.setdefault(det.frame, []).append((traj.track_id, det.box))

    return { t : ([ r[0] for r in rows ], np.array([ r[1] for r in rows ], dtype = np.float64).reshape(-1, 4))
             for t, rows in frames.items() }




def match_frame(gt_boxes, pred_boxes, iou_min = 0.5, gt_ids = None, pred_ids = None, previous = None):
    ''' One-to-one matching of a frame's boxes, all pairs with IoU >= iou_min.

        previous maps a ground truth id to the prediction id it was last
        matched with; such pairs are kept first when they still overlap
        enough.  The remaining boxes are matched by optimal assignment on
        1 - IoU.  Returns (gt_index, pred_index) pairs sorted by gt_index.
    '''
    iou = box_iou(gt_boxes, pred_boxes)
    num_gt, num_pred = iou.shape

    pairs  = []
    used_c = set()
    if previous and gt_ids is not None and pred_ids is not None:
        pred_index = { pid : c for c, pid in enumerate(pred_ids) }
        for r, gid in enumerate(gt_ids):
            c = pred_index.get(previous.get(gid))
            if c is not None and c not in used_c and iou[r, c] >= iou_min:
                pairs.append((r, c))
                used_c.add(c)

    used_r = { r for r, _ in pairs }
    rest_r = [ r for r in range(num_gt  ) if r not in used_r ]
    rest_c = [ c for c in range(num_pred) if c not in used_c ]
    if rest_r and rest_c:
        sub = iou_assignment(np.asarray(gt_boxes).reshape(-1, 4)[rest_r], np.asarray(pred_boxes).reshape(-1, 4)[rest_c], iou_min = iou_min)
        pairs += [ (rest_r[r], rest_c[c]) for r, c in sub ]

    return sorted(pairs)




def _clear_events(gt, pred, iou_min = 0.5):
    ''' Walk the frames once and count CLEAR events per frame.  '''
    gt_frames   = _by_frame(gt)
    pred_frames = _by_frame(pred)

    counts   = dict(fp = 0, fn = 0, idsw = 0, num_gt = 0, num_pred = 0)
    matched  = {}
    previous = {}
    empty    = ([], np.zeros((0, 4)))
    for t in sorted(set(gt_frames) | set(pred_frames)):
        gt_ids, gt_boxes     = gt_frames.get(t, empty)
        pred_ids, pred_boxes = pred_frames.get(t, empty)

        pairs = match_frame(gt_boxes, pred_boxes, iou_min, gt_ids = gt_ids, pred_ids = pred_ids, previous = previous)

        counts['num_gt']   += len(gt_ids)
        counts['num_pred'] += len(pred_ids)
        counts['fn']       += len(gt_ids)   - len(pairs)
        counts['fp']       += len(pred_ids) - len(pairs)
        for r, c in pairs:
            gid, pid = gt_ids[r], pred_ids[c]
            if gid in previous and previous[gid] != pid:
                counts['idsw'] += 1
            previous[gid] = pid
            matched[gid]  = matched.get(gid, 0) + 1

    return counts, matched




def mota(gt, pred, iou_min = 0.5):
    ''' Return dict(fp, fn, idsw, num_gt, mota) with
        MOTA = 1 - (FP + FN + IDSW) / #gt boxes.
    '''
    counts, _ = _clear_events(gt, pred, iou_min)
    if counts['num_gt'] == 0:
        raise ValueError("MOTA is undefined without ground truth boxes.")

    errors = counts['fp'] + counts['fn'] + counts['idsw']

    return dict( fp     = counts['fp'],
                 fn     = counts['fn'],
                 idsw   = counts['idsw'],
                 num_gt = counts['num_gt'],
                 mota   = 1.0 - errors / counts['num_gt'], )




def idf1_counts(gt, pred, iou_min = 0.5):
    ''' Return (idtp, #gt boxes, #pred boxes) under the best one-to-one
        assignment of predicted identities to ground truth identities.
    '''
    gt_frames   = _by_frame(gt)
    pred_frames = _by_frame(pred)
    num_gt   = sum(len(ids) for ids, _ in gt_frames.values())
    num_pred = sum(len(ids) for ids, _ in pred_frames.values())

    gt_keys   = sorted({ traj.track_id for traj in gt   })
    pred_keys = sorted({ traj.track_id for traj in pred })
    if not gt_keys or not pred_keys:
        return 0, num_gt, num_pred

    row_of = { k : r for r, k in enumerate(gt_keys)   }
    col_of = { k : c for c, k in enumerate(pred_keys) }

    # Frames where a pair of identities overlaps enough...
    overlap = np.zeros((len(gt_keys), len(pred_keys)), dtype = np.int64)
    for t, (gt_ids, gt_boxes) in gt_frames.items():
        if t not in pred_frames: continue
        pred_ids, pred_boxes = pred_frames[t]
        hit = box_iou(gt_boxes, pred_boxes) >= iou_min
        for r, c in zip(*np.nonzero(hit)):
            overlap[row_of[gt_ids[r]], col_of[pred_ids[c]]] += 1

    rows, cols = linear_sum_assignment(-overlap)

    return int(overlap[rows, cols].sum()), num_gt, num_pred


def idf1(gt, pred, iou_min = 0.5):
    ''' IDF1 = 2 IDTP / (#gt boxes + #pred boxes); 1 when both are empty.  '''
    idtp, num_gt, num_pred = idf1_counts(gt, pred, iou_min)
    if num_gt + num_pred == 0: return 1.0

    return 2 * idtp / (num_gt + num_pred)




def mt_ml(gt, pred, iou_min = 0.5):
    ''' Mostly tracked (covered in >= 80% of its frames) and mostly lost
        (<= 20%) ground truth tracks.
    '''
    _, matched = _clear_events(gt, pred, iou_min)

    mt, ml = 0, 0
    for traj in gt:
        ratio = matched.get(traj.track_id, 0) / len(traj) if len(traj) else 0.0
        if ratio >= MT_RATIO: mt += 1
        if ratio <= ML_RATIO: ml += 1

    return mt, ml




def evaluate(gt, pred, name = '', iou_min = 0.5, constr = None, num_constraints = None):
    clear = mota(gt, pred, iou_min)
    idtp, num_gt, num_pred = idf1_counts(gt, pred, iou_min)
    mt, ml = mt_ml(gt, pred, iou_min)

    result = EvalResult( name            = name,
                         mota            = clear['mota'],
                         idf1            = 2 * idtp / (num_gt + num_pred) if num_gt + num_pred else 1.0,
                         mt              = mt,
                         ml              = ml,
                         fp              = clear['fp'],
                         fn              = clear['fn'],
                         idsw            = clear['idsw'],
                         num_gt          = num_gt,
                         num_pred        = num_pred,
                         idtp            = idtp,
                         num_gt_tracks   = len(gt),
                         constr          = constr,
                         num_constraints = num_constraints, )
    logger.info(f"MSG - {name}: MOTA {result.mota:.4f}, IDF1 {result.idf1:.4f}, IDSW {result.idsw}")

    return result




def aggregate(results, name = 'OVERALL'):
    ''' Pool the counts of several sequences and recompute the ratios.

        Constr is pooled per constraint when every result that reports it
        also carries num_constraints.  Otherwise each result is weighted
        by its num_gt.
    '''
    if not results:
        raise ValueError("Nothing to aggregate.")

    sums = { k : sum(getattr(r, k) for r in results) for k in ('mt', 'ml', 'fp', 'fn', 'idsw', 'num_gt', 'num_pred', 'idtp', 'num_gt_tracks') }

    reported = [ r for r in results if r.constr is not None ]
    per_constraint = bool(reported) and all(r.num_constraints is not None for r in reported)
    constr = [ (r.constr, r.num_constraints if per_constraint else r.num_gt) for r in reported ]
    weight = sum(w for _, w in constr)

    return EvalResult( name            = name,
                       mota            = 1.0 - (sums['fp'] + sums['fn'] + sums['idsw']) / sums['num_gt'] if sums['num_gt'] else float('nan'),
                       idf1            = 2 * sums['idtp'] / (sums['num_gt'] + sums['num_pred']) if sums['num_gt'] + sums['num_pred'] else 1.0,
                       constr          = sum(c * w for c, w in constr) / weight if weight else None,
                       num_constraints = weight if per_constraint else None,
                       **sums )




def metrics_frame(rows):
    ''' DataFrame of results or dict rows, CSV_COLUMNS first.  '''
    if isinstance(rows, pd.DataFrame):
        df = rows.copy()
    else:
        df = pd.DataFrame([ r.to_dict() if isinstance(r, EvalResult) else dict(r) for r in rows ])
    extra = [ c for c in df.columns if c not in CSV_COLUMNS ]

    return df.reindex(columns = [ *CSV_COLUMNS, *extra ])


def write_metrics_csv(path, rows):
    ''' One line per result; extra keys of dict rows become extra columns.  '''
    metrics_frame(rows).to_csv(path, index = False, na_rep = '')
    logger.info(f"SAVE - {path}")


def _ratio(v):
    return '-' if pd.isna(v) else f"{v:.4f}"


def format_summary(rows):
    ''' Plain text table: MOTA, IDF1, MT, ML, FP, FN, ID Sw., Constr.  '''
    df = metrics_frame(rows)[list(SUMMARY_COLUMNS)].copy()
    df['name'] = df['name'].fillna('')
    for c in ('mota', 'idf1', 'constr'):
        df[c] = df[c].map(_ratio)

    return df.rename(columns = SUMMARY_COLUMNS).to_string(index = False)
