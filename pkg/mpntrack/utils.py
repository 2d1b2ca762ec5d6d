#!/usr/bin/env python
# -*- coding: utf-8 -*-

import logging
import os
import torch
import numpy as np
from scipy.optimize import linear_sum_assignment

logger = logging.getLogger(__name__)

INVALID_COST = 1e6


def make_rng(seed, *stream):
    ''' Return a numpy generator for an independent stream derived from seed.

        make_rng(seed, iteration, clip) always gives the same stream no
        matter in which order the streams are requested.
    '''
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(s) for s in stream]]))




def configure_logging(path_log = None, level = logging.INFO):
    ''' Route log records to stderr and, optionally, to a log file.  '''
    handlers = [logging.StreamHandler()]
    if path_log is not None:
        drc_log = os.path.dirname(os.path.abspath(path_log))
        os.makedirs(drc_log, exist_ok = True)
        handlers.append(logging.FileHandler(path_log, mode = 'w'))

    logging.basicConfig( format   = "%(asctime)s %(levelname)s %(name)-24s\n%(message)s\n",
                         datefmt  = "%m/%d/%Y %H:%M:%S",
                         level    = level,
                         handlers = handlers,
                         force    = True, )

    return None




class MetaLog:
    def __init__(self, **kwargs):
        self.kwargs = kwargs
        for k, v in kwargs.items(): setattr(self, k, v)


    def report(self):
        logger.info(f"___/ MetaLog \\___")
        for k, v in self.__dict__.items():
            if k == 'kwargs': continue
            logger.info(f"KV - {k:16s} : {v}")




def read_log(file):
    '''Return the KV and MSG records of a log file written by this package.

       KV records become a dict (first occurrence wins).  MSG records are kept
       in order as plain strings.
    '''
    kw_kv     = "KV - "
    kv_dict   = {}

    kw_msg    = "MSG - "
    msg_list  = []
    with open(file,'r') as fh:
        for line in fh.readlines():
            # Collect kv information...
            if kw_kv in line:
                info = line[line.rfind(kw_kv) + len(kw_kv):]
                k, v = info.split(":", maxsplit = 1)
                if not k.strip() in kv_dict: kv_dict[k.strip()] = v.strip()

            # Collect progress messages...
            if kw_msg in line:
                msg_list.append(line[line.rfind(kw_msg) + len(kw_msg):].strip())

    ret_dict = { "kv" : kv_dict, "msg" : tuple(msg_list) }

    return ret_dict




def calc_dmat(emb1_list, emb2_list, is_sqrt = True):
    ''' Return a 2D distance matrix.

        emb1.shape: len(emb1_list), len(emb1_list[0])
        emb2.shape: len(emb2_list), len(emb2_list[0])
    '''
    emb1_list = torch.as_tensor(np.asarray(emb1_list, dtype = np.float64))
    emb2_list = torch.as_tensor(np.asarray(emb2_list, dtype = np.float64))

    # emb1[:, None] has a dim of [ num1, 1   , dim ], equivalent to [num1, num2, dim] by stretching/replicating axis=1 num2 times.
    # emb2[None, :] has a dim of [ 1   , num2, dim ], equivalent to [num1, num2, dim] by stretching/replicating axis=0 num2 times.
    # subtraction returns dim of [ num1, num2, dim ]
    delta_distance_vector = emb1_list[:, None] - emb2_list[None, :]

    # Calculate the squared distance matrix...
    dmat = torch.sum( delta_distance_vector * delta_distance_vector, dim = -1 )

    if is_sqrt: dmat = torch.sqrt(dmat)

    return dmat.numpy()




def box_iou(boxes1, boxes2):
    ''' Return the IoU matrix between two sets of (x, y, w, h) boxes.  '''
    boxes1 = np.asarray(boxes1, dtype = np.float64).reshape(-1, 4)
    boxes2 = np.asarray(boxes2, dtype = np.float64).reshape(-1, 4)

    # Corners...
    x1 = np.maximum(boxes1[:, None, 0], boxes2[None, :, 0])
    y1 = np.maximum(boxes1[:, None, 1], boxes2[None, :, 1])
    x2 = np.minimum(boxes1[:, None, 0] + boxes1[:, None, 2], boxes2[None, :, 0] + boxes2[None, :, 2])
    y2 = np.minimum(boxes1[:, None, 1] + boxes1[:, None, 3], boxes2[None, :, 1] + boxes2[None, :, 3])

    inter = np.clip(x2 - x1, 0, None) * np.clip(y2 - y1, 0, None)
    area1 = boxes1[:, 2] * boxes1[:, 3]
    area2 = boxes2[:, 2] * boxes2[:, 3]
    union = area1[:, None] + area2[None, :] - inter

    iou = np.divide(inter, union, out = np.zeros_like(inter), where = union > 0)

    return iou




def split_frames(frames, frac_holdout):
    ''' Split a sorted frame range into a training head and a held-out tail.
    '''
    frames     = sorted(set(frames))
    size_tail  = int(round(frac_holdout * len(frames)))
    size_head  = len(frames) - size_tail

    return frames[:size_head], frames[size_head:]




def iou_assignment(boxes1, boxes2, iou_min = 0.5):
    ''' Optimal one-to-one matching maximizing IoU, pairs below iou_min dropped.

        Returns a list of (row, col) index pairs sorted by row.
    '''
    iou = box_iou(boxes1, boxes2)
    if iou.size == 0: return []

    cost = np.where(iou >= iou_min, 1.0 - iou, INVALID_COST)
    rows, cols = linear_sum_assignment(cost)

    return [ (int(r), int(c)) for r, c in zip(rows, cols) if iou[r, c] >= iou_min ]




def frame_stride(native_fps, target_fps):
    ''' Native frames between two kept frames when resampling to target_fps.  '''
    return max(1, int(round(native_fps / target_fps)))
