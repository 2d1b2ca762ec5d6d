#!/usr/bin/env python
# -*- coding: utf-8 -*-

import logging

import torch
import tqdm
import numpy as np
from torch.utils.data import DataLoader

from mpntrack.criterion import bce_sum, edge_accuracy, positive_weight
from mpntrack.graph import check_flow_constraints

logger = logging.getLogger(__name__)

class ConfigValidator:
    l0           = None
    pos_weight   = None
    threshold    = 0.5
    batch_size   = 8
    num_workers  = 0
    tqdm_disable = True

    def __init__(self, **kwargs):
        logger.info(f"___/ Configure Validator \\___")
        # Set values of attributes that are not known when obj is created...
        for k, v in kwargs.items():
            setattr(self, k, v)
            logger.info(f"KV - {k:16s} : {v}")




def clip_metrics(model, clips, scores_list = None, l0 = None, pos_weight = None, threshold = 0.5):
    ''' Loss, edge accuracy and constraint satisfaction over a set of clips.

        The loss is normalized by the total edge count of all clips, the
        constraint satisfaction is pooled over all their constraints.
    '''
    labels_all = np.concatenate([ clip.labels for clip in clips ]) if clips else np.zeros(0, dtype = np.int8)
    w = positive_weight(labels_all) if pos_weight is None else pos_weight

    if scores_list is None:
        with torch.no_grad():
            scores_list = [ model(clip.graph, fps = clip.fps, l0 = l0) for clip in clips ]

    loss   = sum(float(bce_sum(scores, clip.labels, w, l0 = l0)) for scores, clip in zip(scores_list, clips))
    finals = [ scores.numpy() for scores in scores_list ]

    total, violated = 0, 0
    for y_hat, clip in zip(finals, clips):
        report    = check_flow_constraints(clip.graph, (y_hat >= threshold).astype(np.int8))
        total    += report.total_constraints
        violated += report.violated

    num_edges = len(labels_all)
    y_hat_all = np.concatenate(finals) if finals else np.zeros(0)

    return { "loss"                    : loss / num_edges if num_edges else 0.0,
             "edge_accuracy"           : edge_accuracy(y_hat_all, labels_all, t = threshold),
             "constraint_satisfaction" : 1.0 - violated / total if total else 1.0, }




class EdgeValidator:
    def __init__(self, model, clips, config_test):
        self.model       = model
        self.clips       = clips
        self.config_test = config_test

        return None


    def validate(self):
        """ Score every held-out clip and report loss and edge metrics.  """
        model, config_test = self.model, self.config_test

        model.eval()
        loader_test = DataLoader( self.clips, shuffle     = False,
                                              batch_size  = config_test.batch_size,
                                              num_workers = config_test.num_workers,
                                              collate_fn  = list, )

        # Score each batch of clips...
        clips, scores_list = [], []
        batch = tqdm.tqdm(enumerate(loader_test), total = len(loader_test), disable = config_test.tqdm_disable)
        for step_id, entry in batch:
            with torch.no_grad():
                scores_list += [ model(clip.graph, fps = clip.fps, l0 = config_test.l0) for clip in entry ]
            clips += entry
            logger.debug(f"DATA - held-out batch {step_id:d}, {len(entry)} clips")

        metrics = clip_metrics( model, clips, scores_list = scores_list,
                                              l0          = config_test.l0,
                                              pos_weight  = config_test.pos_weight,
                                              threshold   = config_test.threshold, )

        logger.info(f"MSG - held-out loss {metrics['loss']:.8f}, edge accuracy {metrics['edge_accuracy']:.4f}, "
                    f"constraint satisfaction {metrics['constraint_satisfaction']:.4f}")

        return metrics
