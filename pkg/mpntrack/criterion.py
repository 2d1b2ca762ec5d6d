#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Weighted multi-step binary cross-entropy over edge scores.  '''

import logging

import numpy as np
import torch

logger = logging.getLogger(__name__)

EPS_CLAMP = 1e-7


def positive_weight(labels):
    ''' #negative / #positive edges; 1 when either class is missing.  '''
    labels  = np.asarray(labels)
    num_pos = int(np.sum(labels == 1))
    num_neg = int(labels.size - num_pos)

    if num_pos == 0 or num_neg == 0:
        logger.warning(f"Batch has {num_pos} positive and {num_neg} negative edges, using positive weight 1.")
        return 1.0

    return num_neg / num_pos




def bce_sum(scores, labels, w, l0 = None, L = None, eps = EPS_CLAMP):
    ''' Unnormalized loss: sum over steps l0..L and edges of the weighted BCE.  '''
    if w <= 0:
        raise ValueError(f"Positive weight must be positive, got {w}.")

    l0 = scores.l0 if l0 is None else l0
    L  = scores.L  if L  is None else L
    missing = [ l for l in range(l0, L + 1) if l not in scores.scores ]
    if missing:
        raise ValueError(f"No scores for steps {missing}.")

    y = torch.as_tensor(np.asarray(labels), dtype = torch.float64)

    total = torch.zeros((), dtype = torch.float64)
    for l in range(l0, L + 1):
        y_hat = scores.scores[l]
        if y_hat.shape != y.shape:
            raise ValueError(f"Step {l} has {tuple(y_hat.shape)} scores for {tuple(y.shape)} labels.")
        y_hat = y_hat.clamp(eps, 1 - eps)
        total = total - torch.sum(w * y * torch.log(y_hat) + (1 - y) * torch.log(1 - y_hat))

    return total


def bce_loss(scores, labels, w, l0 = None, L = None, eps = EPS_CLAMP):
    ''' (1/|E|) sum_{l=l0..L} sum_e -[w y log y_hat + (1-y) log(1-y_hat)].

        The edge count normalizes the whole double sum.  A graph without
        edges has loss 0.
    '''
    num_edges = len(labels)
    total = bce_sum(scores, labels, w, l0 = l0, L = L, eps = eps)

    return total / num_edges if num_edges else total




def edge_accuracy(scores, labels, t = 0.5):
    ''' Fraction of edges whose thresholded score equals the label.  '''
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if labels.size == 0: return 1.0

    return float(np.mean((scores >= t).astype(np.int8) == labels))
