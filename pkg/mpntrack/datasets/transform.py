#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Augmentations of a clip's detections.  Each transform takes the
    detections and a numpy Generator and returns new detections.
'''

import numpy as np


class RandomDrop:
    """ Remove each detection independently with probability drop_prob,
        simulating missed detections.
    """

    def __init__(self, drop_prob = 0.1):
        if not 0 <= drop_prob <= 1:
            raise ValueError(f"drop_prob must be in [0, 1], got {drop_prob}.")
        self.drop_prob = drop_prob

        return None


    def __call__(self, detections, rng):
        # One draw per detection, whatever the outcome...
        keep = rng.random(len(detections)) >= self.drop_prob

        return [ det for det, is_kept in zip(detections, keep) if is_kept ]




class RandomShift:
    """ Shift box corners by zero-mean Gaussian noise whose standard
        deviation is jitter_scale times the box width (x) or height (y).
    """

    def __init__(self, jitter_scale = 0.05):
        if jitter_scale < 0:
            raise ValueError(f"jitter_scale must be nonnegative, got {jitter_scale}.")
        self.jitter_scale = jitter_scale

        return None


    def __call__(self, detections, rng):
        if not detections: return []

        boxes = np.array([ det.box for det in detections ], dtype = np.float64)
        noise = rng.standard_normal((len(detections), 2)) * self.jitter_scale
        boxes[:, 0] += noise[:, 0] * boxes[:, 2]
        boxes[:, 1] += noise[:, 1] * boxes[:, 3]

        return [ det.replace(box = tuple(box)) for det, box in zip(detections, boxes) ]
