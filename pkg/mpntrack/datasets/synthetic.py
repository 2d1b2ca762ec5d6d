#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Synthetic tracking sequences.

    Objects move with constant velocity perturbed by Gaussian acceleration
    and bounce off the image borders.  Detections are the ground truth boxes
    after misses, jitter and injected false positives.
'''

import logging
from dataclasses import dataclass, field

import numpy as np

from mpntrack.graph import Detection, Trajectory
from mpntrack.encoders.features import SyntheticAppearance

logger = logging.getLogger(__name__)


class ConfigSynthetic:
    name             = 'synth'
    n_tracks         = 20
    n_frames         = 300
    native_fps       = 30.0
    static           = True
    width            = 1920.0
    height           = 1080.0
    box_height       = (60.0, 200.0)
    aspect           = 0.4
    speed_max        = 3.0
    accel_std        = 0.3
    min_track_frames = None
    miss_prob        = 0.15
    fp_rate          = 0.5
    jitter           = 0.02
    appearance_dim   = 32
    appearance_sigma = 0.1
    seed             = 0

    def __init__(self, **kwargs):
        logger.info(f"___/ Configure Synthetic Sequence \\___")

        # Set values of attributes that are not known when obj is created
        for k, v in kwargs.items():
            setattr(self, k, v)
            logger.info(f"KV - {k:16s} : {v}")

        if not 0 <= self.miss_prob < 1:
            raise ValueError(f"miss_prob must be in [0, 1), got {self.miss_prob}.")
        if self.fp_rate < 0 or self.jitter < 0 or self.appearance_sigma < 0:
            raise ValueError("fp_rate, jitter and appearance_sigma must be nonnegative.")
        if self.n_frames < 1 or self.n_tracks < 0:
            raise ValueError("n_frames must be positive and n_tracks nonnegative.")




@dataclass
class Sequence:
    ''' Detections and ground truth of one video.

        Frames are 0-based.  ``frames`` lists the frames the sequence covers,
        which need not start at 0 after ``restrict``.
    '''
    name         : str
    detections   : list
    ground_truth : list
    native_fps   : float
    frames       : tuple
    static       : bool = True
    image_size   : tuple = (1920.0, 1080.0)
    metadata     : dict = field(default_factory = dict)

    def __post_init__(self):
        self.frames = tuple(int(t) for t in self.frames)


    @property
    def num_frames(self):
        return len(self.frames)


    def restrict(self, frames, name = None):
        keep = set(int(t) for t in frames)
        return Sequence( name         = name or self.name,
                         detections   = [ det for det in self.detections   if det.frame in keep ],
                         ground_truth = [ det for det in self.ground_truth if det.frame in keep ],
                         native_fps   = self.native_fps,
                         frames       = sorted(keep),
                         static       = self.static,
                         image_size   = self.image_size,
                         metadata     = dict(self.metadata), )


    def trajectories(self):
        ''' Ground truth grouped by track id, ordered by id.  '''
        return group_tracks(self.ground_truth)




def group_tracks(detections):
    tracks = {}
    for det in detections:
        tracks.setdefault(det.gt_track, []).append(det)

    return [ Trajectory(detections = sorted(dets, key = lambda d: d.frame), track_id = track_id)
             for track_id, dets in sorted(tracks.items()) ]




def _simulate_tracks(config, rng):
    ''' Return {track_id: [(frame, box), ...]} for tracks 1..n_tracks.  '''
    lo = np.zeros(2)
    hi = np.array([config.width, config.height], dtype = np.float64)

    min_len = config.n_frames if config.min_track_frames is None else min(config.min_track_frames, config.n_frames)

    tracks = {}
    for track_id in range(1, config.n_tracks + 1):
        birth  = int(rng.integers(0, config.n_frames - min_len + 1))
        length = int(rng.integers(min_len, config.n_frames - birth + 1))

        h = rng.uniform(*config.box_height)
        w = config.aspect * h
        half = np.array([w, h]) / 2

        center   = rng.uniform(lo + half, hi - half)
        velocity = rng.uniform(-config.speed_max, config.speed_max, size = 2)

        boxes = []
        for frame in range(birth, birth + length):
            boxes.append((frame, (center[0] - half[0], center[1] - half[1], w, h)))

            velocity = velocity + rng.normal(0.0, config.accel_std, size = 2)
            center   = center + velocity

            # Reflect off the borders...
            for dim in range(2):
                if center[dim] < lo[dim] + half[dim]:
                    center[dim]   = 2 * (lo[dim] + half[dim]) - center[dim]
                    velocity[dim] = -velocity[dim]
                if center[dim] > hi[dim] - half[dim]:
                    center[dim]   = 2 * (hi[dim] - half[dim]) - center[dim]
                    velocity[dim] = -velocity[dim]
            center = np.clip(center, lo + half, hi - half)

        tracks[track_id] = boxes

    return tracks




def generate_synthetic(config):
    ''' Return a Sequence whose detections carry confidence, appearance and
        the identity they were generated from (None for false positives).
    '''
    rng    = np.random.default_rng(config.seed)
    tracks = _simulate_tracks(config, rng)

    # Ground truth...
    gt_records = sorted(( (frame, track_id, box) for track_id, boxes in tracks.items() for frame, box in boxes ),
                        key = lambda r: (r[0], r[1]))
    ground_truth = [ Detection(id = idx, frame = frame, box = box, gt_track = track_id)
                     for idx, (frame, track_id, box) in enumerate(gt_records) ]

    # Observed boxes...
    records = []
    by_frame = {}
    for det in ground_truth: by_frame.setdefault(det.frame, []).append(det)
    for frame in range(config.n_frames):
        for det in by_frame.get(frame, []):
            if rng.random() < config.miss_prob: continue
            x, y, w, h = det.box
            if config.jitter > 0:
                x += rng.normal(0.0, config.jitter * w)
                y += rng.normal(0.0, config.jitter * h)
                w, h = w * np.exp(rng.normal(0.0, config.jitter)), h * np.exp(rng.normal(0.0, config.jitter))
            records.append((frame, (x, y, w, h), rng.uniform(0.6, 1.0), det.gt_track))

        for _ in range(rng.poisson(config.fp_rate)):
            h = rng.uniform(*config.box_height)
            w = config.aspect * h
            x = rng.uniform(0.0, config.width  - w)
            y = rng.uniform(0.0, config.height - h)
            records.append((frame, (x, y, w, h), rng.uniform(0.3, 1.0), None))

    detections = [ Detection(id = idx, frame = frame, box = box, confidence = conf, gt_track = track)
                   for idx, (frame, box, conf, track) in enumerate(records) ]

    provider   = SyntheticAppearance(dim = config.appearance_dim, sigma = config.appearance_sigma, seed = config.seed)
    detections = provider.attach(detections) if detections else detections

    num_fp = sum(det.gt_track is None for det in detections)
    logger.info(f"MSG - synthesized {config.name}: {len(ground_truth)} gt boxes, {len(detections)} detections, {num_fp} false positives")

    return Sequence( name         = config.name,
                     detections   = detections,
                     ground_truth = ground_truth,
                     native_fps   = float(config.native_fps),
                     frames       = range(config.n_frames),
                     static       = config.static,
                     image_size   = (config.width, config.height), )
