#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Initial node and edge embeddings from appearance vectors and box geometry.

    Edge feature layout (6 columns):
        0 dx_norm   2 (x_j - x_i) / (h_i + h_j)
        1 dy_norm   2 (y_j - y_i) / (h_i + h_j)
        2 log h_i / h_j
        3 log w_i / w_j
        4 time difference in seconds
        5 Euclidean distance of the appearance vectors
'''

import csv
import logging
import os

import numpy as np
import torch

from mpntrack.engine import mlp_forward

logger = logging.getLogger(__name__)

DIM_EDGE_FEATURE = 6

FEATURE_MASKS = {
    'time'         : np.array([0, 0, 0, 0, 1, 0], dtype = np.float64),
    'time+pos'     : np.array([1, 1, 1, 1, 1, 0], dtype = np.float64),
    'time+pos+app' : np.array([1, 1, 1, 1, 1, 1], dtype = np.float64),
}


def geometry_features(det_i, det_j, fps, appearance_dist):
    ''' Return the 6 edge features of detection pair (i, j), frame(i) < frame(j).  '''
    if det_i.frame == det_j.frame:
        raise ValueError("Edge features need detections from different frames.")
    if det_i.frame > det_j.frame:
        raise ValueError("Edge features expect the earlier detection first.")

    x_i, y_i, w_i, h_i = det_i.box
    x_j, y_j, w_j, h_j = det_j.box
    if min(w_i, h_i, w_j, h_j) <= 0:
        raise ValueError("Box widths and heights must be positive.")

    h_sum = h_i + h_j

    return np.array([ 2 * (x_j - x_i) / h_sum,
                      2 * (y_j - y_i) / h_sum,
                      np.log(h_i / h_j),
                      np.log(w_i / w_j),
                      (det_j.frame - det_i.frame) / fps,
                      appearance_dist, ], dtype = np.float64)




def appearance_distance(vec_i, vec_j):
    vec_i = np.asarray(vec_i, dtype = np.float64)
    vec_j = np.asarray(vec_j, dtype = np.float64)
    if vec_i.shape != vec_j.shape:
        raise ValueError(f"Appearance dimensions differ: {vec_i.shape} vs {vec_j.shape}.")

    return float(np.linalg.norm(vec_j - vec_i))




def edge_features(graph, fps, vectors = None, feature_set = 'time+pos+app'):
    ''' Vectorised geometry_features over every edge of a graph, |E| x 6.  '''
    if feature_set not in FEATURE_MASKS:
        raise ValueError(f"Unknown feature set {feature_set}, expected one of {sorted(FEATURE_MASKS)}.")

    if vectors is None:
        vectors = np.stack([ det.appearance for det in graph.nodes ]) if graph.num_nodes else np.zeros((0, 1))

    boxes  = np.array([ det.box for det in graph.nodes ], dtype = np.float64).reshape(-1, 4)
    frames = graph.frames.astype(np.float64)
    src, dst = graph.edges[:, 0], graph.edges[:, 1]

    x_i, y_i, w_i, h_i = boxes[src].T
    x_j, y_j, w_j, h_j = boxes[dst].T
    h_sum = h_i + h_j

    feats = np.stack([ 2 * (x_j - x_i) / h_sum,
                       2 * (y_j - y_i) / h_sum,
                       np.log(h_i / h_j),
                       np.log(w_i / w_j),
                       (frames[dst] - frames[src]) / fps,
                       np.linalg.norm(vectors[dst] - vectors[src], axis = 1), ], axis = 1) if len(src) else np.zeros((0, DIM_EDGE_FEATURE))

    return feats * FEATURE_MASKS[feature_set]




class AppearanceProvider:
    ''' Source of one fixed-length appearance vector per detection.  '''
    mode = None

    def vectors(self, detections):
        raise NotImplementedError


    def attach(self, detections):
        ''' Return copies of the detections carrying their appearance vectors.  '''
        vecs = self.vectors(detections)
        return [ det.replace(appearance = vec) for det, vec in zip(detections, vecs) ]




class SyntheticAppearance(AppearanceProvider):
    ''' Per-identity unit Gaussian prototypes observed with Gaussian noise.

        A detection without identity gets a fresh prototype-free vector.  All
        draws are keyed by (seed, track) and (seed, detection id), so the same
        detection always gets the same vector.
    '''
    mode = 'synthetic'

    def __init__(self, dim = 32, sigma = 0.1, seed = 0):
        self.dim   = dim
        self.sigma = sigma
        self.seed  = seed

        return None


    def prototype(self, track):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 1, int(track)]))
        return rng.standard_normal(self.dim)


    def vector(self, det_id, track = None):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 2, int(det_id)]))
        if track is None:
            return rng.standard_normal(self.dim)
        return self.prototype(track) + self.sigma * rng.standard_normal(self.dim)


    def vectors(self, detections):
        return np.stack([ self.vector(det.id, det.gt_track) for det in detections ]).reshape(len(detections), self.dim)




class FileAppearance(AppearanceProvider):
    ''' Vectors looked up by detection id from an appearance CSV file.  '''
    mode = 'file'

    def __init__(self, path):
        self.path  = path
        self.table = read_appearance(path)
        self.dim   = len(next(iter(self.table.values()))) if self.table else 0

        return None


    def vectors(self, detections):
        missing = [ det.id for det in detections if det.id not in self.table ]
        if missing:
            raise KeyError(f"{self.path} has no appearance vector for detection ids {missing[:5]}...")
        return np.stack([ self.table[det.id] for det in detections ]).reshape(len(detections), self.dim)




def read_appearance(path):
    ''' Read "id,c0,c1,..." lines into a dict of id -> vector.  '''
    if not os.path.exists(path):
        raise FileNotFoundError(path)

    table = {}
    dim   = None
    with open(path, 'r') as fh:
        for line_id, row in enumerate(csv.reader(fh), start = 1):
            if not row or row[0].startswith('#'): continue
            try:
                det_id = int(row[0])
                vec    = np.array([ float(v) for v in row[1:] ], dtype = np.float64)
            except ValueError as err:
                raise ValueError(f"{path}:{line_id}: malformed appearance record ({err})") from err
            if dim is None: dim = len(vec)
            if len(vec) != dim or dim == 0:
                raise ValueError(f"{path}:{line_id}: expected {dim} components, got {len(vec)}")
            table[det_id] = vec

    return table


def write_appearance(path, detections):
    with open(path, 'w') as fh:
        for det in sorted(detections, key = lambda d: d.id):
            comps = ",".join(np.format_float_positional(v, trim = '-') for v in det.appearance)
            fh.write(f"{det.id},{comps}\n")




def encode_initial(graph, provider, params, fps, feature_set = 'time+pos+app', tape = None):
    ''' Step-0 node (|V| x 32) and edge (|E| x 16) embeddings.

        provider None means the detections already carry their vectors.
    '''
    params.require(['node_encoder', 'edge_encoder'])

    vectors = provider.vectors(graph.nodes) if provider is not None \
              else np.stack([ det.appearance for det in graph.nodes ])
    feats   = edge_features(graph, fps, vectors = vectors, feature_set = feature_set)

    spec_node = params.specs['node_encoder']
    spec_edge = params.specs['edge_encoder']
    h_node = mlp_forward(spec_node, params['node_encoder'], torch.as_tensor(vectors, dtype = torch.float64), tape = tape)
    h_edge = mlp_forward(spec_edge, params['edge_encoder'], torch.as_tensor(feats  , dtype = torch.float64), tape = tape)

    return h_node, h_edge
