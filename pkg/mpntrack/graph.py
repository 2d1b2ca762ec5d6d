#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Detections, trajectories and the tracking graph.

    Nodes of a TrackingGraph are addressed by their position in
    ``graph.nodes``; edges by their row in ``graph.edges``.  Every edge is
    stored as (earlier-frame node, later-frame node) and the edge list is
    sorted lexicographically, which fixes the canonical summation order used
    by the message passing network.

    Edge labels are plain int8 numpy arrays indexed by edge.
'''

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from mpntrack.utils import calc_dmat

logger = logging.getLogger(__name__)


@dataclass(frozen = True, eq = False)
class Detection:
    id         : int
    frame      : int
    box        : tuple
    confidence : float = 1.0
    appearance : np.ndarray = None
    gt_track   : int = None

    def __post_init__(self):
        x, y, w, h = self.box
        if not (w > 0 and h > 0):
            raise ValueError(f"Detection {self.id}: box width and height must be positive, got {self.box}.")
        if self.frame < 0:
            raise ValueError(f"Detection {self.id}: frame must be nonnegative, got {self.frame}.")

        object.__setattr__(self, 'box', tuple(float(v) for v in self.box))
        if self.appearance is not None:
            object.__setattr__(self, 'appearance', np.asarray(self.appearance, dtype = np.float64))


    def replace(self, **changes):
        return replace(self, **changes)




@dataclass
class Trajectory:
    ''' Time-ordered detections sharing one identity.  '''
    detections : list
    track_id   : int  = None
    nodes      : list = field(default_factory = list)

    def __len__(self):
        return len(self.detections)


    @property
    def frames(self):
        return [ det.frame for det in self.detections ]




@dataclass(frozen = True, eq = False)
class TrackingGraph:
    nodes            : tuple
    edges            : np.ndarray
    past_neighbors   : tuple
    future_neighbors : tuple
    in_edges         : tuple
    out_edges        : tuple

    @property
    def num_nodes(self):
        return len(self.nodes)


    @property
    def num_edges(self):
        return len(self.edges)


    @property
    def frames(self):
        return np.array([ det.frame for det in self.nodes ], dtype = np.int64)


    def edge_index(self, i, j):
        ''' Return the row of edge (i, j), or -1 when absent.  '''
        out = self.out_edges[i]
        hit = out[self.edges[out, 1] == j]

        return int(hit[0]) if len(hit) else -1


    def max_degree(self):
        if self.num_nodes == 0: return 0
        return max(len(self.in_edges[i]) + len(self.out_edges[i]) for i in range(self.num_nodes))


    def subgraph(self, edge_ids):
        ''' Keep all nodes, restrict to the given edges.  '''
        edge_ids = np.asarray(edge_ids, dtype = np.int64)
        return TrackingGraph.from_edges(self.nodes, self.edges[edge_ids])


    @classmethod
    def from_edges(cls, nodes, pairs):
        ''' Build a graph from detections and (i, j) node pairs.

            Pairs are oriented earlier frame first and sorted.  Same-frame and
            duplicate pairs raise ValueError.
        '''
        nodes  = tuple(nodes)
        frames = np.array([ det.frame for det in nodes ], dtype = np.int64)
        edges  = np.array(pairs, dtype = np.int64).reshape(-1, 2)

        if len(edges):
            if edges.min() < 0 or edges.max() >= len(nodes):
                raise ValueError("Edge endpoint out of range.")

            # Orient earlier frame first...
            f_src, f_dst = frames[edges[:, 0]], frames[edges[:, 1]]
            if np.any(f_src == f_dst):
                raise ValueError("Edges between detections of the same frame are not allowed.")
            flip = f_src > f_dst
            edges[flip] = edges[flip][:, ::-1]

            # Canonical order...
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            if np.any(np.all(edges[1:] == edges[:-1], axis = 1)):
                raise ValueError("Duplicate edge in edge list.")

        num_nodes = len(nodes)
        edge_ids  = np.arange(len(edges), dtype = np.int64)

        # Edge ids are ascending within each adjacency list...
        by_src = np.argsort(edges[:, 0], kind = 'stable') if len(edges) else edge_ids
        by_dst = np.argsort(edges[:, 1], kind = 'stable') if len(edges) else edge_ids
        src_split = np.searchsorted(edges[by_src, 0], np.arange(num_nodes + 1)) if len(edges) else np.zeros(num_nodes + 1, dtype = np.int64)
        dst_split = np.searchsorted(edges[by_dst, 1], np.arange(num_nodes + 1)) if len(edges) else np.zeros(num_nodes + 1, dtype = np.int64)

        out_edges = tuple( edge_ids[by_src[src_split[i]:src_split[i+1]]] for i in range(num_nodes) )
        in_edges  = tuple( edge_ids[by_dst[dst_split[i]:dst_split[i+1]]] for i in range(num_nodes) )

        future_neighbors = tuple( edges[e, 1] for e in out_edges )
        past_neighbors   = tuple( edges[e, 0] for e in in_edges )

        return cls( nodes            = nodes,
                    edges            = edges,
                    past_neighbors   = past_neighbors,
                    future_neighbors = future_neighbors,
                    in_edges         = in_edges,
                    out_edges        = out_edges, )




@dataclass
class ConstraintReport:
    total_constraints  : int
    violated           : int
    satisfaction_ratio : float
    violated_nodes     : list




def build_graph(detections, max_frame_gap = 15, k = 50):
    ''' Connect detections of different frames, pruned by reciprocal k-NN.

        Parameters
        ----------
        detections : list of Detection, all carrying appearance vectors.
        max_frame_gap : int or None, largest frame difference of an edge.
        k : int or None, neighbours kept per node under Euclidean distance of
            the appearance vectors.  Ties go to the lower node index.
    '''
    if len(detections) == 0:
        raise ValueError("empty input")
    if k is not None and k < 1:
        raise ValueError(f"k must be positive, got {k}.")
    if max_frame_gap is not None and max_frame_gap < 1:
        raise ValueError(f"max_frame_gap must be positive, got {max_frame_gap}.")

    num_nodes = len(detections)
    frames    = np.array([ det.frame for det in detections ], dtype = np.int64)
    app       = np.stack([ np.asarray(det.appearance, dtype = np.float64) for det in detections ])

    # Group node indices by frame...
    frame_list = np.unique(frames)
    node_by_frame = { t : np.flatnonzero(frames == t) for t in frame_list }

    # Top-k candidates per node...
    knn = [ None ] * num_nodes
    for t in frame_list:
        rows = node_by_frame[t]
        near = [ node_by_frame[s] for s in frame_list
                 if s != t and (max_frame_gap is None or abs(s - t) <= max_frame_gap) ]
        if not near:
            for i in rows: knn[i] = np.empty(0, dtype = np.int64)
            continue
        cand = np.sort(np.concatenate(near))

        dmat = calc_dmat(app[rows], app[cand])
        for r, i in enumerate(rows):
            # Stable sort over ascending candidate ids breaks ties by lower id...
            order  = np.argsort(dmat[r], kind = 'stable')
            knn[i] = cand[order] if k is None else cand[order[:k]]

    # Keep mutual neighbours only, earlier frame first...
    knn_set = [ set(v.tolist()) for v in knn ]
    pairs = [ (i, j) for i in range(num_nodes) for j in knn[i]
              if frames[i] < frames[j] and i in knn_set[j] ]

    graph = TrackingGraph.from_edges(detections, pairs)
    logger.debug(f"MSG - graph with {graph.num_nodes} nodes, {graph.num_edges} edges")

    return graph




def ground_truth_labels(graph):
    ''' Label an edge active when it links temporally consecutive detections
        of the same ground-truth track, relative to the nodes in the graph.
    '''
    labels = np.zeros(graph.num_edges, dtype = np.int8)

    # Collect nodes of each track...
    track_nodes = {}
    for i, det in enumerate(graph.nodes):
        if det.gt_track is None: continue
        track_nodes.setdefault(det.gt_track, []).append(i)

    for nodes in track_nodes.values():
        nodes = sorted(nodes, key = lambda i: (graph.nodes[i].frame, i))
        for a, b in zip(nodes[:-1], nodes[1:]):
            if graph.nodes[a].frame == graph.nodes[b].frame: continue
            e = graph.edge_index(a, b)
            if e >= 0: labels[e] = 1

    return labels




def check_flow_constraints(graph, labels):
    ''' Evaluate the in-flow and out-flow <= 1 constraints of every node.  '''
    labels = np.asarray(labels)
    if labels.shape != (graph.num_edges,):
        raise ValueError(f"Expected {graph.num_edges} labels, got shape {labels.shape}.")

    num_nodes = graph.num_nodes
    active    = labels.astype(np.float64)
    if graph.num_edges:
        flow_in  = np.bincount(graph.edges[:, 1], weights = active, minlength = num_nodes)
        flow_out = np.bincount(graph.edges[:, 0], weights = active, minlength = num_nodes)
    else:
        flow_in  = np.zeros(num_nodes)
        flow_out = np.zeros(num_nodes)

    violated_nodes = []
    for i in range(num_nodes):
        if flow_in[i]  > 1: violated_nodes.append((i, 'in'))
        if flow_out[i] > 1: violated_nodes.append((i, 'out'))

    total    = 2 * num_nodes
    violated = len(violated_nodes)
    ratio    = 1.0 - violated / total if total else 1.0

    return ConstraintReport( total_constraints  = total,
                             violated           = violated,
                             satisfaction_ratio = ratio,
                             violated_nodes     = violated_nodes, )




def constraint_matrix(graph):
    ''' Return the (2|V|) x |E| 0/1 matrix A with A y <= 1 iff y is feasible.

        Row 2i is node i's incoming constraint, row 2i+1 its outgoing one.
    '''
    num_edges = graph.num_edges
    cols = np.arange(num_edges, dtype = np.int64)
    rows = np.concatenate([ 2 * graph.edges[:, 1], 2 * graph.edges[:, 0] + 1 ])
    data = np.ones(2 * num_edges, dtype = np.int8)

    return sp.csr_matrix((data, (rows, np.concatenate([cols, cols]))),
                         shape = (2 * graph.num_nodes, num_edges))
