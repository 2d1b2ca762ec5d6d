#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' From fractional edge scores to feasible binary solutions.

    A binary solution is feasible when every node has at most one active
    incoming and at most one active outgoing edge.  Thresholding alone may
    break this; greedy and exact rounding repair it.  Both only touch the
    edges of violated constraints.
'''

import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from mpntrack.graph import Detection, TrackingGraph, Trajectory, check_flow_constraints

logger = logging.getLogger(__name__)

SCHEMES = ('threshold', 'greedy', 'exact')


@dataclass
class BinarySolution:
    labels   : np.ndarray
    feasible : bool
    report   : object
    ops      : int = 0
    scheme   : str = 'threshold'




def _as_scores(scores, graph):
    scores = np.asarray(scores, dtype = np.float64).reshape(-1)
    if scores.shape != (graph.num_edges,):
        raise ValueError(f"Expected {graph.num_edges} scores, got {scores.shape[0]}.")

    return scores


def _solution(graph, labels, ops, scheme):
    report = check_flow_constraints(graph, labels)
    return BinarySolution(labels = labels, feasible = report.violated == 0, report = report, ops = ops, scheme = scheme)




def threshold(scores, graph, t = 0.5):
    ''' label = 1 iff score >= t, feasible or not.  '''
    if not 0 < t < 1:
        raise ValueError(f"Threshold must be in (0, 1), got {t}.")
    scores = _as_scores(scores, graph)
    labels = (scores >= t).astype(np.int8)

    return _solution(graph, labels, ops = graph.num_edges, scheme = 'threshold')




def greedy_round(scores, graph, t = 0.5):
    ''' Threshold, then keep only the best-scored active edge of every
        violated constraint.

        Nodes are scanned in ascending id, the incoming constraint before the
        outgoing one.  Ties go to the lower edge id.  ``ops`` counts the
        adjacency entries inspected, at most 2|E| <= max_degree * |V|.
    '''
    scores = _as_scores(scores, graph)
    labels = threshold(scores, graph, t).labels.copy()

    ops = 0
    for i in range(graph.num_nodes):
        for edge_ids in (graph.in_edges[i], graph.out_edges[i]):
            ops += len(edge_ids)
            active = edge_ids[labels[edge_ids] == 1]
            if len(active) <= 1: continue

            # np.argmax returns the first maximum, edge ids are ascending...
            keep = active[np.argmax(scores[active])]
            labels[active] = 0
            labels[keep]   = 1

    solution = _solution(graph, labels, ops = ops, scheme = 'greedy')
    logger.debug(f"MSG - greedy rounding, {solution.report.violated} violations left, {ops} ops")

    return solution




def violated_subgraph(scores, graph, t = 0.5):
    ''' Active edges of every violated constraint after thresholding.

        Returns (edge_ids, subgraph, sub_scores); the subgraph keeps all nodes
        and only those edges, edge_ids maps its edges back to the graph.
    '''
    scores   = _as_scores(scores, graph)
    solution = threshold(scores, graph, t)
    labels   = solution.labels

    picked = set()
    for i, kind in solution.report.violated_nodes:
        edge_ids = graph.in_edges[i] if kind == 'in' else graph.out_edges[i]
        picked.update(edge_ids[labels[edge_ids] == 1].tolist())

    edge_ids = np.array(sorted(picked), dtype = np.int64)

    return edge_ids, graph.subgraph(edge_ids), scores[edge_ids]




def _matching_cost(cost, rows, cols):
    ''' Optimal total of the assignment restricted to the given rows and cols.  '''
    sub = cost[np.ix_(rows, cols)]
    if sub.size == 0: return 0.0
    r, c = linear_sum_assignment(sub)

    return float(sub[r, c].sum())




def exact_round(scores, graph, t = 0.5, tie_tol = 1e-12):
    ''' Minimize sum_e (1 - 2 y_hat_e) y_e subject to in/out degree <= 1.

        Edges outside the violated subgraph keep their thresholded label.  On
        the subgraph the problem is a min-cost bipartite matching between the
        outgoing copies and the incoming copies of its nodes; only edges with
        negative cost (score above 0.5) are candidates.

        Among optimal matchings the one with the lowest edge ids wins: the
        candidates are visited in ascending edge id and each is kept iff an
        optimum containing it and the edges kept so far still exists.
        Objectives within tie_tol count as equal.
    '''
    scores = _as_scores(scores, graph)
    labels = threshold(scores, graph, t).labels.copy()

    edge_ids, sub, sub_scores = violated_subgraph(scores, graph, t)
    if len(edge_ids):
        labels[edge_ids] = 0

        src, dst = sub.edges[:, 0], sub.edges[:, 1]
        rows, row_of = np.unique(src, return_inverse = True)
        cols, col_of = np.unique(dst, return_inverse = True)

        # Zero entries stand for "leave unmatched"...
        cost = np.zeros((len(rows), len(cols)), dtype = np.float64)
        is_candidate = sub_scores > 0.5
        cost[row_of[is_candidate], col_of[is_candidate]] = 1 - 2 * sub_scores[is_candidate]

        free_rows = np.ones(len(rows), dtype = bool)
        free_cols = np.ones(len(cols), dtype = bool)
        best = _matching_cost(cost, np.flatnonzero(free_rows), np.flatnonzero(free_cols))
        kept = 0.0

        for e in np.flatnonzero(is_candidate):
            r, c = row_of[e], col_of[e]
            if not (free_rows[r] and free_cols[c]): continue

            free_rows[r] = free_cols[c] = False
            value = kept + cost[r, c] + _matching_cost(cost, np.flatnonzero(free_rows), np.flatnonzero(free_cols))
            if value <= best + tie_tol:
                kept += cost[r, c]
                labels[edge_ids[e]] = 1
            else:
                free_rows[r] = free_cols[c] = True
                cost[r, c] = 0.0

    solution = _solution(graph, labels, ops = len(edge_ids), scheme = 'exact')
    logger.debug(f"MSG - exact rounding over {len(edge_ids)} of {graph.num_edges} edges")

    return solution




def round_scores(scheme, scores, graph, t = 0.5):
    if scheme == 'threshold': return threshold(scores, graph, t)
    if scheme == 'greedy'   : return greedy_round(scores, graph, t)
    if scheme == 'exact'    : return exact_round(scores, graph, t)
    raise ValueError(f"Rounding scheme must be one of {SCHEMES}, got {scheme}.")


def rounding_objective(scores, labels):
    ''' Linearized cost sum_e (1 - 2 y_hat_e) y_e.  '''
    scores = np.asarray(scores, dtype = np.float64)
    labels = np.asarray(labels, dtype = np.float64)

    return float(np.sum((1 - 2 * scores) * labels))




def extract_trajectories(graph, solution):
    ''' Maximal chains of active edges, singletons included.

        Chains start at nodes without an active incoming edge and are
        returned in order of their first detection (frame, node id).
    '''
    if not solution.feasible:
        raise ValueError("round first")

    labels = np.asarray(solution.labels)
    succ   = -np.ones(graph.num_nodes, dtype = np.int64)
    has_in = np.zeros(graph.num_nodes, dtype = bool)
    for e in np.flatnonzero(labels == 1):
        i, j = graph.edges[e]
        succ[i]   = j
        has_in[j] = True

    starts = sorted(np.flatnonzero(~has_in).tolist(), key = lambda i: (graph.nodes[i].frame, i))

    trajectories = []
    for i in starts:
        nodes = [i]
        while succ[nodes[-1]] >= 0:
            nodes.append(int(succ[nodes[-1]]))
        trajectories.append(Trajectory(detections = [ graph.nodes[n] for n in nodes ], nodes = nodes))

    return trajectories


def labels_from_trajectories(graph, trajectories):
    ''' Activate the graph edge between consecutive nodes of each trajectory.  '''
    labels = np.zeros(graph.num_edges, dtype = np.int8)
    for traj in trajectories:
        for a, b in zip(traj.nodes[:-1], traj.nodes[1:]):
            e = graph.edge_index(a, b)
            if e < 0:
                raise ValueError(f"Nodes {a} and {b} are consecutive in a trajectory but not linked in the graph.")
            labels[e] = 1

    return labels




def dump_violated_subgraph(path, scores, graph, solution, t = 0.5):
    ''' Write "src dst score label" lines for the violated subgraph.  '''
    edge_ids, _, sub_scores = violated_subgraph(scores, graph, t)
    with open(path, 'w') as fh:
        fh.write(f"# violated subgraph, {len(edge_ids)} of {graph.num_edges} edges, scheme {solution.scheme}\n")
        fh.write("# src dst score label\n")
        for e, score in zip(edge_ids, sub_scores):
            src, dst = graph.edges[e]
            fh.write(f"{src} {dst} {score:.6f} {int(solution.labels[e])}\n")

    logger.info(f"SAVE - {path}")




def _layers(num_nodes, pairs):
    ''' Longest-path depth of every node, ValueError on a directed cycle.  '''
    succ  = [ [] for _ in range(num_nodes) ]
    indeg = np.zeros(num_nodes, dtype = np.int64)
    for i, j in pairs:
        succ[i].append(j)
        indeg[j] += 1

    depth = np.zeros(num_nodes, dtype = np.int64)
    ready = [ i for i in range(num_nodes) if indeg[i] == 0 ]
    seen  = 0
    while ready:
        i = ready.pop()
        seen += 1
        for j in succ[i]:
            depth[j] = max(depth[j], depth[i] + 1)
            indeg[j] -= 1
            if indeg[j] == 0: ready.append(j)

    if seen < num_nodes:
        raise ValueError("Scored edges contain a directed cycle.")

    return depth


def read_scored_edges(path):
    ''' Read "src dst score" lines into (graph, scores, pairs).

        Nodes are implicit, 0..max id.  Each node's frame is its depth in the
        edge DAG so every edge keeps its direction.  ``pairs`` and the
        returned scores follow the file order; map them onto graph edges with
        ``graph.edge_index``.
    '''
    if not os.path.exists(path):
        raise FileNotFoundError(path)

    pairs, scores = [], []
    with open(path, 'r') as fh:
        for line_id, line in enumerate(fh, start = 1):
            line = line.split('#', 1)[0].strip()
            if not line: continue
            fields = line.replace(',', ' ').split()
            if len(fields) != 3:
                raise ValueError(f"{path}:{line_id}: expected 'src dst score', got {line!r}")
            try:
                src, dst, score = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError as err:
                raise ValueError(f"{path}:{line_id}: {err}") from err
            if src < 0 or dst < 0 or src == dst:
                raise ValueError(f"{path}:{line_id}: invalid edge ({src}, {dst})")
            if not 0 <= score <= 1:
                raise ValueError(f"{path}:{line_id}: score {score} outside [0, 1]")
            pairs.append((src, dst))
            scores.append(score)

    num_nodes = 1 + max((max(p) for p in pairs), default = -1)
    depth     = _layers(num_nodes, pairs)
    nodes     = [ Detection(id = i, frame = int(depth[i]), box = (0.0, 0.0, 1.0, 1.0)) for i in range(num_nodes) ]
    graph     = TrackingGraph.from_edges(nodes, pairs)

    # Scores in graph edge order...
    graph_scores = np.zeros(graph.num_edges, dtype = np.float64)
    for (src, dst), score in zip(pairs, scores):
        graph_scores[graph.edge_index(src, dst)] = score

    return graph, graph_scores, pairs


def write_rounded_edges(path, graph, scores, solution, pairs = None):
    ''' Write "src dst score label" lines, in ``pairs`` order when given.  '''
    pairs = [ tuple(e) for e in graph.edges ] if pairs is None else pairs
    with open(path, 'w') as fh:
        fh.write(f"# scheme {solution.scheme}, feasible {int(solution.feasible)}, "
                 f"constraint satisfaction {solution.report.satisfaction_ratio:.6f}\n")
        fh.write("# src dst score label\n")
        for src, dst in pairs:
            e = graph.edge_index(src, dst)
            fh.write(f"{src} {dst} {scores[e]:.6f} {int(solution.labels[e])}\n")

    logger.info(f"SAVE - {path}")
