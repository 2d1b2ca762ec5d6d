import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpntrack.graph import check_flow_constraints, constraint_matrix
from mpntrack.rounding import ( dump_violated_subgraph, exact_round, extract_trajectories, greedy_round,
                                labels_from_trajectories, read_scored_edges, round_scores, rounding_objective,
                                threshold, violated_subgraph, write_rounded_edges, )

from conftest import graph_from


def scores_for(graph, by_pair):
    scores = np.zeros(graph.num_edges)
    for (i, j), s in by_pair.items():
        scores[graph.edge_index(i, j)] = s
    return scores


def active_pairs(graph, labels):
    return sorted( tuple(int(v) for v in graph.edges[e]) for e in np.flatnonzero(labels) )


@st.composite
def scored_graphs(draw, max_nodes = 7, max_edges = 10):
    num_nodes = draw(st.integers(2, max_nodes))
    frames    = draw(st.lists(st.integers(0, 3), min_size = num_nodes, max_size = num_nodes))
    candidates = [ (i, j) for i in range(num_nodes) for j in range(num_nodes) if frames[i] < frames[j] ]
    pairs  = draw(st.lists(st.sampled_from(candidates), unique = True, max_size = max_edges)) if candidates else []
    graph  = graph_from(frames, pairs)
    scores = draw(st.lists(st.floats(0.0, 1.0), min_size = graph.num_edges, max_size = graph.num_edges))
    return graph, np.array(scores, dtype = np.float64)


def feasible_solutions(graph, scores):
    ''' Every feasible binary vector with its objective.  '''
    A = constraint_matrix(graph).toarray()
    Y = (np.arange(2 ** graph.num_edges)[:, None] >> np.arange(graph.num_edges)) & 1
    feasible = np.all(Y @ A.T <= 1, axis = 1)
    return Y[feasible], Y[feasible] @ (1 - 2 * scores)


def brute_force_optimum(graph, scores):
    if graph.num_edges == 0: return 0.0
    _, cost = feasible_solutions(graph, scores)
    return cost.min()


def brute_force_lowest_ids(graph, scores, tol = 1e-9):
    ''' Active edge ids of the optimum that prefers lower edge ids.  '''
    if graph.num_edges == 0: return ()
    Y, cost = feasible_solutions(graph, scores)
    optimal = Y[cost <= cost.min() + tol]
    return min( tuple(np.flatnonzero(y).tolist()) for y in optimal )


def seeded_graph(rng, max_nodes = 10, max_edges = 16):
    num_nodes  = int(rng.integers(2, max_nodes))
    frames     = rng.integers(0, 4, size = num_nodes)
    candidates = [ (i, j) for i in range(num_nodes) for j in range(num_nodes) if frames[i] < frames[j] ]
    num_pairs  = int(rng.integers(0, min(max_edges, len(candidates)) + 1))
    picked     = rng.choice(len(candidates), size = num_pairs, replace = False) if num_pairs else []
    return graph_from(frames.tolist(), [ candidates[k] for k in picked ])




def test_threshold_is_inclusive():
    graph = graph_from([0, 1, 2], [(0, 1), (1, 2)])
    solution = threshold(scores_for(graph, { (0, 1) : 0.5, (1, 2) : 0.49 }), graph)

    assert solution.labels.tolist() == [1, 0]
    assert solution.feasible


def test_threshold_errors():
    graph = graph_from([0, 1], [(0, 1)])
    with pytest.raises(ValueError):
        threshold([0.5], graph, t = 1.0)
    with pytest.raises(ValueError):
        threshold([0.5, 0.5], graph)
    with pytest.raises(ValueError):
        round_scores('lp', [0.5], graph)




def test_greedy_keeps_best_outgoing_edge():
    graph  = graph_from([0, 1, 1], [(0, 1), (0, 2)])
    scores = scores_for(graph, { (0, 1) : 0.8, (0, 2) : 0.9 })
    solution = greedy_round(scores, graph)

    assert active_pairs(graph, solution.labels) == [(0, 2)]
    assert solution.feasible


def test_greedy_tie_goes_to_lower_edge_id():
    graph  = graph_from([0, 1, 1], [(0, 1), (0, 2)])
    solution = greedy_round([0.7, 0.7], graph)

    assert solution.labels.tolist() == [1, 0]


def test_greedy_leaves_feasible_thresholding_alone():
    graph  = graph_from([0, 1, 2], [(0, 1), (1, 2), (0, 2)])
    scores = scores_for(graph, { (0, 1) : 0.9, (1, 2) : 0.8, (0, 2) : 0.1 })

    assert np.array_equal(greedy_round(scores, graph).labels, threshold(scores, graph).labels)


def test_greedy_can_be_beaten_by_exact():
    # a=0, b=1 in frame 0; c=2, d=3 in frame 1...
    graph  = graph_from([0, 0, 1, 1], [(0, 2), (0, 3), (1, 2)])
    scores = scores_for(graph, { (0, 2) : 0.9, (0, 3) : 0.8, (1, 2) : 0.85 })

    greedy = greedy_round(scores, graph)
    exact  = exact_round(scores, graph)

    assert active_pairs(graph, greedy.labels) == [(0, 2)]
    assert active_pairs(graph, exact.labels)  == [(0, 3), (1, 2)]
    assert rounding_objective(scores, greedy.labels) == pytest.approx(-0.8)
    assert rounding_objective(scores, exact.labels)  == pytest.approx(-1.3)


@given(scored_graphs())
@settings(max_examples = 60, deadline = None)
def test_rounding_is_feasible_and_exact_is_optimal(case):
    graph, scores = case
    greedy = greedy_round(scores, graph)
    exact  = exact_round(scores, graph)

    assert greedy.feasible and exact.feasible
    assert greedy.ops == 2 * graph.num_edges
    assert rounding_objective(scores, exact.labels) <= rounding_objective(scores, greedy.labels) + 1e-12
    assert rounding_objective(scores, exact.labels) == pytest.approx(brute_force_optimum(graph, scores), abs = 1e-12)

    # Only edges active after thresholding may stay active...
    above = threshold(scores, graph).labels
    assert np.all(greedy.labels <= above) and np.all(exact.labels <= above)


@given(scored_graphs(max_nodes = 12, max_edges = 30))
@settings(max_examples = 1000, deadline = None)
def test_rounding_feasibility_fuzz(case):
    graph, scores = case
    greedy = greedy_round(scores, graph)
    exact  = exact_round(scores, graph)

    assert greedy.report.satisfaction_ratio == 1.0 and exact.report.satisfaction_ratio == 1.0
    assert greedy.ops <= graph.max_degree() * graph.num_nodes


def test_exact_matches_brute_force_on_seeded_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        graph  = seeded_graph(rng)
        scores = rng.random(graph.num_edges)

        exact = exact_round(scores, graph)
        assert exact.feasible
        assert rounding_objective(scores, exact.labels) == pytest.approx(brute_force_optimum(graph, scores), abs = 1e-12)


def test_exact_tie_goes_to_lower_edge_ids():
    graph = graph_from([0, 0, 1, 1], [(0, 2), (0, 3), (1, 2), (1, 3)])
    exact = exact_round(np.full(graph.num_edges, 0.8), graph)

    assert active_pairs(graph, exact.labels) == [(0, 2), (1, 3)]


def test_exact_ties_match_brute_force_lowest_ids():
    rng = np.random.default_rng(11)
    for _ in range(300):
        graph  = seeded_graph(rng, max_edges = 12)
        scores = np.full(graph.num_edges, 0.8)

        exact = exact_round(scores, graph)
        assert tuple(np.flatnonzero(exact.labels).tolist()) == brute_force_lowest_ids(graph, scores)


@given(scored_graphs())
@settings(max_examples = 40, deadline = None)
def test_trajectories_invert_labels(case):
    graph, scores = case
    solution = greedy_round(scores, graph)
    trajectories = extract_trajectories(graph, solution)

    assert np.array_equal(labels_from_trajectories(graph, trajectories), solution.labels)
    assert sorted(n for traj in trajectories for n in traj.nodes) == list(range(graph.num_nodes))




def test_violated_subgraph():
    graph  = graph_from([0, 1, 1, 2], [(0, 1), (0, 2), (1, 3)])
    scores = scores_for(graph, { (0, 1) : 0.9, (0, 2) : 0.8, (1, 3) : 0.9 })
    edge_ids, sub, sub_scores = violated_subgraph(scores, graph)

    assert edge_ids.tolist() == [ graph.edge_index(0, 1), graph.edge_index(0, 2) ]
    assert sub.num_nodes == 4 and sub.num_edges == 2
    assert sub_scores.tolist() == [0.9, 0.8]


def test_extract_trajectories_order_and_singletons(chain_graph):
    labels = np.zeros(chain_graph.num_edges, dtype = np.int8)
    labels[chain_graph.edge_index(0, 2)] = 1
    trajectories = extract_trajectories(chain_graph, threshold(labels.astype(float), chain_graph))

    assert [ traj.nodes for traj in trajectories ] == [ [0, 2], [1] ]


def test_extract_trajectories_requires_feasible_solution():
    graph = graph_from([0, 1, 1], [(0, 1), (0, 2)])
    with pytest.raises(ValueError, match = 'round first'):
        extract_trajectories(graph, threshold([0.9, 0.9], graph))


def test_labels_from_trajectories_rejects_missing_edges():
    from mpntrack.graph import Trajectory
    graph = graph_from([0, 1, 2], [(0, 1)])
    with pytest.raises(ValueError):
        labels_from_trajectories(graph, [ Trajectory(detections = [], nodes = [0, 2]) ])




def test_read_scored_edges(tmp_path):
    path = tmp_path / 'scores.txt'
    path.write_text("# src dst score\n2 3 0.4\n0 1, 0.9\n\n1 2 0.7  # trailing comment\n0 2 0.6\n")
    graph, scores, pairs = read_scored_edges(str(path))

    assert pairs == [(2, 3), (0, 1), (1, 2), (0, 2)]
    assert [ det.frame for det in graph.nodes ] == [0, 1, 2, 3]
    assert scores[graph.edge_index(0, 1)] == 0.9
    assert scores[graph.edge_index(2, 3)] == 0.4


@pytest.mark.parametrize('content, line', [ ("0 1 0.5\n1 2 1.5\n", 2),
                                            ("0 1 0.5\n\n1 1 0.5\n", 3),
                                            ("0 1\n", 1),
                                            ("0 x 0.5\n", 1), ])
def test_read_scored_edges_reports_line(tmp_path, content, line):
    path = tmp_path / 'scores.txt'
    path.write_text(content)
    with pytest.raises(ValueError, match = f":{line}:"):
        read_scored_edges(str(path))


def test_read_scored_edges_rejects_cycles_and_missing_files(tmp_path):
    path = tmp_path / 'scores.txt'
    path.write_text("0 1 0.5\n1 2 0.5\n2 0 0.5\n")
    with pytest.raises(ValueError, match = 'cycle'):
        read_scored_edges(str(path))
    with pytest.raises(FileNotFoundError):
        read_scored_edges(str(tmp_path / 'absent.txt'))


def test_write_rounded_edges_keeps_file_order(tmp_path):
    src = tmp_path / 'scores.txt'
    src.write_text("0 2 0.8\n0 1 0.9\n")
    graph, scores, pairs = read_scored_edges(str(src))
    solution = greedy_round(scores, graph)

    out = tmp_path / 'rounded.txt'
    write_rounded_edges(str(out), graph, scores, solution, pairs = pairs)
    lines = [ l for l in out.read_text().splitlines() if not l.startswith('#') ]

    assert lines == [ "0 2 0.800000 0", "0 1 0.900000 1" ]


def test_dump_violated_subgraph(tmp_path):
    graph  = graph_from([0, 1, 1], [(0, 1), (0, 2)])
    scores = np.array([0.9, 0.8])
    path   = tmp_path / 'violated.txt'
    dump_violated_subgraph(str(path), scores, graph, greedy_round(scores, graph))
    lines  = [ l for l in path.read_text().splitlines() if not l.startswith('#') ]

    assert lines == [ "0 1 0.900000 1", "0 2 0.800000 0" ]
