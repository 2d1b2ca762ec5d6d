import numpy as np
import pytest
import torch

from mpntrack.encoders.features import encode_initial
from mpntrack.engine import Tape, mlp_forward
from mpntrack.graph import TrackingGraph
from mpntrack.model import ( ConfigMPNModel, EmbeddingState, MPNModel, build_params, classify_edges,
                             edge_update, node_update_time_aware, node_update_vanilla, propagate, )

from conftest import graph_from, make_det


def mlp(params, name, x):
    return mlp_forward(params.specs[name], params[name], x)


def initial_state(graph, params):
    h_node, h_edge = encode_initial(graph, None, params, fps = 6.0)
    return EmbeddingState(nodes = [h_node], edges = [h_edge])


def random_graph(frames, pairs, seed = 0, dim = 4):
    rng   = np.random.default_rng(seed)
    nodes = [ make_det(i, t, x = 30.0 * i + rng.normal(), y = rng.normal(), app = rng.standard_normal(dim))
              for i, t in enumerate(frames) ]
    return TrackingGraph.from_edges(nodes, pairs)


def params_for(mode = 'time_aware', L = 2, shared = True):
    return build_params(ConfigMPNModel(mode = mode, L = L, appearance_dim = 4, shared_weights = shared))




def test_network_input_sizes():
    params = params_for('time_aware')
    assert params.specs['edge_update'].layer_sizes == (160, 80, 16)
    assert params.specs['node_past'].layer_sizes   == (80, 56, 32)
    assert params.specs['node_fut'].layer_sizes    == (80, 56, 32)
    assert params.specs['node_update'].layer_sizes == (64, 32)
    assert params.specs['classifier'].layer_sizes  == (16, 8, 1)
    assert params.specs['edge_encoder'].layer_sizes == (6, 18, 18, 16)

    assert params_for('vanilla').specs['node_vanilla'].layer_sizes == (80, 56, 32)


def test_unshared_weights_have_one_network_per_step():
    model = MPNModel(ConfigMPNModel(L = 3, appearance_dim = 4, shared_weights = False))
    names = set(model.required_networks())

    assert { 'edge_update_1', 'edge_update_3', 'node_past_2', 'node_update_3' } <= names
    assert 'edge_update' not in names
    model.check_networks()




def test_edge_update_single_edge_oracle():
    graph  = random_graph([0, 1], [(0, 1)])
    params = params_for()
    state  = initial_state(graph, params)
    h_node, h_edge = state.nodes[0], state.edges[0]

    x = torch.cat([ h_node[0], h_node[1], h_edge[0], h_node[0], h_node[1], h_edge[0] ]).reshape(1, -1)
    assert x.shape[1] == 160
    assert torch.allclose(edge_update(state, graph, params, 1), mlp(params, 'edge_update', x), atol = 1e-12, rtol = 0)


def test_zero_edge_network_gives_zero_edges():
    graph  = random_graph([0, 1, 2], [(0, 1), (1, 2), (0, 2)])
    params = params_for()
    with torch.no_grad():
        for p in params['edge_update'].parameters(): p.zero_()

    assert torch.all(edge_update(initial_state(graph, params), graph, params, 1) == 0)


def test_edge_update_step_out_of_range():
    graph  = random_graph([0, 1], [(0, 1)])
    params = params_for()
    with pytest.raises(ValueError):
        edge_update(initial_state(graph, params), graph, params, 3)




def test_vanilla_sums_messages_of_all_neighbours():
    # Node 2 has past neighbours 0, 1 and future neighbour 3...
    graph  = random_graph([0, 0, 1, 2], [(0, 2), (1, 2), (2, 3)])
    params = params_for('vanilla')
    state  = initial_state(graph, params)
    state.edges.append(edge_update(state, graph, params, 1))
    out    = node_update_vanilla(state, graph, params, 1)

    h, h0, he = state.nodes[0], state.nodes[0], state.edges[1]
    expected = sum( mlp(params, 'node_vanilla', torch.cat([ h[2], he[e], h0[2] ]).reshape(1, -1))[0]
                    for e in range(3) )
    assert torch.allclose(out[2], expected, atol = 1e-12, rtol = 0)

    # Node 3 has a single neighbour...
    single = mlp(params, 'node_vanilla', torch.cat([ h[3], he[graph.edge_index(2, 3)], h0[3] ]).reshape(1, -1))[0]
    assert torch.allclose(out[3], single, atol = 1e-12, rtol = 0)


def test_isolated_node_gets_zero_vanilla_sum():
    graph  = random_graph([0, 1, 2], [(0, 1)])
    params = params_for('vanilla')
    state  = initial_state(graph, params)
    state.edges.append(edge_update(state, graph, params, 1))

    assert torch.all(node_update_vanilla(state, graph, params, 1)[2] == 0)


def test_time_aware_two_sums_then_merge():
    # Node 2 sees past {0, 1} and future {3, 4}...
    graph  = random_graph([0, 0, 1, 2, 2], [(0, 2), (1, 2), (2, 3), (2, 4)])
    params = params_for('time_aware')
    state  = initial_state(graph, params)
    state.edges.append(edge_update(state, graph, params, 1))
    out    = node_update_time_aware(state, graph, params, 1)

    h, h0, he = state.nodes[0], state.nodes[0], state.edges[1]
    msg = lambda name, e: mlp(params, name, torch.cat([ h[2], he[e], h0[2] ]).reshape(1, -1))[0]
    h_past = msg('node_past', graph.edge_index(0, 2)) + msg('node_past', graph.edge_index(1, 2))
    h_fut  = msg('node_fut' , graph.edge_index(2, 3)) + msg('node_fut' , graph.edge_index(2, 4))
    expected = mlp(params, 'node_update', torch.cat([ h_past, h_fut ]).reshape(1, -1))[0]

    assert torch.allclose(out[2], expected, atol = 1e-12, rtol = 0)

    # A first-frame node has an empty past...
    h_fut_0  = mlp(params, 'node_fut', torch.cat([ h[0], he[graph.edge_index(0, 2)], h0[0] ]).reshape(1, -1))[0]
    expected = mlp(params, 'node_update', torch.cat([ torch.zeros(32, dtype = torch.float64), h_fut_0 ]).reshape(1, -1))[0]
    assert torch.allclose(out[0], expected, atol = 1e-12, rtol = 0)


def test_isolated_node_time_aware_merges_zero_sums():
    graph  = random_graph([0, 1, 2], [(0, 1)])
    params = params_for('time_aware')
    state  = initial_state(graph, params)
    state.edges.append(edge_update(state, graph, params, 1))

    expected = mlp(params, 'node_update', torch.zeros((1, 64), dtype = torch.float64))[0]
    assert torch.equal(node_update_time_aware(state, graph, params, 1)[2], expected)


@pytest.mark.parametrize('mode', ['vanilla', 'time_aware'])
def test_node_update_is_invariant_to_relabeling(mode):
    frames = [0, 0, 1, 2, 2]
    pairs  = [(0, 2), (1, 2), (2, 3), (2, 4), (0, 3)]
    graph  = random_graph(frames, pairs, seed = 4)
    perm   = [3, 1, 4, 0, 2]            # new position of every old node
    nodes  = [ None ] * 5
    for old, new in enumerate(perm): nodes[new] = graph.nodes[old]
    relabeled = TrackingGraph.from_edges(nodes, [ (perm[i], perm[j]) for i, j in pairs ])

    params = params_for(mode)
    out_a  = propagate(graph, initial_state(graph, params), params, 2, mode = mode).nodes[-1]
    out_b  = propagate(relabeled, initial_state(relabeled, params), params, 2, mode = mode).nodes[-1]

    assert torch.allclose(out_a, out_b[perm], atol = 1e-10, rtol = 0)




def test_propagate_zero_steps_is_identity():
    graph  = random_graph([0, 1, 2], [(0, 1), (1, 2)])
    params = params_for()
    state  = initial_state(graph, params)
    out    = propagate(graph, state, params, 0)

    assert out.num_steps == 0
    assert torch.equal(out.nodes[0], state.nodes[0]) and torch.equal(out.edges[0], state.edges[0])


@pytest.mark.parametrize('mode', ['vanilla', 'time_aware'])
def test_receptive_field_is_L(mode):
    frames = list(range(6))
    pairs  = [ (i, i + 1) for i in range(5) ]
    graph  = random_graph(frames, pairs, seed = 1)
    params = params_for(mode)

    moved = list(graph.nodes)
    moved[3] = moved[3].replace(appearance = moved[3].appearance + 1.0, box = (500.0, 40.0, 10.0, 20.0))
    graph_moved = TrackingGraph.from_edges(moved, pairs)

    out   = propagate(graph, initial_state(graph, params), params, 2, mode = mode).nodes[2]
    out_m = propagate(graph_moved, initial_state(graph_moved, params), params, 2, mode = mode).nodes[2]

    assert torch.equal(out[0], out_m[0])
    assert not torch.equal(out[1], out_m[1])


def test_propagate_is_deterministic(tiny_model, small_sequence):
    from mpntrack.graph import build_graph
    graph = build_graph(small_sequence.detections[:40], k = 10)

    a = tiny_model.score(graph, fps = 30.0)
    b = tiny_model.score(graph, fps = 30.0)
    assert np.array_equal(a, b)


def test_propagate_cost_is_linear_in_edges_and_steps():
    graph = random_graph([0, 0, 1, 1, 2], [(0, 2), (1, 2), (0, 3), (1, 3), (2, 4), (3, 4)])
    V, E  = graph.num_nodes, graph.num_edges
    for L in (1, 2, 4):
        model = MPNModel(ConfigMPNModel(L = L, appearance_dim = 4))
        tape  = Tape()
        model(graph, fps = 6.0, tape = tape)

        assert tape.counts['mlp'] == V + 2 * E + L * (3 * E + V)
        assert tape.counts['aggregate'] == L * 2 * E




def test_zero_classifier_gives_one_half():
    graph  = random_graph([0, 1, 2], [(0, 1), (1, 2), (0, 2)])
    params = params_for()
    with torch.no_grad():
        for p in params['classifier'].parameters(): p.zero_()
    state  = propagate(graph, initial_state(graph, params), params, 2)
    scores = classify_edges(state, params, 1, 2)

    assert sorted(scores.scores) == [1, 2]
    assert torch.all(scores.final == 0.5)


def test_classifier_matches_direct_mlp_and_stays_inside_unit_interval():
    graph  = random_graph([0, 1, 2], [(0, 1), (1, 2), (0, 2)])
    params = params_for()
    state  = propagate(graph, initial_state(graph, params), params, 2)
    scores = classify_edges(state, params, 2, 2)

    direct = mlp(params, 'classifier', state.edges[2][1:2])[0, 0]
    assert torch.allclose(scores.final[1], direct, atol = 1e-12, rtol = 0)
    assert torch.all((scores.final > 0) & (scores.final < 1))


def test_classify_edges_step_errors():
    graph  = random_graph([0, 1], [(0, 1)])
    params = params_for()
    state  = propagate(graph, initial_state(graph, params), params, 2)
    with pytest.raises(ValueError):
        classify_edges(state, params, 3, 2)
    with pytest.raises(ValueError):
        classify_edges(state, params, 0, 2)




def test_model_checkpoint_round_trip(tmp_path, tiny_model, chain_graph):
    graph = TrackingGraph.from_edges([ n.replace(appearance = np.ones(8)) for n in chain_graph.nodes ], chain_graph.edges)
    path  = tmp_path / 'model.chkpt'
    tiny_model.save_checkpoint(path, note = 'test')
    loaded = MPNModel.load_checkpoint(path)

    assert loaded.config.to_dict() == tiny_model.config.to_dict()
    assert loaded.params.metadata['note'] == 'test'
    assert np.array_equal(loaded.score(graph), tiny_model.score(graph))


def test_missing_networks_are_named(tiny_model):
    del tiny_model.params.networks['node_fut']
    with pytest.raises(KeyError, match = 'node_fut'):
        tiny_model.check_networks()


def test_config_validation():
    with pytest.raises(ValueError):
        ConfigMPNModel(mode = 'attention')
    with pytest.raises(ValueError):
        ConfigMPNModel(L = -1)




@pytest.mark.parametrize('mode', ['vanilla', 'time_aware'])
def test_full_model_gradients_match_finite_differences(mode):
    from mpntrack.trainer import check_gradients
    report = check_gradients(mode = mode, L = 2, l0 = 1, seed = 0, max_entries = 300)

    assert report.num_checked == 300
    assert report.passed, report


def test_gradcheck_clip_layout():
    from mpntrack.trainer import gradcheck_clip
    clip = gradcheck_clip()

    assert clip.graph.num_nodes == 6 and clip.graph.num_edges == 8
    assert int(clip.labels.sum()) == 4


@pytest.mark.parametrize('mode', ['vanilla', 'time_aware'])
def test_time_features_ignore_box_geometry(mode):
    frames = [0, 0, 1, 1, 2]
    pairs  = [(0, 2), (0, 3), (1, 2), (1, 3), (2, 4), (3, 4), (0, 4)]
    graph  = random_graph(frames, pairs, seed = 3)

    rng   = np.random.default_rng(4)
    moved = [ make_det(det.id, det.frame, x = det.box[0] + rng.normal(0, 25), y = det.box[1] + rng.normal(0, 25),
                       w = det.box[2] * rng.uniform(0.5, 2.0), h = det.box[3] * rng.uniform(0.5, 2.0),
                       app = det.appearance)
              for det in graph.nodes ]
    moved_graph = TrackingGraph.from_edges(moved, pairs)

    model = MPNModel(ConfigMPNModel(mode = mode, L = 2, appearance_dim = 4, feature_set = 'time'))
    with torch.no_grad():
        before = model(graph).final
        after  = model(moved_graph).final

    assert torch.equal(before, after)
    assert np.array_equal(model.score(graph), model.score(moved_graph))

    # The full feature set does see the boxes...
    full = MPNModel(ConfigMPNModel(mode = mode, L = 2, appearance_dim = 4), params = model.params)
    with torch.no_grad():
        assert not torch.equal(full(graph).final, full(moved_graph).final)
