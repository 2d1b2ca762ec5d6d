#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Message passing network over a tracking graph.

    One message passing step l first refreshes every edge embedding from its
    two endpoints (node to edge), then every node embedding from its incident
    edges (edge to node).  The time-aware variant aggregates past and future
    neighbours separately and merges both sums with a small MLP; the vanilla
    variant sums one kind of message over all neighbours.

    Sums run in ascending neighbour id for every node, so two runs with equal
    parameters and inputs agree bit for bit.
'''

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from mpntrack.engine import ModelParams, mlp_forward
from mpntrack.encoders.linear  import MlpSpec
from mpntrack.encoders.features import DIM_EDGE_FEATURE, FEATURE_MASKS, encode_initial

logger = logging.getLogger(__name__)

DIM_NODE = 32
DIM_EDGE = 16

MODES = ('time_aware', 'vanilla')

STEP_NETWORKS = {
    'time_aware' : ('edge_update', 'node_past', 'node_fut', 'node_update'),
    'vanilla'    : ('edge_update', 'node_vanilla'),
}


class ConfigMPNModel:
    mode           = 'time_aware'
    L              = 12
    appearance_dim = 32
    shared_weights = True
    feature_set    = 'time+pos+app'
    seed           = 0

    FIELDS = ('mode', 'L', 'appearance_dim', 'shared_weights', 'feature_set', 'seed')

    def __init__(self, **kwargs):
        logger.info(f"___/ Configure MPN Model \\___")

        # Set values of attributes that are not known when obj is created
        for k, v in kwargs.items():
            setattr(self, k, v)
            logger.info(f"KV - {k:16s} : {v}")

        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode}.")
        if self.L < 0:
            raise ValueError(f"L must be nonnegative, got {self.L}.")
        if self.feature_set not in FEATURE_MASKS:
            raise ValueError(f"Unknown feature set {self.feature_set}.")


    def to_dict(self):
        return { k : getattr(self, k) for k in self.FIELDS }




def network_name(name, l, shared_weights = True):
    ''' Name of a per-step network; unshared weights get one copy per step.  '''
    return name if shared_weights else f"{name}_{l}"


def build_params(config):
    ''' Fresh networks for config.mode, seeded by config.seed.  '''
    torch.manual_seed(config.seed)

    params = ModelParams()
    params.add('node_encoder', MlpSpec((config.appearance_dim, 128, DIM_NODE)))
    params.add('edge_encoder', MlpSpec((DIM_EDGE_FEATURE, 18, 18, DIM_EDGE)))

    # [h_i, h_j, h_e] now and at step 0...
    dim_edge_in = 2 * (2 * DIM_NODE + DIM_EDGE)
    # [h_i, h_e, h_i^0]...
    dim_msg_in  = 2 * DIM_NODE + DIM_EDGE

    steps = [0] if config.shared_weights else range(1, config.L + 1)
    for l in steps:
        name = lambda n: network_name(n, l, config.shared_weights)
        params.add(name('edge_update'), MlpSpec((dim_edge_in, 80, DIM_EDGE)))
        if config.mode == 'time_aware':
            params.add(name('node_past'  ), MlpSpec((dim_msg_in, 56, DIM_NODE)))
            params.add(name('node_fut'   ), MlpSpec((dim_msg_in, 56, DIM_NODE)))
            params.add(name('node_update'), MlpSpec((2 * DIM_NODE, DIM_NODE)))
        else:
            params.add(name('node_vanilla'), MlpSpec((dim_msg_in, 56, DIM_NODE)))

    params.add('classifier', MlpSpec((DIM_EDGE, 8, 1), final_activation = 'sigmoid'))

    num_weights = sum(p.numel() for p in params.parameters())
    logger.info(f"MSG - built {config.mode} model, L {config.L}, {len(params.specs)} networks, {num_weights} parameters")

    return params




@dataclass
class EmbeddingState:
    ''' nodes[l] is |V| x 32, edges[l] is |E| x 16, for l = 0..L.  '''
    nodes : list = field(default_factory = list)
    edges : list = field(default_factory = list)

    @property
    def num_steps(self):
        return len(self.nodes) - 1


    def copy(self):
        return EmbeddingState(nodes = list(self.nodes), edges = list(self.edges))




@dataclass
class EdgeScores:
    ''' scores[l] is the |E| vector of sigmoid outputs at step l, l0 <= l <= L.  '''
    scores : dict
    l0     : int
    L      : int

    @property
    def final(self):
        return self.scores[self.L]


    def numpy(self, l = None):
        return self.scores[self.L if l is None else l].detach().numpy().copy()




def _edge_index(graph):
    edges = torch.as_tensor(graph.edges, dtype = torch.int64).reshape(-1, 2)
    return edges[:, 0], edges[:, 1]


def _aggregate(messages, target, neighbor, num_nodes, tape = None):
    ''' Sum messages per target node in ascending neighbour order.  '''
    out = torch.zeros((num_nodes, messages.shape[-1]), dtype = messages.dtype)
    if len(target) == 0: return out

    order = np.lexsort((neighbor.numpy(), target.numpy()))
    order = torch.as_tensor(order, dtype = torch.int64)
    out   = out.index_add(0, target[order], messages[order])

    if tape is not None: tape.record('aggregate', out, rows = len(target))

    return out


def _check_step(state, l, need_edge_step = False):
    if l < 1 or l > len(state.nodes):
        raise ValueError(f"Step {l} out of range, node embeddings exist for steps 0..{len(state.nodes) - 1}.")
    if need_edge_step and l >= len(state.edges):
        raise ValueError(f"Edge embeddings of step {l} are missing, run edge_update first.")




def edge_update(state, graph, params, l, shared_weights = True, tape = None):
    ''' h_e^l = N_e([h_i^{l-1}, h_j^{l-1}, h_e^{l-1}, h_i^0, h_j^0, h_e^0]), earlier node i first.  '''
    _check_step(state, l)
    name = network_name('edge_update', l, shared_weights)
    params.require([name])

    src, dst = _edge_index(graph)
    h_node, h_edge   = state.nodes[l - 1], state.edges[l - 1]
    h0_node, h0_edge = state.nodes[0], state.edges[0]

    x = torch.cat([ h_node[src], h_node[dst], h_edge, h0_node[src], h0_node[dst], h0_edge ], dim = 1)

    return mlp_forward(params.specs[name], params[name], x, tape = tape)




def node_update_vanilla(state, graph, params, l, shared_weights = True, tape = None):
    ''' h_i^l = sum over all neighbours j of N_v([h_i^{l-1}, h_(i,j)^l, h_i^0]).  '''
    _check_step(state, l, need_edge_step = True)
    name = network_name('node_vanilla', l, shared_weights)
    params.require([name])

    src, dst = _edge_index(graph)
    h_node, h0_node = state.nodes[l - 1], state.nodes[0]
    h_edge = state.edges[l]

    # Each edge sends one message to either endpoint...
    target   = torch.cat([ src, dst ])
    neighbor = torch.cat([ dst, src ])
    x = torch.cat([ h_node[target], torch.cat([ h_edge, h_edge ]), h0_node[target] ], dim = 1)
    messages = mlp_forward(params.specs[name], params[name], x, tape = tape)

    return _aggregate(messages, target, neighbor, graph.num_nodes, tape = tape)




def node_update_time_aware(state, graph, params, l, shared_weights = True, tape = None):
    ''' Separate past and future sums, merged by N_v([h_past, h_fut]).

        A node without past (future) neighbours gets a zero past (future) sum.
    '''
    _check_step(state, l, need_edge_step = True)
    name_past, name_fut, name_node = ( network_name(n, l, shared_weights)
                                       for n in ('node_past', 'node_fut', 'node_update') )
    params.require([name_past, name_fut, name_node])

    src, dst = _edge_index(graph)
    h_node, h0_node = state.nodes[l - 1], state.nodes[0]
    h_edge = state.edges[l]

    # dst sees src in its past, src sees dst in its future...
    x_past = torch.cat([ h_node[dst], h_edge, h0_node[dst] ], dim = 1)
    x_fut  = torch.cat([ h_node[src], h_edge, h0_node[src] ], dim = 1)
    m_past = mlp_forward(params.specs[name_past], params[name_past], x_past, tape = tape)
    m_fut  = mlp_forward(params.specs[name_fut ], params[name_fut ], x_fut , tape = tape)

    h_past = _aggregate(m_past, dst, src, graph.num_nodes, tape = tape)
    h_fut  = _aggregate(m_fut , src, dst, graph.num_nodes, tape = tape)

    return mlp_forward(params.specs[name_node], params[name_node], torch.cat([ h_past, h_fut ], dim = 1), tape = tape)


NODE_UPDATES = {
    'time_aware' : node_update_time_aware,
    'vanilla'    : node_update_vanilla,
}




def propagate(graph, state, params, L, mode = 'time_aware', shared_weights = True, tape = None):
    ''' Run L message passing steps, returning the state through step L.  '''
    if L < 0:
        raise ValueError(f"L must be nonnegative, got {L}.")
    if mode not in NODE_UPDATES:
        raise ValueError(f"mode must be one of {MODES}, got {mode}.")

    state       = state.copy()
    node_update = NODE_UPDATES[mode]
    for l in range(1, L + 1):
        state.edges.append(edge_update(state, graph, params, l, shared_weights = shared_weights, tape = tape))
        state.nodes.append(node_update(state, graph, params, l, shared_weights = shared_weights, tape = tape))

    return state




def classify_edges(state, params, l0, L, tape = None):
    ''' Sigmoid edge scores for every step l0..L.  '''
    if l0 > L:
        raise ValueError(f"l0 ({l0}) must not exceed L ({L}).")
    if L >= 1 and l0 < 1:
        raise ValueError(f"l0 must be at least 1 when L >= 1, got {l0}.")
    if L > state.num_steps:
        raise ValueError(f"Embeddings exist through step {state.num_steps}, asked for {L}.")
    params.require(['classifier'])

    spec, net = params.specs['classifier'], params['classifier']
    scores = { l : mlp_forward(spec, net, state.edges[l], tape = tape).reshape(-1) for l in range(l0, L + 1) }

    return EdgeScores(scores = scores, l0 = l0, L = L)




class MPNModel(nn.Module):
    ''' Encoders, L message passing steps and the edge classifier.  '''

    def __init__(self, config, params = None):
        super().__init__()
        self.config = config
        self.params = build_params(config) if params is None else params


    def forward(self, graph, provider = None, fps = 6.0, tape = None, l0 = None):
        config = self.config
        l0     = config.L if l0 is None else l0

        h_node, h_edge = encode_initial(graph, provider, self.params, fps,
                                        feature_set = config.feature_set, tape = tape)
        state = propagate(graph, EmbeddingState(nodes = [h_node], edges = [h_edge]), self.params, config.L,
                          mode = config.mode, shared_weights = config.shared_weights, tape = tape)

        return classify_edges(state, self.params, l0, config.L, tape = tape)


    def required_networks(self):
        config = self.config
        names  = ['node_encoder', 'edge_encoder', 'classifier']
        steps  = [0] if config.shared_weights else range(1, config.L + 1)
        for l in steps:
            names += [ network_name(n, l, config.shared_weights) for n in STEP_NETWORKS[config.mode] ]

        return names


    def check_networks(self):
        ''' KeyError naming every network the configuration needs but lacks.  '''
        self.params.require(self.required_networks())


    def score(self, graph, provider = None, fps = 6.0):
        ''' Step-L scores as a numpy array, no autograd graph kept.  '''
        with torch.no_grad():
            return self.forward(graph, provider = provider, fps = fps).numpy()


    def save_checkpoint(self, path, **metadata):
        self.params.save_checkpoint(path, metadata = { "model_config" : self.config.to_dict(), **metadata })


    @classmethod
    def load_checkpoint(cls, path):
        params = ModelParams.load_checkpoint(path)
        if "model_config" not in params.metadata:
            raise ValueError(f"{path} carries no model configuration.")
        config = ConfigMPNModel(**params.metadata["model_config"])

        return cls(config, params = params)
