import numpy as np
import pytest

from mpntrack.graph import Detection, TrackingGraph
from mpntrack.datasets.synthetic import ConfigSynthetic, generate_synthetic
from mpntrack.model import ConfigMPNModel, MPNModel


def make_det(id, frame, x = 0.0, y = 0.0, w = 10.0, h = 20.0, conf = 1.0, app = None, track = None):
    if app is None: app = np.zeros(4)
    return Detection(id = id, frame = frame, box = (x, y, w, h), confidence = conf,
                     appearance = np.asarray(app, dtype = np.float64), gt_track = track)


def graph_from(frames, pairs, tracks = None):
    ''' Nodes with the given frames, edges given as (i, j) pairs.  '''
    tracks = tracks or [ None ] * len(frames)
    nodes  = [ make_det(i, t, x = 10.0 * i, track = tracks[i]) for i, t in enumerate(frames) ]
    return TrackingGraph.from_edges(nodes, pairs)


@pytest.fixture
def chain_graph():
    ''' 0 -> 1 -> 2 plus the skip edge 0 -> 2.  '''
    return graph_from([0, 1, 2], [(0, 1), (1, 2), (0, 2)], tracks = [1, 1, 1])


@pytest.fixture
def small_sequence():
    config = ConfigSynthetic( n_tracks = 4, n_frames = 60, native_fps = 30.0, miss_prob = 0.1,
                              fp_rate = 0.2, appearance_dim = 8, seed = 7 )
    return generate_synthetic(config)


@pytest.fixture
def tiny_model():
    return MPNModel(ConfigMPNModel(mode = 'time_aware', L = 2, appearance_dim = 8, seed = 0))
