import numpy as np
import pytest

from mpntrack.datasets.synthetic import ConfigSynthetic, generate_synthetic
from mpntrack.graph import Trajectory, build_graph, ground_truth_labels
from mpntrack.metrics import evaluate
from mpntrack.model import MPNModel
from mpntrack.pipeline import ( ConfigPipeline, interpolate_trajectory, postprocess, prefilter,
                                subsample_frames, track_sequence, window_starts, )
from mpntrack.trainer import ConfigTrainer, train

from conftest import make_det


class ScriptedScorer:
    ''' Scores every edge of the n-th window with values[n].  '''
    def __init__(self, values):
        self.values = list(values)
        self.calls  = 0

    def check_networks(self):
        return None

    def score(self, graph, fps = 6.0):
        value = self.values[self.calls]
        self.calls += 1
        return np.full(graph.num_edges, value)


class OracleScorer:
    ''' Scores edges with their ground truth labels.  '''
    def check_networks(self):
        return None

    def score(self, graph, fps = 6.0):
        return ground_truth_labels(graph).astype(np.float64)




def test_prefilter_confidence_and_nms():
    dets = [ make_det(0, 0, x = 0.0, conf = 0.8),
             make_det(1, 0, x = 0.5, conf = 0.9),     # IoU 0.905 with det 0
             make_det(2, 0, x = 1.0, conf = 0.7),     # IoU 0.905 with det 1
             make_det(3, 1, x = 0.5, conf = 0.6),
             make_det(4, 1, x = 100, conf = 0.4), ]
    kept = prefilter(dets, conf_min = 0.5, nms_iou = 0.85)

    assert [ d.id for d in kept ] == [1, 3]


def test_prefilter_keeps_input_order_and_can_be_disabled():
    dets = [ make_det(i, 0, x = 0.0, conf = 0.5 + 0.1 * i) for i in range(3) ]
    assert [ d.id for d in prefilter(dets, conf_min = 0.0, nms_iou = 1.0) ] == [0, 1, 2]
    assert [ d.id for d in prefilter(dets, conf_min = 0.6, nms_iou = 1.0) ] == [1, 2]


def test_subsample_frames():
    assert subsample_frames(range(0, 31), 30.0, 6.0) == [0, 5, 10, 15, 20, 25, 30]
    assert subsample_frames(range(3, 8), 25.0, 25.0) == [3, 4, 5, 6, 7]
    assert subsample_frames([], 30.0, 6.0) == []


@pytest.mark.parametrize('num_frames, window, overlap, starts', [
    (20, 15, 14, [0, 1, 2, 3, 4, 5]),
    (10, 15, 14, [0]),
    (20, 15, 0 , [0, 5]),
    (30, 10, 5 , [0, 5, 10, 15, 20]),
    (0 , 15, 14, []),
])
def test_window_starts(num_frames, window, overlap, starts):
    assert window_starts(num_frames, window, overlap) == starts


def test_interpolation_fills_gaps_linearly():
    traj = Trajectory(detections = [ make_det(0, 0, x = 0.0, conf = 0.9), make_det(1, 4, x = 40.0, conf = 0.7) ],
                      track_id = 3, nodes = [0, 1])
    out  = interpolate_trajectory(traj)

    assert out.frames == [0, 1, 2, 3, 4]
    assert [ d.box[0] for d in out.detections ] == pytest.approx([0.0, 10.0, 20.0, 30.0, 40.0])
    assert [ d.id for d in out.detections ] == [0, -1, -1, -1, 1]
    assert out.detections[2].confidence == 0.7
    assert out.track_id == 3 and out.nodes == [0, 1]


def test_postprocess_drops_singletons_and_numbers_by_first_frame():
    late   = Trajectory(detections = [ make_det(0, 5), make_det(1, 6) ], nodes = [0, 1])
    early  = Trajectory(detections = [ make_det(2, 1), make_det(3, 3) ], nodes = [2, 3])
    single = Trajectory(detections = [ make_det(4, 0) ], nodes = [4])
    out = postprocess([late, early, single], ConfigPipeline())

    assert [ t.track_id for t in out ] == [1, 2]
    assert [ t.frames for t in out ] == [ [1, 2, 3], [5, 6] ]

    kept = postprocess([late, single], ConfigPipeline(drop_singletons = False, interpolate = False))
    assert [ t.frames for t in kept ] == [ [0], [5, 6] ]




def test_overlapping_windows_average_scores():
    dets   = [ make_det(i, i, x = 5.0 * i, app = np.ones(4)) for i in range(4) ]
    config = ConfigPipeline(window_frames = 3, overlap_frames = 2, fps_static = 6.0, rounding = 'greedy')
    scorer = ScriptedScorer([0.6, 0.8])
    result = track_sequence(dets, scorer, config, native_fps = 6.0, static = True)
    graph  = result.graph

    assert scorer.calls == 2
    assert result.scores[graph.edge_index(1, 2)] == pytest.approx(0.7)
    assert result.scores[graph.edge_index(0, 1)] == pytest.approx(0.6)
    assert result.scores[graph.edge_index(2, 3)] == pytest.approx(0.8)
    assert result.diagnostics['num_windows'] == 2
    assert result.diagnostics['num_averaged_edges'] == 1
    assert result.solution.feasible


def test_oracle_scores_track_perfectly():
    config_synth = ConfigSynthetic( n_tracks = 4, n_frames = 30, native_fps = 6.0, miss_prob = 0.0, fp_rate = 0.0,
                                    jitter = 0.0, appearance_dim = 8, seed = 11 )
    sequence = generate_synthetic(config_synth)
    config   = ConfigPipeline(conf_min = 0.0, nms_iou = 1.0)
    result   = track_sequence(sequence.detections, OracleScorer(), config, native_fps = 6.0, static = True)
    metrics  = evaluate(sequence.trajectories(), result.trajectories)

    assert len(result.trajectories) == 4
    assert metrics.mota == 1.0
    assert metrics.idf1 == 1.0
    assert result.diagnostics['constraint_satisfaction'] == 1.0


def test_single_window_matches_direct_scoring(small_sequence, tiny_model):
    dets   = [ d for d in small_sequence.detections if d.frame < 10 ]
    config = ConfigPipeline(window_frames = 15, overlap_frames = 14)
    result = track_sequence(dets, tiny_model, config, native_fps = 6.0, static = True)

    nodes = prefilter(dets, conf_min = config.conf_min, nms_iou = config.nms_iou)
    graph = build_graph(nodes, max_frame_gap = 15, k = config.k)

    assert result.diagnostics['num_windows'] == 1
    assert np.array_equal(result.graph.edges, graph.edges)
    assert np.allclose(result.scores, tiny_model.score(graph, fps = 6.0), atol = 1e-12, rtol = 0)


def test_track_sequence_errors(tiny_model):
    with pytest.raises(ValueError):
        track_sequence([], tiny_model, ConfigPipeline())

    del tiny_model.params.networks['classifier']
    with pytest.raises(KeyError):
        track_sequence([ make_det(0, 0, app = np.zeros(8)) ], tiny_model, ConfigPipeline())


def test_config_pipeline_validation_and_presets():
    assert ConfigPipeline.preset('dense').window_frames == 25
    assert ConfigPipeline.preset('default', rounding = 'exact').rounding == 'exact'

    with pytest.raises(ValueError):
        ConfigPipeline.preset('sparse')
    with pytest.raises(ValueError):
        ConfigPipeline(overlap_frames = 15)
    with pytest.raises(ValueError):
        ConfigPipeline(rounding = 'lp')


@pytest.mark.slow
def test_trained_model_tracks_noiseless_sequence():
    def noiseless(seed):
        return generate_synthetic(ConfigSynthetic( n_tracks = 6, n_frames = 120, native_fps = 6.0, miss_prob = 0.0,
                                                   fp_rate = 0.0, jitter = 0.0, appearance_dim = 8,
                                                   appearance_sigma = 0.05, seed = seed ))

    config_train = ConfigTrainer( iterations = 300, batch_graphs = 2, clip_frames = 10, L = 4, k = 20, lr = 2e-3,
                                  appearance_dim = 8, drop_prob = 0.0, jitter_scale = 0.0, num_holdout_clips = 1,
                                  tqdm_disable = True, seed = 0 )
    params, _ = train([ noiseless(0) ], config_train)
    model = MPNModel(config_train.model_config(), params = params)
    model.eval()

    sequence = noiseless(1)
    result   = track_sequence(sequence.detections, model, ConfigPipeline(conf_min = 0.0, nms_iou = 1.0),
                              native_fps = 6.0, static = True)
    metrics  = evaluate(sequence.trajectories(), result.trajectories)

    assert metrics.mota >= 0.95
    assert metrics.idf1 >= 0.95
