import numpy as np
import pytest

from fmatrack import tracker as tk
from fmatrack.faf import FeatureMap, similarity
from fmatrack.fmf import BoxMatch, MotionField, encode_ground_truth
from fmatrack.geometry import BBox, shift
from fmatrack.metrics import evaluate
from fmatrack.simulator import ScenarioConfig, generate
from fmatrack.tracker import Detection, FrameBundle, TrackerConfig, advance, initial_state, run_sequence

W = H = 120
A, B, C = np.eye(3)
T0 = BBox(40, 40, 20, 20)


def fmap(*paint):
    """Feature map of zeros with ``(box, code)`` painted in order."""
    v = np.zeros((3, H, W))
    for b, code in paint:
        x0, x1 = int(b.left), int(b.right)
        y0, y1 = int(b.top), int(b.bottom)
        v[:, max(y0, 0):y1, max(x0, 0):x1] = code[:, None, None]
    return FeatureMap(v)


def dets(frame, *boxes):
    return [Detection(frame, b) for b in boxes]


def one_track(box=T0):
    return initial_state([Detection(1, box)], 1)


def field_with(forward=None, backward=None):
    """Field with constant forward displacement over the track box and backward over given boxes."""
    vals = np.zeros((4, H, W))
    occ = np.zeros((2, H, W), bool)
    for k, items in ((0, forward or []), (1, backward or [])):
        for b, (dx, dy) in items:
            sl = (slice(int(b.top), int(b.bottom)), slice(int(b.left), int(b.right)))
            vals[2 * k][sl] = dx
            vals[2 * k + 1][sl] = dy
            occ[k][sl] = True
    return MotionField(vals, occ)


def ambiguous_pair(offset):
    """Two detections around ``T0 + offset``: index 0 has higher IOU, index 1 carries the track's code."""
    d_hi = shift(T0, offset + 3, 0)
    d_lo = shift(T0, offset - 4, 0)
    split = shift(T0, offset - 4, 0)
    nxt = fmap((BBox(0, 0, W, H), B), (BBox(split.left, 0, 10, H), A))
    return d_hi, d_lo, nxt


def step(state, bundle, **cfg):
    return advance(state, bundle, TrackerConfig(**cfg))[1]


def test_forward_single():
    d = shift(T0, 4, 3)
    f = encode_ground_truth([BoxMatch(T0, d, 1)], W, H)
    st = one_track()
    rep = step(st, FrameBundle(2, dets(2, d), f, fmap((T0, A)), fmap((d, A))))
    assert rep.branch_of(1) == tk.FORWARD_SINGLE
    assert st.tracks[0].box_at(2) == d and st.tracks[0].id == 1


def test_forward_appearance_resolves_ambiguity():
    d_hi, d_lo, nxt = ambiguous_pair(0)
    st = one_track()
    rep = step(st, FrameBundle(2, dets(2, d_hi, d_lo), field_with([(T0, (0, 0))]), fmap((T0, A)), nxt))
    assert rep.branch_of(1) == tk.FORWARD_APPEARANCE
    assert rep.assignments[0].detection_index == 1
    assert rep.births[0].detection_index == 0


def test_forward_top_iou_fallback():
    d_hi, d_lo, _ = ambiguous_pair(0)
    st = one_track()
    nxt = fmap((BBox(0, 0, W, H), C))
    rep = step(st, FrameBundle(2, dets(2, d_hi, d_lo), field_with([(T0, (0, 0))]), fmap((T0, A)), nxt))
    assert rep.branch_of(1) == tk.FORWARD_TOP_IOU
    assert rep.assignments[0].detection_index == 0


def test_fmf_only_takes_top_iou_without_appearance():
    d_hi, d_lo, nxt = ambiguous_pair(0)
    st = one_track()

    def boom(a, b):
        raise AssertionError("similarity must not be evaluated")

    rep = step(st, FrameBundle(2, dets(2, d_hi, d_lo), field_with([(T0, (0, 0))])), mode="fmf", similarity=boom)
    assert rep.branch_of(1) == tk.FORWARD_TOP_IOU
    assert rep.similarity_evaluations == 0


def test_backward_single_rescues_bad_forward_field():
    d = shift(T0, 30, 0)
    st = one_track()
    f = field_with([(T0, (0, 0))], [(d, (-30, 0))])
    rep = step(st, FrameBundle(2, dets(2, d), f, fmap((T0, A)), fmap((d, A))))
    assert rep.branch_of(1) == tk.BACKWARD_SINGLE


def test_backward_appearance():
    d_hi, d_lo, nxt = ambiguous_pair(30)
    f = field_with([(T0, (0, 0))], [(d_hi, (-30, 0)), (d_lo, (-30, 0))])
    st = one_track()
    rep = step(st, FrameBundle(2, dets(2, d_hi, d_lo), f, fmap((T0, A)), nxt))
    assert rep.branch_of(1) == tk.BACKWARD_APPEARANCE
    assert rep.assignments[0].detection_index == 1


def test_backward_top_iou():
    d_hi, d_lo, _ = ambiguous_pair(30)
    f = field_with([(T0, (0, 0))], [(d_hi, (-30, 0)), (d_lo, (-30, 0))])
    st = one_track()
    rep = step(st, FrameBundle(2, dets(2, d_hi, d_lo), f, fmap((T0, A)), fmap((BBox(0, 0, W, H), C))))
    assert rep.branch_of(1) == tk.BACKWARD_TOP_IOU
    assert rep.assignments[0].detection_index == 0


def test_appearance_rescue_when_motion_fails():
    d = shift(T0, 40, 30)
    st = one_track()
    rep = step(st, FrameBundle(2, dets(2, d), field_with(), fmap((T0, A)), fmap((d, A))))
    assert rep.branch_of(1) == tk.APPEARANCE_RESCUE


def test_no_rescue_below_tau2():
    d = shift(T0, 40, 30)
    st = one_track()
    rep = step(st, FrameBundle(2, dets(2, d), field_with(), fmap((T0, A)), fmap((d, B))))
    assert rep.branch_of(1) == tk.TERMINATION
    assert [b.branch for b in rep.births] == [tk.BIRTH]
    assert [t.id for t in st.tracks] == [1, 2]


def test_faf_only_greedy_never_reads_field():
    d1, d2 = shift(T0, 40, 0), shift(T0, -35, 0)
    other = BBox(5, 90, 15, 15)
    st = initial_state([Detection(1, T0), Detection(1, other)], 1)

    class NoField:
        width, height = W, H

        def window(self, *a):
            raise AssertionError("field must not be read")

    bundle = FrameBundle(2, dets(2, d1, d2), NoField(), fmap((T0, A), (other, B)), fmap((d1, B), (d2, A)))
    rep = step(st, bundle, mode="faf")
    assert rep.branches() == {1: tk.APPEARANCE_GREEDY, 2: tk.APPEARANCE_GREEDY}
    assert {a.track_id: a.detection_index for a in rep.assignments} == {1: 1, 2: 0}


def test_termination_on_empty_detections():
    st = one_track()
    rep = step(st, FrameBundle(2, [], field_with(), fmap(), fmap()))
    assert rep.terminations == [1]
    assert rep.branch_of(1) == tk.TERMINATION
    assert st.active == []


def test_max_age_keeps_track_alive():
    st = one_track()
    cfg = TrackerConfig(max_age=2)
    advance(st, FrameBundle(2, [], field_with(), fmap(), fmap()), cfg)
    assert len(st.active) == 1
    advance(st, FrameBundle(3, [], field_with(), fmap(), fmap()), cfg)
    assert st.active == []


def test_birth_gets_fresh_ids():
    st = initial_state([], 1)
    rep = step(st, FrameBundle(2, dets(2, T0, shift(T0, 50, 0)), field_with(), fmap(), fmap()))
    assert [b.track_id for b in rep.births] == [1, 2]
    assert rep.branch_of(2) == tk.BIRTH


def test_missing_inputs_rejected():
    with pytest.raises(ValueError):
        advance(one_track(), FrameBundle(2, []), TrackerConfig())
    with pytest.raises(ValueError):
        advance(one_track(), FrameBundle(2, [], field_with()), TrackerConfig(mode="fmf_faf"))


def test_grid_mismatch_rejected():
    with pytest.raises(ValueError):
        advance(one_track(), FrameBundle(2, [], field_with(), FeatureMap(np.zeros((3, 5, 5))), fmap()),
                TrackerConfig())


@pytest.mark.parametrize("kw", [dict(tau1=1.5), dict(tau2=-0.1), dict(max_age=0), dict(aggregator="max"),
                                dict(mode="both")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrackerConfig(**kw)


def test_default_thresholds():
    cfg = TrackerConfig()
    assert (cfg.tau1, cfg.tau2, cfg.mode, cfg.max_age) == (0.45, 0.5, "fmf_faf", 1)


def test_empty_sequence():
    assert run_sequence([], TrackerConfig(), []) == []


def _noiseless(seed, **kw):
    base = dict(seed=seed, frame_count=40, width=320, height=240, agent_count=6, channels=16,
                box_width_min=15, box_width_max=25, box_height_min=30, box_height_max=50, max_overlap=0.5)
    base.update(kw)
    return generate(ScenarioConfig(**base))


@pytest.mark.parametrize("seed", range(3))
def test_noiseless_oracle_reproduces_ground_truth(seed):
    sc = _noiseless(seed)
    tracks = run_sequence(sc.bundles(), TrackerConfig(), sc.initial_detections)
    r = evaluate(sc.ground_truth, tracks)
    assert (r.MOTA, r.IDSW, r.Frag) == (1.0, 0, 0)


def test_fmf_only_identical_when_unambiguous():
    sc = _noiseless(11, agent_count=4, max_overlap=0.0)
    a = run_sequence(sc.bundles(), TrackerConfig(), sc.initial_detections)
    b = run_sequence(sc.bundles(), TrackerConfig(mode="fmf"), sc.initial_detections)
    assert [(t.id, t.entries) for t in a] == [(t.id, t.entries) for t in b]


def test_crossing_pair_resolved_without_switches():
    sc = _noiseless(2, kind="crossing", agent_count=2, frame_count=60, max_overlap=1.0)
    reports = []
    tracks = run_sequence(sc.bundles(), TrackerConfig(), sc.initial_detections, reports=reports)
    assert evaluate(sc.ground_truth, tracks).IDSW == 0


def test_deterministic():
    sc = _noiseless(5, center_jitter=1.5, miss_prob=0.1, fp_rate=0.5)
    runs = [run_sequence(sc.bundles(), TrackerConfig(), sc.initial_detections) for _ in range(2)]
    assert [(t.id, t.entries, t.state) for t in runs[0]] == [(t.id, t.entries, t.state) for t in runs[1]]


def test_similarity_is_default_model():
    assert TrackerConfig().similarity is similarity
