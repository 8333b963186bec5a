"""End-to-end acceptance criteria, one test per criterion."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

import test_tracker as tt
from conftest import disjoint_scene
from fmatrack import tracker as tk
from fmatrack.bench import run_benchmark
from fmatrack.faf import bce_loss
from fmatrack.fmf import BoxMatch, MotionField, box_displacement, encode_ground_truth, mse_loss
from fmatrack.geometry import BBox, covered_pixels, shift
from fmatrack.metrics import evaluate
from fmatrack.motchallenge import (
    parse_detections, parse_ground_truth, read_field, read_fmap, tracks_from_table, write_detections,
    write_field, write_fmap, write_ground_truth, write_results,
)
from fmatrack.simulator import ScenarioConfig, generate
from fmatrack.tracker import TrackerConfig, run_sequence
from test_metrics import brute_force, random_case


def test_1_oracle_fixed_point(acceptance):
    t0 = time.perf_counter()
    failures = []
    for seed in range(20):
        sc = generate(ScenarioConfig(seed=seed, frame_count=200, width=1280, height=720, agent_count=20,
                                     max_overlap=0.5))
        r = evaluate(sc.ground_truth, run_sequence(sc.bundles(), TrackerConfig(), sc.initial_detections))
        if (r.MOTA, r.IDSW, r.Frag) != (1.0, 0, 0):
            failures.append((seed, r.MOTA, r.IDSW, r.Frag))
    elapsed = time.perf_counter() - t0
    acceptance(1, "oracle fixed point", f"20 seeds, {len(failures)} failing, {elapsed:.1f} s")
    assert not failures
    assert elapsed < 30.0


def test_2_antisymmetry_and_roundtrip(acceptance):
    rng = np.random.default_rng(2024)
    pairs = worst = 0
    while pairs < 1000:
        matches, n = disjoint_scene(rng, int(rng.integers(1, 5)))
        f = encode_ground_truth(matches, n, n)
        for m in matches:
            fwd = {(f.fx1[y, x], f.fy1[y, x]) for x, y in covered_pixels(m.box1, n, n)}
            bwd = {(f.fx2[y, x], f.fy2[y, x]) for x, y in covered_pixels(m.box2, n, n)}
            assert bwd == {(-a, -b) for a, b in fwd}
            dx, dy = m.displacement
            for direction, box, sign in (("forward", m.box1, 1), ("backward", m.box2, -1)):
                gx, gy = box_displacement(f, direction, box)
                worst = max(worst, abs(gx - sign * dx), abs(gy - sign * dy))
            pairs += 1
    acceptance(2, "antisymmetry and roundtrip", f"{pairs} pairs, max decode error {worst:.1e} px")
    assert worst <= 1e-9


def test_3_verification_losses(acceptance):
    b = BBox(0, 0, 5, 10)
    m = [BoxMatch(b, shift(b, 2, 1), 1)]
    truth = encode_ground_truth(m, 20, 20)
    vals = truth.values.copy()
    vals[0][truth.occupancy1] += 2.0
    off = mse_loss(MotionField(vals, truth.occupancy), truth, m)
    exact = mse_loss(truth, truth, m)
    ln2 = bce_loss([0.5] * 10, [0, 1] * 5)
    single = bce_loss([0.2], [0])
    perfect = bce_loss([0.0, 1.0, 0.0], [0, 1, 0])
    acceptance(3, "verification losses", f"MSE exact={exact} off-by-2={off}; BCE half={ln2:.12f} "
                                          f"single={single:.6f} perfect={perfect:.1e}")
    assert exact == 0.0 and off == 200.0
    assert abs(ln2 - math.log(2)) <= 1e-12
    assert abs(single + math.log(0.8)) <= 1e-12
    assert perfect < 1e-6


def test_4_branch_coverage(acceptance):
    seen = set()

    def run(make):
        st, bundle, cfg = make()
        _, rep = tk.advance(st, bundle, cfg)
        seen.update(rep.branches().values())
        seen.update(b.branch for b in rep.births)

    d = shift(tt.T0, 4, 3)
    run(lambda: (tt.one_track(), tk.FrameBundle(2, tt.dets(2, d), encode_ground_truth([BoxMatch(tt.T0, d, 1)],
                 tt.W, tt.H), tt.fmap((tt.T0, tt.A)), tt.fmap((d, tt.A))), TrackerConfig()))
    for offset in (0, 30):
        hi, lo, nxt = tt.ambiguous_pair(offset)
        back = [(hi, (-offset, 0)), (lo, (-offset, 0))] if offset else None
        field = tt.field_with([(tt.T0, (0, 0))], back)
        run(lambda: (tt.one_track(), tk.FrameBundle(2, tt.dets(2, hi, lo), field, tt.fmap((tt.T0, tt.A)), nxt),
                     TrackerConfig()))
        run(lambda: (tt.one_track(), tk.FrameBundle(2, tt.dets(2, hi, lo), field, tt.fmap((tt.T0, tt.A)),
                                                     tt.fmap((BBox(0, 0, tt.W, tt.H), tt.C))), TrackerConfig()))
    far = shift(tt.T0, 30, 0)
    run(lambda: (tt.one_track(), tk.FrameBundle(2, tt.dets(2, far), tt.field_with([(tt.T0, (0, 0))], [(far, (-30, 0))]),
                 tt.fmap((tt.T0, tt.A)), tt.fmap((far, tt.B))), TrackerConfig()))
    gone = shift(tt.T0, 40, 30)
    run(lambda: (tt.one_track(), tk.FrameBundle(2, tt.dets(2, gone), tt.field_with(), tt.fmap((tt.T0, tt.A)),
                                                 tt.fmap((gone, tt.A))), TrackerConfig()))
    run(lambda: (tt.one_track(), tk.FrameBundle(2, tt.dets(2, gone), tt.field_with(), tt.fmap((tt.T0, tt.A)),
                                                 tt.fmap((gone, tt.B))), TrackerConfig()))
    run(lambda: (tt.one_track(), tk.FrameBundle(2, tt.dets(2, gone), None, tt.fmap((tt.T0, tt.A)),
                                                 tt.fmap((gone, tt.A))), TrackerConfig(mode="faf")))
    wanted = {tk.FORWARD_SINGLE, tk.FORWARD_APPEARANCE, tk.FORWARD_TOP_IOU, tk.BACKWARD_SINGLE,
              tk.BACKWARD_APPEARANCE, tk.BACKWARD_TOP_IOU, tk.APPEARANCE_RESCUE, tk.APPEARANCE_GREEDY,
              tk.BIRTH, tk.TERMINATION}
    acceptance(4, "tracker branch coverage", f"{len(seen & wanted)}/{len(wanted)} branches reported")
    assert seen >= wanted


def test_5_metrics_oracle(acceptance):
    mismatched = 0
    for seed in range(100):
        gt, hyp = random_case(seed)
        if not any(gt.values()):
            continue
        events = []
        evaluate(gt, hyp, events=events)
        key = lambda e: (e.frame_index, e.matches, e.false_positives, e.misses, e.switches)
        mismatched += [key(e) for e in events] != [key(e) for e in brute_force(gt, hyp)]
    a, b = BBox(0, 0, 10, 10), BBox(50, 0, 10, 10)
    gt = {f: [(1, a), (2, b)] for f in range(1, 11)}
    hyp = {f: [(2 if f >= 6 else 1, a), (1 if f >= 6 else 2, b)] for f in range(1, 11)}
    r = evaluate(gt, hyp)
    acceptance(5, "metrics oracle", f"{mismatched}/100 seeds differ from brute force; swap MOTA={r.MOTA} IDSW={r.IDSW}")
    assert mismatched == 0
    assert r.IDSW == 2 and abs(r.MOTA - 0.9) <= 1e-15


def _assoc_seconds(sc, cfg):
    from fmatrack.bench import time_association
    return sum(time_association(sc, cfg))


def test_6_ablation_direction(acceptance):
    idsw = {"fmf": 0, "fmf_faf": 0}
    secs = {"fmf": 0.0, "faf": 0.0}
    for seed in range(20):
        sc = generate(ScenarioConfig(seed=seed, kind="crossing", frame_count=120, width=640, height=360,
                                     agent_count=10, center_jitter=2.0))
        for mode in idsw:
            idsw[mode] += evaluate(sc.ground_truth, run_sequence(sc.bundles(), TrackerConfig(mode=mode),
                                                                 sc.initial_detections)).IDSW
        for mode in secs:
            secs[mode] += _assoc_seconds(sc, TrackerConfig(mode=mode))
    acceptance(6, "ablation direction", f"IDSW fmf={idsw['fmf']} fmf_faf={idsw['fmf_faf']}; "
                                        f"time fmf={secs['fmf']:.2f}s faf={secs['faf']:.2f}s")
    assert idsw["fmf_faf"] <= idsw["fmf"]
    assert secs["fmf"] < secs["faf"]


def test_7_scaling(acceptance):
    rows = {r.objects: r for r in run_benchmark([10, 25, 50, 100], frames=200, seed=7)}
    ratio = rows[100].mean_ms / rows[10].mean_ms
    acceptance(7, "scaling", f"time(100)/time(10)={ratio:.1f}; {rows[50].hz:.1f} Hz at 50 objects; "
                             + ", ".join(f"{n}:{r.mean_ms:.2f}ms" for n, r in rows.items()))
    assert ratio < 100
    assert rows[50].hz >= 25


def test_8_format_fidelity(acceptance, tmp_path):
    import test_motchallenge as tm
    sc = generate(ScenarioConfig(seed=8, frame_count=30, width=240, height=180, agent_count=6, center_jitter=1.0,
                                 fp_rate=0.5, miss_prob=0.1, box_width_min=10, box_width_max=20,
                                 box_height_min=20, box_height_max=40, field_noise=0.2, appearance_noise=0.1,
                                 channels=8))
    g, d = write_ground_truth(sc.ground_truth), write_detections(sc.detections)
    r = write_results(tracks_from_table(parse_ground_truth(g)))
    text_ok = (write_ground_truth(parse_ground_truth(g)) == g and write_detections(parse_detections(d)) == d
               and write_results(tracks_from_table(parse_ground_truth(r))) == r)
    f = sc.field(4, 5).to_dense()
    m = sc.feature_map(4).to_dense()
    codec_ok = read_field(write_field(f)) == f and read_fmap(write_fmap(m)) == m
    tm.test_golden_export(tmp_path)
    acceptance(8, "format fidelity", f"text roundtrip={text_ok}, codec roundtrip={codec_ok}, golden export equal")
    assert text_ok and codec_ok
