"""Acceptance suite: one test per criterion, at the stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see a pass/fail line per
criterion. Criterion 15 needs the inference bridge built under bridge/dist
and a node runtime; it is skipped (not failed) when those are absent.
"""
from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_force_gated_max, brute_force_min_cost, reference_hota
from reftrack import assignment, dataio, metrics, perception, tracker
from reftrack.cli import main as cli_main
from reftrack.dataio import SynthConfig, load_sequence, restrict_to_expression, synth_generate
from reftrack.geometry import BBox, ImageDims, iou_matrix, rescale
from reftrack.gspo import (
    DemoConfig,
    GroupSample,
    GspoConfig,
    cas_advantages,
    clip_ratio,
    group_objective,
    run_demo,
    seq_ratio,
    make_group,
    toy_surrogate,
    toy_surrogate_grad,
)
from reftrack.perception import OracleBackend, PerturbationConfig
from reftrack.rewards import (
    MatchSummary,
    RewardConfig,
    format_reward,
    length_reward,
    match_boxes,
    oer,
    parse_answer,
    pdr,
)
from reftrack.tracker import Status, Tracker, TrackerConfig

TABLE_CFG = RewardConfig()   # alpha .5, beta 1, gamma .5, lambda 2, window 80/140/200/600
TABLE_GSPO = GspoConfig()    # eps 1e-3, beta_kl 1e-3, scale_max 3, G 4


def report(n: int, label: str):
    print(f"\n[criterion {n:02d}] PASS — {label}")


def random_boxes(rng, n, dims):
    out = []
    for _ in range(n):
        w = rng.uniform(5, 40)
        h = rng.uniform(5, 40)
        x = rng.uniform(0, dims.width - w)
        y = rng.uniform(0, dims.height - h)
        out.append(BBox(x, y, x + w, y + h))
    return out


def test_c01_hungarian_oracle():
    start = time.time()
    rng = np.random.default_rng(1001)
    for case in range(500):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, 8))
        # integer-valued costs keep float summation exact: equality is exact
        cost = rng.integers(0, 10_000, size=(n, m)).astype(float)
        solved = assignment.solve(cost)
        got = sum(cost[i, j] for i, j in solved.pairs)
        want = brute_force_min_cost(cost.tolist())
        assert got == want, f"case {case}: {got} != {want}"
        assert len(solved.pairs) == min(n, m)
    elapsed = time.time() - start
    assert elapsed < 5.0, f"runtime {elapsed:.2f}s exceeds 5s"
    report(1, f"500 random matrices match brute force exactly in {elapsed:.2f}s")


def test_c02_perfect_oracle_tracking(tmp_path):
    start = time.time()
    root = synth_generate(
        SynthConfig(n_targets=5, n_frames=200, dims=ImageDims(512, 512), seed=42),
        tmp_path / "seq")
    manifest, gt, exprs = load_sequence(root)
    backend = OracleBackend(gt, exprs[0], manifest.dims, PerturbationConfig())
    result = tracker.run_sequence(backend, manifest, exprs[0].expression)
    rep = metrics.evaluate(result, restrict_to_expression(gt, exprs[0]))
    for name, value in (("HOTA", rep.hota), ("DetA", rep.deta),
                        ("AssA", rep.assa), ("LocA", rep.loca)):
        assert value >= 0.9999, f"{name} = {value}"
    elapsed = time.time() - start
    assert elapsed < 10.0, f"runtime {elapsed:.2f}s exceeds 10s"
    report(2, f"HOTA {rep.hota:.6f} DetA {rep.deta:.6f} AssA {rep.assa:.6f} "
              f"LocA {rep.loca:.6f} in {elapsed:.2f}s")


def test_c03_lifecycle_state_by_state():
    # (a) initialization branch
    t = Tracker()
    emitted = t.step([BBox(0, 0, 10, 10), BBox(50, 50, 70, 80)], frame=1)
    assert [tid for tid, _ in emitted] == [1, 2]
    assert [trj.status for trj in t.trajectories] == [Status.ACTIVE, Status.ACTIVE]
    assert [trj.missing_count for trj in t.trajectories] == [0, 0]

    # (b) single-pair match keeps the identity
    t = Tracker()
    t.step([BBox(0, 0, 20, 20)], frame=1)
    emitted = t.step([BBox(1, 1, 21, 21)], frame=2)
    assert [tid for tid, _ in emitted] == [1]
    assert t.trajectories[0].status is Status.ACTIVE
    assert t.trajectories[0].missing_count == 0

    # (c) temporary -> terminated exactly when missing_count exceeds delta_max = 2
    t = Tracker(TrackerConfig(delta_max=2))
    t.step([BBox(0, 0, 20, 20)], frame=1)
    trj = t.trajectories[0]
    expected = [(1, Status.TEMPORARY), (2, Status.TEMPORARY), (3, Status.TERMINATED)]
    for frame, (missing, status) in zip((2, 3, 4), expected):
        t.step([], frame=frame)
        assert trj.missing_count == missing, f"frame {frame}"
        assert trj.status is status, f"frame {frame}"
    report(3, "initialization, match, and temporary->terminated sequences exact")


def test_c04_cas_closed_form():
    got = cas_advantages([0.9, 1.1, 1.0, 1.0], TABLE_GSPO.scale_max)
    for g, w in zip(got, [-0.3, 0.3, 0.0, 0.0]):
        assert abs(g - w) <= 1e-12
    assert cas_advantages([1.0, 1.0, 1.0, 1.0], 3.0) == [0.0, 0.0, 0.0, 0.0]
    rng = np.random.default_rng(1004)
    for _ in range(10_000):
        g = int(rng.integers(2, 9))
        rewards = rng.uniform(-10, 10, size=g)
        mu = rewards.mean()
        for a, r in zip(cas_advantages(rewards.tolist(), 3.0), rewards):
            assert abs(a) <= 3.0 * abs(r - mu) + 1e-12
    report(4, "closed-form CAS values exact to 1e-12; bound holds on 10^4 groups")


def test_c05_length_window():
    for L in range(140, 201):
        assert length_reward(L, TABLE_CFG) == 1.0, L
    for L in (0, 40, 80):
        assert length_reward(L, TABLE_CFG) == 0.0, L
    for L in (600, 800, 10_000):
        assert length_reward(L, TABLE_CFG) == 0.0, L
    assert abs(length_reward(110, TABLE_CFG) - 0.5) <= 1e-12
    report(5, "plateau [140,200] = 1, zeros at <=80 and >=600, L=110 -> 0.5")


def test_c06_reward_formulas():
    perfect = MatchSummary(1, 1.0, 1, 1)
    assert abs(oer(perfect, TABLE_CFG) - 1.5) <= 1e-12
    assert abs(pdr(perfect, TABLE_CFG) - 3.0) <= 1e-12
    rng = np.random.default_rng(1006)
    for _ in range(1000):
        matched = int(rng.integers(0, 6))
        score = float(rng.uniform(0, matched)) if matched else 0.0
        n_gt = int(rng.integers(max(1, matched), 9))
        start_det = max(1, matched)
        values = [pdr(MatchSummary(matched, score, n_det, n_gt), TABLE_CFG)
                  for n_det in range(start_det, start_det + 8)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))
    report(6, "OER = 1.5 and PDR = 3.0 exact; PDR non-increasing in n_det on 10^3 summaries")


def test_c07_iou_score_optimality():
    rng = np.random.default_rng(1007)
    dims = ImageDims(100, 100)
    for case in range(200):
        n_det = int(rng.integers(0, 7))
        n_gt = int(rng.integers(0, 7))
        dets = random_boxes(rng, n_det, dims)
        gts = random_boxes(rng, n_gt, dims)
        tau = float(rng.uniform(0.0, 0.8))
        got = match_boxes(dets, gts, dims, dims, tau)
        m = iou_matrix(dets, gts)
        want = brute_force_gated_max(m.tolist(), tau)
        assert abs(got.iou_score - want) <= 1e-9, f"case {case}"
    report(7, "matched IoU sum equals exhaustive gated maximum on 200 instances")


def test_c08_gspo_gradient_check():
    start = time.time()
    rng = np.random.default_rng(1008)
    h = 1e-5
    vocab = 8
    worst = 0.0
    checked = 0
    while checked < 50:
        logits_new = rng.normal(0.0, 1.0, size=vocab)
        logits_old = rng.normal(0.0, 1.0, size=vocab)
        chosen = [rng.integers(0, vocab, size=int(rng.integers(1, 7))).tolist()
                  for _ in range(TABLE_GSPO.group_size)]
        rewards = rng.uniform(0.0, 1.0, size=TABLE_GSPO.group_size).tolist()
        near_kink = any(
            abs(seq_ratio(s) - b) < 1e-3
            for s in make_group(logits_new, logits_old, chosen, rewards)
            for b in (1 - TABLE_GSPO.epsilon, 1 + TABLE_GSPO.epsilon)
        )
        if near_kink:
            continue  # finite differences are one-sided at the clip kink
        analytic = toy_surrogate_grad(logits_new, logits_old, chosen, rewards, TABLE_GSPO)
        for u in range(vocab):
            e = np.zeros(vocab)
            e[u] = h
            fd = (toy_surrogate(logits_new + e, logits_old, chosen, rewards, TABLE_GSPO)
                  - toy_surrogate(logits_new - e, logits_old, chosen, rewards, TABLE_GSPO)) / (2 * h)
            rel = abs(analytic[u] - fd) / max(abs(analytic[u]), abs(fd), 1e-8)
            worst = max(worst, rel)
        checked += 1
    elapsed = time.time() - start
    assert worst < 1e-4, f"max relative error {worst:.3e}"
    assert elapsed < 30.0, f"runtime {elapsed:.2f}s exceeds 30s"
    report(8, f"max relative gradient error {worst:.2e} over 50 instances in {elapsed:.2f}s")


def test_c09_clip_identity_and_pessimism():
    rng = np.random.default_rng(1009)
    eps = TABLE_GSPO.epsilon
    for _ in range(10_000):
        rewards = rng.uniform(-2, 2, size=4).tolist()
        inside = bool(rng.integers(0, 2))
        samples = []
        for r in rewards:
            n = int(rng.integers(1, 6))
            if inside:
                ratio = 1.0 + float(rng.uniform(-eps, eps)) * 0.9
            else:
                ratio = float(rng.uniform(0.5, 1.5))
            samples.append(GroupSample(
                tuple(-1.0 + math.log(ratio) for _ in range(n)),
                tuple(-1.0 for _ in range(n)),
                r,
            ))
        out = group_objective(samples, TABLE_GSPO, kl=0.0)
        for t in out.per_sequence:
            assert t.term <= t.ratio * t.advantage + 1e-12  # pessimism
        if inside:
            unclipped = float(np.mean([t.ratio * t.advantage for t in out.per_sequence]))
            assert abs(out.value - unclipped) <= 1e-12  # clip identity
    report(9, "clip identity and pessimism hold over 10^4 random groups at 1e-12")


def test_c10_cas_vs_raw_contrast(capsys):
    rep = run_demo(DemoConfig(steps=3, seed=7, use_cas=False))
    stab = rep.stability
    assert stab.raw_max_abs > 1e5
    assert stab.cas_max_abs <= 3.0 * stab.max_abs_deviation + 1e-12
    code = cli_main(["gspo-demo", "--no-cas", "--steps", "3", "--seed", "7"])
    out = capsys.readouterr().out
    assert code == 0
    assert "raw standardized max|A| = 1e+06" in out
    assert "CAS max|A|              = 3" in out
    report(10, f"raw max|A| {stab.raw_max_abs:.3g} > 1e5; CAS bounded by "
               f"{3.0 * stab.max_abs_deviation:.3g}; demo report asserts both")


def test_c11_hota_hand_case_and_micro_oracle():
    dims = ImageDims(200, 200)
    gt = dataio.TrackingResult("s", dims, 10)
    pred = dataio.TrackingResult("s", dims, 10)
    for f in range(1, 11):
        gt.add(f, 1, BBox(10, 10, 40, 50))
        pred.add(f, 7 if f <= 5 else 8, BBox(10, 10, 40, 50))
    at = metrics.evaluate_at_alpha(pred, gt, 0.5)
    assert abs(at.ass_a - 0.5) <= 1e-9
    assert abs(at.hota - math.sqrt(0.5)) <= 1e-9

    rng = np.random.default_rng(1011)
    for case in range(100):
        n_frames = int(rng.integers(2, 9))
        n_tracks = int(rng.integers(1, 4))
        g = dataio.TrackingResult("s", dims, n_frames)
        p = dataio.TrackingResult("s", dims, n_frames)
        next_id = 50
        id_map = {t: t for t in range(1, n_tracks + 1)}
        for f in range(1, n_frames + 1):
            for t in range(1, n_tracks + 1):
                if rng.random() < 0.2:
                    continue
                x, y = rng.uniform(0, 150, size=2)
                w, h = rng.uniform(10, 50, size=2)
                g.add(f, t, BBox(x, y, x + w, y + h))
                if rng.random() < 0.25:
                    continue
                if rng.random() < 0.12:
                    id_map[t] = next_id
                    next_id += 1
                dx, dy = rng.uniform(-6, 6, size=2)
                p.add(f, id_map[t], BBox(x + dx, y + dy, x + w + dx, y + h + dy))
            if rng.random() < 0.3:
                x, y = rng.uniform(0, 150, size=2)
                p.add(f, next_id, BBox(x, y, x + 25, y + 25))
                next_id += 1
        got = metrics.evaluate(p, g)
        ref = reference_hota(
            {f: [(tid, b.as_tuple()) for tid, b in e] for f, e in p.frames.items()},
            {f: [(tid, b.as_tuple()) for tid, b in e] for f, e in g.frames.items()},
            metrics.ALPHA_GRID,
        )
        for c in got.per_alpha:
            det_a, ass_a, _ = ref[c.alpha]
            assert abs(c.det_a - det_a) <= 1e-9, f"case {case} alpha {c.alpha}"
            assert abs(c.ass_a - ass_a) <= 1e-9, f"case {case} alpha {c.alpha}"
    report(11, "id-switch case gives AssA 0.5, HOTA sqrt(0.5); 100 micro cases match "
               "the exhaustive reference")


def test_c12_degradation_monotonicity(tmp_path):
    start = time.time()
    root = synth_generate(
        SynthConfig(n_targets=3, n_frames=100, dims=ImageDims(400, 300), seed=77),
        tmp_path / "seq")
    manifest, gt, exprs = load_sequence(root)
    gt_expr = restrict_to_expression(gt, exprs[0])
    sweep = (0.0, 0.1, 0.3, 0.5)
    means = []
    for p_miss in sweep:
        scores = []
        for seed in range(20):
            backend = OracleBackend(gt, exprs[0], manifest.dims,
                                    PerturbationConfig(p_miss=p_miss, seed=seed))
            result = tracker.run_sequence(backend, manifest, exprs[0].expression)
            scores.append(metrics.evaluate(result, gt_expr).hota)
        means.append(float(np.mean(scores)))
    for a, b in zip(means, means[1:]):
        assert b <= a + 1e-3, f"mean HOTA rose along the sweep: {means}"
    elapsed = time.time() - start
    assert elapsed < 120.0, f"runtime {elapsed:.2f}s exceeds 2 minutes"
    report(12, "mean HOTA over 20 seeds: " +
               " >= ".join(f"{m:.4f}" for m in means) + f" in {elapsed:.1f}s")


def test_c13_format_parser_cases():
    cases = [
        ("<think>x</think><answer>[0,0,10,10]</answer>", 1),
        ("<answer>[0,0,10,10]</answer>", 0),
        ("<think>t</think><answer>boxes: [10,10,5,5]</answer>", 0),
    ]
    got = [format_reward(parse_answer(text)) for text, _ in cases]
    assert got == [want for _, want in cases]
    report(13, "format rewards {1, 0, 0} on the canonical/missing-think/prose cases")


def test_c14_round_trips(tmp_path, capsys):
    # dataio write/load identity within 0.01 px
    rng = np.random.default_rng(1014)
    r = dataio.TrackingResult("seq", ImageDims(512, 512), 30)
    for frame in range(1, 31):
        for tid in range(1, int(rng.integers(1, 6)) + 1):
            x, y = rng.uniform(0, 450, size=2)
            w, h = rng.uniform(5, 60, size=2)
            r.add(frame, tid, BBox(x, y, x + w, y + h))
    path = tmp_path / "r.txt"
    dataio.write_results(r, path)
    back = dataio.load_results(path, "seq", r.dims, r.frame_count)
    for frame, entries in r.frames.items():
        loaded = dict(back.at(frame))
        for tid, box in entries:
            for got, want in zip(loaded[tid].as_tuple(), box.as_tuple()):
                assert abs(got - want) <= 0.01 + 1e-9

    # geometry rescale inverse within 1e-9
    for _ in range(500):
        x, y = rng.uniform(-500, 500, size=2)
        w, h = rng.uniform(0, 300, size=2)
        b = BBox(x, y, x + w, y + h)
        d1 = ImageDims(int(rng.integers(1, 4000)), int(rng.integers(1, 4000)))
        d2 = ImageDims(int(rng.integers(1, 4000)), int(rng.integers(1, 4000)))
        round_tripped = rescale(rescale(b, d1, d2), d2, d1)
        for got, want in zip(round_tripped.as_tuple(), b.as_tuple()):
            assert abs(got - want) <= max(1e-9, 1e-9 * abs(want))

    # same-seed CLI runs byte-identical
    for sub in ("a", "b"):
        assert cli_main(["synth", "--output-dir", str(tmp_path / sub), "--name", "d",
                         "--frames", "40", "--seed", "13"]) == 0
        assert cli_main(["track", str(tmp_path / sub / "d"),
                         "--output-dir", str(tmp_path / sub / "p"), "--seed", "13",
                         "--p-miss", "0.2", "--jitter-sigma", "0.05"]) == 0
    capsys.readouterr()
    assert (tmp_path / "a/d/gt.txt").read_bytes() == (tmp_path / "b/d/gt.txt").read_bytes()
    assert (tmp_path / "a/p/d/001.txt").read_bytes() == (tmp_path / "b/p/d/001.txt").read_bytes()
    report(14, "MOT round trip <= 0.01 px, rescale inverse <= 1e-9, CLI reruns byte-identical")


BRIDGE_DIST = Path(__file__).resolve().parents[1] / "bridge" / "dist" / "cli.js"


@pytest.mark.skipif(not BRIDGE_DIST.is_file(), reason="inference bridge not built")
def test_c15_bridge_protocol_conformance(tmp_path, capsys):
    from bridge_harness import make_canned_completions, mock_bridge

    root = synth_generate(
        SynthConfig(n_targets=2, n_frames=12, dims=ImageDims(320, 240), seed=5),
        tmp_path / "data" / "demo")
    manifest, gt, exprs = load_sequence(root)
    cache_root = tmp_path / "cache"
    make_canned_completions(gt, cache_root / "demo" / "001")

    with mock_bridge(frames_dir=root / "visible",
                     canned_dir=cache_root / "demo" / "001",
                     model_dims=(320, 240)) as base_url:
        import httpx

        health = httpx.get(f"{base_url}/health")
        assert health.status_code == 200 and "model" in health.json()

        bad = httpx.post(f"{base_url}/detect", json={"rgb_image": "zz"})
        assert bad.status_code == 400

        unknown = httpx.post(f"{base_url}/detect", json={
            "rgb_image": "bm90LWEtZnJhbWU=", "thermal_image": "bm90LWEtZnJhbWU=",
            "prompt": "p", "image_width": 320, "image_height": 240})
        assert unknown.status_code == 404

        assert cli_main(["track", str(root), "--backend", "remote",
                         "--endpoint", base_url,
                         "--output-dir", str(tmp_path / "remote_preds"),
                         "--seed", "1"]) == 0

    assert cli_main(["track", str(root), "--backend", "cache",
                     "--cache-dir", str(cache_root),
                     "--output-dir", str(tmp_path / "cache_preds"),
                     "--seed", "1"]) == 0
    capsys.readouterr()

    remote_file = tmp_path / "remote_preds" / "demo" / "001.txt"
    cache_file = tmp_path / "cache_preds" / "demo" / "001.txt"
    assert remote_file.read_bytes() == cache_file.read_bytes()
    report(15, "remote tracking over the mock bridge matches the cache backend byte-for-byte; "
               "health/400/404 covered")
