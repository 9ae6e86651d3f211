"""Gated assignment, track smoothing, and completion decisions.

oracle_assign is an exhaustive search over all partial injective mappings
with the same gate and the same (cardinality, cost, lexicographic) ranking
the solver promises; scipy's solver cross-checks the ungated square case.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from brickguide.association import (
    CompletionConfig,
    Expectation,
    Track,
    assign,
    match_frame,
    match_tracks,
    placement_target_box,
    step_complete,
    update_tracks,
)
from brickguide.geometry import GroundBox3D
from brickguide.plan import AssemblyPlan, Placement, Step, compile_steps, parse_plan


# --- oracle ------------------------------------------------------------

def oracle_assign(cost, gate):
    """Exhaustive best (max pairs, min fsum cost, lex smallest pair list)."""
    n = len(cost)
    m = len(cost[0]) if n else 0
    feas = [
        [math.isfinite(cost[r][c]) and cost[r][c] <= gate for c in range(m)]
        for r in range(n)
    ]
    best = None

    def dfs(r, used, pairs):
        nonlocal best
        if best is not None and len(pairs) + (n - r) < -best[0]:
            return
        if r == n:
            key = (
                -len(pairs),
                math.fsum(cost[i][j] for i, j in pairs),
                list(pairs),
            )
            if best is None or key < best:
                best = key
            return
        for c in range(m):
            if feas[r][c] and c not in used:
                used.add(c)
                pairs.append((r, c))
                dfs(r + 1, used, pairs)
                pairs.pop()
                used.remove(c)
        dfs(r + 1, used, pairs)

    dfs(0, set(), [])
    return -best[0], best[1], [tuple(p) for p in best[2]]


def box_at(x, y, ex=0.016, ey=0.032, label="2x4", height=0.0096):
    return GroundBox3D(x, y, ex, ey, height, label)


# --- assign ------------------------------------------------------------

def test_empty_matrices_give_empty_result():
    for matrix in ([], [[]], [[], []]):
        res = assign(matrix, 5.0)
        assert res.pairs == ()
        assert res.total_cost == 0.0
    res = assign([[], [], []], 1.0)
    assert res.unmatched_expectations == (0, 1, 2)
    assert res.unmatched_detections == ()


def test_diagonal_preference():
    res = assign([[0.0, 9.0], [9.0, 0.0]], 5.0)
    assert res.pairs == ((0, 0), (1, 1))
    assert res.total_cost == 0.0
    assert res.unmatched_expectations == ()
    assert res.unmatched_detections == ()


def test_gate_forbids_expensive_pairs():
    res = assign([[10.0]], 5.0)
    assert res.pairs == ()
    assert res.unmatched_expectations == (0,)
    assert res.unmatched_detections == (0,)


def test_gate_boundary_is_inclusive():
    assert assign([[5.0]], 5.0).pairs == ((0, 0),)


def test_infinite_cost_is_never_paired_even_without_gate():
    res = assign([[math.inf, 1.0]], math.inf)
    assert res.pairs == ((0, 1),)


def test_cardinality_beats_cost():
    # Pairing both rows costs 10, pairing only row 0 costs 0; more pairs win.
    res = assign([[0.0, 5.0], [math.inf, 5.0]], math.inf)
    assert res.pairs == ((0, 0), (1, 1))


def test_lexicographic_tie_break_on_equal_costs():
    res = assign([[1.0, 1.0], [1.0, 1.0]], 5.0)
    assert res.pairs == ((0, 0), (1, 1))
    # Row 0 must take the lowest column even when costs tie across rows.
    res = assign([[2.0, 2.0, 2.0], [2.0, 2.0, 2.0]], 5.0)
    assert res.pairs == ((0, 0), (1, 1))


def test_tie_break_prefers_matching_lower_rows():
    # Only one column: both rows tie on cost; row 0 gets it.
    res = assign([[3.0], [3.0]], 5.0)
    assert res.pairs == ((0, 0),)
    assert res.unmatched_expectations == (1,)


def test_matches_oracle_on_random_float_matrices():
    rng = np.random.default_rng(101)
    for _ in range(120):
        n = int(rng.integers(0, 7))
        m = int(rng.integers(0, 7))
        cost = (rng.uniform(0.0, 10.0, size=(n, m))).tolist()
        gate = float(rng.uniform(2.0, 12.0))
        card, total, pairs = oracle_assign(cost, gate)
        res = assign(cost, gate)
        assert len(res.pairs) == card
        assert list(res.pairs) == pairs
        assert res.total_cost == total


def test_matches_oracle_on_tie_heavy_integer_matrices():
    rng = np.random.default_rng(103)
    for _ in range(120):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 7))
        cost = rng.integers(0, 4, size=(n, m)).astype(float).tolist()
        gate = float(rng.integers(1, 5))
        card, total, pairs = oracle_assign(cost, gate)
        res = assign(cost, gate)
        assert len(res.pairs) == card
        assert list(res.pairs) == pairs
        assert res.total_cost == total


def test_ungated_square_matches_classic_hungarian():
    rng = np.random.default_rng(107)
    for _ in range(40):
        n = int(rng.integers(1, 8))
        cost = rng.uniform(0.0, 1.0, size=(n, n))
        rows, cols = linear_sum_assignment(cost)
        res = assign(cost.tolist(), math.inf)
        assert res.pairs == tuple(zip(rows.tolist(), cols.tolist()))
        assert res.total_cost == pytest.approx(float(cost[rows, cols].sum()), abs=1e-12)


def test_permuting_rows_and_columns_permutes_pairs():
    rng = np.random.default_rng(109)
    for _ in range(30):
        n, m = 5, 6
        cost = rng.uniform(0.0, 10.0, size=(n, m))
        gate = 7.0
        base = assign(cost.tolist(), gate)
        prow = rng.permutation(n)
        pcol = rng.permutation(m)
        permuted = cost[np.ix_(prow, pcol)]
        res = assign(permuted.tolist(), gate)
        # Unique optimum almost surely: the pair sets must correspond.
        mapped = sorted((int(prow[r]), int(pcol[c])) for r, c in res.pairs)
        assert mapped == list(base.pairs)
        assert res.total_cost == pytest.approx(base.total_cost, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(
    st.integers(0, 5),
    st.integers(0, 5),
    st.floats(0.5, 10.0),
    st.integers(0, 2**32 - 1),
)
def test_assign_structural_invariants(n, m, gate, seed):
    rng = np.random.default_rng(seed)
    # Keep the ndarray: tolist() on a (0, m) shape would forget m.
    cost = rng.uniform(0.0, 10.0, size=(n, m))
    res = assign(cost, gate)
    rows = [r for r, _ in res.pairs]
    cols = [c for _, c in res.pairs]
    assert len(set(rows)) == len(rows)
    assert len(set(cols)) == len(cols)
    assert all(cost[r][c] <= gate for r, c in res.pairs)
    assert sorted(rows + list(res.unmatched_expectations)) == list(range(n))
    assert sorted(cols + list(res.unmatched_detections)) == list(range(m))
    assert res.total_cost == math.fsum(cost[r][c] for r, c in res.pairs)


# --- match_frame -------------------------------------------------------

def test_detection_in_target_footprint_matches():
    target = box_at(0.0, 0.0)
    det = box_at(0.004, -0.003)
    res = match_frame([det], [Expectation("2x4", target, 0.012)])
    assert res.pairs == ((0, 0),)


def test_wrong_class_at_exact_target_stays_unmatched():
    target = box_at(0.0, 0.0)
    det = box_at(0.0, 0.0, label="2x2")
    res = match_frame([det], [Expectation("2x4", target, 0.012)])
    assert res.pairs == ()
    assert res.unmatched_expectations == (0,)
    assert res.unmatched_detections == (0,)


def test_per_expectation_gates_differ():
    det = box_at(0.02, 0.0)
    strict = Expectation("2x4", box_at(0.0, 0.0), gate_m=0.012)
    loose = Expectation("2x4", box_at(0.0, 0.0), gate_m=0.024)
    assert match_frame([det], [strict]).pairs == ()
    assert match_frame([det], [loose]).pairs == ((0, 0),)


def test_match_frame_equals_class_constrained_oracle():
    rng = np.random.default_rng(113)
    classes = ["1x2", "2x2", "2x4"]
    for _ in range(60):
        dets = [
            box_at(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                   label=classes[rng.integers(3)])
            for _ in range(5)
        ]
        exps = [
            Expectation(
                classes[rng.integers(3)],
                box_at(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)),
                gate_m=float(rng.uniform(0.01, 0.1)),
            )
            for _ in range(3)
        ]
        cost = [
            [
                math.hypot(
                    d.center_x - e.box.center_x, d.center_y - e.box.center_y
                )
                if d.label == e.class_id
                and math.hypot(
                    d.center_x - e.box.center_x, d.center_y - e.box.center_y
                )
                <= e.gate_m
                else math.inf
                for d in dets
            ]
            for e in exps
        ]
        card, total, pairs = oracle_assign(cost, math.inf)
        res = match_frame(dets, exps)
        assert list(res.pairs) == pairs
        assert res.total_cost == total


def test_match_tracks_equals_whole_matrix_assignment():
    # match_tracks solves one subproblem per class; the result must be
    # indistinguishable from solving the full class-gated matrix.
    rng = np.random.default_rng(20)
    labels = ["2x2", "2x3", "2x4", "2x6"]
    for _ in range(120):
        tracks = [
            Track(
                t,
                labels[int(rng.integers(len(labels)))],
                box_at(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)),
                1,
                0,
                0,
            )
            for t in range(int(rng.integers(0, 7)))
        ]
        dets = [
            box_at(
                rng.uniform(-0.5, 0.5),
                rng.uniform(-0.5, 0.5),
                label=labels[int(rng.integers(len(labels)))],
            )
            for _ in range(int(rng.integers(0, 7)))
        ]
        gate = float(rng.uniform(0.05, 0.8))
        full = np.full((len(tracks), len(dets)), math.inf)
        for i, trk in enumerate(tracks):
            for j, det in enumerate(dets):
                if det.label == trk.class_id:
                    full[i, j] = math.hypot(
                        det.center_x - trk.ground_box.center_x,
                        det.center_y - trk.ground_box.center_y,
                    )
        assert match_tracks(tracks, dets, gate) == assign(full, gate)


def test_zero_rows_still_reports_every_unmatched_detection():
    # A zero-row cost matrix must not swallow the column count; fresh
    # sessions rely on this to spawn their first tracks.
    dets = [box_at(0.0, 0.0), box_at(0.1, 0.0, label="2x2")]
    res = match_tracks([], dets, 0.024)
    assert res.unmatched_detections == (0, 1)
    res = match_frame(dets, [])
    assert res.unmatched_detections == (0, 1)
    assert res.pairs == ()


# --- update_tracks -----------------------------------------------------

def make_track(tid=0, x=0.0, y=0.0, hits=1, misses=0, label="2x4", frame=0):
    return Track(tid, label, box_at(x, y, label=label), hits, misses, frame)


def test_alpha_one_adopts_latest_observation():
    trk = make_track(x=0.0, y=0.0)
    obs = box_at(0.05, -0.02)
    out = update_tracks([trk], [obs], match_tracks([trk], [obs], 1.0), 1,
                        smoothing_alpha=1.0)
    assert out[0].ground_box.center_x == pytest.approx(0.05)
    assert out[0].ground_box.center_y == pytest.approx(-0.02)
    assert out[0].hits == 2
    assert out[0].misses == 0
    assert out[0].last_frame == 1


def test_constant_observation_is_a_fixed_point():
    trk = make_track(x=0.03, y=0.01)
    obs = box_at(0.03, 0.01)
    out = [trk]
    for frame in range(1, 6):
        out = update_tracks(out, [obs], match_tracks(out, [obs], 1.0), frame,
                            smoothing_alpha=0.4)
    assert out[0].ground_box.center_x == pytest.approx(0.03)
    assert out[0].ground_box.center_y == pytest.approx(0.01)
    assert out[0].hits == 6


def test_alternating_observations_follow_closed_form_ema():
    alpha = 0.5
    a, b = 0.0, 0.01
    trk = make_track(x=a, y=0.0)
    xs = [a]
    out = [trk]
    for frame in range(1, 12):
        obs_x = a if frame % 2 == 0 else b
        obs = box_at(obs_x, 0.0)
        out = update_tracks(out, [obs], match_tracks(out, [obs], 1.0), frame,
                            smoothing_alpha=alpha)
        # Closed form: x_n = alpha * sum (1-alpha)^i obs_{n-i} + (1-alpha)^n x_0.
        expected = alpha * sum(
            (1 - alpha) ** i * (a if (frame - i) % 2 == 0 else b)
            for i in range(frame)
        ) + (1 - alpha) ** frame * a
        xs.append(expected)
        assert out[0].ground_box.center_x == pytest.approx(expected, abs=1e-15)
    # The tail oscillates around the midpoint.
    assert abs((xs[-1] + xs[-2]) / 2 - (a + b) / 2) < 1e-3


def test_missed_track_ages_and_drops_after_lapse():
    trk = make_track(hits=7)
    out = [trk]
    empty = match_tracks(out, [], 1.0)
    for _ in range(3):
        out = update_tracks(out, [], match_tracks(out, [], 1.0), 1,
                            lapse_frames=3)
    assert out[0].misses == 3
    assert out[0].hits == 0
    out = update_tracks(out, [], match_tracks(out, [], 1.0), 2, lapse_frames=3)
    assert out == []
    assert empty.pairs == ()


def test_frame_increments_hits_or_misses_never_both():
    trk = make_track(hits=2, misses=0)
    obs = box_at(0.0, 0.0)
    matched = update_tracks([trk], [obs], match_tracks([trk], [obs], 1.0), 1)[0]
    assert (matched.hits, matched.misses) == (3, 0)
    missed = update_tracks([trk], [], match_tracks([trk], [], 1.0), 1)[0]
    assert (missed.hits, missed.misses) == (0, 1)


def test_unmatched_detections_spawn_sequential_ids():
    trk = make_track(tid=4, x=0.0)
    far = box_at(0.5, 0.5)
    farther = box_at(-0.5, -0.5)
    near = box_at(0.001, 0.0)
    dets = [far, near, farther]
    res = match_tracks([trk], dets, 0.012)
    out = update_tracks([trk], dets, res, 3, id_start=7)
    assert [t.track_id for t in out] == [4, 7, 8]
    assert all(t.hits == 1 and t.last_frame == 3 for t in out[1:])


def test_update_rejects_bad_alpha():
    with pytest.raises(ValueError):
        update_tracks([], [], assign([], 1.0), 0, smoothing_alpha=0.0)


# --- step_complete -----------------------------------------------------

PLAN_2X4 = parse_plan("PLAN t\nPART 2x4 0 0 0 0\n")
STEP_2X4 = compile_steps(PLAN_2X4)[0]
TARGET = placement_target_box(PLAN_2X4, STEP_2X4.placement)
CFG = CompletionConfig()


def track_at(x, y, hits, label="2x4", ex=0.016, ey=0.032):
    return Track(0, label, GroundBox3D(x, y, ex, ey, 0.0096, label), hits, 0, 0)


def test_target_box_spans_footprint_cells():
    assert TARGET.center_x == pytest.approx(0.008)
    assert TARGET.center_y == pytest.approx(0.016)
    assert TARGET.extent_x == pytest.approx(0.016)
    assert TARGET.extent_y == pytest.approx(0.032)
    rotated = placement_target_box(
        PLAN_2X4, Placement("2x4", 0, 0, 0, 90), origin_xy=(0.1, 0.2)
    )
    assert rotated.extent_x == pytest.approx(0.032)
    assert rotated.extent_y == pytest.approx(0.016)
    assert rotated.center_x == pytest.approx(0.1 + 0.016)


def test_perfect_track_with_confirm_frames_completes():
    trk = track_at(TARGET.center_x, TARGET.center_y, hits=CFG.confirm_frames)
    assert step_complete(STEP_2X4, PLAN_2X4, [trk], CFG)


def test_one_hit_short_of_confirmation_fails():
    trk = track_at(TARGET.center_x, TARGET.center_y, hits=CFG.confirm_frames - 1)
    assert not step_complete(STEP_2X4, PLAN_2X4, [trk], CFG)


def test_wrong_class_never_completes():
    trk = track_at(TARGET.center_x, TARGET.center_y, hits=99, label="2x2")
    assert not step_complete(STEP_2X4, PLAN_2X4, [trk], CFG)


def test_center_distance_boundary():
    # Offsets run along the 32 mm side so the overlap condition stays met
    # and only the center distance flips the decision.
    inside = track_at(TARGET.center_x, TARGET.center_y + 0.0119, hits=9)
    outside = track_at(TARGET.center_x, TARGET.center_y + 0.0121, hits=9)
    assert step_complete(STEP_2X4, PLAN_2X4, [inside], CFG)
    assert not step_complete(STEP_2X4, PLAN_2X4, [outside], CFG)


def test_low_overlap_blocks_completion_despite_center():
    # 12 mm sideways on a 16 mm footprint leaves 25% overlap: reject.
    trk = track_at(TARGET.center_x + 0.012, TARGET.center_y, hits=9)
    assert not step_complete(STEP_2X4, PLAN_2X4, [trk], CFG)


def test_origin_offset_moves_the_target():
    trk = track_at(-0.3 + TARGET.center_x, 0.1 + TARGET.center_y, hits=9)
    assert step_complete(STEP_2X4, PLAN_2X4, [trk], CFG, origin_xy=(-0.3, 0.1))
    assert not step_complete(STEP_2X4, PLAN_2X4, [trk], CFG)


def test_completion_monotone_in_hits_and_center_distance():
    for hits in range(1, 10):
        for off in np.linspace(0.0, 0.02, 9):
            trk = track_at(TARGET.center_x + off, TARGET.center_y, hits=hits)
            done = step_complete(STEP_2X4, PLAN_2X4, [trk], CFG)
            if done:
                closer = track_at(TARGET.center_x + off / 2, TARGET.center_y,
                                  hits=hits + 1)
                assert step_complete(STEP_2X4, PLAN_2X4, [closer], CFG)


def test_decision_matches_analytic_thresholds_under_pixel_jitter():
    # Top-down camera 1 m up, 90 degree HFOV, 640 px: one pixel spans
    # 1/320 m on the plane.  Jitter the projected box edges, lift by the
    # same linear map, and check the decision against direct thresholding.
    rng = np.random.default_rng(127)
    scale = 1.0 / 320.0
    agreements = 0
    for _ in range(1000):
        jitter = rng.normal(0.0, 2.0, size=4)
        x0 = (TARGET.center_x - TARGET.extent_x / 2) + jitter[0] * scale
        x1 = (TARGET.center_x + TARGET.extent_x / 2) + jitter[1] * scale
        y0 = (TARGET.center_y - TARGET.extent_y / 2) + jitter[2] * scale
        y1 = (TARGET.center_y + TARGET.extent_y / 2) + jitter[3] * scale
        if x1 <= x0 or y1 <= y0:
            continue
        box = GroundBox3D((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0,
                          0.0096, "2x4")
        trk = Track(0, "2x4", box, hits=CFG.confirm_frames, misses=0,
                    last_frame=0)
        got = step_complete(STEP_2X4, PLAN_2X4, [trk], CFG)
        dist = math.hypot(box.center_x - TARGET.center_x,
                          box.center_y - TARGET.center_y)
        ix = min(x1, TARGET.center_x + TARGET.extent_x / 2) - max(
            x0, TARGET.center_x - TARGET.extent_x / 2)
        iy = min(y1, TARGET.center_y + TARGET.extent_y / 2) - max(
            y0, TARGET.center_y - TARGET.extent_y / 2)
        inter = max(ix, 0.0) * max(iy, 0.0)
        expect = (
            dist <= CFG.center_tolerance_m
            and inter / (TARGET.extent_x * TARGET.extent_y)
            >= CFG.overlap_threshold
        )
        assert got == expect
        agreements += 1
    # About 3.5% of trials collapse to degenerate boxes and are skipped.
    assert agreements > 940
