"""Detection-to-expectation matching, track smoothing, and step completion.

The assignment core is a successive-shortest-path Hungarian variant over
the bipartite graph of rows (expectations) and columns (detections).  Edges
above the gate or with non-finite cost are absent, so the solver maximizes
match cardinality first and minimizes total cost second, which is exactly
the behavior a brute-force permutation search with the same gate exhibits.
Among equal-cost optima the lexicographically smallest pair list (by row,
then column) is returned so results are reproducible across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import GroundBox3D
from .plan import AssemblyPlan, Placement, Step

DEFAULT_CENTER_TOLERANCE_M = 0.012  # 1.5 x 8 mm pitch
DEFAULT_SUPPLY_GATE_M = 0.024  # 3 x pitch: supply parts only need coarse anchoring
DEFAULT_SMOOTHING_ALPHA = 0.4


@dataclass(frozen=True)
class CompletionConfig:
    """Thresholds for deciding that the active step's brick is in place."""

    center_tolerance_m: float = DEFAULT_CENTER_TOLERANCE_M
    overlap_threshold: float = 0.5
    confirm_frames: int = 5
    lapse_frames: int = 10

    def __post_init__(self) -> None:
        if self.center_tolerance_m <= 0:
            raise ValueError("center_tolerance_m must be positive")
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise ValueError("overlap_threshold must be in (0, 1]")
        if self.confirm_frames < 1 or self.lapse_frames < 1:
            raise ValueError("confirm_frames and lapse_frames must be >= 1")


@dataclass(frozen=True)
class MatchResult:
    """A partial injective row-to-column mapping and its summed cost."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_expectations: tuple[int, ...]
    unmatched_detections: tuple[int, ...]
    total_cost: float


@dataclass(frozen=True)
class Expectation:
    """Where a part of a given class should appear, with its match gate."""

    class_id: str
    box: GroundBox3D
    gate_m: float


@dataclass(frozen=True)
class Track:
    """A temporally smoothed detection.

    hits counts consecutive matched frames and misses consecutive unmatched
    ones; a frame increments exactly one of the two.
    """

    track_id: int
    class_id: str
    ground_box: GroundBox3D
    hits: int
    misses: int
    last_frame: int


def _feasible(cost: float, gate: float) -> bool:
    return math.isfinite(cost) and cost <= gate


def _ssp_solve(
    cost: list[list[float]],
    feas: list[list[bool]],
    rows: list[int],
    cols: list[int],
) -> dict[int, int]:
    """Min-cost maximum matching on the feasible edges of a submatrix.

    Successive shortest augmenting paths with node potentials; each phase
    runs a multi-source Dijkstra from every free row, so every prefix of
    the augmentation sequence is cost-optimal for its cardinality.
    Returns {row: col} over original indices.
    """
    if not rows or not cols:
        return {}
    # Shift costs so Dijkstra sees non-negative edges; a uniform shift
    # changes every k-cardinality total by the same amount, preserving
    # both the cardinality ranking and the argmin within it.
    feasible_costs = [
        cost[r][c] for r in rows for c in cols if feas[r][c]
    ]
    if not feasible_costs:
        return {}
    shift = min(feasible_costs)
    if shift > 0.0:
        shift = 0.0

    n, m = len(rows), len(cols)
    w = [[cost[rows[i]][cols[j]] - shift for j in range(m)] for i in range(n)]
    ok = [[feas[rows[i]][cols[j]] for j in range(m)] for i in range(n)]

    row_match = [-1] * n
    col_match = [-1] * m
    pi_r = [0.0] * n
    pi_c = [0.0] * m
    inf = math.inf

    while True:
        dist_r = [inf] * n
        dist_c = [inf] * m
        parent_c = [-1] * m
        parent_r = [-1] * n
        done_r = [False] * n
        done_c = [False] * m
        for i in range(n):
            if row_match[i] == -1:
                dist_r[i] = 0.0

        target = -1
        target_dist = inf
        while True:
            best = inf
            node = -1
            is_row = True
            for i in range(n):
                if not done_r[i] and dist_r[i] < best:
                    best, node, is_row = dist_r[i], i, True
            for j in range(m):
                if not done_c[j] and dist_c[j] < best:
                    best, node, is_row = dist_c[j], j, False
            if node == -1:
                break
            if is_row:
                done_r[node] = True
                base = dist_r[node] + pi_r[node]
                for j in range(m):
                    if done_c[j] or not ok[node][j] or row_match[node] == j:
                        continue
                    nd = base + w[node][j] - pi_c[j]
                    if nd < dist_c[j]:
                        dist_c[j] = nd
                        parent_c[j] = node
            else:
                if col_match[node] == -1:
                    target, target_dist = node, dist_c[node]
                    break
                done_c[node] = True
                i = col_match[node]
                nd = dist_c[node] - w[i][node] + pi_c[node] - pi_r[i]
                if nd < dist_r[i]:
                    dist_r[i] = nd
                    parent_r[i] = node

        if target == -1:
            break

        for i in range(n):
            pi_r[i] += min(dist_r[i], target_dist)
        for j in range(m):
            pi_c[j] += min(dist_c[j], target_dist)

        j = target
        while j != -1:
            i = parent_c[j]
            prev = parent_r[i]
            row_match[i] = j
            col_match[j] = i
            j = prev

    return {rows[i]: cols[row_match[i]] for i in range(n) if row_match[i] != -1}


def _pairs_total(cost: list[list[float]], match: dict[int, int]) -> float:
    return math.fsum(cost[r][c] for r, c in sorted(match.items()))


def assign(cost_matrix, gate: float) -> MatchResult:
    """Optimal gated one-to-one assignment of rows to columns.

    Pairs whose cost exceeds ``gate`` (or is non-finite) are forbidden.
    Among all assignments the result maximizes pair count, then minimizes
    total cost, then takes the lexicographically smallest pair list.
    """
    a = np.asarray(cost_matrix, dtype=float)
    if a.ndim != 2:
        if a.size == 0:
            a = a.reshape(0, 0)
        else:
            raise ValueError("cost_matrix must be 2-dimensional")
    n, m = a.shape
    cost = a.tolist()
    feas = [[_feasible(cost[r][c], gate) for c in range(m)] for r in range(n)]

    base = _ssp_solve(cost, feas, list(range(n)), list(range(m)))
    want_card = len(base)
    want_total = _pairs_total(cost, base)

    # Canonicalize: fix rows in ascending order to their smallest column
    # that still admits an optimum, reusing the current witness to skip
    # solves for columns at or past the witness's choice.
    fixed: dict[int, int] = {}
    fixed_cols: set[int] = set()
    witness = dict(base)
    for r in range(n):
        wc = witness.get(r, -1)
        chosen = -1
        for c in range(m):
            if not feas[r][c] or c in fixed_cols:
                continue
            if c == wc:
                chosen = c
                break
            sub_rows = list(range(r + 1, n))
            sub_cols = [j for j in range(m) if j != c and j not in fixed_cols]
            sub = _ssp_solve(cost, feas, sub_rows, sub_cols)
            candidate = dict(fixed)
            candidate[r] = c
            candidate.update(sub)
            if len(candidate) == want_card and _pairs_total(cost, candidate) == want_total:
                chosen = c
                witness = candidate
                break
        if chosen != -1:
            fixed[r] = chosen
            fixed_cols.add(chosen)

    pairs = tuple(sorted(fixed.items()))
    matched_rows = {r for r, _ in pairs}
    matched_cols = {c for _, c in pairs}
    return MatchResult(
        pairs=pairs,
        unmatched_expectations=tuple(r for r in range(n) if r not in matched_rows),
        unmatched_detections=tuple(c for c in range(m) if c not in matched_cols),
        total_cost=_pairs_total(cost, fixed),
    )


def _center_distance(a: GroundBox3D, b: GroundBox3D) -> float:
    return math.hypot(a.center_x - b.center_x, a.center_y - b.center_y)


def match_frame(
    detections: Sequence[GroundBox3D], expectations: Sequence[Expectation]
) -> MatchResult:
    """Match lifted detections to expectations by plane-center distance.

    A class mismatch costs +inf (a wrong part must never satisfy a step)
    and each expectation applies its own gate, so placement targets can be
    strict while supply regions stay loose.  Rows of the result index
    ``expectations``, columns index ``detections``.
    """
    n, m = len(expectations), len(detections)
    # Explicit shape for the zero-expectation case (see match_tracks).
    cost = np.full((n, m), math.inf)
    for i, exp in enumerate(expectations):
        for j, det in enumerate(detections):
            if det.label != exp.class_id:
                continue
            d = _center_distance(det, exp.box)
            if d <= exp.gate_m:
                cost[i, j] = d
    return assign(cost, math.inf)


def match_tracks(
    tracks: Sequence[Track], detections: Sequence[GroundBox3D], gate_m: float
) -> MatchResult:
    """Associate existing tracks (rows) with new detections (columns).

    Cross-class pairs are forbidden, so the assignment decomposes into one
    independent subproblem per class.  Solving per class returns exactly
    the whole-matrix result (pairs, tie-breaks, and total) while scaling
    with the largest class instead of the whole frame.
    """
    by_class: dict[str, tuple[list[int], list[int]]] = {}
    for i, trk in enumerate(tracks):
        by_class.setdefault(trk.class_id, ([], []))[0].append(i)
    for j, det in enumerate(detections):
        if det.label in by_class:
            by_class[det.label][1].append(j)

    pairs: list[tuple[int, int]] = []
    pair_costs: list[float] = []
    for _, (rows, cols) in sorted(by_class.items()):
        if not cols:
            continue
        cost = np.empty((len(rows), len(cols)))
        for a, i in enumerate(rows):
            for b, j in enumerate(cols):
                cost[a, b] = _center_distance(detections[j], tracks[i].ground_box)
        res = assign(cost, gate_m)
        for a, b in res.pairs:
            pairs.append((rows[a], cols[b]))
            pair_costs.append(float(cost[a, b]))

    pairs.sort()
    matched_rows = {r for r, _ in pairs}
    matched_cols = {c for _, c in pairs}
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_expectations=tuple(
            i for i in range(len(tracks)) if i not in matched_rows
        ),
        unmatched_detections=tuple(
            j for j in range(len(detections)) if j not in matched_cols
        ),
        total_cost=math.fsum(pair_costs),
    )


def _ema_box(old: GroundBox3D, obs: GroundBox3D, alpha: float) -> GroundBox3D:
    def mix(a: float, b: float) -> float:
        return alpha * b + (1.0 - alpha) * a

    return GroundBox3D(
        center_x=mix(old.center_x, obs.center_x),
        center_y=mix(old.center_y, obs.center_y),
        extent_x=mix(old.extent_x, obs.extent_x),
        extent_y=mix(old.extent_y, obs.extent_y),
        height=obs.height,
        label=old.label,
    )


def update_tracks(
    tracks: Sequence[Track],
    detections: Sequence[GroundBox3D],
    matched: MatchResult,
    frame: int,
    smoothing_alpha: float = DEFAULT_SMOOTHING_ALPHA,
    lapse_frames: int = 10,
    id_start: int = 0,
) -> list[Track]:
    """Advance the track list by one frame of associations.

    Matched tracks blend toward the observation by EMA and reset misses;
    unmatched tracks reset hits and age; tracks older than lapse_frames
    misses are dropped; unmatched detections spawn tracks with ids
    id_start, id_start + 1, ... in detection order.
    """
    if not 0.0 < smoothing_alpha <= 1.0:
        raise ValueError("smoothing_alpha must be in (0, 1]")
    by_row = dict(matched.pairs)
    out: list[Track] = []
    for i, trk in enumerate(tracks):
        j = by_row.get(i)
        if j is None:
            if trk.misses + 1 > lapse_frames:
                continue
            out.append(replace(trk, hits=0, misses=trk.misses + 1))
        else:
            out.append(
                replace(
                    trk,
                    ground_box=_ema_box(trk.ground_box, detections[j], smoothing_alpha),
                    hits=trk.hits + 1,
                    misses=0,
                    last_frame=frame,
                )
            )
    for k, j in enumerate(matched.unmatched_detections):
        det = detections[j]
        out.append(
            Track(
                track_id=id_start + k,
                class_id=det.label,
                ground_box=det,
                hits=1,
                misses=0,
                last_frame=frame,
            )
        )
    return out


def placement_target_box(
    plan: AssemblyPlan,
    placement: Placement,
    origin_xy: tuple[float, float] = (0.0, 0.0),
) -> GroundBox3D:
    """The world-frame footprint rectangle a placement should occupy.

    ``origin_xy`` anchors cell (0, 0)'s minimum corner in the workspace.
    """
    brick = plan.brick(placement.type_id)
    w, d = placement.footprint(brick)
    pitch = plan.grid.pitch_m
    ex, ey = w * pitch, d * pitch
    return GroundBox3D(
        center_x=origin_xy[0] + placement.cell_x * pitch + ex / 2.0,
        center_y=origin_xy[1] + placement.cell_y * pitch + ey / 2.0,
        extent_x=ex,
        extent_y=ey,
        height=brick.height_layers * plan.grid.layer_height_m,
        label=placement.type_id,
    )


def _overlap_ratio(box: GroundBox3D, target: GroundBox3D) -> float:
    ix = min(box.center_x + box.extent_x / 2, target.center_x + target.extent_x / 2) - max(
        box.center_x - box.extent_x / 2, target.center_x - target.extent_x / 2
    )
    iy = min(box.center_y + box.extent_y / 2, target.center_y + target.extent_y / 2) - max(
        box.center_y - box.extent_y / 2, target.center_y - target.extent_y / 2
    )
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    return (ix * iy) / (target.extent_x * target.extent_y)


def step_complete(
    step: Step,
    plan: AssemblyPlan,
    tracks: Sequence[Track],
    cfg: CompletionConfig,
    origin_xy: tuple[float, float] = (0.0, 0.0),
) -> bool:
    """Whether some confirmed track shows the step's brick in place.

    Requires class identity, hits >= confirm_frames, center within
    center_tolerance_m of the target footprint center, and footprint
    overlap (intersection / target area) >= overlap_threshold.
    """
    target = placement_target_box(plan, step.placement, origin_xy)
    for trk in tracks:
        if trk.class_id != step.placement.type_id:
            continue
        if trk.hits < cfg.confirm_frames:
            continue
        if _center_distance(trk.ground_box, target) > cfg.center_tolerance_m:
            continue
        if _overlap_ratio(trk.ground_box, target) < cfg.overlap_threshold:
            continue
        return True
    return False
