"""Maximal singularity-free cubes in joint space.

The clearance of a joint vector is its Chebyshev (L-infinity) distance to
the nearest sampled singular point, capped by the distance to the boundary
of the swept domain so that unsampled space is never declared safe.  A
Hooke-Jeeves pattern search moves the cube centre to a local maximum of the
clearance; the resulting cube, shrunk by a security margin, gives the joint
limits.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from rprbox.kinematics import JointVector
from rprbox.singularity import SingularityCloud, SingularPoint

Bounds = Sequence[tuple[float, float]]


class BoxSearchError(ValueError):
    pass


class BoxDegenerateError(BoxSearchError):
    """The security margin is at least as large as the optimised clearance."""


@dataclass(frozen=True)
class HJParams:
    initial_step: float = 1.0
    reduction: float = 0.5
    min_step: float = 0.125
    max_iters: int = 10000

    def __post_init__(self) -> None:
        if not self.min_step > 0:
            raise BoxSearchError("min_step must be positive")
        if not self.initial_step >= self.min_step:
            raise BoxSearchError("initial_step must be >= min_step")
        if not 0 < self.reduction < 1:
            raise BoxSearchError("reduction must lie in (0, 1)")
        if self.max_iters < 1:
            raise BoxSearchError("max_iters must be >= 1")


@dataclass(frozen=True)
class BoxQuery:
    center0: JointVector
    domain: tuple[tuple[float, float], ...]
    security: float = 0.1
    optimizer: HJParams = field(default_factory=HJParams)

    def __post_init__(self) -> None:
        object.__setattr__(self, "center0", JointVector(*(float(v) for v in self.center0)))
        object.__setattr__(self, "domain", tuple((float(lo), float(hi)) for lo, hi in self.domain))
        if len(self.domain) != 3 or any(not hi > lo for lo, hi in self.domain):
            raise BoxSearchError(f"invalid domain {self.domain}")
        if not self.security >= 0:
            raise BoxSearchError("security margin must be >= 0")
        if not all(lo < c < hi for c, (lo, hi) in zip(self.center0, self.domain)):
            raise BoxSearchError(f"center {tuple(self.center0)} is not strictly inside {self.domain}")


class Witness(NamedTuple):
    """What bounds the clearance: a cloud point, or a face of the domain."""

    kind: str  # "cloud" or "boundary"
    joints: tuple[float, float, float]
    point: SingularPoint | None = None
    index: int = -1
    axis: int = -1


class Clearance(NamedTuple):
    distance: float
    witness: Witness


class TraceEntry(NamedTuple):
    iteration: int
    step: float
    center: tuple[float, float, float]
    value: float
    move: str


@dataclass
class SingularityFreeBox:
    center: JointVector
    d_min: float
    edge: float
    security: float
    limits: tuple[tuple[float, float], ...]
    witness: Witness
    cloud_fingerprint: str = ""
    center0: JointVector | None = None
    initial_clearance: float | None = None
    trace: list[TraceEntry] = field(default_factory=list)

    @property
    def half_width(self) -> float:
        return self.d_min - self.security


def chebyshev_distance(p: Sequence[float], q: Sequence[float]) -> float:
    return max(abs(a - b) for a, b in zip(p, q))


def _boundary_clearance(center: np.ndarray, domain: Bounds) -> tuple[float, int, float]:
    best, axis, face = math.inf, -1, math.nan
    for i, (lo, hi) in enumerate(domain):
        for bound in (lo, hi):
            dist = abs(center[i] - bound)
            if dist < best:
                best, axis, face = dist, i, bound
    return best, axis, face


def min_clearance(cloud: SingularityCloud | np.ndarray, center: Sequence[float], domain: Bounds) -> Clearance:
    """Chebyshev clearance of ``center`` to the cloud and the domain boundary.

    ``cloud`` may be a :class:`SingularityCloud` or an (n, >=3) array whose
    first three columns are joint coordinates.  Ties go to the cloud.

    Raises:
        BoxSearchError: if ``center`` lies outside ``domain``.
    """
    c = np.asarray(center, dtype=float)
    if not all(lo <= v <= hi for v, (lo, hi) in zip(c, domain)):
        raise BoxSearchError(f"center {tuple(c)} lies outside the domain {tuple(domain)}")
    pts = cloud.points if isinstance(cloud, SingularityCloud) else np.asarray(cloud, dtype=float)
    b_dist, axis, face = _boundary_clearance(c, domain)
    if len(pts):
        dist = np.max(np.abs(pts[:, :3] - c), axis=1)
        idx = int(np.argmin(dist))
        if dist[idx] <= b_dist:
            row = pts[idx]
            point = SingularPoint(*(float(v) for v in row)) if row.shape[0] == 5 else None
            joints = tuple(float(v) for v in row[:3])
            return Clearance(float(dist[idx]), Witness("cloud", joints, point, idx))
    if not math.isfinite(b_dist):
        raise BoxSearchError("empty cloud and unbounded domain")
    joints = tuple(face if i == axis else float(c[i]) for i in range(3))
    return Clearance(float(b_dist), Witness("boundary", joints, axis=axis))


def _pt(x: np.ndarray) -> tuple[float, float, float]:
    return (float(x[0]), float(x[1]), float(x[2]))


def hooke_jeeves_maximize(
    cloud: SingularityCloud | np.ndarray, query: BoxQuery
) -> tuple[JointVector, float, list[TraceEntry]]:
    """Pattern search for a local maximum of the clearance.

    Exploratory moves try ``+step`` then ``-step`` along rho1, rho2, rho3 in
    turn and keep the first strict improvement per axis.  A successful
    exploration is followed by pattern moves along the last displacement for
    as long as they keep improving; a failed exploration multiplies the step
    by ``reduction``.  Stops when the step drops below ``min_step`` or after
    ``max_iters`` explorations.  Ties count as failures.
    """
    pts = cloud.points if isinstance(cloud, SingularityCloud) else np.asarray(cloud, dtype=float)
    pts = np.ascontiguousarray(pts[:, :3])
    domain = query.domain
    params = query.optimizer

    def objective(x: np.ndarray) -> float:
        if not all(lo <= v <= hi for v, (lo, hi) in zip(x, domain)):
            return -math.inf
        return min_clearance(pts, x, domain).distance

    def explore(x: np.ndarray, fx: float, step: float) -> tuple[np.ndarray, float]:
        x = x.copy()
        for i in range(3):
            for delta in (step, -step):
                y = x.copy()
                y[i] += delta
                fy = objective(y)
                if fy > fx:
                    x, fx = y, fy
                    break
        return x, fx

    base = np.array(query.center0, dtype=float)
    f_base = objective(base)
    step = params.initial_step
    trace = [TraceEntry(0, step, _pt(base), f_base, "start")]
    iters = 0
    while step >= params.min_step and iters < params.max_iters:
        iters += 1
        x, fx = explore(base, f_base, step)
        if not fx > f_base:
            step *= params.reduction
            trace.append(TraceEntry(iters, step, _pt(base), f_base, "reduce"))
            continue
        trace.append(TraceEntry(iters, step, _pt(x), fx, "explore"))
        while iters < params.max_iters:
            iters += 1
            pattern = x + (x - base)
            base, f_base = x, fx
            x, fx = explore(pattern, objective(pattern), step)
            if not fx > f_base:
                break
            trace.append(TraceEntry(iters, step, _pt(x), fx, "pattern"))
    center = JointVector(*(float(v) for v in base))
    return center, float(f_base), trace


def joint_limits(center: Sequence[float], d_min: float, security: float) -> tuple[tuple[float, float], ...]:
    """Per-joint ``(min, max)`` of the cube shrunk by the security margin."""
    half = d_min - security
    return tuple((c - half, c + half) for c in center)


def build_box(cloud: SingularityCloud | np.ndarray, query: BoxQuery) -> SingularityFreeBox:
    """Optimise the cube centre, then derive edge length and joint limits.

    Raises:
        BoxDegenerateError: if the optimised clearance does not exceed the
            security margin.
    """
    pts = cloud.points if isinstance(cloud, SingularityCloud) else np.asarray(cloud, dtype=float)
    initial = min_clearance(pts, query.center0, query.domain).distance
    center, d_min, trace = hooke_jeeves_maximize(pts, query)
    if not d_min > query.security:
        raise BoxDegenerateError(
            f"security margin {query.security} swallows the cube (d_min = {d_min:.6g})"
        )
    witness = min_clearance(pts, center, query.domain).witness
    limits = joint_limits(center, d_min, query.security)
    fingerprint = cloud.fingerprint() if isinstance(cloud, SingularityCloud) else ""
    return SingularityFreeBox(
        center=center,
        d_min=d_min,
        edge=2.0 * d_min,
        security=query.security,
        limits=limits,
        witness=witness,
        cloud_fingerprint=fingerprint,
        center0=query.center0,
        initial_clearance=initial,
        trace=trace,
    )


def box_report(box: SingularityFreeBox, query: BoxQuery, extra: dict | None = None) -> dict:
    """Plain-data report of a box, suitable for JSON."""
    moves = {}
    for entry in box.trace:
        moves[entry.move] = moves.get(entry.move, 0) + 1
    witness = box.witness._asdict()
    witness["point"] = None if box.witness.point is None else box.witness.point._asdict()
    witness["joints"] = list(witness["joints"])
    report = {
        "center0": list(query.center0),
        "domain": [list(b) for b in query.domain],
        "optimizer": asdict(query.optimizer),
        "initial_clearance": box.initial_clearance,
        "trace_summary": {
            "iterations": box.trace[-1].iteration if box.trace else 0,
            "moves": dict(sorted(moves.items())),
            "values": [e.value for e in box.trace if e.move in ("start", "explore", "pattern")],
        },
        "center": list(box.center),
        "d_min": box.d_min,
        "security": box.security,
        "half_width": box.half_width,
        "edge": box.edge,
        "limits": {f"rho{i + 1}": list(lim) for i, lim in enumerate(box.limits)},
        "witness": witness,
        "cloud_fingerprint": box.cloud_fingerprint,
    }
    if extra:
        report.update(extra)
    return report


def box_from_report(report: dict) -> SingularityFreeBox:
    w = report["witness"]
    point = SingularPoint(**w["point"]) if w.get("point") else None
    witness = Witness(w["kind"], tuple(w["joints"]), point, w.get("index", -1), w.get("axis", -1))
    return SingularityFreeBox(
        center=JointVector(*report["center"]),
        d_min=float(report["d_min"]),
        edge=float(report["edge"]),
        security=float(report["security"]),
        limits=tuple(tuple(report["limits"][f"rho{i}"]) for i in (1, 2, 3)),
        witness=witness,
        cloud_fingerprint=report.get("cloud_fingerprint", ""),
        center0=JointVector(*report["center0"]) if "center0" in report else None,
        initial_clearance=report.get("initial_clearance"),
    )
