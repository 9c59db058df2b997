"""Joint-space singularity surface of the 3-RPR manipulator, slice by slice.

The parallel-singularity condition in the leg angles,

    a2x * s2 * s31 + (a3x * s3 - a3y * c3) * s12 = 0,

is rewritten in terms of ``(rho1, alpha, theta1)`` by eliminating the other
leg angles through the loop-closure equations.  For a fixed ``rho1`` the
zero set in the ``(theta1, alpha)`` torus is traced by scanning one variable
and bracketing sign changes in the other; each root maps to one point
``(rho1, rho2, rho3)`` of the singularity surface.

Note: the closed forms for ``rho2`` and ``rho3`` used here are derived
directly from the closure equations (``rho_i = |Bi - Ai|``).
"""

from __future__ import annotations

import hashlib
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple

import numpy as np

from rprbox._roots import bisect, golden_min, sign_change_cells
from rprbox.kinematics import (
    EPS_LEN,
    TWO_PI,
    DegenerateLegError,
    LegAngles,
    Pose,
    leg_angles,
    wrap_angle,
)
from rprbox.model import ManipulatorGeometry

POINT_COLUMNS = ("rho1", "rho2", "rho3", "alpha", "theta1")


class SingularPoint(NamedTuple):
    rho1: float
    rho2: float
    rho3: float
    alpha: float
    theta1: float

    @property
    def joints(self) -> tuple[float, float, float]:
        return (self.rho1, self.rho2, self.rho3)


@dataclass(frozen=True)
class SliceSpec:
    rho1: float
    n_theta1: int = 720
    n_alpha: int = 720
    tol_root: float = 1e-10
    rho_bounds: tuple[float, float] = (1e-9, 60.0)
    scan: str = "theta1"
    eps_len: float = EPS_LEN

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rho1) and self.rho1 >= 0):
            raise ValueError(f"rho1 must be finite and non-negative, got {self.rho1}")
        if self.n_theta1 < 8 or self.n_alpha < 8:
            raise ValueError("grid counts must be >= 8")
        lo, hi = self.rho_bounds
        if not (hi > lo >= 0):
            raise ValueError(f"invalid rho_bounds {self.rho_bounds}")
        if self.scan not in ("theta1", "alpha"):
            raise ValueError("scan must be 'theta1' or 'alpha'")
        if not self.tol_root > 0:
            raise ValueError("tol_root must be positive")


@dataclass(frozen=True)
class SweepSpec:
    rho1_start: float
    rho1_end: float
    rho1_step: float = 0.5
    slice: SliceSpec = field(default_factory=lambda: SliceSpec(rho1=0.0))

    def __post_init__(self) -> None:
        if not (self.rho1_step > 0 and math.isfinite(self.rho1_step)):
            raise ValueError("rho1_step must be positive")
        if not (self.rho1_end > self.rho1_start >= 0):
            raise ValueError("need rho1_end > rho1_start >= 0")

    def rho1_values(self) -> np.ndarray:
        # start + k*step, not cumulative addition, so slice values are exact
        n = int(math.floor((self.rho1_end - self.rho1_start) / self.rho1_step + 1e-9))
        return self.rho1_start + self.rho1_step * np.arange(n + 1)

    def domain(self) -> tuple[tuple[float, float], ...]:
        """Joint-space box covered by the sweep: rho1 range x rho_bounds^2."""
        lo, hi = self.slice.rho_bounds
        return ((self.rho1_start, self.rho1_end), (lo, hi), (lo, hi))


@dataclass
class SliceDiagnostics:
    brackets: int = 0
    roots: int = 0
    tangential: int = 0
    rejected_residual: int = 0
    out_of_bounds: int = 0
    degenerate_cells: int = 0

    def merge(self, other: "SliceDiagnostics") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass
class SingularityCloud:
    """Singular points of a sweep, one (n, 5) array per slice in rho1 order.

    Columns follow ``POINT_COLUMNS``.
    """

    slices: list[np.ndarray]
    spec: SweepSpec | None = None
    geometry_fingerprint: str = ""
    diagnostics: SliceDiagnostics = field(default_factory=SliceDiagnostics)

    @property
    def points(self) -> np.ndarray:
        if not self.slices:
            return np.empty((0, 5))
        return np.vstack(self.slices)

    @property
    def joints(self) -> np.ndarray:
        return self.points[:, :3]

    def __len__(self) -> int:
        return sum(len(s) for s in self.slices)

    def __iter__(self) -> Iterator[SingularPoint]:
        for block in self.slices:
            for row in block:
                yield SingularPoint(*(float(v) for v in row))

    def point(self, index: int) -> SingularPoint:
        return SingularPoint(*(float(v) for v in self.points[index]))

    def fingerprint(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.points).tobytes()).hexdigest()[:16]


# --------------------------------------------------------------------------
# Residuals
# --------------------------------------------------------------------------


def singularity_residual(geom: ManipulatorGeometry, angles: LegAngles) -> float:
    """Parallel-singularity residual in the three leg angles.

    Zero iff the leg axes are concurrent or parallel.
    """
    t1, t2, t3 = angles
    s2, s3, c3 = math.sin(t2), math.sin(t3), math.cos(t3)
    s31 = math.sin(t3 - t1)
    s12 = math.sin(t1 - t2)
    return geom.a2x * s2 * s31 + (geom.a3x * s3 - geom.a3y * c3) * s12


def _platform_legs(geom: ManipulatorGeometry, rho1, alpha, theta1):
    """Leg vectors ``B2 - A2`` and ``B3 - A3`` with B1 = rho1 (cos t1, sin t1)."""
    bx = rho1 * np.cos(theta1)
    by = rho1 * np.sin(theta1)
    v2x = bx + geom.d1 * np.cos(alpha) - geom.a2x
    v2y = by + geom.d1 * np.sin(alpha)
    ab = alpha + geom.beta
    v3x = bx + geom.d3 * np.cos(ab) - geom.a3x
    v3y = by + geom.d3 * np.sin(ab) - geom.a3y
    return v2x, v2y, v3x, v3y


def leg_lengths_from(geom: ManipulatorGeometry, rho1, alpha, theta1):
    """``(rho2, rho3)`` of the configuration fixed by ``(rho1, alpha, theta1)``.

    Accepts scalars or broadcastable arrays.
    """
    v2x, v2y, v3x, v3y = _platform_legs(geom, rho1, alpha, theta1)
    rho2, rho3 = np.hypot(v2x, v2y), np.hypot(v3x, v3y)
    if np.ndim(rho2) == 0:
        return float(rho2), float(rho3)
    return rho2, rho3


def _reduced(geom: ManipulatorGeometry, rho1, alpha, theta1, eps_len: float = EPS_LEN):
    """Vectorised reduced residual; NaN where leg 2 or 3 is degenerate."""
    v2x, v2y, v3x, v3y = _platform_legs(geom, rho1, alpha, theta1)
    rho2 = np.hypot(v2x, v2y)
    rho3 = np.hypot(v3x, v3y)
    bad = (rho2 <= eps_len) | (rho3 <= eps_len)
    with np.errstate(invalid="ignore", divide="ignore"):
        c2, s2 = v2x / rho2, v2y / rho2
        c3, s3 = v3x / rho3, v3y / rho3
    c1, s1 = np.cos(theta1), np.sin(theta1)
    s31 = s3 * c1 - c3 * s1
    s12 = s1 * c2 - c1 * s2
    f = geom.a2x * s2 * s31 + (geom.a3x * s3 - geom.a3y * c3) * s12
    return np.where(bad, np.nan, f), rho2, rho3


def reduced_residual(
    geom: ManipulatorGeometry, rho1: float, alpha: float, theta1: float, eps_len: float = EPS_LEN
) -> float:
    """Singularity residual as a function of ``(rho1, alpha, theta1)``.

    Raises:
        DegenerateLegError: when leg 2 or leg 3 has length ``<= eps_len``.
    """
    f, rho2, rho3 = _reduced(geom, float(rho1), float(alpha), float(theta1), eps_len)
    if rho2 <= eps_len:
        raise DegenerateLegError(2, float(rho2))
    if rho3 <= eps_len:
        raise DegenerateLegError(3, float(rho3))
    return float(f)


def point_pose(point: SingularPoint) -> Pose:
    """Platform pose of a singular point (B1 placed by rho1 and theta1)."""
    return Pose(point.rho1 * math.cos(point.theta1), point.rho1 * math.sin(point.theta1), point.alpha)


def point_leg_angles(geom: ManipulatorGeometry, point: SingularPoint) -> LegAngles:
    """Leg angles of a singular point.

    ``theta1`` comes from the point itself so the direction of leg 1 stays
    defined on the ``rho1 = 0`` slice.
    """
    pose = point_pose(point)
    if point.rho1 > EPS_LEN:
        return leg_angles(geom, pose)
    v2x, v2y, v3x, v3y = _platform_legs(geom, point.rho1, point.alpha, point.theta1)
    return LegAngles(
        wrap_angle(point.theta1), wrap_angle(math.atan2(v2y, v2x)), wrap_angle(math.atan2(v3y, v3x))
    )


# --------------------------------------------------------------------------
# Slices
# --------------------------------------------------------------------------


def compute_slice(
    geom: ManipulatorGeometry,
    spec: SliceSpec,
    diagnostics: SliceDiagnostics | None = None,
) -> np.ndarray:
    """Singular points of one ``rho1`` slice as an (n, 5) array.

    The outer scan variable (``spec.scan``, theta1 by default) is sampled on
    a uniform grid over [0, 2*pi); for each sample the other angle is swept
    around the full circle and every sign change of the reduced residual is
    refined by bisection.  Samples where ``|f| < 10 * tol_root`` without a
    neighbouring sign change get a golden-section probe for tangential roots.
    Roots whose residual stays above ``tol_root`` (sign flips across a
    degenerate leg) are discarded.  Rows are sorted by ``(theta1, alpha)``.
    """
    diag = diagnostics if diagnostics is not None else SliceDiagnostics()
    n_outer, n_inner = (
        (spec.n_theta1, spec.n_alpha) if spec.scan == "theta1" else (spec.n_alpha, spec.n_theta1)
    )
    outer = np.arange(n_outer) * (TWO_PI / n_outer)
    inner = np.arange(n_inner + 1) * (TWO_PI / n_inner)
    step = TWO_PI / n_inner

    def residual(u, v):
        alpha, theta1 = (v, u) if spec.scan == "theta1" else (u, v)
        return _reduced(geom, spec.rho1, alpha, theta1, spec.eps_len)[0]

    f = residual(outer[:, None], inner[None, :])
    diag.degenerate_cells += int(np.isnan(f[:, :-1]).sum())

    oi, k = sign_change_cells(f)
    diag.brackets += len(oi)
    u_b = outer[oi]
    roots, froots = bisect(
        lambda v: residual(u_b, v),
        inner[k],
        inner[k + 1],
        f[oi, k],
        xtol=1e-12,
        ftol=spec.tol_root,
    )

    # Tangential candidates: tiny |f| at a sample, same sign in both cells.
    cur = f[:, :-1]
    prev = np.roll(cur, 1, axis=1)
    nxt = f[:, 1:]
    with np.errstate(invalid="ignore"):
        near = np.abs(cur) < 10 * spec.tol_root
        flat = (np.sign(prev) * np.sign(cur) >= 0) & (np.sign(cur) * np.sign(nxt) >= 0)
    ti, tk = np.nonzero(near & flat)
    if len(ti):
        u_t = outer[ti]
        sign = np.where(cur[ti, tk] < 0, -1.0, 1.0)
        v_t, f_t = golden_min(
            lambda v: np.abs(residual(u_t, v)), np.ones_like(sign), inner[tk] - step, inner[tk] + step
        )
        exact = cur[ti, tk] == 0
        v_t = np.where(exact, inner[tk], v_t)
        f_t = np.where(exact, 0.0, f_t)
        diag.tangential += int((np.abs(f_t) < spec.tol_root).sum())
        oi = np.concatenate([oi, ti])
        roots = np.concatenate([roots, v_t])
        froots = np.concatenate([froots, f_t])

    ok = np.abs(froots) < spec.tol_root
    diag.rejected_residual += int((~ok).sum())
    u_r, v_r = outer[oi][ok], wrap_angle(roots[ok])
    v_r = np.atleast_1d(v_r)
    alpha, theta1 = (v_r, u_r) if spec.scan == "theta1" else (u_r, v_r)
    rho2, rho3 = leg_lengths_from(geom, spec.rho1, alpha, theta1)
    rho2, rho3 = np.atleast_1d(rho2), np.atleast_1d(rho3)
    lo, hi = spec.rho_bounds
    keep = (
        (rho2 >= lo) & (rho2 <= hi) & (rho3 >= lo) & (rho3 <= hi)
        & (rho2 > spec.eps_len) & (rho3 > spec.eps_len)
    )
    diag.out_of_bounds += int((~keep).sum())
    pts = np.column_stack(
        [np.full(int(keep.sum()), float(spec.rho1)), rho2[keep], rho3[keep], alpha[keep], theta1[keep]]
    )
    pts = pts[np.lexsort((pts[:, 3], pts[:, 4]))]
    # a tangential probe may land on a root already bracketed
    if len(pts) > 1:
        dup = np.all(np.abs(np.diff(pts[:, 3:], axis=0)) < 1e-9, axis=1)
        pts = pts[np.concatenate([[True], ~dup])]
    diag.roots += len(pts)
    return pts


def sweep_surface(geom: ManipulatorGeometry, spec: SweepSpec, workers: int = 1) -> SingularityCloud:
    """Stack slices over ``rho1 = start, start + step, ..., end``.

    Slices are independent; with ``workers > 1`` they run on a thread pool
    (numpy releases the GIL inside the heavy kernels).  Output order does not
    depend on completion order.
    """
    rho1s = spec.rho1_values()

    def run(rho1: float):
        diag = SliceDiagnostics()
        return compute_slice(geom, replace(spec.slice, rho1=float(rho1)), diag), diag

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, rho1s))
    else:
        results = [run(r) for r in rho1s]
    total = SliceDiagnostics()
    for _, d in results:
        total.merge(d)
    return SingularityCloud(
        slices=[pts for pts, _ in results],
        spec=spec,
        geometry_fingerprint=geom.fingerprint(),
        diagnostics=total,
    )


# --------------------------------------------------------------------------
# Export / import
# --------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def export_cloud(cloud: SingularityCloud, fmt: str = "csv") -> bytes:
    """Serialise a cloud as CSV (all columns) or ASCII PLY (rho1, rho2, rho3)."""
    pts = cloud.points
    out = io.StringIO()
    if fmt == "csv":
        out.write(",".join(POINT_COLUMNS) + "\n")
        for row in pts:
            out.write(",".join(_fmt(v) for v in row) + "\n")
    elif fmt == "ply":
        if len(pts) == 0:
            raise ValueError("cannot write an empty PLY cloud")
        out.write("ply\nformat ascii 1.0\n")
        out.write(f"element vertex {len(pts)}\n")
        out.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for row in pts:
            out.write(f"{_fmt(row[0])} {_fmt(row[1])} {_fmt(row[2])}\n")
    else:
        raise ValueError(f"unknown cloud format {fmt!r}")
    return out.getvalue().encode("ascii")


def load_cloud_csv(path) -> SingularityCloud:
    """Read a cloud CSV; rows are regrouped into slices by rho1 value."""
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != POINT_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(POINT_COLUMNS)}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        return SingularityCloud(slices=[])
    cuts = np.nonzero(np.diff(data[:, 0]) != 0)[0] + 1
    slices = sorted(np.split(data, cuts), key=lambda block: block[0, 0])
    return SingularityCloud(slices=slices)
