"""Inverse and direct kinematics of the 3-RPR manipulator.

Leg ``i`` joins the base point Ai to the platform point Bi; ``rho_i`` is its
length and ``theta_i`` the angle of ``Bi - Ai`` from the global x-axis.  The
operational point is B1 and ``alpha`` is the direction of B1B2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from rprbox._roots import bisect, golden_min, sign_change_cells
from rprbox.model import ManipulatorGeometry

TWO_PI = 2.0 * math.pi
EPS_LEN = 1e-9
MAX_ASSEMBLY_MODES = 6


class KinematicsError(ValueError):
    pass


class DegenerateLegError(KinematicsError):
    """A leg is shorter than ``EPS_LEN``; its direction is undefined."""

    def __init__(self, leg: int, length: float):
        super().__init__(f"leg {leg} is degenerate (rho{leg} = {length:.3g})")
        self.leg = leg
        self.length = length


class Pose(NamedTuple):
    x: float
    y: float
    alpha: float


class JointVector(NamedTuple):
    rho1: float
    rho2: float
    rho3: float


class LegAngles(NamedTuple):
    theta1: float
    theta2: float
    theta3: float


class LegLine(NamedTuple):
    """Line ``a*x + b*y + c = 0`` with ``a**2 + b**2 == 1``."""

    a: float
    b: float
    c: float


def wrap_angle(angle):
    """Map an angle (or array of angles) into [0, 2*pi)."""
    wrapped = np.mod(angle, TWO_PI)
    # np.mod can round a tiny negative input up to exactly 2*pi
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def attachment_points(geom: ManipulatorGeometry, pose: Pose) -> np.ndarray:
    """Platform points B1, B2, B3 as a (3, 2) array."""
    x, y, alpha = pose
    ab = alpha + geom.beta
    return np.array(
        [
            [x, y],
            [x + geom.d1 * math.cos(alpha), y + geom.d1 * math.sin(alpha)],
            [x + geom.d3 * math.cos(ab), y + geom.d3 * math.sin(ab)],
        ]
    )


def inverse_kinematics(geom: ManipulatorGeometry, pose: Pose) -> JointVector:
    legs = attachment_points(geom, pose) - geom.base_points
    return JointVector(*(float(v) for v in np.hypot(legs[:, 0], legs[:, 1])))


def leg_angles(geom: ManipulatorGeometry, pose: Pose, eps_len: float = EPS_LEN) -> LegAngles:
    """Direction of each leg ``Bi - Ai`` measured from the x-axis.

    Raises:
        DegenerateLegError: if some leg length is ``<= eps_len``.
    """
    legs = attachment_points(geom, pose) - geom.base_points
    lengths = np.hypot(legs[:, 0], legs[:, 1])
    for i, length in enumerate(lengths, start=1):
        if length <= eps_len:
            raise DegenerateLegError(i, float(length))
    return LegAngles(*(wrap_angle(math.atan2(v[1], v[0])) for v in legs))


def leg_lines(geom: ManipulatorGeometry, angles: LegAngles) -> tuple[LegLine, LegLine, LegLine]:
    lines = []
    for theta, (ax, ay) in zip(angles, geom.base_points):
        a, b = math.sin(theta), -math.cos(theta)
        lines.append(LegLine(a, b, -(a * ax + b * ay)))
    return tuple(lines)


def leg_lines_det(geom: ManipulatorGeometry, angles: LegAngles) -> float:
    """Determinant of the stacked leg-line coefficients.

    Zero exactly when the three leg axes are concurrent or parallel.  With the
    ``(a, b) = (sin t, -cos t)`` normalisation the expansion is term-for-term
    equal to :func:`rprbox.singularity.singularity_residual`, so the
    normalisation factor between the two formulations is 1.
    """
    return float(np.linalg.det(np.array(leg_lines(geom, angles))))


def constraint_residuals(geom: ManipulatorGeometry, pose: Pose, q: JointVector) -> np.ndarray:
    """The four loop-closure residuals linking a pose to leg lengths ``q``.

    Leg directions are taken from the pose, leg lengths from ``q``; all four
    vanish iff ``q`` is the inverse kinematics of ``pose``.
    """
    rho1, rho2, rho3 = q
    x, y, alpha = pose
    a2x, a3x, a3y, d1, d3, beta = geom.a2x, geom.a3x, geom.a3y, geom.d1, geom.d3, geom.beta
    b = attachment_points(geom, pose) - geom.base_points
    t1, t2, t3 = (math.atan2(v[1], v[0]) for v in b)
    c1, s1 = math.cos(t1), math.sin(t1)
    return np.array(
        [
            a2x + rho2 * math.cos(t2) - rho1 * c1 - d1 * math.cos(alpha),
            rho2 * math.sin(t2) - rho1 * s1 - d1 * math.sin(alpha),
            a3x + rho3 * math.cos(t3) - rho1 * c1 - d3 * math.cos(alpha + beta),
            a3y + rho3 * math.sin(t3) - rho1 * s1 - d3 * math.sin(alpha + beta),
        ]
    )


# --------------------------------------------------------------------------
# Direct kinematics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DKPOptions:
    n_alpha: int = 3600
    tol: float = 1e-12
    dedup: float = 1e-7
    accept: float = 1e-8
    chunk: int = 256

    def __post_init__(self) -> None:
        if self.n_alpha < 8:
            raise ValueError("n_alpha must be >= 8")
        if not (self.tol > 0 and self.dedup > 0 and self.accept > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class DKPDiagnostics:
    brackets: int = 0
    tangential: int = 0
    merged: int = 0
    rejected: int = 0
    degenerate_linear: int = 0


def _difference_vectors(geom: ManipulatorGeometry, alpha: np.ndarray):
    """Vectors ``w2 = B2 - B1 - A2`` and ``w3 = B3 - B1 - A3`` per alpha."""
    w2x = geom.d1 * np.cos(alpha) - geom.a2x
    w2y = geom.d1 * np.sin(alpha)
    w3x = geom.d3 * np.cos(alpha + geom.beta) - geom.a3x
    w3y = geom.d3 * np.sin(alpha + geom.beta) - geom.a3y
    return w2x, w2y, w3x, w3y


def _closure(geom: ManipulatorGeometry, q: np.ndarray, alpha: np.ndarray):
    """Pole-free closure function for fixed orientation ``alpha``.

    Subtracting the first circle equation from the other two leaves a 2x2
    linear system ``W @ B1 = r``.  With ``D = det W`` and ``adj(W) @ r = D*B1``
    the function ``h = |adj(W) r|^2 - rho1^2 D^2`` vanishes at assembly modes
    and, unlike ``|B1|^2 - rho1^2``, has no poles where ``W`` is singular.
    ``q`` broadcasts against ``alpha`` (columns rho1, rho2, rho3 on the last
    axis).
    """
    r1sq, r2sq, r3sq = q[..., 0] ** 2, q[..., 1] ** 2, q[..., 2] ** 2
    w2x, w2y, w3x, w3y = _difference_vectors(geom, alpha)
    rhs2 = 0.5 * (r2sq - r1sq - (w2x * w2x + w2y * w2y))
    rhs3 = 0.5 * (r3sq - r1sq - (w3x * w3x + w3y * w3y))
    det = w2x * w3y - w2y * w3x
    xd = rhs2 * w3y - rhs3 * w2y
    yd = w2x * rhs3 - w3x * rhs2
    return xd * xd + yd * yd - r1sq * det * det, xd, yd, det


def _position_for(geom: ManipulatorGeometry, q: np.ndarray, alpha: float) -> list[tuple[float, float]]:
    """Candidate B1 positions for one orientation."""
    h, xd, yd, det = _closure(geom, q, np.float64(alpha))
    scale = geom.d1 * geom.d3 + geom.scale**2
    if abs(det) > 1e-9 * scale:
        return [(float(xd / det), float(yd / det))]
    # The difference lines are parallel: intersect circle 1 with the better
    # conditioned of the two lines.
    w2x, w2y, w3x, w3y = _difference_vectors(geom, np.float64(alpha))
    r1sq = q[0] ** 2
    rhs2 = 0.5 * (q[1] ** 2 - r1sq - (w2x**2 + w2y**2))
    rhs3 = 0.5 * (q[2] ** 2 - r1sq - (w3x**2 + w3y**2))
    n2, n3 = math.hypot(w2x, w2y), math.hypot(w3x, w3y)
    nx, ny, r = (w2x / n2, w2y / n2, rhs2 / n2) if n2 >= n3 else (w3x / n3, w3y / n3, rhs3 / n3)
    disc = r1sq - r * r
    if disc < 0:
        return []
    t = math.sqrt(disc)
    return [(r * nx - t * ny, r * ny + t * nx), (r * nx + t * ny, r * ny - t * nx)]


def _leg_errors(geom: ManipulatorGeometry, x, y, alpha, q) -> np.ndarray:
    b2 = np.stack([x + geom.d1 * np.cos(alpha) - geom.a2x, y + geom.d1 * np.sin(alpha)], -1)
    ab = alpha + geom.beta
    b3 = np.stack([x + geom.d3 * np.cos(ab) - geom.a3x, y + geom.d3 * np.sin(ab) - geom.a3y], -1)
    return np.stack(
        [
            np.hypot(x, y) - q[..., 0],
            np.hypot(b2[..., 0], b2[..., 1]) - q[..., 1],
            np.hypot(b3[..., 0], b3[..., 1]) - q[..., 2],
        ],
        -1,
    )


def _newton_polish(geom: ManipulatorGeometry, q: np.ndarray, pose: np.ndarray, iters: int = 3) -> np.ndarray:
    """Refine (x, y, alpha) on the squared-distance constraints."""
    p = pose.astype(float).copy()
    a = geom.base_points
    for _ in range(iters):
        x, y, al = p
        u = np.array([math.cos(al), math.sin(al)])
        v = np.array([math.cos(al + geom.beta), math.sin(al + geom.beta)])
        b1 = np.array([x, y])
        legs = [b1 - a[0], b1 + geom.d1 * u - a[1], b1 + geom.d3 * v - a[2]]
        f = np.array([legs[i] @ legs[i] - q[i] ** 2 for i in range(3)])
        du = geom.d1 * np.array([-u[1], u[0]])
        dv = geom.d3 * np.array([-v[1], v[0]])
        jac = 2.0 * np.array(
            [
                [legs[0][0], legs[0][1], 0.0],
                [legs[1][0], legs[1][1], legs[1] @ du],
                [legs[2][0], legs[2][1], legs[2] @ dv],
            ]
        )
        try:
            step = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            break
        p = p - step
    return p


def _roots_chunk(geom: ManipulatorGeometry, q: np.ndarray, opts: DKPOptions, diag: DKPDiagnostics):
    """Closure roots for a chunk of joint vectors: (q index, alpha, multiplicity)."""
    m = opts.n_alpha
    grid = np.arange(m + 1) * (TWO_PI / m)
    h = _closure(geom, q[:, None, :], grid[None, :])[0]
    h[:, m] = h[:, 0]
    qi, k = sign_change_cells(h)
    lo, hi = grid[k], grid[k + 1]

    # Roots landing exactly on a sample.
    zq, zk = np.nonzero(h[:, :-1] == 0.0)
    extra_q, extra_a, extra_m = [zq], [grid[zk]], [np.ones(len(zq), int)]

    # Close root pairs inside one cell leave no sign change; probe local
    # minima of |h| between samples of equal sign.
    prev = np.roll(h[:, :-1], 1, axis=1)
    cur = h[:, :-1]
    nxt = h[:, 1:]
    same = (np.sign(prev) == np.sign(cur)) & (np.sign(cur) == np.sign(nxt)) & (cur != 0)
    local_min = same & (np.abs(cur) <= np.abs(prev)) & (np.abs(cur) <= np.abs(nxt))
    pq, pk = np.nonzero(local_min)
    if len(pq):
        step = TWO_PI / m
        plo, phi = grid[pk] - step, grid[pk] + step
        sign = np.sign(cur[pq, pk])
        qp = q[pq]
        amin, hmin = golden_min(lambda a: _closure(geom, qp, a)[0], sign, plo, phi)
        hscale = np.max(np.abs(h[pq]), axis=1)
        crosses = sign * hmin < 0
        touches = ~crosses & (np.abs(hmin) <= 1e-10 * hscale)
        qi = np.concatenate([qi, pq[crosses], pq[crosses]])
        lo = np.concatenate([lo, plo[crosses], amin[crosses]])
        hi = np.concatenate([hi, amin[crosses], phi[crosses]])
        extra_q.append(pq[touches])
        extra_a.append(amin[touches])
        extra_m.append(np.full(int(touches.sum()), 2))
        diag.tangential += int(touches.sum())

    diag.brackets += len(qi)
    roots = np.empty(0)
    if len(qi):
        qb = q[qi]

        def closure(a):
            return _closure(geom, qb, a)[0]

        roots, _ = bisect(closure, lo, hi, closure(lo), xtol=opts.tol)
    all_q = np.concatenate([qi] + extra_q)
    all_a = wrap_angle(np.concatenate([roots] + extra_a))
    all_m = np.concatenate([np.ones(len(qi), int)] + extra_m)
    return all_q, np.atleast_1d(all_a), all_m


def _dedup(alphas: np.ndarray, mult: np.ndarray, radius: float, diag: DKPDiagnostics):
    order = np.argsort(alphas, kind="stable")
    out: list[list] = []
    for a, mu in zip(alphas[order], mult[order]):
        if out and a - out[-1][0] < radius:
            out[-1][1] += mu
            diag.merged += 1
            continue
        out.append([float(a), int(mu)])
    if len(out) > 1 and out[0][0] + TWO_PI - out[-1][0] < radius:
        out[0][1] += out.pop()[1]
        diag.merged += 1
    return out


def direct_kinematics_batch(
    geom: ManipulatorGeometry,
    qs: Sequence[Sequence[float]] | np.ndarray,
    opts: DKPOptions | None = None,
    diagnostics: DKPDiagnostics | None = None,
) -> list[list[Pose]]:
    """All real assembly modes for each joint vector in ``qs``.

    Sweeps alpha over a uniform grid, brackets sign changes of the pole-free
    closure function and refines them by bisection.  Each candidate pose is
    accepted only if all leg-length errors are below ``opts.accept``.
    Solutions are sorted by alpha.
    """
    opts = opts or DKPOptions()
    diag = diagnostics if diagnostics is not None else DKPDiagnostics()
    q_all = np.atleast_2d(np.asarray(qs, dtype=float))
    if q_all.shape[-1] != 3:
        raise ValueError("joint vectors must have three components")
    if np.any(q_all < 0) or not np.all(np.isfinite(q_all)):
        raise KinematicsError("leg lengths must be finite and non-negative")
    results: list[list[Pose]] = [[] for _ in range(len(q_all))]
    for start in range(0, len(q_all), opts.chunk):
        q = q_all[start : start + opts.chunk]
        qi, alphas, mult = _roots_chunk(geom, q, opts, diag)
        for j in range(len(q)):
            sel = qi == j
            if not np.any(sel):
                continue
            for alpha, _mu in _dedup(alphas[sel], mult[sel], opts.dedup, diag):
                results[start + j].extend(_poses_at(geom, q[j], alpha, opts, diag))
    for j, sols in enumerate(results):
        sols.sort(key=lambda p: (p.alpha, p.x, p.y))
        if len(sols) > MAX_ASSEMBLY_MODES:
            raise KinematicsError(
                f"found {len(sols)} assembly modes for q={tuple(q_all[j])}; at most 6 exist"
            )
    return results


def _poses_at(geom, q, alpha, opts, diag) -> list[Pose]:
    candidates = _position_for(geom, q, alpha)
    if len(candidates) > 1:
        diag.degenerate_linear += 1
    poses = []
    for x, y in candidates:
        err = np.max(np.abs(_leg_errors(geom, np.float64(x), np.float64(y), np.float64(alpha), q)))
        if err > opts.accept * 1e-2:
            polished = _newton_polish(geom, q, np.array([x, y, alpha]))
            perr = np.max(np.abs(_leg_errors(geom, *(np.float64(v) for v in polished), q)))
            if perr < err:
                (x, y, alpha), err = polished, perr
        if err <= opts.accept:
            poses.append(Pose(float(x), float(y), wrap_angle(float(alpha))))
        else:
            diag.rejected += 1
    return poses


def direct_kinematics(
    geom: ManipulatorGeometry,
    q: JointVector | Sequence[float],
    opts: DKPOptions | None = None,
    diagnostics: DKPDiagnostics | None = None,
) -> list[Pose]:
    """All real assembly modes (0 to 6 poses) for leg lengths ``q``."""
    return direct_kinematics_batch(geom, [tuple(q)], opts, diagnostics)[0]
