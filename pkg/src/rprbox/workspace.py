"""Workspace images of joint-space boxes and workspace singularity curves.

Every joint vector of a regular grid over the box is pushed through the
direct kinematics; each assembly mode is labelled by the sign of the leg-line
determinant, which cannot change inside a singularity-free region.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from rprbox.boxsearch import SingularityFreeBox
from rprbox.kinematics import (
    EPS_LEN,
    DKPOptions,
    JointVector,
    Pose,
    direct_kinematics_batch,
    inverse_kinematics,
    leg_angles,
    leg_lines_det,
)
from rprbox.model import ManipulatorGeometry

DET_FLOOR = 1e-8
NEAR_SINGULAR = 1e-3
IK_TOL = 1e-8
WORKSPACE_COLUMNS = ("x", "y", "alpha", "rho1", "rho2", "rho3", "det", "aspect")


class WorkspaceSample(NamedTuple):
    pose: Pose
    source_q: JointVector
    det: float
    aspect: int  # +1 or -1
    grid_index: tuple[int, int, int] = (-1, -1, -1)


@dataclass
class CubeImage:
    groups: dict[int, list[WorkspaceSample]] = field(default_factory=dict)
    violations: list[WorkspaceSample] = field(default_factory=list)
    ik_failures: list[WorkspaceSample] = field(default_factory=list)
    near_singular: int = 0
    n_per_axis: int = 0

    @property
    def samples(self) -> list[WorkspaceSample]:
        out = [s for g in self.groups.values() for s in g]
        out.sort(key=lambda s: (tuple(s.source_q), s.pose.alpha))
        return out


def _grid_axes(limits: Sequence[tuple[float, float]], n: int) -> list[np.ndarray]:
    return [np.linspace(lo, hi, n) for lo, hi in limits]


def cube_image(
    geom: ManipulatorGeometry,
    box: SingularityFreeBox | Sequence[tuple[float, float]],
    n_per_axis: int = 25,
    opts: DKPOptions | None = None,
    det_floor: float = DET_FLOOR,
) -> CubeImage:
    """Direct-kinematics image of an ``n_per_axis**3`` grid over the box.

    ``box`` is a :class:`SingularityFreeBox` (its margined joint limits are
    sampled) or explicit per-joint ``(lo, hi)`` limits.  Solutions with
    ``|det| <= det_floor`` contradict the singularity-free claim and are
    collected in ``violations`` rather than labelled.
    """
    if n_per_axis < 2:
        raise ValueError("n_per_axis must be >= 2")
    limits = box.limits if isinstance(box, SingularityFreeBox) else box
    axes = _grid_axes(limits, n_per_axis)
    index = list(itertools.product(range(n_per_axis), repeat=3))
    qs = np.array([[axes[0][i], axes[1][j], axes[2][k]] for i, j, k in index])
    solutions = direct_kinematics_batch(geom, qs, opts)
    image = CubeImage(n_per_axis=n_per_axis)
    for idx, q, sols in zip(index, qs, solutions):
        source = JointVector(*(float(v) for v in q))
        for pose in sols:
            try:
                det = leg_lines_det(geom, leg_angles(geom, pose))
            except ValueError:
                det = 0.0
            sample = WorkspaceSample(pose, source, det, 1 if det > 0 else -1, idx)
            if abs(det) <= det_floor:
                image.violations.append(sample)
                continue
            if abs(det) < NEAR_SINGULAR:
                image.near_singular += 1
            if np.max(np.abs(np.subtract(inverse_kinematics(geom, pose), source))) > IK_TOL:
                image.ik_failures.append(sample)
            image.groups.setdefault(sample.aspect, []).append(sample)
    for group in image.groups.values():
        group.sort(key=lambda s: (tuple(s.source_q), s.pose.alpha))
    return image


def pose_distance(p: Pose, q: Pose) -> float:
    """Euclidean distance in (x, y, alpha) with alpha taken modulo 2*pi."""
    da = abs(p.alpha - q.alpha) % (2 * math.pi)
    da = min(da, 2 * math.pi - da)
    return math.sqrt((p.x - q.x) ** 2 + (p.y - q.y) ** 2 + da * da)


def component_fractions(samples: Sequence[WorkspaceSample], radius: float = 0.5) -> list[float]:
    """Connected-component sizes (as fractions, largest first) of the sample graph.

    Two samples are adjacent when their joint vectors are grid neighbours
    (one index step along one axis) and their poses lie within ``radius``.
    """
    if not samples:
        return []
    by_cell: dict[tuple[int, int, int], list[int]] = {}
    for n, s in enumerate(samples):
        by_cell.setdefault(s.grid_index, []).append(n)
    rows, cols = [], []
    for cell, members in by_cell.items():
        for axis in range(3):
            nb = list(cell)
            nb[axis] += 1
            for a in members:
                for b in by_cell.get(tuple(nb), ()):
                    if pose_distance(samples[a].pose, samples[b].pose) <= radius:
                        rows.append(a)
                        cols.append(b)
    n = len(samples)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    sizes = np.bincount(labels)
    return sorted((float(s) / n for s in sizes), reverse=True)


def project_xy(samples: Sequence[WorkspaceSample]) -> list[tuple[float, float, int]]:
    """Drop the orientation: ``(x, y, aspect)`` per sample."""
    return [(s.pose.x, s.pose.y, s.aspect) for s in samples]


# --------------------------------------------------------------------------
# Workspace singularity curves at fixed orientation
# --------------------------------------------------------------------------


def _leg_angle_grid(geom: ManipulatorGeometry, x: np.ndarray, y: np.ndarray, alpha: float):
    ab = alpha + geom.beta
    legs = [
        (x, y),
        (x + geom.d1 * math.cos(alpha) - geom.a2x, y + geom.d1 * math.sin(alpha)),
        (x + geom.d3 * math.cos(ab) - geom.a3x, y + geom.d3 * math.sin(ab) - geom.a3y),
    ]
    thetas = [np.arctan2(vy, vx) for vx, vy in legs]
    short = np.zeros(np.shape(x), dtype=bool)
    for vx, vy in legs:
        short |= np.hypot(vx, vy) <= EPS_LEN
    return thetas, short


def singularity_residual_grid(geom: ManipulatorGeometry, x: np.ndarray, y: np.ndarray, alpha: float) -> np.ndarray:
    """Leg-angle singularity residual on an (x, y) grid; NaN at degenerate legs."""
    (t1, t2, t3), short = _leg_angle_grid(geom, x, y, alpha)
    f = geom.a2x * np.sin(t2) * np.sin(t3 - t1) + (
        geom.a3x * np.sin(t3) - geom.a3y * np.cos(t3)
    ) * np.sin(t1 - t2)
    return np.where(short, np.nan, f)


def workspace_singularity_scan(
    geom: ManipulatorGeometry,
    region: tuple[float, float, float, float],
    alpha: float,
    resolution: int = 200,
) -> np.ndarray:
    """Points of the singularity curve at orientation ``alpha``.

    ``region`` is ``(xmin, xmax, ymin, ymax)``.  The residual is sampled on a
    ``resolution x resolution`` grid and every grid edge with a sign change
    contributes one linearly interpolated zero.  Returns an (n, 2) array.
    """
    xmin, xmax, ymin, ymax = region
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"invalid region {region}")
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymin, ymax, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    f = singularity_residual_grid(geom, gx, gy, alpha)
    pts = []
    for axis in (0, 1):
        a = f[:-1, :] if axis == 0 else f[:, :-1]
        b = f[1:, :] if axis == 0 else f[:, 1:]
        with np.errstate(invalid="ignore"):
            cross = np.sign(a) * np.sign(b) < 0
        i, j = np.nonzero(cross)
        t = a[i, j] / (a[i, j] - b[i, j])
        if axis == 0:
            px = xs[i] + t * (xs[i + 1] - xs[i])
            py = ys[j]
        else:
            px = xs[i]
            py = ys[j] + t * (ys[j + 1] - ys[j])
        pts.append(np.column_stack([px, py]))
    out = np.vstack(pts)
    return out[np.lexsort((out[:, 1], out[:, 0]))] if len(out) else out.reshape(0, 2)


# --------------------------------------------------------------------------
# Export
# --------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def export_samples(samples: Sequence[WorkspaceSample], fmt: str = "csv") -> bytes:
    """CSV with ``WORKSPACE_COLUMNS`` or an ASCII PLY of (x, y, alpha)."""
    out = io.StringIO()
    if fmt == "csv":
        out.write(",".join(WORKSPACE_COLUMNS) + "\n")
        for s in samples:
            row = [*s.pose, *s.source_q, s.det]
            out.write(",".join(_fmt(v) for v in row) + ("," + ("+" if s.aspect > 0 else "-")) + "\n")
    elif fmt == "ply":
        out.write("ply\nformat ascii 1.0\n")
        out.write(f"element vertex {len(samples)}\n")
        out.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for s in samples:
            out.write(f"{_fmt(s.pose.x)} {_fmt(s.pose.y)} {_fmt(s.pose.alpha)}\n")
    else:
        raise ValueError(f"unknown workspace format {fmt!r}")
    return out.getvalue().encode("ascii")
