"""Quadrature grids and integration on truncated boxes of C^n = R^{2n}.

Points of C^n are stored as real arrays of shape ``(..., 2n)`` with the real
and imaginary parts of each complex coordinate interleaved, i.e.
``(Re z_1, Im z_1, Re z_2, Im z_2, ...)``.

Every integral in the package goes through the midpoint tensor rule built
here.  Sums are compensated (``math.fsum`` on the real and imaginary parts),
so the result does not depend on evaluation order or thread count.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from threadpoolctl import threadpool_limits

DEFAULT_NODE_CAP = 10**8
NODE_CAP_ENV = "FWL_NODE_CAP"


class CapacityError(ValueError):
    """Requested grid has more nodes than the configured hard cap."""

    def __init__(self, count: int, cap: int):
        super().__init__(f"grid would have {count} nodes, above the node cap {cap} "
                         f"(raise it with {NODE_CAP_ENV})")
        self.count = count
        self.cap = cap


class EvaluationError(ValueError):
    """An integrand returned a non-finite value at a quadrature node."""

    def __init__(self, node, value):
        super().__init__(f"non-finite integrand value {value!r} at node {tuple(np.round(node, 12))}")
        self.node = np.asarray(node)
        self.value = value


class ConfigurationError(ValueError):
    """Numerical configuration cannot deliver the requested accuracy."""


class TruncationWarning(UserWarning):
    """An evaluation point sits too close to the edge of the truncated box."""


def fixed_order_blas():
    """Context pinning BLAS to one thread, so reductions run in a fixed order.

    Multithreaded gemv/gemm split sums by thread count, which changes the last
    bits; kernels whose output must be thread-count invariant run inside this.
    """
    return threadpool_limits(limits=1, user_api="blas")


def node_cap() -> int:
    raw = os.environ.get(NODE_CAP_ENV)
    if raw is None:
        return DEFAULT_NODE_CAP
    return int(float(raw))


def as_points(z, n: int | None = None) -> np.ndarray:
    """Coerce complex scalars/vectors or interleaved real arrays to ``(..., 2n)`` reals."""
    arr = np.asarray(z)
    if np.iscomplexobj(arr) or arr.ndim == 0:
        arr = np.atleast_1d(arr.astype(complex))
        if n == 1 and arr.shape[-1] != 1:
            arr = arr[..., None]  # batch of scalar points
        out = np.empty(arr.shape[:-1] + (2 * arr.shape[-1],), dtype=float)
        out[..., 0::2] = arr.real
        out[..., 1::2] = arr.imag
        if n is not None and out.shape[-1] != 2 * n:
            raise ValueError(f"point has {arr.shape[-1]} complex coordinates, expected {n}")
        return out
    arr = arr.astype(float)
    if arr.shape[-1] % 2:
        raise ValueError(f"interleaved coordinates need an even length, got {arr.shape[-1]}")
    if n is not None and arr.shape[-1] != 2 * n:
        raise ValueError(f"expected {2 * n} real coordinates, got {arr.shape[-1]}")
    return arr


def to_complex(points: np.ndarray) -> np.ndarray:
    """Interleaved reals ``(..., 2n)`` -> complex ``(..., n)``."""
    points = np.asarray(points, dtype=float)
    return points[..., 0::2] + 1j * points[..., 1::2]


def sq_norm(points: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(points, dtype=float) ** 2, axis=-1)


def compensated_sum(values) -> complex | float:
    """Exactly rounded sum of a real or complex array."""
    values = np.ravel(np.asarray(values))
    if np.iscomplexobj(values):
        return complex(math.fsum(values.real.tolist()), math.fsum(values.imag.tolist()))
    return math.fsum(values.tolist())


@dataclass(frozen=True)
class GridSpec:
    """Box ``[-R, R]^{2n}`` sampled at spacing (at most) ``h``."""

    n: int = 1
    R: float = 8.0
    h: float = 0.05

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension n must be a positive integer, got {self.n}")
        if not (math.isfinite(self.R) and self.R > 0):
            raise ValueError(f"truncation radius R must be positive, got {self.R}")
        if not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"spacing h must be positive, got {self.h}")
        if self.h > self.R:
            raise ValueError(f"spacing h={self.h} exceeds truncation radius R={self.R}")

    @property
    def cells_per_half_axis(self) -> int:
        # tolerance keeps R/h = 160.00000000000003 from becoming 161
        return int(math.ceil(self.R / self.h - 1e-9))

    @property
    def node_count(self) -> int:
        return (2 * self.cells_per_half_axis) ** (2 * self.n)

    @classmethod
    def from_json(cls, obj: dict) -> "GridSpec":
        return cls(n=int(obj.get("n", 1)), R=float(obj["R"]), h=float(obj["h"]))

    def to_json(self) -> dict:
        return {"n": self.n, "R": self.R, "h": self.h}


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    spec: GridSpec
    nodes: np.ndarray = field(repr=False)
    node_weight: float
    spacing: float

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def R(self) -> float:
        return self.spec.R

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def axis(self) -> np.ndarray:
        """1-D node coordinates shared by all 2n axes."""
        m = self.spec.cells_per_half_axis
        return (np.arange(-m, m) + 0.5) * self.spacing

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.spec.cells_per_half_axis,) * (2 * self.n)

    @property
    def complex_nodes(self) -> np.ndarray:
        return to_complex(self.nodes)

    def contains_box(self, center, half_width: float) -> bool:
        center = np.asarray(center, dtype=float)
        return bool(np.all(np.abs(center) + half_width <= self.R * (1 + 1e-12)))


def build_grid(spec: GridSpec) -> QuadratureGrid:
    """Midpoint grid on ``[-R, R]^{2n}``; nodes ordered lexicographically over axes.

    When R/h is not an integer the spacing is shrunk to ``R / ceil(R/h)`` so
    the cells tile the box exactly.
    """
    count = spec.node_count
    cap = node_cap()
    if count > cap:
        raise CapacityError(count, cap)
    m = spec.cells_per_half_axis
    h = spec.R / m
    axis = (np.arange(-m, m) + 0.5) * h
    mesh = np.meshgrid(*([axis] * (2 * spec.n)), indexing="ij")
    nodes = np.stack([g.ravel() for g in mesh], axis=-1)
    return QuadratureGrid(spec=spec, nodes=nodes, node_weight=h ** (2 * spec.n), spacing=h)


Integrand = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


def evaluate(grid: QuadratureGrid, f: Integrand) -> np.ndarray:
    values = f(grid.nodes) if callable(f) else np.asarray(f)
    values = np.broadcast_to(values, (grid.size,))
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise EvaluationError(grid.nodes[i], values[i])
    return values


def integrate(grid: QuadratureGrid, f: Integrand):
    """``node_weight * sum f(node)`` with compensated summation.

    ``f`` is either a vectorised callable on the ``(N, 2n)`` node array or an
    array of precomputed node values.
    """
    values = evaluate(grid, f)
    total = compensated_sum(values)
    return total * grid.node_weight


@dataclass(frozen=True)
class ConvergenceReport:
    value_h: complex
    value_h2: complex
    relative_gap: float


def convergence_check(spec: GridSpec, f: Integrand) -> ConvergenceReport:
    """Compare the midpoint value at spacing h against spacing h/2."""
    v1 = integrate(build_grid(spec), f)
    v2 = integrate(build_grid(GridSpec(spec.n, spec.R, spec.h / 2)), f)
    gap = abs(v1 - v2) / max(abs(v2), 1e-300)
    return ConvergenceReport(v1, v2, float(gap))


def cube_offsets(side: float, h: float, n: int) -> tuple[np.ndarray, float]:
    """Midpoint nodes of an axis-aligned cube of the given side, centred at 0.

    The cube is split into ``ceil(side/h)`` cells per axis, so the local
    spacing never exceeds ``h``.  Returns ``(offsets (M, 2n), cell_volume)``.
    """
    m = max(1, int(math.ceil(side / h - 1e-9)))
    step = side / m
    axis = (np.arange(m) + 0.5) * step - side / 2
    mesh = np.meshgrid(*([axis] * (2 * n)), indexing="ij")
    offsets = np.stack([g.ravel() for g in mesh], axis=-1)
    return offsets, step ** (2 * n)


@dataclass(frozen=True, eq=False)
class PolarGrid:
    """Product rule on a disk of C: Gauss-Legendre in radius, trapezoid in angle.

    ``weights`` already include the Jacobian rho, so ``sum(weights * f(nodes))``
    approximates the area integral over ``|z| < radius``.
    """

    nodes: np.ndarray = field(repr=False)  # complex, flattened (radius-major)
    weights: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)
    radius: float

    @property
    def size(self) -> int:
        return self.nodes.size


def build_polar_grid(radius: float, breakpoints=(), n_angles: int = 128,
                     panel: float = 0.5, order: int = 20, inner: float = 0.0,
                     graded: bool = False) -> PolarGrid:
    """Polar product rule on the annulus ``inner < |z| < radius``.

    Radial panels are split at every breakpoint (radii where the integrand is
    discontinuous) and have width at most ``panel``.  With ``graded=True`` the
    panels shrink geometrically toward ``radius`` (for kernels peaking at a
    boundary circle).
    """
    cuts = {float(inner), float(radius)}
    cuts.update(float(b) for b in breakpoints if inner < b < radius)
    cuts = sorted(cuts)
    edges: list[float] = [cuts[0]]
    for a, b in zip(cuts[:-1], cuts[1:]):
        if graded:
            pts = [a]
            gap = b - a
            while gap > (b - a) * 1e-4 and len(pts) < 60:
                gap /= 2
                pts.append(b - gap)
            pts.append(b)
            edges.extend(pts[1:])
        else:
            k = max(1, int(math.ceil((b - a) / panel - 1e-9)))
            edges.extend(np.linspace(a, b, k + 1)[1:].tolist())
    x, wx = np.polynomial.legendre.leggauss(order)
    edges_arr = np.asarray(edges)
    lo, hi = edges_arr[:-1, None], edges_arr[1:, None]
    rho = ((hi - lo) / 2 * x + (hi + lo) / 2).ravel()
    wrho = ((hi - lo) / 2 * wx).ravel() * rho
    theta = 2 * np.pi * np.arange(n_angles) / n_angles
    wtheta = 2 * np.pi / n_angles
    nodes = (rho[:, None] * np.exp(1j * theta[None, :])).ravel()
    weights = np.repeat(wrho * wtheta, n_angles)
    return PolarGrid(nodes=nodes, weights=weights, radii=rho, angles=theta, radius=float(radius))
