"""Weights on C^n and their cube characteristics.

A weight is a vectorised nonnegative function on interleaved real points.
Characteristics (doubling constants, A_{p,r}, joint two-weight and
symbol-adapted variants) are suprema over axis-aligned cubes of one fixed
side length; the supremum is approximated by scanning cube centres on a
lattice inside a scan radius, and every report carries the relative change
under halving of the scan step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .numerics import (
    QuadratureGrid,
    as_points,
    compensated_sum,
    cube_offsets,
    sq_norm,
)

INFINITY_THRESHOLD = 1e150
_CHUNK = 2_000_000  # evaluations per vectorised batch


class TruncationError(ValueError):
    """A cube or kernel escapes the quadrature box."""

    def __init__(self, message: str, required_R: float):
        super().__init__(f"{message}; need R >= {required_R:.6g}")
        self.required_R = required_R


class UnsupportedExponentError(ValueError):
    pass


class DivisionDomainError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ExponentPair:
    p: float
    p_conj: float

    @classmethod
    def of(cls, p: float) -> "ExponentPair":
        p = float(p)
        if not p >= 1:
            raise UnsupportedExponentError(f"exponent must satisfy p >= 1, got {p}")
        return cls(p, math.inf if p == 1 else p / (p - 1))

    @property
    def is_endpoint(self) -> bool:
        return self.p == 1

    @property
    def dual_power(self) -> float:
        """p'/p, the exponent in w' = w^{-p'/p}."""
        if self.is_endpoint:
            raise UnsupportedExponentError("p = 1 has no dual power p'/p")
        return self.p_conj / self.p


def _exponent(p) -> ExponentPair:
    return p if isinstance(p, ExponentPair) else ExponentPair.of(p)


@dataclass(frozen=True, eq=False)
class Weight:
    """Nonnegative weight with family metadata.

    ``evaluator`` maps an array of interleaved points ``(..., 2n)`` to an
    array ``(...)`` of values.  It must not mutate state.
    """

    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    family: str
    params: dict = field(default_factory=dict)
    radial: bool = False
    strictly_positive: bool = True

    def __call__(self, points) -> np.ndarray:
        return np.asarray(self.evaluator(as_points(points)), dtype=float)

    def to_json(self) -> dict:
        if self.family == "product":
            return {"family": "product", "factors": [f.to_json() for f in self.params["factors"]]}
        if self.family in _JSON_FAMILIES:
            return {"family": self.family, **self.params}
        raise ValueError(f"weight family {self.family!r} is not serialisable")


def constant(c: float = 1.0) -> Weight:
    c = float(c)
    if c < 0:
        raise ValueError("constant weight must be nonnegative")
    return Weight(lambda x: np.full(x.shape[:-1], c), "constant", {"value": c},
                  radial=True, strictly_positive=c > 0)


def gaussian(beta: float) -> Weight:
    """``exp(beta |z|^2)``."""
    beta = float(beta)
    return Weight(lambda x: np.exp(beta * sq_norm(x)), "gaussian", {"beta": beta}, radial=True)


def power(beta: float) -> Weight:
    """``(1 + |z|)^beta``."""
    beta = float(beta)
    return Weight(lambda x: (1.0 + np.sqrt(sq_norm(x))) ** beta, "power", {"beta": beta}, radial=True)


def radial_step(radius: float, inner: float, outer: float) -> Weight:
    """``inner`` on the open ball of the given radius, ``outer`` outside."""
    radius, inner, outer = float(radius), float(inner), float(outer)

    def ev(x):
        return np.where(sq_norm(x) < radius * radius, inner, outer)

    return Weight(ev, "radial_step", {"radius": radius, "inner": inner, "outer": outer},
                  radial=True, strictly_positive=min(inner, outer) > 0)


def anisotropic_power(betas: Sequence[float]) -> Weight:
    """``prod_k (1 + |x_k|)^{beta_k}`` over the 2n real coordinates."""
    b = np.asarray(betas, dtype=float)

    def ev(x):
        if x.shape[-1] != b.size:
            raise ValueError(f"anisotropic_power has {b.size} exponents, point has {x.shape[-1]} coordinates")
        return np.prod((1.0 + np.abs(x)) ** b, axis=-1)

    return Weight(ev, "anisotropic_power", {"betas": b.tolist()})


def product(factors: Sequence[Weight]) -> Weight:
    factors = list(factors)
    if not factors:
        raise ValueError("product weight needs at least one factor")

    def ev(x):
        out = factors[0].evaluator(x)
        for f in factors[1:]:
            out = out * f.evaluator(x)
        return out

    return Weight(ev, "product", {"factors": factors},
                  radial=all(f.radial for f in factors),
                  strictly_positive=all(f.strictly_positive for f in factors))


def scaled(w: Weight, c: float) -> Weight:
    return product([constant(c), w])


def tabulated(grid: QuadratureGrid, values) -> Weight:
    """Piecewise-constant weight read off the cells of a midpoint grid (zero outside)."""
    vals = np.asarray(values, dtype=float).reshape(grid.shape)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("tabulated weight needs finite nonnegative values")
    h, R = grid.spacing, grid.R

    def ev(x):
        idx = np.floor((x + R) / h).astype(int)
        inside = np.all((idx >= 0) & (idx < vals.shape[0]), axis=-1)
        idx = np.clip(idx, 0, vals.shape[0] - 1)
        out = vals[tuple(np.moveaxis(idx, -1, 0))]
        return np.where(inside, out, 0.0)

    return Weight(ev, "tabulated", {"spec": grid.spec.to_json()}, strictly_positive=bool(np.all(vals > 0)))


_JSON_FAMILIES = {"constant", "gaussian", "power", "radial_step", "anisotropic_power"}


def weight_from_json(obj: dict) -> Weight:
    fam = obj.get("family")
    if fam == "constant":
        return constant(obj.get("value", 1.0))
    if fam == "gaussian":
        return gaussian(obj["beta"])
    if fam == "power":
        return power(obj["beta"])
    if fam == "radial_step":
        return radial_step(obj["radius"], obj["inner"], obj["outer"])
    if fam == "anisotropic_power":
        return anisotropic_power(obj["betas"])
    if fam == "product":
        return product([weight_from_json(f) for f in obj["factors"]])
    raise ValueError(f"unknown weight family {fam!r}")


# ---------------------------------------------------------------------------
# cube masses


@dataclass(frozen=True)
class CubeSpec:
    center: np.ndarray
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError(f"cube side must be positive, got {self.side}")
        object.__setattr__(self, "center", np.asarray(as_points(self.center), dtype=float).ravel())


def _batched(points_count: int, per_point: int):
    step = max(1, _CHUNK // max(per_point, 1))
    for start in range(0, points_count, step):
        yield slice(start, min(start + step, points_count))


def cube_sums(f: Callable[[np.ndarray], np.ndarray], centers: np.ndarray, side: float,
              h: float, reduce: str = "sum") -> np.ndarray:
    """Midpoint integrals (or node maxima) of ``f`` over cubes ``Q_side(c)``.

    ``reduce="sum"`` returns integrals; ``reduce="max"`` returns the largest
    node value in each cube (the discrete essential supremum).
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    offsets, cell = cube_offsets(side, h, centers.shape[1] // 2)
    out = np.empty(centers.shape[0])
    for sl in _batched(centers.shape[0], offsets.shape[0]):
        vals = f(centers[sl, None, :] + offsets[None, :, :])
        out[sl] = vals.sum(axis=1) * cell if reduce == "sum" else vals.max(axis=1)
    return out


def _check_inside(grid: QuadratureGrid, center, side):
    if not grid.contains_box(center, side / 2):
        need = float(np.max(np.abs(center))) + side / 2
        raise TruncationError(f"cube of side {side} at {np.round(center, 6).tolist()} leaves the grid box", need)


def cube_mass(w: Weight, Q: CubeSpec, grid: QuadratureGrid) -> float:
    """``w(Q)``: midpoint integral of ``w`` over the cube, spacing at most the grid's."""
    _check_inside(grid, Q.center, Q.side)
    offsets, cell = cube_offsets(Q.side, grid.spacing, grid.n)
    return compensated_sum(w.evaluator(Q.center + offsets)) * cell


def hat_weight(w: Weight, h: float = 0.05) -> Weight:
    """``z -> w(Q_1(z))``, evaluated lazily by a cube subgrid of spacing <= h."""

    def ev(x):
        shape = x.shape[:-1]
        flat = x.reshape(-1, x.shape[-1])
        return cube_sums(w.evaluator, flat, 1.0, h).reshape(shape)

    return Weight(ev, "hat", {"base": w, "h": h}, radial=False, strictly_positive=w.strictly_positive)


def dual_weight(w: Weight, p) -> Weight:
    """``w' = w^{-p'/p}``."""
    ep = _exponent(p)
    power_ = ep.dual_power  # raises for p = 1
    if not w.strictly_positive:
        raise DivisionDomainError(f"dual weight of {w.family!r} needs a strictly positive weight")

    def ev(x):
        v = w.evaluator(x)
        if np.any(v <= 0):
            raise DivisionDomainError("dual weight evaluated where the weight vanishes")
        return v ** (-power_)

    return Weight(ev, "dual", {"base": w, "p": ep.p}, radial=w.radial)


# ---------------------------------------------------------------------------
# scans


@dataclass(frozen=True)
class ScanSpec:
    """Cube centres ``step * Z^{2n}`` inside the Euclidean ball of ``radius``.

    ``step=None`` means a quarter of the cube side.
    """

    radius: float = 6.0
    step: Optional[float] = None

    def resolved_step(self, side: float) -> float:
        return self.step if self.step is not None else side / 4

    def centers(self, n: int, side: float) -> np.ndarray:
        return lattice_points(self.resolved_step(side), self.radius, n)

    def halved(self, side: float) -> "ScanSpec":
        return ScanSpec(self.radius, self.resolved_step(side) / 2)

    @classmethod
    def from_json(cls, obj: dict | None) -> "ScanSpec":
        obj = obj or {}
        return cls(float(obj.get("radius", 6.0)), None if obj.get("step") is None else float(obj["step"]))

    def to_json(self) -> dict:
        return {"radius": self.radius, "step": self.step}


def lattice_points(step: float, radius: float, n: int) -> np.ndarray:
    """Points of ``step * Z^{2n}`` with Euclidean norm at most ``radius``."""
    k = int(math.floor(radius / step + 1e-9))
    axis = np.arange(-k, k + 1) * step
    mesh = np.meshgrid(*([axis] * (2 * n)), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    return pts[sq_norm(pts) <= radius * radius * (1 + 1e-12)]


@dataclass
class CharacteristicReport:
    value: float
    argmax_center: np.ndarray
    scan_radius: float
    scan_step: float
    refinement_gap: float
    finite: bool = True
    note: str = ""
    refined_value: float = math.nan

    CSV_COLUMNS = ("value", "argmax_re", "argmax_im", "scan_radius", "scan_step", "refinement_gap")

    def csv_row(self) -> list:
        c = np.asarray(self.argmax_center, dtype=float).ravel()
        return [self.value, c[0], c[1], self.scan_radius, self.scan_step, self.refinement_gap]


def _sentinel(x: float) -> float:
    return math.inf if (not math.isfinite(x) or x > INFINITY_THRESHOLD) else x


def _report(values: np.ndarray, centers: np.ndarray, scan: ScanSpec, step: float,
            refined: Optional[float], note: str = "") -> CharacteristicReport:
    values = np.where(np.isnan(values), np.inf, values)
    i = int(np.argmax(values))
    value = _sentinel(float(values[i]))
    if refined is None:
        gap = math.nan
    elif math.isinf(value) or math.isinf(refined):
        gap = 0.0 if value == refined else math.inf
    else:
        gap = abs(refined - value) / max(abs(refined), 1e-300)
    return CharacteristicReport(value, centers[i].copy(), scan.radius, step, gap,
                                finite=math.isfinite(value), note=note,
                                refined_value=math.nan if refined is None else refined)


def _scan(fn, n: int, side: float, scan: ScanSpec, refine: bool, note_fn=None) -> CharacteristicReport:
    step = scan.resolved_step(side)
    centers = scan.centers(n, side)
    values = fn(centers)
    refined = None
    if refine:
        fine_values = fn(scan.halved(side).centers(n, side))
        refined = _sentinel(float(np.where(np.isnan(fine_values), np.inf, fine_values).max()))
    rep = _report(values, centers, scan, step, refined)
    if note_fn is not None:
        rep.note = note_fn(values, centers)
    return rep


def doubling_constant(w: Weight, r: float, scan: ScanSpec = ScanSpec(), n: int = 1,
                      h: float = 0.05, refine: bool = True) -> CharacteristicReport:
    """Largest ``w(Q_{2r}(z)) / w(Q_r(z))`` over the scanned centres."""
    if not r > 0:
        raise ValueError("side r must be positive")
    if scan.radius < 2 * r:
        raise ValueError(f"scan radius {scan.radius} must be at least 2r = {2 * r}")

    def ratios(centers):
        big = cube_sums(w.evaluator, centers, 2 * r, h)
        small = cube_sums(w.evaluator, centers, r, h)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(small > 0, big / np.where(small > 0, small, 1.0), np.inf)

    def note(values, centers):
        return "non-doubling: zero cube mass" if np.any(np.isinf(values)) else ""

    return _scan(ratios, n, r, scan, refine, note)


@dataclass
class DoublingVerdict:
    doubling: bool
    radii: list
    values: list
    reason: str = ""


def doubling_verdict(w: Weight, r: float, radii=(3.0, 4.5, 6.0), n: int = 1, h: float = 0.05,
                     tolerance: float = 0.05) -> DoublingVerdict:
    """Doubling iff the doubling constant is finite and stops growing with the scan radius."""
    values = [doubling_constant(w, r, ScanSpec(rad), n, h, refine=False).value for rad in radii]
    if any(math.isinf(v) for v in values):
        return DoublingVerdict(False, list(radii), values, "non-doubling: zero cube mass")
    growth = [(b - a) / a for a, b in zip(values[:-1], values[1:])]
    if all(g > tolerance for g in growth):
        return DoublingVerdict(False, list(radii), values,
                               "doubling-suspect: constant grows with scan radius")
    return DoublingVerdict(True, list(radii), values)


def joint_characteristic(w: Weight, sigma: Weight, p, r: float, phi=None,
                         scan: ScanSpec = ScanSpec(), n: int = 1, h: float = 0.05,
                         refine: bool = True) -> CharacteristicReport:
    """Joint (and symbol-adapted) A_{p,r} characteristic.

    For p > 1 the per-cube quantity is
    ``avg_Q(w) * avg_Q(|phi|^{p'} sigma^{-p'/p})^{p/p'}`` (phi = 1 when absent);
    for p = 1 it is ``avg_Q(w) * max_Q(|phi| / sigma)`` with the maximum over
    quadrature nodes.  Values above 1e150 become ``inf``.
    """
    ep = _exponent(p)
    vol = r ** (2 * n)
    phi_abs = None if phi is None else (lambda x: np.abs(phi(x)))

    if ep.is_endpoint:
        def second_integrand(x):
            s = sigma.evaluator(x)
            a = np.ones(x.shape[:-1]) if phi_abs is None else phi_abs(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(a == 0, 0.0, a / s)
    else:
        if not sigma.strictly_positive:
            raise DivisionDomainError("p > 1 needs a strictly positive source weight")
        q, dp = ep.p_conj, ep.dual_power

        def second_integrand(x):
            s = sigma.evaluator(x)
            with np.errstate(over="ignore", divide="ignore"):
                t = s ** (-dp)
            if phi_abs is None:
                return t
            a = phi_abs(x)
            return np.where(a == 0, 0.0, a ** q * t)

    def per_cube(centers):
        avg_w = cube_sums(w.evaluator, centers, r, h) / vol
        with np.errstate(over="ignore", invalid="ignore"):
            if ep.is_endpoint:
                second = cube_sums(second_integrand, centers, r, h, reduce="max")
            else:
                second = (cube_sums(second_integrand, centers, r, h) / vol) ** (ep.p / ep.p_conj)
            prod_ = avg_w * second
        return np.where(avg_w == 0, 0.0, prod_)

    return _scan(per_cube, n, r, scan, refine)


def a_p_characteristic(w: Weight, p, r: float, **kw) -> CharacteristicReport:
    """``[w]_{A_{p,r}}`` (one-weight case)."""
    return joint_characteristic(w, w, p, r, **kw)


def lattice_masses(w: Weight, r: float, radius: float, n: int = 1, h: float = 0.05):
    """Cube masses ``w(Q_r(nu))`` for lattice points ``nu in r Z^{2n}`` with ``|nu| <= radius``."""
    nu = lattice_points(r, radius, n)
    return nu, cube_sums(w.evaluator, nu, r, h)


def lattice_doubling_constant(w: Weight, r: float, radius: float, n: int = 1,
                              h: float = 0.05) -> tuple[float, tuple]:
    """Smallest C with ``w(Q_r(nu)) <= C^{|nu-nu'|} w(Q_r(nu'))`` over scanned lattice pairs.

    Returns ``(C, (nu, nu'))`` with the pair attaining it.
    """
    nu, m = lattice_masses(w, r, radius, n, h)
    if np.any(m <= 0):
        return math.inf, (None, None)
    logm = np.log(m)
    d = np.sqrt(sq_norm(nu[:, None, :] - nu[None, :, :]))
    np.fill_diagonal(d, np.inf)
    rates = (logm[:, None] - logm[None, :]) / d
    i, j = np.unravel_index(int(np.argmax(rates)), rates.shape)
    return float(max(1.0, math.exp(rates[i, j]))), (nu[i], nu[j])
