"""Geometry and weights on the unit disk/ball: tents, Bergman metric, B_p and C_p, hat weights.

Measures use the normalised volume ``dv`` with ``v(B_n) = 1``; on the disk
``dv = dA / pi``.  Tents ``T_a`` and metric balls ``D(z, 1)`` of the disk are
Euclidean disks intersected with the unit disk, so integrals of radial
weights over them reduce to one-dimensional integrals

    int_{D(c, rho)} f(|w|) dA(w) = int f(r) 2 psi(r) r dr,

with ``psi(r)`` the half-angle of the circle ``|w| = r`` inside ``D(c, rho)``.
Those are evaluated by adaptive Gauss-Kronrod quadrature.  Every region is
confined to ``|w| <= 1 - delta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy.interpolate import CubicSpline

from .numerics import build_polar_grid, compensated_sum
from .weights import CharacteristicReport, _exponent

TANH1 = math.tanh(1.0)
DEFAULT_DELTA = 1e-3
APEX_MODULI = (0.0, 0.5, 0.9, 0.96, 0.99)
APEX_ANGLES = 16
_QUAD = {"epsabs": 0.0, "epsrel": 1e-10, "limit": 200}


# ---------------------------------------------------------------------------
# points and geometry


@dataclass(frozen=True)
class BallPoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=complex))
        if c.ndim != 1:
            raise ValueError("a ball point is a single complex vector")
        if not np.linalg.norm(c) < 1 - 1e-12:
            raise ValueError(f"point {c} is not inside the unit ball")
        object.__setattr__(self, "coords", c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


@dataclass(frozen=True)
class TentSpec:
    """Tent ``T_a``; ``tilde_a`` is the enlarged apex used for |a| > 19/20."""

    a: complex

    @property
    def tilde_a(self) -> Optional[complex]:
        r = abs(self.a)
        if r <= 19 / 20:
            return None
        return (1 - 20 * (1 - r)) * self.a / r

    @property
    def width(self) -> float:
        return 1 - abs(self.a)


def _inner(u: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``<u, z> = sum u_j conj(z_j)``; scalars are points of the disk."""
    u, z = np.asarray(u, dtype=complex), np.asarray(z, dtype=complex)
    if u.ndim == 0 or z.ndim == 0 or (u.ndim == 1 and z.ndim == 1 and u.shape != z.shape):
        return u * np.conj(z)
    return np.sum(u * np.conj(z), axis=-1)


def tent_membership(a, z) -> np.ndarray:
    """``z in T_a``, i.e. ``|1 - <z, a/|a|>| < 1 - |a|``; ``T_0`` is the whole ball.

    ``a`` is one point; ``z`` a point or an array of disk points.
    """
    a = np.asarray(a, dtype=complex)
    z = np.asarray(z, dtype=complex)
    ra = float(np.linalg.norm(a)) if a.ndim else abs(complex(a))
    if ra == 0:
        return np.ones(z.shape if a.ndim == 0 else z.shape[:-1], dtype=bool)
    return np.abs(1 - _inner(z, a / ra)) < 1 - ra


def pseudo_distance_sq(z, u) -> tuple[np.ndarray, np.ndarray]:
    """``(|phi_z(u)|^2, 1 - |phi_z(u)|^2)`` from symmetric closed forms.

    ``1 - |phi_z(u)|^2 = (1 - |z|^2)(1 - |u|^2) / |1 - <u, z>|^2`` and
    ``|phi_z(u)|^2 = (|z - u|^2 - (|z|^2|u|^2 - |<u, z>|^2)) / |1 - <u, z>|^2``.
    """
    z = np.asarray(z, dtype=complex)
    u = np.asarray(u, dtype=complex)
    zz = np.abs(_inner(z, z))
    uu = np.abs(_inner(u, u))
    uz = _inner(u, z)
    denom = np.abs(1 - uz) ** 2
    diff = np.abs(_inner(z - u, z - u))
    lagrange = np.maximum(zz * uu - np.abs(uz) ** 2, 0.0)
    x2 = np.maximum(diff - lagrange, 0.0) / denom
    q = (1 - zz) * (1 - uu) / denom
    return x2, q


def bergman_metric(z, u) -> np.ndarray:
    """``beta(z, u) = (1/2) log((1 + |phi_z(u)|) / (1 - |phi_z(u)|))``.

    Evaluated as ``log(1 + x) - log(1 - x^2)/2`` so points near the boundary keep
    full relative accuracy.
    """
    x2, q = pseudo_distance_sq(z, u)
    if np.any(q <= 0) or np.any(~np.isfinite(q)):
        raise OverflowError("point on or beyond the unit sphere; the metric is infinite")
    out = np.log1p(np.sqrt(x2)) - 0.5 * np.log(q)
    return out[()] if np.ndim(out) == 0 else out


def metric_ball_disk(z: complex, radius: float = 1.0) -> tuple[complex, float]:
    """Euclidean centre and radius of the disk ``D(z, radius)`` in the unit disk."""
    t = math.tanh(radius)
    z = complex(z)
    s = abs(z) ** 2
    denom = 1 - t * t * s
    return (1 - t * t) / denom * z, t * (1 - s) / denom


# ---------------------------------------------------------------------------
# disk weights


@dataclass(frozen=True, eq=False)
class DiskWeight:
    """Radial weight ``sigma(z) = radial(|z|)`` on the unit disk."""

    radial: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    family: str
    params: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __call__(self, z) -> np.ndarray:
        return self.radial(np.abs(np.asarray(z, dtype=complex)))

    def to_json(self) -> dict:
        if self.family not in ("std_radial", "constant"):
            raise ValueError(f"disk weight family {self.family!r} is not serialisable")
        return {"family": self.family, **self.params}


def std_radial(gamma: float) -> DiskWeight:
    """``(1 - |z|^2)^gamma``."""
    gamma = float(gamma)
    return DiskWeight(lambda r: (1.0 - np.asarray(r, dtype=float) ** 2) ** gamma, "std_radial", {"gamma": gamma})


def constant_disk(c: float = 1.0) -> DiskWeight:
    c = float(c)
    return DiskWeight(lambda r: np.full(np.shape(r), c), "constant", {"c": c})


def disk_weight_from_json(obj: dict) -> DiskWeight:
    fam = obj.get("family")
    if fam == "std_radial":
        return std_radial(obj["gamma"])
    if fam == "constant":
        return constant_disk(obj.get("c", 1.0))
    raise ValueError(f"unknown disk weight family {fam!r}")


# ---------------------------------------------------------------------------
# integrals over disks clipped to an annulus


def _half_angle(r: float, d: float, rho: float) -> float:
    """Half-angle of the circle ``|w| = r`` inside the disk ``|w - c| < rho`` with ``|c| = d``."""
    if d == 0:
        return math.pi if r < rho else 0.0
    c = (r * r + d * d - rho * rho) / (2 * r * d)
    return math.acos(min(1.0, max(-1.0, c)))


def section_integral(f: Callable[[float], float], d: float, rho: float, r_hi: float,
                     r_lo: float = 0.0) -> float:
    """``(1/pi) int_{D(c, rho), r_lo < |w| < r_hi} f(|w|) dA(w)`` with ``|c| = d``."""
    segments = []
    if rho > d:  # full circles for r < rho - d
        segments.append((r_lo, min(r_hi, rho - d)))
    if d > 0:
        segments.append((max(r_lo, abs(d - rho)), min(r_hi, d + rho)))
    total = 0.0
    with warnings.catch_warnings():
        # weights singular at the truncation circle trip QUADPACK's roundoff check
        warnings.simplefilter("ignore", sp_integrate.IntegrationWarning)
        for a, b in segments:
            if b > a:
                val, _ = sp_integrate.quad(lambda r: f(r) * 2 * _half_angle(r, d, rho) * r, a, b, **_QUAD)
                total += val
    return total / math.pi


def tent_region(a: complex, delta: float) -> tuple[float, float, float]:
    """``(|c|, rho, r_hi)`` describing ``T_a cap {|w| <= 1 - delta}``."""
    ra = abs(a)
    if ra == 0:
        return 0.0, 2.0, 1 - delta
    return 1.0, 1 - ra, 1 - delta


def tent_measure(a: complex, delta: float = 0.0) -> float:
    """``v(T_a)`` (normalised area), truncated at ``1 - delta``."""
    d, rho, hi = tent_region(a, delta)
    return section_integral(lambda r: 1.0, d, rho, hi)


def tent_measure_ratio(a: complex) -> float:
    """``v(T_a) / (1 - |a|)^2`` on the disk (n = 1)."""
    return tent_measure(a) / (1 - abs(a)) ** 2


def _region_average(f, d: float, rho: float, hi: float) -> float:
    vol = section_integral(lambda r: 1.0, d, rho, hi)
    if vol <= 0:
        return math.nan
    return section_integral(f, d, rho, hi) / vol


# ---------------------------------------------------------------------------
# hat weights


def hat_value(w: DiskWeight, r: float) -> float:
    """``sigma_hat`` at modulus r: the average of sigma over ``D(r, 1)``."""
    key = ("hat", round(float(r), 15))
    cache = w._cache
    if key not in cache:
        c, rho = metric_ball_disk(r, 1.0)
        cache[key] = _region_average(lambda s: float(w.radial(np.asarray(s))), abs(c), rho, 1.0)
    return cache[key]


HAT_TABLE_MIN_GAP = 1e-7


def hat_sigma(w: DiskWeight, table_size: int = 160) -> DiskWeight:
    """``sigma_hat(z) = sigma(D(z, 1)) / v(D(z, 1))``; radial when sigma is.

    With ``table_size > 0`` sigma_hat is tabulated at nodes uniform in
    ``log(1 - r)`` down to ``1 - r = 1e-7`` and ``log sigma_hat`` is
    interpolated by a cubic spline; ``table_size = 0`` integrates at every call.
    """
    if table_size <= 0:
        def radial(r):
            r = np.asarray(r, dtype=float)
            return np.vectorize(lambda s: hat_value(w, s), otypes=[float])(r)

        return DiskWeight(radial, "hat", {"base": w})

    u = np.linspace(0.0, math.log(HAT_TABLE_MIN_GAP), table_size)
    table = np.array([hat_value(w, 1 - math.exp(x)) for x in u])
    spline = CubicSpline(u[::-1], np.log(table[::-1]))

    def radial(r):
        r = np.asarray(r, dtype=float)
        x = np.log(np.maximum(1 - r, HAT_TABLE_MIN_GAP))
        return np.exp(spline(x))

    return DiskWeight(radial, "hat", {"base": w, "table_size": table_size})


# ---------------------------------------------------------------------------
# B_p and C_p characteristics


def apex_scan(moduli: Sequence[float] = APEX_MODULI, angles: int = APEX_ANGLES) -> np.ndarray:
    """Apexes ``|a| e^{i theta}``; modulus 0 contributes the single apex 0."""
    pts = []
    for m in moduli:
        if m == 0:
            pts.append(np.zeros(1, dtype=complex))
        else:
            pts.append(m * np.exp(2j * np.pi * np.arange(angles) / angles))
    return np.concatenate(pts)


def refined_moduli(moduli: Sequence[float]) -> list:
    """Insert midpoints between consecutive moduli (the refinement of the apex scan)."""
    m = sorted(moduli)
    out = [m[0]]
    for a, b in zip(m[:-1], m[1:]):
        out.extend([(a + b) / 2, b])
    return out


def _product_value(avg_s: float, avg_d: float, ep) -> float:
    if not (math.isfinite(avg_s) and math.isfinite(avg_d)):
        return math.inf
    return avg_s * avg_d ** (ep.p / ep.p_conj)


def _region_characteristic(w: DiskWeight, ep, d: float, rho: float, hi: float) -> float:
    avg_s = _region_average(lambda r: float(w.radial(np.asarray(r))), d, rho, hi)
    avg_d = _region_average(lambda r: float(w.radial(np.asarray(r))) ** (-ep.dual_power), d, rho, hi)
    return _product_value(avg_s, avg_d, ep)


def tent_characteristic(w: DiskWeight, p, a: complex, delta: float = DEFAULT_DELTA) -> float:
    """The B_p product on the single truncated tent ``T_a``; NaN when it is empty."""
    d, rho, hi = tent_region(a, delta)
    if not (rho == 2.0 or 1 - rho < hi):
        return math.nan
    return _region_characteristic(w, _exponent(p), d, rho, hi)


def ball_characteristic(w: DiskWeight, p, a: complex, delta: float = DEFAULT_DELTA) -> float:
    """The C_p product on the single metric ball ``D(a, 1)``."""
    c, rho = metric_ball_disk(a, 1.0)
    return _region_characteristic(w, _exponent(p), abs(c), rho, 1 - delta)


def _scan_report(values_by_modulus: dict, moduli, angles: int, refined: Optional[float]) -> CharacteristicReport:
    best = max(moduli, key=lambda m: values_by_modulus[m])
    value = values_by_modulus[best]
    gap = math.nan if refined is None else abs(refined - value) / max(abs(refined), 1e-300)
    return CharacteristicReport(value, np.array([best, 0.0]), max(moduli), 2 * math.pi / angles, gap,
                                finite=math.isfinite(value), refined_value=math.nan if refined is None else refined,
                                note="radial weight: apexes of equal modulus share one value")


def bp_characteristic(w: DiskWeight, p, moduli: Sequence[float] = APEX_MODULI, angles: int = APEX_ANGLES,
                      delta: float = DEFAULT_DELTA, refine: bool = True) -> CharacteristicReport:
    """Max over scanned apexes of ``avg_{T_a}(sigma) avg_{T_a}(sigma^{-p'/p})^{p/p'}``.

    Tents are truncated at ``|w| <= 1 - delta``; apexes whose truncated tent is
    empty are skipped.  For radial weights the tent average depends only on
    ``|a|``, so each modulus is integrated once and shared by its angles.
    ``argmax_center`` holds ``(|a|, 0)``.
    """
    ep = _exponent(p)
    if ep.is_endpoint:
        raise ValueError("B_p needs p > 1")

    def values(mods):
        out = {}
        for m in mods:
            d, rho, hi = tent_region(m, delta)
            if rho == 2.0 or 1 - rho < hi:  # non-empty after truncation
                out[m] = _region_characteristic(w, ep, d, rho, hi)
        return out

    vals = values(moduli)
    refined = None
    if refine:
        fine = values(refined_moduli(moduli))
        refined = max(fine.values())
    return _scan_report(vals, list(vals), angles, refined)


def cp_characteristic(w: DiskWeight, p, moduli: Sequence[float] = APEX_MODULI, angles: int = APEX_ANGLES,
                      delta: float = DEFAULT_DELTA, refine: bool = True) -> CharacteristicReport:
    """As :func:`bp_characteristic` with metric balls ``D(a, 1)`` in place of tents."""
    ep = _exponent(p)
    if ep.is_endpoint:
        raise ValueError("C_p needs p > 1")

    def values(mods):
        out = {}
        for m in mods:
            c, rho = metric_ball_disk(m, 1.0)
            out[m] = _region_characteristic(w, ep, abs(c), rho, 1 - delta)
        return out

    vals = values(moduli)
    refined = max(values(refined_moduli(moduli)).values()) if refine else None
    return _scan_report(vals, list(vals), angles, refined)


# ---------------------------------------------------------------------------
# containment lemma


def chain_pivot() -> dict:
    """Exact checks of the numeric pivots of the containment chain.

    ``(sqrt(10) + 1)^2 = 11 + 2 sqrt(10) < 20`` iff ``40 < 81``;
    ``tanh 1 < 4/5`` iff ``e^2 < 9`` iff ``e < 3``, and
    ``e < sum_{k<=K} 1/k! + 2/(K+1)!`` bounds e by a rational.
    Returns the comparisons and the floating values.
    """
    pivot_ok = 4 * 10 < 9 ** 2
    K = 12
    partial = sum(Fraction(1, math.factorial(k)) for k in range(K + 1))
    e_upper = partial + Fraction(2, math.factorial(K + 1))
    tanh_ok = e_upper < 3
    return {"sqrt10_plus_1_sq": (math.sqrt(10) + 1) ** 2, "pivot_below_20": pivot_ok,
            "tanh1": TANH1, "tanh1_below_4_5": tanh_ok, "e_upper_bound": float(e_upper),
            "exact": pivot_ok and tanh_ok}


@dataclass
class ContainmentReport:
    a: complex
    samples: int
    violations: int
    max_constant: float
    metric_violations: int = 0


def _sample_tent(a: complex, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points of ``T_a`` by rejection from the disk ``|w - a/|a|| < 1 - |a|``."""
    zeta = a / abs(a)
    s = 1 - abs(a)
    out = []
    need = count
    while need > 0:
        m = max(64, 3 * need)
        rad = s * np.sqrt(rng.random(m))
        ang = 2 * np.pi * rng.random(m)
        z = zeta + rad * np.exp(1j * ang)
        z = z[(np.abs(z) < 1) & tent_membership(a, z)]
        out.append(z[:need])
        need -= min(need, z.size)
    return np.concatenate(out)


def containment_check(a: complex, samples: int = 10_000, seed: int = 42) -> ContainmentReport:
    """Sample ``z in T_a`` and ``u in D(z, 1)``; count ``u`` outside ``T_{a~}``.

    Half of the ``u`` are drawn uniformly from the disk ``D(z, 1)`` and half
    from its boundary circle, where ``|1 - <u, a~/|a~|>|`` is largest.
    ``max_constant`` is the largest ``|1 - <u, a~/|a~|>| / (1 - |a|)``.
    """
    a = complex(a)
    if not abs(a) > 19 / 20:
        raise ValueError(f"containment needs |a| > 19/20, got {abs(a)}")
    rng = np.random.default_rng(seed)
    tilde = TentSpec(a).tilde_a
    z = _sample_tent(a, samples, rng)
    t2 = TANH1 * TANH1
    s = np.abs(z) ** 2
    centers = (1 - t2) / (1 - t2 * s) * z
    radii = TANH1 * (1 - s) / (1 - t2 * s)
    frac = np.sqrt(rng.random(samples))
    frac[: samples // 2] = 1.0 - 1e-12  # boundary of D(z, 1), just inside
    u = centers + radii * frac * np.exp(2j * np.pi * rng.random(samples))
    metric_bad = int(np.sum(bergman_metric(z, u) >= 1.0))
    const = np.abs(1 - u * np.conj(tilde / abs(tilde)))
    inside = const < 1 - abs(tilde)
    return ContainmentReport(a, samples, int(np.sum(~inside)), float(np.max(const) / (1 - abs(a))), metric_bad)


# ---------------------------------------------------------------------------
# Berezin transform of Bergman-Toeplitz operators


def bergman_berezin(phi: Callable[[np.ndarray], np.ndarray], z, delta: float = DEFAULT_DELTA,
                    breakpoints=(), n_angles: Optional[int] = None):
    """``T~_phi(z) = int phi |k_z|^2 dv`` on the disk ``|w| <= 1 - delta``.

    ``|k_z(w)|^2 = (1 - |z|^2)^2 / |1 - w conj(z)|^4``.  The integral is divided
    by the same quadrature of ``|k_z|^2`` alone, so ``phi = 1`` gives 1 exactly
    and the truncated mass does not bias the result.
    """
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(zs.shape, dtype=complex)
    for i, zi in enumerate(zs):
        if abs(zi) >= 1 - delta:
            raise ValueError(f"|z| = {abs(zi)} is outside the truncated disk")
        na = n_angles or max(256, 16 * int(math.ceil(2 * math.pi / (1 - abs(zi)))))
        polar = build_polar_grid(1 - delta, breakpoints=breakpoints, n_angles=na, graded=True)
        w = polar.nodes
        k2 = (1 - abs(zi) ** 2) ** 2 / np.abs(1 - w * np.conj(zi)) ** 4 * polar.weights
        out[i] = compensated_sum(phi(w) * k2) / compensated_sum(k2)
    if np.all(out.imag == 0):
        out = out.real
    return out[0] if np.ndim(z) == 0 else out


def disk_indicator(radius: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda w: (np.abs(w) < radius).astype(float)


# ---------------------------------------------------------------------------
# checks mirroring the hat lemma and the norm equivalence


def hat_lemma_check(gammas: Sequence[float] = (-0.3, 0.0, 0.5, 1.0), p=2,
                    moduli: Sequence[float] = APEX_MODULI, delta: float = DEFAULT_DELTA) -> list[dict]:
    """``[sigma_hat]_{B_p} / [sigma]_{B_p}`` for ``sigma = (1 - |z|^2)^gamma``."""
    rows = []
    for g in gammas:
        s = std_radial(g)
        bs = bp_characteristic(s, p, moduli, delta=delta)
        bh = bp_characteristic(hat_sigma(s), p, moduli, delta=delta)
        rows.append({"gamma": g, "bp_sigma": bs.value, "bp_hat": bh.value, "ratio": bh.value / bs.value,
                     "gap_sigma": bs.refinement_gap, "gap_hat": bh.refinement_gap,
                     "finite": bs.finite and bh.finite})
    return rows


def hat_ratio_bracket(w: DiskWeight, r_max: float = 0.95, count: int = 40) -> tuple[float, float]:
    """``(min, max)`` of ``sigma_hat / sigma`` over ``|z| in [0, r_max]``."""
    rs = np.linspace(0.0, r_max, count)
    h = hat_sigma(w).radial(rs)
    ratio = h / w.radial(rs)
    return float(ratio.min()), float(ratio.max())


def weighted_disk_norm(f: Callable[[np.ndarray], np.ndarray], w: DiskWeight, p, delta: float = DEFAULT_DELTA,
                       n_angles: int = 256) -> float:
    """``(int_{|z| <= 1 - delta} |f|^p sigma dv)^{1/p}`` on a graded polar grid."""
    ep = _exponent(p)
    polar = build_polar_grid(1 - delta, n_angles=n_angles, graded=True)
    weights = w.radial(polar.radii)
    vals = np.abs(f(polar.nodes)) ** ep.p * np.repeat(weights, polar.angles.size) * polar.weights / math.pi
    return compensated_sum(vals) ** (1 / ep.p)


def norm_equivalence_ratios(w: DiskWeight, p, functions: dict, delta: float = DEFAULT_DELTA) -> dict:
    """``||f||_{A^p_sigma} / ||f||_{A^p_{sigma_hat}}`` for each named test function."""
    hat = hat_sigma(w)
    return {name: weighted_disk_norm(f, w, p, delta) / weighted_disk_norm(f, hat, p, delta)
            for name, f in functions.items()}


def default_test_functions() -> dict:
    funcs = {f"z^{m}": (lambda w, m=m: w ** m) for m in (0, 1, 4, 16)}
    for a in (0.5, 0.9):
        funcs[f"K_{a}"] = lambda w, a=a: 1.0 / (1 - w * a) ** 2
    return funcs
