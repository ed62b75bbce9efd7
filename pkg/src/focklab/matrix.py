"""Truncated operator calculus on the Fock space.

Toeplitz matrices in the orthonormal monomial basis
``e_m(z) = sqrt(alpha^m / m!) z^m`` (n = 1), products and sums of them,
node-to-node discretisations of weighted projection/Toeplitz operators, and
norm brackets ``lower <= ||T|| <= upper`` with explicit constants.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gammaln

from .fock import FockParams, SymbolFn
from .numerics import (
    CapacityError,
    ConfigurationError,
    GridSpec,
    QuadratureGrid,
    as_points,
    build_grid,
    build_polar_grid,
    fixed_order_blas,
    node_cap,
    sq_norm,
    to_complex,
)
from .weights import (
    ScanSpec,
    Weight,
    _exponent,
    cube_sums,
    doubling_verdict,
    joint_characteristic,
    lattice_doubling_constant,
    lattice_points,
)

MAX_DEGREE = 200
DEFAULT_SEED = 42


class DimensionMismatchError(ValueError):
    """Operands of an algebra operation live on different truncations."""


class NonConvergenceError(RuntimeError):
    """Power iteration hit the iteration cap before the relative tolerance."""

    def __init__(self, result: "PowerIterationResult"):
        super().__init__(f"power iteration did not converge in {result.iterations} iterations "
                         f"(last relative gap {result.gap:.3e}, estimate {result.value:.12g})")
        self.result = result


# ---------------------------------------------------------------------------
# Toeplitz matrices


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Matrix ``A[k, m] = <T e_m, e_k>_alpha`` of a truncated operator (n = 1)."""

    entries: np.ndarray = field(repr=False)
    basis_degree: int
    params: FockParams = FockParams()

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        size = self.basis_degree + 1
        if self.basis_degree < 0 or a.shape != (size, size):
            raise ValueError(f"entries must be {size}x{size}, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("operator matrix has non-finite entries")
        if self.params.n != 1:
            raise ValueError("operator matrices are implemented for n = 1 only")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def size(self) -> int:
        return self.basis_degree + 1

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_compatible(self, other)
        return OperatorMatrix(self.entries @ other.entries, self.basis_degree, self.params)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_compatible(self, other)
        return OperatorMatrix(self.entries + other.entries, self.basis_degree, self.params)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_compatible(self, other)
        return OperatorMatrix(self.entries - other.entries, self.basis_degree, self.params)

    def __neg__(self) -> "OperatorMatrix":
        return OperatorMatrix(-self.entries, self.basis_degree, self.params)

    def scale(self, c: complex) -> "OperatorMatrix":
        return OperatorMatrix(c * self.entries, self.basis_degree, self.params)

    def to_json(self) -> dict:
        flat = self.entries.ravel()
        return {"alpha": self.params.alpha, "degree": self.basis_degree,
                "entries": np.column_stack([flat.real, flat.imag]).ravel().tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "OperatorMatrix":
        degree = int(obj["degree"])
        raw = np.asarray(obj["entries"], dtype=float)
        entries = (raw[0::2] + 1j * raw[1::2]).reshape(degree + 1, degree + 1)
        return cls(entries, degree, FockParams(alpha=float(obj["alpha"])))


def identity_matrix(N: int, params: FockParams = FockParams()) -> OperatorMatrix:
    return OperatorMatrix(np.eye(N + 1, dtype=complex), N, params)


def zero_matrix(N: int, params: FockParams = FockParams()) -> OperatorMatrix:
    return OperatorMatrix(np.zeros((N + 1, N + 1), dtype=complex), N, params)


def _check_compatible(a: OperatorMatrix, b: OperatorMatrix):
    if a.basis_degree != b.basis_degree:
        raise DimensionMismatchError(f"basis degrees differ: {a.basis_degree} vs {b.basis_degree}")
    if a.params != b.params:
        raise DimensionMismatchError(f"Fock parameters differ: {a.params} vs {b.params}")


def log_basis_norms(params: FockParams, N: int) -> np.ndarray:
    """``log sqrt(alpha^m / m!)`` for m = 0..N."""
    m = np.arange(N + 1)
    return 0.5 * (m * math.log(params.alpha) - gammaln(m + 1))


def quadrature_radius(params: FockParams, N: int) -> float:
    """Radius past which every ``|e_m|^2 e^{-alpha|z|^2}``, m <= N, is negligible."""
    return math.sqrt((N + 12.0 * math.sqrt(N + 1) + 40.0) / params.alpha)


def _radial_factors(params: FockParams, N: int, rho: np.ndarray, wrho: np.ndarray) -> np.ndarray:
    """``sqrt(w_rho (alpha/pi)) e^{-alpha rho^2/2} sqrt(alpha^m/m!) rho^m`` as an (n_rho, N+1) array."""
    m = np.arange(N + 1)
    logs = (0.5 * np.log(wrho * params.alpha / math.pi)[:, None]
            - params.alpha * rho[:, None] ** 2 / 2
            + log_basis_norms(params, N)[None, :]
            + m[None, :] * np.log(rho)[:, None])
    return np.exp(logs)


def toeplitz_matrix(params: FockParams, phi: SymbolFn, N: int,
                    radius: Optional[float] = None, n_angles: Optional[int] = None) -> OperatorMatrix:
    """Matrix of ``T_phi`` on span{e_0..e_N} by polar product quadrature.

    The angular integral is a discrete Fourier transform of phi on each
    circle; radial Gauss-Legendre panels are split at ``phi.breakpoints`` so
    radial jumps are integrated exactly up to rounding.
    """
    if params.n != 1:
        raise ValueError("toeplitz_matrix is implemented for n = 1")
    if int(N) != N or N < 0:
        raise ValueError(f"basis degree must be a nonnegative integer, got {N}")
    if N > MAX_DEGREE:
        raise ConfigurationError(f"basis degree {N} exceeds the supported maximum {MAX_DEGREE}")
    N = int(N)
    need = math.sqrt((N + 10) / params.alpha)
    if radius is None:
        radius = quadrature_radius(params, N)
    elif radius < need:
        raise ConfigurationError(f"quadrature radius {radius} too small for degree {N}; "
                                 f"need at least {need:.3f}")
    if n_angles is None:
        n_angles = max(128, 2 * N + 4 * int(math.ceil(radius)) + 64)
    polar = build_polar_grid(radius, breakpoints=phi.breakpoints, n_angles=n_angles)
    n_r = polar.radii.size
    z = polar.nodes.reshape(n_r, n_angles)
    vals = phi.evaluator(as_points(z, 1)).astype(complex)
    # F[rho, d] = sum_j phi(rho, theta_j) e^{-i d theta_j}; the angular integral of
    # phi e^{i(m-k) theta} is (2 pi / n) F[(k - m) mod n]
    spectrum = np.fft.fft(vals, axis=1) * (2 * np.pi / n_angles)
    wrho = polar.weights.reshape(n_r, n_angles)[:, 0] / (2 * np.pi / n_angles)
    Rf = _radial_factors(params, N, polar.radii, wrho)
    A = np.zeros((N + 1, N + 1), dtype=complex)
    for d in range(-N, N + 1):
        k = np.arange(max(0, d), min(N, N + d) + 1)
        m = k - d
        A[k, m] = np.einsum("rk,rk,r->k", Rf[:, k], Rf[:, m], spectrum[:, d % n_angles])
    return OperatorMatrix(A, N, params)


def algebra_compose(terms: Sequence[Sequence[OperatorMatrix]]) -> OperatorMatrix:
    """``sum_i prod_j terms[i][j]`` (products taken left to right)."""
    if not terms or any(len(t) == 0 for t in terms):
        raise ValueError("need at least one non-empty product")
    first = terms[0][0]
    total = None
    for product_ in terms:
        acc = product_[0]
        _check_compatible(first, acc)
        for factor in product_[1:]:
            acc = acc @ factor
        total = acc if total is None else total + acc
    return total


def kernel_coefficients(params: FockParams, z, N: int) -> np.ndarray:
    """Coefficients of ``k_z`` in ``e_0..e_N``: ``e^{-alpha|z|^2/2} sqrt(alpha^m/m!) conj(z)^m``.

    Returns shape ``(N+1,)`` for one point and ``(k, N+1)`` for k points.
    """
    zc = to_complex(as_points(z, 1))[..., 0]
    single = np.ndim(zc) == 0
    zc = np.atleast_1d(zc)
    m = np.arange(N + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.log(np.abs(zc))
    with np.errstate(invalid="ignore"):
        logs = (-params.alpha * np.abs(zc)[:, None] ** 2 / 2 + log_basis_norms(params, N)[None, :]
                + m[None, :] * logr[:, None])
    logs[:, 0] = -params.alpha * np.abs(zc) ** 2 / 2
    out = np.exp(logs) * np.exp(-1j * m[None, :] * np.angle(zc)[:, None])
    return out[0] if single else out


def kernel_truncation_mass(params: FockParams, z, N: int) -> np.ndarray:
    """``sum_m |c_m(z)|^2``; equals 1 for the untruncated kernel."""
    c = kernel_coefficients(params, z, N)
    return np.sum(np.abs(c) ** 2, axis=-1)


def matrix_pairing(A: OperatorMatrix, z, u) -> np.ndarray:
    """``<T k_z, k_u>_alpha`` for the truncated operator."""
    cz = kernel_coefficients(A.params, z, A.basis_degree)
    cu = kernel_coefficients(A.params, u, A.basis_degree)
    return np.einsum("...k,...k->...", np.conj(cu), np.einsum("km,...m->...k", A.entries, cz))


def berezin_of_matrix(A: OperatorMatrix, z):
    """``<T k_z, k_z>`` from the truncated matrix; scalar for one point."""
    out = matrix_pairing(A, z, z)
    return complex(out) if np.ndim(out) == 0 else out


def rank_one_projector(params: FockParams, u, N: int) -> OperatorMatrix:
    """``k_u (x) k_u`` in the truncated basis, normalised to a unit vector there."""
    c = kernel_coefficients(params, u, N)
    c = c / np.linalg.norm(c)
    return OperatorMatrix(np.outer(c, np.conj(c)), N, params)


# ---------------------------------------------------------------------------
# power iteration


@dataclass(frozen=True)
class PowerIterationResult:
    value: float
    iterations: int
    gap: float
    converged: bool


def power_iteration(matvec, rmatvec, dim: int, seed: int = DEFAULT_SEED, rtol: float = 1e-8,
                    max_iter: int = 10_000) -> PowerIterationResult:
    """Largest singular value of an operator given ``x -> A x`` and ``y -> A^* y``.

    Iterates ``x <- A^*A x / ||A^*A x||`` from a seeded complex Gaussian start
    until the singular-value estimate changes by less than ``rtol`` relatively.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    prev = None
    gap = math.inf
    for it in range(1, max_iter + 1):
        y = matvec(x)
        s = float(np.linalg.norm(y))
        if s == 0.0:
            return PowerIterationResult(0.0, it, 0.0, True)
        x = rmatvec(y)
        nx = float(np.linalg.norm(x))
        x /= nx
        # ||A^*A x|| / ||A x|| is a sharper estimate than ||A x|| for unit x
        est = nx / s
        if prev is not None:
            gap = abs(est - prev) / est
            if gap < rtol:
                return PowerIterationResult(est, it, gap, True)
        prev = est
    return PowerIterationResult(prev, max_iter, gap, False)


def norm2_power_iteration(A: Union[OperatorMatrix, "WeightedGridOperator"], seed: int = DEFAULT_SEED,
                          rtol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Operator 2-norm; for grid operators the weighted norms are used.

    Raises :class:`NonConvergenceError` (carrying the last estimate and gap)
    when the iteration cap is reached.
    """
    if isinstance(A, OperatorMatrix):
        M = A.entries
    elif isinstance(A, WeightedGridOperator):
        if A.p != 2:
            raise ValueError("power iteration needs p = 2")
        M = A.scaled_matrix()
    else:
        raise TypeError(f"unsupported operator type {type(A).__name__}")
    MH = M.conj().T
    with fixed_order_blas():
        res = power_iteration(lambda v: M @ v, lambda v: MH @ v, M.shape[1], seed, rtol, max_iter)
    if not res.converged:
        raise NonConvergenceError(res)
    return res.value


# ---------------------------------------------------------------------------
# weighted grid operators


@dataclass(frozen=True, eq=False)
class WeightedGridOperator:
    """Discretised ``P_alpha (phi .)`` from ``L^p_{alpha,sigma}`` to ``L^p_{alpha,w}`` on grid nodes.

    ``(Pf)(z_i) = sum_j kappa(z_i, u_j) phi(u_j) f(u_j) h^{2n}`` with
    ``kappa(z, u) = (alpha/pi)^n exp(alpha <z, u> - alpha |u|^2)``.
    """

    params: FockParams
    grid: QuadratureGrid
    sigma: Weight
    w: Weight
    p: float
    phi: Optional[SymbolFn] = None
    sigma_values: np.ndarray = field(default=None, repr=False)
    w_values: np.ndarray = field(default=None, repr=False)
    phi_values: np.ndarray = field(default=None, repr=False)

    def apply(self, f_values) -> np.ndarray:
        """Node values of ``P(phi f)`` for node values of ``f`` (row-chunked)."""
        g = self.grid
        f = np.asarray(f_values, dtype=complex) * self.phi_values
        zc = g.complex_nodes
        base = -self.params.alpha * sq_norm(g.nodes)
        out = np.empty(g.size, dtype=complex)
        rows = max(1, 4_000_000 // g.size)
        for start in range(0, g.size, rows):
            sl = slice(start, start + rows)
            expo = self.params.alpha * (zc[sl] @ np.conj(zc).T) + base
            out[sl] = np.exp(expo) @ f
        return out * self.params.density_constant * g.node_weight

    def scaled_matrix(self) -> np.ndarray:
        """Matrix of the operator between the weighted l^2 frames (p = 2).

        ``M_ij = h^{2n} (alpha/pi)^n phi_j exp(alpha z_i conj(u_j) - alpha|z_i|^2/2 - alpha|u_j|^2/2)
        sqrt(w_i / sigma_j)``; its spectral norm is the weighted operator norm,
        and its conjugate transpose is the weighted adjoint in these frames.
        Columns where phi vanishes are dropped.
        """
        g = self.grid
        keep = np.flatnonzero(self.phi_values != 0)
        zc = g.complex_nodes
        half = self.params.alpha / 2 * sq_norm(g.nodes)
        expo = (self.params.alpha * (zc @ np.conj(zc[keep]).T) - half[:, None] - half[None, keep]
                + 0.5 * np.log(self.w_values)[:, None] - 0.5 * np.log(self.sigma_values[keep])[None, :])
        M = np.exp(expo) * self.phi_values[keep][None, :]
        return M * (self.params.density_constant * g.node_weight)

    def weighted_norm(self, f_values, weight_values) -> float:
        """Discrete ``L^p_{alpha, weight}`` norm of node values."""
        a = np.abs(np.asarray(f_values)) ** self.p
        dens = np.exp(-self.p * self.params.alpha / 2 * sq_norm(self.grid.nodes))
        return float(np.sum(a * dens * weight_values) * self.grid.node_weight) ** (1 / self.p)


def grid_operator_build(params: FockParams, sigma: Weight, w: Weight, p, grid: QuadratureGrid,
                        phi: Optional[SymbolFn] = None) -> WeightedGridOperator:
    ep = _exponent(p)
    if grid.n != params.n:
        raise ValueError(f"grid dimension {grid.n} does not match n = {params.n}")
    entries = grid.size * grid.size
    if entries > node_cap():
        raise CapacityError(entries, node_cap())
    s = np.asarray(sigma.evaluator(grid.nodes), dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("source weight sigma must be strictly positive on every node")
    wv = np.asarray(w.evaluator(grid.nodes), dtype=float)
    if np.any(wv < 0) or not np.all(np.isfinite(wv)):
        raise ValueError("target weight must be finite and nonnegative on every node")
    ph = np.ones(grid.size, dtype=complex) if phi is None else phi.evaluator(grid.nodes).astype(complex)
    return WeightedGridOperator(params, grid, sigma, w, ep.p, phi, s, wv, ph)


# ---------------------------------------------------------------------------
# norm brackets


@dataclass(frozen=True)
class ToeplitzProblem:
    """``T_phi`` on ``L^p_{alpha,w}``."""

    phi: SymbolFn
    w: Weight
    p: float

    kind = "toeplitz"

    @property
    def sigma(self) -> Weight:
        return self.w


@dataclass(frozen=True)
class ProjectionProblem:
    """``P_alpha : L^p_{alpha,sigma} -> L^p_{alpha,w}``."""

    sigma: Weight
    w: Weight
    p: float

    kind = "projection"
    phi = None


@dataclass
class NormBracket:
    lower: float
    point_estimate: Optional[float]
    upper: float
    method: str
    witnesses: dict = field(default_factory=dict)
    upper_reason: str = ""

    CSV_COLUMNS = ("lower", "point", "upper", "method", "argmax_re", "argmax_im", "doubling_C",
                   "characteristic", "schur_sum", "dual_gaussian_sum")

    def csv_row(self) -> list:
        c = np.asarray(self.witnesses.get("argmax_center", [math.nan, math.nan]), dtype=float)
        return [self.lower, math.nan if self.point_estimate is None else self.point_estimate, self.upper,
                self.method, c[0], c[1], self.witnesses.get("doubling_C", math.nan),
                self.witnesses.get("characteristic", math.nan), self.witnesses.get("schur_sum", math.nan),
                self.witnesses.get("dual_gaussian_sum", math.nan)]

    def is_sound(self, tol: float = 0.1) -> bool:
        ok = True
        if self.point_estimate is not None:
            ok &= self.lower <= self.point_estimate * (1 + tol)
            if math.isfinite(self.upper):
                ok &= self.point_estimate <= self.upper * (1 + tol)
        if math.isfinite(self.upper):
            ok &= self.lower <= self.upper
        return bool(ok)


def lattice_gaussian_sum(r: float, n: int, decay: float, growth: float = 1.0) -> tuple[float, float]:
    """``sum_{d in r Z^{2n}} growth^{|d|} exp(-decay |d|^2)`` and a rigorous tail bound.

    Terms with ``|d| <= D`` are summed exactly.  Past the maximiser of the
    radial profile ``g(t) = growth^t e^{-decay t^2}`` each lattice term is
    dominated by the average of g over its cell shifted toward the origin, so the
    tail is at most ``r^{-2n} int_{|x| > D - r sqrt(2n)} g(|x|) dx``.
    """
    dim = 2 * n
    lg = math.log(growth)
    t_star = max(0.0, lg / (2 * decay))
    diag = r * math.sqrt(dim)
    D = t_star + diag + 12.0 / math.sqrt(decay) + 2 * r
    pts = lattice_points(r, D, n)
    t = np.sqrt(sq_norm(pts))
    head = math.fsum(np.exp(lg * t - decay * t * t).tolist())
    a = D - diag
    sphere = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    tail_int, _ = sp_integrate.quad(lambda s: sphere * s ** (dim - 1) * math.exp(lg * s - decay * s * s),
                                    a, math.inf)
    tail = tail_int / r ** dim
    return head, tail


def _inside_box(centers: np.ndarray, r: float, R: float) -> np.ndarray:
    return np.all(np.abs(centers) + r / 2 <= R * (1 + 1e-12), axis=-1)


def norm_bracket(params: FockParams, problem: Union[ToeplitzProblem, ProjectionProblem], r: float = 1.0,
                 grid: Optional[QuadratureGrid] = None, scan: ScanSpec = ScanSpec(), h: float = 0.05,
                 seed: int = DEFAULT_SEED, doubling_radii=(3.0, 4.5, 6.0)) -> NormBracket:
    """Bracket the norm of ``T_phi`` or ``P_alpha`` between explicit certificates.

    lower: ``(alpha r^2/pi)^n e^{-5 n alpha r^2/4} [w, sigma]^{1/p}`` with the
    characteristic taken over scanned cubes that fit inside ``grid`` (or the
    whole scan without a grid), the necessity estimate of the test-function
    argument.

    upper (p > 1):
    ``(alpha/pi)^n e^{n alpha r^2} S_{p'}^{1/p'} r^{2n} [w, sigma]^{1/p} Schur^{1/p}``,
    ``S_{p'} = sum_d e^{-p' alpha |d|^2/8}``, ``Schur = sum_d C^{|d|} e^{-p alpha |d|^2/8}``
    over ``d in r Z^{2n}`` (each with its tail remainder) and C the lattice
    doubling constant of w.  For p = 1 the factor is
    ``(alpha/pi)^n e^{n alpha r^2} r^{2n} [w, sigma]_{A_1} sum_d C^{|d|} e^{-alpha|d|^2/4}``.
    A weight that fails the doubling verdict gets ``upper = inf``.

    point_estimate (p = 2 with a grid): power iteration on the grid operator.
    """
    ep = _exponent(problem.p)
    n = params.n
    phi = problem.phi
    witnesses: dict = {"r": r, "scan": scan.to_json(), "cube_h": h, "problem": problem.kind}

    char = joint_characteristic(problem.w, problem.sigma, ep.p, r, phi=phi, scan=scan, n=n, h=h)
    witnesses.update(characteristic=char.value, argmax_center=char.argmax_center.tolist(),
                     refinement_gap=char.refinement_gap)

    # lower certificate on cubes inside the operator box
    centers = scan.centers(n, r)
    if grid is not None:
        centers = centers[_inside_box(centers, r, grid.R)]
    local = joint_characteristic_at(problem.w, problem.sigma, ep.p, r, centers, phi=phi, h=h)
    i = int(np.argmax(local))
    lower_char = float(local[i])
    pref_lower = (params.alpha * r * r / math.pi) ** n * math.exp(-5 * n * params.alpha * r * r / 4)
    lower = pref_lower * lower_char ** (1 / ep.p)
    witnesses.update(lower_center=centers[i].tolist(), lower_characteristic=lower_char,
                     lower_prefactor=pref_lower)

    # upper certificate
    verdict = doubling_verdict(problem.w, r, radii=doubling_radii, n=n, h=h)
    witnesses["doubling_verdict"] = {"doubling": verdict.doubling, "values": verdict.values}
    reason = ""
    if not verdict.doubling:
        upper = math.inf
        reason = verdict.reason
    elif not char.finite:
        upper = math.inf
        reason = "characteristic is infinite on the scan"
    else:
        C, pair = lattice_doubling_constant(problem.w, r, scan.radius, n, h)
        base = (params.alpha / math.pi) ** n * math.exp(n * params.alpha * r * r) * r ** (2 * n)
        if ep.is_endpoint:
            head, tail = lattice_gaussian_sum(r, n, params.alpha / 4, C)
            schur = head + tail
            upper = base * char.value * schur
            witnesses.update(schur_sum=schur, schur_tail=tail)
        else:
            sh, st = lattice_gaussian_sum(r, n, ep.p_conj * params.alpha / 8)
            head, tail = lattice_gaussian_sum(r, n, ep.p * params.alpha / 8, C)
            schur = head + tail
            upper = base * (sh + st) ** (1 / ep.p_conj) * char.value ** (1 / ep.p) * schur ** (1 / ep.p)
            witnesses.update(schur_sum=schur, schur_tail=tail, dual_gaussian_sum=sh + st)
        witnesses.update(doubling_C=C, upper_prefactor=base)
        if not math.isfinite(upper):
            reason = "upper bound overflowed"

    point = None
    if grid is not None and ep.p == 2:
        op = grid_operator_build(params, problem.sigma, problem.w, 2, grid, phi=phi)
        point = norm2_power_iteration(op, seed=seed)
        witnesses["grid"] = grid.spec.to_json()
    method = f"{problem.kind}: test-function lower, lattice Schur upper"
    if point is not None:
        method += ", grid power iteration"
    return NormBracket(lower, point, upper, method, witnesses, reason)


def joint_characteristic_at(w: Weight, sigma: Weight, p, r: float, centers: np.ndarray,
                            phi: Optional[SymbolFn] = None, h: float = 0.05) -> np.ndarray:
    """Per-cube joint (phi-adapted) A_{p,r} quantity at the given centres.

    For p = 1 the dual average is replaced by the node maximum of ``|phi| / sigma``.
    """
    ep = _exponent(p)
    vol = r ** (2 * (centers.shape[-1] // 2))
    if ep.is_endpoint:
        def ratio(x):
            s = sigma.evaluator(x)
            a = np.ones(x.shape[:-1]) if phi is None else np.abs(phi.evaluator(x))
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(a == 0, 0.0, a / s)

        avg_w = cube_sums(w.evaluator, centers, r, h) / vol
        sup = cube_sums(ratio, centers, r, h, reduce="max")
        return np.where(avg_w == 0, 0.0, avg_w * sup)

    def dual(x):
        with np.errstate(over="ignore", divide="ignore"):
            t = sigma.evaluator(x) ** (-ep.dual_power)
        if phi is None:
            return t
        a = np.abs(phi.evaluator(x))
        return np.where(a == 0, 0.0, a ** ep.p_conj * t)

    avg_w = cube_sums(w.evaluator, centers, r, h) / vol
    avg_d = cube_sums(dual, centers, r, h) / vol
    with np.errstate(over="ignore", invalid="ignore"):
        out = avg_w * avg_d ** (ep.p / ep.p_conj)
    return np.where(avg_w == 0, 0.0, out)


# ---------------------------------------------------------------------------
# independent characteristic path


def _box_sums(values: np.ndarray, m: int) -> np.ndarray:
    """Sums of ``values`` over every axis-aligned window of m cells (prefix sums)."""
    dim = values.ndim
    c = values
    for ax in range(dim):
        c = np.cumsum(c, axis=ax)
    c = np.pad(c, [(1, 0)] * dim)
    out = 0.0
    size = c.shape[0] - m
    for corner in itertools.product((0, 1), repeat=dim):
        sl = tuple(slice(m, m + size) if b else slice(0, size) for b in corner)
        sign = (-1) ** (dim - sum(corner))
        out = out + sign * c[sl]
    return out


def sliding_window_characteristic(w: Weight, sigma: Weight, p, r: float, scan: ScanSpec = ScanSpec(),
                                  phi: Optional[SymbolFn] = None, n: int = 1,
                                  h: float = 0.05) -> tuple[float, np.ndarray]:
    """Joint (phi-adapted) characteristic from window sums over one global grid.

    Samples the integrands once on the midpoint grid covering the scan and
    obtains every cube integral by prefix-sum differences.  Requires ``r/h``
    and ``step/h`` to be integers so cube nodes coincide with grid nodes.
    Returns ``(value, argmax centre)``.
    """
    ep = _exponent(p)
    step = scan.resolved_step(r)
    m = int(round(r / h))
    k = int(round(step / h))
    if abs(m * h - r) > 1e-9 * r or abs(k * h - step) > 1e-9 * step:
        raise ConfigurationError("cube side and scan step must be integer multiples of h")
    half = scan.radius + r / 2
    cells = int(math.ceil(half / h - 1e-9))
    axis = (np.arange(-cells, cells) + 0.5) * h
    mesh = np.meshgrid(*([axis] * (2 * n)), indexing="ij")
    x = np.stack(mesh, axis=-1)
    wv = w.evaluator(x)
    with np.errstate(over="ignore", divide="ignore"):
        dual = sigma.evaluator(x) ** (-ep.dual_power)
    if phi is not None:
        a = np.abs(phi.evaluator(x))
        dual = np.where(a == 0, 0.0, a ** ep.p_conj * dual)
    vol_cell = h ** (2 * n)
    vol = r ** (2 * n)
    sw = _box_sums(wv, m) * vol_cell / vol
    sd = _box_sums(dual, m) * vol_cell / vol
    # window starting at index i covers nodes i..i+m-1, centred at axis[i] - h/2 + r/2
    starts = axis[: sw.shape[0]] - h / 2 + r / 2
    centers = scan.centers(n, r)
    idx = np.rint((centers - starts[0]) / h).astype(int)
    sel = tuple(idx[:, j] for j in range(2 * n))
    aw, ad = sw[sel], sd[sel]
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.where(aw == 0, 0.0, aw * ad ** (ep.p / ep.p_conj))
    i = int(np.argmax(vals))
    return float(vals[i]), centers[i]


def default_operator_grid(R: float = 6.0, h: float = 0.25, n: int = 1) -> QuadratureGrid:
    return build_grid(GridSpec(n, R, h))
