"""Stationary analysis of the dot-continuum model.

For a dot energy ``E`` and coupling ``tau`` the Hamiltonian acts on
``L^2(R^3) (+) C``.  Every spectral quantity reduces to the Feshbach map

    F(z, E) = E - z - tau^2 int mu(lam) / (lam - z) dlam,

whose real zero below the continuum is the bound state ``lam(E)`` and whose
boundary values on ``[0, inf)`` fix the spectral density of the dot state.
Eigenvectors are ``Psi(E) = c (-tau r0(lam) phi, 1)`` with
``c^2 = 1 / (1 + tau^2 m_2(lam))``; they are represented by the pair
``(c, lam)`` and inner products reduce to integrals of ``mu`` against rational
weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import formfactor as ff
from .errors import (
    DispersiveAssumptionError,
    DivergenceError,
    DomainError,
    ModelInvalidError,
    NoBoundStateError,
    NormalizationError,
    UnsupportedRegimeError,
)
from .quadrature import filon, filon_nodes, gauss_nodes, graded_edges, power_head

__all__ = [
    "Model",
    "BoundState",
    "CriticalData",
    "EigenState",
    "feshbach_below",
    "feshbach_boundary",
    "principal_value",
    "critical_energy",
    "bound_state",
    "cutoff_bound_state",
    "instantaneous_state",
    "critical_state",
    "spectral_density",
    "density_integral",
    "static_survival",
    "static_survival_oracle",
    "assumption3_check",
    "resonance_position",
    "overlap",
    "overlap_distance",
    "projection_derivative_norm",
    "check_subcritical",
]

ROOT_RESIDUAL = 1e-12
NORM_TOL = 1e-8


@dataclass(frozen=True)
class Model:
    """Coupled dot-continuum model: a spectral measure and a coupling ``tau >= 0``.

    ``tau = 0`` (the decoupled model) is accepted for testing.
    """

    measure: ff.SpectralMeasure
    tau: float

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau < 0:
            raise ModelInvalidError(f"coupling must be a nonnegative real, got {self.tau!r}")
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def tau2(self):
        return self.tau * self.tau


@dataclass(frozen=True)
class BoundState:
    """Instantaneous eigenpair below the continuum: energy ``lam`` and ``|<dot, Psi>|^2``."""

    E: float
    lam: float
    dot_weight_sq: float

    @property
    def dot_amp(self):
        return float(np.sqrt(self.dot_weight_sq))


@dataclass(frozen=True)
class CriticalData:
    """Threshold data: ``E_c = tau^2 m_1(0)`` and ``dot_weight_sq_c = 1 / (1 + tau^2 m_2(0))``."""

    E_c: float
    dot_weight_sq_c: float


@dataclass(frozen=True)
class EigenState:
    """Unit vector ``dot_amp * (-tau r0(pole) phi, 1)``; ``pole=None`` is the bare dot state."""

    model: Model
    dot_amp: complex
    pole: float | None = None

    @classmethod
    def from_bound(cls, model, bs):
        return cls(model, bs.dot_amp, bs.lam)

    def norm_sq(self):
        tail = 0.0 if self.pole is None else self.model.tau2 * ff.moment(
            self.model.measure, 2, self.pole)
        return abs(self.dot_amp) ** 2 * (1.0 + tail)


# ---------------------------------------------------------------------------
# Feshbach map


def _feshbach_real(model, x, E):
    if model.tau == 0.0:
        return E - x
    return E - x - model.tau2 * ff.moment(model.measure, 1, x)


def feshbach_below(model, x, E):
    """``F(x, E) = E - x - tau^2 m_1(x)`` for ``x < 0``; strictly decreasing in ``x``."""
    x = float(x)
    if not x < 0:
        raise DomainError("feshbach_below needs x < 0; use feshbach_boundary on the continuum")
    return float(_feshbach_real(model, x, E))


def principal_value(m, x, chunk=64):
    """``P.V. int mu(lam) / (lam - x) dlam`` for ``x`` inside the support.

    Uses subtraction: ``int (mu(lam) - mu(x)) / (lam - x)`` over the truncated
    support plus ``mu(x) ln((Lambda - x) / (x - lower))`` plus the tail.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    lower, cut = m.support_lower, m.cutoff
    if np.any(x <= lower) or np.any(x >= cut):
        raise DomainError("principal value needs lower < x < Lambda")
    _, nodes, w = m._gauss
    mu_nodes = m.density(nodes)
    mu_x = m.density(x)
    x_head = m._gauss[0][0]
    out = np.empty(x.shape)
    for s in range(0, x.size, chunk):
        xs = x[s:s + chunk, None]
        mxs = mu_x[s:s + chunk, None]
        diff = nodes[None, :] - xs
        hit = diff == 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            q = (mu_nodes[None, :] - mxs) / diff
        if np.any(hit):
            # a node sitting exactly on x: the difference quotient is mu'(x)
            rows, _ = np.nonzero(hit)
            xh = xs[rows, 0]
            h = 1e-6 * (xh - lower)
            q[hit] = (m.density(xh + h) - m.density(xh - h)) / (2.0 * h)
        out[s:s + chunk] = q @ w
    # head [lower, x_head]: mu is negligible there, only the subtracted constant survives
    out += mu_x * (-(x_head - lower) / (lower - x))
    head_mu = m.norm_constant * m._raw_head(lambda lam: 1.0)
    out += head_mu / (lower - x)
    out += mu_x * np.log((cut - x) / (x - lower))
    out += m.tail(1, 0.0)
    return float(out[0]) if scalar else out


def feshbach_boundary(model, r, E):
    """``F(r^2 + i0, E)``: real part via principal value, imaginary part ``-pi tau^2 mu(r^2)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("boundary values need r > 0")
    lam = r * r
    return _boundary_lam(model, lam, E)


def _boundary_lam(model, lam, E):
    lam = np.asarray(lam, dtype=float)
    m = model.measure
    out = (E - lam).astype(complex)
    if model.tau == 0.0:
        return complex(out) if out.ndim == 0 else out
    inside = (lam > m.support_lower) & (lam < m.cutoff)
    re = np.zeros(lam.shape)
    lam_in = lam[inside]
    if lam_in.size:
        re[inside] = principal_value(m, lam_in)
    below = lam <= m.support_lower
    if np.any(below):
        re[below] = [_moment_or_limit(m, v) for v in np.atleast_1d(lam[below])]
    above = lam >= m.cutoff
    if np.any(above):
        # far above the truncation mu is negligible; P.V. ~ -1/lam * (mass below)
        re[above] = -1.0 / lam[above]
    out = out - model.tau2 * re - 1j * (model.tau2 * np.pi) * m.density(lam)
    return complex(out) if out.ndim == 0 else out


def _moment_or_limit(m, x):
    try:
        return ff.moment(m, 1, x)
    except DivergenceError:
        return np.inf


def critical_energy(model):
    """``E_c = tau^2 m_1(0)`` and ``dot_weight_sq_c = 1 / (1 + tau^2 m_2(0))``."""
    m = model.measure
    try:
        m1 = ff.moment(m, 1, 0.0)
        m2 = ff.moment(m, 2, 0.0)
    except DivergenceError as exc:
        raise ModelInvalidError(f"threshold moments diverge: {exc}") from None
    return CriticalData(model.tau2 * m1, 1.0 / (1.0 + model.tau2 * m2))


def _solve_bound(model, E, upper):
    """Root of ``F(x, E)`` on ``(-inf, upper]`` where ``F(upper) < 0``."""
    m = model.measure
    f_up = _feshbach_real(model, upper, E)
    if not f_up < 0:
        raise NoBoundStateError(f"F(upper, E) = {f_up} is not negative")
    lo = min(E, upper) - model.tau2 * ff.moment(m, 1, min(E, upper)) - 1.0
    lam = optimize.brentq(lambda x: _feshbach_real(model, x, E), lo, upper,
                          xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    res = _feshbach_real(model, lam, E)
    if abs(res) > ROOT_RESIDUAL:
        raise NoBoundStateError(f"root refinement stalled at residual {res}")
    w = 1.0 / (1.0 + model.tau2 * ff.moment(m, 2, lam))
    return BoundState(float(E), float(lam), float(w))


def bound_state(model, E):
    """Bound state ``lam(E) < min(E, 0)`` for ``E < E_c``; raises :class:`NoBoundStateError` otherwise."""
    E = float(E)
    if model.tau == 0.0:
        if E >= 0:
            raise NoBoundStateError("decoupled dot with E >= 0 is embedded in the continuum")
        return BoundState(E, E, 1.0)
    crit = critical_energy(model)
    if E >= crit.E_c:
        raise NoBoundStateError(f"E = {E} is not below E_c = {crit.E_c}")
    upper = min(E, 0.0)
    if upper == 0.0:
        # F(0, E) = E - E_c < 0 exactly
        return _solve_bound(model, E, 0.0)
    return _solve_bound(model, E, upper)


def cutoff_bound_state(model, E):
    """Bound state of a measure vanishing below ``delta^2``, valid for every ``E < delta^2``.

    The root of the reduced map ``F_delta(x, E) = E - x - tau^2 m_1(x)``
    satisfies ``lam < E < delta^2``.
    """
    m = model.measure
    gap = m.support_lower
    if not gap > 0:
        raise UnsupportedRegimeError("measure has no infrared gap")
    E = float(E)
    if E >= gap:
        raise UnsupportedRegimeError(f"E = {E} is not below the gap edge {gap}")
    if model.tau == 0.0:
        return BoundState(E, E, 1.0)
    return _solve_bound(model, E, E)


def instantaneous_state(model, E):
    """Bound state for ``E``: the gap branch for gapped measures, the threshold branch otherwise."""
    if model.measure.support_lower > 0:
        return cutoff_bound_state(model, E)
    return bound_state(model, E)


def critical_state(model):
    """``Psi_c`` as an :class:`EigenState` (pole at the threshold)."""
    crit = critical_energy(model)
    return EigenState(model, np.sqrt(crit.dot_weight_sq_c), 0.0)


def check_subcritical(model, E_m):
    """Raise :class:`ModelInvalidError` unless ``E_c < E_m`` (the pulse crosses the threshold)."""
    crit = critical_energy(model)
    if not crit.E_c < E_m:
        raise ModelInvalidError(
            f"coupling too large: E_c = {crit.E_c:.6g} is not below the pulse maximum {E_m}")
    return crit


# ---------------------------------------------------------------------------
# continuum


def resonance_position(model, E):
    """Smallest ``r_E^2 > 0`` with ``Re F(r_E^2 + i0, E) = 0``, or ``None``."""
    m = model.measure
    lower = m.support_lower
    hi = max(4.0 * abs(E) + 4.0 * model.tau2 * ff.moment(m, 1, min(lower, 0.0) - 1.0) + 1.0,
             lower * 2 + 1.0)
    hi = min(hi, 0.5 * (lower + m.cutoff))
    grid = lower + (hi - lower) * np.geomspace(1e-8, 1.0, 400)
    re = _boundary_lam(model, grid, E).real
    idx = np.nonzero(np.sign(re[:-1]) != np.sign(re[1:]))[0]
    if idx.size == 0:
        return None
    i = idx[0]
    return float(optimize.brentq(lambda x: _boundary_lam(model, x, E).real,
                                 grid[i], grid[i + 1], xtol=1e-15, rtol=1e-14))


def _resonance_width(model, E, lam_r):
    dre = _boundary_lam(model, lam_r * 1.001, E).real - _boundary_lam(model, lam_r * 0.999, E).real
    slope = abs(dre / (0.002 * lam_r))
    return np.pi * model.tau2 * model.measure.density(lam_r) / max(slope, 1e-300)


def _density_edges(model, E, ratio):
    """Graded mesh for ``rho``, refined around the resonance when there is one."""
    m = model.measure
    edges = graded_edges(m.support_lower, m.cutoff, ff.HEAD_OFFSET, ratio, m.breakpoints)
    lam_r = resonance_position(model, E) if model.tau > 0 else None
    if lam_r is not None and lam_r > m.support_lower:
        width = max(_resonance_width(model, E, lam_r), 1e-12)
        offs = width * np.geomspace(1.0 / 64, 256.0, 80)
        extra = np.concatenate((lam_r - offs, [lam_r], lam_r + offs))
        extra = extra[(extra > edges[0]) & (extra < edges[-1])]
        edges = np.union1d(edges, extra)
    return edges


def spectral_density(model, E, lam):
    """``rho(lam) = tau^2 mu(lam) / |F(lam + i0, E)|^2`` on ``lam > 0`` (zero where ``mu`` vanishes)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("spectral density is defined for lam > 0")
    mu_l = model.measure.density(lam)
    out = np.zeros(lam.shape)
    nz = mu_l > 0
    if model.tau > 0 and np.any(nz):
        F = _boundary_lam(model, lam[nz], E)
        out[nz] = model.tau2 * mu_l[nz] / np.abs(F) ** 2
    return float(out) if out.ndim == 0 else out


def density_integral(model, E):
    """``int_0^inf rho(lam; E) dlam`` (continuum weight of the dot state)."""
    if model.tau == 0.0:
        return 0.0
    edges = _density_edges(model, E, ff.GAUSS_RATIO)
    nodes, w = gauss_nodes(edges, ff.GAUSS_ORDER)
    total = np.dot(w, spectral_density(model, E, nodes))
    lower = model.measure.support_lower
    x0 = edges[0]
    x = np.array([x0, lower + 2 * (x0 - lower)])
    f = spectral_density(model, E, x)
    if f[0] > 0:
        total += power_head(lower, x0, x[1], f[0], f[1])
    return float(total)


def static_survival(model, E_a, t, check=True):
    """Dot survival amplitude ``int exp(-i lam t) rho(lam; E_a) dlam`` at fixed ``E_a``.

    Raises :class:`DispersiveAssumptionError` when ``|F(r^2 + i0, E_a)|`` has
    zero infimum (``check=False`` skips the scan).
    """
    if check:
        holds, c = assumption3_check(model, E_a)
        if not holds:
            raise DispersiveAssumptionError(f"inf |F| = {c:.3g} at E_a = {E_a}")
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    edges = _density_edges(model, E_a, ff.FILON_RATIO)
    e, mids = filon_nodes(edges)
    fe = spectral_density(model, E_a, e)
    fm = spectral_density(model, E_a, mids)
    out = filon(edges, fe, fm, t)
    lower = model.measure.support_lower
    x = np.array([edges[0], lower + 2 * (edges[0] - lower)])
    f = spectral_density(model, E_a, x)
    if f[0] > 0:
        out = out + power_head(lower, x[0], x[1], f[0], f[1], t)
    return complex(out[0]) if scalar else out


def static_survival_oracle(model, E_a, t, N=4000):
    """Finite-mode survival amplitude ``<dot, exp(-i t H_N) dot>`` by diagonalization.

    ``H_N`` is the arrowhead matrix with diagonal ``(lam_1..lam_N, E_a)`` and
    couplings ``tau sqrt(w_j mu(lam_j))`` from :func:`formfactor.discretize`.
    """
    lam, w = ff.discretize(model.measure, N)
    g = model.tau * np.sqrt(w * model.measure.density(lam))
    H = np.zeros((N + 1, N + 1))
    H[np.arange(N), np.arange(N)] = lam
    H[N, N] = E_a
    H[N, :N] = g
    H[:N, N] = g
    evals, vecs = np.linalg.eigh(H)
    weights = np.abs(vecs[N, :]) ** 2
    t = np.asarray(t, dtype=float)
    return np.exp(-1j * np.multiply.outer(t, evals)) @ weights


def assumption3_check(model, E_a):
    """Locate ``c = inf_r |F(r^2 + i0, E_a)|``; ``holds`` is ``c > 0`` beyond round-off.

    Scans a graded energy grid (including the threshold value ``E_a - E_c``)
    and refines locally around the grid minimum and around the zero of
    ``Re F``.  For measures with a gap ``(0, lower)`` a real zero of ``F``
    inside the gap gives ``c = 0``.
    """
    m = model.measure
    lower = m.support_lower
    edges = graded_edges(lower, m.cutoff, ff.HEAD_OFFSET, ff.GAUSS_RATIO, m.breakpoints)
    grid = edges[1:-1]
    vals = np.abs(_boundary_lam(model, grid, E_a))
    candidates = [float(vals.min())]
    if model.tau > 0 and lower == 0:
        try:
            candidates.append(abs(E_a - critical_energy(model).E_c))
        except ModelInvalidError:
            pass
    i = int(np.argmin(vals))
    brackets = [(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)])]
    lam_r = resonance_position(model, E_a) if model.tau > 0 else (E_a if E_a > 0 else None)
    if lam_r is not None:
        j = int(np.searchsorted(grid, lam_r))
        brackets.append((grid[max(j - 2, 0)], grid[min(j + 1, grid.size - 1)]))
        candidates.append(float(abs(_boundary_lam(model, lam_r, E_a))))
    for a, b in brackets:
        if b > a:
            res = optimize.minimize_scalar(lambda x: abs(_boundary_lam(model, x, E_a)),
                                           bounds=(a, b), method="bounded",
                                           options={"xatol": 1e-14 * max(b, 1.0)})
            candidates.append(float(res.fun))
    if model.tau > 0 and lower > 0:
        # below the support F is real and decreasing: a sign change is an embedded eigenvalue
        lo = E_a - model.tau2 * ff.moment(m, 1, 0.0)
        hi = float(np.real(_boundary_lam(model, lower, E_a)))
        if lo > 0 > hi:
            candidates.append(0.0)
    c = min(candidates)
    scale = max(1.0, abs(E_a))
    return bool(c > 1e-8 * scale), c


# ---------------------------------------------------------------------------
# eigenvector geometry


def _check_unit(u):
    n = u.norm_sq()
    if abs(n - 1.0) > NORM_TOL:
        raise NormalizationError(f"state has squared norm {n}")


def overlap(u, v):
    """``<u, v>`` for two :class:`EigenState` values of the same model."""
    _check_unit(u)
    _check_unit(v)
    cross = 1.0
    if u.pole is not None and v.pole is not None:
        m = u.model.measure
        p, q = u.pole, v.pole
        tail = m.integrate(lambda lam: 1.0 / ((lam - p) * (lam - q)), k_tail=2, x_tail=min(p, q))
        cross = 1.0 + u.model.tau2 * tail
    return complex(np.conj(u.dot_amp) * v.dot_amp * cross)


def overlap_distance(u, v):
    """``|| |u><u| - |v><v| || = sqrt(1 - |<u, v>|^2)`` for unit states.

    Evaluated as a Gram determinant written without cancellation, so small
    distances keep full relative accuracy.
    """
    _check_unit(u)
    _check_unit(v)
    tau2 = u.model.tau2
    a2, b2 = abs(u.dot_amp) ** 2, abs(v.dot_amp) ** 2
    if u.pole is None and v.pole is None:
        return 0.0
    if u.pole is None or v.pole is None:
        c2 = b2 if u.pole is None else a2
        return float(np.sqrt(max(1.0 - c2, 0.0)))
    p, q = u.pole, v.pole
    if p == q or tau2 == 0.0:
        return 0.0
    m = u.model.measure
    wfun = lambda lam: 1.0 / ((lam - p) ** 2 * (lam - q) ** 2)
    B0 = m.integrate(wfun, k_tail=4, x_tail=min(p, q))
    B1 = m.integrate(lambda lam: lam * wfun(lam))
    mean = B1 / B0
    Bc = m.integrate(lambda lam: (lam - mean) ** 2 * wfun(lam), k_tail=2, x_tail=min(p, q))
    d2 = a2 * b2 * (p - q) ** 2 * (tau2 * B0 + tau2 * tau2 * B0 * Bc)
    return float(np.sqrt(min(max(d2, 0.0), 1.0)))


def projection_derivative_norm(model, E, rel_step=1e-2):
    """Forward difference ``||P(E + h) - P(E)|| / h`` with ``h = rel_step (E_c - E)``."""
    crit = critical_energy(model)
    if not E < crit.E_c:
        raise NoBoundStateError("derivative probe needs E < E_c")
    h = rel_step * (crit.E_c - E)
    u = EigenState.from_bound(model, bound_state(model, E))
    v = EigenState.from_bound(model, bound_state(model, E + h))
    return overlap_distance(u, v) / h
