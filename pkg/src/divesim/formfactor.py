"""Reduced spectral measures of the dot-channel coupling.

The coupling function only enters through the density

    mu(lam) dlam = (sqrt(lam) / 2) * int_{S^2} |phi_hat(sqrt(lam) w)|^2 dw dlam,

normalized to unit mass.  Every quantity the other modules need is an
integral of ``mu`` against an explicit weight: moments
``m_k(x) = int mu(lam) (lam - x)^-k dlam``, the free memory kernel
``K(t) = int mu(lam) exp(-i lam t) dlam`` and the resolvent-weighted kernels
``h`` and ``h2`` carried by the tails of the instantaneous eigenvectors.

Non-oscillatory integrals use composite Gauss-Legendre on a mesh graded
geometrically away from the lower edge of the support; oscillatory ones use
the composite Filon rule from :mod:`divesim.quadrature` on a finer mesh of the
same kind, so that the cost does not depend on ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, DivergenceError, DomainError
from .quadrature import filon, filon_nodes, gauss_nodes, graded_edges, power_head

__all__ = [
    "SpectralMeasure",
    "PowerLaw",
    "ExpFlat",
    "IRCutoff",
    "Tabulated",
    "mu",
    "moment",
    "kernel_K",
    "driving_h",
    "driving_h2",
    "discretize",
    "fourier_samples",
    "measure_from_config",
]

TAIL_TOL = 1e-10
HEAD_OFFSET = 1e-12
GAUSS_RATIO = 1.12
GAUSS_ORDER = 10
FILON_RATIO = 1.03


@dataclass(frozen=True, kw_only=True)
class SpectralMeasure:
    """Base class.  Subclasses provide the unnormalized density and its tail.

    ``lam_max`` overrides the truncation energy; by default it is chosen so
    that the mass beyond it is below ``TAIL_TOL``.  ``n_default`` is the node
    count used by :func:`discretize` when none is given.
    """

    lam_max: float | None = None
    n_default: int = 2000

    # -- family interface -------------------------------------------------
    def _raw(self, lam):
        raise NotImplementedError

    @property
    def support_lower(self):
        return 0.0

    @property
    def ir_exponent(self):
        """Exponent ``b`` with ``mu ~ (lam - support_lower)**b`` at the lower edge."""
        return 0.0

    @property
    def breakpoints(self):
        return ()

    def _default_lam_max(self):
        raise NotImplementedError

    def _raw_tail(self, k, x, cut):
        """``int_cut^inf raw(lam) (lam - x)^-k dlam`` (asymptotic estimate is enough)."""
        return 0.0

    # -- derived ----------------------------------------------------------
    @cached_property
    def cutoff(self):
        """Truncation energy ``Lambda`` of all quadratures."""
        lam = self.lam_max if self.lam_max is not None else self._default_lam_max()
        if not lam > self.support_lower:
            raise ConfigError("truncation energy must exceed the support edge")
        return float(lam)

    @cached_property
    def _gauss(self):
        edges = graded_edges(self.support_lower, self.cutoff, HEAD_OFFSET,
                             GAUSS_RATIO, self.breakpoints)
        nodes, weights = gauss_nodes(edges, GAUSS_ORDER)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        return edges, nodes, weights

    @cached_property
    def _filon_edges(self):
        edges = graded_edges(self.support_lower, self.cutoff, HEAD_OFFSET,
                             FILON_RATIO, self.breakpoints)
        edges.setflags(write=False)
        return edges

    @cached_property
    def norm_constant(self):
        """Factor turning ``_raw`` into a unit-mass density."""
        return 1.0 / self._raw_integral(lambda lam: 1.0, k_tail=0, x_tail=0.0)

    def _raw_head(self, weight):
        """Raw integral over the head segment ``[support_lower, first edge]``."""
        lower = self.support_lower
        x0 = self._gauss[0][0]
        x = np.array([x0, lower + 2.0 * (x0 - lower)])
        f0, f1 = self._raw(x) * weight(x)
        return power_head(lower, x0, x[1], f0, f1) if f0 != 0.0 else 0.0

    def _raw_integral(self, weight, k_tail=None, x_tail=0.0):
        _, nodes, w = self._gauss
        total = np.dot(w, self._raw(nodes) * weight(nodes)) + self._raw_head(weight)
        if k_tail is not None:
            total = total + self._raw_tail(k_tail, x_tail, self.cutoff)
        return total

    def density(self, lam):
        """Normalized density without argument checks (zero below the support)."""
        lam = np.asarray(lam, dtype=float)
        return self.norm_constant * self._raw(lam)

    def tail(self, k=0, x=0.0):
        """Normalized ``int_Lambda^inf mu(lam) (lam - x)^-k dlam``."""
        return self.norm_constant * self._raw_tail(k, x, self.cutoff)

    def integrate(self, weight=None, k_tail=None, x_tail=0.0):
        """``int mu(lam) weight(lam) dlam`` over the support.

        ``weight`` must be vectorized; ``k_tail`` selects the analytic tail
        ``(lam - x_tail)^-k_tail`` added beyond ``Lambda`` (``None`` drops it).
        """
        g = weight if weight is not None else (lambda lam: 1.0)
        return self.norm_constant * self._raw_integral(g, k_tail, x_tail)

    @cached_property
    def _cdf_table(self):
        edges, nodes, w = self._gauss
        vals = self.density(nodes) * w
        per_panel = vals.reshape(-1, GAUSS_ORDER).sum(axis=1)
        head = float(self.norm_constant * self._raw_head(lambda lam: 1.0))
        cum = np.concatenate(([head], head + np.cumsum(per_panel)))
        return edges, cum

    def quantile(self, q):
        """Energy below which the mass fraction ``q`` lies (interpolated on the mesh)."""
        edges, cum = self._cdf_table
        q = float(q)
        if q <= cum[0]:
            return float(edges[0])
        if q >= cum[-1]:
            return float(edges[-1])
        i = int(np.searchsorted(cum, q))
        lo, hi = cum[i - 1], cum[i]
        frac = (q - lo) / (hi - lo)
        return float(edges[i - 1] + frac * (edges[i] - edges[i - 1]))


@dataclass(frozen=True, kw_only=True)
class PowerLaw(SpectralMeasure):
    """``mu(lam) = c lam**(nu + 1/2) (1 + lam)**(-p)``.

    ``nu`` is the order of the zero of ``phi_hat`` at ``k = 0``.  ``p >= nu + 3``
    keeps the large-energy decay at least ``lam**-5/2``; ``nu = 1, p = 4`` is
    the angular average of ``phi_hat(k) = k_1 / (k^2 + 1)^2``.
    """

    nu: int = 1
    p: float = 4.0

    def __post_init__(self):
        if int(self.nu) != self.nu or self.nu < 1:
            raise ConfigError(f"nu must be a positive integer, got {self.nu!r}")
        if self.p < self.nu + 3:
            raise ConfigError(f"tail exponent p={self.p} must be >= nu + 3")

    @property
    def _a(self):
        return self.nu + 0.5

    @property
    def ir_exponent(self):
        return self._a

    @cached_property
    def norm_constant(self):
        return 1.0 / special.beta(self._a + 1.0, self.p - self._a - 1.0)

    def _raw(self, lam):
        lam = np.asarray(lam, dtype=float)
        pos = np.maximum(lam, 0.0)
        return np.where(lam > 0.0, pos**self._a * (1.0 + pos) ** (-self.p), 0.0)

    def _default_lam_max(self):
        s = self.p - self._a - 1.0
        c = 1.0 / special.beta(self._a + 1.0, s)
        return (c / (s * TAIL_TOL)) ** (1.0 / s)

    def _raw_tail(self, k, x, cut):
        if k == 0:
            return special.beta(self._a + 1.0, self.p - self._a - 1.0) * special.betaincc(
                self._a + 1.0, self.p - self._a - 1.0, cut / (1.0 + cut))
        s = self.p + k - self._a - 1.0
        return cut ** (-s) / s


@dataclass(frozen=True, kw_only=True)
class ExpFlat(SpectralMeasure):
    """``mu(lam) = c exp(-2 scale / lam) (1 + lam)**(-p)``: flat to all orders at threshold."""

    scale: float = 1.0
    p: float = 4.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        if not self.p > 2:
            raise ConfigError("p must exceed 2")

    @property
    def ir_exponent(self):
        return np.inf

    def _raw(self, lam):
        lam = np.asarray(lam, dtype=float)
        safe = np.where(lam > 0.0, lam, 1.0)
        return np.where(lam > 0.0, np.exp(-2.0 * self.scale / safe) * (1.0 + safe) ** (-self.p), 0.0)

    def _default_lam_max(self):
        return (1.0 / ((self.p - 1.0) * TAIL_TOL)) ** (1.0 / (self.p - 1.0))

    def _raw_tail(self, k, x, cut):
        s = self.p + k - 1.0
        return cut ** (-s) / s


@dataclass(frozen=True, kw_only=True)
class IRCutoff(SpectralMeasure):
    """``base`` with all spectral weight at ``lam <= delta**2`` removed and renormalized."""

    base: SpectralMeasure = field(default_factory=PowerLaw)
    delta: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError("delta must be positive")

    @property
    def support_lower(self):
        return self.delta**2

    @property
    def ir_exponent(self):
        return 0.0

    @property
    def breakpoints(self):
        return tuple(b for b in self.base.breakpoints if b > self.delta**2)

    def _raw(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.where(lam > self.delta**2, self.base.density(lam), 0.0)

    def _default_lam_max(self):
        return max(self.base.cutoff, 10.0 * self.delta**2)

    def _raw_tail(self, k, x, cut):
        return self.base.norm_constant * self.base._raw_tail(k, x, cut)


@dataclass(frozen=True, kw_only=True)
class Tabulated(SpectralMeasure):
    """Piecewise-linear density through ``(nodes, values)``; zero outside the table."""

    nodes: tuple = (0.0, 1.0)
    values: tuple = (0.0, 1.0)

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ConfigError("nodes and values must be 1-d of equal length >= 2")
        if np.any(np.diff(x) <= 0) or x[0] < 0:
            raise ConfigError("nodes must be nonnegative and strictly increasing")
        if np.any(y < 0) or not np.any(y > 0):
            raise ConfigError("values must be nonnegative and not all zero")
        object.__setattr__(self, "nodes", tuple(float(v) for v in x))
        object.__setattr__(self, "values", tuple(float(v) for v in y))

    @property
    def support_lower(self):
        return self.nodes[0]

    @property
    def ir_exponent(self):
        return 1.0 if self.values[0] == 0.0 else 0.0

    @property
    def breakpoints(self):
        return self.nodes[1:-1]

    @cached_property
    def norm_constant(self):
        return 1.0 / integrate.trapezoid(self.values, self.nodes)

    def _raw(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.interp(lam, self.nodes, self.values, left=0.0, right=0.0)

    def _default_lam_max(self):
        return self.nodes[-1]


# ---------------------------------------------------------------------------
# operations


def _check_energy(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("spectral density is only defined for lam >= 0")
    return lam


def mu(m, lam):
    """Normalized spectral density ``mu(lam)``; raises :class:`DomainError` for ``lam < 0``."""
    lam = _check_energy(lam)
    out = m.density(lam)
    return float(out) if out.ndim == 0 else out


def _check_pole(m, x, k):
    """Validate a real pole ``x`` of order ``k`` against the support of ``m``."""
    lower = m.support_lower
    if x > lower:
        raise DomainError(f"pole {x} lies inside the support [{lower}, inf)")
    if x == lower and m.ir_exponent - k <= -1.0:
        raise DivergenceError(
            f"int mu/(lam - {x})^{k} diverges: threshold exponent {m.ir_exponent}")


def moment(m, k, shift=0.0):
    """``m_k(shift) = int mu(lam) (lam - shift)^-k dlam``.

    ``shift`` must lie at or below the lower edge of the support (``<= 0`` for
    measures reaching the threshold); at the edge the integral must converge.
    """
    if int(k) != k or k < 0:
        raise DomainError("moment order must be a nonnegative integer")
    shift = float(shift)
    _check_pole(m, shift, k)
    if k == 0:
        return float(m.integrate(k_tail=0))
    return float(m.integrate(lambda lam: (lam - shift) ** (-k), k_tail=k, x_tail=shift))


def _mesh_samples(m, weight, lo=None, hi=None):
    edges = m._filon_edges
    if lo is not None or hi is not None:
        lo = edges[0] if lo is None else max(lo, edges[0])
        hi = edges[-1] if hi is None else min(hi, edges[-1])
        inner = edges[(edges > lo) & (edges < hi)]
        edges = np.concatenate(([lo], inner, [hi]))
    e, mids = filon_nodes(edges)
    return edges, m.density(e) * weight(e), m.density(mids) * weight(mids)


def fourier_samples(m, weights, t, lo=None, hi=None):
    """Batch ``int_lo^hi mu(lam) g(lam) exp(-i lam t) dlam`` for every ``g`` in ``weights``.

    Returns an array of shape ``(len(weights), len(t))``.  The lower head
    segment is included when the range starts at the support edge; the tail
    beyond ``Lambda`` is dropped (its modulus is below ``TAIL_TOL`` times the
    supremum of ``|g|`` there).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    fe_all, fm_all = [], []
    for g in weights:
        edges, fe, fm = _mesh_samples(m, g, lo, hi)
        fe_all.append(fe)
        fm_all.append(fm)
    fe_all = np.array(fe_all, dtype=complex)
    fm_all = np.array(fm_all, dtype=complex)
    out = filon(edges, fe_all, fm_all, t)
    if lo is None or lo <= m._filon_edges[0]:
        lower = m.support_lower
        x0 = edges[0]
        x1 = lower + 2.0 * (x0 - lower)
        for i, g in enumerate(weights):
            f0, f1 = m.density(np.array([x0, x1])) * g(np.array([x0, x1]))
            if f0 != 0.0:
                out[i] += power_head(lower, x0, x1, f0, f1, t)
    return out


def _oscillatory(m, weight, t, static):
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.empty(t.shape, dtype=complex)
    zero = t == 0.0
    out[zero] = static
    if np.any(~zero):
        out[~zero] = fourier_samples(m, [weight], t[~zero])[0]
    return complex(out[0]) if scalar else out


def kernel_K(m, t):
    """Free memory kernel ``K(t) = int mu(lam) exp(-i lam t) dlam``; ``K(0) = 1``."""
    return _oscillatory(m, lambda lam: np.ones_like(lam), t, moment(m, 0))


def driving_h(m, t, x0):
    """``h(t; x0) = int mu(lam) exp(-i lam t) / (lam - x0) dlam`` with ``h(0; x0) = m_1(x0)``."""
    x0 = float(x0)
    _check_pole(m, x0, 1)
    return _oscillatory(m, lambda lam: 1.0 / (lam - x0), t, moment(m, 1, x0))


def driving_h2(m, t, x0, x1):
    """``int mu(lam) exp(-i lam t) / ((lam - x0)(lam - x1)) dlam``."""
    x0, x1 = float(x0), float(x1)
    _check_pole(m, x0, 2 if x0 == x1 else 1)
    _check_pole(m, x1, 2 if x0 == x1 else 1)
    if x0 == x1 == m.support_lower:
        _check_pole(m, x0, 2)
    static = float(m.integrate(lambda lam: 1.0 / ((lam - x0) * (lam - x1)), k_tail=2,
                               x_tail=min(x0, x1)))
    return _oscillatory(m, lambda lam: 1.0 / ((lam - x0) * (lam - x1)), t, static)


# ---------------------------------------------------------------------------
# finite-mode discretization


def _cell_integrals(m, cell_edges, weight):
    """Integrals of ``mu * weight`` over consecutive cells ``[cell_edges[i], cell_edges[i+1]]``.

    The first cell starts at the support edge and the last one is unbounded.
    """
    g_edges = m._gauss[0]
    inner = cell_edges[1:-1]
    edges = np.union1d(g_edges, inner)
    nodes, w = gauss_nodes(edges, GAUSS_ORDER)
    per_panel = (m.density(nodes) * weight(nodes) * w).reshape(-1, GAUSS_ORDER).sum(axis=1)
    starts = np.concatenate(([0], np.searchsorted(edges, inner)))
    cells = np.add.reduceat(per_panel, starts)
    cells[0] += m.norm_constant * m._raw_head(weight)
    return cells


def discretize(m, N=None, lam_cut=None):
    """Finite-mode quadrature ``(lam_j, w_j)`` with ``sum_j w_j mu(lam_j) = 1``.

    The half line is split into ``N`` cells: a head cell at the support edge,
    a geometric block resolving the threshold, a uniform block over the bulk
    of the measure, a geometric block up to ``lam_cut`` and one unbounded tail
    cell.  Each node is the harmonic mean ``int mu / int mu/lam`` of its cell
    (the mass-weighted mean when ``mu/lam`` is not integrable), and
    ``w_j = mass_j / mu(lam_j)``, so cell masses and ``m_1`` are reproduced.
    """
    N = int(m.n_default if N is None else N)
    if N < 2:
        raise DomainError("need at least two nodes")
    lower = m.support_lower
    if N < 8:
        qs = np.arange(1, N) / N
        inner = np.array([m.quantile(q) for q in qs])
    else:
        compact = m.tail(0) == 0.0
        d_b = m.quantile(0.9) - lower
        if compact:
            d_cut = m.cutoff - lower
        else:
            d_cut = (lam_cut - lower) if lam_cut is not None else m.quantile(1.0 - 1e-4) - lower
            d_cut = max(d_cut, 2.0 * d_b)
        d_a = d_b / 50.0
        # deep enough that the head cell carries a negligible share of m_2
        d_lo = min(max(d_a * 1e-12, 10.0 * HEAD_OFFSET, m.quantile(1e-30) - lower), d_a / 10.0)
        n_geo = max(int(0.25 * N), 2)
        n_top = max(int(0.15 * N), 2) + int(compact)
        n_uni = N - 2 - n_geo - n_top + int(compact)
        low = d_lo * (d_a / d_lo) ** (np.arange(n_geo) / n_geo)
        mid = np.linspace(d_a, d_b, n_uni, endpoint=False)
        top = d_b * (d_cut / d_b) ** (np.arange(n_top + 1) / n_top)
        inner = lower + np.concatenate((low, mid, top))
        if compact:
            inner = inner[:-1]
    upper = m.cutoff if m.tail(0) == 0.0 else np.inf
    cell_edges = np.concatenate(([lower], inner, [upper]))
    mass = _cell_integrals(m, cell_edges, lambda lam: np.ones_like(lam))
    mass[-1] += m.tail(0)
    if lower > 0 or m.ir_exponent > 0:
        inv = _cell_integrals(m, cell_edges, lambda lam: 1.0 / lam)
        inv[-1] += m.tail(1)
        nodes = mass / inv
    else:
        first = _cell_integrals(m, cell_edges, lambda lam: lam)
        nodes = first / mass
    if np.any(mass <= 0) or np.any(np.diff(nodes) <= 0):
        raise DomainError("discretization produced empty or unordered cells; lower N")
    dens = m.density(nodes)
    if np.any(dens <= 0):
        raise DomainError("a node landed where the density vanishes")
    return nodes, mass / dens


# ---------------------------------------------------------------------------
# configuration


_FAMILY_KEYS = {
    "power_law": {"nu", "p"},
    "exp_flat": {"scale", "p"},
    "ir_cutoff": {"delta", "base"},
    "tabulated": {"nodes", "values"},
}
_COMMON_KEYS = {"family", "lam_max", "n_default"}


def measure_from_config(block):
    """Build a measure from a mapping ``{family, nu, p, delta, lam_max, n_default, ...}``.

    ``ir_cutoff`` takes either a nested ``base`` block or the base parameters
    inline (``nu``, ``p``).  Unknown keys raise :class:`ConfigError`.
    """
    if not isinstance(block, dict) or "family" not in block:
        raise ConfigError("measure block must be a mapping with a 'family' key")
    fam = block["family"]
    if fam not in _FAMILY_KEYS:
        raise ConfigError(f"unknown measure family {fam!r}")
    allowed = _FAMILY_KEYS[fam] | _COMMON_KEYS
    if fam == "ir_cutoff":
        allowed = allowed | {"nu", "p"}
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in measure block: {sorted(unknown)}")
    common = {k: block[k] for k in ("lam_max", "n_default") if k in block}
    try:
        if fam == "power_law":
            return PowerLaw(nu=int(block.get("nu", 1)), p=float(block.get("p", 4.0)), **common)
        if fam == "exp_flat":
            return ExpFlat(scale=float(block.get("scale", 1.0)), p=float(block.get("p", 4.0)),
                           **common)
        if fam == "tabulated":
            return Tabulated(nodes=tuple(block["nodes"]), values=tuple(block["values"]), **common)
        if "base" in block:
            base = measure_from_config(block["base"])
        else:
            base = PowerLaw(nu=int(block.get("nu", 1)), p=float(block.get("p", 4.0)))
        return IRCutoff(base=base, delta=float(block["delta"]), **common)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc} for family {fam!r}") from None
