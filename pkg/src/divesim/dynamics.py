"""Adiabatic time evolution of the dot-continuum model.

With the dot energy following ``E(eta t)`` and the state started in an
instantaneous eigenvector ``Psi(E_0) = c (-tau r0(lam_0) phi, 1)``, the dot
amplitude ``a(t) = <dot, psi(t)>`` obeys the closed Volterra equation

    i a'(t) = E(eta t) a(t) - tau^2 c h(t - t0; lam_0)
              - i tau^2 int_{t0}^t K(t - s) a(s) ds,

and overlaps with any eigenvector ``Psi_1 = c_1 (-tau r0(lam_1) phi, 1)`` are
recovered at the final time ``T`` as

    <Psi_1, psi(T)> = c_1 a(T) + tau^2 c_1 [c h2(T - t0; lam_0, lam_1)
                                            + i int_{t0}^T h(T - s; lam_1) a(s) ds].

The memory integral uses product-trapezoidal weights: ``a`` is interpolated
linearly between grid points and the hat functions are integrated against
``K`` exactly, which turns every weight into a ``mu``-integral evaluated with
the Filon rule.  The local term is propagated with an integrating factor
and the linear implicit trapezoidal step is solved in closed form.

:func:`oracle_evolve` integrates the finite-mode Hamiltonian built from
:func:`formfactor.discretize` with an explicit Runge-Kutta scheme and serves
as an independent check.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from . import formfactor as ff
from . import spectral as sp
from .errors import (
    ConfigError,
    DomainError,
    IntegratorError,
    ModelInvalidError,
    NoBoundStateError,
    NormalizationError,
    ProbeError,
    UnsupportedRegimeError,
)

__all__ = [
    "PulseSchedule",
    "ConstantSchedule",
    "AdiabaticRun",
    "hat_weights",
    "evolve",
    "oracle_evolve",
    "survival_probability",
    "threshold_run",
    "threshold_distance",
    "microscopic_survival",
    "microscopic_eta_limit",
    "dyson_diagnostics",
    "schedule_from_config",
]

BLOWUP_TOL = 1e-3
_RTOL = 4 * np.finfo(float).eps


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class PulseSchedule:
    """``E(s) = E_lo + (E_m - E_lo) sin^2(pi w(s))`` on ``[-1, 0]``.

    ``w(u) = u + kappa u (1 - u)`` with ``u = s + 1`` is a smooth monotone warp
    placing the maximum at ``s_m``; ``kappa = 0`` for ``s_m = -1/2``.
    ``reverse=True`` gives the time-reversed pulse ``s -> E(-1 - s)``.
    """

    E_lo: float = -1.0
    E_m: float = 0.5
    s_m: float = -0.5
    reverse: bool = False

    def __post_init__(self):
        if not (self.E_lo < 0 < self.E_m):
            raise ConfigError(f"need E_lo < 0 < E_m, got E_lo={self.E_lo}, E_m={self.E_m}")
        if abs(self._kappa) >= 1.0:
            raise ConfigError(f"s_m={self.s_m} too far from -1/2 for a monotone warp")

    @property
    def _kappa(self):
        u = self.s_m + 1.0
        return (0.5 - u) / (u * (1.0 - u))

    @property
    def s_peak(self):
        """Location of the maximum of the (possibly reversed) pulse."""
        return -1.0 - self.s_m if self.reverse else self.s_m

    def energy(self, s):
        s = np.asarray(s, dtype=float)
        u = -s if self.reverse else s + 1.0
        w = u + self._kappa * u * (1.0 - u)
        return self.E_lo + (self.E_m - self.E_lo) * np.sin(np.pi * w) ** 2

    def reversed(self):
        return replace(self, reverse=not self.reverse)

    def crossings(self, E_c):
        """``(s_c, s_c')`` with ``E(s) = E_c`` on the rising and falling branches."""
        if not (self.E_lo < E_c < self.E_m):
            raise ModelInvalidError(f"E_c={E_c} is not inside (E_lo, E_m)")
        f = lambda s: float(self.energy(s)) - E_c
        s_c = optimize.brentq(f, -1.0, self.s_peak, xtol=1e-14, rtol=_RTOL)
        s_c2 = optimize.brentq(f, self.s_peak, 0.0, xtol=1e-14, rtol=_RTOL)
        return s_c, s_c2

    def default_step(self):
        return min(0.02, 0.1 / self.E_m)


@dataclass(frozen=True)
class ConstantSchedule:
    """Frozen dot energy ``E(s) = E_a``."""

    E_a: float

    @property
    def E_m(self):
        return self.E_a

    def energy(self, s):
        return np.full(np.shape(s), float(self.E_a))

    def reversed(self):
        return self

    def default_step(self):
        return min(0.02, 0.1 / max(abs(self.E_a), 1e-12))


def schedule_from_config(block):
    """``PulseSchedule`` from ``{E_lo, E_m, s_m}``; unknown keys are rejected."""
    block = dict(block or {})
    unknown = set(block) - {"E_lo", "E_m", "s_m"}
    if unknown:
        raise ConfigError(f"unknown keys in schedule block: {sorted(unknown)}")
    return PulseSchedule(**{k: float(v) for k, v in block.items()})


# ---------------------------------------------------------------------------
# records


@dataclass
class AdiabaticRun:
    """Result of one propagation.

    ``t`` is the microscopic time grid, ``a`` the dot amplitude on it and
    ``overlaps`` maps probe labels (``"final"``, ``"critical"``, ``"dot"``) to
    complex overlaps with the evolved state at the last grid point.  Oracle
    runs also keep the full final mode vector in ``state``.
    """

    eta: float
    s_start: float
    s_end: float
    t: np.ndarray
    a: np.ndarray
    initial: sp.EigenState
    overlaps: dict = field(default_factory=dict)
    norm: np.ndarray | None = None
    notes: dict = field(default_factory=dict)
    state: np.ndarray | None = None

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0


def survival_probability(run, probe="final"):
    """``|overlap|^2`` for a recorded probe, clipped to ``[0, 1]``."""
    if probe not in run.overlaps:
        raise ProbeError(f"probe {probe!r} was not recorded (have {sorted(run.overlaps)})")
    return float(min(max(abs(run.overlaps[probe]) ** 2, 0.0), 1.0))


# ---------------------------------------------------------------------------
# product-trapezoidal weights


def _hat_half(x):
    """``P(x) = int_0^1 (1 - y) exp(-i x y) dy``; the mirrored half is ``conj(P)``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.5
    xs = np.where(small, 1.0, x)
    direct = 1.0 / (1j * xs) + (1.0 - np.exp(-1j * xs)) / xs**2
    if np.any(small):
        series = np.zeros(x.shape, dtype=complex)
        term = np.ones(x.shape, dtype=complex)
        fact = 2.0
        for n in range(16):
            series += term / fact
            term = term * (-1j * x)
            fact *= (n + 3)
        direct = np.where(small, series, direct)
    return direct


@lru_cache(maxsize=32)
def hat_weights(m, dt, n, pole=None):
    """Product-trapezoid weights of ``int mu(lam) r(lam) exp(-i lam u) dlam`` against hats.

    ``r = 1`` (memory kernel ``K``) or ``r = 1 / (lam - pole)`` (kernel ``h``).
    Returns ``(w0, interior, end)``: ``w0`` multiplies the newest sample,
    ``interior[k]`` the sample ``k`` steps back (``1 <= k``) and ``end[k]``
    the first sample of a history ``k`` steps long.  Index ``0`` of the two
    arrays is unused.

    Below ``lam_s = 1 / dt`` the hat transforms are smooth and integrated
    directly; above it they are split into exponentials times rational
    weights so that no oscillation in ``lam`` has to be resolved.
    """
    if pole is None:
        r = lambda lam: np.ones_like(lam)
    else:
        ff._check_pole(m, pole, 1)
        r = lambda lam: 1.0 / (lam - pole)
    lags = np.arange(n + 2) * dt
    lam_s = 1.0 / dt
    lower = m.support_lower
    low_P = low_H = low_Q = np.zeros(n + 2, dtype=complex)
    if lower < lam_s:
        low = ff.fourier_samples(m, [
            lambda lam: r(lam) * dt * _hat_half(lam * dt),
            lambda lam: r(lam) * 2.0 * dt * _hat_half(lam * dt).real,
            lambda lam: r(lam) * dt * np.conj(_hat_half(lam * dt)),
        ], lags, hi=lam_s)
        low_P, low_H, low_Q = low
    lo = max(lam_s, lower)
    high = ff.fourier_samples(m, [
        lambda lam: -r(lam) / (lam * lam * dt),
        lambda lam: -1j * r(lam) / lam,
    ], lags, lo=lo)
    IB, J = high
    w0 = low_P[0] + (J[0] - IB[0]) + IB[1]
    interior = np.zeros(n + 1, dtype=complex)
    end = np.zeros(n + 1, dtype=complex)
    k = np.arange(1, n + 1)
    interior[1:] = low_H[k] + IB[k + 1] - 2.0 * IB[k] + IB[k - 1]
    end[1:] = low_Q[k] - J[k] - IB[k] + IB[k - 1]
    for arr in (interior, end):
        arr.setflags(write=False)
    return complex(w0), interior, end


def _history_integral(w0, interior, end, a, n):
    """Product-trapezoid ``int_{t0}^{t_n} k(t_n - s) a(s) ds`` over samples ``a[0..n]``."""
    if n == 0:
        return 0.0j
    total = w0 * a[n] + end[n] * a[0]
    if n > 1:
        total += np.dot(interior[1:n], a[n - 1:0:-1])
    return total


# ---------------------------------------------------------------------------
# Volterra propagation


def _as_state(model, initial):
    if isinstance(initial, sp.EigenState):
        return initial
    if isinstance(initial, sp.BoundState):
        return sp.EigenState.from_bound(model, initial)
    raise DomainError("initial must be a BoundState or EigenState")


def _phase_increments(schedule, eta, t):
    """``int_{t_n}^{t_{n+1}} E(eta t) dt`` by 4-point Gauss-Legendre per step."""
    x, w = np.polynomial.legendre.leggauss(4)
    mid = 0.5 * (t[1:] + t[:-1])
    half = 0.5 * np.diff(t)
    pts = mid[:, None] + half[:, None] * x[None, :]
    return (schedule.energy(eta * pts) * w[None, :]).sum(axis=1) * half


def _grid(eta, s_start, s_end, dt):
    if not (-1.0 <= s_start < s_end <= 0.0):
        raise DomainError(f"need -1 <= s_start < s_end <= 0, got {s_start}, {s_end}")
    if not eta > 0:
        raise DomainError("eta must be positive")
    T = (s_end - s_start) / eta
    n = max(int(np.ceil(T / dt - 1e-9)), 1)
    return s_start / eta + np.linspace(0.0, T, n + 1)


def _probe_states(model, schedule, s_end, probes):
    states, notes = {}, {}
    for label in probes:
        if label == "dot":
            states[label] = sp.EigenState(model, 1.0, None)
            continue
        try:
            if label == "final":
                E1 = float(schedule.energy(s_end))
                states[label] = sp.EigenState.from_bound(model, sp.instantaneous_state(model, E1))
            elif label == "critical":
                states[label] = sp.critical_state(model)
            else:
                raise ProbeError(f"unknown probe {label!r}")
        except (NoBoundStateError, UnsupportedRegimeError, ModelInvalidError) as exc:
            notes[label] = str(exc)
    return states, notes


def evolve(model, schedule, eta, s_start=-1.0, s_end=0.0, initial=None,
           probes=("final", "critical", "dot"), dt=None):
    """Propagate the reduced dot amplitude from ``s_start / eta`` to ``s_end / eta``.

    ``initial`` defaults to the instantaneous bound state at ``E(s_start)``;
    an :class:`EigenState` with ``pole=None`` starts from the bare dot state.
    Probes that do not exist (no bound state at ``E(s_end)``, divergent
    threshold moments) are skipped and explained in ``run.notes``.
    """
    if dt is None:
        dt = schedule.default_step()
    t = _grid(eta, s_start, s_end, dt)
    N = t.size - 1
    h_step = float(t[1] - t[0])
    if initial is None:
        initial = sp.instantaneous_state(model, float(schedule.energy(s_start)))
    u0 = _as_state(model, initial)
    sp._check_unit(u0)
    tau2 = model.tau2
    c0 = complex(u0.dot_amp)
    m = model.measure

    a = np.zeros(N + 1, dtype=complex)
    a[0] = c0
    dphi = _phase_increments(schedule, eta, t)
    if tau2 == 0.0:
        a[1:] = c0 * np.exp(-1j * np.cumsum(dphi))
        drive = None
    else:
        w0, interior, end = hat_weights(m, h_step, N)
        if u0.pole is not None:
            drive = 1j * tau2 * c0 * ff.fourier_samples(
                m, [lambda lam: 1.0 / (lam - u0.pole)], t - t[0])[0]
        else:
            drive = np.zeros(N + 1, dtype=complex)
        f_prev = drive[0]
        denom = 1.0 + 0.5 * h_step * tau2 * w0
        for n in range(N):
            rot = np.exp(-1j * dphi[n])
            hist = end[n + 1] * a[0]
            if n > 0:
                hist += np.dot(interior[1:n + 1], a[n:0:-1])
            rhs = rot * (a[n] + 0.5 * h_step * f_prev) + 0.5 * h_step * (drive[n + 1] - tau2 * hist)
            a[n + 1] = rhs / denom
            if abs(a[n + 1]) > 1.0 + BLOWUP_TOL:
                raise IntegratorError("dot amplitude left the unit disc", {
                    "step": n + 1, "t": float(t[n + 1]), "abs_a": float(abs(a[n + 1])), "dt": h_step})
            f_prev = drive[n + 1] - tau2 * (w0 * a[n + 1] + hist)

    run = AdiabaticRun(eta=float(eta), s_start=float(s_start), s_end=float(s_end), t=t, a=a,
                       initial=u0)
    states, notes = _probe_states(model, schedule, s_end, probes)
    run.notes.update(notes)
    for label, v in states.items():
        run.overlaps[label] = _final_overlap(model, u0, v, t, a)
    return run


def _final_overlap(model, u0, v, t, a):
    """``<v, psi(T)>`` from the dot history (see module docstring)."""
    c1 = np.conj(v.dot_amp)
    if v.pole is None or model.tau == 0.0:
        return complex(c1 * a[-1])
    m = model.measure
    N = t.size - 1
    T = t[-1] - t[0]
    tail = 0.0j
    if u0.pole is not None:
        tail += u0.dot_amp * ff.driving_h2(m, T, u0.pole, v.pole)
    w0, interior, end = hat_weights(m, float(t[1] - t[0]), N, v.pole)
    tail += 1j * _history_integral(w0, interior, end, a, N)
    return complex(c1 * (a[-1] + model.tau2 * tail))


# ---------------------------------------------------------------------------
# finite-mode oracle


def _discrete_eigvec(lam, g, E, pole=None):
    """Normalized discrete eigenvector ``(-g/(lam - x), 1) c``; the bound root when ``pole`` is None."""
    if pole is None and not np.any(g):
        if not E < lam[0]:
            raise NoBoundStateError("decoupled dot level is not below the modes")
        v = np.zeros(lam.size + 1, dtype=complex)
        v[-1] = 1.0
        return v
    if pole is None:
        F = lambda x: E - x - np.sum(g * g / (lam - x))
        hi = min(E, lam[0]) - 1e-14 * max(1.0, abs(lam[0]))
        if hi >= lam[0]:
            hi = np.nextafter(lam[0], -np.inf)
        if not F(hi) < 0:
            raise NoBoundStateError("discrete model has no bound state below the modes")
        lo = min(E, lam[0]) - 1.0 - np.sum(g * g)
        x = optimize.brentq(F, lo, hi, xtol=1e-300, rtol=_RTOL, maxiter=500)
    else:
        x = pole
    v = np.concatenate((-g / (lam - x), [1.0])).astype(complex)
    return v / np.linalg.norm(v)


def oracle_evolve(model, schedule, eta, s_start=-1.0, s_end=0.0, N=2000, t_eval=None,
                  initial="bound", probes=("final", "critical", "dot"), rtol=1e-10, atol=1e-12):
    """Finite-mode propagation with ``N`` channel modes (DOP853).

    ``initial`` is ``"bound"`` (discrete eigenvector at ``E(s_start)``),
    ``"critical"`` (discrete threshold vector), ``"dot"`` or a unit vector of
    length ``N + 1`` (modes first, dot last), e.g. the ``state`` of an earlier run.  ``t_eval``
    defaults to the grid :func:`evolve` would use.
    """
    if N < 2:
        raise DomainError("need at least two modes")
    m = model.measure
    lam, w = ff.discretize(m, N)
    g = model.tau * np.sqrt(w * m.density(lam))
    if t_eval is None:
        t_eval = _grid(eta, s_start, s_end, schedule.default_step())
    t_eval = np.asarray(t_eval, dtype=float)
    E0 = float(schedule.energy(s_start))
    if isinstance(initial, np.ndarray):
        if initial.shape != (N + 1,):
            raise DomainError(f"initial vector must have shape ({N + 1},)")
        y0 = initial.astype(complex)
        if abs(np.linalg.norm(y0) - 1.0) > sp.NORM_TOL:
            raise NormalizationError("initial vector is not normalized")
    elif initial == "bound":
        y0 = _discrete_eigvec(lam, g, E0)
    elif initial == "critical":
        y0 = _discrete_eigvec(lam, g, E0, pole=0.0)
    elif initial == "dot":
        y0 = np.zeros(N + 1, dtype=complex)
        y0[-1] = 1.0
    else:
        raise DomainError(f"unknown initial state {initial!r}")

    def rhs(t, y):
        out = np.empty_like(y)
        out[:-1] = -1j * (lam * y[:-1] + g * y[-1])
        out[-1] = -1j * (np.dot(g, y[:-1]) + float(schedule.energy(eta * t)) * y[-1])
        return out

    sol = integrate.solve_ivp(rhs, (t_eval[0], t_eval[-1]), y0, method="DOP853",
                              t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegratorError(f"oracle integration failed: {sol.message}")
    Y = sol.y
    run = AdiabaticRun(eta=float(eta), s_start=float(s_start), s_end=float(s_end), t=t_eval,
                       a=Y[-1].copy(), initial=sp.EigenState(model, complex(y0[-1]), None),
                       norm=np.linalg.norm(Y, axis=0), state=Y[:, -1].copy())
    yT = Y[:, -1]
    E1 = float(schedule.energy(s_end))
    for label in probes:
        try:
            if label == "dot":
                v = np.zeros(N + 1)
                v[-1] = 1.0
            elif label == "final":
                v = _discrete_eigvec(lam, g, E1)
            elif label == "critical":
                v = _discrete_eigvec(lam, g, E1, pole=0.0)
            else:
                raise ProbeError(f"unknown probe {label!r}")
        except NoBoundStateError as exc:
            run.notes[label] = str(exc)
            continue
        run.overlaps[label] = complex(np.vdot(v, yT))
    return run


# ---------------------------------------------------------------------------
# threshold and microscopic runs


def threshold_run(model, schedule, eta, side="forward", dt=None):
    """Evolve the bound state from ``s = -1`` up to the threshold crossing.

    ``side="forward"`` stops at ``s_c``; ``side="backward"`` runs the
    time-reversed pulse from ``s = 0`` back to ``s_c'``.
    """
    crit = sp.check_subcritical(model, schedule.E_m)
    sched = schedule if side == "forward" else schedule.reversed()
    if side not in ("forward", "backward"):
        raise DomainError("side must be 'forward' or 'backward'")
    s_c, _ = sched.crossings(crit.E_c)
    return evolve(model, sched, eta, -1.0, s_c, probes=("critical", "dot"), dt=dt)


def threshold_distance(run):
    """``|| |psi><psi| - P_c ||`` for a run ending at a threshold crossing."""
    p = survival_probability(run, "critical")
    return float(np.sqrt(max(1.0 - p, 0.0)))


def microscopic_eta_limit(alpha, nu):
    """``eta_0(alpha) = alpha^(2 (2 nu + 7))``: below it the microscopic bound is asserted."""
    return float(alpha) ** (2 * (2 * nu + 7))


def microscopic_survival(model, schedule, eta, alpha, nu=None, dt=None):
    """``|<Psi_c, U(s, s_c) Psi_c>|^2`` at ``s = s_c + alpha eta^(4/(2 nu + 7))``.

    ``nu`` defaults to the threshold order of the measure (``ir_exponent - 1/2``).
    Warns when ``eta`` is not below ``eta_0(alpha)``.
    """
    m = model.measure
    if nu is None:
        nu = getattr(m, "nu", None)
        if nu is None:
            base = getattr(m, "base", None)
            nu = getattr(base, "nu", 1)
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    crit = sp.check_subcritical(model, schedule.E_m)
    s_c, s_c2 = schedule.crossings(crit.E_c)
    s_end = s_c + alpha * eta ** (4.0 / (2 * nu + 7))
    if s_end >= s_c2:
        raise DomainError("window reaches the second crossing; lower alpha or eta")
    if not eta < microscopic_eta_limit(alpha, nu):
        warnings.warn(f"eta={eta} is not below eta_0(alpha)={microscopic_eta_limit(alpha, nu):.3g}",
                      RuntimeWarning, stacklevel=2)
    run = evolve(model, schedule, eta, s_c, s_end, initial=sp.critical_state(model),
                 probes=("critical",), dt=dt)
    return survival_probability(run, "critical")


# ---------------------------------------------------------------------------
# Dyson-identity diagnostics


def _bump(lam, lo, hi):
    x = (2.0 * lam - (lo + hi)) / (hi - lo)
    inside = np.abs(x) < 1.0
    xs = np.where(inside, x, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - xs * xs)), 0.0)


def dyson_diagnostics(model, schedule, eta, E_a=None, band=(0.05, 10.0), lag_step=0.02,
                      n_s=400):
    """Magnitudes of the four terms bounding ``|<Psi_eps, U(t_c', t_c) Psi_eps>|``.

    ``Psi_eps`` has spectral density ``f`` w.r.t. ``H(E_a)``, a smooth bump
    supported in ``band``.  With ``G(t) = int sqrt(f rho) e^{-i lam t}``, the
    terms are ``I1 = |f^(t_c' - t_c)|``, ``I2 = int_{t_c}^{t_a} |eps_a| |G(t_c' - v)|``,
    ``I3 = int_{t_a}^{t_c'} |eps_a| |G(u - t_c)|`` and
    ``I4 = int int |eps_a(u) eps_a(v)| |A(u - v)|`` with ``A`` the static
    survival amplitude at ``E_a``.  ``E_a`` defaults to the pulse maximum,
    reached at ``s_a``.

    Also returns ``A_sup = sup |A(t)| (1 + t)^(5/2)`` over ``0 <= t <= 10^4`` and
    ``I4_envelope = A_sup * int int |eps_a(u) eps_a(v)| (u - v)^(-5/2)`` (in
    ``s`` units), an eta-independent bound on ``I4 / sqrt(eta)``.
    """
    crit = sp.check_subcritical(model, schedule.E_m)
    s_c, s_c2 = schedule.crossings(crit.E_c)
    if E_a is None:
        E_a = schedule.E_m
    if E_a >= schedule.E_m:
        s_a = schedule.s_peak
    else:
        s_a = optimize.brentq(lambda s: float(schedule.energy(s)) - E_a, s_c, schedule.s_peak,
                              xtol=1e-14)
    lo, hi = band
    edges = np.linspace(lo, hi, 4001)
    mids = 0.5 * (edges[1:] + edges[:-1])
    f_e, f_m = _bump(edges, lo, hi), _bump(mids, lo, hi)
    norm = integrate.simpson(np.concatenate((f_e, f_m))[np.argsort(np.concatenate((edges, mids)))],
                             x=np.sort(np.concatenate((edges, mids))))
    f_e, f_m = f_e / norm, f_m / norm
    T = (s_c2 - s_c) / eta
    I1 = abs(ff.filon(edges, f_e, f_m, T))
    if model.tau == 0.0:
        return {"I1": float(I1), "I2": 0.0, "I3": 0.0, "I4": 0.0, "s_a": float(s_a),
                "E_a": float(E_a), "A_sup": 0.0, "I4_envelope": 0.0}

    def eps(s):
        return np.abs(E_a - schedule.energy(s))

    v_s = np.linspace(s_c, s_a, n_s)
    u_s = np.linspace(s_a, s_c2, n_s)
    rho_e = sp.spectral_density(model, E_a, edges)
    rho_m = sp.spectral_density(model, E_a, mids)
    g_e, g_m = np.sqrt(f_e * rho_e), np.sqrt(f_m * rho_m)
    G2 = np.abs(ff.filon(edges, g_e, g_m, (s_c2 - v_s) / eta))
    G3 = np.abs(ff.filon(edges, g_e, g_m, (u_s - s_c) / eta))
    I2 = integrate.trapezoid(eps(v_s) * G2, v_s) / eta
    I3 = integrate.trapezoid(eps(u_s) * G3, u_s) / eta
    lags = np.arange(0.0, T + 2 * lag_step, lag_step)
    A = np.abs(sp.static_survival(model, E_a, lags))
    diff = (u_s[:, None] - v_s[None, :]) / eta
    kern = np.interp(diff, lags, A)
    inner = integrate.trapezoid(kern * eps(v_s)[None, :], v_s, axis=1)
    I4 = integrate.trapezoid(eps(u_s) * inner, u_s) / eta**2
    # |A(t)| <= A_sup (1 + t)^(-5/2) turns I4 into at most A_sup * J_inf * eta^(1/2)
    t_sup = np.concatenate(([0.0], np.geomspace(1e-2, 1e4, 3000)))
    A_sup = float(np.max(np.abs(sp.static_survival(model, E_a, t_sup)) * (1.0 + t_sup) ** 2.5))
    J_inf = integrate.dblquad(lambda v, u: eps(u) * eps(v) * (u - v) ** -2.5,
                              s_a, s_c2, s_c, s_a, epsabs=1e-12)[0]
    return {"I1": float(I1), "I2": float(I2), "I3": float(I3), "I4": float(I4),
            "s_a": float(s_a), "E_a": float(E_a), "A_sup": A_sup, "I4_envelope": A_sup * J_inf}
