"""Panel quadrature on graded energy meshes.

Two rules share one mesh format (a strictly increasing array of panel edges):

* ``gauss`` -- composite Gauss-Legendre, used for non-oscillatory integrals.
* ``filon`` -- composite Filon rule for ``int f(lam) exp(-i lam t) dlam``.  On
  every panel ``f`` is replaced by its quadratic interpolant through the two
  edges and the midpoint, and the product with the exponential is integrated
  exactly, so the panel width is independent of ``t``.

The lowest panel of a mesh usually touches an integrable endpoint singularity
(``lam**beta`` with ``beta > -1``).  Both rules therefore accept a ``head``
segment ``[lower, edges[0]]`` that is integrated with a local power-law model
fitted to the first two samples.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "graded_edges",
    "gauss_nodes",
    "filon_nodes",
    "filon",
    "power_head",
]

_SERIES_CUTOFF = 0.25


def graded_edges(lower, upper, first, ratio, breakpoints=()):
    """Edges growing geometrically in ``lam - lower`` from ``lower + first`` to ``upper``.

    Breakpoints inside ``(lower + first, upper)`` are inserted as extra edges.
    """
    span = upper - lower
    if span <= first:
        raise ValueError("mesh span must exceed the first offset")
    n = int(np.ceil(np.log(span / first) / np.log(ratio)))
    offsets = first * np.exp(np.linspace(0.0, np.log(span / first), n + 1))
    edges = lower + offsets
    edges[-1] = upper
    extra = [b for b in breakpoints if lower + first < b < upper]
    if extra:
        edges = np.union1d(edges, extra)
        # drop slivers created by the insertion
        keep = np.concatenate(([True], np.diff(edges) > 1e-14 * np.abs(edges[1:])))
        edges = edges[keep]
    return edges


@lru_cache(maxsize=8)
def _legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_nodes(edges, order=10):
    """Flattened Gauss-Legendre nodes and weights over all panels."""
    x, w = _legendre(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def filon_nodes(edges):
    """Sample points ``(edges, midpoints)`` required by :func:`filon`."""
    return edges, 0.5 * (edges[1:] + edges[:-1])


def power_head(lower, x0, x1, f0, f1, t=None):
    """Integral of ``f`` over ``[lower, x0]`` assuming ``|f| ~ (lam - lower)**beta``.

    ``beta`` is read off the samples ``f0 = f(x0)`` and ``f1 = f(x1)``; the
    phase of ``f0`` is kept.  With ``t`` given, the oscillatory factor is
    evaluated at the centre of mass of the power law, which is exact to
    ``O((x0 - lower) * t)**2``.
    """
    f0 = np.asarray(f0)
    f1 = np.asarray(f1)
    d0 = x0 - lower
    d1 = x1 - lower
    a0 = np.abs(f0)
    a1 = np.abs(f1)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.log(a1 / a0) / np.log(d1 / d0)
    beta = np.where(np.isfinite(beta), beta, 0.0)
    if np.any(beta <= -1.0):
        raise FloatingPointError("non-integrable endpoint behaviour")
    base = f0 * d0 / (beta + 1.0)
    if t is None:
        return base
    centre = lower + d0 * (beta + 1.0) / (beta + 2.0)
    t = np.asarray(t, dtype=float)
    return base[..., None] * np.exp(-1j * np.multiply.outer(centre, t))


def _moments(theta):
    """``int_{-1}^{1} y**k exp(-i theta y) dy`` for ``k = 0, 1, 2``."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < _SERIES_CUTOFF
    th = np.where(small, 1.0, theta)
    s, c = np.sin(th), np.cos(th)
    S = 2.0 * s / th
    dS = 2.0 * (th * c - s) / th**2
    d2S = 2.0 * (2.0 * s - 2.0 * th * c - th**2 * s) / th**3
    if np.any(small):
        q = theta * theta
        S_s = 2.0 * (1 - q / 6 + q**2 / 120 - q**3 / 5040 + q**4 / 362880 - q**5 / 39916800)
        dS_s = 2.0 * theta * (-1 / 3 + q / 30 - q**2 / 840 + q**3 / 45360 - q**4 / 3991680)
        d2S_s = 2.0 * (-1 / 3 + q / 10 - q**2 / 168 + q**3 / 6480 - q**4 / 443520)
        S = np.where(small, S_s, S)
        dS = np.where(small, dS_s, dS)
        d2S = np.where(small, d2S_s, d2S)
    return S, 1j * dS, -d2S


def filon(edges, f_edges, f_mids, t, chunk=256):
    """Composite Filon integral ``int f(lam) exp(-i lam t) dlam`` over the mesh.

    Parameters
    ----------
    edges : (P+1,) float ndarray
        Panel edges.
    f_edges, f_mids : (..., P+1) and (..., P) ndarrays
        Integrand samples at the edges and panel midpoints.  Leading axes are
        batch axes; several integrands share the cost of the exponentials.
    t : float or (T,) float ndarray
        Frequencies.

    Returns
    -------
    (..., T) complex ndarray, or (...) when ``t`` is scalar.
    """
    f_edges = np.asarray(f_edges)
    f_mids = np.asarray(f_mids)
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    batch = f_edges.shape[:-1]
    fl = f_edges[..., :-1].reshape(-1, f_mids.shape[-1])
    fr = f_edges[..., 1:].reshape(-1, f_mids.shape[-1])
    fm = f_mids.reshape(-1, f_mids.shape[-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    out = np.empty((fl.shape[0], t.size), dtype=complex)
    for start in range(0, t.size, chunk):
        tc = t[start:start + chunk]
        theta = np.multiply.outer(tc, half)
        M0, M1, M2 = _moments(theta)
        phase = half * np.exp(-1j * np.multiply.outer(tc, mid))
        cl = phase * 0.5 * (M2 - M1)
        cm = phase * (M0 - M2)
        cr = phase * 0.5 * (M2 + M1)
        out[:, start:start + chunk] = (fl @ cl.T) + (fm @ cm.T) + (fr @ cr.T)
    out = out.reshape(batch + (t.size,))
    return out[..., 0] if scalar else out
