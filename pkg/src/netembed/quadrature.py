"""Deterministic sampling and quadrature helpers.

Candidate streams for net construction use a seeded Halton sequence
(deterministic, reproducible, no RNG-state ambiguity).  Ball integrals
use norm-adapted polar nodes so the domain boundary is exact; lattice
rules with sub-cell corrected weights are used where a shared grid is
needed for convolutions.
"""

from __future__ import annotations

import numpy as np

_PRIMES = np.array([2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37])


def halton(n_points: int, dim: int, skip: int = 0) -> np.ndarray:
    """First ``n_points`` of the Halton sequence in [0,1)^dim, after ``skip``."""
    if dim > len(_PRIMES):
        raise ValueError(f"halton supports dim <= {len(_PRIMES)}")
    idx = np.arange(skip + 1, skip + n_points + 1, dtype=np.int64)
    out = np.empty((n_points, dim))
    for j in range(dim):
        b = int(_PRIMES[j])
        x = np.zeros(n_points)
        f = 1.0
        i = idx.copy()
        while i.max() > 0:
            f /= b
            x += f * (i % b)
            i //= b
        out[:, j] = x
    return out


def seeded_shift(points01: np.ndarray, seed: int) -> np.ndarray:
    """Cranley-Patterson rotation: shift mod 1 by a seed-derived offset."""
    rng = np.random.default_rng(seed)
    shift = rng.random(points01.shape[1])
    return (points01 + shift) % 1.0


def gauss_legendre(m: int, a: float, b: float):
    """Nodes and weights of the m-point Gauss-Legendre rule on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(m)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def polar_ball_nodes(radial_profile, radius: float, n_ang: int, n_rad: int):
    """Quadrature nodes/weights for a 2-D star ball {r e(w): r <= radius*rho(w)}.

    ``radial_profile(directions)`` returns rho(w) = 1/||e(w)|| for unit
    Euclidean vectors e(w).  The angular grid is uniform over [0, 2pi) so the
    node set is symmetric under y -> -y for symmetric norms; the rule then
    integrates linear maps exactly.  Returns (nodes [M,2], weights [M]) with
    weights summing to the exact ball area up to the angular resolution.
    """
    ang = (np.arange(n_ang) + 0.5) * (2.0 * np.pi / n_ang)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rho = radial_profile(dirs) * radius
    t, wt = np.polynomial.legendre.leggauss(n_rad)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    # r = rho*t, Jacobian r dr dw  ->  rho^2 * t * wt * dw
    r = rho[:, None] * t[None, :]
    w = (rho**2)[:, None] * (t * wt)[None, :] * (2.0 * np.pi / n_ang)
    nodes = dirs[:, None, :] * r[:, :, None]
    return nodes.reshape(-1, 2), w.reshape(-1)


def interval_nodes(radius: float, n_rad: int):
    """Gauss-Legendre nodes/weights on [-radius, radius] (the 1-D ball)."""
    x, w = gauss_legendre(n_rad, -radius, radius)
    return x.reshape(-1, 1), w


def lattice_points(half_width: float, spacing: float, dim: int):
    """Cell-centered uniform lattice covering [-half_width, half_width]^dim.

    Returns (axes, points [M, dim]); axes are identical per dimension and
    symmetric about 0, so the lattice is invariant under x -> -x.
    """
    m = int(np.floor(half_width / spacing))
    axis = np.arange(-m, m + 1) * spacing
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    return axis, pts


def subcell_inside_fraction(norm_fn, centers: np.ndarray, spacing: float,
                            radius: float, refine: int = 8) -> np.ndarray:
    """Fraction of each lattice cell lying inside {norm <= radius}.

    Cells whose center is further than one cell diagonal from the boundary
    are classified exactly; the rest are refined with a refine^dim subgrid.
    """
    dim = centers.shape[1]
    vals = norm_fn(centers)
    diag = spacing * np.sqrt(dim)
    frac = np.where(vals <= radius, 1.0, 0.0)
    # norm is 1-Lipschitz wrt itself; use a generous Euclidean safety margin
    band = np.abs(vals - radius) <= diag * max(1.0, np.sqrt(dim))
    if not band.any():
        return frac
    offs1 = (np.arange(refine) + 0.5) / refine - 0.5
    grids = np.meshgrid(*([offs1] * dim), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=-1) * spacing
    sub = centers[band][:, None, :] + offs[None, :, :]
    inside = norm_fn(sub.reshape(-1, dim)).reshape(len(sub), -1) <= radius
    frac[band] = inside.mean(axis=1)
    return frac
