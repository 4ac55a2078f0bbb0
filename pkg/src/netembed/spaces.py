"""Finite-dimensional normed spaces and nets of their unit balls.

A space carries a base norm (lp, ellipsoid, or polytope), plus a scalar
``john_scale`` s such that the scaled norm s*||.|| sits in the Euclidean
sandwich (1/sqrt(n))||x||_2 <= ||x||_X <= ||x||_2.  All downstream
machinery (nets, extensions, kernel tail bounds) works with the scaled
norm; the base norm stays available for raw-geometry uses such as the
snowflake embedding of the raw l1 ball.

Nets are maximal separated subsets built greedily over a deterministic
seeded Halton candidate stream, followed by covering-repair passes, so
the construction is reproducible and both net certificates (covering and
separation) are verified rather than assumed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gamma, ndtri

from netembed.errors import JohnPositionUnavailableError, NetTooLargeError
from netembed.quadrature import halton, seeded_shift

_EUCLID_BALL_VOL = lambda n: math.pi ** (n / 2) / gamma(n / 2 + 1)


def _as2d(x):
    x = np.asarray(x, dtype=float)
    return (x.reshape(1, -1), True) if x.ndim == 1 else (x, False)


class LpNorm:
    """The lp norm, p in [1, inf]."""

    kind = "lp"

    def __init__(self, p):
        if p != math.inf and p < 1:
            raise ValueError(f"lp norm requires p >= 1, got {p}")
        self.p = p

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.p == math.inf:
            return np.abs(x).max(axis=-1)
        if self.p == 1:
            return np.abs(x).sum(axis=-1)
        if self.p == 2:
            return np.linalg.norm(x, axis=-1)
        return (np.abs(x) ** self.p).sum(axis=-1) ** (1.0 / self.p)

    def grad(self, x: np.ndarray) -> np.ndarray:
        # Subgradient selection on the (measure-zero) non-smooth sets.
        if self.p == math.inf:
            g = np.zeros_like(x)
            idx = np.abs(x).argmax(axis=-1)
            rows = np.arange(x.shape[0])
            g[rows, idx] = np.sign(x[rows, idx])
            return g
        if self.p == 1:
            return np.sign(x)
        nrm = np.maximum(self(x), 1e-300)
        return np.sign(x) * (np.abs(x) / nrm[..., None]) ** (self.p - 1)

    def john_scale(self, dim: int) -> float:
        if self.p >= 2:
            return 1.0
        return dim ** (0.5 - 1.0 / self.p)

    def ball_volume(self, dim: int) -> float:
        if self.p == math.inf:
            return 2.0**dim
        return (2.0 * gamma(1.0 + 1.0 / self.p)) ** dim / gamma(1.0 + dim / self.p)

    def descriptor(self):
        return {"kind": "lp", "p": "inf" if self.p == math.inf else self.p}


class EllipsoidNorm:
    """||x|| = sqrt(x^T Q x) for a positive definite Q."""

    kind = "ellipsoid"

    def __init__(self, Q):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("ellipsoid norm needs a square matrix")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("ellipsoid matrix must be symmetric")
        evals = np.linalg.eigvalsh(Q)
        if evals.min() <= 0:
            raise ValueError("ellipsoid matrix must be positive definite")
        self.Q = Q
        self.eig_min, self.eig_max = float(evals.min()), float(evals.max())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        q = np.einsum("...i,ij,...j->...", x, self.Q, x)
        return np.sqrt(np.maximum(q, 0.0))

    def grad(self, x: np.ndarray) -> np.ndarray:
        nrm = np.maximum(self(x), 1e-300)
        return (x @ self.Q) / nrm[..., None]

    def john_scale(self, dim: int) -> float:
        if self.eig_max > dim * self.eig_min * (1 + 1e-12):
            raise JohnPositionUnavailableError(
                f"ellipsoid condition number {self.eig_max / self.eig_min:.3g} "
                f"exceeds n={dim}; no scalar scaling satisfies the sandwich"
            )
        return 1.0 / math.sqrt(self.eig_max)

    def ball_volume(self, dim: int) -> float:
        return _EUCLID_BALL_VOL(dim) / math.sqrt(np.linalg.det(self.Q))

    def descriptor(self):
        return {"kind": "ellipsoid", "Q": self.Q.tolist()}


class PolytopeNorm:
    """||x|| = max_i |<a_i, x>| for facet functionals a_i (symmetric body).

    John scaling is not computed for polytopes; the facets must describe a
    norm already satisfying the sandwich, which is verified by sampling.
    """

    kind = "polytope"

    def __init__(self, facets):
        A = np.asarray(facets, dtype=float)
        if A.ndim != 2:
            raise ValueError("polytope norm needs a matrix of facet functionals")
        if np.linalg.matrix_rank(A) < A.shape[1]:
            raise ValueError("facet functionals must span the space (bounded ball)")
        self.A = A

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.abs(x @ self.A.T).max(axis=-1)

    def grad(self, x: np.ndarray) -> np.ndarray:
        vals = x @ self.A.T
        idx = np.abs(vals).argmax(axis=-1)
        rows = np.arange(x.shape[0])
        return np.sign(vals[rows, idx])[:, None] * self.A[idx]

    def john_scale(self, dim: int) -> float:
        return 1.0

    def ball_volume(self, dim: int) -> float:
        if dim > 3:
            raise ValueError("polytope ball volume implemented for dim <= 3")
        from scipy.spatial import ConvexHull, HalfspaceIntersection

        halfspaces = np.vstack([
            np.hstack([self.A, -np.ones((len(self.A), 1))]),
            np.hstack([-self.A, -np.ones((len(self.A), 1))]),
        ])
        hs = HalfspaceIntersection(halfspaces, np.zeros(dim))
        return float(ConvexHull(hs.intersections).volume)

    def descriptor(self):
        return {"kind": "polytope", "facets": self.A.tolist()}


def _kind_from_descriptor(desc):
    kind = desc["kind"]
    if kind == "lp":
        p = desc["p"]
        return LpNorm(math.inf if p in ("inf", "oo") else float(p))
    if kind == "ellipsoid":
        return EllipsoidNorm(np.asarray(desc["Q"]))
    if kind == "polytope":
        return PolytopeNorm(np.asarray(desc["facets"]))
    raise ValueError(f"unknown norm kind {kind!r}")


@dataclass(frozen=True)
class NormedSpace:
    """An n-dimensional normed space, by default in the Euclidean sandwich.

    ``norm`` evaluates the working norm (base norm times ``john_scale`` when
    ``john_position`` is set).  Immutable and safe for concurrent reads.
    """

    dim: int
    kind: object
    john_scale: float
    john_position: bool = True

    @property
    def scale(self) -> float:
        return self.john_scale if self.john_position else 1.0

    def norm(self, x) -> np.ndarray:
        x2, single = _as2d(x)
        v = self.scale * self.kind(x2)
        return float(v[0]) if single else v

    def base_norm(self, x) -> np.ndarray:
        x2, single = _as2d(x)
        v = self.kind(x2)
        return float(v[0]) if single else v

    def norm_grad(self, x) -> np.ndarray:
        x2, single = _as2d(x)
        g = self.scale * self.kind.grad(x2)
        return g[0] if single else g

    def radial_profile(self, dirs: np.ndarray) -> np.ndarray:
        """rho(w) = 1/||w||_X for unit Euclidean directions w."""
        return 1.0 / np.maximum(self.norm(np.atleast_2d(dirs)), 1e-300)

    def ball_volume(self) -> float:
        return self.kind.ball_volume(self.dim) / self.scale**self.dim

    def bounding_half_width(self) -> float:
        """Half-width of an axis box containing the unit ball."""
        if self.john_position:
            return math.sqrt(self.dim) + 1e-9
        if self.kind.kind == "lp":
            return 1.0 / self.scale
        if self.kind.kind == "ellipsoid":
            return float(np.sqrt(np.diag(np.linalg.inv(self.kind.Q))).max()) / self.scale
        from scipy.spatial import HalfspaceIntersection

        A = self.kind.A
        halfspaces = np.vstack([
            np.hstack([A, -np.ones((len(A), 1))]),
            np.hstack([-A, -np.ones((len(A), 1))]),
        ])
        hs = HalfspaceIntersection(halfspaces, np.zeros(self.dim))
        return float(np.abs(hs.intersections).max()) / self.scale

    def sample_ball(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform samples of the unit ball via box rejection."""
        w = self.bounding_half_width()
        out = np.empty((size, self.dim))
        have = 0
        while have < size:
            cand = rng.uniform(-w, w, size=(max(2 * (size - have), 256), self.dim))
            cand = cand[self.norm(cand) <= 1.0]
            take = min(len(cand), size - have)
            out[have : have + take] = cand[:take]
            have += take
        return out

    def sample_sphere(self, rng: np.random.Generator, size: int) -> np.ndarray:
        g = rng.standard_normal((size, self.dim))
        g /= np.maximum(np.linalg.norm(g, axis=1), 1e-300)[:, None]
        pts = g / self.norm(g)[:, None]
        return pts

    def dual_directions(self, count: int, seed: int = 0) -> np.ndarray:
        """Norming functionals u_k with sup-slack controlled by count.

        Each row satisfies <x_k, u_k> = ||x_k||_X = 1 at a sphere point x_k
        and <z, u_k> <= ||z||_X for all z, so max_k <z, u_k> recovers the
        norm up to the sphere-net resolution.
        """
        pts = _sphere_stream(self, count, seed)
        return self.norm_grad(pts)

    def verify_john_sandwich(self, n_samples: int = 2000, seed: int = 7):
        """Max relative violation of the sandwich over sampled directions."""
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((n_samples, self.dim))
        g /= np.linalg.norm(g, axis=1)[:, None]
        scaled = self.john_scale * self.kind(g)
        lower = scaled - 1.0 / math.sqrt(self.dim)
        upper = 1.0 - scaled
        return float(min(lower.min(), upper.min()))

    def descriptor(self):
        d = self.kind.descriptor()
        d.update({"dim": self.dim, "john_scale": self.john_scale,
                  "john_position": self.john_position})
        return d

    @staticmethod
    def from_descriptor(desc) -> "NormedSpace":
        kind = _kind_from_descriptor(desc)
        return make_space(int(desc["dim"]), kind,
                          john=bool(desc.get("john_position", True)))


def make_space(dim: int, kind, john: bool = True) -> NormedSpace:
    """Build a NormedSpace; the John scale is computed analytically.

    ``kind`` is an LpNorm/EllipsoidNorm/PolytopeNorm instance or a
    shorthand like ``"lp:inf"``, ``"lp:2"``.  Raises
    JohnPositionUnavailableError when no analytic scalar scaling exists
    (ill-conditioned ellipsoids, polytopes whose given facets violate the
    sandwich).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if isinstance(kind, str):
        tag, _, arg = kind.partition(":")
        if tag != "lp":
            raise ValueError("string shorthand supports only lp:<p>")
        kind = LpNorm(math.inf if arg in ("inf", "oo") else float(arg))
    scale = kind.john_scale(dim)
    space = NormedSpace(dim=dim, kind=kind, john_scale=scale, john_position=john)
    worst = space.verify_john_sandwich()
    if worst < -1e-9:
        raise JohnPositionUnavailableError(
            f"{kind.kind} norm violates the Euclidean sandwich by {-worst:.3g}; "
            "supply a pre-scaled norm"
        )
    return space


# ---------------------------------------------------------------------------
# Nets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Net:
    """A delta-net of the unit ball (or eta-net of the sphere).

    ``covering_radius_sampled`` is the verified max distance-to-net over the
    construction's final check sample; ``separation`` is the exact minimum
    pairwise distance.  ``size_bound`` records (3/delta)^n.
    """

    points: np.ndarray
    delta: float
    space: NormedSpace
    on_sphere: bool = False
    covering_radius_sampled: float = float("nan")
    separation: float = float("nan")
    size_bound: float = float("nan")

    def __len__(self):
        return len(self.points)

    def distances_to(self, pts: np.ndarray) -> np.ndarray:
        """Working-norm distance from each query point to the net."""
        return _dist_to_set(self.space, self.points, np.atleast_2d(pts))

    def to_json(self) -> str:
        return json.dumps(
            {
                "points": self.points.tolist(),
                "delta": self.delta,
                "dim": self.space.dim,
                "norm": self.space.descriptor(),
                "on_sphere": self.on_sphere,
                "covering_radius_sampled": self.covering_radius_sampled,
                "separation": self.separation,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Net":
        d = json.loads(text)
        space = NormedSpace.from_descriptor(d["norm"])
        return Net(
            points=np.asarray(d["points"], dtype=float),
            delta=float(d["delta"]),
            space=space,
            on_sphere=bool(d.get("on_sphere", False)),
            covering_radius_sampled=float(d.get("covering_radius_sampled", "nan")),
            separation=float(d.get("separation", "nan")),
            size_bound=(3.0 / float(d["delta"])) ** space.dim,
        )


def _dist_to_set(space: NormedSpace, base: np.ndarray, pts: np.ndarray,
                 kmax: int = 12) -> np.ndarray:
    """Min working-norm distance from pts to base, via a Euclidean k-NN guard.

    The working norm is >= Euclidean/sqrt(n), so the X-nearest base point is
    within Euclidean distance sqrt(n) * d_X; querying enough Euclidean
    neighbors and refining is exact once the k-th Euclidean distance exceeds
    sqrt(n) times the current best X-distance.
    """
    tree = cKDTree(base)
    n = space.dim
    k = min(kmax, len(base))
    while True:
        de, idx = tree.query(pts, k=k)
        if k == 1:
            de, idx = de[:, None], idx[:, None]
        diffs = pts[:, None, :] - base[idx]
        dx = space.norm(diffs.reshape(-1, n)).reshape(len(pts), k)
        best = dx.min(axis=1)
        # exactness guard: Euclidean k-th neighbor must already be too far
        if k == len(base) or bool(np.all(de[:, -1] >= math.sqrt(n) * best - 1e-12)):
            return best
        k = min(2 * k, len(base))


class _GreedyState:
    """Incremental greedy separated-set with a Euclidean tree refreshed lazily."""

    def __init__(self, space: NormedSpace, delta: float, cap: int):
        self.space = space
        self.delta = delta
        self.cap = cap
        self.points: list[np.ndarray] = []
        self._tree: Optional[cKDTree] = None
        self._tree_size = 0

    def _refresh(self):
        if self.points and self._tree_size != len(self.points):
            self._tree = cKDTree(np.asarray(self.points))
            self._tree_size = len(self.points)

    def try_insert_batch(self, pts: np.ndarray) -> int:
        """Greedy insertion in stream order; returns number inserted."""
        if len(pts) == 0:
            return 0
        n = self.space.dim
        r_euc = self.delta * math.sqrt(n) * (1 + 1e-12)
        if self.points:
            self._refresh()
            # X-distance to the existing net (exact via the k-NN guard)
            d_old = _dist_to_set(self.space, np.asarray(self.points), pts)
            pts = pts[d_old >= self.delta]
            if len(pts) == 0:
                return 0
        inserted = []
        for q in pts:
            ok = True
            if inserted:
                arr = np.asarray(inserted)
                close = np.linalg.norm(arr - q, axis=1) <= r_euc
                if close.any() and self.space.norm(arr[close] - q).min() < self.delta:
                    ok = False
            if ok:
                inserted.append(q)
                if len(self.points) + len(inserted) > self.cap:
                    raise NetTooLargeError(
                        f"net exceeds the configured cap of {self.cap} points"
                    )
        self.points.extend(inserted)
        return len(inserted)

    def repair_covering(self, pts: np.ndarray) -> int:
        """Insert any sample strictly farther than delta from the net.

        Such a point keeps the net delta-separated, so repairing coverage
        never degrades the separation certificate.
        """
        if len(pts) == 0 or not self.points:
            return self.try_insert_batch(pts[:1]) if len(pts) else 0
        d = _dist_to_set(self.space, np.asarray(self.points), pts)
        bad = pts[d > self.delta]
        count = 0
        for q in bad:
            arr = np.asarray(self.points)
            if _dist_to_set(self.space, arr, q[None, :])[0] > self.delta:
                self.points.append(q)
                count += 1
                if len(self.points) > self.cap:
                    raise NetTooLargeError(
                        f"net exceeds the configured cap of {self.cap} points"
                    )
        return count


def _min_pairwise(space: NormedSpace, pts: np.ndarray) -> float:
    if len(pts) < 2:
        return float("inf")
    best = float("inf")
    chunk = max(1, int(2e7) // max(len(pts), 1))
    for i0 in range(0, len(pts), chunk):
        block = pts[i0 : i0 + chunk]
        diffs = block[:, None, :] - pts[None, :, :]
        d = space.norm(diffs.reshape(-1, pts.shape[1])).reshape(len(block), len(pts))
        iarr = np.arange(i0, i0 + len(block))
        d[np.arange(len(block)), iarr] = np.inf
        best = min(best, float(d.min()))
    return best


def _ball_candidate_stream(space: NormedSpace, n_points: int, seed: int) -> np.ndarray:
    w = space.bounding_half_width()
    raw = seeded_shift(halton(int(n_points / 0.35) + 256, space.dim), seed)
    pts = (2 * raw - 1) * w
    pts = pts[space.norm(pts) <= 1.0]
    return pts[:n_points] if len(pts) > n_points else pts


def _sphere_stream(space: NormedSpace, n_points: int, seed: int) -> np.ndarray:
    raw = seeded_shift(halton(n_points, space.dim), seed)
    g = ndtri(np.clip(raw, 1e-12, 1 - 1e-12))
    g /= np.maximum(np.linalg.norm(g, axis=1), 1e-300)[:, None]
    pts = g / space.norm(g)[:, None]
    # double normalization pins ||x||_X = 1 to ~1e-16 relative
    return pts / space.norm(pts)[:, None]


def greedy_net(space: NormedSpace, delta: float, seed: int = 0,
               cap: int = 10**6, stream_size: int = 200_000) -> Net:
    """Maximal delta-separated subset of the unit ball, greedily built.

    The candidate stream starts at the origin and continues with a seeded
    Halton sequence rejected into the ball; insertion accepts points at
    distance exactly delta (separation is a ">=").  Covering is then
    repaired against a fine lattice (dim <= 3) and seeded uniform batches:
    any sample strictly farther than delta is itself a valid insertion.
    """
    if not (0 < delta <= 2):
        raise ValueError("delta must lie in (0, 2]")
    expected = (3.0 / delta) ** space.dim
    if expected > 4 * cap:
        raise NetTooLargeError(
            f"size bound (3/delta)^n = {expected:.3g} exceeds the cap of {cap} points"
        )
    state = _GreedyState(space, delta, cap)
    state.try_insert_batch(np.zeros((1, space.dim)))
    stream = _ball_candidate_stream(space, stream_size, seed)
    for i0 in range(0, len(stream), 20_000):
        state.try_insert_batch(stream[i0 : i0 + 20_000])

    if space.dim <= 3:
        w = space.bounding_half_width()
        per_axis_cap = 400 if space.dim <= 2 else 80
        spacing = max(delta / 3.0, 2 * w / per_axis_cap)
        m = int(w / spacing)
        axis = np.arange(-m, m + 1) * spacing
        grids = np.meshgrid(*([axis] * space.dim), indexing="ij")
        lat = np.stack([g.ravel() for g in grids], axis=-1)
        lat = lat[space.norm(lat) <= 1.0]
        state.repair_covering(lat)
    rng = np.random.default_rng(seed + 1)
    batch = 100_000 if space.dim <= 3 else 20_000
    clean = 0
    for _ in range(12):
        clean = clean + 1 if state.repair_covering(space.sample_ball(rng, batch)) == 0 else 0
        if clean >= 2:
            break

    pts = np.asarray(state.points)
    check_rng = np.random.default_rng(seed + 2)
    for _ in range(3):
        check = space.sample_ball(check_rng, batch)
        covering = float(_dist_to_set(space, pts, check).max())
        if covering <= delta:
            break
        state.repair_covering(check)
        pts = np.asarray(state.points)
    return Net(
        points=pts,
        delta=delta,
        space=space,
        covering_radius_sampled=covering,
        separation=_min_pairwise(space, pts),
        size_bound=expected,
    )


def sphere_net(space: NormedSpace, eta: float, seed: int = 0,
               cap: int = 10**6, stream_size: int = 60_000) -> Net:
    """eta-net of the unit sphere, points normalized to ||x||_X = 1.

    The candidate stream starts at e_1/||e_1||_X, then follows seeded
    Halton directions pushed to the sphere.  eta up to 2 is accepted: the
    sphere has diameter 2 so a single point 2-covers it.
    """
    if not (0 < eta <= 2):
        raise ValueError("eta must lie in (0, 2]")
    expected = (3.0 / eta) ** space.dim
    if expected > 4 * cap:
        raise NetTooLargeError(
            f"size bound (3/eta)^n = {expected:.3g} exceeds the cap of {cap} points"
        )
    e1 = np.zeros(space.dim)
    e1[0] = 1.0
    first = e1 / space.norm(e1)
    state = _GreedyState(space, eta, cap)
    state.try_insert_batch(first[None, :])
    stream = _sphere_stream(space, stream_size, seed)
    for i0 in range(0, len(stream), 20_000):
        state.try_insert_batch(stream[i0 : i0 + 20_000])
    state.repair_covering(_sphere_stream(space, 3 * stream_size, seed + 1))
    rng = np.random.default_rng(seed + 3)
    clean = 0
    for _ in range(12):
        clean = clean + 1 if state.repair_covering(space.sample_sphere(rng, 20_000)) == 0 else 0
        if clean >= 2:
            break

    pts = np.asarray(state.points)
    check_rng = np.random.default_rng(seed + 2)
    for _ in range(3):
        check = space.sample_sphere(check_rng, 10_000)
        covering = float(_dist_to_set(space, pts, check).max())
        if covering <= eta:
            break
        state.repair_covering(check)
        pts = np.asarray(state.points)
    return Net(
        points=pts,
        delta=eta,
        space=space,
        on_sphere=True,
        covering_radius_sampled=covering,
        separation=_min_pairwise(space, pts),
        size_bound=expected,
    )
