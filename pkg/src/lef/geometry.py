"""Planar symmetry groups, domains and discretization grids.

Groups are finite subgroups of O(2): cyclic C_h (h rotations) or dihedral
D_h (h rotations + h reflections).  Grids come in two flavours, a polar
finite-volume grid on disks/annuli and a masked cartesian grid for general
level-set domains.  Both expose the same surface: node coordinates, cell
weights, a symmetric stiffness matrix (discrete Dirichlet form), adjacency
for flood fill and, when the discretization conforms to the group, exact
node permutations for every group element.

All objects here are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

COINCIDENCE_TOL = 1e-12


class GridSymmetryError(ValueError):
    """The grid does not realize a group element as a node permutation."""


# ---------------------------------------------------------------------------
# symmetry groups
# ---------------------------------------------------------------------------

def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _reflection(axis_angle: float) -> np.ndarray:
    c, s = math.cos(2.0 * axis_angle), math.sin(2.0 * axis_angle)
    return np.array([[c, s], [s, -c]])


@dataclass(frozen=True)
class SymmetryGroup:
    """Cyclic or dihedral subgroup of O(2).

    ``order_h`` counts the rotations; a dihedral group additionally carries
    ``order_h`` reflections about lines at angles
    ``axis_angle + k*pi/order_h``.
    """

    kind: str  # 'cyclic' | 'dihedral'
    order_h: int
    axis_angle: float = 0.0

    def __post_init__(self):
        if self.kind not in ("cyclic", "dihedral"):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.order_h < 1:
            raise ValueError("order_h must be >= 1")

    @property
    def size(self) -> int:
        return self.order_h if self.kind == "cyclic" else 2 * self.order_h

    def elements(self) -> list[np.ndarray]:
        """All group elements as 2x2 orthogonal matrices, rotations first."""
        h = self.order_h
        mats = [_rotation(2.0 * math.pi * k / h) for k in range(h)]
        if self.kind == "dihedral":
            mats += [_reflection(self.axis_angle + math.pi * k / h)
                     for k in range(h)]
        return mats

    @property
    def has_reflection(self) -> bool:
        return self.kind == "dihedral"


def cyclic(h: int) -> SymmetryGroup:
    return SymmetryGroup("cyclic", h)


def dihedral(h: int, axis_angle: float = 0.0) -> SymmetryGroup:
    return SymmetryGroup("dihedral", h, axis_angle)


def orbit_cardinality(G: SymmetryGroup, x) -> int:
    """Number of distinct images of ``x`` under the group action."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    images = np.array([m @ x for m in G.elements()])
    distinct: list[np.ndarray] = []
    for img in images:
        if all(np.linalg.norm(img - d) > COINCIDENCE_TOL for d in distinct):
            distinct.append(img)
    return len(distinct)


def apply_group_element(G: SymmetryGroup, index: int, obj):
    """Apply group element ``index`` to a point or a grid field.

    Points are mapped by the orthogonal matrix.  Fields are resampled at the
    preimage of every node; on conforming grids this is an exact node
    permutation.
    """
    if index >= G.size:
        raise IndexError(f"group has {G.size} elements, got index {index}")
    mat = G.elements()[index]
    if isinstance(obj, np.ndarray) and obj.shape == (2,):
        return mat @ obj
    if hasattr(obj, "grid") and hasattr(obj, "values"):
        perm = obj.grid.group_permutations(G)[index]
        import dataclasses
        return dataclasses.replace(obj, values=obj.values[perm])
    raise TypeError("expected a 2-point or a grid field")


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Bounded planar domain: disk, annulus or a level-set mask.

    For ``mask`` domains ``mask_fn`` maps an ``(n, 2)`` coordinate array to a
    boolean "strictly inside" array and ``bounding_radius`` bounds the
    domain.
    """

    shape: str  # 'disk' | 'annulus' | 'mask'
    radius: float = 0.0
    inner_radius: float = 0.0
    mask_fn: Callable[[np.ndarray], np.ndarray] | None = None
    bounding_radius: float = 0.0

    @staticmethod
    def disk(radius: float) -> "DomainSpec":
        if radius <= 0:
            raise ValueError("disk radius must be positive")
        return DomainSpec("disk", radius=radius, bounding_radius=radius)

    @staticmethod
    def annulus(a_in: float, b_out: float) -> "DomainSpec":
        if not 0 < a_in < b_out:
            raise ValueError("need 0 < a_in < b_out")
        return DomainSpec("annulus", radius=b_out, inner_radius=a_in,
                          bounding_radius=b_out)

    @staticmethod
    def symmetric_mask(fn: Callable[[np.ndarray], np.ndarray],
                       bounding_radius: float) -> "DomainSpec":
        return DomainSpec("mask", mask_fn=fn, bounding_radius=bounding_radius)

    @property
    def contains_origin(self) -> bool:
        if self.shape == "disk":
            return True
        if self.shape == "annulus":
            return False
        return bool(np.all(self.mask_fn(np.zeros((1, 2)))))

    def inside(self, pts: np.ndarray) -> np.ndarray:
        """Boolean array: is each point strictly inside the domain."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        if self.shape == "disk":
            return r < self.radius
        if self.shape == "annulus":
            return (r > self.inner_radius) & (r < self.radius)
        return np.asarray(self.mask_fn(pts), dtype=bool)


def check_admissible(G: SymmetryGroup, domain: DomainSpec,
                     samples: int = 512, seed: int = 0) -> bool:
    """True iff |Gx| >= 4 at every sampled non-origin point and the domain
    mask is G-invariant at all samples."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if G.order_h < 4:
        return False
    rng = np.random.default_rng(seed)
    R = domain.bounding_radius
    pts = rng.uniform(-R, R, size=(samples, 2))
    inside = domain.inside(pts)
    for mat in G.elements():
        mapped = domain.inside(pts @ mat.T)
        if np.any(mapped != inside):
            return False
    for x in pts[inside]:
        if np.linalg.norm(x) < COINCIDENCE_TOL:
            continue
        if orbit_cardinality(G, x) < 4:
            return False
    return True


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

class _GridBase:
    """Shared helpers; concrete grids define nodes, weights and stiffness."""

    #: (n,) cell quadrature weights
    weights: np.ndarray
    #: (n, 2) node coordinates
    xy: np.ndarray
    #: symmetric positive-definite discrete Dirichlet form (csr)
    stiffness: sp.csr_matrix
    #: nodes adjacent to the domain boundary
    boundary_adjacent: np.ndarray
    domain: DomainSpec

    @property
    def n_nodes(self) -> int:
        return self.xy.shape[0]

    def laplacian_apply(self, v: np.ndarray) -> np.ndarray:
        """Discrete Dirichlet Laplacian: weights * (-lap v) = stiffness @ v."""
        return -(self.stiffness @ v) / self.weights

    def dirichlet_form(self, v: np.ndarray) -> float:
        """Quadratic form v . K v, the discrete version of ||grad v||^2."""
        return float(v @ (self.stiffness @ v))

    def weighted_norm(self, v: np.ndarray) -> float:
        return math.sqrt(float(self.weights @ (v * v)))

    # -- adjacency / flood fill -------------------------------------------

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric boolean node adjacency (4-neighbor style)."""
        a, b = self._edges
        n = self.n_nodes
        data = np.ones(len(a), dtype=bool)
        m = sp.coo_matrix((data, (a, b)), shape=(n, n))
        return (m + m.T).tocsr()

    # -- group action -------------------------------------------------------

    def group_permutations(self, G: SymmetryGroup) -> list[np.ndarray]:
        """Node permutations realizing each group element.

        ``new_values = values[perm]`` gives the transformed field, i.e.
        ``perm[a]`` is the node index of the preimage of node ``a``.
        """
        raise NotImplementedError

    def symmetrize(self, values: np.ndarray, G: SymmetryGroup) -> np.ndarray:
        perms = self.group_permutations(G)
        acc = np.zeros_like(values)
        for perm in perms:
            acc += values[perm]
        return acc / len(perms)

    def symmetry_defect(self, values: np.ndarray, G: SymmetryGroup) -> float:
        """max over group elements of ||v o g - v||_inf."""
        perms = self.group_permutations(G)
        return max(float(np.max(np.abs(values[perm] - values)))
                   for perm in perms)


class PolarGrid(_GridBase):
    """Cell-centered finite-volume grid in polar coordinates.

    Nodes sit at ``r_j = r_in + (j + 1/2) dr``, ``theta_i = i dtheta``.
    Dirichlet data are imposed at the faces ``r = r_out`` (and ``r = r_in``
    for annuli) at distance ``dr/2`` from the adjacent node.  Rotations by
    multiples of ``dtheta`` and reflections about axes at multiples of
    ``dtheta/2`` act as exact node permutations.
    """

    kind = "polar"

    def __init__(self, n_r: int, n_theta: int, r_out: float = 1.0,
                 r_in: float = 0.0, domain: DomainSpec | None = None):
        if n_r < 2 or n_theta < 4:
            raise ValueError("need n_r >= 2 and n_theta >= 4")
        if not 0 <= r_in < r_out:
            raise ValueError("need 0 <= r_in < r_out")
        self.n_r, self.n_theta = n_r, n_theta
        self.r_in, self.r_out = r_in, r_out
        self.dr = (r_out - r_in) / n_r
        self.dtheta = 2.0 * math.pi / n_theta
        if domain is None:
            domain = (DomainSpec.disk(r_out) if r_in == 0.0
                      else DomainSpec.annulus(r_in, r_out))
        self.domain = domain

        j = np.arange(n_r)
        self.r_nodes = r_in + (j + 0.5) * self.dr
        theta = np.arange(n_theta) * self.dtheta
        rr = np.repeat(self.r_nodes, n_theta)
        tt = np.tile(theta, n_r)
        self.node_r = rr
        self.node_theta = tt
        self.xy = np.column_stack([rr * np.cos(tt), rr * np.sin(tt)])
        self.weights = rr * self.dr * self.dtheta

        self._build_stiffness()

        ba = np.zeros(self.n_nodes, dtype=bool)
        ba[self._idx(n_r - 1, np.arange(n_theta))] = True
        if r_in > 0.0:
            ba[self._idx(0, np.arange(n_theta))] = True
        self.boundary_adjacent = ba
        self._perm_cache: dict = {}

    def _idx(self, j, i):
        return j * self.n_theta + i

    def _build_stiffness(self):
        n_r, n_t = self.n_r, self.n_theta
        dr, dth = self.dr, self.dtheta
        rows, cols, vals = [], [], []
        diag = np.zeros(self.n_nodes)
        ea, eb = [], []

        def add_edge(a, b, c):
            rows.extend([a, b])
            cols.extend([b, a])
            vals.extend([-c, -c])
            diag[a] += c
            diag[b] += c
            ea.append(a)
            eb.append(b)

        i_all = np.arange(n_t)
        # radial faces between rings j and j+1
        for jface in range(1, n_r):
            r_face = self.r_in + jface * dr
            c = r_face * dth / dr
            a = self._idx(jface - 1, i_all)
            b = self._idx(jface, i_all)
            for aa, bb in zip(a, b):
                add_edge(aa, bb, c)
        # angular faces within each ring (periodic)
        for jring in range(n_r):
            c = dr / (self.r_nodes[jring] * dth)
            a = self._idx(jring, i_all)
            b = self._idx(jring, (i_all + 1) % n_t)
            for aa, bb in zip(a, b):
                add_edge(aa, bb, c)
        # Dirichlet faces (half-cell distance)
        c_out = self.r_out * dth / (dr / 2.0)
        diag[self._idx(n_r - 1, i_all)] += c_out
        if self.r_in > 0.0:
            c_in = self.r_in * dth / (dr / 2.0)
            diag[self._idx(0, i_all)] += c_in

        rows.extend(range(self.n_nodes))
        cols.extend(range(self.n_nodes))
        vals.extend(diag)
        self.stiffness = sp.csr_matrix(
            (vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        self._edges = (np.array(ea), np.array(eb))

    # -- radial sampling ----------------------------------------------------

    def sample_radial(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Evaluate a radial function at the node radii."""
        ring_vals = np.asarray(fn(self.r_nodes), dtype=float)
        return np.repeat(ring_vals, self.n_theta)

    @property
    def origin_ring(self) -> np.ndarray | None:
        """Indices of the innermost ring (proxy for the origin node)."""
        if self.r_in > 0.0:
            return None
        return self._idx(0, np.arange(self.n_theta))

    # -- group action ---------------------------------------------------------

    def _theta_steps(self, angle: float) -> int:
        s = angle / self.dtheta
        si = round(s)
        if abs(s - si) > 1e-9:
            raise GridSymmetryError(
                f"angle {angle} is not a multiple of dtheta={self.dtheta}")
        return si % self.n_theta

    def group_permutations(self, G: SymmetryGroup) -> list[np.ndarray]:
        key = (G.kind, G.order_h, round(G.axis_angle, 12))
        if key in self._perm_cache:
            return self._perm_cache[key]
        if self.n_theta % G.order_h != 0:
            raise GridSymmetryError(
                f"n_theta={self.n_theta} not a multiple of h={G.order_h}")
        n_t = self.n_theta
        i = np.arange(n_t)
        j = np.arange(self.n_r)
        perms = []
        # rotation by 2 pi k / h: preimage of node theta_i is theta_{i-s}
        for k in range(G.order_h):
            s = (k * n_t) // G.order_h
            ring_perm = (i - s) % n_t
            perms.append((j[:, None] * n_t + ring_perm[None, :]).ravel())
        if G.kind == "dihedral":
            for k in range(G.order_h):
                axis = G.axis_angle + math.pi * k / G.order_h
                # reflection: preimage of theta is 2*axis - theta
                s2 = self._theta_steps(2.0 * axis)
                ring_perm = (s2 - i) % n_t
                perms.append((j[:, None] * n_t + ring_perm[None, :]).ravel())
        self._perm_cache[key] = perms
        return perms


class CartesianMaskedGrid(_GridBase):
    """Cell-centered uniform cartesian grid restricted to a domain mask.

    Cells tile ``[-extent, extent]^2``; interior nodes are the cell centers
    strictly inside the domain, Dirichlet zero is imposed at the faces
    toward exterior cells (half-cell distance).  Group actions are exact
    node permutations for h in {1, 2, 4} with reflection axes at multiples
    of pi/4.
    """

    kind = "cartesian"

    def __init__(self, domain: DomainSpec, n: int, extent: float | None = None):
        if n < 4:
            raise ValueError("need n >= 4")
        self.domain = domain
        self.n = n
        self.extent = float(extent if extent is not None
                            else domain.bounding_radius)
        self.h = 2.0 * self.extent / n

        coords = (np.arange(n) + 0.5) * self.h - self.extent
        X, Y = np.meshgrid(coords, coords, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        inside = domain.inside(pts)
        self._inside_flat = inside
        self._interior_of_flat = -np.ones(n * n, dtype=np.int64)
        self._interior_of_flat[inside] = np.arange(int(inside.sum()))
        self._flat_of_interior = np.flatnonzero(inside)
        self.xy = pts[inside]
        self.weights = np.full(self.xy.shape[0], self.h ** 2)
        self._build_stiffness()
        self._perm_cache: dict = {}

    def _build_stiffness(self):
        n = self.n
        inside = self._inside_flat.reshape(n, n)
        interior = self._interior_of_flat.reshape(n, n)
        rows, cols, vals = [], [], []
        diag = np.zeros(self.n_nodes)
        ea, eb = [], []
        bnd = np.zeros(self.n_nodes, dtype=bool)

        def neighbors(ix, iy):
            for dx, dy in ((1, 0), (0, 1)):
                jx, jy = ix + dx, iy + dy
                if jx < n and jy < n:
                    yield jx, jy

        for ix in range(n):
            for iy in range(n):
                if not inside[ix, iy]:
                    continue
                a = interior[ix, iy]
                for jx, jy in neighbors(ix, iy):
                    if inside[jx, jy]:
                        b = interior[jx, jy]
                        rows.extend([a, b])
                        cols.extend([b, a])
                        vals.extend([-1.0, -1.0])
                        diag[a] += 1.0
                        diag[b] += 1.0
                        ea.append(a)
                        eb.append(b)
                # Dirichlet faces: any 4-neighbor outside (or off-grid)
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    jx, jy = ix + dx, iy + dy
                    if (jx < 0 or jx >= n or jy < 0 or jy >= n
                            or not inside[jx, jy]):
                        diag[a] += 2.0  # zero value at half-cell distance
                        bnd[a] = True

        rows.extend(range(self.n_nodes))
        cols.extend(range(self.n_nodes))
        vals.extend(diag)
        self.stiffness = sp.csr_matrix(
            (vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        self._edges = (np.array(ea, dtype=np.int64), np.array(eb, dtype=np.int64))
        self.boundary_adjacent = bnd

    @property
    def origin_ring(self) -> np.ndarray | None:
        if not self.domain.contains_origin:
            return None
        d2 = np.einsum("ij,ij->i", self.xy, self.xy)
        near = np.flatnonzero(d2 <= 2.01 * (self.h / 2.0) ** 2)
        return near if near.size else np.array([int(np.argmin(d2))])

    def _index_map(self, mat: np.ndarray) -> np.ndarray:
        """Permutation for an orthogonal map that permutes cell centers."""
        n = self.n
        src = self.xy @ mat  # mat is orthogonal: inverse = transpose
        ix = np.rint((src[:, 0] + self.extent) / self.h - 0.5).astype(np.int64)
        iy = np.rint((src[:, 1] + self.extent) / self.h - 0.5).astype(np.int64)
        err = np.max(np.abs(src[:, 0] - ((ix + 0.5) * self.h - self.extent)))
        err = max(err, np.max(np.abs(src[:, 1] - ((iy + 0.5) * self.h - self.extent))))
        if err > 1e-9 * self.h:
            raise GridSymmetryError("group element does not map cell centers "
                                    "to cell centers")
        flat = ix * n + iy
        perm = self._interior_of_flat[flat]
        if np.any(perm < 0):
            raise GridSymmetryError("domain mask is not invariant on the grid")
        return perm

    def group_permutations(self, G: SymmetryGroup) -> list[np.ndarray]:
        key = (G.kind, G.order_h, round(G.axis_angle, 12))
        if key in self._perm_cache:
            return self._perm_cache[key]
        if G.order_h not in (1, 2, 4):
            raise GridSymmetryError(
                "cartesian grids support h in {1, 2, 4} only")
        perms = [self._index_map(m) for m in G.elements()]
        self._perm_cache[key] = perms
        return perms


def squircle_mask(radius: float = 1.0, power: float = 4.0) -> DomainSpec:
    """D4-symmetric convex 'squircle' |x|^q + |y|^q < radius^q."""
    def fn(pts):
        return (np.abs(pts[:, 0]) ** power + np.abs(pts[:, 1]) ** power
                < radius ** power)
    dom = DomainSpec.symmetric_mask(fn, bounding_radius=radius)
    # serializable recipe, so field dumps on this domain can round-trip
    object.__setattr__(dom, "_config",
                       {"type": "squircle", "radius": radius, "power": power})
    return dom
