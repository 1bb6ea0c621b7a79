"""Structured P1 meshes on the unit interval / unit square with a split
Dirichlet (Gamma_0) / conormal (Gamma_1) boundary, coefficient fields and
operator assembly for L u = -div(A grad u).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

SIDES = {1: ("left", "right"), 2: ("left", "right", "bottom", "top")}

# outward normal of each side
_NORMALS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}


class DomainError(ValueError):
    pass


class EllipticityError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteDomain:
    dimension: int
    resolution: int
    node_coords: np.ndarray  # (N, d)
    elements: np.ndarray  # (E, d+1)
    gamma0_nodes: np.ndarray
    gamma1_nodes: np.ndarray
    h_values: np.ndarray
    facets: np.ndarray  # (F, d) boundary facet -> node indices
    facet_sides: tuple
    outward_normals: np.ndarray  # (F, d)
    gamma0_sides: tuple
    volumes: np.ndarray = field(repr=False)
    grads: np.ndarray = field(repr=False)  # (E, d+1, d) barycentric gradients

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def spacing(self) -> float:
        return 1.0 / self.resolution

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.union1d(self.gamma0_nodes, self.gamma1_nodes)

    @property
    def gamma1_sides(self) -> tuple:
        return tuple(s for s in SIDES[self.dimension] if s not in self.gamma0_sides)

    @property
    def measure(self) -> float:
        return float(self.volumes.sum())

    def side_nodes(self, side: str) -> np.ndarray:
        return _side_nodes(self.dimension, self.resolution, side)

    def grid_index(self, i: int, j: int = 0) -> int:
        return j * (self.resolution + 1) + i

    def centroids(self) -> np.ndarray:
        return self.node_coords[self.elements].mean(axis=1)

    def element_gradient(self, values: np.ndarray) -> np.ndarray:
        """Per-element gradient (E, d) of a P1 nodal field."""
        return np.einsum("ea,ead->ed", values[self.elements], self.grads)

    def element_average(self, values: np.ndarray) -> np.ndarray:
        return values[self.elements].mean(axis=1)


def _side_nodes(dim: int, n: int, side: str) -> np.ndarray:
    if dim == 1:
        return np.array([0 if side == "left" else n])
    idx = np.arange(n + 1)
    if side == "left":
        return idx * (n + 1)
    if side == "right":
        return idx * (n + 1) + n
    if side == "bottom":
        return idx
    return n * (n + 1) + idx


def _parse_sides(dim: int, gamma0_spec) -> tuple:
    if isinstance(gamma0_spec, str):
        gamma0_spec = [p.strip() for p in gamma0_spec.split(",") if p.strip()]
    sides = tuple(s for s in SIDES[dim] if s in set(gamma0_spec))
    unknown = set(gamma0_spec) - set(SIDES[dim])
    if unknown:
        raise DomainError(f"unknown boundary piece(s) for dimension {dim}: {sorted(unknown)}")
    if not sides:
        raise DomainError("Gamma0 empty: the Dirichlet part must have positive measure")
    return sides


def _p1_geometry(coords: np.ndarray, elements: np.ndarray):
    dim = coords.shape[1]
    if dim == 1:
        x = coords[elements, 0]
        h = x[:, 1] - x[:, 0]
        grads = np.stack([-1.0 / h, 1.0 / h], axis=1)[:, :, None]
        return h, grads
    p = coords[elements]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    # gradients of barycentric coordinates via the inverse Jacobian
    inv = np.empty((len(det), 2, 2))
    inv[:, 0, 0] = e2[:, 1] / det
    inv[:, 0, 1] = -e2[:, 0] / det
    inv[:, 1, 0] = -e1[:, 1] / det
    inv[:, 1, 1] = e1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("ak,ekd->ead", ref, inv)
    return area, grads


def build_domain(dimension: int, resolution: int, gamma0_spec) -> DiscreteDomain:
    """Structured mesh of (0,1)^d with ``resolution`` cells per axis.

    ``gamma0_spec`` names the Dirichlet sides (``"left"``, ``"right"`` and in
    2D also ``"bottom"``, ``"top"``); every other boundary node is Gamma_1.
    Corner nodes shared by both parts are assigned to Gamma_0.
    """
    if dimension not in (1, 2):
        raise DomainError(f"dimension must be 1 or 2, got {dimension}")
    n = int(resolution)
    if n < 4:
        raise DomainError(f"resolution must be >= 4, got {resolution}")
    sides = _parse_sides(dimension, gamma0_spec)

    t = np.linspace(0.0, 1.0, n + 1)
    if dimension == 1:
        coords = t[:, None]
        elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        h = np.minimum(t, 1.0 - t)
        facets = np.array([[0], [n]])
        facet_sides = ("left", "right")
        normals = np.array([[-1.0], [1.0]])
    else:
        X, Y = np.meshgrid(t, t)
        coords = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(n), np.arange(n))
        n00 = (j * (n + 1) + i).ravel()
        n10, n01 = n00 + 1, n00 + n + 1
        n11 = n01 + 1
        elements = np.concatenate(
            [np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])]
        )
        x, y = coords[:, 0], coords[:, 1]
        h = np.minimum.reduce([x, 1.0 - x, y, 1.0 - y])
        facets, facet_sides, normals = [], [], []
        for side in SIDES[2]:
            nodes = _side_nodes(2, n, side)
            facets.append(np.column_stack([nodes[:-1], nodes[1:]]))
            facet_sides += [side] * n
            normals.append(np.tile(_NORMALS[side], (n, 1)))
        facets = np.concatenate(facets)
        facet_sides = tuple(facet_sides)
        normals = np.concatenate(normals)
    h[np.abs(h) < 1e-14] = 0.0

    boundary = np.unique(np.concatenate([_side_nodes(dimension, n, s) for s in SIDES[dimension]]))
    gamma0 = np.unique(np.concatenate([_side_nodes(dimension, n, s) for s in sides]))
    gamma1 = np.setdiff1d(boundary, gamma0)

    volumes, grads = _p1_geometry(coords, elements)
    if np.any(volumes <= 0):
        raise DomainError("non-positive element volume")

    dom = DiscreteDomain(
        dimension=dimension,
        resolution=n,
        node_coords=coords,
        elements=elements,
        gamma0_nodes=gamma0,
        gamma1_nodes=gamma1,
        h_values=h,
        facets=facets,
        facet_sides=facet_sides,
        outward_normals=normals,
        gamma0_sides=sides,
        volumes=volumes,
        grads=grads,
    )
    _check_level_set(dom)
    return dom


def _check_level_set(dom: DiscreteDomain) -> None:
    h = dom.h_values
    if np.any(h < 0) or np.any(h[dom.boundary_nodes] != 0):
        raise DomainError("level set must vanish exactly on the boundary")
    n = dom.resolution
    # one layer inward along the normal of each side, corners excluded
    for side in SIDES[dom.dimension]:
        nodes = dom.side_nodes(side)
        if dom.dimension == 2:
            nodes = nodes[1:-1]
        step = {"left": 1, "right": -1, "bottom": n + 1, "top": -(n + 1)}[side]
        slope = (h[nodes + step] - h[nodes]) / dom.spacing
        if np.max(np.abs(slope - 1.0)) > 1e-12:
            raise DomainError(f"|grad h| != 1 next to side {side}")


# ---------------------------------------------------------------------------
# coefficients

Entry = Callable[[np.ndarray], np.ndarray] | float


@dataclass(frozen=True)
class CoefficientSpec:
    """``kind`` is ``identity``, ``diagonal`` (d entries) or
    ``full_symmetric`` (a11, a12, a22).  Entries are constants or callables of
    the centroid coordinates, shape (m, d) -> (m,)."""

    kind: str = "identity"
    entries: tuple = ()


@dataclass(frozen=True)
class CoefficientField:
    matrices: np.ndarray  # (E, d, d)
    lambda1: float
    lambda2: float

    @classmethod
    def from_matrices(cls, matrices) -> "CoefficientField":
        mats = np.asarray(matrices, dtype=float)
        if not np.all(np.isfinite(mats)):
            raise EllipticityError("non-finite coefficient entries")
        if np.max(np.abs(mats - np.swapaxes(mats, 1, 2)), initial=0.0) != 0.0:
            raise EllipticityError("coefficient matrix not symmetric")
        eig = np.linalg.eigvalsh(mats)
        lam1, lam2 = float(eig.min()), float(eig.max())
        if lam1 <= 0:
            raise EllipticityError(f"ellipticity violated: min eigenvalue {lam1:g} <= 0")
        return cls(mats, lam1, lam2)


def _sample(entry: Entry, pts: np.ndarray) -> np.ndarray:
    if callable(entry):
        vals = np.asarray(entry(pts), dtype=float)
        return np.broadcast_to(vals, (pts.shape[0],)).copy()
    return np.full(pts.shape[0], float(entry))


def build_coefficients(domain: DiscreteDomain, spec: CoefficientSpec | str = "identity") -> CoefficientField:
    if isinstance(spec, str):
        spec = CoefficientSpec(spec)
    d = domain.dimension
    pts = domain.centroids()
    m = pts.shape[0]
    mats = np.zeros((m, d, d))
    if spec.kind == "identity":
        mats[:] = np.eye(d)
    elif spec.kind == "diagonal":
        if len(spec.entries) != d:
            raise EllipticityError(f"diagonal coefficient needs {d} entries")
        for k, entry in enumerate(spec.entries):
            mats[:, k, k] = _sample(entry, pts)
    elif spec.kind == "full_symmetric":
        if d != 2 or len(spec.entries) != 3:
            raise EllipticityError("full_symmetric needs (a11, a12, a22) in 2D")
        a11, a12, a22 = (_sample(e, pts) for e in spec.entries)
        mats[:, 0, 0], mats[:, 1, 1] = a11, a22
        mats[:, 0, 1] = mats[:, 1, 0] = a12
    else:
        raise EllipticityError(f"unknown coefficient kind {spec.kind!r}")
    return CoefficientField.from_matrices(mats)


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class AssembledOperators:
    domain: DiscreteDomain
    coeff: CoefficientField
    M: sp.csr_matrix
    K_A: sp.csr_matrix
    K_I: sp.csr_matrix
    free_dofs: np.ndarray
    mass_mode: str

    @property
    def lumped_weights(self) -> np.ndarray:
        return np.asarray(self.M.sum(axis=1)).ravel()

    def restrict(self, mat) -> sp.csr_matrix:
        f = self.free_dofs
        return mat[f][:, f]

    def extend(self, free_values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.domain.n_nodes)
        out[self.free_dofs] = free_values
        return out


def _scatter(dom: DiscreteDomain, local: np.ndarray) -> sp.csr_matrix:
    el = dom.elements
    k = el.shape[1]
    rows = np.repeat(el, k, axis=1).ravel()
    cols = np.tile(el, (1, k)).ravel()
    n = dom.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness(dom: DiscreteDomain, matrices: np.ndarray) -> sp.csr_matrix:
    G = dom.grads
    local = dom.volumes[:, None, None] * np.einsum("eid,edf,ejf->eij", G, matrices, G)
    local = 0.5 * (local + np.swapaxes(local, 1, 2))
    return _scatter(dom, local)


def mass(dom: DiscreteDomain, mode: str = "lumped") -> sp.csr_matrix:
    k = dom.dimension + 1
    if mode == "lumped":
        w = np.zeros(dom.n_nodes)
        np.add.at(w, dom.elements.ravel(), np.repeat(dom.volumes / k, k))
        return sp.diags(w).tocsr()
    if mode == "consistent":
        ref = (np.ones((k, k)) + np.eye(k)) / ((k + 1) * k)
        return _scatter(dom, dom.volumes[:, None, None] * ref[None])
    raise ValueError(f"mass_mode must be 'lumped' or 'consistent', got {mode!r}")


def assemble(domain: DiscreteDomain, coeff: CoefficientField, mass_mode: str = "lumped",
             check_trials: int = 100, seed: int = 0) -> AssembledOperators:
    d = domain.dimension
    K_A = stiffness(domain, coeff.matrices)
    K_I = stiffness(domain, np.broadcast_to(np.eye(d), coeff.matrices.shape))
    M = mass(domain, mass_mode)
    free = np.setdiff1d(np.arange(domain.n_nodes), domain.gamma0_nodes)
    if free.size == 0:
        raise DomainError("no free degrees of freedom")
    ops = AssembledOperators(domain, coeff, M, K_A, K_I, free, mass_mode)

    rng = np.random.default_rng(seed)
    for _ in range(check_trials):
        v = rng.standard_normal(domain.n_nodes)
        a, e = v @ (K_A @ v), v @ (K_I @ v)
        tol = 1e-12 * max(abs(a), abs(e), 1.0)
        if not (coeff.lambda1 * e - tol <= a <= coeff.lambda2 * e + tol):
            raise EllipticityError("ellipticity sandwich violated after assembly")
    try:
        np.linalg.cholesky(ops.restrict(K_A).toarray())
    except np.linalg.LinAlgError as exc:
        raise DomainError("restricted stiffness is singular") from exc
    return ops


def dump_operator(stream, name: str, mat) -> None:
    """Triplet dump: ``# name rows cols nnz`` then ``i j value`` lines."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    stream.write(f"# {name} {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
    for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        stream.write(f"{i} {j} {v:.17g}\n")


# ---------------------------------------------------------------------------
# boundary shells


@dataclass(frozen=True)
class Shell:
    tau: float
    facet_nodes: np.ndarray  # (F, d) nodes of each shell facet
    parent_nodes: np.ndarray  # (F, d) matching Gamma_1 facet nodes
    normals: np.ndarray  # (F, d)
    elements: np.ndarray  # (F,) element on the interior side of each facet
    measures: np.ndarray  # (F,)


@dataclass(frozen=True)
class ShellFamily:
    tau_values: np.ndarray  # decreasing
    shells: tuple  # aligned with tau_values

    def __len__(self):
        return len(self.shells)


def _interior_element(dom: DiscreteDomain, nodes: np.ndarray, normal: np.ndarray) -> int:
    """Element containing the facet ``nodes`` that lies on the -normal side."""
    mask = np.all(np.isin(dom.elements, nodes).sum(axis=1, keepdims=True) >= len(nodes), axis=1)
    cand = np.flatnonzero(mask)
    mid = dom.node_coords[nodes].mean(axis=0)
    side = (dom.centroids()[cand] - mid) @ normal
    return int(cand[np.argmin(side)])


def build_shells(domain: DiscreteDomain, n_shells: int) -> ShellFamily:
    """Facet layers at graph distance k = 0..n_shells-1 from Gamma_1, obtained
    by the inward normal offset r -> r - tau*nu(r) with tau = k/resolution."""
    if n_shells < 2:
        raise DomainError("n_shells must be >= 2")
    sides = domain.gamma1_sides
    if not sides:
        raise DomainError("Gamma1 is empty: no shells to build")
    n = domain.resolution
    if n_shells > n // 2:
        raise DomainError(f"n_shells={n_shells} exceeds available interior layers ({n // 2})")
    d = domain.dimension
    shells = []
    for k in range(n_shells):
        tau = k / n
        fn, pn, nu, els, meas = [], [], [], [], []
        for side in sides:
            normal = np.array(_NORMALS[side][:d])
            if d == 1:
                parent = domain.side_nodes(side)
                facets = parent[:, None]
                shifted = parent - k if side == "right" else parent + k
                shifted = shifted[:, None]
            else:
                idx = [f for f, s in enumerate(domain.facet_sides) if s == side]
                facets = domain.facets[idx]
                step = {"left": 1, "right": -1, "bottom": n + 1, "top": -(n + 1)}[side]
                shifted = facets + k * step
            for par, sh in zip(facets, shifted):
                fn.append(sh)
                pn.append(par)
                nu.append(normal)
                els.append(_interior_element(domain, sh, normal))
                meas.append(1.0 if d == 1 else float(np.linalg.norm(np.diff(domain.node_coords[sh], axis=0))))
        shells.append(Shell(tau, np.array(fn), np.array(pn), np.array(nu), np.array(els), np.array(meas)))
    shells = shells[::-1]
    return ShellFamily(np.array([sh.tau for sh in shells]), tuple(shells))
