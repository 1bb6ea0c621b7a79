"""Spectral calculus of the discrete mixed-boundary operator.

The free-DOF pencil (K_A, M) is decomposed densely; every fractional power
L^p is then applied as ``sum_k lam_k^p <v, phi_k>_M phi_k``.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla

from .mesh import AssembledOperators


class SpectralError(RuntimeError):
    pass


class Gamma0ProjectionWarning(UserWarning):
    """A field with nonzero Gamma_0 values was zeroed there before expansion."""


class SpectralDecomposition:
    """Eigenpairs of the discrete L_B with M-orthonormal eigenvectors.

    ``eigenvectors`` has one column per mode, as nodal fields on the full
    mesh (rows of Gamma_0 nodes are zero).
    """

    def __init__(self, eigenvalues, eigenvectors, source: AssembledOperators):
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors
        self.source = source
        self._mass = source.M
        self._cache: dict = {}
        self.m_norm_check = float("nan")
        self.residual_check = float("nan")

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    def project(self, v, warn: bool = True) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        g0 = self.source.domain.gamma0_nodes
        if np.any(v[g0] != 0.0):
            if warn:
                warnings.warn("field nonzero on Gamma_0; projected to zero there",
                              Gamma0ProjectionWarning, stacklevel=3)
            v = v.copy()
            v[g0] = 0.0
        return v

    def coefficients(self, v, warn: bool = True) -> np.ndarray:
        """Expansion coefficients c_k = phi_k^T M v."""
        v = self.project(v, warn)
        return self.eigenvectors.T @ (self._mass @ v)

    def synthesize(self, c) -> np.ndarray:
        return self.eigenvectors @ c

    def power_matrix(self, exponent: float) -> np.ndarray:
        """Dense nodal matrix of L^exponent (Gamma_0 rows/cols zero)."""
        key = float(exponent)
        mat = self._cache.get(key)
        if mat is None:
            Phi = self.eigenvectors
            mat = (Phi * self.eigenvalues ** key) @ (self._mass.T @ Phi).T
            mat.setflags(write=False)
            self._cache[key] = mat
        return mat


def eigendecompose(ops: AssembledOperators) -> SpectralDecomposition:
    f = ops.free_dofs
    K = ops.restrict(ops.K_A).toarray()
    if ops.mass_mode == "lumped":
        d = ops.M.diagonal()[f]
        s = 1.0 / np.sqrt(d)
        S = K * s[:, None] * s[None, :]
        S = 0.5 * (S + S.T)
        try:
            lam, W = sla.eigh(S)
        except sla.LinAlgError as exc:
            raise SpectralError(f"eigensolver failed: {exc}") from exc
        phi_f = W * s[:, None]
    else:
        Mf = ops.restrict(ops.M).toarray()
        try:
            lam, phi_f = sla.eigh(K, Mf)
        except sla.LinAlgError as exc:
            raise SpectralError(f"eigensolver failed: {exc}") from exc
    if lam[0] <= 0:
        raise SpectralError(f"non-positive eigenvalue {lam[0]:g}: Gamma_0 must be nonempty")

    phi = np.zeros((ops.domain.n_nodes, lam.size))
    phi[f] = phi_f
    dec = SpectralDecomposition(lam, phi, ops)

    gram = phi.T @ (ops.M @ phi)
    dec.m_norm_check = float(np.max(np.abs(gram - np.eye(lam.size))))
    if dec.m_norm_check > 1e-10:
        raise SpectralError(f"M-orthonormality lost: {dec.m_norm_check:.3e}")
    # Gamma_0 rows carry the Dirichlet reaction and are excluded
    KP = (ops.K_A @ phi)[f]
    res = np.linalg.norm(KP - (ops.M @ phi)[f] * lam, axis=0)
    rel = res / np.maximum(np.linalg.norm(KP, axis=0), np.finfo(float).tiny)
    dec.residual_check = float(rel.max())
    if dec.residual_check > 1e-8:
        raise SpectralError(f"eigen-residual too large: {dec.residual_check:.3e}")
    return dec


def apply_power(dec: SpectralDecomposition, exponent: float, v) -> np.ndarray:
    c = dec.coefficients(v)
    return dec.synthesize(dec.eigenvalues ** exponent * c)


def k_s(dec: SpectralDecomposition, s: float, v) -> np.ndarray:
    return apply_power(dec, -s, v)


def h_s(dec: SpectralDecomposition, s: float, v) -> np.ndarray:
    return apply_power(dec, -0.5 * s, v)


def check_exponent(s: float) -> float:
    s = float(s)
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0,1), got {s}")
    return s


def fractional_norm(dec: SpectralDecomposition, sigma: float, v, variant: str = "equivalent") -> float:
    """``equivalent``: ||L^sigma v||; ``full``: (||v||^2 + ||L^sigma v||^2)^(1/2)."""
    c = dec.coefficients(v)
    sq = float(np.sum(dec.eigenvalues ** (2.0 * sigma) * c * c))
    if variant == "equivalent":
        return np.sqrt(sq)
    if variant == "full":
        return np.sqrt(float(c @ c) + sq)
    raise ValueError(f"unknown variant {variant!r}")


def l2_norm(ops: AssembledOperators, v) -> float:
    return float(np.sqrt(v @ (ops.M @ v)))


def gradient_energy(ops: AssembledOperators, v) -> float:
    return float(v @ (ops.K_I @ v))


def a_gradient_energy(ops: AssembledOperators, v) -> float:
    return float(v @ (ops.K_A @ v))


# ---------------------------------------------------------------------------

S_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))
IDENTITY_TOL = 1e-8
# rounding allowance for inequalities that may hold with equality
INEQ_TOL = 1e-10


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), np.finfo(float).tiny)


def verify_operator_suite(dec: SpectralDecomposition, ops: AssembledOperators | None = None,
                          trials: int = 100, s_grid=S_GRID, seed: int = 0) -> dict:
    """Run the operator laws over random Dirichlet-class fields.

    Returns ``{law: {"max_violation", "bound", "passed", "kind"}}``; identity
    laws report the max relative error, inequality laws the max relative
    excess over the right-hand side.  ``h_gradient_bound_literal`` uses the
    constant C^(1/2) as printed, and is informational only.
    """
    ops = ops or dec.source
    rng = np.random.default_rng(seed)
    lam1 = dec.lambda1
    L1, L2 = ops.coeff.lambda1, ops.coeff.lambda2
    M, KA, KI = ops.M, ops.K_A, ops.K_I
    g0 = ops.domain.gamma0_nodes

    def ip(a, b):
        return float(a @ (M @ b))

    laws = {
        "self_adjoint": ("identity", []),
        "inverse_round_trip": ("identity", []),
        "semigroup": ("identity", []),
        "kS_energy_identity": ("identity", []),
        "norm_equivalence_identity": ("identity", []),
        "poincare": ("inequality", []),
        "norm_equivalence_sandwich": ("inequality", []),
        "k_gradient_bound": ("inequality", []),
        "h_gradient_bound": ("inequality", []),
        "kh_sandwich": ("inequality", []),
        "h_gradient_bound_literal": ("informational", []),
    }
    for _ in range(trials):
        u = rng.standard_normal(ops.domain.n_nodes)
        v = rng.standard_normal(ops.domain.n_nodes)
        u[g0] = 0.0
        v[g0] = 0.0
        grad_u = gradient_energy(ops, u)
        half = fractional_norm(dec, 0.5, u) ** 2
        laws["norm_equivalence_identity"][1].append(_rel(a_gradient_energy(ops, u), half))
        laws["norm_equivalence_sandwich"][1].append(
            max(L1 * grad_u - half, half - L2 * grad_u, 0.0) / half)
        for s in s_grid:
            Lu, Lv = apply_power(dec, s, u), apply_power(dec, s, v)
            laws["self_adjoint"][1].append(
                abs(ip(Lu, v) - ip(u, Lv)) / (l2_norm(ops, Lu) * l2_norm(ops, v)))
            back = apply_power(dec, s, apply_power(dec, -s, u))
            laws["inverse_round_trip"][1].append(l2_norm(ops, back - u) / l2_norm(ops, u))
            s1, s2 = s, -0.5 * s
            two = apply_power(dec, s1, apply_power(dec, s2, u))
            one = apply_power(dec, s1 + s2, u)
            laws["semigroup"][1].append(l2_norm(ops, two - one) / l2_norm(ops, one))

            nrm = fractional_norm(dec, s, u)
            lhs = l2_norm(ops, u)
            laws["poincare"][1].append(max(lhs - lam1 ** (-s) * nrm, 0.0) / lhs)

            Ku = k_s(dec, s, u)
            Hu = h_s(dec, s, u)
            left = float(Ku @ (KA @ u))
            right = fractional_norm(dec, 0.5 * (1.0 - s), u) ** 2
            laws["kS_energy_identity"][1].append(_rel(left, right))

            gK = gradient_energy(ops, Ku)
            cK = lam1 ** (-2 * s) * L2 / L1
            laws["k_gradient_bound"][1].append(max(gK - cK * grad_u, 0.0) / (cK * grad_u))
            gH = gradient_energy(ops, Hu)
            cH = lam1 ** (-s) * L2 / L1
            laws["h_gradient_bound"][1].append(max(gH - cH * grad_u, 0.0) / (cH * grad_u))
            cH_lit = np.sqrt(cK)
            laws["h_gradient_bound_literal"][1].append(max(gH - cH_lit * grad_u, 0.0) / (cH_lit * grad_u))
            laws["kh_sandwich"][1].append(max(L1 * gH - left, left - L2 * gH, 0.0) / left)

    report = {}
    for name, (kind, vals) in laws.items():
        worst = float(max(vals)) if vals else 0.0
        bound = IDENTITY_TOL if kind == "identity" else INEQ_TOL
        report[name] = {
            "kind": kind,
            "max_violation": worst,
            "bound": bound,
            "passed": True if kind == "informational" else worst <= bound,
        }
    return report
