"""Eigen-solving, degeneracy clustering, cylinder spectra, and conductance.

Energies are in natural units hbar = m = 1 (so the cylinder transverse
levels with the spin connection are (n^2 +- n)/(2 rho^2), giving the
ladder 0, 1, 3, 6, ... at rho = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigensolverError
from .hamiltonian import HermitianOperator

__all__ = [
    "SpectrumResult",
    "eigensolve",
    "CylinderLevel",
    "cylinder_analytic_spectrum",
    "cylinder_thresholds",
    "degeneracy_clusters",
    "ConductanceCurve",
    "conductance_curve",
    "cylinder_ring_operator",
]

_DENSE_CUTOFF = 4096


@dataclass
class SpectrumResult:
    values: np.ndarray
    vectors: Optional[np.ndarray]
    clusters: list                 # [(value, multiplicity), ...]
    residuals: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def eigensolve(op, k: int, which: str = "lowest", target: float = 0.0,
               return_vectors: bool = True, cluster_tol: Optional[float] = None,
               maxiter: Optional[int] = None, seed: Optional[int] = None
               ) -> SpectrumResult:
    """Hermitian eigensolve with a residual contract.

    Dense solve below 4096 rows; otherwise shift-invert Lanczos (ARPACK)
    with ``which`` in {'lowest', 'nearest'} ('nearest' targets ``target``).
    Every reported pair satisfies ||H v - lambda v|| <= 1e-10 ||H||_inf,
    otherwise EigensolverError is raised reporting the achieved residual.
    """
    mat = op.matrix if isinstance(op, HermitianOperator) else op.tocsr()
    dim = mat.shape[0]
    if k >= dim:
        raise ValueError(f"need k < dimension, got k={k}, dim={dim}")

    if dim <= _DENSE_CUTOFF:
        dense = mat.toarray()
        vals, vecs = np.linalg.eigh(dense)
        if which == "lowest":
            sel = np.arange(k)
        elif which == "nearest":
            sel = np.argsort(np.abs(vals - target))[:k]
            sel = sel[np.argsort(vals[sel])]
        else:
            raise ValueError(f"unknown which={which!r}")
        vals = vals[sel]
        vecs = vecs[:, sel]
        method = "dense-eigh"
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        if which == "lowest":
            sigma = _lower_bound(mat) - 0.01 * max(1.0, _scale(mat))
        elif which == "nearest":
            sigma = target
        else:
            raise ValueError(f"unknown which={which!r}")
        try:
            vals, vecs = spla.eigsh(mat, k=k, sigma=sigma, which="LM",
                                    v0=v0, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise EigensolverError(
                f"ARPACK did not converge: {len(exc.eigenvalues)} of {k} "
                f"pairs found") from exc
        order = np.argsort(vals)
        vals = vals[order]
        vecs = vecs[:, order]
        method = "shift-invert-lanczos"

    norm = _scale(mat)
    residuals = np.array([
        np.linalg.norm(mat @ vecs[:, i] - vals[i] * vecs[:, i])
        / np.linalg.norm(vecs[:, i]) for i in range(len(vals))])
    if np.any(residuals > 1e-10 * max(norm, 1e-300)):
        raise EigensolverError(
            f"residual contract violated: max residual "
            f"{residuals.max():.3e} > 1e-10 * ||H|| = {1e-10 * norm:.3e}")

    clusters = degeneracy_clusters(vals, tol=cluster_tol)
    return SpectrumResult(
        values=vals, vectors=vecs if return_vectors else None,
        clusters=clusters, residuals=residuals,
        diagnostics={"method": method, "norm_inf": norm})


def _scale(mat) -> float:
    return float(abs(mat).sum(axis=1).max()) if mat.nnz else 0.0


def _lower_bound(mat) -> float:
    # Gershgorin lower bound
    d = mat.diagonal().real
    offsum = np.asarray(abs(mat).sum(axis=1)).ravel() - np.abs(mat.diagonal())
    return float((d - offsum).min())


def degeneracy_clusters(values, tol: Optional[float] = None):
    """Greedy gap clustering of sorted values -> [(mean, multiplicity)].

    Default tolerance is 1e-8 * (max - min) of the window.
    """
    vals = np.sort(np.asarray(values, dtype=float))
    if len(vals) == 0:
        return []
    if tol is None:
        tol = 1e-8 * max(vals[-1] - vals[0], 1e-300)
    clusters = []
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[i - 1] > tol:
            chunk = vals[start:i]
            clusters.append((float(chunk.mean()), len(chunk)))
            start = i
    return clusters


# ----------------------------------------------------------------------
# Analytic cylinder spectra
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CylinderLevel:
    n: int
    sign: int          # +1 / -1 spin branch
    energy: float
    j: Optional[float]  # total angular momentum label n + sign/2 (with SOI)

    @property
    def label(self) -> str:
        s = "+" if self.sign > 0 else "-"
        if self.j is None:
            return f"|{self.n},{s}>"
        return f"|j={self.j:+g},{s}>"


def cylinder_analytic_spectrum(rho: float, n_max: int,
                               with_connection: bool = True):
    """Transverse levels of the straight cylinder, labeled.

    With the spin connection the levels are (n^2 + sign*n)/(2 rho^2) with
    total-angular-momentum label j = n + sign/2; without it they are
    n^2/(2 rho^2), doubly spin degenerate.  Sorted by energy.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    levels = []
    for n in range(-n_max, n_max + 1):
        for sign in (+1, -1):
            if with_connection:
                e = (n * n + sign * n) / (2.0 * rho * rho)
                levels.append(CylinderLevel(n=n, sign=sign, energy=e,
                                            j=n + 0.5 * sign))
            else:
                e = n * n / (2.0 * rho * rho)
                levels.append(CylinderLevel(n=n, sign=sign, energy=e, j=None))
    levels.sort(key=lambda L: (L.energy, L.n, -L.sign))
    return levels


def cylinder_thresholds(rho: float, e_max: float,
                        with_connection: bool = True) -> np.ndarray:
    """Every transverse-mode threshold <= e_max (one entry per mode)."""
    n_max = int(math.ceil(rho * math.sqrt(2.0 * e_max) + 2))
    levels = cylinder_analytic_spectrum(rho, n_max, with_connection)
    th = np.array([L.energy for L in levels])
    return np.sort(th[th <= e_max + 1e-12])


# ----------------------------------------------------------------------
# Zero-temperature conductance (ideal adiabatic channel counting)
# ----------------------------------------------------------------------

@dataclass
class ConductanceCurve:
    energies: np.ndarray
    channels: np.ndarray        # N(E), right-continuous step counts
    g_over_e2h: np.ndarray      # = channels * 1 (units e^2/h)
    variant: str                # 'with-connection' | 'without-connection'
    thresholds: np.ndarray


def conductance_curve(rho: float, energies, with_connection: bool = True,
                      thresholds=None) -> ConductanceCurve:
    """Channel-count conductance G(E) = N(E) e^2/h on an energy grid.

    Each transverse mode with threshold below (or at) E contributes one
    unit; thresholds default to the analytic cylinder spectrum but a
    numeric threshold list (e.g. from a ring solve) can be supplied.
    """
    e_grid = np.asarray(energies, dtype=float)
    if np.any(np.diff(e_grid) < 0) or np.any(e_grid < 0):
        raise ValueError("energy grid must be ascending and nonnegative")
    if thresholds is None:
        thresholds = cylinder_thresholds(rho, float(e_grid.max()),
                                         with_connection)
    th = np.sort(np.asarray(thresholds, dtype=float))
    # right-continuous: count thresholds <= E (+ tiny slack for fp ties)
    counts = np.searchsorted(th, e_grid + 1e-12, side="right")
    return ConductanceCurve(
        energies=e_grid, channels=counts,
        g_over_e2h=counts.astype(float),
        variant="with-connection" if with_connection else "without-connection",
        thresholds=th)


# ----------------------------------------------------------------------
# 1D transverse ring operator (the p_z = 0 fiber of the cylinder)
# ----------------------------------------------------------------------

def cylinder_ring_operator(rho: float, n: int, with_connection: bool = True
                           ) -> HermitianOperator:
    """H_eff of the straight cylinder restricted to the p_z = 0 fiber.

    A dim = 2n operator on the periodic theta ring: kinetic
    -(1/(2 rho^2)) d_theta^2 (flux form) and, with the connection, the
    spin-orbit term (i/2){X, d_theta} with the constant X = -sigma_2/(2 rho^2).
    The gauge potential w vanishes on the cylinder and K = 0, so there is
    no link phase and no scalar term.
    """
    if n < 8:
        raise ValueError("ring needs n >= 8")
    h = 2.0 * math.pi / n
    eye = sp.eye(n, format="csr")
    shift = sp.csr_matrix(np.roll(np.eye(n), -1, axis=1))
    lap = (2.0 * eye - shift - shift.T) / h**2
    H = sp.kron(lap * (0.5 / rho**2), sp.eye(2)).tolil()
    if with_connection:
        dc = (shift - shift.T) / (2.0 * h)
        X = np.array([[0.0, 0.5j / rho**2], [-0.5j / rho**2, 0.0]])
        # i * X * Dc with constant X: anticommutator reduces to the product
        H = (H.tocsr() + sp.kron(dc, 1j * X)).tolil()
    Hc = H.tocsr()
    op = HermitianOperator(matrix=Hc, grid=None,
                           terms=("ring-kinetic",) + (("ring-soi",)
                                                      if with_connection else ()),
                           meta={"rho": rho, "n": n})
    defect = (Hc - Hc.getH()).tocoo()
    assert defect.nnz == 0 or np.abs(defect.data).max() < 1e-12
    return op
