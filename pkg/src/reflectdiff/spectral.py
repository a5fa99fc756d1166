"""Neumann generator assembly, eigendecomposition, semigroup and heat kernels.

The generator of the reflected diffusion is discretised on a cell-centred grid
as a flux-form stencil with zero boundary flux, giving a symmetric matrix ``G``
with zero row sums. Eigenpairs of ``-G`` are normalised in the discrete inner
product ``<u, v>_h = cell_volume * sum(u * v)``, so the constant mode equals
``1 / sqrt(volume)``.
"""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DomainError, ConfigurationError, TruncationError
from .geometry import Grid

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4096
CLUSTER_RTOL = 1e-8
FACE_MEANS = ("arithmetic", "harmonic")


@dataclass(frozen=True)
class DiffusivityField:
    """Cell values of a positive diffusivity ``f`` on ``grid``."""

    grid: Grid
    values: np.ndarray
    f_min: float | None = None
    boundary_value: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(self.grid.size)
        if not np.all(np.isfinite(values)):
            raise DomainError("diffusivity has non-finite values")
        if np.any(values <= 0):
            raise DomainError(f"diffusivity must be positive, min is {values.min():.4g}")
        floor = float(values.min()) if self.f_min is None else float(self.f_min)
        if floor <= 0 or values.min() < floor:
            raise DomainError(f"diffusivity minimum {values.min():.4g} is below floor {floor:.4g}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "f_min", floor)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "DiffusivityField":
        return cls(grid, grid.constant(value), boundary_value=float(value))

    @property
    def fingerprint(self) -> str:
        return field_fingerprint(self.grid, self.values)


def field_fingerprint(grid: Grid, values, *extra) -> str:
    h = hashlib.sha256()
    h.update(repr(grid.to_dict()).encode())
    h.update(np.ascontiguousarray(values, dtype="<f8").tobytes())
    for item in extra:
        h.update(repr(item).encode())
    return h.hexdigest()


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse symmetric discretisation of ``u -> div(f grad u)``."""

    matrix: sp.csr_matrix
    grid: Grid
    face_mean: str = "arithmetic"
    source: str = ""

    @property
    def is_tridiagonal(self) -> bool:
        return self.grid.dim == 1

    def apply(self, u) -> np.ndarray:
        return self.matrix @ np.asarray(u, dtype=float)

    def tridiagonal(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of ``-G`` (only for one-dimensional grids)."""
        if not self.is_tridiagonal:
            raise ConfigurationError("tridiagonal form exists only for d = 1")
        return -self.matrix.diagonal(), -self.matrix.diagonal(1)


def _face_values(a, b, face_mean):
    if face_mean == "arithmetic":
        return 0.5 * (a + b)
    if face_mean == "harmonic":
        return 2.0 * a * b / (a + b)
    raise ConfigurationError(f"unknown face mean {face_mean!r}; use one of {FACE_MEANS}")


def flux_matrix(grid: Grid, coeff, face_mean: str = "arithmetic") -> sp.csr_matrix:
    """Matrix of ``u -> div(c grad u)`` with zero boundary flux, for any real ``c``."""
    c = grid.as_array(np.asarray(coeff, dtype=float))
    index = np.arange(grid.size).reshape(grid.shape)
    rows, cols, vals = [], [], []
    for k in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        a, b = index[tuple(lo)].ravel(), index[tuple(hi)].ravel()
        w = _face_values(c[tuple(lo)].ravel(), c[tuple(hi)].ravel(), face_mean)
        w = w / grid.spacing[k] ** 2
        rows += [a, b, a, b]
        cols += [b, a, a, b]
        vals += [w, w, -w, -w]
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    mat.sum_duplicates()
    return mat


def divergence_form(grid: Grid, coeff, u, face_mean: str = "arithmetic") -> np.ndarray:
    """Apply ``div(coeff grad u)`` with the generator stencil."""
    return flux_matrix(grid, coeff, face_mean) @ np.asarray(u, dtype=float)


def assemble_generator(f: DiffusivityField, face_mean: str = "arithmetic") -> GeneratorMatrix:
    """Flux-form Neumann generator for ``f``; rows sum to zero."""
    if np.any(f.values <= 0):
        raise DomainError("diffusivity must be positive")
    return GeneratorMatrix(flux_matrix(f.grid, f.values, face_mean), f.grid, face_mean, f.fingerprint)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Leading eigenpairs of ``-G``, orthonormal in the discrete inner product.

    ``vectors[:, j]`` holds ``e_j`` on the grid; ``eigenvalues`` ascend from 0.
    """

    grid: Grid
    eigenvalues: np.ndarray
    vectors: np.ndarray
    source: str = ""
    residual: float = 0.0
    clusters: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def J(self) -> int:
        return len(self.eigenvalues)

    @property
    def complete(self) -> bool:
        return self.J == self.grid.size

    def mode(self, j: int) -> np.ndarray:
        return self.vectors[:, j]

    def coefficients(self, phi) -> np.ndarray:
        """``<e_j, phi>_h`` for every retained mode."""
        return self.grid.cell_volume * (self.vectors.T @ np.asarray(phi, dtype=float))

    def synthesize(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        return self.vectors[:, : len(c)] @ c

    def values_at(self, points, modes: int | None = None) -> np.ndarray:
        """Eigenfunction values at points by containing-cell lookup, shape ``(n, J)``."""
        cells = self.grid.locate(points)
        v = self.vectors if modes is None else self.vectors[:, :modes]
        return v[cells]

    def orthonormality_residual(self) -> float:
        gram = self.grid.cell_volume * (self.vectors.T @ self.vectors)
        return float(np.max(np.abs(gram - np.eye(self.J))))

    def truncated(self, J: int) -> "SpectralDecomposition":
        if not 1 <= J <= self.J:
            raise ConfigurationError(f"cannot keep {J} of {self.J} modes")
        return SpectralDecomposition(
            self.grid,
            self.eigenvalues[:J],
            self.vectors[:, :J],
            self.source,
            self.residual,
            tuple(c for c in self.clusters if max(c) < J),
        )


def default_mode_count(grid: Grid) -> int:
    return grid.size if grid.dim == 1 else min(400, grid.size)


def _fix_signs(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip columns so the first entry of non-negligible size is positive."""
    scale = np.max(np.abs(vectors), axis=0)
    significant = np.abs(vectors) > tol * scale
    first = np.argmax(significant, axis=0)
    signs = np.sign(vectors[first, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def find_clusters(eigenvalues, rtol: float = CLUSTER_RTOL) -> tuple[tuple[int, ...], ...]:
    """Groups of consecutive indices whose eigenvalues agree to ``rtol``."""
    lam = np.asarray(eigenvalues)
    groups, current = [], [0]
    for j in range(1, len(lam)):
        scale = max(abs(lam[j]), abs(lam[j - 1]), np.finfo(float).tiny)
        if abs(lam[j] - lam[j - 1]) <= rtol * scale:
            current.append(j)
        else:
            groups.append(tuple(current))
            current = [j]
    groups.append(tuple(current))
    return tuple(g for g in groups if len(g) > 1)


def eigendecompose(G: GeneratorMatrix, J: int | None = None, method: str = "auto") -> SpectralDecomposition:
    """Smallest ``J`` eigenpairs of ``-G`` in ascending order.

    Parameters
    ----------
    G : GeneratorMatrix
    J : int, optional
        Number of modes; defaults to every cell for d = 1 and 400 for d >= 2.
    method : {"auto", "dense", "iterative"}
        ``auto`` uses a dense symmetric solve up to ``DENSE_LIMIT`` cells
        (tridiagonal when d = 1) and shift-invert Lanczos beyond.
    """
    grid = G.grid
    n = grid.size
    if J is None:
        J = default_mode_count(grid)
    J = int(J)
    if not 1 <= J <= n:
        raise ConfigurationError(f"mode count J={J} must lie in [1, {n}]")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "iterative"

    if method == "dense":
        if G.is_tridiagonal:
            d, e = G.tridiagonal()
            if J == n:
                lam, V = sla.eigh_tridiagonal(d, e)
            else:
                lam, V = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, J - 1))
        else:
            A = -G.matrix.toarray()
            lam, V = sla.eigh(A, subset_by_index=(0, J - 1))
    elif method == "iterative":
        if J >= n - 1:
            raise ConfigurationError("iterative solver needs J < n - 1; use method='dense'")
        A = (-G.matrix).tocsc()
        # shift below the spectrum so A - sigma is positive definite
        sigma = -1.0
        try:
            lam, V = spla.eigsh(A, k=J, sigma=sigma, which="LM", tol=1e-12, maxiter=20 * n)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos failed to converge: {exc}") from exc
        order = np.argsort(lam)
        lam, V = lam[order], V[:, order]
        # re-orthonormalise within near-degenerate clusters
        V, _ = np.linalg.qr(V)
        lam = np.einsum("ij,ij->j", V, A @ V)
    else:
        raise ConfigurationError(f"unknown eigensolver method {method!r}")

    V = _fix_signs(V)
    residual = float(np.max(np.linalg.norm((-G.matrix) @ V - V * lam, axis=0)) / max(1.0, abs(lam[-1])))
    if method == "iterative" and residual > 1e-8:
        raise ConvergenceError(f"eigenpair residual {residual:.3e} exceeds 1e-8")
    vectors = V / np.sqrt(grid.cell_volume)
    return SpectralDecomposition(grid, lam, vectors, G.source, residual, find_clusters(lam))


def decompose(f: DiffusivityField, J: int | None = None, face_mean: str = "arithmetic",
              method: str = "auto") -> SpectralDecomposition:
    """Convenience wrapper: assemble the generator for ``f`` and eigendecompose it."""
    return eigendecompose(assemble_generator(f, face_mean), J, method)


def laplacian_basis(grid: Grid, J: int | None = None, method: str = "auto") -> SpectralDecomposition:
    """Reference decomposition for ``f = 1``."""
    return decompose(DiffusivityField.constant(grid, 1.0), J, method=method)


def transition_apply(S: SpectralDecomposition, t: float, phi) -> np.ndarray:
    """``P_t phi`` in the truncated eigenbasis, constant mode included."""
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    c = S.coefficients(phi)
    return S.vectors @ (np.exp(-t * S.eigenvalues) * c)


def transition_matrix(S: SpectralDecomposition, t: float) -> np.ndarray:
    """Grid matrix ``T`` with ``T @ phi == transition_apply(S, t, phi)``."""
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    return (S.vectors * np.exp(-t * S.eigenvalues)) @ S.vectors.T * S.grid.cell_volume


@dataclass(frozen=True)
class HeatKernel:
    """Cell-pair values ``p_t(x_i, y_j)`` of the truncated fundamental solution."""

    t: float
    matrix: np.ndarray
    tail_bound: float
    lower_bound: float
    weyl_exponent: float

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    def mass_residual(self, cell_volume: float) -> float:
        return float(np.max(np.abs(cell_volume * self.matrix.sum(axis=1) - 1.0)))


def weyl_exponent(eigenvalues, start: int = 5, stop: int = 40) -> float:
    """Least-squares slope of ``log lambda_j`` against ``log j`` over ``[start, stop]``."""
    lam = np.asarray(eigenvalues)
    stop = min(stop, len(lam) - 1)
    if stop - start < 2:
        return float("nan")
    j = np.arange(start, stop + 1)
    return float(np.polyfit(np.log(j), np.log(lam[j]), 1)[0])


def spectral_tail_bound(S: SpectralDecomposition, t: float) -> float:
    """Bound on the sup-norm of the discarded part of the kernel series.

    Zero when the basis is complete. Otherwise the discarded eigenvalues are
    extrapolated with Weyl growth ``j^(2/d)`` from the last retained one and
    eigenfunctions are bounded by ``2^d / volume`` in square.
    """
    if S.complete:
        return 0.0
    d = S.grid.dim
    Jm = S.J - 1
    lam_last = max(S.eigenvalues[-1], np.finfo(float).tiny)
    k = np.arange(S.J, S.grid.size)
    lam_tail = lam_last * (k / max(Jm, 1)) ** (2.0 / d)
    return float(2.0**d / S.grid.domain.volume * np.sum(np.exp(-t * lam_tail)))


def heat_kernel(S: SpectralDecomposition, t: float, strict: bool = False,
                tail_tol: float = 1e-12) -> HeatKernel:
    """Truncated kernel ``sum_k exp(-t lambda_k) e_k(x) e_k(y)`` over cell pairs."""
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    if not S.complete and np.exp(-t * S.eigenvalues[-1]) >= tail_tol:
        msg = (f"spectral tail exp(-t lambda_(J-1)) = {np.exp(-t * S.eigenvalues[-1]):.2e} "
               f"is above {tail_tol:.0e} with J={S.J}")
        if strict:
            raise TruncationError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    V = S.vectors
    p = (V * np.exp(-t * S.eigenvalues)) @ V.T
    p = 0.5 * (p + p.T)
    return HeatKernel(t, p, spectral_tail_bound(S, t), float(p.min()), weyl_exponent(S.eigenvalues))


def sobolev_norm(phi, k: float, R: SpectralDecomposition, return_mean: bool = False):
    """Spectral ``H^k`` norm over the non-constant modes of the reference basis.

    With ``return_mean`` the pair ``(norm, <phi, e_0>_h)`` is returned.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (R.grid.size,):
        raise ConfigurationError(f"field shape {phi.shape} does not match grid size {R.grid.size}")
    c = R.coefficients(phi)
    norm = float(np.sqrt(np.sum(R.eigenvalues[1:] ** k * c[1:] ** 2)))
    if return_mean:
        return norm, float(c[0])
    return norm


def sobolev_weights(R: SpectralDecomposition, alpha: float, J: int | None = None) -> np.ndarray:
    lam = R.eigenvalues if J is None else R.eigenvalues[:J]
    return (1.0 + np.maximum(lam, 0.0)) ** (0.5 * alpha)


def operator_matrix_norm(M, alpha: float, R: SpectralDecomposition | None = None,
                         tol: float = 1e-8, max_iter: int = 20000, seed: int = 0) -> float:
    """Largest singular value of ``W^alpha M W^-alpha`` with ``W = diag(sqrt(1 + lambda_j))``.

    Power iteration on ``B^T B``. Converged once the eigen-residual
    ``|B^T B x - q x|`` drops below ``0.01 * sqrt(tol) * q``, which bounds the
    relative error of the Rayleigh quotient ``q`` by ``1e-4 * tol`` over the
    relative gap; near-degenerate leading values are accepted once ``q``
    stops moving at the ``1e-3 * tol`` level.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ConfigurationError("operator matrix must be square")
    if alpha != 0:
        if R is None or R.J < n:
            raise ConfigurationError("weighted norm needs a reference basis with at least as many modes")
        w = sobolev_weights(R, alpha, n)
        B = (w[:, None] * M) / w[None, :]
    else:
        B = M
    if not np.any(B):
        return 0.0
    BtB = B.T @ B
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1.0
    x /= np.linalg.norm(x)
    rq_old = 0.0
    for _ in range(max_iter):
        y = BtB @ x
        rq = float(x @ y)
        if rq <= 0.0:
            return 0.0
        resid = np.linalg.norm(y - rq * x)
        if resid <= 0.01 * np.sqrt(tol) * rq or abs(rq - rq_old) <= 1e-3 * tol * rq:
            return float(np.sqrt(rq))
        x = y / np.linalg.norm(y)
        rq_old = rq
    raise ConvergenceError(
        f"power iteration stagnated after {max_iter} steps; last Rayleigh quotient {rq_old:.10g}"
    )


def basis_matrix(S: SpectralDecomposition, R: SpectralDecomposition, t: float, J: int | None = None) -> np.ndarray:
    """Matrix of ``P_t`` (from ``S``) in the first ``J`` modes of ``R``.

    Entry ``[j, j']`` is ``<P_t e_j, e_j'>_h`` for reference modes ``e_j``.
    """
    J = R.J if J is None else J
    E = R.vectors[:, :J]
    cross = S.grid.cell_volume * (E.T @ S.vectors)
    return (cross * np.exp(-t * S.eigenvalues)) @ cross.T
