"""Numerical checks of the spectral-geometry hypotheses.

The central certificate is the gradient condition

    c0 = min_{x in O_0} ( 0.5 * Lap E(x) + mu * |grad E(x)|^2 ) > 0

for a combination ``E`` of first non-trivial eigenfunctions. The Laplacian is
the ``f = 1`` generator stencil and the gradient uses central differences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .geometry import Domain, Grid, SubdomainSpec, build_cutoff
from .simulate import make_rng
from .spectral import (DiffusivityField, SpectralDecomposition, decompose, flux_matrix,
                       laplacian_basis)

CLUSTER_TOL = 1e-6
CERTIFY_TOL = 1e-8
MU_GRID = tuple(2.0**k for k in range(-2, 9))
SCAN_RESOLUTION = 32
MAX_SCAN_DIM = 4


@dataclass
class Eigenblock:
    eigenvalue: float
    members: tuple[int, ...]
    iota: np.ndarray
    field: np.ndarray
    cluster_eigenvalues: tuple[float, ...] = ()


@dataclass
class ConditionReport:
    mu: float
    c0: float
    certified: bool
    worst_point: tuple[float, ...]
    iota: tuple[float, ...] = ()
    cluster: tuple[float, ...] = ()
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "c0": self.c0, "certified": self.certified,
                "worst_point": list(self.worst_point), "iota": list(self.iota),
                "cluster": list(self.cluster), **self.extra}


def _box(O0, domain: Domain) -> np.ndarray:
    bounds = O0.support if isinstance(O0, SubdomainSpec) else O0
    box = np.array([[float(a), float(b)] for a, b in bounds])
    if box.shape != (domain.dim, 2):
        raise ConfigurationError("O_0 dimension does not match the domain")
    if np.any(box[:, 0] >= box[:, 1]) or np.any(box[:, 0] < domain.low) or np.any(box[:, 1] > domain.high):
        raise ConfigurationError(f"O_0 {box.tolist()} is not a box inside the domain")
    return box


def region_mask(grid: Grid, O0) -> np.ndarray:
    box = _box(O0, grid.domain)
    x = grid.centers
    eps = 1e-12 * grid.domain.sides
    return np.all((x >= box[:, 0] - eps) & (x <= box[:, 1] + eps), axis=1)


def cluster_members(S: SpectralDecomposition, start: int = 1, rtol: float = CLUSTER_TOL) -> tuple[int, ...]:
    lam = S.eigenvalues
    members = [start]
    j = start + 1
    while j < S.J and abs(lam[j] - lam[start]) <= rtol * abs(lam[start]):
        members.append(j)
        j += 1
    return tuple(members)


def field_derivatives(grid: Grid, fields) -> tuple[np.ndarray, np.ndarray]:
    """Half Laplacian (f = 1 stencil) and gradient of each column of ``fields``.

    Returns arrays of shape ``(size, m)`` and ``(size, m, dim)``.
    """
    F = np.asarray(fields, dtype=float).reshape(grid.size, -1)
    lap = flux_matrix(grid, np.ones(grid.size)) @ F
    grads = np.empty(F.shape + (grid.dim,))
    for col in range(F.shape[1]):
        arr = grid.as_array(F[:, col])
        parts = [np.gradient(arr, grid.spacing[0])] if grid.dim == 1 else np.gradient(arr, *grid.spacing)
        for k, g in enumerate(parts):
            grads[:, col, k] = g.ravel()
    return 0.5 * lap, grads


def _scan_directions(m: int, resolution: int = SCAN_RESOLUTION) -> np.ndarray:
    """Unit vectors in R^m on a hyperspherical angle grid, both signs included."""
    if m == 1:
        return np.array([[1.0], [-1.0]])
    # the first m-2 angles span [0, pi), the last spans [0, 2 pi) and covers the sign
    polar = np.arange(resolution) * np.pi / resolution
    azim = np.arange(2 * resolution) * np.pi / resolution
    dirs = []
    for angles in itertools.product(*([polar] * (m - 2) + [azim])):
        v = np.ones(m)
        for i, a in enumerate(angles):
            v[i] *= np.cos(a)
            v[i + 1:] *= np.sin(a)
        dirs.append(v)
    dirs = np.array(dirs)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _c0_table(half_lap, grads, mask, iotas, mus):
    """c0 for every (iota, mu); returns values and argmin cells."""
    L = half_lap[mask] @ iotas.T                            # cells x candidates
    Gx = np.einsum("cmk,nm->cnk", grads[mask], iotas)        # cells x candidates x dim
    g2 = np.sum(Gx**2, axis=2)
    vals = L[None, :, :] + np.asarray(mus)[:, None, None] * g2[None, :, :]
    return vals.min(axis=1), vals.argmin(axis=1)


def check_sunnyside(E, O0, mu="optimize", grid: Grid | None = None) -> ConditionReport:
    """Evaluate ``c0`` for a fixed combination ``E`` on ``O0``.

    ``E`` is an :class:`Eigenblock` or a grid field (then ``grid`` is required).
    ``mu="optimize"`` scans ``mu = 2^k, k = -2..8`` and keeps the best value.
    """
    if isinstance(E, Eigenblock):
        values, iota, cluster = E.field, tuple(E.iota), E.cluster_eigenvalues
        if grid is None:
            raise ConfigurationError("check_sunnyside needs the grid of the eigenblock")
    else:
        if grid is None:
            raise ConfigurationError("check_sunnyside needs a grid for a raw field")
        values, iota, cluster = np.asarray(E, dtype=float), (1.0,), ()
    mask = region_mask(grid, O0)
    if not mask.any():
        raise ConfigurationError("O_0 contains no cell centres")
    mus = MU_GRID if mu == "optimize" else (float(mu),)
    half_lap, grads = field_derivatives(grid, values)
    table, arg = _c0_table(half_lap, grads, mask, np.ones((1, 1)), mus)
    best = int(np.argmax(table[:, 0]))
    c0 = float(table[best, 0])
    worst = grid.centers[np.flatnonzero(mask)[arg[best, 0]]]
    return ConditionReport(float(mus[best]), c0, c0 > CERTIFY_TOL, tuple(worst), iota, cluster,
                           {"mu_scan": {str(m): float(v) for m, v in zip(mus, table[:, 0])}})


def first_eigenblock(S: SpectralDecomposition, iota="scan", O0=None, mu="optimize",
                     rtol: float = CLUSTER_TOL) -> Eigenblock:
    """First non-constant eigenvalue cluster and a combination of its modes.

    With ``iota="scan"`` the combination maximising ``c0`` on ``O0`` is chosen
    from a grid of 32 directions per free angle (both signs); this needs
    ``O0``. Otherwise ``iota`` lists explicit weights, normalised to unit length.
    """
    if S.J < 3:
        raise ConfigurationError("need at least two non-constant modes")
    members = cluster_members(S, 1, rtol)
    m = len(members)
    modes = S.vectors[:, list(members)]
    cluster = tuple(float(S.eigenvalues[j]) for j in members)
    if isinstance(iota, str):
        if iota != "scan":
            raise ConfigurationError(f"unknown iota option {iota!r}")
        if m > MAX_SCAN_DIM:
            raise ConfigurationError(f"cluster of dimension {m} is too large to scan; give iota explicitly")
        if O0 is None:
            raise ConfigurationError("an iota scan needs the region O_0")
        dirs = _scan_directions(m)
        mask = region_mask(S.grid, O0)
        half_lap, grads = field_derivatives(S.grid, modes)
        mus = MU_GRID if mu == "optimize" else (float(mu),)
        best_val, weights = -np.inf, dirs[0]
        for lo in range(0, len(dirs), 256):
            table, _ = _c0_table(half_lap, grads, mask, dirs[lo: lo + 256], mus)
            idx = np.unravel_index(np.argmax(table), table.shape)
            if table[idx] > best_val:
                best_val, weights = table[idx], dirs[lo + idx[1]]
    else:
        weights = np.asarray(iota, dtype=float).ravel()
        if weights.size != m:
            raise ConfigurationError(f"iota has {weights.size} entries for a cluster of size {m}")
        norm = np.linalg.norm(weights)
        if norm == 0:
            raise ConfigurationError("iota must be non-zero")
        weights = weights / norm
    return Eigenblock(float(S.eigenvalues[members[0]]), members, weights, modes @ weights, cluster)


def certify(S: SpectralDecomposition, O0, mu="optimize") -> tuple[Eigenblock, ConditionReport]:
    """Scan the first eigenblock and check the gradient condition for the best combination."""
    block = first_eigenblock(S, "scan", O0, mu)
    report = check_sunnyside(block, O0, mu, S.grid)
    return block, report


def _spectral_ambiguity(lam, lo=CLUSTER_TOL, hi=1e-3, upto=6) -> bool:
    """True when some leading gap is neither degenerate nor clearly separated."""
    lam = np.asarray(lam)[1: upto + 1]
    rel = np.diff(lam) / lam[1:]
    return bool(np.any((rel > lo) & (rel < hi)))


def perturbation_stability(f: DiffusivityField, O0, kappa: float, J: int = 12,
                           mu="optimize") -> ConditionReport:
    """Certify the gradient condition for ``f`` near 1 and report the eigenvalue shift."""
    grid = f.grid
    dev = float(np.max(np.abs(f.values - 1.0)))
    S = decompose(f, J)
    S1 = laplacian_basis(grid, J)
    block, report = certify(S, O0, mu)
    report.extra.update({
        "deviation": dev,
        "kappa": float(kappa),
        "outside_hypothesis": dev > kappa,
        "eigenvalue": block.eigenvalue,
        "eigenvalue_shift": float(block.eigenvalue - S1.eigenvalues[1]),
        "inconclusive": _spectral_ambiguity(S.eigenvalues),
    })
    return report


@dataclass
class TransportReport:
    c: float
    ratios: np.ndarray
    skipped: int


def transport_operator(grid: Grid, h, u0) -> np.ndarray:
    """``div(h grad u0)`` with the generator stencil; linear in ``h``."""
    return flux_matrix(grid, h) @ np.asarray(u0, dtype=float)


def transport_ratio(grid: Grid, h, u0) -> float:
    nh = grid.norm(h)
    if nh == 0.0:
        return float("nan")
    return grid.norm(transport_operator(grid, h, u0)) / nh


def random_test_functions(grid: Grid, cutoff: np.ndarray, trials: int, seed: int,
                          modes: int = 12) -> np.ndarray:
    """Cutoff times random combinations of low Laplacian modes, one per row."""
    R = laplacian_basis(grid, min(grid.size, modes + 1))
    rng = make_rng(seed)
    coeffs = rng.standard_normal((trials, R.J))
    return (coeffs @ R.vectors.T) * cutoff[None, :]


def transport_lower_bound(u0, grid: Grid, O0: SubdomainSpec, trials: int = 100, seed: int = 0,
                          modes: int = 12, check: bool = True, test_functions=None) -> TransportReport:
    """Minimum of ``|div(h grad u0)|_h / |h|_h`` over random compactly supported ``h``."""
    values = u0.field if isinstance(u0, Eigenblock) else np.asarray(u0, dtype=float)
    if check:
        report = check_sunnyside(values, O0, "optimize", grid)
        if not report.certified:
            raise ConfigurationError("u0 does not satisfy the gradient condition on O_0")
    H = (random_test_functions(grid, build_cutoff(grid, O0), trials, seed, modes)
         if test_functions is None else np.atleast_2d(test_functions))
    ratios, skipped = [], 0
    for h in H:
        r = transport_ratio(grid, h, values)
        if np.isnan(r):
            skipped += 1
            continue
        ratios.append(r)
    ratios = np.array(ratios)
    return TransportReport(float(ratios.min()) if ratios.size else float("nan"), ratios, skipped)


@dataclass
class CylinderReference:
    w: float
    base: Domain
    eigenvalue: float
    gradient_floor: float
    eta: float

    @property
    def domain(self) -> Domain:
        return Domain(tuple(self.base.bounds) + ((0.0, self.w),))

    def eigenfunction(self, x) -> np.ndarray:
        z = np.atleast_2d(x)[:, -1]
        return np.sqrt(2.0 / self.w) * np.cos(np.pi * z / self.w) / np.sqrt(self.base.volume)

    def gradient_norm(self, x) -> np.ndarray:
        z = np.atleast_2d(x)[:, -1]
        return (np.sqrt(2.0 / self.w) * (np.pi / self.w) * np.abs(np.sin(np.pi * z / self.w))
                / np.sqrt(self.base.volume))


def cylinder_reference(w: float, base: Domain, eta: float = 0.1) -> CylinderReference:
    """Analytic first Neumann eigenpair of the Laplacian on ``base x (0, w)``.

    The base starts at the origin along the height axis. ``gradient_floor`` is
    ``pi^2 eta / (2 w^2 sqrt(vol(base)))``, the lower bound for ``|grad e_1|``
    at distance at least ``eta`` from the boundary.
    """
    if not w > 0:
        raise ConfigurationError("cylinder height must be positive")
    if base.diameter > w:
        raise ConfigurationError(f"base diameter {base.diameter:.4g} exceeds the height {w}")
    floor = np.pi**2 * eta / (2 * w**2 * np.sqrt(base.volume))
    return CylinderReference(float(w), base, float(np.pi**2 / w**2), float(floor), float(eta))
