"""Exact discrete-time sampling of the reflected diffusion and Euler paths.

Observations are drawn from the grid-level transition kernel: the next cell is
chosen with probabilities ``p_D(x, y_j) * cell_volume`` and the position is
jittered uniformly inside that cell. Euler--Maruyama paths with fold
reflection are provided for visual checks and distributional cross-checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import ConfigurationError, DataError, DomainError, KernelQualityError
from .geometry import Grid
from .io import read_csv, write_csv, write_json
from .spectral import DiffusivityField, SpectralDecomposition, heat_kernel

CLIP_TOL = 1e-6


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream; replicates use distinct seeds or ``spawn``."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class ObservationRecord:
    D: float
    positions: np.ndarray
    seed: int
    mode: str = "exact_spectral"
    f_fingerprint: str = ""
    clip_mass: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.shape[0] < 2:
            raise DataError("an observation record needs at least two positions")

    @property
    def N(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.D * np.arange(self.N + 1)

    def sidecar(self) -> dict:
        return {"D": self.D, "N": self.N, "seed": self.seed, "mode": self.mode,
                "f_fingerprint": self.f_fingerprint, "clip_mass": self.clip_mass, **self.extra}


@dataclass
class PathRecord:
    dt: float
    positions: np.ndarray
    reflections: int
    record_every: int = 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * self.record_every * np.arange(len(self.positions))


@numba.njit(cache=True)
def _walk_cells(cdf, start, u):
    n = u.shape[0]
    cells = np.empty(n + 1, dtype=np.int64)
    cells[0] = start
    m = cdf.shape[1]
    c = start
    for i in range(n):
        c = np.searchsorted(cdf[c], u[i], side="right")
        if c >= m:
            c = m - 1
        cells[i + 1] = c
    return cells


def transition_probabilities(S: SpectralDecomposition, D: float) -> tuple[np.ndarray, float]:
    """Row-stochastic cell transition matrix and the relative clipped mass."""
    K = heat_kernel(S, D)
    P = K.matrix * S.grid.cell_volume
    neg = -P[P < 0].sum() + 0.0
    clip = float(neg / P.shape[0])
    if clip > CLIP_TOL:
        raise KernelQualityError(
            f"negative kernel mass {clip:.3e} exceeds {CLIP_TOL:.0e}; increase modes or grid"
        )
    P = np.clip(P, 0.0, None)
    P /= P.sum(axis=1, keepdims=True)
    return P, clip


def cell_corners(grid: Grid, cells) -> np.ndarray:
    idx = np.stack(np.unravel_index(np.asarray(cells), grid.shape), axis=-1)
    return grid.domain.low + idx * grid.spacing


def sample_observations(S: SpectralDecomposition, D: float, N: int, seed: int) -> ObservationRecord:
    """Draw ``X_0 ~ Unif`` and ``N`` exact transitions of spacing ``D``."""
    if not D > 0:
        raise DomainError(f"D must be positive, got {D}")
    if int(N) < 1:
        raise ConfigurationError(f"N must be at least 1, got {N}")
    N = int(N)
    grid = S.grid
    P, clip = transition_probabilities(S, D)
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    rng = make_rng(seed)
    x0 = grid.domain.low + rng.random(grid.dim) * grid.domain.sides
    start = int(grid.locate(x0)[0])
    cells = _walk_cells(cdf, start, rng.random(N))
    jitter = rng.random((N, grid.dim))
    pos = np.empty((N + 1, grid.dim))
    pos[0] = x0
    pos[1:] = cell_corners(grid, cells[1:]) + jitter * grid.spacing
    return ObservationRecord(float(D), pos, int(seed), "exact_spectral", S.source, clip)


@numba.njit(cache=True)
def _fold(y, lo, hi):
    L = hi - lo
    z = (y - lo) % (2.0 * L)
    if z > L:
        z = 2.0 * L - z
    return lo + z


@numba.njit(cache=True)
def _euler_chunk(x, fvals, grad, low, spacing, shape, dt, noise, diam, out, record_every, offset):
    P, d = x.shape
    nsteps = noise.shape[0]
    folds = 0
    for s in range(nsteps):
        for p in range(P):
            flat = 0
            for k in range(d):
                i = int((x[p, k] - low[k]) / spacing[k])
                if i < 0:
                    i = 0
                elif i >= shape[k]:
                    i = shape[k] - 1
                flat = flat * shape[k] + i
            sd = np.sqrt(2.0 * fvals[flat] * dt)
            step2 = 0.0
            for k in range(d):
                dx = grad[flat, k] * dt + sd * noise[s, p, k]
                step2 += dx * dx
                y = x[p, k] + dx
                hi = low[k] + spacing[k] * shape[k]
                if y < low[k] or y > hi:
                    y = _fold(y, low[k], hi)
                    folds += 1
                x[p, k] = y
            if np.sqrt(step2) > diam:
                return -1
        t = offset + s + 1
        if out.shape[0] > 0 and t % record_every == 0:
            out[t // record_every] = x[0]
    return folds


def fold_reflect(y, low: float, high: float):
    """Fold coordinates back into ``[low, high]`` by repeated mirror reflection."""
    y = np.asarray(y, dtype=float)
    L = high - low
    z = np.mod(y - low, 2.0 * L)
    return low + np.where(z > L, 2.0 * L - z, z)


def _gradient(f: DiffusivityField) -> np.ndarray:
    grid = f.grid
    arr = grid.as_array(f.values)
    if grid.dim == 1:
        parts = [np.gradient(arr, grid.spacing[0])]
    else:
        parts = np.gradient(arr, *grid.spacing)
    return np.stack([g.ravel() for g in parts], axis=1)


def _run_euler(f, x, dt, nsteps, rng, record_every=0, chunk=200_000):
    grid = f.grid
    grad = _gradient(f)
    typical = np.sqrt(2.0 * f.values.max() * dt) + np.abs(grad).max() * dt
    if typical > grid.domain.diameter:
        raise ConfigurationError(
            f"Euler step scale {typical:.3g} exceeds the domain diameter; reduce dt={dt}"
        )
    low, spacing = grid.domain.low, np.asarray(grid.spacing, dtype=float)
    shape = np.array(grid.shape, dtype=np.int64)
    nrec = nsteps // record_every + 1 if record_every else 0
    out = np.empty((nrec, grid.dim))
    if nrec:
        out[0] = x[0]
    folds = 0
    done = 0
    while done < nsteps:
        m = min(chunk, nsteps - done)
        noise = rng.standard_normal((m, x.shape[0], grid.dim))
        r = _euler_chunk(x, np.asarray(f.values), grad, low, spacing, shape, float(dt), noise,
                         grid.domain.diameter, out, max(record_every, 1), done)
        if r < 0:
            raise ConfigurationError(f"Euler step exceeded the domain diameter; reduce dt={dt}")
        folds += r
        done += m
    return x, out, folds


def sample_path_euler(f: DiffusivityField, x0, dt: float, T: float, seed: int,
                      record_every: int = 1) -> PathRecord:
    """Euler--Maruyama path of ``dX = grad f dt + sqrt(2 f) dW`` with fold reflection."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    x0 = np.asarray(x0, dtype=float).reshape(1, f.grid.dim)
    if not f.grid.domain.contains(x0)[0]:
        raise DomainError(f"start point {x0.ravel()} is outside the domain")
    nsteps = int(round(T / dt))
    _, out, folds = _run_euler(f, x0.copy(), dt, nsteps, make_rng(seed), record_every=int(record_every))
    return PathRecord(float(dt), out, int(folds), int(record_every))


def euler_transition(f: DiffusivityField, starts, dt: float, T: float, seed: int) -> np.ndarray:
    """Endpoints after time ``T`` of independent Euler paths from each start."""
    x = np.array(starts, dtype=float).reshape(-1, f.grid.dim)
    nsteps = int(round(T / dt))
    x, _, _ = _run_euler(f, x, dt, nsteps, make_rng(seed), chunk=max(1, 2_000_000 // len(x)))
    return x


def write_observations(record: ObservationRecord, out_dir, stem: str = "observations") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    header = ["index", "t"] + [f"x_{k + 1}" for k in range(record.dim)]
    rows = ([i, record.D * i, *record.positions[i]] for i in range(record.N + 1))
    csv_path = write_csv(out_dir / f"{stem}.csv", header, rows)
    json_path = write_json(out_dir / f"{stem}.json", record.sidecar())
    return csv_path, json_path


def read_observations(csv_path, json_path=None) -> ObservationRecord:
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    meta = json.loads(json_path.read_text())
    header, data = read_csv(csv_path)
    if header[:2] != ["index", "t"]:
        raise DataError(f"{csv_path} is not an observation CSV")
    if len(data) != meta["N"] + 1:
        raise DataError(f"{csv_path} has {len(data)} rows, sidecar says N={meta['N']}")
    extra = {k: v for k, v in meta.items()
             if k not in {"D", "N", "seed", "mode", "f_fingerprint", "clip_mass"}}
    return ObservationRecord(meta["D"], data[:, 2:], meta["seed"], meta["mode"],
                             meta.get("f_fingerprint", ""), meta.get("clip_mass", 0.0), extra)


def write_path(path: PathRecord, out_dir, stem: str = "path") -> Path:
    header = ["step", "t"] + [f"x_{k + 1}" for k in range(path.positions.shape[1])]
    rows = ([i * path.record_every, t, *x] for i, (t, x) in enumerate(zip(path.times, path.positions)))
    write_json(Path(out_dir) / f"{stem}.json", {"dt": path.dt, "reflections": path.reflections,
                                                 "record_every": path.record_every})
    return write_csv(Path(out_dir) / f"{stem}.csv", header, rows)
