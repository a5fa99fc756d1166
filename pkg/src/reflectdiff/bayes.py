"""Gaussian series prior, exponential link, spectral likelihood and pCN sampling.

The unknown diffusivity is ``f = (1 + exp(theta)) / 4`` with

    theta(x) = scale * zeta(x) * (g_0 + sum_{1<=k<=K} lambda_k^(-s/2) g_k e_k(x)),

``g_k`` iid standard normal, ``e_k`` the Neumann Laplacian modes and
``scale = N^(-d / (4s + 4 + 2d))``. The chain lives on the coefficients ``g``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DomainError, KernelQualityError, ReflectDiffError, TuningError
from .geometry import Grid
from .simulate import ObservationRecord
from .spectral import DiffusivityField, SpectralDecomposition, decompose

logger = logging.getLogger(__name__)

F_FLOOR = 0.25


def link(theta, grid: Grid) -> DiffusivityField:
    """``f = 1/4 + exp(theta)/4``; equals 1/2 wherever ``theta = 0``."""
    theta = np.asarray(theta, dtype=float)
    return DiffusivityField(grid, 0.25 + 0.25 * np.exp(theta), f_min=F_FLOOR, boundary_value=0.5)


def inverse_link(f) -> np.ndarray:
    values = np.asarray(getattr(f, "values", f), dtype=float)
    if np.any(values <= F_FLOOR):
        raise DomainError(f"inverse link needs f > 1/4, min is {values.min():.6g}")
    return np.log(4.0 * values - 1.0)


def default_K(N: int, s: float, d: int, const: float = 1.0) -> int:
    return max(1, int(round(const * N ** (d / (2 * s + 2 + d)))))


@dataclass(frozen=True)
class PriorSpec:
    """Truncated Gaussian series prior on ``theta``."""

    s: float
    K: int
    N_data: int
    cutoff: np.ndarray
    R: SpectralDecomposition

    def __post_init__(self):
        if self.s < 0:
            raise ConfigurationError("prior smoothness s must be non-negative")
        if not 1 <= self.K < self.R.J:
            raise ConfigurationError(f"K={self.K} needs K+1 <= {self.R.J} reference modes")
        if self.N_data < 1:
            raise ConfigurationError("N_data must be positive")

    @property
    def dim(self) -> int:
        return self.R.grid.dim

    @property
    def scale(self) -> float:
        return float(self.N_data ** (-self.dim / (4 * self.s + 4 + 2 * self.dim)))

    @property
    def n_coeffs(self) -> int:
        return self.K + 1

    def basis(self) -> np.ndarray:
        """Columns mapping coefficients ``g`` to the grid field ``theta``."""
        return self._basis

    @cached_property
    def _basis(self) -> np.ndarray:
        lam = self.R.eigenvalues[1: self.K + 1]
        cols = np.empty((self.R.grid.size, self.K + 1))
        cols[:, 0] = 1.0
        cols[:, 1:] = self.R.vectors[:, 1: self.K + 1] * lam ** (-self.s / 2)
        return self.scale * self.cutoff[:, None] * cols

    def pointwise_variance(self) -> np.ndarray:
        B = self.basis()
        return np.sum(B**2, axis=1)


@dataclass
class ThetaCoefficients:
    g: np.ndarray

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)

    def field(self, spec: PriorSpec) -> np.ndarray:
        return spec.basis() @ self.g


def sample_prior(spec: PriorSpec, seed: int) -> ThetaCoefficients:
    from .simulate import make_rng
    return ThetaCoefficients(make_rng(seed).standard_normal(spec.n_coeffs))


@dataclass
class SolverConfig:
    modes: int | None = None
    face_mean: str = "arithmetic"


class LogLikelihood:
    """``theta -> sum_i log p_D(X_(i-1)D, X_iD)`` with containing-cell lookup.

    Pairs of cells are counted once, so the cost per evaluation is one
    eigendecomposition plus a kernel evaluation on the distinct pairs.
    """

    def __init__(self, obs: ObservationRecord, grid: Grid, solver: SolverConfig | None = None):
        self.obs = obs
        self.grid = grid
        self.solver = solver or SolverConfig()
        if not np.all(grid.domain.contains(obs.positions)):
            from .errors import DataError
            raise DataError("observation record has points outside the domain")
        cells = grid.locate(obs.positions)
        pairs = cells[:-1] * grid.size + cells[1:]
        uniq, counts = np.unique(pairs, return_counts=True)
        self.src, self.dst = np.divmod(uniq, grid.size)
        self.counts = counts.astype(float)
        self.D = obs.D
        self.dense = grid.size <= 1024

    def decomposition(self, f: DiffusivityField) -> SpectralDecomposition:
        return decompose(f, self.solver.modes, self.solver.face_mean)

    def from_decomposition(self, S: SpectralDecomposition) -> float:
        decay = np.exp(-self.D * S.eigenvalues)
        V = S.vectors
        if self.dense:
            p = ((V * decay) @ V.T)[self.src, self.dst]
        else:
            p = np.einsum("ij,ij->i", V[self.src] * decay, V[self.dst])
        if np.any(p <= 0):
            raise KernelQualityError(
                f"kernel is non-positive at {int(np.sum(p <= 0))} data pairs; raise modes or grid"
            )
        return float(np.dot(self.counts, np.log(p)))

    def field(self, f: DiffusivityField) -> float:
        return self.from_decomposition(self.decomposition(f))

    def __call__(self, theta) -> float:
        return self.field(link(theta, self.grid))


def log_likelihood(theta: ThetaCoefficients, obs: ObservationRecord, spec: PriorSpec,
                   solver: SolverConfig | None = None) -> float:
    return LogLikelihood(obs, spec.R.grid, solver)(theta.field(spec))


@dataclass
class ChainState:
    g: np.ndarray
    loglik: float
    beta: float
    iteration: int = 0
    accepted: int = 0
    window_accepted: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["g"] = [float(v) for v in self.g]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChainState":
        d = dict(d)
        d["g"] = np.array(d["g"], dtype=float)
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "ChainState":
        return cls.from_dict(json.loads(text))


def step_rng(seed: int, iteration: int) -> np.random.Generator:
    """Independent Philox block per iteration, so restarts reproduce draws."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, int(iteration), 0, 0]))


def pcn_step(state: ChainState, loglik, spec: PriorSpec, seed: int) -> ChainState:
    """One pCN move ``g' = sqrt(1 - beta^2) g + beta xi`` with likelihood-ratio acceptance.

    ``loglik`` maps a theta grid field to a log-likelihood, or is ``None`` for
    the prior-only chain.
    """
    beta = state.beta
    if not 0 < beta <= 1:
        raise ConfigurationError(f"pCN step size must lie in (0, 1], got {beta}")
    rng = step_rng(seed, state.iteration)
    xi = rng.standard_normal(len(state.g))
    log_u = np.log(rng.random())
    proposal = np.sqrt(1.0 - beta * beta) * state.g + beta * xi
    if loglik is None:
        new_ll = 0.0
    else:
        try:
            new_ll = loglik(spec.basis() @ proposal)
        except ReflectDiffError as exc:
            logger.warning("likelihood failed at iteration %d: %s", state.iteration, exc)
            new_ll = -np.inf
    accept = log_u < new_ll - state.loglik
    if accept:
        return ChainState(proposal, new_ll, beta, state.iteration + 1, state.accepted + 1,
                          state.window_accepted + 1)
    return ChainState(state.g, state.loglik, beta, state.iteration + 1, state.accepted,
                      state.window_accepted)


@dataclass
class ChainResult:
    state: ChainState
    samples: np.ndarray
    mean_g: np.ndarray
    theta_bar: np.ndarray
    f_bar: DiffusivityField
    acceptance_rate: float
    trace: np.ndarray
    burn_in: int
    l2_error: float | None = None
    diagnostics: dict = field(default_factory=dict)


def run_chain(obs: ObservationRecord | None, spec: PriorSpec, M: int, burn_in: int = 0,
              beta: float | str = "auto", seed: int = 0, thin: int = 10,
              f0: DiffusivityField | None = None, solver: SolverConfig | None = None,
              state: ChainState | None = None, adapt_window: int = 50,
              loglik=None, start=None) -> ChainResult:
    """Run ``M`` pCN iterations, continuing from ``state`` when given.

    With ``obs=None`` and no ``loglik`` the chain targets the prior. During
    the first ``burn_in`` iterations an ``"auto"`` step size is multiplied by
    1.1 or 0.9 at the end of each ``adapt_window`` whose acceptance rate is
    above 35% or below 25%; afterwards it stays fixed. The posterior mean
    averages every post-burn-in iterate of this run; ``samples`` keeps every
    ``thin``-th one.
    """
    M = int(M)
    if M < 1:
        raise ConfigurationError("M must be at least 1")
    if loglik is None and obs is not None:
        loglik = LogLikelihood(obs, spec.R.grid, solver)
    basis = spec.basis()
    if state is None:
        g0 = np.zeros(spec.n_coeffs) if start is None else np.asarray(start, dtype=float)
        ll0 = 0.0 if loglik is None else loglik(basis @ g0)
        state = ChainState(g0, ll0, 0.2 if beta == "auto" else float(beta))
    adaptive = beta == "auto"
    trace = np.empty((M, 4))
    sum_g = np.zeros(spec.n_coeffs)
    n_post = post_accepts = 0
    kept = []
    for m in range(M):
        before = state.accepted
        state = pcn_step(state, loglik, spec, seed)
        it = state.iteration
        flag = state.accepted > before
        trace[m] = (it, state.loglik, float(flag), state.beta)
        if adaptive and it <= burn_in and it % adapt_window == 0:
            rate = state.window_accepted / adapt_window
            if rate > 0.35:
                state.beta = min(1.0, state.beta * 1.1)
            elif rate < 0.25:
                state.beta *= 0.9
            state.window_accepted = 0
        if it > burn_in:
            sum_g += state.g
            n_post += 1
            post_accepts += flag
            if (it - burn_in) % thin == 0:
                kept.append(state.g.copy())
    rate = post_accepts / n_post if n_post else float("nan")
    if loglik is not None and n_post >= 100 and rate < 0.01:
        raise TuningError(f"post burn-in acceptance rate {rate:.4f} is below 1%")
    mean_g = sum_g / n_post if n_post else state.g.copy()
    theta_bar = basis @ mean_g
    f_bar = link(theta_bar, spec.R.grid)
    result = ChainResult(state, np.array(kept).reshape(-1, spec.n_coeffs), mean_g, theta_bar,
                         f_bar, float(rate), trace, burn_in)
    if f0 is not None:
        result.l2_error = spec.R.grid.norm(f_bar.values - f0.values)
    result.diagnostics = {
        "iterations": state.iteration,
        "post_burn_in": n_post,
        "acceptance_rate": float(rate),
        "beta": state.beta,
        "loglik_final": state.loglik,
        "loglik_mean": float(trace[:, 1][trace[:, 0] > burn_in].mean()) if n_post else float("nan"),
    }
    return result


def write_trace(result: ChainResult, path):
    from .io import write_csv
    rows = ((int(i), ll, int(a), b) for i, ll, a, b in result.trace)
    return write_csv(path, ["iteration", "loglik", "accepted", "beta"], rows)
