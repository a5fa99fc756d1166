"""Projection estimator of the transition operator and rate experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .errors import ConfigurationError, DataError, ExperimentError
from .io import write_csv
from .simulate import ObservationRecord, sample_observations
from .spectral import SpectralDecomposition, basis_matrix, operator_matrix_norm


@dataclass(frozen=True)
class ProjectionEstimate:
    J: int
    matrix: np.ndarray
    N: int
    D: float

    def padded(self, size: int) -> np.ndarray:
        if size < self.J:
            raise ConfigurationError(f"cannot pad a {self.J}x{self.J} estimate to {size}")
        out = np.zeros((size, size))
        out[: self.J, : self.J] = self.matrix
        return out


def projection_estimator(obs: ObservationRecord, J: int, R: SpectralDecomposition) -> ProjectionEstimate:
    """Empirical pair averages ``(1/N) sum_i e_j(X_(i-1)D) e_j'(X_iD)`` in the Laplacian basis."""
    J = int(J)
    if not 1 <= J <= R.J:
        raise ConfigurationError(f"J={J} exceeds the {R.J} reference modes")
    if obs.dim != R.grid.dim:
        raise ConfigurationError("observation dimension does not match the reference grid")
    if not np.all(R.grid.domain.contains(obs.positions)):
        raise DataError("observation record has points outside the domain")
    E = R.values_at(obs.positions, J)
    H = E[:-1].T @ E[1:] / obs.N
    return ProjectionEstimate(J, H, obs.N, obs.D)


def true_operator_matrix(S0: SpectralDecomposition, R: SpectralDecomposition, D: float) -> np.ndarray:
    """``<P_D e_j, e_j'>`` for ``P_D`` of ``S0`` over every mode of ``R``."""
    if S0.grid != R.grid:
        raise ConfigurationError("truth and reference decompositions live on different grids")
    return basis_matrix(S0, R, D)


def estimator_error(est: ProjectionEstimate, S0: SpectralDecomposition, D: float, alpha: float,
                    R: SpectralDecomposition, truth: np.ndarray | None = None) -> float:
    """Weighted operator-norm distance between the zero-padded estimate and ``P_D``."""
    if abs(est.D - D) > 1e-12 * max(1.0, D):
        raise ConfigurationError(f"estimate was built at D={est.D}, not D={D}")
    P = true_operator_matrix(S0, R, D) if truth is None else truth
    if P.shape[0] != R.J:
        raise ConfigurationError("truth matrix does not match the reference basis size")
    return operator_matrix_norm(est.padded(R.J) - P, alpha, R)


def rate_exponent(s: float, d: int) -> float:
    return d / (2 * s + 2 + d)


def predicted_slope(s: float, d: int, alpha: float = 0.0) -> float:
    return -(s + 1 - alpha) / (2 * s + 2 + d)


def basis_size(N: int, s: float, d: int, const: float = 1.0) -> int:
    return max(1, int(round(const * N ** rate_exponent(s, d))))


def replicate_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass
class RateConfig:
    N_values: list[int]
    replicates: int = 20
    s: float = 3.0
    D: float = 0.05
    alpha: float = 0.0
    J_const: float = 1.0
    fixed_J: int | None = None
    seed: int = 0
    jobs: int = 1


@dataclass
class RateResult:
    rows: list[dict] = field(default_factory=list)
    slope: float = float("nan")
    predicted: float = float("nan")
    errors: dict = field(default_factory=dict)

    def write_csv(self, path):
        header = ["N", "J", "mean", "std", "replicates"]
        return write_csv(path, header, ([r[h] for h in header] for r in self.rows))


def _one_replicate(S0, R, truth, cfg, N, J, seed):
    obs = sample_observations(S0, cfg.D, N, seed)
    est = projection_estimator(obs, J, R)
    return estimator_error(est, S0, cfg.D, cfg.alpha, R, truth)


def rate_experiment(cfg: RateConfig, S0: SpectralDecomposition, R: SpectralDecomposition) -> RateResult:
    """Mean estimator error over replicates for each ``N`` and the log-log slope.

    ``J_N = round(J_const * N^(d / (2s + 2 + d)))`` unless ``fixed_J`` is set.
    """
    Ns = [int(n) for n in cfg.N_values]
    if len(Ns) < 3:
        raise ExperimentError("a rate experiment needs at least three N values")
    d = R.grid.dim
    truth = true_operator_matrix(S0, R, cfg.D)
    result = RateResult(predicted=predicted_slope(cfg.s, d, cfg.alpha))
    tasks = []
    for a, N in enumerate(Ns):
        J = cfg.fixed_J or basis_size(N, cfg.s, d, cfg.J_const)
        if J > R.J:
            raise ExperimentError(f"J_N={J} at N={N} exceeds the {R.J} reference modes")
        tasks += [(N, J, replicate_seed(cfg.seed, a, r)) for r in range(cfg.replicates)]
    errs = Parallel(n_jobs=cfg.jobs)(
        delayed(_one_replicate)(S0, R, truth, cfg, N, J, seed) for N, J, seed in tasks
    )
    for N in Ns:
        vals = np.array([e for (n, _, _), e in zip(tasks, errs) if n == N])
        J = next(j for n, j, _ in tasks if n == N)
        result.errors[N] = vals
        result.rows.append({"N": N, "J": J, "mean": float(vals.mean()),
                            "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                            "replicates": len(vals)})
    means = np.array([r["mean"] for r in result.rows])
    result.slope = float(np.polyfit(np.log(Ns), np.log(means), 1)[0])
    return result
