"""Information distances and stability diagnostics between diffusivities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InjectivityError, KernelQualityError
from .spectral import (DiffusivityField, SpectralDecomposition, basis_matrix, decompose,
                       flux_matrix, heat_kernel, operator_matrix_norm, transition_apply)


def _kernels(S_f, S_f0, t):
    if S_f.grid != S_f0.grid:
        raise ConfigurationError("decompositions live on different grids")
    return heat_kernel(S_f, t).matrix, heat_kernel(S_f0, t).matrix


def kl_divergence(S_f: SpectralDecomposition, S_f0: SpectralDecomposition, D: float) -> float:
    """KL divergence of the ``(X_0, X_D)`` pair law under ``f`` from that under ``f0``.

    The pair density under ``f0`` is ``p_{D,f0}(x, y) / volume``; quadrature is
    over cell pairs.
    """
    p, p0 = _kernels(S_f, S_f0, D)
    if np.any(p <= 0) or np.any(p0 <= 0):
        raise KernelQualityError("transition kernel is non-positive at some cell pair")
    grid = S_f.grid
    w = grid.cell_volume**2 / grid.domain.volume
    return float(w * np.sum(p0 * np.log(p0 / p)))


def hs_distance(S_f: SpectralDecomposition, S_f0: SpectralDecomposition, t: float) -> float:
    """L2 distance of the two kernels over the product domain (the HS norm of ``P_t - P_t0``)."""
    p, p0 = _kernels(S_f, S_f0, t)
    return float(np.sqrt(np.sum((p - p0) ** 2)) * S_f.grid.cell_volume)


def operator_difference(S_f, S_f0, R: SpectralDecomposition, D: float) -> np.ndarray:
    """``P_{D,f} - P_{D,f0}`` in the reference basis ``R``."""
    return basis_matrix(S_f, R, D) - basis_matrix(S_f0, R, D)


def perturbation_family(f0: DiffusivityField, eps, bump) -> list[tuple[float, DiffusivityField]]:
    """``f_eps = f0 * (1 + eps * bump)``; ``bump`` should vanish near the boundary."""
    bump = np.asarray(bump, dtype=float)
    out = []
    for e in eps:
        vals = f0.values * (1.0 + float(e) * bump)
        out.append((float(e), DiffusivityField(f0.grid, vals, f_min=min(f0.f_min, vals.min()),
                                               boundary_value=f0.boundary_value)))
    return out


@dataclass
class StabilityReport:
    eps: list[float] = field(default_factory=list)
    forward: list[float] = field(default_factory=list)
    backward: list[float] = field(default_factory=list)
    log_modulus: list[float] = field(default_factory=list)
    raw: list[dict] = field(default_factory=list)
    certified: bool | None = None

    def to_dict(self) -> dict:
        return {"eps": self.eps, "forward": self.forward, "backward": self.backward,
                "log_modulus": self.log_modulus, "raw": self.raw, "certified": self.certified}

    def rows(self):
        for r in self.raw:
            yield [r[k] for k in STABILITY_COLUMNS]


STABILITY_COLUMNS = ("eps", "f_dist", "op_dist_L2", "op_dist_H2", "hs_t", "forward", "backward",
                     "log_modulus")


def stability_ratios(family, f0: DiffusivityField, D: float, t: float, R: SpectralDecomposition,
                     gamma: float = 1.0 / 3.0, J: int | None = None, certificate=None,
                     decompose_fn=None) -> StabilityReport:
    """Forward (Hoelder), backward-heat and log-modulus ratios over a family ``[(eps, f_eps)]``.

    ``certificate`` (a condition report for ``f0``) is recorded and, when it
    is present and not certified, the forward ratios are reported as NaN.
    """
    if not 0 < t < D:
        raise ConfigurationError(f"backward time t={t} must lie in (0, D={D})")
    dec = decompose_fn or (lambda f: decompose(f, J))
    grid = f0.grid
    S0 = dec(f0)
    report = StabilityReport(certified=None if certificate is None else bool(certificate.certified))
    for eps, f in family:
        f_dist = grid.norm(f.values - f0.values)
        if f_dist == 0.0:
            continue
        S = dec(f)
        dP = operator_difference(S, S0, R, D)
        op0 = operator_matrix_norm(dP, 0.0, R)
        if op0 == 0.0:
            raise InjectivityError(f"f differs from f0 by {f_dist:.3e} but the operators coincide")
        op2 = operator_matrix_norm(dP, 2.0, R)
        hs_t = hs_distance(S, S0, t)
        forward = f_dist / op2 if report.certified is not False else float("nan")
        backward = hs_t / op0**gamma
        log_mod = f_dist / np.log(1.0 / op0) ** (-2.0 / 3.0) if op0 < 1 else float("nan")
        report.eps.append(eps)
        report.forward.append(forward)
        report.backward.append(backward)
        report.log_modulus.append(log_mod)
        report.raw.append({"eps": eps, "f_dist": f_dist, "op_dist_L2": op0, "op_dist_H2": op2,
                           "hs_t": hs_t, "forward": forward, "backward": backward,
                           "log_modulus": log_mod})
    return report


def b_coefficients(t: float, lam_j: float, lam_k) -> np.ndarray:
    """``int_0^t exp(-s lam_j) exp(-(t - s) lam_k) ds``, equal to ``t exp(-t lam)`` when they coincide."""
    lam_k = np.asarray(lam_k, dtype=float)
    delta = lam_k - lam_j
    out = np.empty_like(lam_k)
    small = np.abs(t * delta) < 1e-12
    out[small] = t * np.exp(-t * lam_j)
    d = delta[~small]
    out[~small] = -np.exp(-t * lam_j) * np.expm1(-t * d) / d
    return out


def pseudo_linearisation_residual(f: DiffusivityField, f0: DiffusivityField, t: float, j: int = 1,
                                  J: int | None = None, S_f: SpectralDecomposition | None = None,
                                  S_f0: SpectralDecomposition | None = None) -> float:
    """Residual of the spectral identity for ``(P_{t,f} - P_{t,f0}) E_j``.

    The left side uses every mode of ``S_f``; the right side keeps the first
    ``J`` modes of ``f``. ``G_j = div((f - f0) grad E_j)`` with the generator stencil.
    """
    S_f = S_f or decompose(f)
    S_f0 = S_f0 or decompose(f0)
    grid = f.grid
    E = S_f0.mode(j)
    lam_j = S_f0.eigenvalues[j]
    lhs = transition_apply(S_f, t, E) - np.exp(-t * lam_j) * E
    G = flux_matrix(grid, f.values - f0.values) @ E
    J = S_f.J if J is None else int(J)
    coeffs = S_f.coefficients(G)[:J] * b_coefficients(t, lam_j, S_f.eigenvalues[:J])
    rhs = S_f.vectors[:, :J] @ coeffs
    return grid.norm(lhs - rhs)
