"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from reflectdiff.bayes import PriorSpec, SolverConfig, default_K, link, run_chain, sample_prior
from reflectdiff.conditions import (certify, check_sunnyside, first_eigenblock,
                                    transport_lower_bound, transport_ratio)
from reflectdiff.estimate import RateConfig, predicted_slope, rate_experiment
from reflectdiff.geometry import Domain, SubdomainSpec, build_cutoff, build_grid, smooth_bump
from reflectdiff.metrics import (hs_distance, kl_divergence, operator_difference,
                                 perturbation_family, pseudo_linearisation_residual)
from reflectdiff.simulate import sample_observations
from reflectdiff.spectral import (DiffusivityField, basis_matrix, decompose, heat_kernel,
                                  laplacian_basis, operator_matrix_norm)
from reflectdiff.truths import make_truth

D = 0.05
SUPPORT = SubdomainSpec(((0.2, 0.8),), ((0.1, 0.9),))


@pytest.fixture
def report(capsys):
    def _report(number, name, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, detail
    return _report


@pytest.fixture(scope="module")
def grid():
    return build_grid(Domain.interval(0, 1), [256])


@pytest.fixture(scope="module")
def truth(grid):
    return make_truth(grid, {"kind": "bump"})


def test_01_spectral_oracle(report, grid):
    t0 = time.perf_counter()
    S = decompose(DiffusivityField.constant(grid, 0.5))
    elapsed = time.perf_counter() - t0
    lam = S.eigenvalues
    err1 = abs(lam[1] / (np.pi**2 / 2) - 1)
    j = np.arange(1, 11)
    errj = np.max(np.abs(lam[1:11] / (j**2 * np.pi**2 / 2) - 1))
    orth = S.orthonormality_residual()
    ok = err1 < 0.01 and errj < 0.02 and orth < 1e-10 and elapsed < 1.0
    report(1, "spectral oracle", ok,
           f"lambda_1 rel err {err1:.2e}, max j<=10 rel err {errj:.2e}, "
           f"orthonormality {orth:.1e}, {elapsed:.3f}s")


def test_02_cylinder(report):
    t0 = time.perf_counter()
    g = build_grid(Domain.box((0, 1), (0, 2)), [48, 96])
    S = decompose(DiffusivityField.constant(g, 1.0), 8)
    elapsed = time.perf_counter() - t0
    lam = S.eigenvalues
    err = abs(lam[1] / (np.pi**2 / 4) - 1)
    gap = (lam[2] - lam[1]) / lam[1]
    simple = not any(1 in c for c in S.clusters)
    ok = err < 0.01 and gap > 0.5 and simple and elapsed < 30
    report(2, "cylinder eigenvalue", ok,
           f"lambda_1 = {lam[1]:.5f} (rel err {err:.2e}), relative gap {gap:.3f}, {elapsed:.2f}s")


def test_03_heat_kernel_invariants(report, grid):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    spec = PriorSpec(1.0, 12, 1000, build_cutoff(grid, SUPPORT), laplacian_basis(grid, 20))
    worst_sym = worst_mass = 0.0
    min_p = np.inf
    for i in range(20):
        theta = 3.0 * sample_prior(spec, int(rng.integers(2**32))).field(spec)
        S = decompose(link(theta, grid))
        K = heat_kernel(S, D)
        worst_sym = max(worst_sym, K.symmetry_residual())
        worst_mass = max(worst_mass, K.mass_residual(grid.cell_volume))
        min_p = min(min_p, float(K.matrix.min()))
    elapsed = time.perf_counter() - t0
    ok = worst_sym < 1e-10 and worst_mass < 1e-10 and min_p > 0 and elapsed < 60
    report(3, "heat-kernel invariants", ok,
           f"symmetry {worst_sym:.1e}, mass {worst_mass:.1e}, min p {min_p:.3e} over 20 fields, "
           f"{elapsed:.1f}s")


def test_04_chapman_kolmogorov(report, grid, truth):
    t = D / 2
    S = decompose(truth)
    R = laplacian_basis(grid)
    full = np.max(np.abs(basis_matrix(S, R, 2 * t) - basis_matrix(S, R, t) @ basis_matrix(S, R, t)))
    T = S.truncated(40)
    P1, P2 = basis_matrix(T, T, t), basis_matrix(T, T, 2 * t)
    trunc = np.max(np.abs(P2 - P1 @ P1))
    ok = full < 1e-10 and trunc < 1e-10
    report(4, "Chapman-Kolmogorov", ok, f"complete basis {full:.1e}, 40-mode basis {trunc:.1e}")


def test_05_mixing(report, grid):
    t0 = time.perf_counter()
    S = decompose(DiffusivityField.constant(grid, 0.5))
    obs = sample_observations(S, D, 100_000, 7)
    phi = np.sqrt(2) * np.cos(np.pi * obs.positions[:, 0])
    phi -= phi.mean()
    lags = np.arange(1, 6)
    acov = np.array([np.mean(phi[:-k] * phi[k:]) for k in lags])
    rate = -np.polyfit(lags, np.log(acov), 1)[0]
    target = D * S.eigenvalues[1]
    elapsed = time.perf_counter() - t0
    ok = abs(rate / target - 1) < 0.10 and elapsed < 120
    report(5, "mixing rate", ok,
           f"fitted decay {rate:.4f} vs D*lambda_1 {target:.4f} "
           f"({abs(rate / target - 1):.1%}), {elapsed:.1f}s")


def test_06_estimator_rate(report, grid, truth):
    t0 = time.perf_counter()
    cfg = RateConfig([1000, 4000, 16000, 64000], replicates=20, s=3, D=D, J_const=4.0, seed=0)
    res = rate_experiment(cfg, decompose(truth), laplacian_basis(grid))
    elapsed = time.perf_counter() - t0
    target = predicted_slope(3, 1)
    ok = abs(res.slope - target) <= 0.15 and elapsed < 900
    report(6, "estimator rate", ok,
           f"slope {res.slope:.3f} vs {target:.3f}, J = {[r['J'] for r in res.rows]}, {elapsed:.1f}s")


def test_07_pcn_prior_preservation(report, grid):
    t0 = time.perf_counter()
    beta = 0.5
    spec = PriorSpec(1.0, 10, 1000, build_cutoff(grid, SUPPORT), laplacian_basis(grid, 20))
    res = run_chain(None, spec, 100_000, beta=beta, seed=17, thin=1)
    g = res.samples
    var_err = np.max(np.abs(g.var(axis=0) - 1.0))
    c = g - g.mean(axis=0)
    rho = np.sum(c[:-1] * c[1:], axis=0) / np.sum(c * c, axis=0)
    rho_target = np.sqrt(1 - beta**2)
    rho_err = np.max(np.abs(rho / rho_target - 1))
    elapsed = time.perf_counter() - t0
    ok = var_err < 0.05 and rho_err < 0.02 and elapsed < 60
    report(7, "pCN prior preservation", ok,
           f"max |var - 1| {var_err:.3f}, max lag-1 rel err {rho_err:.4f} "
           f"(target {rho_target:.4f}), {elapsed:.1f}s")


def _posterior_error(grid, truth, S0, N, seed, M):
    cutoff = build_cutoff(grid, SUPPORT)
    K = default_K(N, 1.0, 1)
    spec = PriorSpec(1.0, K, N, cutoff, laplacian_basis(grid, K + 2))
    obs = sample_observations(S0, D, N, seed)
    res = run_chain(obs, spec, M, burn_in=M // 5, seed=seed, f0=truth, solver=SolverConfig(modes=40))
    return res.l2_error


def test_08_posterior_trend(report, grid, truth):
    t0 = time.perf_counter()
    S0 = decompose(truth)
    M = 10_000
    small, large = [], []
    for seed in range(1, 11):
        small.append(_posterior_error(grid, truth, S0, 2500, seed, M))
        large.append(_posterior_error(grid, truth, S0, 25000, seed, M))
    wins = int(np.sum(np.array(large) < np.array(small)))
    elapsed = time.perf_counter() - t0
    ok = wins >= 8 and elapsed < 3600
    report(8, "posterior trend", ok,
           f"{wins}/10 seeds improve; median L2 error {np.median(small):.4f} (N=2500) -> "
           f"{np.median(large):.4f} (N=25000), {elapsed:.0f}s")


def test_09_kl_hs_bound(report, grid, truth):
    t0 = time.perf_counter()
    S0 = decompose(truth)
    bump = smooth_bump(grid.centers, [0.5], [0.25])
    ratios = []
    for eps, f in perturbation_family(truth, [0.05, 0.1, 0.2, 0.4], bump):
        S = decompose(f)
        ratios.append(kl_divergence(S, S0, D) / hs_distance(S, S0, D) ** 2)
    C0 = max(ratios)
    self_kl = kl_divergence(S0, S0, D)
    elapsed = time.perf_counter() - t0
    ok = np.isfinite(C0) and max(ratios) / min(ratios) < 10 and self_kl == 0.0 and elapsed < 120
    report(9, "KL-HS bound", ok,
           f"C0 = {C0:.4f}, ratios {np.round(ratios, 4).tolist()}, KL(f0, f0) = {self_kl}, "
           f"{elapsed:.2f}s")


def test_10_sunnyside(report):
    t0 = time.perf_counter()
    g1 = build_grid(Domain.interval(0, 1), [1024])
    block = first_eigenblock(laplacian_basis(g1, 4), [1.0])
    r1 = check_sunnyside(block, [[0.25, 0.75]], 1.0, g1)
    err = abs(r1.c0 / (np.pi**2 / 2) - 1)
    g2 = build_grid(Domain.box((0, 1), (0, 2)), [48, 96])
    _, r2 = certify(laplacian_basis(g2, 10), [[0.2, 0.8], [0.4, 1.6]])
    elapsed = time.perf_counter() - t0
    ok = err < 0.02 and r2.certified and elapsed < 60
    report(10, "sunnyside certificate", ok,
           f"d=1 c0 = {r1.c0:.4f} (rel err {err:.2e}); box certified={r2.certified} "
           f"c0={r2.c0:.2f} at mu={r2.mu:g}, {elapsed:.2f}s")


def test_11_transport(report):
    t0 = time.perf_counter()
    g = build_grid(Domain.interval(0, 1), [1024])
    u0 = np.sqrt(2) * np.cos(np.pi * g.centers[:, 0])
    sub = SubdomainSpec(((0.3, 0.7),), ((0.2, 0.8),))
    rep = transport_lower_bound(u0, g, sub, trials=100, seed=3)
    rng = np.random.default_rng(4)
    invariant = all(transport_ratio(g, 2.0 * h, u0) == transport_ratio(g, h, u0)
                    for h in rng.standard_normal((20, g.size)))
    elapsed = time.perf_counter() - t0
    ok = rep.c > 0 and rep.ratios.size == 100 and invariant and elapsed < 60
    report(11, "transport lower bound", ok,
           f"min ratio {rep.c:.4f} over {rep.ratios.size} trials, exact 2h invariance={invariant}, "
           f"{elapsed:.2f}s")


def test_12_pseudo_linearisation(report, grid, truth):
    t0 = time.perf_counter()
    bump = smooth_bump(grid.centers, [0.5], [0.25])
    f = DiffusivityField(grid, truth.values * (1 + 0.05 * bump))
    S, S0 = decompose(f), decompose(truth)
    Js = [32, 64, 128, 256]
    res = [pseudo_linearisation_residual(f, truth, D, J=J, S_f=S, S_f0=S0) for J in Js]
    decreasing = all(a > b for a, b in zip(res, res[1:]))
    elapsed = time.perf_counter() - t0
    ok = res[-1] < 1e-6 and decreasing and elapsed < 60
    report(12, "pseudo-linearisation", ok,
           f"residuals {[f'{r:.1e}' for r in res]} at J={Js}, {elapsed:.2f}s")


def test_13_injectivity(report, grid, truth):
    t0 = time.perf_counter()
    S0 = decompose(truth)
    R = laplacian_basis(grid)
    spec = PriorSpec(1.0, 12, 1000, build_cutoff(grid, SUPPORT), laplacian_basis(grid, 20))
    theta0 = np.log(4 * truth.values - 1)
    outside = ~SUPPORT.support_mask(grid)
    norms = []
    for seed in range(20):
        theta = theta0 + sample_prior(spec, 500 + seed).field(spec)
        f = link(theta, grid)
        assert np.all(f.values[outside] == truth.values[outside])
        norms.append(operator_matrix_norm(operator_difference(decompose(f), S0, R, D), 0.0))
    elapsed = time.perf_counter() - t0
    ok = min(norms) > 1e-8 and elapsed < 300
    report(13, "injectivity witness", ok,
           f"min operator distance {min(norms):.3e} over 20 fields, {elapsed:.1f}s")
