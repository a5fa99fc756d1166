"""Command-line entry point: ``reflectdiff <subcommand> --config cfg.json --out DIR``.

Every run writes ``resolved_config.json`` and ``manifest.json`` (SHA-256 of
every output file) into the output directory. Failures print a JSON object
``{"error", "message", "exit_code"}`` on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bayes import PriorSpec, SolverConfig, default_K, run_chain, write_trace
from .cache import EigenCache, cache_key
from .conditions import certify, cylinder_reference, transport_lower_bound
from .errors import CacheError, ConfigurationError, ReflectDiffError
from .estimate import (RateConfig, basis_size, estimator_error, projection_estimator,
                       rate_experiment)
from .geometry import Domain, SubdomainSpec, build_cutoff, build_grid, smooth_bump
from .io import atomic_write_bytes, write_csv, write_json, write_manifest
from .metrics import (STABILITY_COLUMNS, hs_distance, kl_divergence, perturbation_family,
                      stability_ratios)
from .simulate import sample_observations, sample_path_euler, write_observations, write_path
from .spectral import decompose, default_mode_count, heat_kernel, laplacian_basis, weyl_exponent
from .truths import make_truth

logger = logging.getLogger("reflectdiff")

COMMANDS = ("simulate", "spectrum", "estimate", "posterior", "conditions", "metrics", "rates")


class Context:
    """Resolved config plus the shared objects every subcommand needs."""

    def __init__(self, cfg: dict, out: Path, jobs: int, require_cache: bool, figures: bool):
        self.cfg = cfg
        self.out = out
        self.jobs = jobs
        self.figures = figures or cfg["plots"]
        self.domain = Domain(cfg["domain"]["bounds"])
        self.grid = build_grid(self.domain, cfg["grid"]["cells"])
        self.f0 = make_truth(self.grid, cfg["truth"])
        self.face_mean = cfg["spectral"]["face_mean"]
        cache_dir = cfg["spectral"]["cache_dir"]
        if require_cache and cache_dir is None:
            raise CacheError("--require-cache needs spectral.cache_dir in the config")
        self.cache = EigenCache(cache_dir, require_cache) if cache_dir else None

    @property
    def seed(self) -> int:
        return int(self.cfg["seed"])

    def decompose(self, f, J=None):
        J = default_mode_count(self.grid) if J is None else int(J)
        if self.cache is not None:
            return self.cache.decompose(f, J, self.face_mean)
        return decompose(f, J, self.face_mean)

    def truth_decomposition(self, J=None):
        return self.decompose(self.f0, self.cfg["spectral"]["modes"] if J is None else J)

    def figure(self, name: str, fn, *args):
        if self.figures:
            from . import plotting
            getattr(plotting, fn)(*args, self.out / "figures" / name)


def _grid_dump(ctx: Context, path, fields: dict):
    grid = ctx.grid
    header = ["cell"] + [f"x_{k + 1}" for k in range(grid.dim)] + list(fields)
    cols = [np.asarray(v, dtype=float) for v in fields.values()]
    rows = ([i, *grid.centers[i], *(c[i] for c in cols)] for i in range(grid.size))
    return write_csv(path, header, rows)


def _central_box(domain: Domain, frac: float):
    mid = 0.5 * (domain.low + domain.high)
    half = 0.5 * frac * domain.sides
    return [[float(m - h), float(m + h)] for m, h in zip(mid, half)]


def _subdomain(domain: Domain, sub: dict) -> SubdomainSpec:
    if "inner" in sub and "support" in sub:
        spec = SubdomainSpec(sub["inner"], sub["support"])
    else:
        spec = SubdomainSpec.centred(domain, sub.get("support_frac", 0.8), sub.get("inner_frac", 0.6))
    spec.validate(domain)
    return spec


def _simulate_obs(ctx: Context, N: int, seed: int):
    return sample_observations(ctx.truth_decomposition(), ctx.cfg["D"], N, seed)


def cmd_simulate(ctx: Context) -> dict:
    cfg = ctx.cfg
    obs = _simulate_obs(ctx, cfg["N"], ctx.seed)
    write_observations(obs, ctx.out)
    summary = {"N": obs.N, "D": obs.D, "clip_mass": obs.clip_mass}
    if cfg["simulate"]["euler"]:
        path = sample_path_euler(ctx.f0, obs.positions[0], cfg["simulate"]["dt"], cfg["simulate"]["T"],
                                 ctx.seed)
        write_path(path, ctx.out)
        summary["euler_reflections"] = path.reflections
    ctx.figure("observations.png", "plot_observations", obs)
    return summary


def cmd_spectrum(ctx: Context) -> dict:
    J = ctx.cfg["spectral"]["modes"]
    if J is not None and J > ctx.grid.size:
        raise ConfigurationError(f"spectral.modes={J} exceeds the {ctx.grid.size} grid cells")
    S = ctx.truth_decomposition(J)
    lam = S.eigenvalues
    write_csv(ctx.out / "eigenvalues.csv", ["j", "lambda"], ([j, v] for j, v in enumerate(lam)))
    k = min(S.J, 10)
    _grid_dump(ctx, ctx.out / "eigenvectors.csv", {f"e_{j}": S.vectors[:, j] for j in range(k)})
    K = heat_kernel(S, ctx.cfg["D"])
    summary = {
        "J": S.J,
        "complete": S.complete,
        "cache_key": cache_key(ctx.f0, S.J, ctx.face_mean),
        "orthonormality_residual": S.orthonormality_residual(),
        "eigen_residual": S.residual,
        "clusters": [list(c) for c in S.clusters],
        "spectral_gap": float(lam[1]) if S.J > 1 else None,
        "weyl_exponent": weyl_exponent(lam) if S.J > 40 else None,
        "heat_kernel": {"t": ctx.cfg["D"], "symmetry_residual": K.symmetry_residual(),
                        "mass_residual": K.mass_residual(ctx.grid.cell_volume),
                        "tail_bound": K.tail_bound, "min": float(K.matrix.min())},
    }
    write_json(ctx.out / "spectrum.json", summary)
    ctx.figure("spectrum.png", "plot_spectrum", lam)
    return summary


def cmd_estimate(ctx: Context) -> dict:
    cfg, est_cfg = ctx.cfg, ctx.cfg["estimator"]
    S0 = ctx.truth_decomposition()
    R = laplacian_basis(ctx.grid, default_mode_count(ctx.grid))
    J = est_cfg["J"] or basis_size(cfg["N"], est_cfg["s"], ctx.grid.dim, est_cfg["J_const"])
    obs = sample_observations(S0, cfg["D"], cfg["N"], ctx.seed)
    est = projection_estimator(obs, J, R)
    err = estimator_error(est, S0, cfg["D"], est_cfg["alpha"], R)
    write_csv(ctx.out / "estimate.csv", ["row"] + [f"c_{j}" for j in range(est.J)],
              ([i, *est.matrix[i]] for i in range(est.J)))
    summary = {"J": est.J, "N": est.N, "D": est.D, "alpha": est_cfg["alpha"], "error": err}
    write_json(ctx.out / "estimate.json", summary)
    return summary


def cmd_rates(ctx: Context) -> dict:
    r = ctx.cfg["rates"]
    rc = RateConfig(N_values=r["N_values"], replicates=r["replicates"], s=r["s"], D=ctx.cfg["D"],
                    alpha=r["alpha"], J_const=r["J_const"], fixed_J=r["fixed_J"], seed=ctx.seed,
                    jobs=ctx.jobs)
    result = rate_experiment(rc, ctx.truth_decomposition(),
                             laplacian_basis(ctx.grid, default_mode_count(ctx.grid)))
    result.write_csv(ctx.out / "rates.csv")
    summary = {"rows": result.rows, "slope": result.slope, "predicted": result.predicted}
    write_json(ctx.out / "rates.json", summary)
    ctx.figure("rates.png", "plot_rates", result.rows, result.slope, result.predicted)
    return summary


def cmd_posterior(ctx: Context) -> dict:
    cfg, p = ctx.cfg, ctx.cfg["prior"]
    grid = ctx.grid
    N = cfg["N"]
    K = p["K"] or default_K(N, p["s"], grid.dim, p["K_const"])
    R = laplacian_basis(grid, min(grid.size, K + 2))
    cutoff = build_cutoff(grid, _subdomain(ctx.domain, p["subdomain"]))
    spec = PriorSpec(p["s"], K, N, cutoff, R)
    obs = _simulate_obs(ctx, N, ctx.seed)
    res = run_chain(obs, spec, p["M"], burn_in=p["burn_in"], beta=p["beta"], seed=ctx.seed,
                    thin=p["thin"], f0=ctx.f0, solver=SolverConfig(p["modes"], ctx.face_mean))
    write_trace(res, ctx.out / "trace.csv")
    atomic_write_bytes(ctx.out / "samples.f64", res.samples.astype("<f8").tobytes())
    write_json(ctx.out / "samples.json", {"shape": list(res.samples.shape), "dtype": "<f8",
                                          "order": "C", "thin": p["thin"], "burn_in": p["burn_in"],
                                          "K": K, "scale": spec.scale})
    _grid_dump(ctx, ctx.out / "posterior_mean.csv",
               {"theta_bar": res.theta_bar, "f_bar": res.f_bar.values, "f0": ctx.f0.values})
    write_json(ctx.out / "chain_state.json", res.state.to_dict())
    summary = {"K": K, "scale": spec.scale, "N": N, "M": p["M"], "l2_error": res.l2_error,
               "mean_g": res.mean_g, **res.diagnostics}
    write_json(ctx.out / "posterior.json", summary)
    ctx.figure("posterior_mean.png", "plot_fields", grid,
               {"posterior mean": res.f_bar.values, "truth": ctx.f0.values}, f"N = {N}")
    ctx.figure("trace.png", "plot_trace", res.trace)
    return {k: summary[k] for k in ("K", "l2_error", "acceptance_rate")}


def cmd_conditions(ctx: Context) -> dict:
    c = ctx.cfg["conditions"]
    O0 = c["O0"] or _central_box(ctx.domain, c["O0_frac"])
    S = ctx.truth_decomposition(min(ctx.grid.size, c["modes"]))
    block, report = certify(S, O0, c["mu"])
    out = report.to_dict()
    out.update({"O0": O0, "eigenvalue": block.eigenvalue, "members": list(block.members)})
    if report.certified:
        sub = _subdomain(ctx.domain, c["subdomain"])
        tr = transport_lower_bound(block.field, ctx.grid, sub, c["transport_trials"], ctx.seed,
                                   check=False)
        out["transport"] = {"c": tr.c, "skipped": tr.skipped, "trials": c["transport_trials"],
                            "support": sub.to_dict()}
    if ctx.domain.dim >= 2 and ctx.domain.bounds[-1][0] == 0.0:
        base = Domain(ctx.domain.bounds[:-1])
        w = ctx.domain.bounds[-1][1]
        if base.diameter <= w:
            cyl = cylinder_reference(w, base)
            out["cylinder"] = {"w": w, "eigenvalue": cyl.eigenvalue,
                               "relative_error": abs(block.eigenvalue - cyl.eigenvalue) / cyl.eigenvalue}
    write_json(ctx.out / "conditions.json", out)
    ctx.figure("eigenblock.png", "plot_fields", ctx.grid, {"E": block.field}, "first eigenblock")
    return {"certified": report.certified, "c0": report.c0, "mu": report.mu}


def cmd_metrics(ctx: Context) -> dict:
    m = ctx.cfg["metrics"]
    grid, D = ctx.grid, ctx.cfg["D"]
    J = m["modes"]
    radius = m["bump"].get("radius_frac", 0.25) * ctx.domain.sides
    centre = m["bump"].get("centre", 0.5 * (ctx.domain.low + ctx.domain.high))
    bump = smooth_bump(grid.centers, centre, radius)
    family = perturbation_family(ctx.f0, m["eps"], bump)
    S0 = ctx.decompose(ctx.f0, J)
    R = laplacian_basis(grid, S0.J)
    rows = []
    for eps, f in family:
        S = ctx.decompose(f, J)
        kl, hs = kl_divergence(S, S0, D), hs_distance(S, S0, D)
        rows.append({"eps": eps, "kl": kl, "hs": hs, "ratio": kl / hs**2 if hs > 0 else float("nan")})
    write_csv(ctx.out / "kl_hs.csv", ["eps", "kl", "hs", "ratio"], ([r[k] for k in r] for r in rows))
    nonzero = [e for e, _ in family if e != 0]
    report = stability_ratios([(e, f) for e, f in family if e in nonzero], ctx.f0, D, m["t"], R,
                              m["gamma"], decompose_fn=lambda f: ctx.decompose(f, J))
    write_csv(ctx.out / "stability.csv", list(STABILITY_COLUMNS), report.rows())
    ratios = [r["ratio"] for r in rows if np.isfinite(r["ratio"])]
    summary = {"kl_hs": rows, "C0": max(ratios) if ratios else None,
               "kl_self": kl_divergence(S0, S0, D), "stability": report.to_dict()}
    write_json(ctx.out / "metrics.json", summary)
    return {"C0": summary["C0"], "kl_self": summary["kl_self"]}


HANDLERS = {
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "estimate": cmd_estimate,
    "posterior": cmd_posterior,
    "conditions": cmd_conditions,
    "metrics": cmd_metrics,
    "rates": cmd_rates,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reflectdiff",
                                     description="Diffusivity inference for reflected diffusions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "") + " experiment")
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for replicates")
        p.add_argument("--require-cache", action="store_true",
                       help="fail instead of computing a missing eigendecomposition")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set prior.M=2000")
        p.add_argument("--figures", action="store_true", help="also write PNG figures")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(args: argparse.Namespace) -> dict:
    user = cfgmod.load(args.config) if args.config else {}
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append((["seed"], args.seed))
    cfg = cfgmod.resolve(user, overrides)
    if args.jobs < 1:
        raise ConfigurationError("--jobs must be at least 1")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out, args.jobs, args.require_cache, args.figures)
    write_json(out / "resolved_config.json", {"command": args.command, "config": cfg})
    summary = HANDLERS[args.command](ctx)
    write_manifest(out)
    return summary


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = run(args)
    except ReflectDiffError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code
    print(json.dumps(summary, default=_default, sort_keys=True))
    return 0


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


if __name__ == "__main__":
    sys.exit(main())
