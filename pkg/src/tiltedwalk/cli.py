"""Command-line front end.

Subcommands: ``markov solve|associate|verify``, ``gauss solve|verify``,
``queue run``, ``verify run``.  Every command reads a JSON config, prints a
JSON envelope {"command", "config", "result"} where "config" is the fully
resolved configuration (defaults filled in, seed decided), and re-running
from that embedded config reproduces the output bit-for-bit.  ``--threads``
parallelizes Monte Carlo blocks without changing any result.

Exit codes: 0 success, 1 input/validation error, 2 numerical failure
(no tilt, no root, degenerate case, non-convergence, failed check).
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import json
import secrets
import sys
from typing import Optional

from . import diagnostics as dg
from . import gaussian as g
from . import markov as mk
from . import queueing as qu
from .defaults import (
    BURN_IN_FRACTION,
    FLAT_TOL,
    MC_SAMPLES,
    QUEUE_ROOT_TOL,
    ROOT_TOL,
    SCAN_TOL,
    TAIL_LOWER_Q,
    TAIL_UPPER_Q,
)
from .errors import ConfigError, ModelError, NumericalError

__all__ = ["main"]


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown fields in {where}: {sorted(unknown)}")


def _positive(value, name: str) -> float:
    value = float(value)
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _resolve_seed(options: dict, cli_seed: Optional[int]) -> int:
    if cli_seed is not None:
        seed = cli_seed
    elif options.get("seed") is not None:
        seed = int(options["seed"])
    else:
        seed = secrets.randbits(63)
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


# ---------------------------------------------------------------------------
# markov commands
# ---------------------------------------------------------------------------

def _markov_model(cfg: dict) -> mk.MarkovModel:
    _check_keys(cfg, {"states", "P", "pi", "associated"}, "model")
    model = mk.MarkovModel.from_dict(cfg)
    violations = mk.validate(model)
    if violations:
        raise ModelError("; ".join(violations))
    return model


def _resolve_markov_solve(raw: dict, cli_seed) -> dict:
    _check_keys(raw, {"model", "options"}, "config")
    model = _markov_model(raw.get("model", {}))
    options = dict(raw.get("options", {}))
    _check_keys(options, {"tol"}, "options")
    tol = _positive(options.get("tol", ROOT_TOL), "tol")
    return {"model": model.to_dict(), "options": {"tol": tol}}


def _run_markov_solve(resolved: dict, threads: int):
    model = mk.MarkovModel.from_dict(resolved["model"])
    tilt = mk.solve_tilt(model, tol=resolved["options"]["tol"])
    result = {
        "theta": tilt.theta,
        "v": tilt.v.tolist(),
        "c": tilt.c.tolist(),
        "q": tilt.q,
    }
    return result, None, None


def _resolve_markov_associate(raw: dict, cli_seed) -> dict:
    _check_keys(raw, {"model", "options"}, "config")
    model = _markov_model(raw.get("model", {}))
    options = dict(raw.get("options", {}))
    _check_keys(options, {"tol", "theta"}, "options")
    tol = _positive(options.get("tol", ROOT_TOL), "tol")
    resolved_opts = {"tol": tol}
    if options.get("theta") is not None:
        resolved_opts["theta"] = float(options["theta"])
    return {"model": model.to_dict(), "options": resolved_opts}


def _tilt_at(model: mk.MarkovModel, theta: float) -> mk.TiltSolution:
    """Perron pair at a caller-supplied theta; the root must really be 1."""
    lam, v, c = mk.perron(mk.tilt_matrix(model, theta))
    if abs(lam - 1.0) > 1e-8:
        raise NumericalError(
            f"theta={theta:.12g} is not a tilt parameter: Perron root {lam:.12g}"
        )
    return mk.TiltSolution(theta=theta, v=v, c=c, q=float(model.pi @ c))


def _run_markov_associate(resolved: dict, threads: int):
    model = mk.MarkovModel.from_dict(resolved["model"])
    opts = resolved["options"]
    if "theta" in opts:
        tilt = _tilt_at(model, opts["theta"])
    else:
        tilt = mk.solve_tilt(model, tol=opts["tol"])
    assoc = mk.associated(model, tilt)
    _, err = mk.duality_roundtrip(model, tilt)
    result = {
        "theta": tilt.theta,
        "P_star": assoc.P.tolist(),
        "pi_star": assoc.pi.tolist(),
        "duality_error": err,
    }
    return result, None, None


# ---------------------------------------------------------------------------
# gauss commands
# ---------------------------------------------------------------------------

def _gauss_model(cfg: dict) -> g.GaussianModel:
    _check_keys(cfg, {"mu", "sigma2", "corr", "associated"}, "model")
    if "corr" in cfg:
        _check_keys(cfg["corr"], {"type", "phi", "coeffs", "rhos"}, "model.corr")
    return g.GaussianModel.from_dict(cfg)


def _resolve_gauss_solve(raw: dict, cli_seed) -> dict:
    _check_keys(raw, {"model"}, "config")
    model = _gauss_model(raw.get("model", {}))
    return {"model": model.to_dict()}


def _run_gauss_solve(resolved: dict, threads: int):
    model = g.GaussianModel.from_dict(resolved["model"])
    tilt = g.gaussian_tilt(model)
    result = {"theta": tilt.theta, "R": tilt.R, "S": tilt.S, "q": tilt.q}
    return result, None, None


# ---------------------------------------------------------------------------
# queue run
# ---------------------------------------------------------------------------

def _resolve_queue_run(raw: dict, cli_seed) -> dict:
    _check_keys(raw, {"model", "options"}, "config")
    model_cfg = raw.get("model", {})
    _check_keys(model_cfg, {"arrivals", "service"}, "model")
    model = qu.QueueModel.from_dict(model_cfg)
    model.require_stable()
    options = dict(raw.get("options", {}))
    _check_keys(
        options,
        {"n", "burn_in", "seed", "lower_q", "upper_q", "root_tol"},
        "options",
    )
    n = int(options.get("n", 10**6))
    if n < 1:
        raise ConfigError("options.n must be positive")
    burn_in = options.get("burn_in")
    burn_in = max(1, int(BURN_IN_FRACTION * n)) if burn_in is None else int(burn_in)
    if burn_in < 0:
        raise ConfigError("options.burn_in must be nonnegative")
    lower_q = float(options.get("lower_q", TAIL_LOWER_Q))
    upper_q = float(options.get("upper_q", TAIL_UPPER_Q))
    if not 0.0 < lower_q < upper_q < 1.0:
        raise ConfigError("need 0 < lower_q < upper_q < 1")
    root_tol = _positive(options.get("root_tol", QUEUE_ROOT_TOL), "root_tol")
    return {
        "model": model.to_dict(),
        "options": {
            "n": n,
            "burn_in": burn_in,
            "seed": _resolve_seed(options, cli_seed),
            "lower_q": lower_q,
            "upper_q": upper_q,
            "root_tol": root_tol,
        },
    }


def _run_queue_run(resolved: dict, threads: int, waits_csv: Optional[str] = None):
    model = qu.QueueModel.from_dict(resolved["model"])
    opts = resolved["options"]
    service = model.service
    if isinstance(model.arrivals, qu.PoissonArrivals):
        theta_analytic = qu.poisson_theta(service, model.lam, tol=opts["root_tol"])
        comparison = None
    else:
        theta_analytic = qu.appointments_theta(
            service.phi, model.lam, tol=opts["root_tol"], phi_sup=service.phi_sup
        )
        comparison = qu.comparison_factor(service, model.lam)
    if not isinstance(service, qu.ExponentialService):
        bad = qu.spot_check_service(service, seed=opts["seed"])
        if bad:
            raise NumericalError("service sampler disagrees with its transform: " + "; ".join(bad))
    sample = qu.simulate_queue(model, opts["n"], burn_in=opts["burn_in"], seed=opts["seed"])
    if waits_csv:
        with open(waits_csv, "w", newline="") as fh:
            writer = csv_mod.writer(fh)
            writer.writerow(("wait",))
            writer.writerows((w,) for w in sample.waits)
    theta_hat, stderr = qu.tail_decay_estimate(
        sample, lower_q=opts["lower_q"], upper_q=opts["upper_q"]
    )
    result = {
        "theta_analytic": theta_analytic,
        "theta_hat": theta_hat,
        "stderr": stderr,
        "comparison": comparison,
    }
    grid, logs = qu.tail_regression_points(
        sample, lower_q=opts["lower_q"], upper_q=opts["upper_q"]
    )
    csv_rows = [("x", "log_survival")] + [(x, y) for x, y in zip(grid, logs)]
    return result, csv_rows, None


# ---------------------------------------------------------------------------
# verify run
# ---------------------------------------------------------------------------

_MARKOV_CHECK_DEFAULTS = {
    "assumption1": {"n_grid": [10, 20, 40, 80], "mode": "exact", "samples": MC_SAMPLES, "tol": SCAN_TOL},
    "phi_sweep": {"factors": [0.5, 1.0, 2.0], "n_grid": [25, 50, 100], "flat_tol": FLAT_TOL, "expect": {}},
    "martingale": {"k_max": 5, "samples": MC_SAMPLES, "identity_tol": 1e-12},
    "assumption2": {"k": 1, "mn_grid": [[5, 5], [10, 10], [20, 20], [30, 30]], "tol": 1e-10},
}

_GAUSS_CHECK_DEFAULTS = {
    "assumption1": {"n_grid": [25, 50, 100, 200], "mode": "exact", "samples": MC_SAMPLES, "tol": SCAN_TOL},
    "phi_sweep": {"factors": [0.5, 1.0, 2.0], "n_grid": [50, 100, 200, 400], "flat_tol": FLAT_TOL, "expect": {}},
    "martingale": {"k_max": 4, "samples": MC_SAMPLES},
    "normalization": {"ks": [0, 1, 2], "tol": 1e-8},
}


def _resolve_verify(raw: dict, cli_seed, forced_type: Optional[str] = None) -> dict:
    _check_keys(raw, {"model_type", "model", "checks", "options"}, "config")
    model_type = raw.get("model_type", forced_type)
    if model_type is None:
        raise ConfigError("config needs a model_type of 'markov' or 'gaussian'")
    if forced_type is not None and model_type != forced_type:
        raise ConfigError(f"model_type {model_type!r} conflicts with the subcommand")
    if model_type == "markov":
        model = _markov_model(raw.get("model", {}))
        defaults = _MARKOV_CHECK_DEFAULTS
    elif model_type == "gaussian":
        model = _gauss_model(raw.get("model", {}))
        defaults = _GAUSS_CHECK_DEFAULTS
    else:
        raise ConfigError(f"unknown model_type {model_type!r}")

    requested = raw.get("checks", {name: {} for name in defaults})
    _check_keys(requested, set(defaults), "checks")
    if not requested:
        raise ConfigError("config requests no checks; drop 'checks' to run them all")
    checks = {}
    for name, given in requested.items():
        base = defaults[name]
        _check_keys(given, set(base), f"checks.{name}")
        merged = {**base, **given}
        for key in ("tol", "flat_tol", "identity_tol"):
            if key in merged:
                merged[key] = _positive(merged[key], f"checks.{name}.{key}")
        checks[name] = merged

    options = dict(raw.get("options", {}))
    _check_keys(options, {"seed"}, "options")
    return {
        "model_type": model_type,
        "model": model.to_dict(),
        "checks": checks,
        "options": {"seed": _resolve_seed(options, cli_seed)},
    }


def _run_verify(resolved: dict, threads: int):
    seed = resolved["options"]["seed"]
    checks = resolved["checks"]
    if resolved["model_type"] == "markov":
        model = mk.MarkovModel.from_dict(resolved["model"])
        diag: dg.Diagnostics = dg.MarkovDiagnostics(model)
    else:
        gmodel = g.GaussianModel.from_dict(resolved["model"])
        diag = dg.GaussianDiagnostics(gmodel)

    report: dict = {}
    ok_flags: dict = {}
    csv_rows: list[tuple] = [("check", "param", "n", "value", "stderr")]

    if "assumption1" in checks:
        c = checks["assumption1"]
        rep = dg.assumption1_scan(
            diag,
            diag.theta,
            c["n_grid"],
            mode=c["mode"],
            n_samples=int(c["samples"]),
            seed=seed,
            tol=c["tol"],
            threads=threads,
        )
        report["assumption1"] = rep.to_dict()
        ok_flags["assumption1"] = rep.converged
        for row in rep.csv_rows()[1:]:
            csv_rows.append(("assumption1", "", *row))

    if "phi_sweep" in checks:
        c = checks["phi_sweep"]
        rep = dg.phi_sweep(
            diag,
            diag.theta,
            c["factors"],
            c["n_grid"],
            flat_tol=c["flat_tol"],
            expect=c["expect"] or None,
        )
        report["phi_sweep"] = rep.to_dict()
        ok_flags["phi_sweep"] = rep.passed
        for t in rep.trends:
            for n, v in zip(rep.n_grid, t.values):
                csv_rows.append(("phi_sweep", t.factor, n, v, ""))

    if "martingale" in checks:
        c = checks["martingale"]
        residuals = dg.martingale_mc_test(
            diag, int(c["k_max"]), n_samples=int(c["samples"]), seed=seed, threads=threads
        )
        ok = all(r.within(0.0, 4.0) for r in residuals)
        entry = {
            "k": list(range(1, int(c["k_max"]) + 1)),
            "means": [r.mean for r in residuals],
            "stderrs": [r.stderr for r in residuals],
            "ok": ok,
        }
        if isinstance(diag, dg.MarkovDiagnostics):
            res = [
                abs(mk.one_step_martingale_identity(model, diag.tilt, s))
                for s in model.states
            ]
            entry["identity_residual_max"] = max(res)
            ok = ok and max(res) <= c["identity_tol"]
            entry["ok"] = ok
        report["martingale"] = entry
        ok_flags["martingale"] = ok
        for k, r in zip(entry["k"], residuals):
            csv_rows.append(("martingale", k, "", r.mean, r.stderr))

    if "assumption2" in checks:
        c = checks["assumption2"]
        rep = dg.assumption2_convergence(
            model, diag.tilt, int(c["k"]), [tuple(mn) for mn in c["mn_grid"]], tol=c["tol"]
        )
        report["assumption2"] = rep.to_dict()
        ok_flags["assumption2"] = rep.passed
        for (m, n), e in zip(rep.mn_grid, rep.max_errors):
            csv_rows.append(("assumption2", f"m={m}", n, e, ""))

    if "normalization" in checks:
        c = checks["normalization"]
        errs = []
        for k in c["ks"]:
            coeffs = g.conditional_tilt_coeffs(gmodel, int(k))
            mass = g.tilt_density_normalization(gmodel, coeffs)
            errs.append(abs(mass - diag.q))
            csv_rows.append(("normalization", k, "", mass, ""))
        ok = max(errs) <= c["tol"]
        report["normalization"] = {"ks": c["ks"], "errors": errs, "ok": ok}
        ok_flags["normalization"] = ok

    passed = all(ok_flags.values())
    report["passed"] = passed
    report["failed_checks"] = sorted(name for name, f in ok_flags.items() if not f)
    return report, csv_rows, passed


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

_COMMANDS = {
    ("markov", "solve"): (_resolve_markov_solve, _run_markov_solve),
    ("markov", "associate"): (_resolve_markov_associate, _run_markov_associate),
    ("markov", "verify"): (
        lambda raw, cli_seed: _resolve_verify(raw, cli_seed, forced_type="markov"),
        _run_verify,
    ),
    ("gauss", "solve"): (_resolve_gauss_solve, _run_gauss_solve),
    ("gauss", "verify"): (
        lambda raw, cli_seed: _resolve_verify(raw, cli_seed, forced_type="gaussian"),
        _run_verify,
    ),
    ("queue", "run"): (_resolve_queue_run, _run_queue_run),
    ("verify", "run"): (
        lambda raw, cli_seed: _resolve_verify(raw, cli_seed),
        _run_verify,
    ),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiltedwalk",
        description="Tilted random walks: solve, associate, verify, simulate.",
    )
    groups = {
        "markov": ["solve", "associate", "verify"],
        "gauss": ["solve", "verify"],
        "queue": ["run"],
        "verify": ["run"],
    }
    sub = parser.add_subparsers(dest="group", required=True)
    for group, actions in groups.items():
        gp = sub.add_parser(group)
        gsub = gp.add_subparsers(dest="action", required=True)
        for action in actions:
            ap = gsub.add_parser(action)
            ap.add_argument("--config", required=True, help="JSON config path")
            ap.add_argument("--seed", type=int, help="override the config seed")
            ap.add_argument("--out", help="also write the JSON envelope here")
            ap.add_argument("--csv", help="write plot data here (where available)")
            ap.add_argument("--threads", type=int, default=1)
            if group == "queue":
                ap.add_argument("--waits-csv", help="dump the simulated waits here")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 1
    resolve, run = _COMMANDS[(args.group, args.action)]
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        resolved = resolve(raw, args.seed)
        if args.group == "queue":
            result, csv_rows, passed = run(resolved, args.threads, args.waits_csv)
        else:
            result, csv_rows, passed = run(resolved, args.threads)
    except (ConfigError, ModelError, ValueError, TypeError, KeyError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    envelope = {
        "command": f"{args.group} {args.action}",
        "config": resolved,
        "result": result,
    }
    text = json.dumps(envelope, indent=2, sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    if args.csv and csv_rows is not None:
        with open(args.csv, "w", newline="") as fh:
            csv_mod.writer(fh).writerows(csv_rows)
    if passed is False:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
