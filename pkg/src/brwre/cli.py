"""Command-line entry point: ``brwre <command> [--config FILE] [--set key=value ...]``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import classify
from .config import build_env, build_step, config_hash, load_config
from .environment import EnvSequence, sample_env_seq
from .errors import BRWREError, CapacityError, ConfigError, Inconclusive
from .estimators import (
    Estimate,
    diagnostic_sqrt_decay,
    estimate_class1,
    estimate_class3,
    estimate_naive,
    estimate_quenched_spine,
    estimate_spine,
    estimate_r_drift,
    fit_rate,
    naive_samples,
)
from .forest import Caps
from .oracle import annealed_hit_prob_small, oracle_curve, quenched_hit_prob
from .spine import SubtreeCaps, sample_coupling_run

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAPACITY, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4
COMMANDS = ("classify", "oracle", "simulate", "spine", "estimate", "fit", "report", "selftest")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])


def _versions() -> dict:
    import joblib
    import numba
    import scipy
    import sklearn

    return {"brwre": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "joblib": joblib.__version__,
            "scikit-learn": sklearn.__version__}


def _env_seq(model, seed: int) -> EnvSequence:
    return sample_env_seq(model, 1, 1, seed)


# ---------------------------------------------------------------------------
# commands; each returns (summary dict, exit code)


def cmd_classify(cfg, out: Path, workers: int):
    report = classify(build_env(cfg), build_step(cfg), cfg["classify"]["table_points"])
    (out / "classification.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(report.table())
    return {"class_label": report.class_label}, EXIT_OK


def cmd_oracle(cfg, out: Path, workers: int):
    model, step, oc = build_env(cfg), build_step(cfg), cfg["oracle"]
    rows = []
    for x in oc["xs"]:
        if oc["mode"] == "quenched":
            r = quenched_hit_prob(_env_seq(model, oc["env_seed"]), step, x, oc["T"])
        else:
            r = annealed_hit_prob_small(model, step, x, oc["T"], oc["mode"], oc["n_env"], seed=oc["env_seed"])
        rows.append({"x": x, "T": r.horizon, "value": r.value, "error_bound": r.error_bound})
    write_csv(out / "oracle.csv", ["x", "T", "value", "error_bound"], rows)
    return {"rows": len(rows)}, EXIT_OK


def cmd_simulate(cfg, out: Path, workers: int):
    model, step, sc = build_env(cfg), build_step(cfg), cfg["simulate"]
    target = model if sc["env_seed"] is None else _env_seq(model, sc["env_seed"])
    caps = Caps(sc["max_gen"], sc["max_particles"])
    M, ext, status = naive_samples(target, step, 0, sc["n"], cfg["seed"], caps, workers, stop_at_x=False)
    rows = [{"replicate": i, "M": int(m), "extinct_at": int(e) if e >= 0 else None, "truncated": int(s != 0)}
            for i, (m, e, s) in enumerate(zip(M, ext, status))]
    write_csv(out / "simulate.csv", ["replicate", "M", "extinct_at", "truncated"], rows)
    summary = {
        "n": int(sc["n"]), "mean_M": float(M.mean()), "max_M": int(M.max()),
        "extinct_fraction": float((ext >= 0).mean()), "truncated_fraction": float((status != 0).mean()),
    }
    (out / "simulate_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary, EXIT_OK


def _run_seed(seed: int, x: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, x, i]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def _spine_row(model, step, x, measure, rho, lam, caps, seed, env_seed):
    seq = _env_seq(model, env_seed) if measure == "forward_quenched" else None
    run = sample_coupling_run(model, step, x, measure, rho=rho, caps=caps, seed=seed, lam=lam, seq=seq)
    return {"x": x, "measure": measure, "T_x": run.T_x, "R_x": run.R_x, "B_x": run.B_x,
            "truncated_subtrees": run.truncated_subtrees}


def cmd_spine(cfg, out: Path, workers: int):
    from joblib import Parallel, delayed

    model, step, sc = build_env(cfg), build_step(cfg), cfg["spine"]
    caps = SubtreeCaps(max_gen=sc["max_gen"])
    jobs = [(model, step, x, sc["measure"], sc["rho"], sc["lam"], caps, _run_seed(cfg["seed"], x, i), sc["env_seed"])
            for x in sc["xs"] for i in range(sc["n"])]
    if workers > 1:
        rows = Parallel(n_jobs=workers, backend="loky", batch_size=64)(delayed(_spine_row)(*j) for j in jobs)
    else:
        rows = [_spine_row(*j) for j in jobs]
    write_csv(out / "spine.csv", ["x", "measure", "T_x", "R_x", "B_x", "truncated_subtrees"], rows)
    return {"runs": len(rows)}, EXIT_OK


def _estimate(model, step, scheme, x, n, seed, ec, workers) -> Estimate:
    caps = SubtreeCaps(max_gen=ec["max_gen"])
    if scheme == "naive":
        return estimate_naive(model, step, x, n, seed, workers=workers)
    if scheme == "spine":
        lam = ec["lam"] if ec["lam"] is not None else classify(model, step, 2).lambda1
        if lam is None:
            raise ConfigError("spine scheme needs estimate.lam when lambda_1 is undefined")
        return estimate_spine(model, step, x, lam, n, seed, caps, workers)
    if scheme == "class1":
        return estimate_class1(model, step, x, n, seed, caps, workers)
    if scheme == "class3":
        return estimate_class3(model, step, x, n, seed, ec["rho"], caps, workers)
    if scheme == "quenched_spine":
        lam = ec["lam"] if ec["lam"] is not None else classify(model, step, 2).lambda0
        return estimate_quenched_spine(_env_seq(model, ec["env_seed"]), step, x, lam, n, seed, caps, workers)
    raise ConfigError(f"unknown scheme {scheme!r}")


ESTIMATE_HEADER = ["x", "scheme", "n", "mean", "stderr", "ci_lo", "ci_hi", "truncated_fraction", "seed"]


def cmd_estimate(cfg, out: Path, workers: int):
    model, step, ec = build_env(cfg), build_step(cfg), cfg["estimate"]
    rows = []
    for scheme in ec["schemes"]:
        for x in ec["xs"]:
            e = _estimate(model, step, scheme, x, ec["n"], cfg["seed"], ec, workers)
            rows.append(e.to_row())
    write_csv(out / "estimates.csv", ESTIMATE_HEADER, rows)
    return {"rows": len(rows)}, EXIT_OK


def cmd_fit(cfg, out: Path, workers: int):
    fc = cfg["fit"]
    if fc["source"] == "csv":
        if "csv" not in fc:
            raise ConfigError("fit.source=csv needs fit.csv")
        with open(fc["csv"], newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if "scheme" not in fc or r["scheme"] == fc["scheme"]]
        pairs = [(int(r["x"]), float(r["mean"])) for r in rows]
    else:
        curve = oracle_curve(_env_seq(build_env(cfg), fc["env_seed"]), build_step(cfg), fc["xs"], fc["rel_bound"])
        pairs = [(x, r.value) for x, r in curve]
    fit = fit_rate(pairs)
    write_csv(out / "fits.csv", ["lambda_hat", "beta_hat", "c", "residual"],
              [{"lambda_hat": fit.exp_rate, "beta_hat": fit.poly_power, "c": fit.intercept, "residual": fit.residual}])
    return {"lambda_hat": fit.exp_rate, "diff_rate": fit.diff_rate}, EXIT_OK


def cmd_report(cfg, out: Path, workers: int):
    """Rescaled tail values matching the predicted regime of the system."""
    model, step, rc = build_env(cfg), build_step(cfg), cfg["report"]
    report = classify(model, step)
    caps = SubtreeCaps(max_gen=rc["max_gen"])
    rows = []
    for x in rc["xs"]:
        if report.class_label == "III":
            e = estimate_class3(model, step, x, rc["n"], cfg["seed"], caps=caps, workers=workers)
            factor = 1.0
        else:
            e = estimate_class1(model, step, x, rc["n"], cfg["seed"], caps, workers)
            factor = math.sqrt(x) if report.class_label == "II" else 1.0
        rows.append({"x": x, "rescaled_value": factor * e.mean, "ci": factor * 1.96 * e.stderr})
    write_csv(out / "report.csv", ["x", "rescaled_value", "ci"], rows)
    return {"class_label": report.class_label}, EXIT_OK


def selftest_rows(n: int, seed: int, workers: int) -> list:
    """A fixed battery of small checks with known answers."""
    from .environment import make_env_model
    from .offspring import make_offspring_law
    from .steps import kappa, lambda_s_derivs, tilt_step
    from . import systems

    step, env_a = systems.fair_step(), systems.env_a()
    rows = []

    def check(name, value, reference, tol):
        rows.append({"check": name, "value": float(value), "reference": float(reference), "tolerance": float(tol),
                     "passed": int(abs(value - reference) <= tol)})

    rep = classify(env_a, step)
    check("lambda1_closed_form", rep.lambda1, math.acosh(1.0 / 0.9), 1e-10)
    check("lambda0_closed_form", rep.lambda0, kappa(step, -env_a.a), 1e-12)
    one = make_env_model([(1.0, make_offspring_law([(0, 0.4), (2, 0.6)]))], _check_subcritical=False)
    check("oracle_hand_value", quenched_hit_prob(sample_env_seq(one, 1, 1, 0), step, 1, 1).value, 0.45, 1e-12)
    ref = annealed_hit_prob_small(env_a, step, 2, 16)
    naive = estimate_naive(env_a, step, 2, n, seed, workers=workers)
    check("naive_vs_oracle", naive.mean, ref.value, 4 * naive.stderr + ref.survival_bound)
    spine = estimate_spine(env_a, step, 2, rep.lambda1, n, seed, workers=workers)
    check("spine_vs_oracle", spine.mean, ref.value, 4 * spine.stderr + ref.survival_bound)
    c1 = estimate_class1(env_a, step, 2, n, seed, workers=workers).as_probability()
    check("class1_vs_oracle", c1.mean, ref.value, 4 * c1.stderr + ref.survival_bound)
    drift = estimate_r_drift(env_a, step, n, seed, workers=workers)
    d1, _ = lambda_s_derivs(step, rep.lambda1)
    check("r_drift", drift.mean, rep.theta1 / d1, 4 * drift.stderr)
    curve = dict(diagnostic_sqrt_decay(None, None, n, 64, seed, mode="gaussian", workers=workers))
    exact = math.sqrt(64) * math.comb(128, 64) / 4.0**64
    se = math.sqrt(exact / math.sqrt(64) * (1 - exact / math.sqrt(64)) / n) * math.sqrt(64)
    check("gaussian_sqrt_decay", curve[64], exact, 4 * se)
    tilt = tilt_step(step, rep.lambda1)
    check("tilted_mean", tilt.mean, math.tanh(rep.lambda1), 1e-12)
    return rows


def cmd_selftest(cfg, out: Path, workers: int):
    rows = selftest_rows(cfg["selftest"]["n"], cfg["seed"], workers)
    write_csv(out / "selftest.csv", ["check", "value", "reference", "tolerance", "passed"], rows)
    failed = [r["check"] for r in rows if not r["passed"]]
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['check']}: {r['value']:.6g} vs {r['reference']:.6g}")
    return {"failed": failed}, EXIT_OK if not failed else EXIT_FAIL


HANDLERS = {
    "classify": cmd_classify, "oracle": cmd_oracle, "simulate": cmd_simulate, "spine": cmd_spine,
    "estimate": cmd_estimate, "fit": cmd_fit, "report": cmd_report, "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brwre", description="Tail of the maximal displacement of a BRWRE.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", "-c", help="JSON experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (dotted key, JSON value); repeatable")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", default="out", help="output directory")
    return p


def _fail(code: int, kind: str, exc: BaseException) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "reason": str(exc)}), file=sys.stderr)
    return code


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.workers is not None:
            overrides.append(f"workers={args.workers}")
        cfg = load_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary, code = HANDLERS[args.command](cfg, out, cfg["workers"])
        manifest = {
            "command": args.command, "config": cfg, "config_sha256": config_hash(cfg), "seed": cfg["seed"],
            "workers": cfg["workers"], "versions": _versions(), "summary": summary,
        }
        if "env" in cfg and "step" in cfg:
            manifest["classification"] = classify(build_env(cfg), build_step(cfg)).to_dict()
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
        return code
    except CapacityError as exc:
        return _fail(EXIT_CAPACITY, "capacity", exc)
    except Inconclusive as exc:
        return _fail(EXIT_INCONCLUSIVE, "inconclusive", exc)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except BRWREError as exc:
        return _fail(EXIT_FAIL, "error", exc)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
