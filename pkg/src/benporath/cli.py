"""Command-line entry point: ``benporath {solve,figures,simulate,estimate,sweep}``.

Every command resolves its configuration (file values, then flag
overrides), writes its outputs to a staging directory and moves them into
``--out`` only on success, together with ``run_manifest.json`` (resolved
configuration, seed and SHA-256 of every artifact). Passing that manifest
back via ``--manifest`` reproduces the outputs byte for byte.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import cohort as cs
from . import estimators as est
from . import figures as fig
from . import lifecycle as lc
from .config import RunConfig, load_raw, resolve
from .exceptions import BenPorathError, EmptyPanel
from .lifehist import read_panel_csv

logger = logging.getLogger("benporath")

OUT_ENV = "BENPORATH_OUT_DIR"
MANIFEST = "run_manifest.json"
COMMANDS = ("solve", "figures", "simulate", "estimate", "sweep")


def fmt(v) -> str:
    return f"{v:.10g}"


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    floats = frame.select_dtypes("float").columns
    frame = frame.assign(**{c: frame[c] + 0.0 for c in floats})  # no "-0" cells
    frame.to_csv(path, index=False, float_format="%.10g", encoding="utf-8", lineterminator="\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --- commands ----------------------------------------------------------------

def _plan_row(label, plan: lc.LifeCyclePlan) -> dict:
    return {"solution": label, "s": plan.s, "R": plan.R, "c": plan.c, "V": plan.V}


def cmd_solve(cfg: RunConfig, stage: Path) -> list[str]:
    prefs, tech = cfg.preferences.build(), cfg.technology.build()
    shock = cfg.shock.build()
    base = lc.solve_ex_ante(prefs, tech)
    rows = [_plan_row("baseline", base)]
    report = [f"baseline   s={fmt(base.s)} R={fmt(base.R)} c={fmt(base.c)} V={fmt(base.V)}"]
    if shock is not None:
        if not cfg.shock.fix_schooling:
            ante = lc.solve_ex_ante(prefs, tech, shock)
            rows.append(_plan_row("ex_ante", ante))
            report.append(f"ex_ante    s={fmt(ante.s)} R={fmt(ante.R)} c={fmt(ante.c)} V={fmt(ante.V)}")
        post = lc.solve_ex_post(prefs, tech, shock, base.s)
        rows.append(_plan_row("ex_post", post))
        report.append(f"ex_post    s={fmt(post.s)} R={fmt(post.R)} c={fmt(post.c)} V={fmt(post.V)}")
        report.append(f"R change (ex_post - baseline) = {fmt(post.R - base.R)}")
    write_csv(pd.DataFrame(rows), stage / "solution.csv")
    print("\n".join(report))
    return ["solution.csv"]


def cmd_figures(cfg: RunConfig, stage: Path) -> list[str]:
    prefs, tech = cfg.preferences.build(), cfg.technology.build()
    fc = cfg.figures
    frames = fig.figure_d1(prefs, tech, np.linspace(fc.s_min, fc.s_max, fc.n_s))
    written = []
    for panel in ("a", "b", "c", "d"):
        name = f"fig_d1{panel}.csv"
        write_csv(frames[panel], stage / name)
        written.append(name)
    write_csv(frames["points"], stage / "fig_d1_points.csv")
    written.append("fig_d1_points.csv")
    d2 = fig.figure_d2(prefs, lc.Technology.linear(fc.d2_theta_slope, tech.disutility_scale),
                       fc.d2_displaced_scale, fc.d2_ages,
                       np.linspace(fc.d2_R_min, fc.d2_R_max, fc.d2_n_R))
    write_csv(d2, stage / "fig_d2.csv")
    written.append("fig_d2.csv")
    print(f"wrote {len(written)} figure files")
    return written


def cmd_simulate(cfg: RunConfig, stage: Path) -> list[str]:
    prefs, tech = cfg.preferences.build(), cfg.technology.build()
    config = cfg.cohort.build(cfg.seed)
    agents = cs.simulate_cohort(config, prefs, tech, workers=_workers(cfg))
    panel = cs.to_panel(agents)
    cs.write_panel_csv(panel, stage / "panel.csv")
    write_csv(cs.lifecycle_profile(panel), stage / "profile.csv")
    print(f"simulated {len(agents)} agents, {len(panel)} panel rows")
    return ["panel.csv", "profile.csv"]


def cmd_estimate(cfg: RunConfig, stage: Path) -> list[str]:
    ec = cfg.estimate
    if ec.panel is None:
        raise BenPorathError("estimate needs a panel file (estimate.panel or --panel)")
    panel = read_panel_csv(ec.panel, error_cap=ec.error_cap)
    if panel.empty:
        raise EmptyPanel("panel has no rows")
    payload = {"method": ec.method, "panel_rows": int(len(panel)), "rejected_rows": panel.attrs.get("errors", [])}
    written = ["results.csv", "results.json"]
    if ec.method == "event_study":
        ages = range(ec.ages[0], ec.ages[1] + 1) if ec.ages else None
        res = est.event_study(panel, ec.treatment, ages, ec.controls, outcome=ec.outcome or "employed")
        table = res.coefficients.assign(term=[f"{ec.treatment}_x_age{a}" for a in res.coefficients["age"]])
        table = table.loc[:, ["term", "estimate", "se", "ci_lo", "ci_hi"]]
        payload.update(coefficients=res.coefficients.to_dict(orient="list"), dropped=res.dropped,
                       n_obs=res.regression.n_obs)
    elif ec.method == "did_immediate":
        res = est.did_immediate(panel, ec.treatment, ec.pre_year, ec.post_year,
                                outcome=ec.outcome or "exited_employment")
        table = _did_table("did", res)
        payload.update(res.to_dict())
    elif ec.method == "did_total":
        by_cohort = est.did_total_by_cohort(panel, ec.treatment, pre_year=ec.pre_year,
                                            post_start=ec.post_year, retirement_age=ec.retirement_age,
                                            outcome=ec.outcome or "exited_employment")
        write_csv(by_cohort, stage / "did_total.csv")
        written.append("did_total.csv")
        est_ = by_cohort["total_effect_years"].to_numpy()
        se = by_cohort["total_effect_se"].to_numpy()
        table = pd.DataFrame({"term": [f"total_{b}" for b in by_cohort["birth_year"]], "estimate": est_,
                              "se": se, "ci_lo": est_ - est.Z_95 * se, "ci_hi": est_ + est.Z_95 * se})
        payload.update(cohorts=by_cohort.to_dict(orient="list"))
    elif ec.method == "balance":
        agents = panel.groupby("id", sort=True).first().reset_index()
        res = est.balance_table(agents, ec.treatment, ec.covariates)
        table = res.to_frame()
        payload.update(res.to_dict())
    else:
        agents = panel.groupby("id", sort=True).first().reset_index()
        corr = est.correlation_matrix(agents, ec.columns)
        table = corr.reset_index().rename(columns={"index": "term"})
        payload.update(correlation=corr.to_dict())
    write_csv(table, stage / "results.csv")
    est.write_results_json(_clean(payload), stage / "results.json")
    print(table.to_string(index=False, float_format=fmt))
    return written


def _did_table(term: str, res: est.DiDResult) -> pd.DataFrame:
    b, s = res.immediate_effect, res.se
    return pd.DataFrame({"term": [term], "estimate": [b], "se": [s],
                         "ci_lo": [b - est.Z_95 * s], "ci_hi": [b + est.Z_95 * s]})


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(fmt(v)) if math.isfinite(v) else None
    return obj


def _sweep_point(args) -> dict:
    prefs, tech, shock_kind, parameter, value, base_s = args
    fields = {"kappa": "kappa", "x": "x", "lambda": "lam", "delta": "delta", "d": "d",
              "theta_scale": "theta_scale"}
    cls = {"injury": lc.Injury, "captivity": lc.Captivity, "displacement": lc.Displacement}[shock_kind]
    shock = cls(**{fields[parameter]: value})
    row = {"parameter": parameter, "value": value}
    try:
        ante = lc.solve_ex_ante(prefs, tech, shock)
        row.update(s_ex_ante=ante.s, R_ex_ante=ante.R)
    except BenPorathError:
        row.update(s_ex_ante=np.nan, R_ex_ante=np.nan)
    post = lc.solve_ex_post(prefs, tech, shock, base_s)
    row.update(s_ex_post=post.s, R_ex_post=post.R, c_ex_post=post.c, V_ex_post=post.V)
    return row


def cmd_sweep(cfg: RunConfig, stage: Path) -> list[str]:
    prefs, tech = cfg.preferences.build(), cfg.technology.build()
    sw = cfg.sweep
    base = lc.solve_ex_ante(prefs, tech)
    tasks = [(prefs, tech, sw.shock, sw.parameter, v, base.s) for v in sw.values]
    workers = _workers(cfg)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))  # map keeps input order
    else:
        rows = [_sweep_point(t) for t in tasks]
    frame = pd.DataFrame(rows)
    write_csv(frame, stage / "sweep.csv")
    print(frame.to_string(index=False, float_format=fmt))
    return ["sweep.csv"]


HANDLERS = {"solve": cmd_solve, "figures": cmd_figures, "simulate": cmd_simulate,
            "estimate": cmd_estimate, "sweep": cmd_sweep}


def _workers(cfg: RunConfig) -> int:
    return cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)


# --- plumbing ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML config (or a run manifest JSON)")
    common.add_argument("--manifest", type=Path, help="rerun from a run manifest")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--workers", type=int)
    common.add_argument("--shock", choices=["injury", "captivity", "displacement"])
    common.add_argument("--kappa", type=float)
    common.add_argument("--x", type=float)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--d", type=float)
    common.add_argument("--fix-schooling", action="store_true", default=None)
    common.add_argument("--n-agents", type=int)
    common.add_argument("--panel", type=str)
    common.add_argument("--method", type=str)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="benporath", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _overrides(args) -> dict:
    return {
        "seed": args.seed, "workers": args.workers,
        "shock.kind": args.shock, "shock.kappa": args.kappa, "shock.x": args.x,
        "shock.lambda": args.lam, "shock.delta": args.delta, "shock.d": args.d,
        "shock.fix_schooling": args.fix_schooling,
        "cohort.n_agents": args.n_agents,
        "estimate.panel": args.panel, "estimate.method": args.method,
    }


def run(command: str, cfg: RunConfig, out: Path) -> dict:
    """Execute ``command`` and publish its outputs plus manifest into ``out``."""
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out.parent))
    try:
        names = HANDLERS[command](cfg, stage)
        manifest = {
            "command": command,
            "version": __version__,
            "seed": cfg.seed,
            "config": cfg.model_dump(mode="json", by_alias=True),
            "artifacts": {n: _sha256(stage / n) for n in sorted(names)},
        }
        (stage / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        out.mkdir(parents=True, exist_ok=True)
        for n in [*names, MANIFEST]:
            os.replace(stage / n, out / n)
        return manifest
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = None
        if args.manifest is not None:
            manifest = json.loads(args.manifest.read_text(encoding="utf-8"))
            if manifest.get("command") != args.command:
                raise BenPorathError(
                    f"manifest was written by '{manifest.get('command')}', not '{args.command}'")
            raw = manifest["config"]
        elif args.config is not None:
            raw = load_raw(args.config)
        cfg = resolve(raw, _overrides(args))
        out = args.out or (Path(cfg.out) if cfg.out else Path(os.environ.get(OUT_ENV, "out")))
        run(args.command, cfg, out)
    except (BenPorathError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
