"""Command-line entry point: scenario presets, Monte-Carlo sweeps, CSV output.

Subcommands:
  solve         run a scenario (preset name or JSON file) and write a CSV
  validate      check a scenario/config file
  list-presets  show the built-in presets
  oracle-check  compare the solvers against recorded brute-force results
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from multiprocessing import get_context

import numpy as np

from . import benchmarks, oracle, rates, sca, zf
from .system import (
    Geometry,
    Placement,
    SystemConfig,
    config_from_dict,
    config_to_dict,
    db_to_linear,
    dbm_to_watt,
    generate_channels,
    validate_config,
)

__all__ = ["Scenario", "run", "list_presets", "preset", "main", "CSV_COLUMNS"]

SWEEP_AXES = ("theta2_db", "cost_normalized", "c4_over_c3", "P0_dbm", "wit_distance", "K")
SCHEMES = ("proposed", "zf", "noncoop", "hd")

CSV_COLUMNS = [
    "scenario",
    "preset",
    "sweep_value",
    "trial",
    "seed",
    "scheme",
    "rho_opt",
    "branch",
    "r_pr",
    "r_sr",
    "weighted_sum",
    "harvested_w",
    "cost_spent",
    "sca_iterations",
    "newton_steps",
    "runtime_ms",
    "status",
]
_MEAN_COLS = ["rho_opt", "r_pr", "r_sr", "weighted_sum", "harvested_w", "cost_spent", "sca_iterations", "newton_steps", "runtime_ms"]


@dataclass(frozen=True)
class Scenario:
    """One sweep experiment: a base config, one sweep axis, trials, schemes."""

    name: str
    config: SystemConfig
    sweep_axis: str
    sweep_values: tuple[float, ...]
    trials: int = 50
    schemes: tuple[str, ...] = SCHEMES
    seed: int = 0
    preset: str = ""
    emit_traces: bool = False
    cold_start: bool = False  # disable anchor chaining (pure per-rho SCA)
    description: str = ""


def validate_scenario(sc: Scenario) -> list[str]:
    v = validate_config(sc.config)
    if sc.sweep_axis not in SWEEP_AXES:
        v.append(f"sweep axis must be one of {SWEEP_AXES}")
    if sc.trials < 1:
        v.append("trials >= 1")
    if len(sc.sweep_values) == 0:
        v.append("sweep needs at least one value")
    if any(not np.isfinite(x) for x in sc.sweep_values):
        v.append("sweep values must be finite")
    if list(sc.sweep_values) != sorted(sc.sweep_values):
        v.append("sweep values must be sorted")
    for s in sc.schemes:
        if s not in SCHEMES:
            v.append(f"unknown scheme {s!r}")
    for value in sc.sweep_values:
        v += validate_config(apply_sweep(sc.config, sc.sweep_axis, value))
    return v


def apply_sweep(cfg: SystemConfig, axis: str, value: float) -> SystemConfig:
    """Config with one sweep-axis value applied."""
    if axis == "theta2_db":
        return replace(cfg, theta2=db_to_linear(float(value)))
    if axis == "cost_normalized":
        return replace(cfg, cost_budget_mode="normalized", cost_budget=float(value))
    if axis == "c4_over_c3":
        return replace(cfg, c4=float(value) * cfg.c3)
    if axis == "P0_dbm":
        return replace(cfg, P0=dbm_to_watt(float(value)))
    if axis == "wit_distance":
        d = float(value)
        st = cfg.geometry.st
        geo = replace(cfg.geometry, pr=(st[0] + d, st[1]), sr=(st[0], st[1] + d))
        return replace(cfg, geometry=geo)
    if axis == "K":
        k = int(value)
        if not isinstance(cfg.geometry.eaps, Placement):
            raise ValueError("K sweeps need a placement recipe, not fixed positions")
        return replace(cfg, K=k, nT=(cfg.nT[0],) * k, nR=(cfg.nR[0],) * k)
    raise ValueError(f"unknown sweep axis {axis!r}")


# ---------------------------------------------------------------------------
# Presets mirroring the reference evaluation setups


def _default_config(**kw) -> SystemConfig:
    noise = dbm_to_watt(-110) + dbm_to_watt(-70)
    base = dict(
        K=3,
        N=2,
        M=2,
        nT=(2, 2, 2),
        nR=(2, 2, 2),
        Pp=dbm_to_watt(10),
        P0=dbm_to_watt(20),
        sigma_na2=dbm_to_watt(-110),
        sigma_nc2=dbm_to_watt(-70),
        sigma_eap2=noise,
        sigma_pr2=noise,
        sigma_sr2=noise,
        eta=0.5,
        theta2=db_to_linear(-60),
        c1=1.0,
        c2=1.0,
        c3=1.0,
        c4=1.0,
        cost_budget_mode="normalized",
        cost_budget=0.1,
        A0=db_to_linear(-30),
        alpha=2.5,
        d0=1.0,
        geometry=Geometry(pt=(-10.0, 0.0), st=(0.0, 0.0), pr=(10.0, 0.0), sr=(0.0, 10.0), eaps=Placement("disk", 10.0)),
        rho_step=0.05,
    )
    geo_kw = {k: kw.pop(k) for k in list(kw) if k in ("pt", "pr", "sr", "eaps")}
    base.update(kw)
    if geo_kw:
        base["geometry"] = replace(base["geometry"], **geo_kw)
    return SystemConfig(**base)


def _presets() -> dict[str, Scenario]:
    out: dict[str, Scenario] = {}

    out["fig3"] = Scenario(
        name="fig3",
        preset="fig3",
        config=_default_config(c2=10.0),
        sweep_axis="theta2_db",
        sweep_values=(-60.0,),
        emit_traces=True,
        cold_start=True,
        description="convergence traces at defaults with the secondary rate weighted 10x; "
        "per-iteration objectives are emitted for plotting",
    )
    fig5 = _default_config(pt=(-15.0, 0.0), c1=0.1, c2=1.9, c3=0.1, c4=10.0, eaps=Placement("disk", 5.0))
    theta_axis = (-80.0, -70.0, -60.0, -50.0, -40.0, -30.0, -20.0, -10.0)
    out["fig5a"] = Scenario(
        name="fig5a",
        preset="fig5a",
        config=replace(fig5, cost_budget=0.1),
        sweep_axis="theta2_db",
        sweep_values=theta_axis,
        description="sum rate versus residual LI level at 10% normalized cost",
    )
    out["fig5b"] = Scenario(
        name="fig5b",
        preset="fig5b",
        config=replace(fig5, cost_budget=0.01),
        sweep_axis="theta2_db",
        sweep_values=theta_axis,
        description="sum rate versus residual LI level at 1% normalized cost",
    )
    out["fig6"] = Scenario(
        name="fig6",
        preset="fig6",
        config=_default_config(K=2, nT=(2, 2), nR=(2, 2), N=6, c1=0.5, c2=1.5),
        sweep_axis="cost_normalized",
        sweep_values=(0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0),
        description="sum rate versus normalized cost budget (K=2, N=6)",
    )
    out["fig7"] = Scenario(
        name="fig7",
        preset="fig7",
        config=_default_config(Pp=dbm_to_watt(20), cost_budget_mode="absolute", cost_budget=3.0),
        sweep_axis="c4_over_c3",
        sweep_values=(0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0),
        description="sum rate versus WIT/WPT unit-price ratio at a constant total budget of 3",
    )
    out["fig8"] = Scenario(
        name="fig8",
        preset="fig8",
        config=_default_config(nT=(3, 3, 3), nR=(3, 3, 3)),
        sweep_axis="P0_dbm",
        sweep_values=(5.0, 10.0, 15.0, 20.0, 25.0, 30.0),
        description="sum rate versus per-EAP power budget with six antennas per EAP",
    )
    out["fig9"] = Scenario(
        name="fig9",
        preset="fig9",
        config=_default_config(nT=(3, 3, 3), nR=(3, 3, 3), c1=0.5, c2=1.5),
        sweep_axis="wit_distance",
        sweep_values=(5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0),
        description="sum rate versus the common ST-to-receiver distance",
    )
    out["fig10"] = Scenario(
        name="fig10",
        preset="fig10",
        config=_default_config(c1=0.5, c2=1.5, cost_budget_mode="absolute", cost_budget=4.0),
        sweep_axis="K",
        sweep_values=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0),
        description="sum rate versus the number of EAPs (positions nested per seed)",
    )
    ex_base = dict(N=4, theta2=db_to_linear(-40), c3=10.0, cost_budget=0.01, P0=dbm_to_watt(20))
    out["ex1"] = Scenario(
        name="ex1",
        preset="ex1",
        config=_default_config(
            K=2, nT=(2, 2), nR=(2, 2), pt=(-5.0, 0.0), eaps=((10.0, 0.0), (20.0, 0.0)), **ex_base
        ),
        sweep_axis="theta2_db",
        sweep_values=(-40.0,),
        trials=1,
        description="two EAPs on the PT-ST axis at 10 m and 20 m; the source caption lists "
        "both 23 dBm and an undefined second power named P_1=20 dBm, which this preset "
        "takes as the per-EAP budget (ambiguity recorded here)",
    )
    out["ex2"] = Scenario(
        name="ex2",
        preset="ex2",
        config=_default_config(K=3, nT=(2, 2, 2), nR=(2, 2, 2), eaps=Placement("ring", 10.0), **ex_base),
        sweep_axis="theta2_db",
        sweep_values=(-40.0,),
        trials=1,
        description="three EAPs evenly spaced on a 10 m circle (per-EAP budget as in ex1)",
    )
    out["ex3"] = Scenario(
        name="ex3",
        preset="ex3",
        config=_default_config(
            K=5, nT=(1,) * 5, nR=(1,) * 5, sr=(0.0, 5.0), c1=0.1, c2=1.9, c4=100.0,
            cost_budget=0.001, eaps=Placement("ring", 5.0),
        ),
        sweep_axis="theta2_db",
        sweep_values=(-60.0,),
        trials=1,
        description="five single-antenna-pair EAPs on a 5 m circle, secondary-weighted "
        "objective under a 0.1% cost budget",
    )
    return out


def list_presets() -> list[tuple[str, str]]:
    return [(name, sc.description) for name, sc in _presets().items()]


def preset(name: str) -> Scenario:
    try:
        return _presets()[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(_presets())}") from None


# ---------------------------------------------------------------------------
# Scenario execution


def _run_single(sc: Scenario, value: float, trial: int, timing: bool):
    """All schemes for one (sweep value, trial); returns (rows, traces)."""
    cfg = apply_sweep(sc.config, sc.sweep_axis, value)
    seed = sc.seed + trial
    settings = sca.ScaSettings(chain=not sc.cold_start)
    ch = generate_channels(cfg, seed)
    C = rates.resolve_cost_budget(ch, cfg)
    rows = []
    traces = []
    for scheme in sc.schemes:
        base = {
            "scenario": sc.name,
            "preset": sc.preset,
            "sweep_value": value,
            "trial": trial,
            "seed": seed,
            "scheme": scheme,
        }
        t0 = time.perf_counter()
        try:
            if scheme == "proposed":
                res = sca.algorithm1(ch, cfg, settings=settings, cost_budget=C)
                rep, rho, branch = res.report, res.rho, res.report.branch
                iters, newton = res.sca_iterations, res.newton_steps
                trace = res.trace.objectives
            elif scheme == "zf":
                res = zf.algorithm2(ch, cfg, settings=settings, cost_budget=C)
                rep, rho, branch = res.report, res.rho, res.report.branch
                iters, newton = res.sca_iterations, res.newton_steps
                trace = res.trace.objectives
            elif scheme == "noncoop":
                nres = benchmarks.solve_noncooperative(ch, cfg, settings=settings, cost_budget=C)
                rep, rho, branch = nres.report, nres.dp.rho, nres.report.branch
                iters, newton = nres.reduced.sca_iterations, nres.reduced.newton_steps
                trace = nres.reduced.trace.objectives
            elif scheme == "hd":
                hres = benchmarks.solve_hd(ch, cfg, settings=settings, cost_budget=C)
                rep, rho, branch = hres.report, hres.rho, hres.report.branch
                iters, newton = hres.sca_iterations, hres.newton_steps
                trace = []
            ms = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
            rows.append(
                base
                | {
                    "rho_opt": rho,
                    "branch": branch,
                    "r_pr": rep.r_pr,
                    "r_sr": rep.r_sr,
                    "weighted_sum": rep.weighted_sum,
                    "harvested_w": rep.harvested_power,
                    "cost_spent": rep.cost_spent,
                    "sca_iterations": iters,
                    "newton_steps": newton,
                    "runtime_ms": ms,
                    "status": "ok",
                }
            )
            if sc.emit_traces and trace:
                for i, obj in enumerate(trace):
                    traces.append(base | {"iteration": i + 1, "objective": obj})
        except Exception as exc:  # pragma: no cover - per-run failures never abort sweeps
            ms = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
            rows.append(
                base
                | {
                    "rho_opt": "",
                    "branch": "",
                    "r_pr": "",
                    "r_sr": "",
                    "weighted_sum": "",
                    "harvested_w": "",
                    "cost_spent": "",
                    "sca_iterations": "",
                    "newton_steps": "",
                    "runtime_ms": ms,
                    "status": f"error:{type(exc).__name__}",
                }
            )
    return rows, traces


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


def _task(args):
    return _run_single(*args)


def run(sc: Scenario, workers: int = 1, timing: bool = False):
    """Execute a scenario; returns (rows, aggregate rows, trace rows).

    Every row is a dict of formatted strings; aggregates are arithmetic means
    of the formatted per-run values of successful rows, so they can be
    recomputed from the CSV alone.
    """
    bad = validate_scenario(sc)
    if bad:
        raise ValueError("invalid scenario: " + "; ".join(bad))
    tasks = [(sc, float(v), t, timing) for v in sc.sweep_values for t in range(sc.trials)]
    if workers > 1:
        with get_context("spawn").Pool(workers) as pool:
            results = pool.map(_task, tasks)
    else:
        results = [_task(t) for t in tasks]
    rows = [r for rs, _ in results for r in rs]
    traces = [t for _, ts in results for t in ts]

    scheme_order = {s: i for i, s in enumerate(SCHEMES)}
    value_order = {float(v): i for i, v in enumerate(sc.sweep_values)}
    rows.sort(key=lambda r: (value_order[float(r["sweep_value"])], r["trial"], scheme_order[r["scheme"]]))
    traces.sort(
        key=lambda r: (value_order[float(r["sweep_value"])], r["trial"], scheme_order[r["scheme"]], r["iteration"])
    )
    rows = [{k: _fmt(r[k]) for k in CSV_COLUMNS} for r in rows]

    aggregates = []
    for v in sc.sweep_values:
        for scheme in sc.schemes:
            sel = [r for r in rows if float(r["sweep_value"]) == float(v) and r["scheme"] == scheme]
            ok = [r for r in sel if r["status"] == "ok"]
            agg = {c: "" for c in CSV_COLUMNS}
            agg.update(
                scenario=sc.name,
                preset=sc.preset,
                sweep_value=_fmt(float(v)),
                trial="mean",
                seed="",
                scheme=scheme,
                branch="",
                status="ok" if len(ok) == len(sel) else f"ok:{len(ok)}/{len(sel)}",
            )
            for col in _MEAN_COLS:
                if ok:
                    agg[col] = _fmt(float(np.mean([float(r[col]) for r in ok])))
            aggregates.append(agg)
    trace_rows = [
        {
            "scenario": t["scenario"],
            "preset": t["preset"],
            "sweep_value": _fmt(t["sweep_value"]),
            "trial": str(t["trial"]),
            "seed": str(t["seed"]),
            "scheme": t["scheme"],
            "iteration": str(t["iteration"]),
            "objective": _fmt(t["objective"]),
        }
        for t in traces
    ]
    return rows, aggregates, trace_rows


def write_csv(path: str, rows, aggregates) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for r in rows + aggregates:
            f.write(",".join(r[c] for c in CSV_COLUMNS) + "\n")


TRACE_COLUMNS = ["scenario", "preset", "sweep_value", "trial", "seed", "scheme", "iteration", "objective"]


def write_traces_csv(path: str, trace_rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(TRACE_COLUMNS) + "\n")
        for r in trace_rows:
            f.write(",".join(r[c] for c in TRACE_COLUMNS) + "\n")


# ---------------------------------------------------------------------------
# Scenario files


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "config": config_to_dict(sc.config),
        "sweep": {"axis": sc.sweep_axis, "values": list(sc.sweep_values)},
        "trials": sc.trials,
        "schemes": list(sc.schemes),
        "seed": sc.seed,
        "emit_traces": sc.emit_traces,
        "cold_start": sc.cold_start,
        "description": sc.description,
    }


def scenario_from_dict(d: dict) -> Scenario:
    return Scenario(
        name=d["name"],
        config=config_from_dict(d["config"]),
        sweep_axis=d["sweep"]["axis"],
        sweep_values=tuple(float(x) for x in d["sweep"]["values"]),
        trials=int(d.get("trials", 50)),
        schemes=tuple(d.get("schemes", SCHEMES)),
        seed=int(d.get("seed", 0)),
        preset=d.get("preset", ""),
        emit_traces=bool(d.get("emit_traces", False)),
        cold_start=bool(d.get("cold_start", False)),
        description=d.get("description", ""),
    )


def load_scenario(path: str) -> Scenario:
    with open(path) as f:
        return scenario_from_dict(json.load(f))


# ---------------------------------------------------------------------------
# Oracle fixtures


def default_fixtures_path():
    return resources.files("fdccrn").joinpath("data/oracle_fixtures.json")


def oracle_check(fixtures_path=None, rel_tol: float = 0.02, out=sys.stdout) -> bool:
    """Re-run the solvers on recorded scalarized instances and compare against
    the stored brute-force objectives; returns True when all pass."""
    if fixtures_path is None:
        text = default_fixtures_path().read_text()
    else:
        with open(fixtures_path) as f:
            text = f.read()
    fixtures = json.loads(text)
    all_ok = True
    for fx in fixtures:
        cfg = config_from_dict(fx["config"])
        ch = generate_channels(cfg, fx["seed"])
        C = rates.resolve_cost_budget(ch, cfg)
        res = sca.algorithm1(ch, cfg, cost_budget=C)
        hd = benchmarks.solve_hd(ch, cfg, cost_budget=C)
        for label, got, want in (
            ("fd", res.objective, fx["fd_oracle"]),
            ("hd", hd.objective, fx["hd_oracle"]),
        ):
            rel = abs(got - want) / max(abs(want), 1e-12)
            ok = rel <= rel_tol
            all_ok &= ok
            print(
                f"[{'PASS' if ok else 'FAIL'}] {fx['name']} {label}: solver {got:.6f} "
                f"oracle {want:.6f} rel {rel:.4f}",
                file=out,
            )
    return all_ok


# ---------------------------------------------------------------------------
# argparse entry point


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fdccrn", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("solve", help="run a scenario and write a CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--preset", help="built-in preset name")
    p.add_argument("--trials", type=int, help="override trial count")
    p.add_argument("--seed", type=int, help="override base seed")
    p.add_argument("--schemes", help="comma-separated subset of " + ",".join(SCHEMES))
    p.add_argument("--out", default="results.csv", help="output CSV path")
    p.add_argument("--traces-out", help="per-iteration trace CSV (presets with traces enabled)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for trials")
    p.add_argument("--timing", action="store_true", help="record wall-clock runtimes (breaks byte determinism)")

    p = sub.add_parser("validate", help="validate a scenario file")
    p.add_argument("--scenario", required=True)

    sub.add_parser("list-presets", help="list built-in presets")

    p = sub.add_parser("oracle-check", help="compare solvers against recorded oracle fixtures")
    p.add_argument("--fixtures", help="fixtures JSON (defaults to the packaged file)")

    args = ap.parse_args(argv)

    if args.cmd == "list-presets":
        for name, desc in list_presets():
            print(f"{name:8s} {desc}")
        return 0

    if args.cmd == "validate":
        sc = load_scenario(args.scenario)
        bad = validate_scenario(sc)
        if bad:
            for b in bad:
                print(f"violation: {b}")
            return 1
        print("ok")
        return 0

    if args.cmd == "oracle-check":
        return 0 if oracle_check(args.fixtures) else 1

    sc = load_scenario(args.scenario) if args.scenario else preset(args.preset)
    if args.trials is not None:
        sc = dataclasses.replace(sc, trials=args.trials)
    if args.seed is not None:
        sc = dataclasses.replace(sc, seed=args.seed)
    if args.schemes:
        sc = dataclasses.replace(sc, schemes=tuple(args.schemes.split(",")))
    rows, aggregates, trace_rows = run(sc, workers=args.workers, timing=args.timing)
    write_csv(args.out, rows, aggregates)
    print(f"wrote {args.out} ({len(rows)} run rows, {len(aggregates)} aggregate rows)")
    if sc.emit_traces:
        tpath = args.traces_out or (args.out.rsplit(".", 1)[0] + ".traces.csv")
        write_traces_csv(tpath, trace_rows)
        print(f"wrote {tpath} ({len(trace_rows)} trace rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
