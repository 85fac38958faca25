"""Build the recorded oracle fixtures for the scalarized cross-validation.

For each pinned (geometry, weights, seed) instance the brute-force grid search
is run for both the full-duplex and half-duplex problems, the solvers are run
once for comparison, and the triple (seed, config, oracle values) is frozen
into src/fdccrn/data/oracle_fixtures.json.

Usage: python3 scripts/make_oracle_fixtures.py [--out PATH]
"""

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fdccrn import benchmarks, oracle, rates, sca  # noqa: E402
from fdccrn.system import (  # noqa: E402
    Geometry,
    SystemConfig,
    config_to_dict,
    db_to_linear,
    dbm_to_watt,
    generate_channels,
)

NOISE = dbm_to_watt(-110) + dbm_to_watt(-70)


def scalar_cfg(pt, pr, sr, eap, **kw):
    base = dict(
        K=1,
        N=1,
        M=1,
        nT=(1,),
        nR=(1,),
        Pp=dbm_to_watt(10),
        P0=dbm_to_watt(20),
        sigma_na2=dbm_to_watt(-110),
        sigma_nc2=dbm_to_watt(-70),
        sigma_eap2=NOISE,
        sigma_pr2=NOISE,
        sigma_sr2=NOISE,
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
        geometry=Geometry(pt=pt, st=(0.0, 0.0), pr=pr, sr=sr, eaps=(eap,)),
        rho_step=0.05,
    )
    base.update(kw)
    return SystemConfig(**base)


INSTANCES = [
    ("near-eap", scalar_cfg((-5.0, 0.0), (6.0, 0.0), (0.0, 6.0), (3.0, 0.0)), 7),
    ("far-eap", scalar_cfg((-8.0, 0.0), (7.0, 0.0), (0.0, 5.0), (6.0, 2.0)), 1),
    ("strong-pt", scalar_cfg((-3.0, 0.0), (8.0, 0.0), (0.0, 8.0), (5.0, 0.0)), 2),
    ("secondary-weighted", scalar_cfg((-6.0, 0.0), (6.0, 0.0), (0.0, 4.0), (2.0, 2.0), c1=0.1, c2=1.9), 3),
    ("primary-weighted", scalar_cfg((-6.0, 0.0), (5.0, 0.0), (0.0, 7.0), (4.0, -1.0), c1=1.9, c2=0.1), 4),
    ("tight-budget", scalar_cfg((-5.0, 0.0), (6.0, 0.0), (0.0, 6.0), (3.0, 0.0), cost_budget=0.01), 5),
    ("pricey-wit", scalar_cfg((-5.0, 0.0), (7.0, 0.0), (0.0, 6.0), (3.0, 1.0), c4=10.0), 6),
    ("cheap-wpt", scalar_cfg((-7.0, 0.0), (6.0, 0.0), (0.0, 6.0), (2.0, 0.0), c3=0.1, c4=10.0), 8),
    ("li-heavy", scalar_cfg((-5.0, 0.0), (6.0, 0.0), (0.0, 6.0), (2.5, 0.0), theta2=db_to_linear(-30)), 9),
    ("low-power", scalar_cfg((-5.0, 0.0), (5.0, 0.0), (0.0, 5.0), (3.0, 0.0), Pp=dbm_to_watt(0), P0=dbm_to_watt(10)), 10),
]

FD_SPEC = oracle.GridSpec(rho_steps=21, x_steps=17, v_steps=17, phase_steps=17, q_steps=13, w_steps=13)
HD_SPEC = oracle.GridSpec(rho_steps=21, x_steps=41, q_steps=41, w_steps=41)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "src/fdccrn/data/oracle_fixtures.json"))
    args = ap.parse_args()
    fixtures = []
    for name, cfg, seed in INSTANCES:
        ch = generate_channels(cfg, seed)
        C = rates.resolve_cost_budget(ch, cfg)
        t0 = time.time()
        fd = oracle.grid_search(ch, cfg, FD_SPEC, scheme="fd", cost_budget=C)
        hd = oracle.grid_search(ch, cfg, HD_SPEC, scheme="hd", cost_budget=C)
        res = sca.algorithm1(ch, cfg, cost_budget=C)
        hds = benchmarks.solve_hd(ch, cfg, cost_budget=C)
        rel_fd = abs(res.objective - fd.objective) / max(fd.objective, 1e-12)
        rel_hd = abs(hds.objective - hd.objective) / max(hd.objective, 1e-12)
        print(
            f"{name:20s} oracle fd {fd.objective:9.5f} sca {res.objective:9.5f} rel {rel_fd:7.4f} | "
            f"oracle hd {hd.objective:9.5f} solver {hds.objective:9.5f} rel {rel_hd:7.4f}  ({time.time()-t0:.0f}s)"
        )
        fixtures.append(
            {
                "name": name,
                "seed": seed,
                "config": config_to_dict(cfg),
                "fd_oracle": fd.objective,
                "hd_oracle": hd.objective,
                "fd_grid": FD_SPEC.__dict__,
                "hd_grid": HD_SPEC.__dict__,
            }
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixtures, indent=2) + "\n")
    print(f"wrote {out} ({len(fixtures)} fixtures)")


if __name__ == "__main__":
    main()
