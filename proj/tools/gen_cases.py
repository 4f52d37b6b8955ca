#!/usr/bin/env python3
"""Writes the bundled case files in data/cases.

The 118-bus case is derived from the pypower copy of the IEEE 118-bus data
(pip install pypower). Everything else is written from literal values.
"""
import argparse
import json
import math
import pathlib

NOMINAL_GFOR = dict(x_vsc=0.15, r_vsc=0.005, c_vsc=0.15, r_tr=0.002, x_tr=0.1, tau_cc=0.001,
                  m_p=0.05, m_q=0.02, tau_vc=0.01, omega_p=50.0, omega_q=10.0)
NOMINAL_GFOL = dict(x_vsc=0.15, r_vsc=0.005, c_vsc=0.04, r_tr=0.002, x_tr=0.1, tau_cc=0.001,
                  m_p=20.0, m_q=50.0, tau_pll=0.1, tau_pq=0.2, omega_f=50.0, omega_u=50.0)

DEFAULT_ANALYSIS = {
    "f_min_hz": 0.15,
    "f_max_hz": 1000.0,
    "f_step_hz": 0.15,
    "ranges": [
        {"name": "Range 1", "f_lo_hz": 0.0, "f_hi_hz": 20.0},
        {"name": "Range 2", "f_lo_hz": 20.0, "f_hi_hz": 40.0},
        {"name": "Range 3", "f_lo_hz": 40.0, "f_hi_hz": 100.0},
        {"name": "Range 4", "f_lo_hz": 100.0, "f_hi_hz": 1000.0},
    ],
    "reference": {"scr": 15.0, "x_over_r": 10.0},
}


def converter(kind, s_base):
    params = dict(NOMINAL_GFOR if kind == "gfor" else NOMINAL_GFOL)
    return {"s_base": float(s_base), **params}


def base():
    return {"mva": 100.0, "kv": 230.0, "f_hz": 50.0}


def two_thevenin():
    # one bus fed by two Thevenin sources, |Z| = 0.05 and 0.5 pu, X/R = 10
    return {
        "name": "two_thevenin",
        "base": base(),
        "buses": [{"id": "1", "type": "slack", "v_set": 1.0}],
        "branches": [],
        "generators": [
            {"id": "strong", "bus": "1", "type": "vsbi", "params": {"s_base": 100.0, "scr": 20.0, "x_over_r": 10.0}},
            {"id": "weak", "bus": "1", "type": "vsbi", "params": {"s_base": 100.0, "scr": 2.0, "x_over_r": 10.0}},
        ],
        "analysis": DEFAULT_ANALYSIS,
    }


def single_converter(kind):
    # converter and an SCR-15 grid sharing the point of connection
    return {
        "name": f"single_converter_{kind}",
        "base": base(),
        "buses": [{"id": "poc", "type": "slack", "v_set": 1.0}],
        "branches": [],
        "generators": [
            {"id": "grid", "bus": "poc", "type": "vsbi", "params": {"s_base": 100.0, "scr": 15.0, "x_over_r": 10.0}},
            {"id": kind, "bus": "poc", "type": kind, "p": 0.5, "q": 0.0, "params": converter(kind, 100.0)},
        ],
        "analysis": DEFAULT_ANALYSIS,
    }


def ieee9():
    # WSCC 9-bus data renumbered so that the units sit at buses 1, 4 and 6:
    # WSCC 1->1, 2->4, 3->6, 4->2, 5->3, 6->8, 7->7, 8->5, 9->9.
    buses = [
        {"id": "1", "type": "slack", "v_set": 1.04},
        {"id": "2", "type": "pq"},
        {"id": "3", "type": "pq", "p_load": 1.25, "q_load": 0.5},
        {"id": "4", "type": "pv", "v_set": 1.025},
        {"id": "5", "type": "pq", "p_load": 1.0, "q_load": 0.35},
        {"id": "6", "type": "pv", "v_set": 1.025},
        {"id": "7", "type": "pq"},
        {"id": "8", "type": "pq", "p_load": 0.9, "q_load": 0.3},
        {"id": "9", "type": "pq"},
    ]
    branches = [
        ("t1-2", "transformer", "1", "2", 0.0, 0.0576, 0.0),
        ("t4-7", "transformer", "4", "7", 0.0, 0.0625, 0.0),
        ("t6-9", "transformer", "6", "9", 0.0, 0.0586, 0.0),
        ("l2-3", "line", "2", "3", 0.010, 0.085, 0.176),
        ("l2-8", "line", "2", "8", 0.017, 0.092, 0.158),
        ("l3-7", "line", "3", "7", 0.032, 0.161, 0.306),
        ("l8-9", "line", "8", "9", 0.039, 0.170, 0.358),
        ("l7-5", "line", "7", "5", 0.0085, 0.072, 0.149),
        ("l5-9", "line", "5", "9", 0.0119, 0.1008, 0.209),
    ]
    return {
        "name": "ieee9_modified",
        "base": base(),
        "buses": buses,
        "branches": [dict(id=i, kind=k, to=t, r=r, x=x, b=b, **{"from": f}) for i, k, f, t, r, x, b in branches],
        "generators": [
            {"id": "gfor1", "bus": "1", "type": "gfor", "params": converter("gfor", 310.0)},
            {"id": "gfol4", "bus": "4", "type": "gfol", "p": 1.63, "params": converter("gfol", 280.0)},
            {"id": "gfor6", "bus": "6", "type": "gfor", "p": 0.85, "params": converter("gfor", 260.0)},
        ],
        "analysis": DEFAULT_ANALYSIS,
    }


def ieee118(n_gfor=16, n_gfol=12):
    from pypower.case118 import case118

    c = case118()
    base_mva = float(c["baseMVA"])
    bus, branch, gen = c["bus"], c["branch"], c["gen"]
    slack = int(next(b[0] for b in bus if int(b[1]) == 3))

    # Keep the largest units as converters: the slack plus the biggest
    # remaining dispatches, grid forming first. Other units are dropped and
    # their buses become pq; the kept units are scaled to cover the load.
    units = sorted((g for g in gen if int(g[0]) != slack), key=lambda g: -g[1])
    kept = [next(g for g in gen if int(g[0]) == slack)] + units[: n_gfor + n_gfol - 1]
    kinds = {int(g[0]): ("gfor" if k < n_gfor else "gfol") for k, g in enumerate(kept)}
    total_load = float(sum(b[2] for b in bus))
    kept_p = float(sum(g[1] for g in kept[1:]))
    scale = 0.9 * total_load / kept_p

    buses = []
    for b in bus:
        bid = int(b[0])
        entry = {"id": str(bid), "type": "pq"}
        if bid == slack:
            entry["type"] = "slack"
        elif bid in kinds:
            entry["type"] = "pv"
        if entry["type"] != "pq":
            entry["v_set"] = float(next(g[5] for g in gen if int(g[0]) == bid))
        if b[2] or b[3]:
            entry["p_load"] = float(b[2]) / base_mva
            entry["q_load"] = float(b[3]) / base_mva
        if b[4] or b[5]:
            entry["g_shunt"] = float(b[4]) / base_mva
            entry["b_shunt"] = float(b[5]) / base_mva
        buses.append(entry)

    branches = []
    for k, br in enumerate(branch):
        f, t, r, x, b, ratio = int(br[0]), int(br[1]), float(br[2]), float(br[3]), float(br[4]), float(br[8])
        is_tr = ratio not in (0.0, 1.0) or b == 0.0
        branches.append({"id": f"br{k + 1}", "kind": "transformer" if is_tr else "line", "from": str(f),
                         "to": str(t), "r": r, "x": x, "b": 0.0 if is_tr else b})

    gens = []
    for g in kept:
        bid = int(g[0])
        p = 0.0 if bid == slack else float(g[1]) * scale / base_mva
        rating = max(100.0, 10.0 * math.ceil(1.5 * max(p * base_mva, float(g[8])) / 10.0))
        gens.append({"id": f"{kinds[bid]}{bid}", "bus": str(bid), "type": kinds[bid], "p": p,
                     "params": converter(kinds[bid], rating)})

    return {
        "name": "ieee118_modified",
        "base": {"mva": base_mva, "kv": 138.0, "f_hz": 50.0},
        "buses": buses,
        "branches": branches,
        "generators": gens,
        "analysis": DEFAULT_ANALYSIS,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "cases"))
    ap.add_argument("--skip-118", action="store_true", help="do not regenerate the 118-bus case")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cases = {
        "two_thevenin.json": two_thevenin(),
        "single_converter_gfol.json": single_converter("gfol"),
        "single_converter_gfor.json": single_converter("gfor"),
        "ieee9_modified.json": ieee9(),
    }
    if not args.skip_118:
        cases["ieee118_modified.json"] = ieee118()
    for name, case in cases.items():
        (out / name).write_text(json.dumps(case, indent=2) + "\n")
        print("wrote", out / name)


if __name__ == "__main__":
    main()
