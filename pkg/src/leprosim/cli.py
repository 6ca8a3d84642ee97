"""Config-driven command line front end.

Every command reads one YAML scenario file (plus repeatable --set
overrides), writes deterministic CSV/JSON artifacts into the output
directory together with a manifest recording the config hash, the seed
and the library versions.  The `repro` command bundles named reference
scenarios with built-in expected-value checks.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import (bifurcation_sweep, classify_stability,
                       critical_recruitment, disease_free_equilibrium,
                       doubling_heatmap, endemic_equilibrium, equilibria,
                       reproduction_number, write_bifurcation_csv,
                       write_heatmap_csv)
from .control import (COMPARISON_MASKS, MASKS, DrugMask, FbsSettings,
                      OptimalControlProblem, Weights, compare_combinations,
                      forward_backward_sweep, write_solve_csv,
                      write_solve_summary)
from .effectiveness import rank_combinations, write_ranking_csv
from .errors import ConfigError, DivergenceError, DomainError, EstimatorError
from .model import SimulationConfig, integrate, write_trajectory_csv
from .params import PRESETS, ParameterSet, preset
from .sensitivity import (ParameterRange, coefficient_series, default_ranges,
                          lhs_sample, r0_sensitivity, run_ensemble,
                          sobol_index, write_scatter_csv, write_series_csv,
                          write_sobol_csv)

_PARAM_KEYS = {"omega", "beta", "gamma", "mu1", "delta", "alpha", "mu2", "y",
               "cytokine_clearances"}

#: allowed keys per configuration block (None marks free-form values)
_SCHEMA = {
    "params": None,
    "out": None,
    "simulate": {"t0", "tf", "step", "initial"},
    "sweep": {"name", "lo", "hi", "step"},
    "heatmap": {"alpha", "gamma", "shape", "initial", "t_check", "step"},
    "sensitivity": {"ranges", "n", "seed", "bins", "probes", "params",
                    "outputs", "simulate"},
    "control": {"weights", "mask", "masks", "bounds", "initial", "horizon",
                "tau", "printed_forms", "fbs"},
    "effectiveness": {"bases", "hazard_ratios"},
}

_REQUIRED_BLOCK = {
    "simulate": "simulate",
    "equilibria": None,
    "stability": None,
    "bifurcate": "sweep",
    "heatmap": "heatmap",
    "sensitivity": "sensitivity",
    "optimize": "control",
    "compare": "control",
    "rank": None,
}


class ValidationReport:
    def __init__(self):
        self.violations: list[str] = []
        self.warnings: list[str] = []

    def error(self, key, message):
        self.violations.append(f"{key}: {message}")

    def warn(self, key, message):
        self.warnings.append(f"{key}: {message}")

    @property
    def valid(self):
        return not self.violations


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


def apply_overrides(config: dict, sets: list[str]) -> dict:
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError("override path crosses a scalar", key)
        node[parts[-1]] = value
    return config


def validate_config(config: dict) -> ValidationReport:
    """Structural and invariant validation without executing anything."""
    report = ValidationReport()
    for key in config:
        if key not in _SCHEMA:
            report.error(key, "unknown key")
    for block, allowed in _SCHEMA.items():
        if allowed is None or block not in config:
            continue
        sub = config[block]
        if not isinstance(sub, dict):
            report.error(block, "must be a mapping")
            continue
        for key in sub:
            if key not in allowed:
                report.error(f"{block}.{key}", "unknown key")
    if "params" in config:
        spec = config["params"]
        if isinstance(spec, str):
            if spec not in PRESETS:
                report.error("params", f"unknown preset {spec!r}")
        elif isinstance(spec, dict):
            for key in spec:
                if key not in _PARAM_KEYS:
                    report.error(f"params.{key}", "unknown parameter")
            try:
                _params_from(spec)
            except DomainError as exc:
                report.error("params", str(exc))
        else:
            report.error("params", "must be a preset name or a mapping")
    sens = config.get("sensitivity", {})
    if isinstance(sens, dict):
        for k, entry in enumerate(sens.get("ranges") or []):
            if not isinstance(entry, dict):
                report.error(f"sensitivity.ranges[{k}]", "must be a mapping")
                continue
            name = entry.get("name", f"[{k}]")
            lo, hi = entry.get("lo"), entry.get("hi")
            if lo is None or hi is None:
                report.error(f"sensitivity.ranges[{k}]", "needs lo and hi")
            elif lo > hi:
                report.warn(f"sensitivity.ranges[{k}]",
                            f"reversed bounds for {name}; normalized to "
                            f"[{hi}, {lo}]")
            elif lo == hi:
                report.error(f"sensitivity.ranges[{k}]",
                             f"degenerate range for {name}")
    sim = config.get("simulate")
    if isinstance(sim, dict) and {"t0", "tf"} <= set(sim):
        if sim["tf"] < sim["t0"]:
            report.error("simulate.tf", "horizon end precedes start")
    return report


def _params_from(spec) -> ParameterSet:
    if spec is None:
        spec = "table1"
    if isinstance(spec, str):
        return preset(spec)
    kwargs = dict(spec)
    if "cytokine_clearances" in kwargs and kwargs["cytokine_clearances"]:
        kwargs.setdefault("y", None)
        kwargs["cytokine_clearances"] = tuple(kwargs["cytokine_clearances"])
    return ParameterSet(**kwargs)


def _ranges_from(spec) -> list[ParameterRange]:
    if spec in (None, "default", "table4"):
        return default_ranges()
    return [ParameterRange.normalized(e["name"], float(e["lo"]),
                                      float(e["hi"])) for e in spec]


def _sim_from(block: dict) -> SimulationConfig:
    return SimulationConfig(t0=float(block.get("t0", 0.0)),
                            tf=float(block["tf"]),
                            step=float(block.get("step", 0.1)),
                            initial=tuple(block.get("initial", (0.0, 0.0, 0.0))))


def _mask_from(spec) -> DrugMask:
    if isinstance(spec, str):
        if spec not in MASKS:
            raise ConfigError(f"unknown drug mask {spec!r}", "control.mask")
        return MASKS[spec]
    flags = {"rifampin": False, "dapsone": False, "clofazimine": False,
             "steroid": False}
    for name in spec or []:
        if name not in flags:
            raise ConfigError(f"unknown drug {name!r}", "control.mask")
        flags[name] = True
    return DrugMask(**flags)


def _problem_from(config: dict, params: ParameterSet) -> OptimalControlProblem:
    block = config.get("control", {})
    wspec = block.get("weights", {})
    weights = Weights(p=float(wspec.get("p", 1.0)),
                      q=float(wspec.get("q", 1.99)),
                      r=float(wspec.get("r", 7.1)),
                      tc=float(wspec.get("tc", 6.4230)))
    fspec = block.get("fbs", {})
    fbs = FbsSettings(max_iter=int(fspec.get("max_iter", 200)),
                      tol=float(fspec.get("tol", 1e-3)),
                      relaxation=float(fspec.get("relaxation", 0.5)),
                      step=float(fspec.get("step", 0.1)))
    return OptimalControlProblem(
        params=params, weights=weights,
        mask=_mask_from(block.get("mask", "mdt")),
        bounds=block.get("bounds"),
        initial=tuple(block.get("initial", (520.0, 275.0, 250.0))),
        horizon=float(block.get("horizon", 100.0)),
        tau=float(block.get("tau", 0.0)),
        fbs=fbs, printed_forms=bool(block.get("printed_forms", False)))


def _write_manifest(outdir: Path, command: str, config: dict,
                    seed, elapsed: float) -> None:
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()
    manifest = {
        "command": command,
        "config_sha256": digest,
        "seed": seed,
        "elapsed_s": round(elapsed, 3),
        "versions": {"leprosim": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _cmd_simulate(config, params, outdir):
    block = config["simulate"]
    if float(block["tf"]) == float(block.get("t0", 0.0)):
        # degenerate horizon: emit the header only
        with open(outdir / "trajectory.csv", "w") as fh:
            fh.write("t,S,I,B\n")
        return
    traj = integrate(params, _sim_from(block))
    write_trajectory_csv(traj, outdir / "trajectory.csv")


def _cmd_equilibria(config, params, outdir):
    rep = equilibria(params)
    payload = {
        "r0": rep.r0,
        "dfe": [float(v) for v in rep.dfe],
        "endemic": None if rep.endemic is None
        else [float(v) for v in rep.endemic],
    }
    with open(outdir / "equilibria.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _cmd_stability(config, params, outdir):
    rep = equilibria(params)
    out = {"r0": rep.r0}
    for label, eq in (("dfe", rep.dfe), ("endemic", rep.endemic)):
        if eq is None:
            out[label] = None
            continue
        verdict = classify_stability(params, eq)
        out[label] = {
            "state": [float(v) for v in eq],
            "classification": verdict.classification,
            "eigenvalues": [[ev.real, ev.imag]
                            for ev in verdict.eigenvalues],
        }
    with open(outdir / "stability.json", "w") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")


def _cmd_bifurcate(config, params, outdir):
    sw = config["sweep"]
    curve = bifurcation_sweep(params, sw.get("name", "omega"),
                              float(sw["lo"]), float(sw["hi"]),
                              float(sw["step"]))
    write_bifurcation_csv(curve, outdir / "bifurcation.csv")


def _cmd_heatmap(config, params, outdir):
    block = config["heatmap"]
    kwargs = {}
    if "step" in block:
        kwargs["step"] = float(block["step"])
    grid = doubling_heatmap(params, tuple(block["alpha"]),
                            tuple(block["gamma"]),
                            tuple(block.get("shape", (50, 50))),
                            tuple(block["initial"]),
                            t_check=float(block.get("t_check", 14.0)),
                            **kwargs)
    write_heatmap_csv(grid, outdir / "heatmap.csv")


def _sensitivity_setup(config, params, seed):
    block = config["sensitivity"]
    ranges = _ranges_from(block.get("ranges"))
    n = int(block.get("n", 1000))
    if seed is None:
        seed = int(block.get("seed", 1))
    samples = lhs_sample(ranges, n, seed)
    return block, samples, seed


def _probe_times(block, sim):
    probes = block.get("probes")
    if probes is None:
        return np.arange(sim.t0, sim.tf + sim.step / 2, 1.0)
    return np.asarray(probes, dtype=float)


def _cmd_sensitivity(config, params, outdir, mode, seed):
    block, samples, seed = _sensitivity_setup(config, params, seed)
    if mode == "r0":
        results = r0_sensitivity(samples, params)
        write_sobol_csv(results, outdir / "sobol_r0.csv")
        return seed
    sim = _sim_from(block.get("simulate", {"tf": 30.0,
                                           "initial": (0.12, 0.01, 0.01)}))
    probes = _probe_times(block, sim)
    ensemble = run_ensemble(samples, params, sim, probes)
    outputs = block.get("outputs", ["S", "I", "B"])
    names = block.get("params", samples.names)
    if mode == "scatter":
        keep = np.setdiff1d(np.arange(len(samples.values)), ensemble.failed)
        for name in names:
            for out in outputs:
                comp = {"S": 0, "I": 1, "B": 2}[out]
                write_scatter_csv(samples.column(name)[keep],
                                  ensemble.outputs[keep, -1, comp],
                                  outdir / f"scatter_{name}_{out}.csv")
    elif mode in ("srcc", "prcc"):
        for name in names:
            for out in outputs:
                series = coefficient_series(samples, ensemble, name, out,
                                            method=mode)
                write_series_csv(series, outdir / f"{mode}_{name}_{out}.csv")
    elif mode == "sobol":
        bins = block.get("bins") or max(2, int(round(np.sqrt(len(
            samples.values)))))
        keep = np.setdiff1d(np.arange(len(samples.values)), ensemble.failed)
        for name in names:
            for out in outputs:
                comp = {"S": 0, "I": 1, "B": 2}[out]
                rows = []
                for k, t in enumerate(ensemble.probe_times):
                    res = sobol_index(samples.column(name)[keep],
                                      ensemble.outputs[keep, k, comp],
                                      bins, target=f"{out}@{t:g}",
                                      names=(name,))
                    rows.append((t, res.index))
                write_series_csv(np.asarray(rows),
                                 outdir / f"sobol_{name}_{out}.csv")
    else:
        raise ConfigError(f"unknown sensitivity mode {mode!r}")
    return seed


def _cmd_optimize(config, params, outdir):
    problem = _problem_from(config, params)
    result = forward_backward_sweep(problem)
    write_solve_csv(result, outdir / "solve.csv")
    write_solve_summary(result, outdir / "summary.json")


def _cmd_compare(config, params, outdir):
    problem = _problem_from(config, params)
    masks = config.get("control", {}).get("masks", list(COMPARISON_MASKS))
    rows = compare_combinations(problem, masks)
    with open(outdir / "comparison.csv", "w") as fh:
        fh.write("mask,mean_S,mean_I,mean_B,J,converged,iterations\n")
        for row in rows:
            fh.write(",".join([row.mask.label()]
                              + [f"{v:.17g}" for v in row.averages]
                              + [f"{row.cost:.17g}", str(row.converged),
                                 str(row.iterations)]) + "\n")


def _cmd_rank(config, params, outdir):
    block = config.get("effectiveness", {})
    table = rank_combinations(params, bases=block.get("bases"),
                              hazard_ratios=block.get("hazard_ratios"))
    write_ranking_csv(table, outdir / "ranking.csv")


# ---------------------------------------------------------------- repro ----

def _repro_table_eq(name, outdir):
    params = preset(name)
    rep = equilibria(params)
    _cmd_equilibria({}, params, outdir)
    if name == "table2":
        ok = abs(rep.r0 - 0.9939) <= 5e-4 \
            and np.allclose(rep.dfe, [55.1899, 0, 0], atol=1e-3)
    else:
        ok = abs(rep.r0 - 29.6341) <= 1e-3 and rep.endemic is not None \
            and np.all(np.abs(rep.endemic
                              / np.array([38.9006, 75.2748, 17.3046]) - 1)
                       < 1e-3)
    return ok, f"r0={rep.r0:.6f}"


def _repro_bifurcation(outdir):
    params = preset("table1")
    curve = bifurcation_sweep(params, "omega", 0.0, 0.25, 0.001)
    write_bifurcation_csv(curve, outdir / "bifurcation.csv")
    wc = critical_recruitment(params)
    cross = np.nonzero((curve.r0[:-1] - 1) * (curve.r0[1:] - 1) < 0)[0]
    ok = len(cross) == 1 and abs(curve.values[cross[0]] - wc) <= 0.001
    return ok, f"critical omega {wc:.5f}"


def _repro_heatmap(outdir):
    params = preset("table1")
    grid = doubling_heatmap(params, (0.2263, 0.3099), (0.15, 0.2090),
                            (50, 50), (5200.0, 0.0, 40.0), t_check=14.0)
    write_heatmap_csv(grid, outdir / "heatmap.csv")
    ok = bool(np.any((grid.b_values >= 78.0) & (grid.b_values <= 82.0)))
    return ok, (f"B(14) in [{grid.b_values.min():.2f}, "
                f"{grid.b_values.max():.2f}]")


def _repro_series(outdir, mode):
    params = preset("table1")
    samples = lhs_sample(default_ranges(), 1000, seed=1)
    sim = SimulationConfig(0.0, 30.0, 0.1, initial=(0.12, 0.01, 0.01))
    ensemble = run_ensemble(samples, params, sim,
                            np.arange(0.0, 31.0, 1.0))
    ok = True
    for name in ("delta", "y"):
        for out in ("S", "I", "B"):
            series = coefficient_series(samples, ensemble, name, out,
                                        method=mode)
            write_series_csv(series, outdir / f"{mode}_{name}_{out}.csv")
            ok = ok and np.all(np.abs(series[:, 1]) <= 1.0)
    return ok, "coefficients within [-1, 1]"


def _repro_r0_sobol(outdir):
    samples = lhs_sample(default_ranges(), 1000, seed=1)
    results = r0_sensitivity(samples, preset("table1"))
    write_sobol_csv(results, outdir / "sobol_r0.csv")
    singles = {r.params[0]: r.index for r in results if len(r.params) == 1}
    pairs = {r.params: r.index for r in results if len(r.params) == 2}
    order = sorted(singles, key=lambda k: -abs(singles[k]))
    top_pair = max(pairs, key=lambda k: abs(pairs[k]))
    ok = order[:2] == ["alpha", "delta"] and singles["y"] < 0 \
        and set(top_pair) == {"alpha", "delta"}
    return ok, f"singles order {order}"


def _repro_table6(outdir):
    problem = OptimalControlProblem(params=preset("table3"))
    rows = compare_combinations(problem, COMPARISON_MASKS)
    with open(outdir / "comparison.csv", "w") as fh:
        fh.write("mask,mean_S,mean_I,mean_B,J,converged,iterations\n")
        for row in rows:
            fh.write(",".join([row.mask.label()]
                              + [f"{v:.17g}" for v in row.averages]
                              + [f"{row.cost:.17g}", str(row.converged),
                                 str(row.iterations)]) + "\n")
    by = {row.mask.label(): row for row in rows}
    singles = ["rifampin", "dapsone", "clofazimine"]
    pair = by["rifampin+dapsone"]
    mdt = by["mdt"]
    chain_i = mdt.averages[1] < pair.averages[1] < min(
        by[s].averages[1] for s in singles)
    chain_b = mdt.averages[2] < pair.averages[2] < min(
        by[s].averages[2] for s in singles)
    clo_worst = by["clofazimine"].averages[2] == max(
        row.averages[2] for row in rows)
    j_min = mdt.cost == min(row.cost for row in rows)
    ok = bool(chain_i and chain_b and clo_worst and j_min)
    return ok, (f"chains I:{chain_i} B:{chain_b} "
                f"clofazimine-worst-B:{clo_worst} J-min:{j_min}")


def _repro_table7(outdir):
    params = preset("table3")
    table = rank_combinations(params)
    write_ranking_csv(table, outdir / "ranking.csv")
    expected = {"clofazimine": 1, "dapsone": 2, "dapsone+clofazimine": 3,
                "rifampin": 4, "rifampin+clofazimine": 5,
                "rifampin+dapsone": 6, "mdt": 7}
    ok = all(row.ranks[lvl] == expected[row.combination]
             for row in table.rows for lvl in table.levels)
    return ok, "rank columns"


REPRO_TARGETS = {
    "table2-eq": lambda outdir: _repro_table_eq("table2", outdir),
    "table3-eq": lambda outdir: _repro_table_eq("table3", outdir),
    "fig3-bifurcation": _repro_bifurcation,
    "fig4-heatmap": _repro_heatmap,
    "fig5-srcc": lambda outdir: _repro_series(outdir, "srcc"),
    "fig6-prcc": lambda outdir: _repro_series(outdir, "prcc"),
    "fig8-r0-sobol": _repro_r0_sobol,
    "table6-ordering": _repro_table6,
    "table7-rank": _repro_table7,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leprosim",
        description="within-host leprosy model: simulation, analysis, "
                    "sensitivity, optimal drug scheduling")
    parser.add_argument("command",
                        choices=sorted(list(_REQUIRED_BLOCK) +
                                       ["repro", "validate"]))
    parser.add_argument("subcommand", nargs="?",
                        help="sensitivity mode (scatter|srcc|prcc|sobol|r0) "
                             "or repro target")
    parser.add_argument("--config", help="YAML scenario file")
    parser.add_argument("--preset", choices=sorted(PRESETS),
                        help="named parameter set (overrides config params)")
    parser.add_argument("--seed", type=int, help="sampling seed override")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", dest="overrides",
                        help="config override, repeatable (dotted paths)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        config = load_config(args.config) if args.config else {}
        config = apply_overrides(config, args.overrides)
        if args.preset:
            config["params"] = args.preset

        if args.command == "validate":
            report = validate_config(config)
            for w in report.warnings:
                print(f"warning: {w}")
            if report.valid:
                print("config valid")
                return 0
            for v in report.violations:
                print(f"violation: {v}")
            return 2

        report = validate_config(config)
        if not report.valid:
            for v in report.violations:
                print(f"violation: {v}", file=sys.stderr)
            return 2
        for w in report.warnings:
            print(f"warning: {w}", file=sys.stderr)

        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)

        if args.command == "repro":
            target = args.subcommand
            if target not in REPRO_TARGETS:
                print(f"violation: repro target must be one of "
                      f"{sorted(REPRO_TARGETS)}", file=sys.stderr)
                return 2
            ok, detail = REPRO_TARGETS[target](outdir)
            _write_manifest(outdir, f"repro {target}", config, args.seed,
                            time.perf_counter() - start)
            print(f"{'PASS' if ok else 'FAIL'} {target}: {detail}")
            return 0 if ok else 1

        block = _REQUIRED_BLOCK[args.command]
        if block is not None and block not in config:
            print(f"violation: {block}: required block missing",
                  file=sys.stderr)
            return 2

        params = _params_from(config.get("params"))
        seed = args.seed
        if args.command == "simulate":
            _cmd_simulate(config, params, outdir)
        elif args.command == "equilibria":
            _cmd_equilibria(config, params, outdir)
        elif args.command == "stability":
            _cmd_stability(config, params, outdir)
        elif args.command == "bifurcate":
            _cmd_bifurcate(config, params, outdir)
        elif args.command == "heatmap":
            _cmd_heatmap(config, params, outdir)
        elif args.command == "sensitivity":
            mode = args.subcommand or "r0"
            if mode not in ("scatter", "srcc", "prcc", "sobol", "r0"):
                print(f"violation: sensitivity mode {mode!r} unknown",
                      file=sys.stderr)
                return 2
            seed = _cmd_sensitivity(config, params, outdir, mode, seed)
        elif args.command == "optimize":
            _cmd_optimize(config, params, outdir)
        elif args.command == "compare":
            _cmd_compare(config, params, outdir)
        elif args.command == "rank":
            _cmd_rank(config, params, outdir)
        _write_manifest(outdir, args.command, config, seed,
                        time.perf_counter() - start)
        return 0
    except ConfigError as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return 2
    except (DomainError, DivergenceError, EstimatorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
