"""
Batch runner: ``mott-register simulate <config>``, ``presets list``,
``validate <config>``.

Configs are INI files with sections ``[experiment]``, ``[model]``,
``[measurement]``, ``[time]`` and ``[temperature]``. Every key has a
documented default or is required; unknown keys are rejected. Each run
writes CSV tables (17 significant digits) plus ``manifest.json`` holding the
resolved config, library version, seed and wall time.

Exit codes: 0 success, 2 invalid config, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from mott_register import __version__
from mott_register.fock import FockBasis, dimension

OUT_ENV = "MOTT_REGISTER_OUT"
EXPERIMENTS = ("basis-info", "homogeneous-fidelity", "trap-fidelity", "measurement", "thermal-sweep")

REQUIRED = object()


def _floats(text):
    return [float(v) for v in str(text).replace(",", " ").split()]


def _ints(text):
    return [int(v) for v in str(text).replace(",", " ").split()]


# section -> key -> (parser, default)
SCHEMA = {
    "experiment": {
        "type": (str, REQUIRED),
        "seed": (int, 0),
        "name": (str, "run"),
        "output": (str, "results"),
    },
    "model": {
        "J": (float, 1.0),
        "U": (float, None),
        "M": (int, None),
        "N": (int, None),
        "delta": (float, 0.0),
        "K": (int, None),
        "boundary": (str, "open"),
        "site_origin": (str, "center"),
    },
    "measurement": {
        "Omega": (float, REQUIRED),
        "gamma": (float, REQUIRED),
        "K_values": (_ints, None),
        "eta_values": (_floats, [1.0]),
        "Vc": (float, 0.0),
        "reentry": (str, "faulty"),
        "initial": (str, "ground"),
        "n_traj": (int, 0),
    },
    "time": {
        "t_max": (float, REQUIRED),
        "samples": (int, 401),
        "unit": (str, "1/J"),
    },
    "temperature": {
        "T_min": (float, 0.1),
        "T_max": (float, None),
        "points": (int, 48),
        "mode": (str, "auto"),
        "window": (float, None),
        "dense_budget": (int, 4000),
    },
}

# sections each experiment needs, and the model keys that must be set
NEEDS = {
    "basis-info": ((), ("M", "N")),
    "homogeneous-fidelity": (("time",), ("U", "N")),
    "trap-fidelity": (("time",), ("U", "N", "delta")),
    "measurement": (("measurement", "time"), ("U",)),
    "thermal-sweep": (("temperature",), ("U", "M", "N", "K")),
}


class ConfigError(ValueError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    name: str
    output: str
    sections: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.sections.get(section, {}).get(key)

    def to_dict(self) -> dict:
        out = {"experiment": {"type": self.experiment, "seed": self.seed, "name": self.name, "output": self.output}}
        out.update({k: dict(v) for k, v in self.sections.items()})
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        text = io.StringIO()
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section, values in data.items():
            parser[section] = {
                k: " ".join(map(repr, v)) if isinstance(v, list) else str(v) for k, v in values.items() if v is not None
            }
        parser.write(text)
        return validate(text.getvalue())


def validate(text: str) -> ExperimentConfig:
    """Parse and check a config, collecting every problem before failing."""
    errors = []
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None

    for section in parser.sections():
        if section not in SCHEMA:
            errors.append(f"unknown section [{section}]")
        else:
            for key in parser[section]:
                if key not in SCHEMA[section]:
                    errors.append(f"unknown key {section}.{key}")

    def parse_section(name):
        values = {}
        present = parser[name] if parser.has_section(name) else {}
        for key, (conv, default) in SCHEMA[name].items():
            if key in present:
                try:
                    values[key] = conv(present[key])
                except ValueError as exc:
                    errors.append(f"{name}.{key}: {exc}")
                    values[key] = None
            elif default is REQUIRED:
                errors.append(f"missing required key {name}.{key}")
                values[key] = None
            else:
                values[key] = default
        return values

    exp = parse_section("experiment")
    kind = exp["type"]
    if kind is not None and kind not in EXPERIMENTS:
        errors.append(f"experiment.type must be one of {', '.join(EXPERIMENTS)}; got {kind!r}")
        kind = None
    sections = {"model": parse_section("model")}
    if kind:
        needed, model_keys = NEEDS[kind]
        for name in needed:
            if not parser.has_section(name) and any(d is REQUIRED for _, d in SCHEMA[name].values()):
                errors.append(f"experiment {kind} needs a [{name}] section")
            sections[name] = parse_section(name)
        for key in model_keys:
            if sections["model"][key] is None and not (kind == "measurement" and key == "K"):
                errors.append(f"missing required key model.{key} for {kind}")
        for name in ("measurement", "time", "temperature"):
            if name not in needed and parser.has_section(name):
                errors.append(f"section [{name}] is not used by {kind}")
    else:
        for name in ("measurement", "time", "temperature"):
            if parser.has_section(name):
                sections[name] = parse_section(name)

    errors.extend(_physical_checks(kind, sections))
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(kind, exp["seed"], exp["name"], exp["output"], sections)


def _physical_checks(kind, s):
    """Range checks; values that failed to parse (``None``) are skipped."""
    errors = []

    def check(value, ok, message):
        if value is not None and not ok(value):
            errors.append(message)

    m = s["model"]
    check(m["J"], lambda v: v > 0, "model.J must be positive")
    check(m["U"], lambda v: v > 0, "model.U must be positive")
    check(m["delta"], lambda v: v >= 0, "model.delta must be non-negative")
    check(m["boundary"], lambda v: v in ("open", "periodic"), "model.boundary must be open or periodic")
    check(m["site_origin"], lambda v: v in ("center", "left"), "model.site_origin must be center or left")
    check(m["N"], lambda v: v >= 1, "model.N must be at least 1")
    check(m["M"], lambda v: v >= 1, "model.M must be at least 1")
    check(m["K"], lambda v: v >= 1 and v % 2 == 1, "model.K must be odd and positive")
    if m["K"] is not None and m["M"] is not None and m["K"] > m["M"]:
        errors.append("model.K must not exceed model.M")
    if kind == "homogeneous-fidelity":
        if m["M"] is not None and m["N"] is not None and m["M"] != m["N"]:
            errors.append("homogeneous-fidelity needs model.N == model.M")
        check(m["delta"], lambda v: v == 0, "homogeneous-fidelity needs model.delta = 0")
    if kind == "trap-fidelity" and m["M"] is not None and m["N"] is not None and m["M"] != m["N"]:
        errors.append("trap-fidelity needs model.N == model.M")

    if kind == "measurement" and "measurement" in s:
        q = s["measurement"]
        ks = q["K_values"] or ([m["K"]] if m["K"] else None)
        if not ks:
            errors.append("measurement needs measurement.K_values or model.K")
        elif any(k < 1 or k % 2 == 0 for k in ks):
            errors.append("measurement.K_values must be odd and positive")
        check(q["eta_values"], lambda v: all(0 <= e <= 1 for e in v), "measurement.eta_values must lie in [0, 1]")
        check(q["Omega"], lambda v: v >= 0, "measurement.Omega must be non-negative")
        check(q["gamma"], lambda v: v > 0, "measurement.gamma must be positive")
        check(q["reentry"], lambda v: v in ("faulty", "target"), "measurement.reentry must be faulty or target")
        check(
            q["initial"], lambda v: v in ("ground", "ground-coherent", "target"),
            "measurement.initial must be ground, ground-coherent or target",
        )
        check(q["n_traj"], lambda v: v >= 0, "measurement.n_traj must be non-negative")

    if kind in NEEDS and "time" in NEEDS[kind][0]:
        t = s["time"]
        check(t["t_max"], lambda v: v > 0, "time.t_max must be positive")
        check(t["samples"], lambda v: v >= 2, "time.samples must be at least 2")
        allowed = ("1/J", "1/kappa") if kind == "measurement" else ("1/J",)
        check(t["unit"], lambda v: v in allowed, f"time.unit must be one of {', '.join(allowed)}")

    if kind == "thermal-sweep":
        T = s["temperature"]
        check(T["T_min"], lambda v: v > 0, "temperature.T_min must be positive")
        check(T["points"], lambda v: v >= 2, "temperature.points must be at least 2")
        if T["T_max"] is not None and T["T_min"] is not None and T["T_max"] <= T["T_min"]:
            errors.append("temperature.T_max must exceed temperature.T_min")
        check(T["mode"], lambda v: v in ("auto", "full", "window"), "temperature.mode must be auto, full or window")
        if T["mode"] == "window" and not T["window"]:
            errors.append("temperature.mode = window needs temperature.window")
    return errors


# --------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _columns(header, *cols):
    return header, list(zip(*cols))


# --------------------------------------------------------------------------
# experiments; each returns {filename: (header, rows)} and a summary dict


def _model(cfg, **over):
    from mott_register.hamiltonian import ModelParams

    m = dict(cfg.sections["model"])
    m.update(over)
    return ModelParams(
        J=m["J"], U=m["U"], M=m["M"], N=m["N"], delta=m["delta"], K=m["K"],
        boundary=m["boundary"], site_origin=m["site_origin"],
    )


def _time_grid(cfg, scale=1.0):
    t = cfg.sections["time"]
    return np.linspace(0.0, t["t_max"] * scale, t["samples"])


def run_basis_info(cfg, workers):
    from mott_register.hamiltonian import ModelParams, trap_constraint_ok

    m = cfg.sections["model"]
    dim = dimension(m["N"], m["M"])
    row = [m["N"], m["M"], dim, dim * m["M"]]
    header = ["N", "M", "dimension", "occupation_table_bytes"]
    if m["U"] is not None:
        header.append("trap_constraint_ok")
        row.append(trap_constraint_ok(ModelParams(J=m["J"], U=m["U"], M=m["M"], N=m["N"], delta=m["delta"])))
    return {"basis_info.csv": (header, [row])}, {"dimension": dim}


def run_homogeneous(cfg, workers):
    from mott_register.analytics import fidelity_homogeneous, fidelity_short_time
    from mott_register.dynamics import overlap_trace, unit_filled_state
    from mott_register.hamiltonian import build_hamiltonian

    m = cfg.sections["model"]
    params = _model(cfg, M=m["N"])
    basis = FockBasis(params.N, params.M)
    H = build_hamiltonian(params, basis)
    t = _time_grid(cfg)
    psi0 = unit_filled_state(basis)
    exact = overlap_trace(H, psi0, t, psi0)
    closed = fidelity_homogeneous(t, params.N, params.J, params.U)
    short = fidelity_short_time(t, params.N, params.J, params.U)
    table = _columns(["t [1/J]", "F_closed_form [1]", "F_exact [1]", "F_short_time [1]"], t, closed, exact, short)
    return {"fidelity.csv": table}, {"max_abs_closed_minus_exact": float(np.abs(closed - exact).max())}


def run_trap(cfg, workers):
    from mott_register.analytics import fidelity_commensurate_trap
    from mott_register.dynamics import evolve_restricted

    m = cfg.sections["model"]
    params = _model(cfg, M=m["N"])
    t = _time_grid(cfg)
    closed = fidelity_commensurate_trap(t, params.N, params.J, params.U, params.delta)
    restricted = evolve_restricted(params, t)
    table = _columns(["t [1/J]", "F_closed_form [1]", "F_restricted [1]"], t, closed, restricted)
    return {"fidelity.csv": table}, {"max_abs_closed_minus_restricted": float(np.abs(closed - restricted).max())}


def run_measurement(cfg, workers):
    from mott_register import measurement as ms

    m, q = cfg.sections["model"], cfg.sections["measurement"]
    ks = q["K_values"] or [m["K"]]
    series_header, series = [], []
    summary_rows = []
    t_unit = cfg.sections["time"]["unit"]
    t_ref = None
    run_index = 0
    for K in ks:
        for eta in q["eta_values"]:
            p = ms.MeasurementParams(
                Omega=q["Omega"], gamma=q["gamma"], U=m["U"], J=m["J"], K=K,
                delta=m["delta"], eta=eta, Vc=q["Vc"], reentry=q["reentry"],
            )
            if t_ref is None:
                scale = 1 / p.kappa if t_unit == "1/kappa" else 1.0
                t_ref = _time_grid(cfg, scale)
                series_header += ["t [1/J]", "t*kappa [1]"]
                series += [t_ref, t_ref * p.kappa]
            if q["initial"] == "target":
                rho0 = ms.GroundManifoldState.target(K)
            else:
                rho0 = ms.GroundManifoldState.from_ground_state(K, m["J"], m["U"], coherent=q["initial"] == "ground-coherent")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ms.RegimeWarning)
                cond = ms.evolve_conditional(p, rho0, t_ref, efficiency=eta)
            tag = f"K{K}_eta{eta:g}"
            series_header.append(f"F_filter_{tag} [1]")
            series.append(cond.fidelity)
            t_sat = ms.saturation_time(t_ref, cond.fidelity)
            row = [K, eta, p.kappa, t_sat, t_sat * p.kappa, ms.good_regime_check(p).ok, cond.fidelity[-1]]
            if q["n_traj"]:
                # independent stream per (K, eta) run, derived from the master seed
                seed = [cfg.seed, run_index]
                ens = ms.simulate_trajectories(p, rho0, t_ref, q["n_traj"], seed=seed, workers=workers)
                series_header += [f"F_traj_{tag} [1]", f"F_traj_sem_{tag} [1]", f"n_null_{tag}", f"F_traj_all_{tag} [1]"]
                series += [ens.null_mean, ens.null_sem, ens.null_count, ens.mean]
                row += [ens.null_mean[-1], ens.null_sem[-1], sum(len(j) for j in ens.jumps)]
            summary_rows.append(row)
            run_index += 1
        series_header.append(f"F_free_K{K} [1]")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            series.append(ms.post_measurement_free_evolution(p, t_ref))
    summary_header = ["K", "eta", "kappa [J]", "t_sat [1/J]", "t_sat*kappa [1]", "good_regime", "F_filter_final [1]"]
    if q["n_traj"]:
        summary_header += ["F_traj_final [1]", "F_traj_final_sem [1]", "jumps"]
    tables = {"fidelity.csv": _columns(series_header, *series), "saturation.csv": (summary_header, summary_rows)}
    return tables, {"kappa": summary_rows[0][2]}


def run_thermal(cfg, workers):
    from mott_register.dynamics import RegisterProjector
    from mott_register.hamiltonian import build_hamiltonian
    from mott_register.thermal import characteristic_temperatures, diagonalize, thermal_fidelity

    T = cfg.sections["temperature"]
    params = _model(cfg)
    basis = FockBasis(params.N, params.M)
    H = build_hamiltonian(params, basis)
    proj = RegisterProjector(params, basis)
    temps = characteristic_temperatures(params.U, params.delta, params.N, params.K)
    T_hi = T["T_max"] or 2 * temps.T_h
    grid = np.geomspace(T["T_min"], T_hi, T["points"])
    mode = T["mode"]
    if mode == "auto":
        mode = "full" if basis.size <= T["dense_budget"] else "window"
    window = T["window"] or 40 * T_hi
    spec = diagonalize(H, mode=mode, window=window, projector=proj, dense_budget=T["dense_budget"])
    F = thermal_fidelity(spec, grid)
    table = _columns(["T [J/k_B]", "F [1]"], grid, F)
    summary = {
        "T_d": temps.T_d, "T_h": temps.T_h, "T_max": temps.T_max,
        "F_T0": float(thermal_fidelity(spec, 0.0)), "completeness": spec.completeness,
    }
    temps_table = (["T_d [J/k_B]", "T_h [J/k_B]", "T_max [J/k_B]", "F(T=0) [1]"],
                   [[temps.T_d, temps.T_h, temps.T_max, summary["F_T0"]]])
    return {"thermal.csv": table, "temperatures.csv": temps_table}, summary


RUNNERS = {
    "basis-info": run_basis_info,
    "homogeneous-fidelity": run_homogeneous,
    "trap-fidelity": run_trap,
    "measurement": run_measurement,
    "thermal-sweep": run_thermal,
}


def run(cfg: ExperimentConfig, out_dir: Path, workers: int = 1) -> dict:
    """Run one experiment and write its CSVs and manifest into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    tables, summary = RUNNERS[cfg.experiment](cfg, workers)
    for name, (header, rows) in tables.items():
        write_csv(out_dir / name, header, rows)
    manifest = {
        "config": cfg.to_dict(),
        "version": __version__,
        "seed": cfg.seed,
        "wall_time_s": time.perf_counter() - start,
        "outputs": sorted(tables),
        "summary": summary,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=float)
    return manifest


# --------------------------------------------------------------------------
# presets


def preset_names() -> list[str]:
    root = resources.files("mott_register") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def preset_text(name: str) -> str:
    path = resources.files("mott_register") / "presets" / f"{name}.ini"
    if not path.is_file():
        raise KeyError(name)
    return path.read_text()


def _preset_summary(text: str) -> str:
    for line in text.splitlines():
        if line.startswith("#"):
            return line.lstrip("# ").strip()
    return ""


def load_config_text(ref: str) -> str:
    """Read a config file, falling back to a shipped preset of that name."""
    path = Path(ref)
    if path.is_file():
        return path.read_text()
    name = ref[len("preset:"):] if ref.startswith("preset:") else ref
    try:
        return preset_text(name)
    except KeyError:
        raise FileNotFoundError(f"no config file or preset named {ref!r}") from None


# --------------------------------------------------------------------------
# entry point


def _parser():
    ap = argparse.ArgumentParser(prog="mott-register", description=__doc__.strip().splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment config or preset")
    sim.add_argument("config", help="path to an INI config, or a preset name")
    sim.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    sim.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    sim.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or experiment.output)")

    pre = sub.add_parser("presets", help="list or print the shipped presets")
    pre_sub = pre.add_subparsers(dest="action", required=True)
    pre_sub.add_parser("list")
    show = pre_sub.add_parser("show")
    show.add_argument("name")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)

    if args.command == "presets":
        if args.action == "list":
            for name in preset_names():
                print(f"{name:20s} {_preset_summary(preset_text(name))}")
            return 0
        try:
            print(preset_text(args.name), end="")
        except KeyError:
            print(f"error: unknown preset {args.name!r}", file=sys.stderr)
            return 2
        return 0

    try:
        text = load_config_text(args.config)
        cfg = validate(text)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print(json.dumps(cfg.to_dict(), indent=2))
        return 0

    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or os.environ.get(OUT_ENV) or cfg.output)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        manifest = run(cfg, out, workers=args.threads)
    except Exception as exc:  # surfaced verbatim, runtime failures exit 3
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {', '.join(manifest['outputs'])} and manifest.json to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
