"""Command-line interface: solvers, sequencers and fitters behind subcommands.

Every run writes its outputs plus a ``manifest.json`` into the output
directory; the manifest records the resolved arguments and seed, so a run
can be repeated exactly.  Exact-mode outputs (``--shots 0``) are
byte-identical across reruns; seeded shot outputs are bit-reproducible.
CSV files carry a header row and 12-significant-digit scientific notation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .device import DeviceDescription, load_device_config
from .dots import (
    StabilityModel,
    TunnelCouplingCurve,
    middle_barrier,
    slope_dec_per_volt,
    stability_diagram,
    tunnel_coupling_point,
    tunnel_coupling_sweep,
    pair_window_nm,
    build_grid,
)
from .electrostatics import SolverSettings, potential_profile, solve_selfconsistent
from .errors import DotlabError, ConfigError
from .experiments import (
    amplitude_for_j,
    simulate_dcz,
    simulate_exchange_spectroscopy,
    simulate_rabi,
)
from .fits import (
    fit_damped_sinusoid,
    extract_j_from_dcz,
    fit_exponential,
    lever_arm_comparison,
    tunability_report,
)
from .spins import ReadoutModel, SpinSystem

FIGURES = ("2c", "3b", "3c", "4a", "4b")

SWEEP_SETTINGS = SolverSettings(tolerance_v=1e-6, max_iterations=1500, damping=0.01)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.11e}"


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: Path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    cols = {name: [] for name in header}
    for line in lines[1:]:
        for name, cell in zip(header, line.split(",")):
            cols[name].append(cell)
    return {
        name: np.array([float(x) for x in vals])
        if all(_is_float(x) for x in vals) else vals
        for name, vals in cols.items()
    }


def _is_float(x: str) -> bool:
    try:
        float(x)
        return True
    except ValueError:
        return False


def write_manifest(out_dir: Path, command: str, args: dict, seed: int, duration_s: float) -> None:
    manifest = {
        "command": command,
        "arguments": args,
        "seed": seed,
        "output_dir": str(out_dir),
        "tool_version": __version__,
        "duration_s": duration_s,
    }
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, out_dir / "manifest.json")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("DOTLAB_SEED")
    return int(env) if env else 0


def _load_device(args) -> DeviceDescription:
    device = load_device_config(Path(args.config))
    if getattr(args, "strategy", None):
        from dataclasses import replace

        device = replace(device, strategy=args.strategy)
    return device


def _spin_system(device: DeviceDescription) -> SpinSystem:
    if device.spin is None:
        raise ConfigError("config has no 'spin' section; spin commands need one")
    return SpinSystem.from_config(device.spin, qubit_names=device.layout().qubit_names)


def _readout(args) -> ReadoutModel | None:
    if getattr(args, "ideal_readout", False):
        return None
    return ReadoutModel(snr=args.snr, seed=_resolve_seed(args))


def _pair(args) -> tuple[str, str]:
    parts = args.pair.split(",")
    if len(parts) != 2:
        raise ConfigError(f"--pair expects 'Qa,Qb', got {args.pair!r}")
    return parts[0].strip(), parts[1].strip()


def _out_dir(args, command: str) -> Path:
    out = Path(args.output_dir or f"runs/{command}")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommand implementations ----------------------------------------------


def cmd_simulate_potential(args) -> int:
    t0 = time.time()
    device = _load_device(args)
    out = _out_dir(args, "simulate-potential")
    grid = build_grid(device, nx=args.nx, nz=args.nz)
    settings = SolverSettings(tolerance_v=args.tolerance, max_iterations=args.max_iterations,
                              damping=args.damping)
    if args.gate:
        sweep = np.linspace(args.vmin, args.vmax, args.points)
    else:
        sweep = np.array([0.0])
    diagnostics = []
    for i, dv in enumerate(sweep):
        voltages = dict(device.voltages)
        if args.gate:
            voltages[args.gate] = voltages.get(args.gate, 0.0) + float(dv)
        field, sheet, iterations = solve_selfconsistent(grid.with_gate_voltages(voltages),
                                                        settings)
        profile = potential_profile(field)
        name = f"potential_{i:03d}.csv"
        write_csv(out / name, ["x_nm", "U_eV"], zip(profile.x_nm, profile.u_ev))
        diagnostics.append({
            "file": name,
            "gate": args.gate,
            "delta_v": float(dv),
            "iterations": iterations,
            "final_residual_v": field.residual,
        })
    (out / "diagnostics.json").write_text(json.dumps(diagnostics, indent=2) + "\n")
    write_manifest(out, "simulate-potential", _args_dict(args), _resolve_seed(args), time.time() - t0)
    print(f"wrote {len(sweep)} profile(s) to {out}")
    return 0


def _tc_point_job(payload):
    doc, strategy, barrier, v, nx, nz = payload
    device = load_device_config(json.loads(doc))
    from dataclasses import replace

    device = replace(device, strategy=strategy)
    layout = device.layout()
    window = pair_window_nm(layout, barrier)
    grid = build_grid(device, nx=nx, nz=nz)
    voltages = dict(device.voltages)
    voltages[barrier] = voltages.get(barrier, 0.0) + v
    from .errors import ConvergenceError, MergedDotsError

    try:
        tc, _ = tunnel_coupling_point(grid, voltages, window, settings=SWEEP_SETTINGS)
        return tc, "ok"
    except MergedDotsError:
        return float("nan"), "merged_dots"
    except ConvergenceError as exc:
        return float("nan"), f"no_convergence: {exc}"


def _run_tc_sweep(device: DeviceDescription, strategy: str, barrier: str | None,
                  v_values, nx: int, nz: int, jobs: int) -> TunnelCouplingCurve:
    from dataclasses import replace

    device = replace(device, strategy=strategy)
    layout = device.layout()
    if barrier is None:
        barrier = middle_barrier(layout).gate_id
    if jobs <= 1:
        return tunnel_coupling_sweep(device, strategy, barrier, v_values,
                                     nx=nx, nz=nz, settings=SWEEP_SETTINGS)
    from .device import serialize_device_config

    doc = json.dumps(serialize_device_config(device))
    payloads = [(doc, strategy, barrier, float(v), nx, nz) for v in v_values]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_tc_point_job, payloads))
    tc = np.array([r[0] for r in results])
    flags = tuple(r[1] for r in results)
    return TunnelCouplingCurve(v_volts=np.asarray(v_values, dtype=float), tc_hz=tc,
                               strategy=strategy, flags=flags)


def cmd_sweep_tunnel_coupling(args) -> int:
    t0 = time.time()
    device = _load_device(args)
    out = _out_dir(args, "sweep-tunnel-coupling")
    v_values = np.linspace(args.vmin, args.vmax, args.points)
    curve = _run_tc_sweep(device, args.strategy or device.strategy, args.barrier_gate,
                          v_values, args.nx, args.nz, args.jobs)
    rows = [(v, tc if np.isfinite(tc) else "nan", flag)
            for v, tc, flag in zip(curve.v_volts, curve.tc_hz, curve.flags)]
    write_csv(out / "tunnel_coupling.csv", ["v_volts", "tc_hz", "flag"], rows)
    write_manifest(out, "sweep-tunnel-coupling", _args_dict(args), _resolve_seed(args),
                   time.time() - t0)
    print(f"wrote {out / 'tunnel_coupling.csv'}")
    return 0


def cmd_stability_diagram(args) -> int:
    t0 = time.time()
    out = _out_dir(args, "stability-diagram")
    alpha = [float(x) for x in args.alpha.split(",")]
    if len(alpha) != 4:
        raise ConfigError("--alpha expects 4 comma-separated entries a11,a12,a21,a22")
    model = StabilityModel(
        charging_energies_ev=(args.ec1, args.ec2),
        mutual_charging_ev=args.ecm,
        lever_arms=np.array(alpha).reshape(2, 2),
    )
    v1 = np.linspace(args.v1_min, args.v1_max, args.points)
    v2 = np.linspace(args.v2_min, args.v2_max, args.points)
    diagram = stability_diagram(model, v1, v2, max_electrons=args.max_electrons)
    rows = []
    for i, a in enumerate(v1):
        for j, b in enumerate(v2):
            n1, n2 = diagram.occupations[i, j]
            rows.append((a, b, int(n1), int(n2)))
    write_csv(out / "stability.csv", ["v1", "v2", "n1", "n2"], rows)
    write_manifest(out, "stability-diagram", _args_dict(args), _resolve_seed(args), time.time() - t0)
    print(f"wrote {out / 'stability.csv'}")
    return 0


def cmd_rabi(args) -> int:
    t0 = time.time()
    device = _load_device(args)
    system = _spin_system(device)
    out = _out_dir(args, "rabi")
    seed = _resolve_seed(args)
    t_values = np.linspace(0.0, args.tmax, args.points)
    _, probs = simulate_rabi(system, args.target, t_values,
                             rabi_rate_hz=args.rabi_rate, detuning_hz=args.detuning,
                             readout=_readout(args), shots=args.shots, seed=seed)
    write_csv(out / "rabi.csv", ["t_s", "probability"], zip(t_values, probs))
    write_manifest(out, "rabi", _args_dict(args), seed, time.time() - t0)
    print(f"wrote {out / 'rabi.csv'}")
    return 0


def cmd_exchange_spectroscopy(args) -> int:
    t0 = time.time()
    device = _load_device(args)
    system = _spin_system(device)
    out = _out_dir(args, "exchange-spectroscopy")
    seed = _resolve_seed(args)
    pair = _pair(args)
    target = system.pair_indices(pair)[1]
    f_center = system.detunings_hz[target]
    f_values = np.linspace(f_center + args.fmin, f_center + args.fmax, args.fpoints)
    v_values = np.linspace(args.vmin, args.vmax, args.vpoints)
    _, _, grid_map = simulate_exchange_spectroscopy(
        system, pair, f_values, v_values, probe_rabi_hz=args.probe_rabi,
        readout=_readout(args), shots=args.shots, seed=seed)
    rows = []
    for i, v in enumerate(v_values):
        for j, f in enumerate(f_values):
            rows.append((v, f, grid_map[i, j]))
    write_csv(out / "spectroscopy.csv", ["v_volts", "f_hz", "probability"], rows)
    write_manifest(out, "exchange-spectroscopy", _args_dict(args), seed, time.time() - t0)
    print(f"wrote {out / 'spectroscopy.csv'}")
    return 0


def cmd_dcz(args) -> int:
    t0 = time.time()
    device = _load_device(args)
    system = _spin_system(device)
    out = _out_dir(args, "dcz")
    seed = _resolve_seed(args)
    pair = _pair(args)
    tau = np.linspace(0.0, args.tmax, args.points)
    _, probs = simulate_dcz(system, pair, args.amplitude, tau,
                            readout=_readout(args), shots=args.shots, seed=seed)
    write_csv(out / "dcz.csv", ["tau_s", "probability"], zip(tau, probs))
    write_manifest(out, "dcz", _args_dict(args), seed, time.time() - t0)
    print(f"wrote {out / 'dcz.csv'}")
    return 0


def cmd_fit_tunability(args) -> int:
    t0 = time.time()
    out = _out_dir(args, "fit-tunability")
    curves: dict[str, dict[str, tuple]] = {}
    for spec_str in args.curve:
        try:
            pair, strategy, path = spec_str.split(":", 2)
        except ValueError:
            raise ConfigError(f"--curve expects PAIR:STRATEGY:PATH, got {spec_str!r}")
        table = read_csv(Path(path))
        v_key = "v_volts" if "v_volts" in table else "v"
        j_key = "j_hz" if "j_hz" in table else "J_hz"
        if v_key not in table or j_key not in table:
            raise ConfigError(f"{path}: expected columns v_volts/v and j_hz/J_hz")
        curves.setdefault(pair, {})[strategy] = (table[v_key], table[j_key])
    window = tuple(args.window) if args.window else None
    report = tunability_report(curves, window=window)
    payload = report.to_dict()
    (out / "tunability_report.json").write_text(json.dumps(payload, indent=2) + "\n")
    write_manifest(out, "fit-tunability", _args_dict(args), _resolve_seed(args), time.time() - t0)
    print(f"wrote {out / 'tunability_report.json'}")
    return 0


def _render_report(report: dict, lever: dict | None) -> str:
    lines = []
    header = f"{'pair':<10}{'interchanged':>14}{'conventional':>14}{'ratio':>10}"
    lines.append("Exchange tunability (dec/V)")
    lines.append(header)
    lines.append("-" * len(header))
    for i, pair in enumerate(report["pairs"]):
        lines.append(
            f"{pair:<10}{report['interchanged_dec_per_v'][i]:>14.3f}"
            f"{report['conventional_dec_per_v'][i]:>14.3f}{report['ratios'][i]:>10.3f}"
        )
    if report["flagged"]:
        lines.append(f"flagged (interchanged <= conventional): {', '.join(report['flagged'])}")
    if lever is not None:
        lines.append("")
        lines.append("Lever-arm comparison")
        header = f"{'pair':<10}{'lever ratio':>14}{'tunability':>14}{'excess':>10}"
        lines.append(header)
        lines.append("-" * len(header))
        for i, pair in enumerate(report["pairs"]):
            mark = " *" if i in lever["beyond_lever_arm"] else ""
            lines.append(
                f"{pair:<10}{lever['lever_ratios'][i]:>14.3f}"
                f"{lever['tunability_ratios'][i]:>14.3f}{lever['excess'][i]:>10.3f}{mark}"
            )
        lines.append("* exceeds the lever-arm prediction")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    t0 = time.time()
    out = _out_dir(args, "report")
    report = json.loads(Path(args.tunability).read_text())
    lever = None
    if args.lever_ratios:
        ratios = [float(x) for x in args.lever_ratios.split(",")]
        comparison = lever_arm_comparison(ratios, report["ratios"])
        lever = comparison.to_dict()
    text = _render_report(report, lever)
    (out / "report.txt").write_text(text)
    payload = {"tunability": report, "lever_arm": lever}
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    write_manifest(out, "report", _args_dict(args), _resolve_seed(args), time.time() - t0)
    sys.stdout.write(text)
    return 0


# --- figure reproduction ------------------------------------------------------


def _conventional_config_path(args) -> Path:
    if args.config_conventional:
        return Path(args.config_conventional)
    primary = Path(args.config)
    sibling = primary.with_name(primary.stem + "_conventional" + primary.suffix)
    if not sibling.exists():
        raise ConfigError(
            f"conventional companion config not found: {sibling}; pass --config-conventional"
        )
    return sibling


def _dcz_j_curve(system: SpinSystem, pair, j_targets, seed: int):
    """Measure J(v) by running the dCZ pipeline at each amplitude."""
    v_points, j_points = [], []
    for j_target in j_targets:
        v = amplitude_for_j(system, pair, j_target)
        tau = np.linspace(0.0, 3.0 / j_target, 160)
        _, trace = simulate_dcz(system, pair, v, tau)
        fit = fit_damped_sinusoid(tau, trace)
        v_points.append(v)
        j_points.append(extract_j_from_dcz(fit))
    return np.array(v_points), np.array(j_points)


def cmd_reproduce_figure(args) -> int:
    t0 = time.time()
    out = _out_dir(args, f"figure-{args.fig}")
    seed = _resolve_seed(args)
    device = load_device_config(Path(args.config))

    if args.fig == "2c":
        conv_device = load_device_config(_conventional_config_path(args))
        v_values = np.linspace(0.0, 0.3, args.points)
        summary = {}
        for device_x, strategy in ((device, "interchanged"), (conv_device, "conventional")):
            curve = _run_tc_sweep(device_x, strategy, None, v_values, args.nx, args.nz, args.jobs)
            rows = [(v, tc if np.isfinite(tc) else "nan", flag)
                    for v, tc, flag in zip(curve.v_volts, curve.tc_hz, curve.flags)]
            write_csv(out / f"fig2c_{strategy}.csv", ["v_volts", "tc_hz", "flag"], rows)
            summary[strategy] = slope_dec_per_volt(curve)
        summary["slope_ratio"] = summary["interchanged"] / summary["conventional"]
        (out / "fig2c_slopes.json").write_text(json.dumps(summary, indent=2) + "\n")

    elif args.fig in ("3b", "3c"):
        if args.fig == "3b":
            device_x = load_device_config(_conventional_config_path(args))
            v_max, f_half = 0.4, 30e6
        else:
            device_x = device
            v_max, f_half = 0.28, 120e6
        system = _spin_system(device_x)
        pair = ("Q1", "Q2")
        target = system.pair_indices(pair)[1]
        f_center = system.detunings_hz[target]
        f_values = np.linspace(f_center - f_half, f_center + f_half, 241)
        v_values = np.linspace(0.0, v_max, 8)
        _, _, grid_map = simulate_exchange_spectroscopy(system, pair, f_values, v_values)
        rows = []
        for i, v in enumerate(v_values):
            for j, f in enumerate(f_values):
                rows.append((v, f, grid_map[i, j]))
        write_csv(out / f"fig{args.fig}_map.csv", ["v_volts", "f_hz", "probability"], rows)

    elif args.fig == "4a":
        system = _spin_system(device)
        pair = ("Q1", "Q2")
        fits_out = []
        for j_target in (1e6, 2e6, 4e6, 8e6):
            v = amplitude_for_j(system, pair, j_target)
            tau = np.linspace(0.0, 3.0 / j_target, 160)
            _, trace = simulate_dcz(system, pair, v, tau)
            name = f"fig4a_dcz_{j_target / 1e6:.0f}MHz.csv"
            write_csv(out / name, ["tau_s", "probability"], zip(tau, trace))
            fit = fit_damped_sinusoid(tau, trace)
            fits_out.append({
                "file": name,
                "amplitude_v": v,
                "configured_j_hz": j_target,
                "fitted_frequency_hz": fit.frequency_hz,
                "extracted_j_hz": extract_j_from_dcz(fit),
            })
        (out / "fig4a_fits.json").write_text(json.dumps(fits_out, indent=2) + "\n")

    elif args.fig == "4b":
        conv_device = load_device_config(_conventional_config_path(args))
        j_targets = np.geomspace(0.5e6, 8e6, 6)
        curves: dict[str, dict[str, tuple]] = {}
        for device_x, strategy in ((device, "interchanged"), (conv_device, "conventional")):
            system = _spin_system(device_x)
            for pair_cal in system.exchange[:3]:
                qa, qb = pair_cal.qubits
                pair_name = f"{system.qubit_names[qa]}-{system.qubit_names[qb]}"
                v_pts, j_pts = _dcz_j_curve(system, (qa, qb), j_targets, seed)
                write_csv(out / f"fig4b_{strategy}_{pair_name}.csv",
                          ["v_volts", "j_hz"], zip(v_pts, j_pts))
                curves.setdefault(pair_name, {})[strategy] = (v_pts, j_pts)
        report = tunability_report(curves)
        (out / "fig4b_tunability.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")

    write_manifest(out, f"reproduce-figure-{args.fig}", _args_dict(args), seed, time.time() - t0)
    print(f"figure {args.fig} data written to {out}")
    return 0


# --- argument parsing ----------------------------------------------------------


def _args_dict(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _add_common(p: argparse.ArgumentParser, config: bool = True):
    if config:
        p.add_argument("--config", required=True, help="device config JSON")
    p.add_argument("--output-dir", default=None, help="output directory (default runs/<command>)")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (fallback: DOTLAB_SEED, then 0)")


def _add_readout(p: argparse.ArgumentParser):
    p.add_argument("--shots", type=int, default=0, help="0 = exact probabilities")
    p.add_argument("--snr", type=float, default=10.6, help="readout SNR for the error model")
    p.add_argument("--ideal-readout", action="store_true", help="disable readout errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dotlab",
        description="Quantum-dot device simulator: electrostatics, tunnel coupling, "
                    "spin-qubit pulse sequences, and tunability calibration.",
    )
    parser.add_argument("--version", action="version", version=f"dotlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-potential", help="self-consistent channel potential profiles")
    _add_common(p)
    p.add_argument("--strategy", choices=("conventional", "interchanged"), default=None)
    p.add_argument("--gate", default=None, help="gate id to sweep (additional voltage)")
    p.add_argument("--vmin", type=float, default=0.0)
    p.add_argument("--vmax", type=float, default=0.3)
    p.add_argument("--points", type=int, default=4)
    p.add_argument("--nx", type=int, default=384)
    p.add_argument("--nz", type=int, default=120)
    p.add_argument("--damping", type=float, default=0.01)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--max-iterations", type=int, default=1500)
    p.set_defaults(func=cmd_simulate_potential)

    p = sub.add_parser("sweep-tunnel-coupling", help="tunnel coupling vs barrier voltage")
    _add_common(p)
    p.add_argument("--strategy", choices=("conventional", "interchanged"), default=None)
    p.add_argument("--barrier-gate", default=None, help="default: barrier of the middle pair")
    p.add_argument("--vmin", type=float, default=0.0)
    p.add_argument("--vmax", type=float, default=0.3)
    p.add_argument("--points", type=int, default=7)
    p.add_argument("--nx", type=int, default=384)
    p.add_argument("--nz", type=int, default=120)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep_tunnel_coupling)

    p = sub.add_parser("stability-diagram", help="constant-interaction charge stability map")
    _add_common(p, config=False)
    p.add_argument("--ec1", type=float, default=2e-3, help="dot-1 charging energy (eV)")
    p.add_argument("--ec2", type=float, default=2e-3, help="dot-2 charging energy (eV)")
    p.add_argument("--ecm", type=float, default=4e-4, help="mutual charging energy (eV)")
    p.add_argument("--alpha", default="0.1,0.02,0.02,0.1", help="lever arms a11,a12,a21,a22")
    p.add_argument("--v1-min", type=float, default=0.0)
    p.add_argument("--v1-max", type=float, default=0.1)
    p.add_argument("--v2-min", type=float, default=0.0)
    p.add_argument("--v2-max", type=float, default=0.1)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--max-electrons", type=int, default=4)
    p.set_defaults(func=cmd_stability_diagram)

    p = sub.add_parser("rabi", help="Rabi oscillation trace")
    _add_common(p)
    p.add_argument("--target", default="Q1")
    p.add_argument("--tmax", type=float, default=2e-6)
    p.add_argument("--points", type=int, default=161)
    p.add_argument("--rabi-rate", type=float, default=None)
    p.add_argument("--detuning", type=float, default=0.0)
    _add_readout(p)
    p.set_defaults(func=cmd_rabi)

    p = sub.add_parser("exchange-spectroscopy", help="two-branch exchange spectroscopy map")
    _add_common(p)
    p.add_argument("--pair", default="Q1,Q2")
    p.add_argument("--fmin", type=float, default=-30e6, help="offset from target resonance (Hz)")
    p.add_argument("--fmax", type=float, default=30e6)
    p.add_argument("--fpoints", type=int, default=121)
    p.add_argument("--vmin", type=float, default=0.0)
    p.add_argument("--vmax", type=float, default=0.3)
    p.add_argument("--vpoints", type=int, default=7)
    p.add_argument("--probe-rabi", type=float, default=None)
    _add_readout(p)
    p.set_defaults(func=cmd_exchange_spectroscopy)

    p = sub.add_parser("dcz", help="decoupled-CZ oscillation trace")
    _add_common(p)
    p.add_argument("--pair", default="Q1,Q2")
    p.add_argument("--amplitude", type=float, required=True, help="barrier amplitude (V)")
    p.add_argument("--tmax", type=float, default=4e-6)
    p.add_argument("--points", type=int, default=160)
    _add_readout(p)
    p.set_defaults(func=cmd_dcz)

    p = sub.add_parser("fit-tunability", help="exponential fits of J(v) curves")
    _add_common(p, config=False)
    p.add_argument("--curve", action="append", required=True,
                   help="PAIR:STRATEGY:PATH, repeatable; CSV needs v_volts, j_hz columns")
    p.add_argument("--window", type=float, nargs=2, default=None, metavar=("VMIN", "VMAX"))
    p.set_defaults(func=cmd_fit_tunability)

    p = sub.add_parser("report", help="render tunability and lever-arm tables")
    _add_common(p, config=False)
    p.add_argument("--tunability", required=True, help="tunability_report.json path")
    p.add_argument("--lever-ratios", default=None, help="comma-separated lever-arm ratios")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("reproduce-figure", help="run a full figure-analog pipeline")
    _add_common(p)
    p.add_argument("--fig", choices=FIGURES, required=True)
    p.add_argument("--config-conventional", default=None,
                   help="companion conventional config (default: sibling *_conventional.json)")
    p.add_argument("--points", type=int, default=7)
    p.add_argument("--nx", type=int, default=384)
    p.add_argument("--nz", type=int, default=120)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_reproduce_figure)

    return parser


def dispatch(argv=None) -> int:
    """Run one subcommand; 0 on success, 1 on domain error, 2 on usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DotlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: config not found: {exc.filename}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
