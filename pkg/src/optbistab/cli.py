"""Command-line entry point.

Every subcommand writes its data files (CSV or JSON) and ``summary.json``
into ``--out``; the summary echoes the resolved configuration. Numbers are
written with 12 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .bloch import steady_state
from .cavity import (BistabilityCurve, branch_percentage_errors, hysteresis_sweep, max_abs_slope,
                     trace_curve)
from .config import SCHEMA_VERSION, SUBCOMMANDS, RunConfig, load_config
from .dynamics import (CNOT_TABLE, RingSimConfig, TargetEncoding, cnot_truth_table, loop_area,
                       piecewise_linear, pulse_omega1, ring_cavity_simulate, sweep_jumps, triangular_ramp)
from .errors import NotBistable, OptBistabError, ParseError, ValidationError
from .spectra import absorption_peaks, absorption_scan, default_grid, gain_dips
from .structured_light import effective_fields, oam_scan


def fmt(v):
    """12-significant-digit rendering used for every emitted number."""
    if isinstance(v, (bool, np.bool_)):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            return None
        return float(format(v, ".12g"))
    if isinstance(v, complex):
        return [fmt(v.real), fmt(v.imag)]
    if isinstance(v, dict):
        return {k: fmt(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [fmt(x) for x in v]
    return v


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


class Writer:
    def __init__(self, out: str, fmt_kind: str):
        self.out = out
        self.kind = fmt_kind
        self.files = []
        os.makedirs(out, exist_ok=True)

    def table(self, name: str, columns: list, rows) -> str:
        path = os.path.join(self.out, f"{name}.{self.kind}")
        rows = list(rows)
        if self.kind == "csv":
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(columns)
                for r in rows:
                    w.writerow([_cell(v) for v in r])
        else:
            doc = {"schema_version": SCHEMA_VERSION, "columns": columns,
                   "rows": [fmt(list(r)) for r in rows]}
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1, sort_keys=True)
                fh.write("\n")
        self.files.append(os.path.basename(path))
        return path

    def summary(self, cfg: RunConfig, body: dict) -> dict:
        doc = {"schema_version": SCHEMA_VERSION, "version": __version__,
               "subcommand": cfg.subcommand, "config": cfg.to_dict(),
               "config_text": cfg.to_text(), "files": self.files, **fmt(body)}
        with open(os.path.join(self.out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return doc


def _x_grid(cfg):
    c = cfg["curve"]
    return np.linspace(c["x_min"], c["x_max"], c["points"])


def _curve_rows(curve: BistabilityCurve):
    labels = curve.branch_labels()
    for x, y, lab in zip(curve.x, curve.y, labels):
        yield (x, abs(y), y.real, y.imag, lab)


CURVE_COLUMNS = ["x", "y_mag", "re_y", "im_y", "branch_label"]


def _curve_summary(curve: BistabilityCurve, cfg: RunConfig) -> dict:
    hyst = hysteresis_sweep(curve, np.linspace(0.0, float(curve.y_mag.max()),
                                               cfg["curve"]["y_points"]))
    out = {
        "fold_count": curve.fold_count,
        "folds": [{"x": t.x, "y_mag": t.y_mag, "kind": t.kind} for t in curve.turning_points],
        "y_up": hyst.y_up, "y_down": hyst.y_down, "l_hys": hyst.l_hys,
        "max_abs_slope": max_abs_slope(curve),
    }
    try:
        out["percentage_errors"] = branch_percentage_errors(
            curve, cfg["metrics"]["samples"], cfg["metrics"]["mode"])
    except NotBistable:
        out["percentage_errors"] = None
    return out


def _map(executor):
    return executor.map if executor is not None else map


def run_spectrum(cfg, w, executor):
    s = cfg["spectrum"]
    grid = default_grid((s["delta2_min"], s["delta2_max"]), s["points"])
    pts = absorption_scan(cfg.atomic_params(), cfg.fields(), grid)
    w.table("spectrum", ["delta_2", "re_rho32", "im_rho32"],
            ((p.delta_2, p.re_rho32, p.im_rho32) for p in pts))
    return {"points": len(pts), "absorption_peaks": absorption_peaks(pts),
            "gain_dips": [{"delta_2": d, "im_rho32": v} for d, v in gain_dips(pts)],
            "min_im_rho32": float(np.nanmin([p.im_rho32 for p in pts])),
            "gaps": sum(p.is_gap for p in pts)}


def run_obcurve(cfg, w, executor):
    curve = trace_curve(cfg.atomic_params(), cfg.fields(), cfg.cavity(), _x_grid(cfg))
    w.table("curve", CURVE_COLUMNS, _curve_rows(curve))
    return _curve_summary(curve, cfg)


def run_obscan(cfg, w, executor):
    sc = cfg["scan"]
    params, base, cav, grid = cfg.atomic_params(), cfg.fields(), cfg.cavity(), _x_grid(cfg)

    def one(value):
        if sc["parameter"] == "cooperativity":
            return trace_curve(params, base, cav.__class__(value, cav.x_to_omega2), grid)
        return trace_curve(params, base.with_(**{sc["parameter"]: value}), cav, grid)

    curves = list(_map(executor)(one, sc["values"]))
    entries = []
    for k, (value, curve) in enumerate(zip(sc["values"], curves)):
        w.table(f"curve_{k:03d}", CURVE_COLUMNS, _curve_rows(curve))
        entries.append({"index": k, sc["parameter"]: value, **_curve_summary(curve, cfg)})
    return {"parameter": sc["parameter"], "curves": entries}


def run_hysteresis(cfg, w, executor):
    curve = trace_curve(cfg.atomic_params(), cfg.fields(), cfg.cavity(), _x_grid(cfg))
    res = hysteresis_sweep(curve, np.linspace(0.0, float(curve.y_mag.max()),
                                              cfg["curve"]["y_points"]))
    rows = [("forward", y, x) for y, x in res.forward_trace]
    rows += [("backward", y, x) for y, x in res.backward_trace]
    w.table("hysteresis", ["direction", "y_in", "x_out"], rows)
    return {"l_hys": res.l_hys, "y_up": res.y_up, "y_down": res.y_down,
            "jump_points": res.jump_points, "fold_count": curve.fold_count}


def run_oam(cfg, w, executor):
    o = cfg["oam"]
    b1, b3 = cfg.beams()
    values = o["values"]
    if o["sweep"] == "charge":
        if any(v != int(v) for v in values):
            raise ValidationError("charge sweep values must be integers")
        values = tuple(int(v) for v in values)
    results = oam_scan(b1, b3, cfg.fields(), cfg.cavity(), _x_grid(cfg), o["sweep"], values,
                       cfg.atomic_params(), executor)
    index = []
    for k, (value, curve) in enumerate(results):
        w.table(f"oam_{k:03d}", CURVE_COLUMNS, _curve_rows(curve))
        if o["sweep"] == "charge":
            f = effective_fields(b1.with_(topological_charge=value), b3, cfg.fields())
        else:
            f = effective_fields(b1.with_(azimuthal_angle=value),
                                 b3.with_(azimuthal_angle=value), cfg.fields())
        index.append({"index": k, "value": value, "omega_1": f.omega_1, "omega_3": f.omega_3,
                      **_curve_summary(curve, cfg)})
    return {"sweep": o["sweep"], "curves": index}


def _sim_config(cfg, drive, t_end):
    s = cfg["sim"]
    return RingSimConfig(cfg.cavity(), drive, t_end, dt=s["dt"], delay_steps=s["delay_steps"],
                         cavity_rate=s["cavity_rate"], n_slices=s["n_slices"],
                         record_every=s["record_every"])


def run_dynamics(cfg, w, executor):
    s = cfg["sim"]
    if s["drive"] == "constant":
        drive = piecewise_linear([0.0], [s["y_max"]])
    else:
        drive = triangular_ramp(s["y_max"], s["t_rise"])
    params, fields = cfg.atomic_params(), cfg.fields()
    pulse = cfg.pulse()
    rho0 = None
    if s["initial"] == "steady":
        f0 = fields if pulse is None else fields.with_(omega_1=pulse_omega1(pulse, 0.0))
        rho0 = steady_state(params, f0)
    tr = ring_cavity_simulate(params, fields, pulse, _sim_config(cfg, drive, s["t_end"]), rho0)
    w.table("trace", ["tau", "y_in", "x_out", "omega1", "label"],
            zip(tr.times, tr.y_in, tr.x_out, tr.omega1, tr.labels))
    on = np.array([lab == "on" for lab in tr.labels])
    up, down = sweep_jumps(tr) if s["drive"] == "triangle" else ([], [])
    return {"samples": len(tr.times), "final_x_out": tr.x_out[-1],
            "loop_area_on": loop_area(tr, on), "loop_area_off": loop_area(tr, ~on),
            "up_jumps": up, "down_jumps": down}


def run_cnot(cfg, w, executor):
    c = cfg["cnot"]
    params, fields = cfg.atomic_params(), cfg.fields()
    sim = _sim_config(cfg, None, 0.0)
    curve = trace_curve(params, fields.with_(omega_1=c["omega_on"]), sim.cavity, _x_grid(cfg))
    enc = TargetEncoding.from_curve(curve, c["overshoot"], ramp_time=c["ramp_time"],
                                    hold_time=c["hold_time"])
    rep = cnot_truth_table(params, fields, c["omega_on"], sim, c["omega_off"], enc,
                           _x_grid(cfg), executor=executor)
    w.table("truth_table", ["control", "target_in", "target_out", "x_out", "expected"],
            ((a, b, o, x, e[2]) for (a, b, o), x, e in zip(rep.truth_table, rep.outputs,
                                                            CNOT_TABLE)))
    return {"pass": rep.passed, "truth_table": [list(r) for r in rep.truth_table],
            "thresholds": rep.thresholds._asdict(), "outputs": list(rep.outputs),
            "encoding": {"y0": enc.y0, "y1_peak": enc.y1_peak, "y1_hold": enc.y1_hold}}


def run_metrics(cfg, w, executor):
    curve = trace_curve(cfg.atomic_params(), cfg.fields(), cfg.cavity(), _x_grid(cfg))
    m = cfg["metrics"]
    pe = branch_percentage_errors(curve, m["samples"], m["mode"])
    w.table("metrics", ["branch", "percentage_error", "absolute"],
            [("upper", pe["upper"], False), ("lower", pe["lower"], pe["lower_is_absolute"])])
    return {"percentage_errors": pe, **_curve_summary(curve, cfg)}


RUNNERS = {
    "spectrum": run_spectrum, "obcurve": run_obcurve, "obscan": run_obscan,
    "hysteresis": run_hysteresis, "oam": run_oam, "dynamics": run_dynamics,
    "cnot": run_cnot, "metrics": run_metrics,
}


def run_subcommand(cfg: RunConfig, out: str, fmt_kind: str = "csv", threads: int = 0) -> dict:
    """Execute ``cfg.subcommand`` and write its artifacts; returns the summary."""
    w = Writer(out, fmt_kind)
    n = threads or (os.cpu_count() or 1)
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            body = RUNNERS[cfg.subcommand](cfg, w, ex)
    else:
        body = RUNNERS[cfg.subcommand](cfg, w, None)
    return w.summary(cfg, body)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="optbistab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="configuration file (INI-style sections)")
    p.add_argument("--preset", help="parameter preset: paper-defaults or rb87-d1")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads for scans (default: all cores)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt",
                   help="data file format; the summary is always JSON")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one configuration value (repeatable)")
    p.add_argument("--version", action="version", version=__version__)
    return p


def _error(exc: Exception, out: str | None) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "field"):
        if getattr(exc, attr, None) is not None:
            doc[attr] = getattr(exc, attr)
    if out:
        try:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "error.json"), "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1, sort_keys=True)
                fh.write("\n")
        except OSError:
            pass
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            key, sep, value = item.partition("=")
            if not sep:
                raise ParseError("override must be SECTION.KEY=VALUE", field=item)
            overrides[key.strip()] = value.strip()
        cfg = load_config(args.config, preset=args.preset, overrides=overrides,
                          subcommand=args.subcommand)
    except (ParseError, ValidationError, OSError) as exc:
        print(json.dumps(_error(exc, args.out), sort_keys=True), file=sys.stderr)
        return 2
    try:
        summary = run_subcommand(cfg, args.out, args.fmt, args.threads)
    except (OptBistabError, ValueError) as exc:
        print(json.dumps(_error(exc, args.out), sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps({k: summary[k] for k in ("schema_version", "subcommand", "files")},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
