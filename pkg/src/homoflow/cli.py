"""Command-line driver: key=value configs in, CSV files and a run manifest out.

Usage::

    homoflow <command> [key=value ...] [--config FILE] [--out DIR] [--seed N]

A config file holds one ``key=value`` per line ('#' starts a comment) and
may name the command itself (``command=toy-mc``); values given on the
command line override the file.  Every run writes ``manifest.txt``, which
is itself a valid config, so ``homoflow --config DIR/manifest.txt``
reproduces the run.  Floats in CSVs are written with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy

from . import __version__
from .errors import (ClassificationError, ConfigError, HorizonError, HomoflowError,
                     NoCycleError, ResourceCapError, ToleranceError)

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE, EXIT_RESOURCE = 0, 2, 3, 4
THREADS_ENV = "HOMOFLOW_THREADS"


# ---------------------------------------------------------------------------
# typed parameters

def _fmt_float(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class Param:
    kind: str                     # float | int | str | floats | path
    default: Any = None
    check: Callable[[Any], str | None] | None = None
    required: bool = False

    def parse(self, key: str, text: str):
        text = text.strip()
        try:
            if self.kind == "float":
                value = float(text)
                if not math.isfinite(value):
                    raise ValueError("non-finite")
            elif self.kind == "int":
                f = float(text)
                if f != int(f):
                    raise ValueError("not an integer")
                value = int(f)
            elif self.kind == "floats":
                value = tuple(float(tok) for tok in text.replace(",", " ").split())
                if not all(math.isfinite(v) for v in value):
                    raise ValueError("need finite numbers")
            else:
                if not text and self.kind != "path":     # an empty path means unset
                    raise ValueError("empty")
                value = text
        except ValueError as exc:
            raise ConfigError(f"parameter {key!r}: cannot read {text!r} as {self.kind} ({exc})") from None
        self.validate(key, value)
        return value

    def validate(self, key: str, value):
        if self.check is not None:
            msg = self.check(value)
            if msg:
                raise ConfigError(f"parameter {key!r}: {msg}")

    def format(self, value) -> str:
        if self.kind == "float":
            return _fmt_float(value)
        if self.kind == "int":
            return str(int(value))
        if self.kind == "floats":
            return ",".join(_fmt_float(v) for v in value)
        return str(value)


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be non-negative"


def _all_positive(v):
    if not v:
        return "needs at least one value"
    return None if all(x > 0 for x in v) else "all values must be positive"


def _unit_open(v):
    return None if 0 < v < 1 else "must lie in (0, 1)"


def _choice(*options):
    def check(v):
        return None if v in options else "must be one of " + ", ".join(map(str, options))
    return check


def _three(v):
    return None if len(v) == 3 else "needs exactly three values"


def _three_positive(v):
    return _three(v) or _all_positive(v)


PROFILE_PARAMS = {
    "profile": Param("str", "lognormal", _choice("lognormal", "gaussian", "bump", "table")),
    "profile_table": Param("path", ""),           # CSV with columns X, value
    "profile_center": Param("float", 0.0),
    "profile_width": Param("float", 0.5, _positive),
    "profile_amplitude": Param("float", 1.0, _non_negative),
}

SCHEMAS: dict[str, dict[str, Param]] = {
    "classify": {
        "A": Param("str", required=True),
    },
    "moments": {
        "K1": Param("float", 1.0),
        "K2": Param("float", 0.0),
        "K3": Param("float", 1.0),
        "b": Param("float", 1.0, _positive),
        "T": Param("float", 150.0, _positive),
        "dt": Param("float", 0.1, _positive),
        "rtol": Param("float", 1e-9, _positive),
        "fit_lo": Param("float", 50.0, _non_negative),
        "fit_hi": Param("float", 0.0, _non_negative),   # 0 means T
    },
    "wkb": {
        "graph": Param("path", required=True),
        "cap": Param("int", 10_000, _positive),
    },
    "toy-det": {
        "beta": Param("float", 2.0, _positive),
        "rate": Param("str", "constant", _choice("constant", "adiabatic")),
        "epsilon": Param("float", 0.05, _positive),
        "T": Param("float", 400.0, _positive),
        "dt": Param("float", 0.5, _positive),
        "field": Param("int", 0, _choice(0, 1)),
        "field_stride": Param("int", 0, _non_negative),   # 0: no long-format field.csv
        "x_lo": Param("float", -5.0),
        "x_hi": Param("float", 0.0),                  # 0 means automatic
        "dx": Param("float", 0.02, _positive),
        **PROFILE_PARAMS,
    },
    "toy-sc": {
        "a": Param("float", 0.5, _unit_open),
        "T": Param("float", 1e4, _positive),
        "dt": Param("float", 0.5, _positive),
        "stride": Param("int", 1, _positive),
        **PROFILE_PARAMS,
    },
    "toy-mc": {
        "n": Param("int", 100_000, lambda v: None if v >= 4 else "must be at least 4"),
        "T": Param("float", 100.0, _positive),
        "mode": Param("str", "constant", _choice("constant", "selfconsistent")),
        "epsilon": Param("float", 0.05, _non_negative),
        "a": Param("float", 0.5, _unit_open),
        "records": Param("floats", ()),                # empty means automatic
        "orders": Param("floats", (1.0,)),
        "chunk": Param("int", 1 << 16, _positive),
        **PROFILE_PARAMS,
    },
    "dispersion": {
        "epsilon": Param("floats", (1e-3, 1e-4, 1e-5), _all_positive),
        "beta": Param("float", 2.0, _non_negative),
        "k": Param("floats", (0.0,)),
        "front": Param("int", 0, _choice(0, 1)),
    },
    "frozen": {
        "task": Param("str", "decay", _choice("decay", "mass", "energy", "weak")),
        "gamma": Param("floats", (0.0, -0.5, -1.5),
                       lambda v: None if all(g > -2 for g in v) else "needs gamma > -2"),
        "tau": Param("floats", tuple(float(x) for x in range(15))),
        "times": Param("floats", (1.0, 2.0, 5.0, 10.0, 50.0)),
        "sigmas": Param("floats", (1.0, 0.7, 1.3), _three_positive),
        "K": Param("float", 1.0),
        "phi_center": Param("floats", (0.0, 0.0, 0.0), _three),
        "phi_radii": Param("floats", (2.0, 2.0, 2.0), _three_positive),
        "n": Param("int", 73, lambda v: None if v >= 9 else "must be at least 9"),
    },
    "entropy": {
        "flow": Param("str", "maxwellian",
                      _choice("maxwellian", "shear", "cylindrical", "homogeneous")),
        "rho": Param("floats", (1.0, 2.5, 0.1), _all_positive),
        "theta": Param("floats", (1.0, 0.3, 4.0), _all_positive),
        "times": Param("floats", (1.0, 2.0, 5.0, 10.0, 50.0)),
        "sigmas": Param("floats", (1.0, 0.7, 1.3), _three_positive),
        "K": Param("float", 1.0),
        "n": Param("int", 73, lambda v: None if v >= 9 else "must be at least 9"),
    },
    "plot": {
        "kind": Param("str", required=True,
                      check=_choice("moments", "epsilon", "front", "decay", "dispersion")),
        "csv": Param("path", required=True),
    },
}


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "."

    def __post_init__(self):
        if self.command not in SCHEMAS:
            raise ConfigError(f"unknown command {self.command!r}; "
                              f"choose from {', '.join(SCHEMAS)}")
        schema = SCHEMAS[self.command]
        full = {}
        for key, value in self.params.items():
            if key not in schema:
                raise ConfigError(f"parameter {key!r} is not used by {self.command!r}")
            full[key] = value
        for key, p in schema.items():
            if key not in full:
                if p.required:
                    raise ConfigError(f"parameter {key!r} is required by {self.command!r}")
                full[key] = p.default
            else:
                p.validate(key, full[key])
        object.__setattr__(self, "params", full)
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("parameter 'seed' must be a non-negative integer")

    @classmethod
    def from_pairs(cls, pairs: list[tuple[str, str]], command: str | None = None) -> "RunConfig":
        raw: dict[str, str] = {}
        for key, value in pairs:
            raw[key] = value
        command = command or raw.pop("command", None)
        raw.pop("command", None)
        if command is None:
            raise ConfigError("no command given")
        if command not in SCHEMAS:
            raise ConfigError(f"unknown command {command!r}; choose from {', '.join(SCHEMAS)}")
        seed_text = raw.pop("seed", "0")
        try:
            seed = int(seed_text)
        except ValueError:
            raise ConfigError(f"parameter 'seed': {seed_text!r} is not an integer") from None
        out = raw.pop("out", ".")
        schema = SCHEMAS[command]
        params = {}
        for key, text in raw.items():
            if key not in schema:
                raise ConfigError(f"parameter {key!r} is not used by {command!r}")
            params[key] = schema[key].parse(key, text)
        return cls(command, params, seed, out)

    @classmethod
    def parse(cls, text: str, overrides: list[str] = (), command: str | None = None) -> "RunConfig":
        pairs = [_split_pair(line, f"line {n}") for n, line in _config_lines(text)]
        pairs += [_split_pair(item, "override") for item in overrides]
        return cls.from_pairs(pairs, command)

    def serialize(self) -> str:
        schema = SCHEMAS[self.command]
        lines = [f"command={self.command}", f"seed={self.seed}", f"out={self.out}"]
        for key in sorted(self.params):
            lines.append(f"{key}={schema[key].format(self.params[key])}")
        return "\n".join(lines) + "\n"


def _config_lines(text: str):
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield n, line


def _split_pair(item: str, where: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"{where}: expected key=value, got {item!r}")
    key, value = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"{where}: empty key")
    return key, value.strip()


# ---------------------------------------------------------------------------
# output helpers

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, rows) -> Path:
    rows = list(rows)
    if not rows:
        raise ToleranceError(f"no rows to write to {path.name}")
    header = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(row[k]) for k in header])
    return path


def write_block(path: Path, items: dict) -> Path:
    with open(path, "w") as fh:
        for key, value in items.items():
            fh.write(f"{key}={_cell(value)}\n")
    return path


def thread_count() -> int:
    text = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(text)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={text!r} is not an integer") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1")
    return n


def _profile(p: dict):
    from .profiles import InitialProfile

    if p["profile"] == "table":
        return _table_profile(p["profile_table"])
    if p["profile"] == "lognormal":
        return InitialProfile.lognormal_unit_mass(p["profile_center"], p["profile_width"])
    return InitialProfile(p["profile"], p["profile_center"], p["profile_width"],
                          p["profile_amplitude"])


def _table_profile(path_text: str):
    from .profiles import InitialProfile

    path = Path(path_text)
    if not path_text or not path.is_file():
        raise ConfigError(f"parameter 'profile_table': no such file {path_text!r}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"X", "value"} <= set(rows[0]):
        raise ConfigError(f"parameter 'profile_table': {path.name} needs columns X, value")
    try:
        grid = tuple(float(r["X"]) for r in rows)
        values = tuple(float(r["value"]) for r in rows)
    except ValueError as exc:
        raise ConfigError(f"parameter 'profile_table': {exc}") from None
    return InitialProfile("table", grid=grid, values=values)


# ---------------------------------------------------------------------------
# commands; each returns (written files, summary lines)

def _run_classify(cfg: RunConfig, out: Path):
    from .flow_kinematics import DeformationMatrix, classify_flow

    a = DeformationMatrix.parse(cfg.params["A"])
    res = classify_flow(a)
    row = res.csv_row()
    row["horizon"] = a.horizon
    files = [write_csv(out / "classify.csv", [row]), write_block(out / "report.txt", row)]
    return files, [f"case={res.case_label}", f"horizon={_cell(a.horizon)}"]


def _run_moments(cfg: RunConfig, out: Path):
    from .collision_moments import (fit_growth, integrate_moments, leading_growth_coefficient,
                                    subleading_growth_rate)
    from .wkb import dominant_cycles, moment_system_graph

    p = cfg.params
    T, dt = p["T"], p["dt"]
    n = int(round(T / dt))
    t_eval = np.linspace(0.0, T, n + 1)
    series = integrate_moments(np.eye(3), p["K1"], p["K2"], p["K3"], p["b"], T,
                               rtol=p["rtol"], t_eval=t_eval)
    window = (p["fit_lo"], p["fit_hi"] or T)
    fit = fit_growth(series, window)
    top = dominant_cycles(moment_system_graph(p["K1"], p["K3"], p["b"]))[0]
    c_wkb = top.leading_coefficient
    S = series.log_scale + np.log(np.abs(series.unit).max(axis=1))
    rows = []
    for row, s, t in zip(series.csv_rows(), S, series.times):
        row["S"] = s
        row["S_fit"] = fit.c1 * t ** fit.exponent + fit.c2 * t + fit.c3
        row["S_wkb"] = c_wkb * t ** top.exponent
        rows.append(row)
    block = {
        "fit_lo": window[0], "fit_hi": window[1], "c1": fit.c1, "c2": fit.c2, "c3": fit.c3,
        "exponent": fit.exponent, "c1_wkb": c_wkb, "exponent_wkb": top.exponent,
        "dominant_cycle": top.describe(),
        "c1_closed_form": leading_growth_coefficient(p["K1"], p["K3"], p["b"]),
        "c2_predicted": subleading_growth_rate(p["b"]),
        "c1_rel_error": fit.c1 / c_wkb - 1.0, "fit_condition": fit.condition,
        "fit_residual_rms": fit.residual_rms,
    }
    files = [write_csv(out / "moments.csv", rows), write_csv(out / "fit.csv", [block]),
             write_block(out / "fit.txt", block)]
    return files, [f"c1={_cell(fit.c1)}", f"c1_wkb={_cell(c_wkb)}", f"c2={_cell(fit.c2)}"]


def _run_wkb(cfg: RunConfig, out: Path):
    from .wkb import analyse_cycle, dominant_cycles, enumerate_cycles, parse_graph

    path = Path(cfg.params["graph"])
    if not path.is_file():
        raise ConfigError(f"parameter 'graph': no such file {str(path)!r}")
    graph = parse_graph(path.read_text())
    cap = cfg.params["cap"]
    top = dominant_cycles(graph, cap)
    best = {r.describe() for r in top}
    reports = [analyse_cycle(graph, c) for c in enumerate_cycles(graph, cap)]
    reports.sort(key=lambda r: (-r.ratio, -r.leading_coefficient, r.describe()))
    rows = [{"cycle": r.describe(), "length": r.length, "thick": r.thick_count,
             "weight_product": r.weight_product, "exponent": r.exponent,
             "coefficient": r.leading_coefficient, "dominant": r.describe() in best}
            for r in reports]
    files = [write_csv(out / "cycles.csv", rows), write_block(out / "wkb.txt", {
        "cycles": len(reports), "dominant_cycle": top[0].describe(),
        "ties": len(top), "exponent": top[0].exponent,
        "coefficient": top[0].leading_coefficient})]
    return files, [f"dominant={top[0].describe()}", f"exponent={_cell(top[0].exponent)}",
                   f"coefficient={_cell(top[0].leading_coefficient)}"]


def _run_toy_det(cfg: RunConfig, out: Path):
    from .dispersion import front_coefficients, front_profile, predicted_moment_growth
    from .toy_model_det import reconstruct_total_moment, solve_field, solve_lambda_volterra

    p = cfg.params
    prof = _profile(p)
    beta, T, dt = p["beta"], p["T"], p["dt"]
    if p["rate"] == "constant":
        eps = p["epsilon"]
    else:
        amp = p["epsilon"]
        eps = lambda t: amp / (1.0 + np.asarray(t))
    series = solve_lambda_volterra(beta, eps, prof, T, dt)
    files = [write_csv(out / "lambda.csv", series.csv_rows())]
    summary = [f"log_lambda_T={_cell(series.log_values[-1])}"]
    if p["rate"] == "constant":
        window = (0.75 * T, T)
        pred = predicted_moment_growth(p["epsilon"], beta, prof.moment(beta))
        rate = series.growth_rate(window)
        files.append(write_csv(out / "growth.csv", [{
            "fit_lo": window[0], "fit_hi": window[1], "rate": rate,
            "predicted_rate": pred.rate, "asymptotic_rate": pred.rate_asymptotic,
            "predicted_amplitude": pred.amplitude}]))
        summary.append(f"rate={_cell(rate)} predicted={_cell(pred.rate)}")
    if p["field"]:
        x_hi = p["x_hi"] or math.ceil(prof.support[1] + math.log1p(T) + 1.0)
        fld = solve_field(prof, eps, (p["x_lo"], x_hi), p["dx"], T, dt)
        lam_field = fld.moment(beta)
        rows = [{"t": t, "lambda_field": lf, "lambda_volterra": lv,
                 "total_moment": reconstruct_total_moment(fld, prof, beta, i)}
                for i, (t, lf, lv) in enumerate(zip(fld.t, lam_field, series.values))]
        files.append(write_csv(out / "field_moments.csv", rows))
        if p["field_stride"]:
            keep = set(range(0, fld.t.size, p["field_stride"])) | {fld.t.size - 1}
            files.append(write_csv(out / "field.csv", (
                row for i, t in enumerate(fld.t) if i in keep
                for row in ({"t": t, "X": x, "phi": v} for x, v in zip(fld.X, fld.values[i])))))
        if p["rate"] == "constant":
            coeffs = front_coefficients(p["epsilon"], beta)
            t = fld.t[-1]
            xi = (fld.X + coeffs.A1 * t) / math.sqrt(coeffs.A2 * t)
            psi = fld.values[-1] * np.exp(beta * fld.X)
            q = front_profile(xi)
            from scipy import integrate
            psi_n = psi / integrate.trapezoid(psi, xi)
            q_n = q / integrate.trapezoid(q, xi)
            files.append(write_csv(out / "front.csv", [
                {"xi": a, "psi": b, "gaussian": c} for a, b, c in zip(xi, psi_n, q_n)]))
            files.append(write_block(out / "front.txt", {
                "epsilon": coeffs.epsilon, "beta": coeffs.beta, "z0": coeffs.z0,
                "A1": coeffs.A1, "A2": coeffs.A2, "B": coeffs.B,
                "front_speed": coeffs.front_speed, "t": t}))
    return files, summary


def _run_toy_sc(cfg: RunConfig, out: Path):
    from .toy_model_det import solve_selfconsistent

    p = cfg.params
    res = solve_selfconsistent(p["a"], _profile(p), p["T"], p["dt"])
    rows = list(res.csv_rows())
    keep = rows[::p["stride"]]
    if keep[-1] is not rows[-1]:
        keep.append(rows[-1])
    files = [write_csv(out / "selfconsistent.csv", keep)]
    return files, [f"t_epsilon_T={_cell(res.t_epsilon()[-1])}", f"target={_cell(1 - p['a'])}"]


def _default_records(p: dict) -> tuple[float, ...]:
    T = p["T"]
    if p["mode"] == "selfconsistent":
        return tuple(float(x) for x in np.geomspace(min(1.0, T), T, 41))
    return tuple(float(x) for x in np.linspace(T / 10, T, 10))


def _run_toy_mc(cfg: RunConfig, out: Path):
    from .toy_model_mc import epsilon_trace_check, simulate

    p = cfg.params
    records = p["records"] or _default_records(p)
    traj = simulate(p["n"], _profile(p), p["T"], cfg.seed, records, orders=p["orders"],
                    mode=p["mode"], epsilon=p["epsilon"], a=p["a"], threads=thread_count(),
                    chunk_size=p["chunk"])
    rows = []
    for row in traj.csv_rows():
        row["t_epsilon"] = row["t"] * row["epsilon"]
        rows.append(row)
    files = [write_csv(out / "mc.csv", rows)]
    summary = [f"records={len(rows)}"]
    if p["mode"] == "selfconsistent":
        fit = epsilon_trace_check(traj, p["a"])
        summary.append(f"t_epsilon={_cell(fit.constant)} target={_cell(fit.target)}")
    return files, summary


def _run_dispersion(cfg: RunConfig, out: Path):
    from .dispersion import asymptotic_root, front_coefficients, solve_root

    p = cfg.params
    beta = p["beta"]
    rows = []
    for eps in p["epsilon"]:
        for k in p["k"]:
            r = solve_root(eps, k, beta)
            za = asymptotic_root(eps, k, beta) if beta > 0 else complex("nan")
            rows.append({"epsilon": eps, "beta": beta, "k": k, "re_z0": r.z0.real,
                         "im_z0": r.z0.imag, "residual": r.residual,
                         "re_asymptotic": za.real, "im_asymptotic": za.imag})
    files = [write_csv(out / "dispersion.csv", rows)]
    if p["front"]:
        with open(out / "front.txt", "w") as fh:
            for eps in p["epsilon"]:
                c = front_coefficients(eps, beta)
                fh.write(f"[epsilon={_cell(eps)}]\n")
                for key in ("beta", "z0", "A1", "A2", "B"):
                    fh.write(f"{key}={_cell(getattr(c, key))}\n")
                fh.write(f"front_speed={_cell(c.front_speed)}\n")
        files.append(out / "front.txt")
    return files, [f"roots={len(rows)}"]


def _run_frozen(cfg: RunConfig, out: Path):
    from .frozen_flows import (AnisotropicGaussian, BumpTestFunction, FreeFlowRegime,
                               collision_rate_decay, free_flow_mass, shear_energy_ratio,
                               weak_limit_check)

    p = cfg.params
    G0 = AnisotropicGaussian(tuple(p["sigmas"]))
    task = p["task"]
    if task == "decay":
        rows, summary = [], []
        for g in p["gamma"]:
            fit = collision_rate_decay(G0, g, p["tau"])
            rows.extend(fit.csv_rows())
            summary.append(f"gamma={_cell(g)} slope={_cell(fit.slope)}")
        return [write_csv(out / "decay.csv", rows)], summary
    if task == "mass":
        rows = []
        for regime in FreeFlowRegime:
            for t in p["times"]:
                m = free_flow_mass(regime, G0, t, p["K"], n=p["n"])
                rows.append({"regime": regime.value, "time": t, "mass": m, "error": m - G0.mass})
        worst = max(abs(r["error"]) for r in rows)
        return [write_csv(out / "mass.csv", rows)], [f"max_mass_error={_cell(worst)}"]
    if task == "energy":
        limit = G0.second_moment(1) / G0.mass
        rows = [{"t": t, "ratio": shear_energy_ratio(G0, p["K"], t, n=p["n"]), "limit": limit}
                for t in p["times"]]
        return [write_csv(out / "energy.csv", rows)], [f"ratio_T={_cell(rows[-1]['ratio'])}"]
    phi = BumpTestFunction(tuple(p["phi_center"]), tuple(p["phi_radii"]))
    rep = weak_limit_check(G0, p["K"], p["tau"], phi, n=max(p["n"], 121))
    rows = [{"tau": t, "pairing": v, "limit": rep.limit, "gap": g}
            for t, v, g in zip(rep.taus, rep.pairings, rep.gaps)]
    return [write_csv(out / "weak.csv", rows)], [f"final_gap={_cell(rep.gaps[-1])}",
                                                 f"decreasing={int(rep.decreasing)}"]


def _run_entropy(cfg: RunConfig, out: Path):
    from .entropy import entropy_report, tabulate_maxwellian
    from .frozen_flows import AnisotropicGaussian, FreeFlowRegime, FreeFlowSolution

    p = cfg.params
    rows = []
    if p["flow"] == "maxwellian":
        if len(p["rho"]) != len(p["theta"]):
            raise ConfigError("parameters 'rho' and 'theta' must have the same length")
        for rho, theta in zip(p["rho"], p["theta"]):
            row = entropy_report(tabulate_maxwellian(rho, theta)).csv_row(0.0)
            row["theta"] = theta
            rows.append(row)
    else:
        regime = {"shear": FreeFlowRegime.SIMPLE_SHEAR,
                  "cylindrical": FreeFlowRegime.CYLINDRICAL_DILATATION,
                  "homogeneous": FreeFlowRegime.HOMOGENEOUS_DILATATION}[p["flow"]]
        G0 = AnisotropicGaussian(tuple(p["sigmas"]))
        sol = FreeFlowSolution(regime, G0, p["K"], n=p["n"])
        rows = [entropy_report(sol.tabulate(t)).csv_row(t) for t in p["times"]]
    worst = max(abs(r["residual"]) for r in rows)
    return [write_csv(out / "entropy.csv", rows)], [f"max_residual={_cell(worst)}"]


# ---------------------------------------------------------------------------
# plot scripts

PLOT_COLUMNS = {
    "moments": ("t", "S", "S_fit", "S_wkb"),
    "epsilon": ("t", "t_epsilon"),
    "front": ("xi", "psi", "gaussian"),
    "decay": ("gamma", "tau", "rate", "fitted_slope", "predicted_slope"),
    "dispersion": ("epsilon", "beta", "k", "re_z0"),
}

_PLOT_BODIES = {
    "moments": """\
t, S, S_fit, S_wkb = col("t"), col("S"), col("S_fit"), col("S_wkb")
plt.plot(t, S, label="log scale S(t)")
plt.plot(t, S_fit, "--", label="c1 t^(5/3) + c2 t + c3 fit")
plt.plot(t, S_wkb, ":", label="leading cycle prediction")
plt.xlabel("t"); plt.ylabel("S")
""",
    "epsilon": """\
t, te = col("t"), col("t_epsilon")
sel = t > 0
plt.semilogx(t[sel], te[sel], label="t * eps(t)")
plt.xlabel("t"); plt.ylabel("t eps")
""",
    "front": """\
xi = col("xi")
plt.plot(xi, col("psi"), label="tilted field, normalised")
plt.plot(xi, col("gaussian"), "--", label="Gaussian front")
plt.xlabel("xi"); plt.xlim(-8, 8)
""",
    "decay": """\
g, tau, rate = col("gamma"), col("tau"), col("rate")
for gv in sorted(set(g)):
    sel = g == gv
    slope, pred = col("fitted_slope")[sel][0], col("predicted_slope")[sel][0]
    plt.semilogy(tau[sel], rate[sel], "o-",
                 label=f"gamma={gv:g}: slope {slope:.3f} (predicted {pred:.3f})")
plt.xlabel("tau"); plt.ylabel("collision rate")
""",
    "dispersion": """\
eps, beta, k, z = col("epsilon"), col("beta"), col("k"), col("re_z0")
sel = k == 0
e, zz, b = eps[sel], z[sel], beta[sel][0]
plt.loglog(e, zz, "o-", label="z0(0; eps)")
plt.loglog(e, zz[-1] * (e / e[-1]) ** (1.0 / b), "--", label=f"slope 1/beta = {1.0 / b:g}")
plt.xlabel("eps"); plt.ylabel("z0")
""",
}


def emit_plot_script(csv_path: str | Path, kind: str, script_path: str | Path) -> Path:
    """Write a standalone matplotlib script plotting ``csv_path`` as ``kind``."""
    if kind not in PLOT_COLUMNS:
        raise ConfigError(f"unknown plot kind {kind!r}")
    csv_path = Path(csv_path).resolve()
    if not csv_path.is_file():
        raise ConfigError(f"parameter 'csv': no such file {str(csv_path)!r}")
    with open(csv_path, newline="") as fh:
        header = next(csv.reader(fh), [])
    for name in PLOT_COLUMNS[kind]:
        if name not in header:
            raise ConfigError(f"column {name!r} missing from {csv_path.name} (needed for {kind})")
    png = Path(script_path).with_suffix(".png").resolve()
    script = f'''"""Plot {csv_path.name} ({kind})."""
import csv

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

with open({str(csv_path)!r}, newline="") as fh:
    data = list(csv.DictReader(fh))


def col(name):
    return np.array([float(r[name]) for r in data])


plt.figure(figsize=(6, 4))
{_PLOT_BODIES[kind]}plt.legend()
plt.tight_layout()
plt.savefig({str(png)!r}, dpi=150)
'''
    path = Path(script_path)
    path.write_text(script)
    return path


def _run_plot(cfg: RunConfig, out: Path):
    kind = cfg.params["kind"]
    path = emit_plot_script(cfg.params["csv"], kind, out / f"plot_{kind}.py")
    return [path], [f"script={path}"]


COMMANDS = {
    "classify": _run_classify,
    "moments": _run_moments,
    "wkb": _run_wkb,
    "toy-det": _run_toy_det,
    "toy-sc": _run_toy_sc,
    "toy-mc": _run_toy_mc,
    "dispersion": _run_dispersion,
    "frozen": _run_frozen,
    "entropy": _run_entropy,
    "plot": _run_plot,
}


def _manifest(cfg: RunConfig, files, wall: float) -> str:
    lines = [cfg.serialize().rstrip("\n"),
             f"# homoflow {__version__}",
             f"# python {platform.python_version()}",
             f"# numpy {np.__version__}",
             f"# scipy {scipy.__version__}",
             f"# threads {os.environ.get(THREADS_ENV, '1')}",
             f"# wall_time_s {wall:.3f}"]
    lines += [f"# output {Path(f).name}" for f in files]
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig) -> list[Path]:
    """Execute a configured command; write its outputs and ``manifest.txt``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files, summary = COMMANDS[cfg.command](cfg, out)
    wall = time.perf_counter() - start
    manifest = out / "manifest.txt"
    manifest.write_text(_manifest(cfg, files, wall))
    for line in summary:
        print(line)
    return list(files) + [manifest]


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ResourceCapError):
        return EXIT_RESOURCE
    if isinstance(exc, ToleranceError):
        return EXIT_TOLERANCE
    if isinstance(exc, (ConfigError, HorizonError, ClassificationError, NoCycleError)):
        return EXIT_CONFIG
    return EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="homoflow", description=__doc__.split("\n\n")[0])
    ap.add_argument("items", nargs="*", metavar="command|key=value",
                    help=f"command ({', '.join(COMMANDS)}) followed by parameter overrides")
    ap.add_argument("--config", help="key=value config file (a previous manifest works)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="random seed")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    items = list(args.items)
    command = None
    if items and "=" not in items[0]:
        command = items.pop(0)
    overrides = items
    if args.out is not None:
        overrides.append(f"out={args.out}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        text = ""
        if args.config:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        cfg = RunConfig.parse(text, overrides, command)
        run(cfg)
    except HomoflowError as exc:
        print(f"homoflow: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
