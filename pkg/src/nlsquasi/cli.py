"""Command line driver: ``nlsquasi <command> [--config FILE] [--set key=value ...]``.

Configuration files are INI-style. Keys in ``[general]`` apply to every command,
keys in a section named after the command override them, and ``--set`` or the
dedicated flags override both. See README.md for the key list.

Exit status: 0 all windows pass, 1 a criterion failed, 2 usage/configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from . import analysis, dynamics, hambra
from .lattice import (CONVENTION, FourierState, InitialDataSpec, NormSpec, make_initial_data, power,
                      random_state, weighted_norm)
from .nfflow import NormalFormMap

COMMANDS = ("simulate", "oracle", "nf-check", "nf-deviation", "scaling", "report")

DEFAULTS: Dict[str, Dict[str, str]] = {
    "simulate": dict(N="256", eps="0.1", T="1.0", dt="1e-3", scheme="strang-splitstep", order="2",
                     dispersion_exponent="2", profile="gaussian", amplitude="1.0",
                     snapshot_every="10", norms="2:0,inf:0,1:0", focusing="true"),
    "oracle": dict(a="0.3", n0="3", T="1.0", dt="1e-3", small_N="8", small_T="0.5",
                   small_amplitude="0.1", seed="7", tol="1e-11"),
    "nf-check": dict(nsym="4"),
    "nf-deviation": dict(eps="0.4,0.2,0.1", N="64", substeps="16", f2_substeps="4",
                         h="1e-4", dt="1e-5", check="true"),
    "scaling": dict(eps="0.4,0.2,0.1,0.05", N="256", T="1.0", dt="1e-3", norm_p="2",
                    norm_delta="0", dispersion_exponent="2", order="2", workers="1",
                    envelope_eps="0.1", envelope_T="0.25,0.5,1.0"),
    "report": dict(nsym="4,6", quick="false"),
}
GENERAL = dict(outdir="out")

WINDOWS = {
    "nearness_linf": (1.2, 1.8),
    "nearness_l1": (0.2, 0.8),
    "error_linf": (1.2, 1.8),
    "error_l2": (0.7, 1.3),
    "theorem_slope": (0.8, 1.3),
    "envelope_factor": (0.5, 2.5),
}


class ConfigError(ValueError):
    pass


# -- configuration ----------------------------------------------------------------

@dataclass
class ExperimentConfig:
    command: str
    values: Dict[str, str]

    def str(self, key: str) -> str:
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"missing key {key!r} for {self.command}") from None

    def int(self, key: str, positive: bool = True) -> int:
        try:
            v = int(self.str(key))
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {self.values[key]!r}") from None
        if positive and v <= 0:
            raise ConfigError(f"{key} must be positive")
        return v

    def float(self, key: str, positive: bool = True) -> float:
        try:
            v = float(self.str(key))
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {self.values[key]!r}") from None
        if not np.isfinite(v) or (positive and v <= 0):
            raise ConfigError(f"{key} must be a positive finite number")
        return v

    def floats(self, key: str) -> List[float]:
        try:
            vals = [float(x) for x in self.str(key).split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"{key} must be a comma separated list of numbers") from None
        if any(not v > 0 for v in vals):
            raise ConfigError(f"{key} entries must be positive")
        if len(set(vals)) != len(vals):
            raise ConfigError(f"{key} entries must be distinct")
        return vals

    def ints(self, key: str) -> List[int]:
        try:
            return [int(x) for x in self.str(key).split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"{key} must be a comma separated list of integers") from None

    def bool(self, key: str) -> bool:
        v = self.str(key).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean")

    def norms(self, key: str = "norms") -> List[NormSpec]:
        out = []
        for item in self.str(key).split(","):
            p, _, d = item.strip().partition(":")
            try:
                out.append(NormSpec(float(p), float(d or 0)))
            except ValueError as exc:
                raise ConfigError(f"bad norm {item!r}: {exc}") from None
        return out

    @property
    def outdir(self) -> Path:
        return Path(self.str("outdir"))

    def header(self) -> str:
        lines = [f"command = {self.command}", f"convention_tag = {CONVENTION}"]
        lines += [f"{k} = {self.values[k]}" for k in sorted(self.values)]
        return "".join(f"# {line}\n" for line in lines)


def load_config(command: str, path: str | None, overrides: Dict[str, str]) -> ExperimentConfig:
    values = dict(GENERAL)
    values.update(DEFAULTS[command])
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path!r} not found")
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for section in ("general", command):
            if parser.has_section(section):
                values.update(parser.items(section))
    values.update(overrides)
    return ExperimentConfig(command, values)


# -- output -----------------------------------------------------------------------

def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return "%.17g" % float(x)


def write_csv(path: Path, cfg: ExperimentConfig, columns: List[str], rows: List[list]):
    buf = io.StringIO()
    buf.write(cfg.header())
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(x) for x in row) + "\n")
    atomic_write(path, buf.getvalue())


def write_json(path: Path, cfg: ExperimentConfig, payload: dict):
    doc = {"command": cfg.command, "convention_tag": CONVENTION, "config": dict(sorted(cfg.values.items()))}
    doc.update(payload)
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, analysis.ScalingFit):
        return {"slope": o.slope, "intercept": o.intercept, "r2": o.r2, "points": o.points}
    return str(o)


def criterion(name: str, value: float, window, passed: bool, key: str = "slope") -> dict:
    return {"name": name, key: float(value), "window": list(window), "pass": bool(passed)}


# -- commands ---------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig) -> List[dict]:
    N = cfg.int("N")
    eps = cfg.float("eps")
    profile = cfg.str("profile")
    amplitude = cfg.float("amplitude", positive=False)
    if profile == "zero":
        u0 = FourierState.zeros(N)
    else:
        try:
            u0 = make_initial_data(InitialDataSpec(profile, eps, amplitude=amplitude), N)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        scheme = dynamics.SchemeSpec(cfg.str("scheme"), cfg.float("dt"), cfg.int("dispersion_exponent"),
                                     cfg.bool("focusing"), cfg.int("order"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sigma = scheme.dispersion_exponent
    traj = dynamics.evolve(u0, cfg.float("T"), scheme, snapshot_every=cfg.int("snapshot_every"))
    norms = [NormSpec(2.0), NormSpec(np.inf), NormSpec(1.0)]
    rep = analysis.deviation_curve(traj, power(u0), norms, sigma)
    rows = [[t, rep["l2"][k], rep["linf"][k], rep["l1"][k], traj.power[k], traj.energy[k]]
            for k, t in enumerate(traj.times)]
    write_csv(cfg.outdir / "deviation.csv", cfg,
              ["t", "dev_l2", "dev_linf", "dev_l1", "l2_power", "energy"], rows)
    extra = [ns for ns in cfg.norms() if ns.label not in ("l2", "linf", "l1")]
    if extra:
        rep2 = analysis.deviation_curve(traj, power(u0), extra, sigma)
        write_csv(cfg.outdir / "deviation_weighted.csv", cfg, ["t"] + [f"dev_{ns.label.replace(',', '_d')}" for ns in extra],
                  [[t] + [rep2[ns.label][k] for ns in extra] for k, t in enumerate(traj.times)])
    p0 = traj.power[0]
    drift = float(np.max(np.abs(traj.power - p0)) / p0) if p0 > 0 else 0.0
    return [criterion("simulate_l2_drift", drift, (0, 1e-10), drift <= 1e-10, key="residual")]


def cmd_oracle(cfg: ExperimentConfig) -> List[dict]:
    a, n0, T = cfg.float("a"), cfg.int("n0", positive=False), cfg.float("T")
    N = max(abs(n0), 1)
    u0 = FourierState.from_modes(N, {n0: a})
    scheme = dynamics.SchemeSpec("strang-splitstep", cfg.float("dt"))
    traj = dynamics.evolve(u0, T, scheme, snapshot_every=max(1, int(round(T / cfg.float("dt"))) // 10))
    plane_err = max(s.distance(dynamics.plane_wave_oracle(a, n0, t, N)[0]) for t, s in zip(traj.times, traj.states))
    rng = np.random.default_rng(cfg.int("seed", positive=False))
    small = random_state(cfg.int("small_N"), rng, cfg.float("small_amplitude"))
    sT = cfg.float("small_T")
    ref = dynamics.ode_oracle(small, sT, cfg.float("tol"))
    ours = dynamics.evolve(small, sT, dynamics.SchemeSpec("rk4-interaction-picture", cfg.float("dt")),
                           snapshot_every=10**9).final
    small_err = ours.distance(ref)
    rows = [["plane_wave", plane_err, 1e-8], ["small_N_reference", small_err, 1e-6]]
    write_csv(cfg.outdir / "oracle.csv", cfg, ["check", "l2_error", "tolerance"], rows)
    return [criterion("oracle_plane_wave", plane_err, (0, 1e-8), plane_err <= 1e-8, key="residual"),
            criterion("oracle_small_N", small_err, (0, 1e-6), small_err <= 1e-6, key="residual")]


def cmd_nf_check(cfg: ExperimentConfig) -> List[dict]:
    results = []
    for nsym in cfg.ints("nsym"):
        if not 0 <= nsym <= hambra.MAX_NSYM:
            raise ConfigError(f"nsym must lie in [0, {hambra.MAX_NSYM}]")
        rep = analysis.identity_report(nsym)
        buf = io.StringIO()
        buf.write(cfg.header())
        buf.write(f"N_sym = {nsym}\n")
        for name, count in rep["counts"].items():
            buf.write(f"count {name} = {count}\n")
        for key, ident in rep["identities"].items():
            buf.write(f"identity {key} : {ident['name']} : max_residual = {ident['max_residual']}"
                      f" : nonzero_terms = {ident['nonzero_terms']} : {'PASS' if ident['pass'] else 'FAIL'}\n")
        f1 = rep["f1_closed_form"]
        buf.write(f"f1_closed_form : mismatches = {len(f1['mismatches'])} : {'PASS' if f1['pass'] else 'FAIL'}\n")
        atomic_write(cfg.outdir / f"nf_check_nsym{nsym}.txt", buf.getvalue())
        worst = max((float(hambra.mpq(i["max_residual"])) for i in rep["identities"].values()), default=0.0)
        results.append(criterion(f"nf_identities_nsym{nsym}", worst, (0, 0), rep["pass"], key="residual"))
    return results


def cmd_nf_deviation(cfg: ExperimentConfig) -> List[dict]:
    eps_list = cfg.floats("eps")
    if len(eps_list) < 3:
        raise ConfigError("nf-deviation needs at least 3 epsilon values")
    nf = NormalFormMap(substeps=cfg.int("substeps"), f2_substeps=cfg.int("f2_substeps"),
                       check=cfg.bool("check"))
    N = cfg.int("N")
    samples = [analysis.normal_form_sample(e, N, nf, cfg.float("h"), cfg.float("dt")) for e in eps_list]
    norms = [NormSpec(np.inf), NormSpec(2.0), NormSpec(1.0)]
    rows = []
    for s in samples:
        for ns in norms:
            rows.append([s.eps, N, "u_minus_v", ns.p, ns.delta, weighted_norm(s.u - s.v, ns)])
            rows.append([s.eps, N, "E", ns.p, ns.delta, weighted_norm(s.E, ns)])
    write_csv(cfg.outdir / "nf_deviation.csv", cfg, ["eps", "N", "quantity", "norm_p", "norm_delta", "value"], rows)
    near = analysis.nearness_report(samples)
    err = analysis.error_term_report(samples)
    l2 = max(near["l2_relative_mismatch"].values())
    out = [
        criterion("nearness_linf_slope", near["fits"]["linf"].slope, WINDOWS["nearness_linf"],
                  near["fits"]["linf"].within(*WINDOWS["nearness_linf"])),
        criterion("nearness_l1_slope", near["fits"]["l1"].slope, WINDOWS["nearness_l1"],
                  near["fits"]["l1"].within(*WINDOWS["nearness_l1"])),
        criterion("nearness_l2_equality", l2, (0, 1e-8), l2 <= 1e-8, key="residual"),
        criterion("error_linf_slope", err["linf"].slope, WINDOWS["error_linf"],
                  err["linf"].within(*WINDOWS["error_linf"])),
        criterion("error_l2_slope", err["l2"].slope, WINDOWS["error_l2"], err["l2"].within(*WINDOWS["error_l2"])),
    ]
    write_json(cfg.outdir / "nf_deviation.json", cfg, {"nearness": near, "error_term": err, "criteria": out})
    return out


def cmd_scaling(cfg: ExperimentConfig) -> List[dict]:
    eps_list = cfg.floats("eps")
    if len(eps_list) < 3:
        raise ConfigError("scaling needs at least 3 epsilon values")
    N, T, dt = cfg.int("N"), cfg.float("T"), cfg.float("dt")
    p, delta = float(cfg.str("norm_p")), cfg.float("norm_delta", positive=False)
    sigma = cfg.int("dispersion_exponent")
    try:
        points, fit = analysis.theorem_sweep(eps_list, N, T, dt, sigma, cfg.int("order"), p,
                                             workers=cfg.int("workers"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = [[e, N, T, dt, v, p, delta] for e, v in points]
    write_csv(cfg.outdir / "scaling.csv", cfg, ["eps", "N", "T", "dt", "dev_value", "norm_p", "norm_delta"], rows)
    lo, hi = WINDOWS["theorem_slope"]
    out = [criterion(f"theorem_slope_sigma{sigma}", fit.slope, (lo, hi), fit.within(lo, hi, 0.95))]
    env = analysis.time_envelope(cfg.float("envelope_eps"), cfg.floats("envelope_T"), N, dt, sigma, p)
    lo, hi = WINDOWS["envelope_factor"]
    for k, f in enumerate(env["factors"]):
        out.append(criterion(f"envelope_factor_{k}", f, (lo, hi), lo <= f <= hi, key="residual"))
    write_json(cfg.outdir / "scaling.json", cfg, {"fit": fit, "envelope": env, "criteria": out})
    return out


def cmd_report(cfg: ExperimentConfig) -> List[dict]:
    quick = cfg.bool("quick")
    base = {k: v for k, v in cfg.values.items() if k in GENERAL}
    results = []
    results += cmd_nf_check(ExperimentConfig("nf-check", {**base, "nsym": cfg.str("nsym")}))
    results += cmd_oracle(ExperimentConfig("oracle", {**base, **DEFAULTS["oracle"]}))
    sim = dict(DEFAULTS["simulate"], order="6")
    results += cmd_simulate(ExperimentConfig("simulate", {**base, **sim}))
    scal = dict(DEFAULTS["scaling"])
    nfd = dict(DEFAULTS["nf-deviation"])
    if quick:
        scal.update(eps="0.4,0.2,0.1", N="128")
        nfd.update(N="32", eps="0.4,0.3,0.2")
    results += cmd_scaling(ExperimentConfig("scaling", {**base, **scal}))
    results += cmd_nf_deviation(ExperimentConfig("nf-deviation", {**base, **nfd}))
    write_json(cfg.outdir / "summary.json", cfg, {"criteria": results, "pass": all(r["pass"] for r in results)})
    return results


HANDLERS = {
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "nf-check": cmd_nf_check,
    "nf-deviation": cmd_nf_deviation,
    "scaling": cmd_scaling,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlsquasi", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI file with [general] and per-command sections")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    for flag in ("nsym", "eps", "N", "T", "dt", "outdir", "scheme", "profile", "amplitude"):
        ap.add_argument(f"--{flag}", dest=f"opt_{flag}")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        overrides[key.strip()] = value.strip()
    for name, value in vars(args).items():
        if name.startswith("opt_") and value is not None:
            overrides[name[4:]] = value
    try:
        cfg = load_config(args.command, args.config, overrides)
        t0 = time.perf_counter()
        results = HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    for r in results:
        val = r.get("slope", r.get("residual"))
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['name']}  value={val:.6g}  window={r['window']}")
    print(f"[{args.command}] {time.perf_counter() - t0:.1f}s, outputs in {cfg.outdir}")
    return 0 if all(r["pass"] for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
