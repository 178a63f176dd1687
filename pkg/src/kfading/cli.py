"""Command-line front end.

Subcommands: ``pdf``, ``cdf``, ``op``, ``abep``, ``minbranches``, ``validate``.

Settings are merged from four sources, later ones winning: built-in
defaults, a ``key = value`` file given by ``--config``, environment variables
``KFADING_<KEY>`` (upper case, dashes as underscores, e.g. ``KFADING_INR_DB``)
and command-line flags. All dB quantities are converted to linear here and
nowhere else.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import ksum, mc, perf, simo, sinr
from .ksum import InterferenceProfile, TruncationPolicy

ENV_PREFIX = "KFADING_"

SCHEMAS = {
    "pdf": ["gamma", "value", "terms_used", "est_error"],
    "cdf": ["gamma", "value", "terms_used", "est_error"],
    "op": ["snr_db", "threshold_db", "exact", "terms_used", "est_error", "asymptotic", "mc", "mc_half_width"],
    "abep": ["snr_db", "abep_mgf", "abep_cdf", "terms_used", "est_error", "asymptotic", "mc", "mc_half_width"],
    "minbranches": ["target_op", "threshold_ratio_db", "rule", "N"],
    "validate": ["check", "status", "detail"],
}


class UsageError(Exception):
    """Bad user input; reported with exit status 2."""


def _to_int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


@dataclass(frozen=True)
class Option:
    name: str
    convert: Callable[[str], Any]
    default: Any
    help: str
    choices: tuple[str, ...] | None = None


OPTIONS = [
    Option("scenario", str, "corr", "interference scenario", ("ind", "iid", "corr")),
    Option("k", float, 2.0, "shaping parameter (first interferer for ind)"),
    Option("k_decay", float, 0.3, "ind profile: k_i = k - k_decay * i"),
    Option("inr_db", float, 5.0, "average INR in dB (first interferer for ind)"),
    Option("inr_decay", float, 0.1, "ind profile: inr_i = inr * exp(-inr_decay * (i - 1))"),
    Option("L", _to_int, 4, "number of interferers"),
    Option("N", _to_int, 1, "number of receive branches"),
    Option("rule", str, "snr", "selection rule", ("snr", "sinr")),
    Option("noise", str, "sinr", "with or without receiver noise", ("sinr", "sir")),
    Option("mod", str, "dbpsk", "modulation: dbpsk or mpsk:M"),
    Option("grid", str, "", "start:stop:steps (gamma for pdf/cdf, dB otherwise)"),
    Option("target", str, "interference", "pdf/cdf of the interference sum or of the output", ("interference", "output")),
    Option("snr_db", float, 10.0, "average desired SNR in dB (pdf/cdf and threshold sweeps)"),
    Option("threshold_db", float, 0.0, "outage threshold in dB (SNR sweeps)"),
    Option("sweep", str, "snr", "op: sweep the desired SNR or the threshold", ("snr", "threshold")),
    Option("op_targets", str, "0.1,0.01,0.001", "minbranches: comma-separated outage targets"),
    Option("asymptotic", _to_int, 0, "op/abep: 1 adds the high-SNR approximation"),
    Option("tol", float, 1e-10, "series tolerance"),
    Option("max_terms", _to_int, 500, "series term cap"),
    Option("mc_samples", _to_int, 0, "Monte-Carlo draws (0 disables the column)"),
    Option("seed", _to_int, 20240601, "Monte-Carlo seed"),
    Option("checks", str, "all", "validate: comma-separated check names or 'all'"),
    Option("format", str, "csv", "output format", ("csv", "json")),
    Option("out", str, "-", "output path, '-' for stdout"),
]
_BY_NAME = {o.name: o for o in OPTIONS}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kfading", description="Squared-K interference statistics and receiver performance.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCHEMAS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value settings file")
        for opt in OPTIONS:
            p.add_argument(_flag(opt.name), dest=opt.name, default=None, help=f"{opt.help} (default {opt.default!r})")
    return parser


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path!r}: {exc}") from exc
    for number, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _BY_NAME:
            raise UsageError(f"{path}:{number}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_settings(args: argparse.Namespace, environ: dict[str, str] | None = None) -> dict[str, Any]:
    """Merge defaults, config file, environment and flags, then convert types."""
    environ = os.environ if environ is None else environ
    raw: dict[str, Any] = {}
    if args.config:
        raw.update(read_config_file(args.config))
    for opt in OPTIONS:
        env_key = ENV_PREFIX + opt.name.upper()
        if env_key in environ:
            raw[opt.name] = environ[env_key]
    for opt in OPTIONS:
        value = getattr(args, opt.name, None)
        if value is not None:
            raw[opt.name] = value
    settings: dict[str, Any] = {}
    for opt in OPTIONS:
        if opt.name not in raw:
            settings[opt.name] = opt.default
            continue
        try:
            value = opt.convert(str(raw[opt.name]))
        except ValueError as exc:
            raise UsageError(f"invalid value for {opt.name}: {raw[opt.name]!r}") from exc
        if opt.choices and value not in opt.choices:
            raise UsageError(f"{opt.name} must be one of {', '.join(opt.choices)}")
        settings[opt.name] = value
    return settings


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:steps`` into ``steps`` evenly spaced points."""
    if not text:
        raise UsageError("--grid is required (start:stop:steps)")
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must be start:stop:steps, got {text!r}")
    try:
        start, stop, steps = float(parts[0]), float(parts[1]), _to_int(parts[2])
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}") from exc
    if steps < 1:
        raise UsageError("grid needs at least one point")
    return np.linspace(start, stop, steps)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def build_interference(s: dict[str, Any]) -> InterferenceProfile:
    inr = float(db_to_linear(s["inr_db"]))
    try:
        if s["scenario"] == "ind":
            return ksum.InterferenceProfile.ind(
                (s["k"] - s["k_decay"] * i, inr * math.exp(-s["inr_decay"] * (i - 1))) for i in range(1, s["L"] + 1)
            )
        if s["scenario"] == "iid":
            return ksum.InterferenceProfile.iid(s["k"], inr, s["L"])
        return ksum.InterferenceProfile.corr(s["k"], inr, s["L"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _policy(s: dict[str, Any]) -> TruncationPolicy:
    try:
        return TruncationPolicy(tol=s["tol"], max_terms=s["max_terms"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _receiver(s: dict[str, Any], snr: float, prof: InterferenceProfile) -> perf.ReceiverConfig:
    if s["N"] > 1 and s["rule"] == "snr" and prof.variant != "corr":
        raise UsageError("SNR-based selection needs --scenario corr")
    try:
        return perf.ReceiverConfig.build(snr, s["N"], prof, s["rule"], s["noise"], _policy(s))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# --------------------------------------------------------------------------
# Commands


def cmd_density(s: dict[str, Any], which: str) -> list[dict[str, Any]]:
    gammas = parse_grid(s["grid"])
    if np.any(gammas < 0):
        raise UsageError("gamma grid must be non-negative")
    prof = build_interference(s)
    policy = _policy(s)
    rows = []
    if s["target"] == "interference":
        if prof.variant == "corr":
            fn = ksum.pdf_sum_corr if which == "pdf" else ksum.cdf_sum_corr
            values = np.atleast_1d(fn(prof, gammas))
            return [{"gamma": g, "value": v, "terms_used": 0, "est_error": sinr.KERNEL_REL_ERROR * abs(v)}
                    for g, v in zip(gammas, values)]
        fn = ksum._series_stat
        res = fn(prof, which, gammas, policy)
    else:
        config = _receiver(s, float(db_to_linear(s["snr_db"])), prof)
        if config.N == 1:
            link = config.links[0]
            res = (sinr.output_pdf if which == "pdf" else sinr.output_cdf)(link, gammas, policy)
        else:
            values = np.atleast_1d(config.pdf(gammas) if which == "pdf" else config.cdf(gammas))
            return [{"gamma": g, "value": v, "terms_used": 0, "est_error": sinr.KERNEL_REL_ERROR * abs(v)}
                    for g, v in zip(gammas, values)]
    for i, g in enumerate(gammas):
        rows.append({"gamma": g, "value": res.values[i], "terms_used": int(res.terms_used[i]), "est_error": res.est_error[i]})
    return rows


def _mc_config(s: dict[str, Any], config: perf.ReceiverConfig) -> mc.MonteCarloConfig:
    return mc.MonteCarloConfig(config, samples=s["mc_samples"], seed=s["seed"])


def _exact_op(config: perf.ReceiverConfig, gamma_th: float) -> tuple[float, int, float]:
    if config.N == 1:
        res = sinr.output_cdf(config.links[0], gamma_th, config.policy)
        return res.value, res.terms_used, res.est_error
    value = float(config.cdf(gamma_th))
    return value, 0, sinr.KERNEL_REL_ERROR * abs(value)


def cmd_op(s: dict[str, Any]) -> list[dict[str, Any]]:
    grid = parse_grid(s["grid"])
    prof = build_interference(s)
    rows = []
    for point in grid:
        snr_db, th_db = (point, s["threshold_db"]) if s["sweep"] == "snr" else (s["snr_db"], point)
        config = _receiver(s, float(db_to_linear(snr_db)), prof)
        gamma_th = float(db_to_linear(th_db))
        exact, terms, err = _exact_op(config, gamma_th)
        row = {"snr_db": snr_db, "threshold_db": th_db, "exact": exact, "terms_used": terms, "est_error": err,
               "asymptotic": math.nan, "mc": math.nan, "mc_half_width": math.nan}
        if s["asymptotic"]:
            row["asymptotic"] = perf.op_high_snr(config, gamma_th).approximation
        if s["mc_samples"] > 0:
            est = mc.empirical_op(_mc_config(s, config), gamma_th)
            row["mc"], row["mc_half_width"] = est.value, est.half_width
        rows.append(row)
    return rows


def cmd_abep(s: dict[str, Any]) -> list[dict[str, Any]]:
    grid = parse_grid(s["grid"])
    prof = build_interference(s)
    try:
        modulation = perf.ModulationSpec.parse(s["mod"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = []
    for snr_db in grid:
        config = _receiver(s, float(db_to_linear(snr_db)), prof)
        has_mgf = config.N == 1 or config.rule == "snr"
        via_mgf = perf.abep_mgf(config, modulation) if has_mgf else math.nan
        if modulation.is_exponential:
            val, err = perf._laplace_of_cdf(config, modulation.beta)
            via_cdf, err = modulation.alpha * val, modulation.alpha * err
        else:
            via_cdf, err = perf.abep_cdf(config, modulation), math.nan
        row = {"snr_db": snr_db, "abep_mgf": via_mgf, "abep_cdf": via_cdf, "terms_used": 0, "est_error": err,
               "asymptotic": math.nan, "mc": math.nan, "mc_half_width": math.nan}
        if s["asymptotic"]:
            row["asymptotic"] = perf.abep_high_snr(config, modulation).approximation
        if s["mc_samples"] > 0:
            est = mc.empirical_abep(_mc_config(s, config), modulation)
            row["mc"], row["mc_half_width"] = est.value, est.half_width
        rows.append(row)
    return rows


def cmd_minbranches(s: dict[str, Any]) -> list[dict[str, Any]]:
    grid = parse_grid(s["grid"])
    prof = build_interference(s)
    if prof.variant != "corr" and s["rule"] == "snr":
        raise UsageError("SNR-based selection needs --scenario corr")
    try:
        targets = [float(t) for t in s["op_targets"].split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad op_targets {s['op_targets']!r}") from exc
    if not targets:
        raise UsageError("op_targets is empty")
    rows = []
    for target in targets:
        for ratio_db in grid:
            try:
                n = perf.min_branches(target, float(db_to_linear(ratio_db)), prof, s["rule"], s["noise"])
            except simo.UnreachableError:
                n = -1
            rows.append({"target_op": target, "threshold_ratio_db": ratio_db, "rule": s["rule"], "N": n})
    return rows


def cmd_validate(s: dict[str, Any]) -> tuple[list[dict[str, Any]], bool]:
    from . import validation

    names = list(validation.CHECKS) if s["checks"] == "all" else [c.strip() for c in s["checks"].split(",") if c.strip()]
    unknown = [n for n in names if n not in validation.CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s): {', '.join(unknown)}; available: {', '.join(validation.CHECKS)}")
    rows = [{"check": "seed", "status": "INFO", "detail": str(s["seed"])}]
    ok = True
    for name in names:
        start = time.perf_counter()
        passed, detail = validation.CHECKS[name](s["seed"])
        ok &= passed
        rows.append({"check": name, "status": "PASS" if passed else "FAIL",
                     "detail": f"{detail} ({time.perf_counter() - start:.1f} s)"})
    return rows, ok


# --------------------------------------------------------------------------
# Output


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9e}"
    return str(value)


def render(rows: Sequence[dict[str, Any]], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        def clean(v: Any) -> Any:
            if isinstance(v, (np.integer,)):
                return int(v)
            if isinstance(v, (float, np.floating)):
                v = float(v)
                return None if math.isnan(v) else float(f"{v:.9e}")
            return v
        return json.dumps([{c: clean(r[c]) for c in columns} for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        s = resolve_settings(args)
        command = args.command
        status = 0
        if command in ("pdf", "cdf"):
            rows = cmd_density(s, command)
        elif command == "op":
            rows = cmd_op(s)
        elif command == "abep":
            rows = cmd_abep(s)
        elif command == "minbranches":
            rows = cmd_minbranches(s)
        else:
            rows, ok = cmd_validate(s)
            status = 0 if ok else 1
            if s["format"] == "csv" and s["out"] == "-":
                for r in rows:
                    print(f"{r['status']:4s} {r['check']}: {r['detail']}")
                return status
        _emit(render(rows, SCHEMAS[command], s["format"]), s["out"])
        return status
    except UsageError as exc:
        print(f"kfading {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main_exit() -> None:
    """Console-script entry point."""
    sys.exit(main())
