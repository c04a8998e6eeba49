"""Command-line runner: ``kct <command> [--config FILE] [flags]``.

Settings come from built-in defaults, then an optional ``key=value`` config
file, then flags; later sources win.  Every run writes its CSV/JSON outputs
and a ``manifest.json`` with a SHA-256 for each file.

Exit codes: 0 success, 2 configuration error, 3 numerical instability.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .classical import (
    MapParameters,
    benettin_lyapunov,
    finite_time_lyapunov,
    poincare_section,
    sample_fixed_fz,
    spins_from_labels,
)
from .ensembles import (
    EnsembleSpec,
    c_dgue_analytic,
    c_gue_analytic,
    c_rmt_ixjx_baseline,
    monte_carlo_otoc,
)
from .errors import CacheVersionError, ConfigError, NumericalInstabilityError
from .floquet import build_full_floquet, iter_sector_floquets, sector_with_eigen
from .husimi import MIN_GRID, grid_axes, husimi, percival_partition
from .io import read_csv, write_columns, write_csv, write_json, write_manifest, write_matrix
from .otoc import (
    InfiniteTimeAverage,
    ehrenfest_time,
    fit_growth_rate,
    fit_relaxation,
    floquet_state_otoc,
    ixjx_otoc,
    izjz_otoc,
    largest_sector_average,
    largest_sector_otoc,
    mixture_otoc,
    relaxation_series,
    coherent_state_otoc_scan,
)
from .spin import coherent_state_matrix, sector_m1

log = logging.getLogger("kct")

COMMANDS = ("classical-sweep", "otoc", "phase-scan", "classify", "ensemble", "fit")

SHARED = {
    "twice_j": 200,
    "alpha": 6.0,
    "beta": "pi/2",
    "t_max": 20,
    "seed": 0,
    "out": "kct-out",
    "cache": None,
    "threads": 1,
}

SPECIFIC = {
    "classical-sweep": {
        "alphas": None,
        "fz_values": "0",
        "n_ic": 1000,
        "n_steps": 10000,
        "renorm_every": 1,
        "section_steps": 0,
        "grid": "8x8",
    },
    "otoc": {
        "mode": "sector",
        "fz": 0,
        "state_set": "chaotic",
        "normalization": "dimension",
        "grid": "128x128",
        "factor": 0.7,
        "fit_window": None,
    },
    "phase-scan": {"grid": "32x64", "ftle_steps": 200},
    "classify": {"grid": "128x128", "factor": 0.7, "husimi_states": ""},
    "ensemble": {"kind": "gue", "n_samples": 0},
    "fit": {"input": None, "model": "exponential", "window": None, "average": None},
}

INT_KEYS = {"twice_j", "t_max", "seed", "threads", "n_ic", "n_steps", "renorm_every", "section_steps", "fz", "n_samples", "ftle_steps"}
FLOAT_KEYS = {"alpha", "factor", "average"}
ANGLE_KEYS = {"beta"}

_PI_RE = re.compile(r"^\s*([+-]?\s*\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_angle(text):
    """Radians from a float or a multiple of pi such as ``pi/2``, ``-pi/4``, ``3*pi/4``."""
    if isinstance(text, (int, float)):
        value = float(text)
    else:
        s = str(text).strip().lower()
        m = _PI_RE.match(s)
        if m:
            coef = m.group(1).replace(" ", "")
            num = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
            den = float(m.group(2)) if m.group(2) else 1.0
            value = num * math.pi / den
        else:
            try:
                value = float(s)
            except ValueError:
                raise ConfigError(f"cannot parse angle {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"angle {text!r} is not finite")
    return value


def parse_grid(text):
    try:
        a, b = str(text).lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise ConfigError(f"grid must look like 128x128, got {text!r}") from None


def parse_list(text, kind=float):
    if text is None or str(text).strip() == "":
        return []
    try:
        return [kind(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def parse_window(text):
    vals = parse_list(text)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise ConfigError(f"window must be 'lo,hi' with lo < hi, got {text!r}")
    return tuple(vals)


def read_config_file(path):
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    def echo(self):
        return {"command": self.command, **self.values}


def build_config(command, file_values, flag_values):
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    allowed = {**SHARED, **SPECIFIC[command]}
    if os.environ.get("KCT_CACHE_DIR"):
        allowed["cache"] = os.environ["KCT_CACHE_DIR"]
    merged = dict(allowed)
    for source in (file_values, flag_values):
        for k, v in source.items():
            if k not in allowed:
                raise ConfigError(f"unknown config key {k!r} for {command}")
            if v is not None:
                merged[k] = v
    values = {}
    for k, v in merged.items():
        if v is None:
            values[k] = None
        elif k in INT_KEYS:
            try:
                fv = float(v)
            except (TypeError, ValueError):
                raise ConfigError(f"{k} must be an integer, got {v!r}") from None
            if not math.isfinite(fv) or fv != int(fv):
                raise ConfigError(f"{k} must be an integer, got {v!r}")
            values[k] = int(fv)
        elif k in FLOAT_KEYS:
            try:
                values[k] = float(v)
            except (TypeError, ValueError):
                raise ConfigError(f"{k} must be a number, got {v!r}") from None
            if not math.isfinite(values[k]):
                raise ConfigError(f"{k} must be finite")
        elif k in ANGLE_KEYS:
            values[k] = parse_angle(v)
        else:
            values[k] = str(v)
    if values["t_max"] < 1:
        raise ConfigError("t_max must be >= 1")
    if values["twice_j"] < 0:
        raise ConfigError("twice_j must be non-negative")
    if values["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if command in ("classify", "otoc") and values.get("grid"):
        dims = parse_grid(values["grid"])
        if min(dims) < MIN_GRID:
            raise ConfigError(f"Husimi grid {values['grid']} is undersampled; need at least {MIN_GRID}x{MIN_GRID}")
    out = Path(values["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return RunConfig(command, values)


def _pmap(cfg, fn, items):
    """Ordered parallel map; results come back in input order whatever the pool size."""
    if cfg.threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


def _label_grid(dims):
    theta, phi = grid_axes(dims) if min(dims) >= 16 else _coarse_axes(dims)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    return tt.ravel(), pp.ravel()


def _coarse_axes(dims):
    nt, nphi = dims
    theta = -np.pi + (np.arange(nt) + 0.5) * 2 * np.pi / nt
    phi = np.arange(nphi) * 4 * np.pi / nphi
    return theta, phi


def cmd_classical_sweep(cfg):
    out = Path(cfg.out)
    alphas = parse_list(cfg.alphas) or [cfg.alpha]
    fzs = parse_list(cfg.fz_values)
    tasks = [(a, fz) for a in alphas for fz in fzs]

    def run(task):
        a, fz = task
        ic = sample_fixed_fz(fz, cfg.n_ic, cfg.seed)
        return benettin_lyapunov(ic, MapParameters(a, cfg.beta), cfg.n_steps, cfg.renorm_every, seed=cfg.seed)

    ests = _pmap(cfg, run, tasks)
    rows = [(a, fz, e.lam, e.stderr, e.n_initial_conditions, e.n_steps) for (a, fz), e in zip(tasks, ests)]
    files = [write_csv(out / "lyapunov.csv", ["alpha", "fz", "lambda", "stderr", "n_ic", "n_steps"], rows)]
    write_json(
        out / "lyapunov.json",
        {"converged": [{"alpha": a, "fz": fz, "converged": e.converged} for (a, fz), e in zip(tasks, ests)]},
    )
    if cfg.section_steps > 0:
        tt, pp = _label_grid(parse_grid(cfg.grid))
        for a in alphas:
            for fz in fzs:
                sec = poincare_section(fz, np.column_stack([tt, pp]), cfg.section_steps, MapParameters(a, cfg.beta))
                files.append(write_columns(out / f"section_alpha{a:g}_fz{fz:g}.csv", sec))
    return {"n_tasks": len(tasks)}


def _sector_eig(cfg, fz=0):
    return sector_with_eigen(cfg.twice_j, fz, cfg.alpha, cfg.beta, None, cfg.cache)


def _state_set(cfg, eig):
    spec = cfg.state_set.strip().lower()
    if spec == "all":
        return np.arange(eig.dim), None
    if spec in ("chaotic", "regular"):
        labels = percival_partition(eig, cfg.twice_j, parse_grid(cfg.grid), cfg.factor)
        idx = np.array([c.index for c in labels if c.label == spec], int)
        if idx.size == 0:
            raise ConfigError(f"no {spec} states in this block")
        return idx, labels
    return np.array(parse_list(spec, int), int), None


def cmd_otoc(cfg):
    out = Path(cfg.out)
    times = np.arange(cfg.t_max + 1)
    mode = cfg.mode
    info = {"mode": mode}
    if mode == "sector":
        _, eig = _sector_eig(cfg, cfg.fz)
        series = largest_sector_otoc(cfg.twice_j, cfg.alpha, cfg.beta, times, cfg.fz, eig=eig)
        avg = largest_sector_average(cfg.twice_j, cfg.alpha, cfg.beta, cfg.fz, eig=eig)
    elif mode == "izjz":
        series, avg = izjz_otoc(cfg.twice_j, cfg.alpha, cfg.beta, times)
    elif mode == "ixjx":
        series, avg = ixjx_otoc(cfg.twice_j, cfg.alpha, cfg.beta, times)
    elif mode == "mixture":
        _, eig = _sector_eig(cfg, 0)
        idx, _ = _state_set(cfg, eig)
        iz = np.diag(sector_m1(cfg.twice_j, 0))
        series = mixture_otoc(eig, iz, iz, idx, times, cfg.normalization)
        per_state = floquet_state_otoc(eig, iz, iz, idx)
        avg = InfiniteTimeAverage(float(series.meta["weight"] * per_state.values.sum()), per_state.method)
        info.update(series.meta)
    else:
        raise ConfigError(f"unknown otoc mode {mode!r}")
    norm = series.c / avg.value if avg.value > 0 else np.full(series.c.shape, np.nan)
    write_columns(out / "otoc.csv", {"t": series.times, "c": series.c, "c2": series.c2, "c4": series.c4, "c_normalized": norm})
    t_ef = ehrenfest_time(series, avg)
    fits = {}
    if t_ef is not None and t_ef >= 2:
        g = fit_growth_rate(series, (1, t_ef))
        fits["growth_ehrenfest_window"] = {"lambda": g.lam, "slope": g.slope, "window": g.window}
    if cfg.fit_window:
        g = fit_growth_rate(series, parse_window(cfg.fit_window))
        fits["growth_fixed_window"] = {"lambda": g.lam, "slope": g.slope, "window": g.window}
    meta = {
        "twice_j": cfg.twice_j,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "operators": series.meta.get("operators", "Iz,Iz"),
        "state": series.meta.get("state", mode),
        "average": avg.value,
        "average_method": avg.method,
        "ehrenfest_time": t_ef,
        "fits": fits,
        "seed": cfg.seed,
        "code_version": __version__,
        **info,
    }
    write_json(out / "otoc.json", meta)
    return {"ehrenfest_time": t_ef}


def cmd_phase_scan(cfg):
    out = Path(cfg.out)
    dims = parse_grid(cfg.grid)
    _, eig = _sector_eig(cfg, 0)
    tt, pp = _label_grid(dims)
    iz = np.diag(sector_m1(cfg.twice_j, 0))
    states = coherent_state_matrix(cfg.twice_j, tt, pp)
    values = coherent_state_otoc_scan(eig, iz, iz, states)
    ftle = finite_time_lyapunov(spins_from_labels(tt, pp), MapParameters(cfg.alpha, cfg.beta), cfg.ftle_steps, seed=cfg.seed)
    write_columns(out / "phase_scan.csv", {"delta_theta": tt, "delta_phi": pp, "otoc_average": values, "classical_ftle": ftle})
    return {"n_points": int(tt.size)}


def cmd_classify(cfg):
    out = Path(cfg.out)
    dims = parse_grid(cfg.grid)
    _, eig = _sector_eig(cfg, 0)
    labels = percival_partition(eig, cfg.twice_j, dims, cfg.factor)
    write_csv(
        out / "classification.csv",
        ["state_index", "mean_sz", "husimi_entropy", "label"],
        [(c.index, c.mean_sz, c.husimi_entropy, c.label) for c in labels],
    )
    iz = np.diag(sector_m1(cfg.twice_j, 0))
    fs = floquet_state_otoc(eig, iz, iz, sz=iz)
    write_columns(out / "floquet_state_otoc.csv", {"state_index": fs.indices, "mean_sz": fs.mean_sz, "otoc_average": fs.values})
    for k in parse_list(cfg.husimi_states, int):
        if not 0 <= k < eig.dim:
            raise ConfigError(f"husimi state {k} out of range")
        write_matrix(out / f"husimi_{k}.csv", husimi(eig.states[:, k], dims, cfg.twice_j).q)
    return {"n_chaotic": sum(c.label == "chaotic" for c in labels)}


def cmd_ensemble(cfg):
    out = Path(cfg.out)
    times = np.arange(cfg.t_max + 1)
    kind = cfg.kind.lower()
    rows = []
    d = cfg.twice_j + 1
    if kind == "gue":
        u = build_full_floquet(cfg.twice_j, cfg.alpha, cfg.beta).matrix
        res = c_gue_analytic(u, times)
        rows += [(t, v, 0.0, "analytic", 0, cfg.seed) for t, v in zip(res.times, res.values)]
        if cfg.n_samples:
            mc = monte_carlo_otoc(u, EnsembleSpec("GUE", d), EnsembleSpec("GUE", d), times, cfg.n_samples, cfg.seed)
            rows += [(t, v, e, "monte-carlo", mc.n_samples, cfg.seed) for t, v, e in zip(mc.times, mc.values, mc.stderr)]
    elif kind == "dgue":
        blocks = list(iter_sector_floquets(cfg.twice_j, cfg.alpha, cfg.beta))
        res = c_dgue_analytic(blocks, times, d * d)
        rows += [(t, v, 0.0, "analytic", 0, cfg.seed) for t, v in zip(res.times, res.values)]
        if cfg.n_samples:
            u = build_full_floquet(cfg.twice_j, cfg.alpha, cfg.beta).matrix
            spec = EnsembleSpec("diagonal-Gaussian", d)
            mc = monte_carlo_otoc(u, spec, spec, times, cfg.n_samples, cfg.seed)
            rows += [(t, v, e, "monte-carlo", mc.n_samples, cfg.seed) for t, v, e in zip(mc.times, mc.values, mc.stderr)]
    elif kind == "coe-baseline":
        rows.append(("inf", c_rmt_ixjx_baseline(cfg.twice_j), 0.0, "analytic", 0, cfg.seed))
    else:
        raise ConfigError(f"unknown ensemble kind {cfg.kind!r}")
    write_csv(out / "ensemble.csv", ["t", "value", "stderr", "method", "n_samples", "seed"], rows)
    return {"rows": len(rows)}


def cmd_fit(cfg):
    out = Path(cfg.out)
    if not cfg.input:
        raise ConfigError("fit needs --input pointing at an otoc.csv")
    src = Path(cfg.input)
    if not src.exists():
        raise ConfigError(f"input {src} does not exist")
    data = read_csv(src)
    average = cfg.average
    if average is None:
        side = src.with_suffix(".json")
        if not side.exists():
            raise ConfigError("no --average given and no JSON sidecar next to the input")
        average = json.loads(side.read_text())["average"]

    class _S:
        c = data["c"]

    y = relaxation_series(_S, average)
    window = parse_window(cfg.window) if cfg.window else None
    if cfg.model not in ("exponential", "power-law"):
        raise ConfigError(f"unknown model {cfg.model!r}")
    fit = fit_relaxation(data["t"], y, cfg.model, window)
    write_csv(
        out / "fit.csv",
        ["model", "rate", "t_min", "t_max", "residual", "amplitude"],
        [(fit.model, fit.rate, fit.window[0], fit.window[1], fit.residual, fit.amplitude)],
    )
    return {"rate": fit.rate}


HANDLERS = {
    "classical-sweep": cmd_classical_sweep,
    "otoc": cmd_otoc,
    "phase-scan": cmd_phase_scan,
    "classify": cmd_classify,
    "ensemble": cmd_ensemble,
    "fit": cmd_fit,
}


def run(command, cfg):
    """Execute one command and write its manifest; returns the manifest path."""
    start = time.perf_counter()
    summary = HANDLERS[command](cfg)
    log.info("%s finished: %s", command, summary)
    return write_manifest(cfg.out, cfg.echo(), __version__, time.perf_counter() - start)


def _parser():
    p = argparse.ArgumentParser(prog="kct", description="Kicked coupled tops: classical maps, OTOCs, ensembles.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value file; flags override it")
        for key in {**SHARED, **SPECIFIC[name]}:
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = _parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_config(args.command, file_values, flags)
        run(args.command, cfg)
    except (ConfigError, CacheVersionError) as exc:
        log.error("%s", exc)
        return 2
    except (NumericalInstabilityError, ArithmeticError) as exc:
        log.error("numerical instability: %s", exc)
        return 3
    except ValueError as exc:
        # out-of-range inputs caught by the library itself
        log.error("invalid input: %s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
