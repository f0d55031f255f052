"""Batch front-end: configuration parsing, sweeps and trajectory files.

A configuration is a UTF-8 text of ``key = value`` lines.  ``#`` starts a
comment.  Any number of ``[sweep]`` blocks may follow; every key listed inside
them takes a comma-separated list of values and the runs are the Cartesian
product over all swept keys.  Keys left out take the defaults below, which
are the baseline parameters of the dissipative dimer.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .ansatz import NOISE_CENTERS, initial_state
from .dynamics import NormDriftError, NumericalError, SolverStats, propagate
from .model import (BathSpec, DrivingField, ModelError, ModelSpec, bath_from_frequencies)
from .observables import COLUMNS, ConsistencyError
from .oracle import (BudgetError, FockBasisSpec, TruncationError, UnitarityError,
                     coherent_vector, convert_ansatz_to_fock, propagate_exact)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

# key -> (type, default)
DEFAULTS = {
    "omega0": (float, 1.0),
    "J": (float, 0.05),
    "g": (float, 0.3),
    "A_L": (float, 1.0),
    "Omega_L": (float, 0.0),
    "Phi_L": (float, 0.0),
    "A_R": (float, 1.0),
    "Omega_R": (float, 0.0),
    "Phi_R": (float, 0.0),
    "alpha": (float, 0.1),
    "s": (float, 0.5),
    "omega_c": (float, 1.0),
    "omega_max": (float, 20.0),
    "N_bath": (int, 60),
    "bath_frequencies": (list, []),
    "M": (int, 6),
    "photons": (float, 20.0),
    "noise_scale": (float, 1e-2),
    "noise_center": (str, "occupied"),
    "seed": (int, 0),
    "dt": (float, 2.5e-3),
    "t_max": (float, 300.0),
    "sample_every": (int, 40),
    "rcond": (float, 1e-12),
    "norm_tol": (float, 1e-3),
    "step_tol": (float, 1e-7),
    "max_halvings": (int, 8),
    "checkpoint_every": (int, 0),
    "mode": (str, "variational"),
    "output": (str, "out"),
    "n_max_photon": (int, 14),
    "n_max_bath": (int, 4),
    "max_dim": (int, 2_000_000),
}

MODES = ("variational", "oracle")


class ConfigError(ValueError):
    """Invalid configuration; the message names the key path and line."""


@dataclass
class RunConfig:
    values: dict
    sweeps: dict = field(default_factory=dict)
    source: str = "<config>"
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def expand(self) -> list[tuple[str, "RunConfig"]]:
        """One (subpath, config) per point of the sweep grid."""
        if not self.sweeps:
            return [("", self)]
        keys = list(self.sweeps)
        runs = []
        for combo in itertools.product(*(self.sweeps[k] for k in keys)):
            values = dict(self.values, **dict(zip(keys, combo)))
            sub = "_".join(f"{k}={_fmt(v)}" for k, v in zip(keys, combo))
            runs.append((sub, RunConfig(values, {}, self.source, self.lines)))
        return runs

    def model(self) -> ModelSpec:
        return build_model(self.values)

    def echo(self) -> str:
        """Full configuration, defaults included, in the input syntax."""
        lines = [f"{k} = {_fmt(self.values[k])}" for k in DEFAULTS]
        for k, vals in self.sweeps.items():
            lines += ["", "[sweep]", f"{k} = " + ", ".join(_fmt(v) for v in vals)]
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(key: str, raw: str, where: str):
    if key not in DEFAULTS:
        raise ConfigError(f"{where}: unknown key '{key}'")
    kind = DEFAULTS[key][0]
    try:
        if kind is list:
            body = raw.strip()
            if not (body.startswith("[") and body.endswith("]")):
                raise ValueError("expected a bracketed list")
            return [float(x) for x in body[1:-1].split(",") if x.strip()]
        if kind is int:
            val = float(raw)
            if val != int(val):
                raise ValueError("expected an integer")
            return int(val)
        if kind is float:
            return float(raw)
        return raw.strip().strip('"').strip("'")
    except ValueError as exc:
        raise ConfigError(f"{where}: key '{key}': cannot read {raw!r} as {kind.__name__} ({exc})")


def _split_list(raw: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in raw:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    return [p.strip() for p in parts if p.strip()]


def build_model(values: dict) -> ModelSpec:
    bath = BathSpec(alpha=values["alpha"], s=values["s"], omega_c=values["omega_c"],
                    omega_max=values["omega_max"], n_modes=values["N_bath"])
    modes = None
    if values["bath_frequencies"]:
        if len(values["bath_frequencies"]) != values["N_bath"]:
            raise ModelError("bath_frequencies must list exactly N_bath values")
        modes = bath_from_frequencies(bath, values["bath_frequencies"])
    return ModelSpec(
        omega0=values["omega0"], J=values["J"], g=values["g"],
        left=DrivingField(values["A_L"], values["Omega_L"], values["Phi_L"]),
        right=DrivingField(values["A_R"], values["Omega_R"], values["Phi_R"]),
        bath=bath, modes=modes)


NONNEGATIVE = ("J", "g", "A_L", "A_R", "Omega_L", "Omega_R", "alpha", "N_bath", "M",
               "checkpoint_every", "n_max_photon", "n_max_bath", "seed", "photons",
               "noise_scale", "t_max", "max_halvings")


def validate(values: dict, where) -> None:
    """Check every key against its invariant; ``where(key)`` locates the key in the source."""
    def fail(key, msg):
        raise ConfigError(f"{where(key)}: key '{key}': {msg}")

    for key in NONNEGATIVE:
        if values[key] < 0:
            fail(key, f"must be >= 0, got {values[key]}")
    if values["omega0"] != 1.0:
        fail("omega0", "energies are in units of omega0, which must be 1")
    for key in ("M", "sample_every"):
        if values[key] < 1:
            fail(key, "must be >= 1")
    if not 0 < values["s"] <= 1:
        fail("s", "must lie in (0, 1]")
    if values["omega_c"] <= 0:
        fail("omega_c", "must be > 0")
    if values["omega_max"] <= values["omega_c"]:
        fail("omega_max", "must exceed omega_c")
    freqs = values["bath_frequencies"]
    if freqs and (len(freqs) != values["N_bath"] or min(freqs) <= 0
                  or any(b <= a for a, b in zip(freqs, freqs[1:]))):
        fail("bath_frequencies", "must list N_bath positive, increasing frequencies")
    if values["dt"] <= 0:
        fail("dt", "must be > 0")
    if not 0 < values["rcond"] < 1:
        fail("rcond", "must lie in (0, 1)")
    if values["mode"] not in MODES:
        fail("mode", f"must be one of {MODES}")
    if values["noise_center"] not in NOISE_CENTERS:
        fail("noise_center", f"must be one of {NOISE_CENTERS}")
    if values["step_tol"] <= 0:
        fail("step_tol", "must be > 0")
    try:
        build_model(values)
    except ModelError as exc:
        fail("model", str(exc))


def parse_config(text: str, source: str = "<config>", overrides=()) -> RunConfig:
    """Parse and validate a configuration document.

    ``overrides`` are ``key=value`` strings applied after the file.
    """
    values = {k: v[1] for k, v in DEFAULTS.items()}
    values["bath_frequencies"] = []
    lines: dict = {}
    sweeps: dict = {}
    sweep_lines: dict = {}
    block = None
    n_blocks = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("[") and body.endswith("]") and "=" not in body:
            name = body[1:-1].strip()
            if name != "sweep":
                raise ConfigError(f"{source}:{lineno}: unknown block [{name}]")
            n_blocks += 1
            block = f"sweep[{n_blocks}]"
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in body.split("=", 1))
        if block is None:
            where = f"{source}:{lineno}"
            values[key] = _convert(key, raw, where)
            lines[key] = where
        else:
            where = f"{source}:{lineno}: {block}.{key}"
            if key in sweeps:
                raise ConfigError(f"{where}: key '{key}' swept twice")
            if key in ("mode", "output"):
                raise ConfigError(f"{where}: key '{key}' cannot be swept")
            sweeps[key] = [_convert(key, item, where) for item in _split_list(raw)]
            if not sweeps[key]:
                raise ConfigError(f"{where}: empty sweep list")
            sweep_lines[key] = where
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, raw = (p.strip() for p in item.split("=", 1))
        where = f"--set {key}"
        values[key] = _convert(key, raw, where)
        lines[key] = where
        sweeps.pop(key, None)

    def where(key):
        return lines.get(key, f"{source}: default")

    validate(values, where)
    for key, vals in sweeps.items():
        for v in vals:
            validate(dict(values, **{key: v}), lambda k, key=key: sweep_lines[key]
                     if k == key else where(k))
    return RunConfig(values, sweeps, source, lines)


class TrajectoryWriter:
    """Streams samples to the delimited trajectory and bath-population files."""

    def __init__(self, directory: Path, n_bath: int):
        directory.mkdir(parents=True, exist_ok=True)
        self.paths = [directory / "trajectory.dat", directory / "bath_populations.dat"]
        self.traj = open(self.paths[0], "w")
        self.bath = open(self.paths[1], "w")
        self.traj.write("# " + " ".join(COLUMNS) + "\n")
        self.bath.write("# t " + " ".join(f"mode_{k + 1}" for k in range(n_bath)) + "\n")
        self.samples = 0

    def __call__(self, rec) -> None:
        self.traj.write(" ".join(f"{v:.16e}" for v in rec.row()) + "\n")
        self.bath.write(" ".join(f"{v:.16e}" for v in (rec.t, *rec.bath_populations)) + "\n")
        self.samples += 1

    def close(self, aborted: bool = False) -> None:
        self.traj.close()
        self.bath.close()
        if aborted:
            for p in self.paths:
                p.rename(p.with_name(p.name + ".aborted"))


def read_trajectory(path) -> dict:
    """Load a trajectory file into a dict of column arrays."""
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
    data = np.loadtxt(path, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def run_single(cfg: RunConfig, directory: Path) -> dict:
    """Execute one trajectory and write its files; returns the metadata."""
    v = cfg.values
    model = cfg.model()
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.txt").write_text(cfg.echo())
    writer = TrajectoryWriter(directory, model.n_bath)
    meta = {"config": cfg.echo(), "seed": v["seed"], "version": __version__,
            "oracle": v["mode"] == "oracle", "status": "ok"}
    start = time.perf_counter()
    stats = SolverStats()
    aborted = False
    try:
        state = initial_state(v["M"], model.n_bath, v["photons"], v["noise_scale"], v["seed"],
                              v["noise_center"])
        if v["mode"] == "oracle":
            spec = FockBasisSpec(v["n_max_photon"], v["n_max_bath"], model.n_bath, v["max_dim"])
            fock = convert_ansatz_to_fock(initial_state(1, model.n_bath, v["photons"], 0.0), spec)
            propagate_exact(fock, model, v["t_max"], v["dt"], v["sample_every"], writer)
        else:
            propagate(state, model, v["t_max"], v["dt"], v["sample_every"], writer,
                      rcond=v["rcond"], norm_tol=v["norm_tol"], step_tol=v["step_tol"],
                      max_halvings=v["max_halvings"],
                      checkpoint=directory / "checkpoint.txt",
                      checkpoint_every=v["checkpoint_every"], stats=stats)
    except (NormDriftError, NumericalError, ConsistencyError, UnitarityError) as exc:
        aborted = True
        meta["status"] = f"aborted: {exc}"
        log.error("%s: %s", directory, exc)
    finally:
        writer.close(aborted)
        meta["wall_time"] = time.perf_counter() - start
        meta["samples"] = writer.samples
        if v["mode"] == "variational":
            meta["solver"] = stats.as_dict()
        (directory / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return meta


def _run_entry(args):
    sub, cfg, out = args
    return sub, run_single(cfg, out / sub if sub else out)


def run(config: RunConfig, threads: int = 1) -> int:
    """Run every point of the configuration; returns the process exit status."""
    out = Path(config["output"])
    runs = config.expand()
    if config["mode"] == "oracle":
        # size check before any compute
        for _, cfg in runs:
            m = cfg.model()
            FockBasisSpec(cfg["n_max_photon"], cfg["n_max_bath"], m.n_bath, cfg["max_dim"]).check()
            coherent_vector(np.sqrt(cfg["photons"]), cfg["n_max_photon"])
    jobs = [(sub, cfg, out) for sub, cfg in runs]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_entry, jobs))
    else:
        results = [_run_entry(job) for job in jobs]
    if config.sweeps:
        manifest = {"config": config.echo(), "runs": [
            {"path": sub, "status": meta["status"], "samples": meta["samples"]}
            for sub, meta in results]}
        (out / "sweep_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    failed = [sub for sub, meta in results if meta["status"] != "ok"]
    return EXIT_NUMERICAL if failed else EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rabi-dimer", description="Variational dynamics of the driven dissipative Rabi dimer.")
    parser.add_argument("config", help="configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a configuration key (repeatable)")
    parser.add_argument("--mode", choices=MODES, help="variational engine or exact Fock oracle")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    overrides = list(args.overrides)
    if args.mode:
        overrides.append(f"mode={args.mode}")
    if args.out:
        overrides.append(f"output={args.out}")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        config = parse_config(text, args.config, overrides)
        return run(config, max(1, args.threads))
    except (ConfigError, BudgetError, TruncationError, ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
