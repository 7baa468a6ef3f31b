"""Command-line front end.

Every subcommand reads an optional JSON config file and flat ``--key value``
overrides; flags win over the file. Unknown keys are rejected before any work
starts. Output files are written to a temporary name and renamed into place,
so a failed run leaves nothing behind.

Exit codes: 0 success, 2 config error, 3 runtime precondition error,
4 failed check (``*-check`` subcommands).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .core import INSTANT, LatticeSpec, RateError, RateSet, alpha, effective_rates, preset, PRESETS

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 2, 3, 4
SEED_ENV = "CPSWITCH_SEED"

COMMANDS = ("simulate", "sweep", "bounds", "couple-check", "dual-check", "oracle-check", "render")
RELATIONS = ("monotone", "attractivity", "additivity", "dominating_cp", "cps_over_cpb", "cpid_over_cpd",
             "cpree_switch_monotone")

_COMMON = {
    "preset": str, "lambda": float, "delta": float, "delta_a": float, "delta_d": (float, str),
    "sigma": float, "rho": float, "lam_aa": float, "lam_ad": float, "lam_da": float, "lam_dd": float,
    "variant": str, "L": int, "shape": list, "boundary": str, "seed": int, "out": str,
}
_RUN = {"T": float, "replicas": int, "threads": int}
_EXTRA = {
    "simulate": {"T": float, "X0": (list, str), "A0": (list, str), "samples": int, "states_out": str},
    "render": {"T": float, "X0": (list, str), "A0": (list, str), "samples": int, "style": str},
    "sweep": {**_RUN, "lambdas": list, "horizons": list, "crn": bool, "origin": int},
    "bounds": {},
    "couple-check": {"T": float, "relation": str, "instances": int, "lambda_factor": float,
                     "sigma2": float, "rho2": float},
    "dual-check": {"T": float, "instances": int},
    "oracle-check": {**_RUN, "t": float, "X0": (list, str), "A0": (list, str)},
}
_RATE_KEYS = ("lambda", "delta", "delta_a", "delta_d", "sigma", "rho", "lam_aa", "lam_ad", "lam_da", "lam_dd",
              "lambda_factor", "sigma2", "rho2")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    values: dict
    sources: dict = field(default_factory=dict)  # key -> where it was set

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r}")
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values.get("seed", 0))

    def lattice(self) -> LatticeSpec:
        boundary = self.get("boundary", "periodic")
        if "shape" in self.values:
            return LatticeSpec(tuple(self.values["shape"]), boundary)
        return LatticeSpec.ring(int(self.require("L")), boundary)

    def rates(self) -> RateSet:
        v = self.values
        if "preset" in v:
            kw = {k: v[k] for k in ("delta_a", "delta_d", "sigma", "rho") if k in v}
            return preset(v["preset"], self.require("lambda"), v.get("delta"), **kw)
        dd = v.get("delta_d", v.get("delta"))
        if isinstance(dd, str):
            if dd.upper() != "INSTANT":
                raise ConfigError(f"delta_d must be a number or 'INSTANT', got {dd!r}")
            dd = INSTANT
        da = v.get("delta_a", v.get("delta"))
        if da is None or dd is None:
            raise ConfigError("give a preset, or delta_a and delta_d (or delta)")
        lam = v.get("lambda", 0.0)
        return RateSet.symmetric(v.get("lam_aa", lam), v.get("lam_ad", lam), v.get("lam_da", lam),
                                 v.get("lam_dd", lam), da, dd, v.get("sigma", 0.0), v.get("rho", 0.0),
                                 v.get("variant", "plain"))


def _coerce(key, value, kind, where):
    kinds = kind if isinstance(kind, tuple) else (kind,)
    for k in kinds:
        if k is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if k is int and isinstance(value, int) and not isinstance(value, bool):
            return value
        if k is bool and isinstance(value, bool):
            return value
        if k in (str, list) and isinstance(value, k):
            return value
    names = " or ".join(k.__name__ for k in kinds)
    raise ConfigError(f"{where}: key {key!r} must be {names}, got {value!r}")


def _parse_flag_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _flag_pairs(tokens):
    """--key=value or --key value pairs from leftover argv."""
    out = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"command line: unexpected argument {tok!r}")
        body = tok[2:]
        if "=" in body:
            key, raw = body.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"command line: flag --{body} needs a value")
            key, raw = body, tokens[i + 1]
            i += 2
        out.append((key.replace("-", "_"), _parse_flag_value(raw)))
    return out


def parse_config(command: str, config_path: str | None, flags, environ=None) -> RunConfig:
    """Merge file values and flag overrides, validate keys and rates."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown subcommand {command!r}")
    allowed = {**_COMMON, **_EXTRA[command]}
    values, sources = {}, {}
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"{config_path}: cannot read config ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{config_path}: top level must be an object")
        for key, value in data.items():
            if key not in allowed:
                raise ConfigError(f"{config_path}: unknown key {key!r}")
            values[key] = _coerce(key, value, allowed[key], config_path)
            sources[key] = config_path
    for key, value in _flag_pairs(flags):
        if key not in allowed:
            raise ConfigError(f"command line: unknown key {key!r}")
        values[key] = _coerce(key, value, allowed[key], "command line")
        sources[key] = "command line"
    env = os.environ if environ is None else environ
    if env.get(SEED_ENV):
        try:
            values["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"environment: {SEED_ENV} must be an integer") from None
        sources["seed"] = "environment"
    cfg = RunConfig(command, values, sources)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    v = cfg.values
    for key in _RATE_KEYS:
        if key in v and isinstance(v[key], float):
            if not math.isfinite(v[key]):
                raise ConfigError(f"{cfg.sources[key]}: {key} must be finite")
            if v[key] < 0:
                raise ConfigError(f"{cfg.sources[key]}: {key} must be ≥ 0")
    for key in ("T", "t"):
        if key in v and not v[key] > 0:
            raise ConfigError(f"{cfg.sources[key]}: {key} must be > 0")
    for key in ("replicas", "instances", "samples", "threads", "L"):
        if key in v and v[key] < 1:
            raise ConfigError(f"{cfg.sources[key]}: {key} must be ≥ 1")
    if "seed" in v and v["seed"] < 0:
        raise ConfigError(f"{cfg.sources['seed']}: seed must be ≥ 0")
    if "preset" in v and v["preset"] not in PRESETS:
        raise ConfigError(f"{cfg.sources['preset']}: unknown preset {v['preset']!r}")
    if "relation" in v and v["relation"] not in RELATIONS:
        raise ConfigError(f"{cfg.sources['relation']}: relation must be one of {', '.join(RELATIONS)}")
    try:
        cfg.lattice()
        cfg.rates()
    except (RateError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# output


def write_atomic(path: str, text: str) -> None:
    """Write to a sibling temporary file, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    tmp = os.path.join(directory, f".{os.path.basename(path)}.{os.getpid()}.tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _emit(cfg: RunConfig, outputs: list[tuple[str | None, str]]) -> None:
    """All outputs are rendered before the first file is written."""
    for path, text in outputs:
        if path is None:
            sys.stdout.write(text)
        else:
            write_atomic(path, text)


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _sites(lat: LatticeSpec, spec, default: str, seed: int, stream_replica: int, p: float | None = None):
    spec = default if spec is None else spec
    n = lat.n_sites
    if isinstance(spec, list):
        return np.asarray(spec, dtype=np.int64)
    if spec == "origin":
        return np.array([0])
    if spec == "all":
        return np.arange(n)
    if spec == "none":
        return np.zeros(0, np.int64)
    if spec == "stationary" and p is not None:
        gen = _rng.generator(seed, stream_replica, _rng.STREAM_INITIAL)
        return np.flatnonzero(gen.random(n) < p)
    raise ConfigError(f"site set must be a list or one of origin/all/none/stationary, got {spec!r}")


# ---------------------------------------------------------------------------
# subcommands


def _simulate_traj(cfg: RunConfig):
    from .dynamics import simulate_direct
    lat, rates = cfg.lattice(), cfg.rates()
    T = float(cfg.require("T"))
    p = alpha(rates) if rates.is_symmetric and rates.sigma0 + rates.rho0 > 0 else None
    X0 = _sites(lat, cfg.get("X0"), "origin", cfg.seed, 0)
    A0 = _sites(lat, cfg.get("A0"), "all", cfg.seed, 0, p)
    if rates.variant == "cpb":
        X0 = np.intersect1d(X0, A0)
    st = np.linspace(0.0, T, int(cfg.get("samples", 101)))
    return simulate_direct(lat, rates, X0, A0, T, cfg.seed, sample_times=st)


def cmd_simulate(cfg: RunConfig) -> int:
    traj = _simulate_traj(cfg)
    outputs = [(cfg.get("out"), traj.to_csv())]
    if cfg.get("states_out"):
        outputs.append((cfg.get("states_out"), traj.state_dump()))
    _emit(cfg, outputs)
    return EXIT_OK


def cmd_render(cfg: RunConfig) -> int:
    from .svg import render_spacetime_svg
    traj = _simulate_traj(cfg)
    _emit(cfg, [(cfg.get("out"), render_spacetime_svg(traj, style=cfg.get("style", "lines")))])
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    from .analysis import survival_sweep
    lat = cfg.lattice()
    base = cfg.values

    def template(lam):
        return RunConfig(cfg.command, {**base, "lambda": float(lam)}).rates()

    res = survival_sweep(lat, template, cfg.require("lambdas"), cfg.require("horizons"),
                         int(cfg.require("replicas")), cfg.seed, bool(cfg.get("crn", True)),
                         origin=int(cfg.get("origin", 0)), n_jobs=int(cfg.get("threads", 1)))
    out = cfg.get("out")
    outputs = [(out, res.to_csv())]
    if out is not None:
        outputs.append((out + ".meta.json", res.metadata_json()))
    _emit(cfg, outputs)
    return EXIT_OK


def cmd_bounds(cfg: RunConfig) -> int:
    lat, rates = cfg.lattice(), cfg.rates()
    eff = effective_rates(rates, lat.neighborhood_size)
    rows = [("quantity", "value"),
            ("alpha", repr(alpha(rates))),
            ("lambda_star", repr(eff.lam_star)),
            ("delta_star", repr(eff.delta_star)),
            ("lambda_max", repr(eff.lam_max)),
            ("delta_bar", repr(eff.delta_bar)),
            ("lambda_bar_outgoing", repr(eff.lam_bar)),
            ("lambda_bar_incoming", repr(eff.lam_bar_incoming)),
            ("delta_max", repr(eff.delta_max))]
    _emit(cfg, [(cfg.get("out"), _csv(rows))])
    return EXIT_OK


def _couple_once(cfg, relation, lat, rates, T, i):
    from . import coupling as cp
    from .graphical import sample_timeline
    seed = cfg.seed
    gen = _rng.generator(seed, i, _rng.STREAM_INITIAL)
    n = lat.n_sites
    X = np.flatnonzero(gen.random(n) < 0.3)
    A = np.flatnonzero(gen.random(n) < 0.5)
    if relation == "additivity":
        tl = sample_timeline(lat, rates, T, seed, i)
        I2 = np.flatnonzero(gen.random(n) < 0.3)
        ok = bool(cp.check_additivity(tl, X, I2, A))
        return (0 if ok else 1), 0, True
    if relation in ("monotone", "attractivity"):
        f = cfg.get("lambda_factor", 1.5 if relation == "monotone" else 1.0)
        upper = rates.with_lambdas(*(f * l for l in rates.lambdas))
        Xu = np.union1d(X, np.flatnonzero(gen.random(n) < 0.3)) if relation == "attractivity" else X
        pair = cp.couple_monotone(lat, rates, upper, X, Xu, A, T, seed, i)
    elif relation == "dominating_cp":
        pair = cp.couple_trivial_dominating(lat, rates, A, X, T, seed, i)
    elif relation == "cps_over_cpb":
        pair = cp.couple_cps_over_cpb(lat, rates, A, X, T, seed, i)
    elif relation == "cpid_over_cpd":
        pair = cp.couple_cpid_over_cpd(lat, rates, A, X, T, seed, i)
    else:
        s2 = cfg.get("sigma2", 2 * rates.sigma)
        r2 = cfg.get("rho2", 0.5 * rates.rho)
        pair = cp.couple_cpree_switch_monotone(lat, (rates.sigma, rates.rho), (s2, r2), rates.delta_a,
                                               rates.delta_d, rates.lam_aa, X, A, T, seed, i)
    return pair.violations, pair.checks, pair.audit().ok


def cmd_couple_check(cfg: RunConfig) -> int:
    lat, rates = cfg.lattice(), cfg.rates()
    relation = cfg.get("relation", "monotone")
    T = float(cfg.get("T", 10.0))
    rows = [("instance", "violations", "checks", "audit")]
    failed = 0
    for i in range(int(cfg.get("instances", 100))):
        v, c, ok = _couple_once(cfg, relation, lat, rates, T, i)
        failed += (v > 0) or not ok
        rows.append((i, v, c, "ok" if ok else "mismatch"))
    _emit(cfg, [(cfg.get("out"), _csv(rows))])
    print(f"{relation}: {failed} failing instances of {len(rows) - 1}", file=sys.stderr)
    return EXIT_CHECK if failed else EXIT_OK


def cmd_dual_check(cfg: RunConfig) -> int:
    from .duality import check_duality_relation
    from .graphical import sample_timeline
    lat, rates = cfg.lattice(), cfg.rates()
    T = float(cfg.get("T", 2.0))
    n = lat.n_sites
    rows = [("instance", "forward", "dual", "holds")]
    failed = 0
    for i in range(int(cfg.get("instances", 100))):
        gen = _rng.generator(cfg.seed, i, _rng.STREAM_INITIAL)
        tl = sample_timeline(lat, rates, T, cfg.seed, i)
        I = np.flatnonzero(gen.random(n) < 0.3)
        J = np.flatnonzero(gen.random(n) < 0.3)
        A0 = gen.random(n) < 0.5
        res = check_duality_relation(tl, I, A0, J, T, np.sort(gen.uniform(0, T, 5)))
        failed += not res.holds
        rows.append((i, int(res.forward_hits), int(res.dual_hits), int(res.holds)))
    _emit(cfg, [(cfg.get("out"), _csv(rows))])
    print(f"duality relation: {failed} failing instances of {len(rows) - 1}", file=sys.stderr)
    return EXIT_CHECK if failed else EXIT_OK


def cmd_oracle_check(cfg: RunConfig) -> int:
    from .dynamics import run_ensemble
    from .oracle import exact_marginal, generator_matrix, point_distribution
    lat, rates = cfg.lattice(), cfg.rates()
    t = float(cfg.get("t", 1.0))
    R = int(cfg.get("replicas", 10000))
    X0 = _sites(lat, cfg.get("X0"), "origin", cfg.seed, 0)
    A0 = _sites(lat, cfg.get("A0"), "all", cfg.seed, 0)
    if rates.variant == "cpb":
        X0 = np.intersect1d(X0, A0)
    G = generator_matrix(lat, rates)
    exact = exact_marginal(G, point_distribution(G, X0, A0), t, lambda inf, act: inf[:, 0])
    ens = run_ensemble(lat, rates, X0, A0, t, R, cfg.seed, sample_times=[t], window=[0],
                       n_jobs=int(cfg.get("threads", 1)))
    hits = ens.codes[:, 0, 0, 0] >= 2
    est = float(hits.mean())
    se = math.sqrt(max(exact * (1 - exact), 1e-300) / R)
    z = (est - exact) / se
    verdict = "pass" if abs(z) <= 3 else "fail"
    rows = [("quantity", "exact", "estimate", "se", "z", "verdict"),
            ("P(site 0 infected at t)", repr(exact), repr(est), repr(se), repr(z), verdict)]
    _emit(cfg, [(cfg.get("out"), _csv(rows))])
    return EXIT_OK if verdict == "pass" else EXIT_CHECK


HANDLERS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "bounds": cmd_bounds, "couple-check": cmd_couple_check,
            "dual-check": cmd_dual_check, "oracle-check": cmd_oracle_check, "render": cmd_render}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpswitch", description="Contact process with switching: simulation and checks.",
                                     epilog="Any config key can be given as --key value; flags override the file.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} task")
        p.add_argument("--config", help="JSON config file")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    try:
        cfg = parse_config(args.command, args.config, rest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RateError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
