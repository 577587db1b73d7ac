"""``sketch`` command: run one scenario and write its probe CSV.

Exit status: 0 on success, 1 for configuration errors, 2 for runtime errors.
Flags may also come from a flat ``key = value`` file given with
``--config``; flags on the command line take precedence.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .bench import DEFAULT_ORACLE_CAP, SCENARIOS, RunConfig, run_scenario
from .errors import InvalidInput

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sketch", description="Run a streaming sketch scenario against an exact oracle.")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="flat key = value file of flag defaults")
    p.add_argument("--eps", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--dim-y", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--rmax", type=float)
    p.add_argument("--sites", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--query-every", type=int)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input")
    src.add_argument("--gen", choices=("uniform", "noisy"))
    p.add_argument("--rows", type=int)
    p.add_argument("--zeta", type=float)
    p.add_argument("--out")
    p.add_argument("--normalize", action="store_true", default=None)
    p.add_argument("--baseline", choices=("svd",))
    p.add_argument("--oracle-cap", type=int)
    p.add_argument("--latency", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# flag name -> (RunConfig field, converter)
_FIELDS = {
    "eps": ("eps", float),
    "dim": ("dim", int),
    "dim_y": ("dim_y", int),
    "window": ("window", int),
    "rmax": ("r_max", float),
    "sites": ("sites", int),
    "delta": ("delta", float),
    "seed": ("seed", int),
    "query_every": ("query_every", int),
    "input": ("input", str),
    "gen": ("gen", str),
    "rows": ("rows", int),
    "zeta": ("zeta", float),
    "out": ("out", str),
    "normalize": ("normalize", lambda v: str(v).lower() in ("1", "true", "yes", "on")),
    "baseline": ("baseline", str),
    "oracle_cap": ("oracle_cap", int),
    "latency": ("latency", int),
}


def read_config_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    raw = read_config_file(ns.config) if ns.config else {}
    for key in _FIELDS:
        val = getattr(ns, key)
        if val is not None:
            raw[key] = val
    if "eps" not in raw:
        raise ConfigError("--eps is required")
    kwargs = {"scenario": ns.scenario}
    for key, val in raw.items():
        name, conv = _FIELDS[key]
        try:
            kwargs[name] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {val!r}") from exc
    kwargs.setdefault("oracle_cap", DEFAULT_ORACLE_CAP)
    return RunConfig(**kwargs)


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = config_from_args(ns).validate()
    except (ConfigError, InvalidInput, OSError) as exc:
        print(f"sketch: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_scenario(cfg)
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        print(f"sketch: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
