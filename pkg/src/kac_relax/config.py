"""Experiment configuration: flat ``key = value`` lines under section headers.

Example::

    subcommand = relax-rate
    seed = 2024

    [datum]
    family = uniform
    halfwidth = 1.7320508075688772

    [solver]
    xi_max = 80
    n_points = 8001

    [run]
    times = 2, 3, 4, 5, 6, 7, 8

Keys before the first header belong to ``[experiment]``. Lists are comma
separated, optionally in brackets. ``#`` starts a comment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError, KacRelaxError
from .wild_solver import SolverConfig

SUBCOMMANDS = ("solve", "relax-rate", "moment-check", "bounds-audit", "counterexample")
MC_SUBCOMMANDS = ("moment-check",)


def _float(text):
    val = float(text)
    if not math.isfinite(val):
        raise ValueError("must be finite")
    return val


def _int(text):
    val = float(text)
    if val != int(val):
        raise ValueError("must be an integer")
    return int(val)


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("must be true or false")


def _str(text):
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def _list(conv):
    def parse(text):
        body = text.strip()
        if body.startswith("[") and body.endswith("]"):
            body = body[1:-1]
        items = [x.strip() for x in body.split(",") if x.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(conv(x) for x in items)

    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "experiment": {
        "subcommand": (_str, None),
        "seed": (_int, 2024),
        "out_dir": (_str, "kac_out"),
        "emit_svg": (_bool, False),
    },
    "datum": {
        "family": (_str, None),
        "sigma": (_float, None),
        "halfwidth": (_float, None),
        "weights": (_list(_float), None),
        "sigmas": (_list(_float), None),
        "means": (_list(_float), None),
        "beta": (_float, None),
        "coeffs": (_list(_float), None),
        "grid_path": (_str, None),
        "m2": (_float, None),
        "m4": (_float, None),
        "tail_p": (_float, None),
        "symmetrize": (_bool, False),
    },
    "solver": {
        "xi_max": (_float, None),
        "n_points": (_int, 4096),
        "quad_nodes": (_int, 64),
        "tol": (_float, 1e-10),
        "max_terms": (_int, 5000),
        "max_step": (_float, 0.5),
    },
    "run": {
        "times": (_list(_float), (0.5, 1.0, 2.0, 4.0)),
        "trials": (_int, 100_000),
        "m_values": (_list(_float), (4.0,)),
        "nus": (_list(_int), ()),
        "velocity_samples": (_int, 0),
        "xi_star": (_list(_float), (0.25,)),
        "v_max": (_float, 10.0),
        "n_v": (_int, 4001),
        "taper": (_float, 0.25),
        "dump_samples": (_bool, False),
        "audit_n": (_list(_int), (4, 16, 64)),
        "alpha_m_values": (_list(_float), (1.0, 2.0, 3.0, 3.5, 4.0, 6.0)),
    },
}


@dataclass
class ExperimentConfig:
    subcommand: str
    datum: dict
    times: tuple
    solver: SolverConfig
    trials: int = 100_000
    seed: int = 2024
    out_dir: Path = Path("kac_out")
    emit_svg: bool = False
    run: dict = field(default_factory=dict)


def parse_config(text, subcommand=None):
    """Parse and validate configuration text into an :class:`ExperimentConfig`.

    ``subcommand`` (from the command line) fills in or must match the
    config's own ``subcommand`` key.
    """
    values = {sec: {} for sec in SCHEMA}
    lines_of = {}
    section = "experiment"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("malformed section header", line=lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key in [{section}]", key=key, line=lineno)
        if key in values[section]:
            raise ConfigError("duplicate key", key=key, line=lineno)
        conv = SCHEMA[section][key][0]
        try:
            values[section][key] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"bad value {val!r}: {exc}", key=key, line=lineno) from None
        lines_of[key] = lineno

    def get(sec, key):
        return values[sec].get(key, SCHEMA[sec][key][1])

    sub = get("experiment", "subcommand")
    if subcommand is not None:
        if sub is not None and sub != subcommand:
            raise ConfigError(
                f"config is for '{sub}', not '{subcommand}'", key="subcommand", line=lines_of.get("subcommand")
            )
        sub = subcommand
    if sub is None:
        raise ConfigError("missing", key="subcommand")
    if sub not in SUBCOMMANDS:
        raise ConfigError(f"must be one of {', '.join(SUBCOMMANDS)}", key="subcommand", line=lines_of.get("subcommand"))

    datum = {k: v for k, v in values["datum"].items()}
    if sub != "bounds-audit" and "family" not in datum:
        raise ConfigError("missing [datum] family", key="family")
    if "family" in datum:
        # fail early on datum errors, reported with the config line
        from .initial_data import make_datum

        spec = {k: v for k, v in datum.items() if k != "symmetrize"}
        try:
            make_datum(spec)
        except KacRelaxError as exc:
            key = getattr(exc, "field", None)
            raise ConfigError(str(exc), key=key, line=lines_of.get(key)) from None

    times = get("run", "times")
    if any(t < 0 for t in times):
        raise ConfigError("times must be non-negative", key="times", line=lines_of.get("times"))
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError("times must be strictly increasing", key="times", line=lines_of.get("times"))

    trials = get("run", "trials")
    if sub in MC_SUBCOMMANDS and trials < 100:
        raise ConfigError("trials must be at least 100", key="trials", line=lines_of.get("trials"))

    solver_kw = {f.name: get("solver", f.name) for f in fields(SolverConfig)}
    try:
        solver = SolverConfig(**solver_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    run = {k: get("run", k) for k in SCHEMA["run"]}
    for key in ("n_v", "velocity_samples"):
        if run[key] < 0 or (key == "n_v" and run[key] < 3):
            raise ConfigError("out of range", key=key, line=lines_of.get(key))
    if not 0.0 <= run["taper"] < 1.0:
        raise ConfigError("taper must lie in [0, 1)", key="taper", line=lines_of.get("taper"))
    if not run["v_max"] > 0:
        raise ConfigError("v_max must be positive", key="v_max", line=lines_of.get("v_max"))

    return ExperimentConfig(
        subcommand=sub,
        datum=datum,
        times=tuple(times),
        solver=solver,
        trials=trials,
        seed=get("experiment", "seed"),
        out_dir=Path(get("experiment", "out_dir")),
        emit_svg=get("experiment", "emit_svg"),
        run=run,
    )


def load_config(path, subcommand=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, subcommand)
