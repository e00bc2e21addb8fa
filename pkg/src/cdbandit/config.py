"""Experiment configuration: presets, INI files, flag overrides and validation.

File format (``configparser`` INI)::

    [experiment]
    T = 100000
    trials = 100
    seed = 0
    gamma_T = 2

    [environment]
    kind = flipping
    K = 2
    delta = 0.1

    [policy cusum-ucb]
    kind = cusum-ucb
    epsilon = 0.1
    M = 100
    h = 50
    alpha = 0.001

Values are resolved in the order preset, file, flags.  Validation collects
every problem before raising :class:`ConfigError`.  ``to_ini`` writes the
fully resolved configuration, which parses back to an equal object.
"""
from __future__ import annotations

import configparser
import copy
import math
import os
import re
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .env import MeanSchedule, count_breakpoints, flipping_env, load_trace, stationary_env, switching_env
from .factory import POLICY_KINDS, ConfigError, make_policy

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "DETECTOR_KEYS",
    "OUTPUT_ENV_VAR",
    "parse_config",
    "build_environment",
    "format_float",
    "format_value",
]

OUTPUT_ENV_VAR = "CDBANDIT_OUTPUT"
DEFAULT_OUTPUT = "cdbandit-out"
DETECTOR_KEYS = ("epsilon", "M", "h", "alpha", "xi")
CD_KINDS = ("cusum-ucb", "pht-ucb", "cd-ucb")
GAMMA_KINDS = ("d-ucb", "sw-ucb", "exp3s", "rexp3", "exp3r")

EXPERIMENT_TYPES = {"T": "int", "trials": "int", "seed": "int", "output": "str", "workers": "int", "gamma_T": "int"}
ENV_TYPES = {"kind": "str", "K": "int", "delta": "float", "beta": "float", "means": "floats", "path": "str",
             "delimiter": "str"}
ENV_KEYS = {
    "flipping": ("K", "delta"),
    "switching": ("K", "beta"),
    "stationary": ("K", "means"),
    "trace": ("K", "path", "delimiter"),
}
POLICY_TYPES = {
    "kind": "str", "name": "str", "K": "int", "epsilon": "float", "M": "int", "h": "float", "alpha": "float",
    "xi": "float", "countdown": "bool", "gated": "bool", "detector": "str", "gamma_T": "float",
    "discount": "float", "window": "int", "gamma": "float", "share": "float", "V_T": "float", "batch": "int",
    "H": "int", "delta": "float", "scale": "float", "arm": "int",
}


PRESETS: dict[str, dict[str, Any]] = {
    "flipping": {
        "experiment": {"T": 100_000, "trials": 100, "seed": 0, "gamma_T": 2},
        "environment": {"kind": "flipping", "K": 2, "delta": 0.1},
        "detector": {"epsilon": 0.1, "M": 100, "h": 50.0, "alpha": 0.001},
        "policies": ["cusum-ucb", "pht-ucb", "sw-ucb", "d-ucb"],
    },
    "switching": {
        "experiment": {"T": 1_000_000, "trials": 100, "seed": 0, "gamma_T": 10},
        "environment": {"kind": "switching", "K": 5, "beta": 1e-5},
        "detector": {"epsilon": 0.1, "M": 100, "h": 20.0, "alpha": 0.01},
        "policies": ["cusum-ucb", "pht-ucb", "sw-ucb", "d-ucb"],
    },
    "trace": {
        "experiment": {"trials": 100, "seed": 0},
        "environment": {"kind": "trace"},
        "detector": {"epsilon": 0.005, "M": 100, "h": 200.0, "alpha": 0.024},
        "policies": ["cusum-ucb", "pht-ucb", "sw-ucb", "d-ucb"],
    },
}


def format_float(x: float) -> str:
    """Shortest string that round-trips to the same double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(e) for e in v)
    return str(v)


def _coerce(value, typ: str, where: str, problems: list):
    try:
        if typ == "str":
            return str(value).strip()
        if typ == "bool":
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if typ == "int":
            if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
                return int(value)
            s = str(value).strip()
            try:
                return int(s)
            except ValueError:
                f = float(s)
                if not f.is_integer():
                    raise
                return int(f)
        if typ == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if typ == "floats":
            items = value if isinstance(value, (list, tuple)) else str(value).split(",")
            return [float(e) for e in items]
    except (TypeError, ValueError, OverflowError):
        pass
    problems.append(f"{where}: expected {typ.rstrip('s') if typ != 'floats' else 'comma-separated floats'}, "
                    f"got {value!r}")
    return None


@dataclass
class ExperimentConfig:
    experiment: dict[str, Any]
    environment: dict[str, Any]
    policies: list[dict[str, Any]] = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.experiment["T"]

    @property
    def K(self) -> int:
        return self.environment["K"]

    @property
    def trials(self) -> int:
        return self.experiment["trials"]

    @property
    def seed(self) -> int:
        return self.experiment["seed"]

    @property
    def output(self) -> str:
        return self.experiment["output"]

    @property
    def workers(self) -> int:
        return self.experiment["workers"]

    def to_ini(self) -> str:
        lines = ["[experiment]"]
        lines += [f"{k} = {format_value(v)}" for k, v in self.experiment.items() if v is not None]
        lines += ["", "[environment]"]
        lines += [f"{k} = {format_value(v)}" for k, v in self.environment.items() if v is not None]
        for p in self.policies:
            lines += ["", f"[policy {p['name']}]"]
            lines += [f"{k} = {format_value(v)}" for k, v in p.items() if k != "name" and v is not None]
        return "\n".join(lines) + "\n"


def _read_ini(text: str, problems: list) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (M, T, K)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw: dict[str, Any] = {"experiment": {}, "environment": {}, "policies": {}}
    for sec in cp.sections():
        items = dict(cp.items(sec))
        if sec in ("experiment", "environment"):
            raw[sec].update(items)
        elif sec.startswith("policy "):
            name = sec[len("policy "):].strip()
            if not name:
                problems.append(f"section [{sec}]: empty policy name")
            raw["policies"][name] = items
        else:
            problems.append(f"unknown section [{sec}]")
    return raw


def _preset_raw(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    pr = copy.deepcopy(PRESETS[name])
    policies = {}
    for kind in pr["policies"]:
        policies[kind] = _default_policy(kind, pr["detector"])
    return {"experiment": pr["experiment"], "environment": pr["environment"], "policies": policies,
            "detector": pr["detector"]}


def _default_policy(kind, detector: Mapping) -> dict:
    spec = {"kind": kind}
    if kind in CD_KINDS:
        allowed = set(POLICY_KINDS[kind][0]) | set(POLICY_KINDS[kind][1])
        spec.update({k: v for k, v in detector.items() if k in allowed})
    return spec


def parse_config(
    text: str | None = None,
    *,
    path: str | os.PathLike | None = None,
    preset: str | None = None,
    overrides: Mapping[str, Any] | None = None,
    env_overrides: Mapping[str, Any] | None = None,
    detector_overrides: Mapping[str, Any] | None = None,
    policies: list[str] | None = None,
) -> ExperimentConfig:
    """Resolve and validate an experiment configuration.

    ``text`` (or the file at ``path``) is INI; ``preset`` names one of
    :data:`PRESETS` (a file may also set ``preset`` in ``[experiment]``).
    ``overrides`` patch ``[experiment]``, ``env_overrides`` patch
    ``[environment]`` and ``detector_overrides`` patch every policy that
    accepts the key.  ``policies`` restricts or extends the policy list by
    name; unknown names are taken as policy kinds with preset detector
    values.  Raises :class:`ConfigError` listing every violation.
    """
    problems: list[str] = []
    base_dir = Path.cwd()
    file_raw = None
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        base_dir = Path(path).resolve().parent
    if text is not None:
        file_raw = _read_ini(text, problems)
        preset = preset or file_raw["experiment"].pop("preset", None)
        file_raw["experiment"].pop("preset", None)

    raw = _preset_raw(preset) if preset else {"experiment": {}, "environment": {}, "policies": {}, "detector": {}}
    detector_defaults = dict(raw.pop("detector"))
    if file_raw is not None:
        raw["experiment"].update(file_raw["experiment"])
        raw["environment"].update(file_raw["environment"])
        if file_raw["policies"]:
            raw["policies"] = file_raw["policies"]
    for k, v in (overrides or {}).items():
        if v is not None:
            raw["experiment"][k] = v
    for k, v in (env_overrides or {}).items():
        if v is not None:
            raw["environment"][k] = v
    det_over = {k: v for k, v in (detector_overrides or {}).items() if v is not None}
    detector_defaults.update(det_over)
    if policies:
        raw["policies"] = {
            name: raw["policies"].get(name, _default_policy(name, detector_defaults)) for name in policies
        }
    for spec in raw["policies"].values():
        kind = spec.get("kind")
        if kind in POLICY_KINDS:
            allowed = set(POLICY_KINDS[kind][0]) | set(POLICY_KINDS[kind][1])
            spec.update({k: v for k, v in det_over.items() if k in allowed})

    experiment = _validate_experiment(raw["experiment"], problems)
    environment = _validate_environment(raw["environment"], base_dir, problems)
    pols = [_validate_policy(name, spec, problems) for name, spec in raw["policies"].items()]
    if not pols:
        problems.append("no policies configured")

    K, T = environment.get("K"), experiment.get("T")
    if environment.get("kind") == "trace" and experiment.get("gamma_T") is None and T and not problems:
        # missing or unreadable files surface here as OSError (an I/O failure, not a validation one)
        try:
            sched = load_trace(environment["path"], T, delimiter=environment.get("delimiter", ","))
        except ValueError as exc:
            problems.append(f"[environment] path: {exc}")
        else:
            experiment["gamma_T"] = max(1, count_breakpoints(sched))
    gamma_T = experiment.get("gamma_T")
    if environment.get("kind") == "switching" and environment.get("beta") is None and T and gamma_T:
        environment["beta"] = gamma_T / T
    for p in pols:
        if p is None:
            continue
        if p.get("kind") in GAMMA_KINDS and p.get("gamma_T") is None and gamma_T:
            p["gamma_T"] = float(gamma_T)
        if p.get("K") is not None and K is not None and p["K"] != K:
            problems.append(f"policy {p['name']!r}: K={p['K']} but the environment has K={K}")
    if problems:
        raise ConfigError(problems)
    # policy-level checks that need K and T (ranges, tuned defaults)
    if K is not None and T is not None:
        for p in pols:
            try:
                make_policy(p, K, T)
            except ConfigError as exc:
                problems.extend(exc.problems)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(experiment, environment, pols)


def _check_keys(section, data, allowed, problems):
    for k in data:
        if k not in allowed:
            problems.append(f"[{section}]: unknown key {k!r}")


def _validate_experiment(raw, problems):
    _check_keys("experiment", raw, EXPERIMENT_TYPES, problems)
    out = {k: _coerce(raw[k], t, f"[experiment] {k}", problems) for k, t in EXPERIMENT_TYPES.items() if k in raw}
    if out.get("T") is None:
        if "T" not in raw:
            problems.append("[experiment] T: missing")
    elif out["T"] < 1:
        problems.append(f"[experiment] T: must be a positive integer, got {out['T']}")
    out.setdefault("trials", 100)
    if out["trials"] is not None and out["trials"] < 1:
        problems.append(f"[experiment] trials: must be >= 1, got {out['trials']}")
    out.setdefault("seed", 0)
    if out["seed"] is not None and out["seed"] < 0:
        problems.append(f"[experiment] seed: must be >= 0, got {out['seed']}")
    out.setdefault("workers", 1)
    if out["workers"] is not None and out["workers"] < 1:
        problems.append(f"[experiment] workers: must be >= 1, got {out['workers']}")
    if out.get("gamma_T") is not None and out["gamma_T"] < 0:
        problems.append(f"[experiment] gamma_T: must be >= 0, got {out['gamma_T']}")
    if out.get("gamma_T") is not None and out.get("T") and out["T"] >= 1 and out["gamma_T"] >= out["T"]:
        problems.append("[experiment] gamma_T: must be smaller than T")
    if not out.get("output"):
        out["output"] = os.environ.get(OUTPUT_ENV_VAR) or DEFAULT_OUTPUT
    order = ("T", "trials", "seed", "gamma_T", "workers", "output")
    return {k: out[k] for k in order if k in out}


def _validate_environment(raw, base_dir, problems):
    kind = raw.get("kind")
    if kind is None:
        problems.append("[environment] kind: missing")
        return {}
    kind = str(kind).strip()
    if kind not in ENV_KEYS:
        problems.append(f"[environment] kind: unknown {kind!r}; expected one of {sorted(ENV_KEYS)}")
        return {}
    _check_keys("environment", raw, ("kind",) + ENV_KEYS[kind], problems)
    out = {"kind": kind}
    for k in ENV_KEYS[kind]:
        if k in raw:
            out[k] = _coerce(raw[k], ENV_TYPES[k], f"[environment] {k}", problems)
    if kind == "flipping":
        if out.get("K", 2) != 2:
            problems.append(f"[environment] K: the flipping environment has 2 arms, got {out['K']}")
        out["K"] = 2
        d = out.get("delta")
        if "delta" not in raw:
            problems.append("[environment] delta: missing")
        elif d is not None and not 0 < d < 0.5:
            problems.append(f"[environment] delta: must lie in (0, 0.5), got {d}")
    elif kind == "switching":
        if "K" not in raw:
            problems.append("[environment] K: missing")
        b = out.get("beta")
        if b is not None and not 0 <= b <= 1:
            problems.append(f"[environment] beta: must lie in [0, 1], got {b}")
    elif kind == "stationary":
        means = out.get("means")
        if "means" not in raw:
            problems.append("[environment] means: missing")
        elif means is not None:
            if any(not 0 <= m <= 1 for m in means):
                problems.append("[environment] means: every mean must lie in [0, 1]")
            if out.get("K") is not None and out["K"] != len(means):
                problems.append(f"[environment] K: {out['K']} but {len(means)} means given")
            out["K"] = len(means)
    elif kind == "trace":
        if not out.get("path"):
            problems.append("[environment] path: missing (trace file)")
        else:
            p = Path(out["path"])
            out["path"] = str(p if p.is_absolute() else (base_dir / p).resolve())
        if out.get("K") is None and out.get("path") and Path(out["path"]).is_file():
            try:
                with open(out["path"], encoding="utf-8") as fh:
                    header = fh.readline()
                out["K"] = len(header.strip().split(out.get("delimiter", ","))) - 1
            except OSError:
                pass
    if out.get("K") is not None and out["K"] < 1:
        problems.append(f"[environment] K: must be positive, got {out['K']}")
    return out


def _validate_policy(name, spec, problems):
    where = f"[policy {name}]"
    kind = spec.get("kind", name)
    if kind not in POLICY_KINDS:
        problems.append(f"{where} kind: unknown {kind!r}; expected one of {sorted(POLICY_KINDS)}")
        return None
    required, optional = POLICY_KINDS[kind]
    allowed = ("kind", "K") + required + optional
    if not re.fullmatch(r"[A-Za-z0-9._-]+", name):
        problems.append(f"{where}: policy names may only use letters, digits, '.', '_' and '-'")
    out: dict[str, Any] = {"name": name, "kind": kind}
    for k, v in spec.items():
        if k in ("kind", "name"):
            continue
        if k not in allowed:
            problems.append(f"{where}: unknown key {k!r} for kind {kind!r}")
            continue
        out[k] = _coerce(v, POLICY_TYPES[k], f"{where} {k}", problems)
    for k in required:
        if k not in out:
            problems.append(f"{where}: missing key {k!r}")
    for k, (ok, rule) in _POLICY_RANGES.items():
        v = out.get(k)
        if v is not None and not ok(v):
            problems.append(f"{where} {k}: must be {rule}, got {format_value(v)}")
    return out


# ranges that need neither K nor T, so they are reported with every other problem
_POLICY_RANGES = {
    "alpha": (lambda v: 0 <= v <= 1, "in [0, 1]"),
    "epsilon": (lambda v: 0 < v < 0.5, "in (0, 0.5)"),
    "M": (lambda v: v >= 1, ">= 1"),
    "h": (lambda v: v >= 0, ">= 0 or inf"),
    "xi": (lambda v: v > 0, "positive"),
    "discount": (lambda v: 0 < v <= 1, "in (0, 1]"),
    "window": (lambda v: v >= 1, ">= 1"),
    "gamma": (lambda v: 0 <= v <= 1, "in [0, 1]"),
    "batch": (lambda v: v >= 1, ">= 1"),
    "H": (lambda v: v >= 1, ">= 1"),
    "delta": (lambda v: 0 < v < 1, "in (0, 1)"),
}


def _switching_draw(rng, K, T, beta):
    return switching_env(K, T, beta, rng)


def build_environment(cfg: ExperimentConfig):
    """``(env, K, T, gamma_T)`` where ``env`` is a :class:`MeanSchedule` or a
    picklable callable drawing one per trial."""
    e, T = cfg.environment, cfg.T
    gamma_T = cfg.experiment.get("gamma_T")
    kind = e["kind"]
    if kind == "flipping":
        env: MeanSchedule | Any = flipping_env(T, e["delta"])
    elif kind == "stationary":
        env = stationary_env(e["means"], T)
    elif kind == "trace":
        env = load_trace(e["path"], T, delimiter=e.get("delimiter", ","))
        if e.get("K") is not None and env.K != e["K"]:
            raise ConfigError(f"[environment] K: {e['K']} but the trace has {env.K} arms")
    else:
        env = partial(_switching_draw, K=e["K"], T=T, beta=e["beta"])
    if gamma_T is None and isinstance(env, MeanSchedule):
        gamma_T = count_breakpoints(env)
    return env, (env.K if isinstance(env, MeanSchedule) else e["K"]), T, gamma_T
