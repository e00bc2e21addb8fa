"""Build policies from flat parameter mappings (the policy sections of an
experiment config)."""
from __future__ import annotations

from functools import partial
from typing import Any, Callable, Mapping

from .baselines import DiscountedUCB, Exp3R, Exp3S, Rexp3, SlidingWindowUCB, default_discount, default_window
from .detect import DetectorParams
from .policy import CDUCB, FixedArmPolicy, OraclePolicy, Policy

__all__ = ["ConfigError", "POLICY_KINDS", "make_policy", "policy_factory"]


class ConfigError(ValueError):
    """Invalid or incomplete configuration.  ``problems`` lists every issue."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# kind -> (required keys, optional keys)
POLICY_KINDS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "cusum-ucb": (("epsilon", "M", "h", "alpha"), ("xi", "countdown")),
    "pht-ucb": (("epsilon", "h", "alpha"), ("M", "xi", "countdown", "gated")),
    "cd-ucb": (("alpha",), ("detector", "epsilon", "M", "h", "xi", "countdown")),
    "ucb": ((), ("xi",)),
    "d-ucb": ((), ("gamma_T", "discount", "xi", "scale")),
    "sw-ucb": ((), ("gamma_T", "window", "xi")),
    "exp3s": ((), ("gamma_T", "gamma", "share")),
    "rexp3": ((), ("V_T", "gamma_T", "batch", "gamma")),
    "exp3r": ((), ("gamma_T", "gamma", "H", "delta")),
    "oracle": ((), ()),
    "fixed": (("arm",), ()),
}

_COMMON = ("kind", "name", "K")


def _need(spec, key, kind):
    if key not in spec or spec[key] is None:
        raise ConfigError(f"policy {kind!r}: missing parameter {key!r}")
    return spec[key]


def make_policy(spec: Mapping[str, Any], K: int, T: int) -> Policy:
    """Instantiate the policy described by ``spec`` for K arms and horizon T.

    ``spec["kind"]`` is one of :data:`POLICY_KINDS`.  Passive baselines fall
    back to their gamma_T-tuned defaults when explicit values are absent, and
    then require ``gamma_T``.
    """
    spec = dict(spec)
    kind = spec.get("kind")
    if kind not in POLICY_KINDS:
        raise ConfigError(f"unknown policy kind {kind!r}; expected one of {sorted(POLICY_KINDS)}")
    required, optional = POLICY_KINDS[kind]
    unknown = sorted(set(spec) - set(required) - set(optional) - set(_COMMON))
    problems = [f"policy {kind!r}: unknown parameter {k!r}" for k in unknown]
    problems += [f"policy {kind!r}: missing parameter {k!r}" for k in required if spec.get(k) is None]
    if spec.get("K") is not None and int(spec["K"]) != K:
        problems.append(f"policy {kind!r}: K={spec['K']} but the environment has K={K}")
    if problems:
        raise ConfigError(problems)
    name = spec.get("name") or kind
    xi = float(spec.get("xi", 1.0))
    try:
        return _build(kind, spec, K, T, xi, name)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"policy {name!r}: {exc}") from None


def _build(kind, spec, K, T, xi, name):
    if kind in ("cusum-ucb", "pht-ucb", "cd-ucb"):
        detector = {"cusum-ucb": "cusum", "pht-ucb": "pht"}.get(kind, spec.get("detector"))
        if kind == "pht-ucb" and spec.get("gated"):
            detector = "pht-gated"
        if detector in ("none", ""):
            detector = None
        params = None
        if detector is not None:
            M = int(spec.get("M", 1)) if kind == "pht-ucb" else int(_need(spec, "M", kind))
            params = DetectorParams(float(_need(spec, "epsilon", kind)), M, float(_need(spec, "h", kind)))
        countdown = bool(spec.get("countdown", kind == "cusum-ucb"))
        return CDUCB(K, alpha=float(spec["alpha"]), xi=xi, detector=detector, params=params,
                     countdown=countdown, name=name)
    if kind == "ucb":
        return CDUCB(K, alpha=0.0, xi=xi, name=name)
    if kind == "d-ucb":
        disc = spec.get("discount")
        if disc is None:
            disc = default_discount(T, float(_need(spec, "gamma_T", kind)))
        p = DiscountedUCB(K, float(disc), xi=xi, scale=float(spec.get("scale", 2.0)))
    elif kind == "sw-ucb":
        w = spec.get("window")
        if w is None:
            w = default_window(T, float(_need(spec, "gamma_T", kind)))
        p = SlidingWindowUCB(K, int(w), T, xi=xi)
    elif kind == "exp3s":
        if spec.get("gamma") is None:
            p = Exp3S.tuned(K, T, float(_need(spec, "gamma_T", kind)))
            if spec.get("share") is not None:
                p.share = float(spec["share"])
        else:
            p = Exp3S(K, float(spec["gamma"]), float(spec.get("share", 1.0 / T)))
    elif kind == "rexp3":
        batch = spec.get("batch")
        if batch is None:
            V_T = spec.get("V_T")
            if V_T is None:
                V_T = _need(spec, "gamma_T", kind)
            batch = Rexp3.default_batch(K, T, float(V_T))
        gamma = spec.get("gamma")
        p = Rexp3(K, int(batch), None if gamma is None else float(gamma))
    elif kind == "exp3r":
        if spec.get("gamma") is None or spec.get("H") is None:
            tuned = Exp3R.tuned(K, T, float(_need(spec, "gamma_T", kind)))
            gamma = tuned.gamma if spec.get("gamma") is None else float(spec["gamma"])
            H = tuned.H if spec.get("H") is None else int(spec["H"])
        else:
            gamma, H = float(spec["gamma"]), int(spec["H"])
        p = Exp3R(K, gamma, H, float(spec.get("delta", 1.0 / T)))
    elif kind == "oracle":
        p = OraclePolicy(K)
    else:
        p = FixedArmPolicy(K, int(spec["arm"]))
    p.name = name
    return p


def policy_factory(spec: Mapping[str, Any], K: int, T: int) -> Callable[[], Policy]:
    """Validate ``spec`` once and return a zero-argument constructor."""
    make_policy(spec, K, T)
    return partial(make_policy, dict(spec), K, T)

