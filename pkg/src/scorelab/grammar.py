"""Shell-friendly density strings.

``normal:mu:sigma``, ``logistic:loc:scale``, ``huber:alpha`` (the two-piece
gamma density) and ``mix:w1:density1:w2:density2:...`` with non-mixture
components. A string starting with ``{`` is parsed as the JSON form.
Nested mixtures are only available through JSON.
"""

from __future__ import annotations

import json

from .densities import DensityModel, Logistic, Mixture, Normal, TwoPieceGamma, from_dict, mixture
from .errors import SpecificationError

_ARITY = {"normal": 2, "logistic": 2, "huber": 1}


def parse_density(text: str) -> DensityModel:
    text = text.strip()
    if text.startswith("{"):
        try:
            return from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise SpecificationError(f"bad density JSON: {exc}") from None
    tokens = text.split(":")
    if tokens[0].lower() in ("mix", "mixture"):
        rest = tokens[1:]
        weights, comps = [], []
        while rest:
            if len(rest) < 2:
                raise SpecificationError(f"dangling weight in {text!r}")
            weights.append(_number(rest[0], text))
            kind = rest[1].lower()
            if kind not in _ARITY:
                raise SpecificationError(f"mixture component must be one of {', '.join(_ARITY)}, got {rest[1]!r}")
            n = _ARITY[kind]
            comps.append(_simple(kind, rest[2 : 2 + n], text))
            rest = rest[2 + n :]
        if not comps:
            raise SpecificationError(f"empty mixture {text!r}")
        return mixture(weights, comps)
    kind = tokens[0].lower()
    if kind not in _ARITY:
        raise SpecificationError(f"unknown density {text!r}; expected normal, logistic, huber, mix or JSON")
    if len(tokens) - 1 != _ARITY[kind]:
        raise SpecificationError(f"{kind} takes {_ARITY[kind]} parameters, got {text!r}")
    return _simple(kind, tokens[1:], text)


def _simple(kind, args, text):
    if len(args) != _ARITY[kind]:
        raise SpecificationError(f"{kind} takes {_ARITY[kind]} parameters in {text!r}")
    vals = [_number(a, text) for a in args]
    if kind == "normal":
        return Normal(*vals)
    if kind == "logistic":
        return Logistic(*vals)
    return TwoPieceGamma(*vals)


def _number(token, text):
    try:
        return float(token)
    except ValueError:
        raise SpecificationError(f"expected a number, got {token!r} in {text!r}") from None


def format_density(p: DensityModel) -> str:
    """Inverse of :func:`parse_density` where the short form exists, JSON otherwise."""
    if isinstance(p, Normal):
        return f"normal:{p.mu:g}:{p.sigma:g}"
    if isinstance(p, Logistic):
        return f"logistic:{p.location:g}:{p.scale:g}"
    if isinstance(p, TwoPieceGamma):
        return f"huber:{p.alpha:g}"
    if isinstance(p, Mixture) and not any(isinstance(c, Mixture) for c in p.components):
        return "mix:" + ":".join(f"{w:g}:{format_density(c)}" for w, c in zip(p.weights, p.components))
    return json.dumps(p.to_dict())
