from enum import Enum
from typing import List, Sequence, Union

import numpy as np

from certificates import ClassKFunction

ClosedFormSpec = Union[str, Sequence[str]]


class ClosedForm(Enum):
    IDENTITY = "identity"   # s
    SQRT = "sqrt"           # s ** 0.5
    POWER = "power"         # s ** p, p > 0
    SCALE = "scale"         # c * s, c > 0


def _invalid(spec: str) -> ValueError:
    valid_forms = ", ".join(["identity", "sqrt", "power <p>", "scale <c>"])
    return ValueError(f"Invalid closed form: '{spec}'. Valid options are: {valid_forms}.")


def _parameter(spec: str, tokens: List[str]) -> float:
    if len(tokens) != 2:
        raise _invalid(spec)
    try:
        value = float(tokens[1])
    except ValueError:
        raise _invalid(spec)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"Closed form '{spec}' needs a positive finite parameter")
    return value


def parse_single(spec: str) -> ClassKFunction:
    tokens = spec.strip().split()
    if not tokens:
        raise _invalid(spec)
    try:
        form = ClosedForm(tokens[0].lower())
    except ValueError:
        raise _invalid(spec)

    if form is ClosedForm.IDENTITY:
        if len(tokens) != 1:
            raise _invalid(spec)
        return ClassKFunction(lambda s: s, lambda v: v, template="{}")
    if form is ClosedForm.SQRT:
        if len(tokens) != 1:
            raise _invalid(spec)
        return ClassKFunction(lambda s: s ** 0.5, lambda v: v * v, template="sqrt({})")
    if form is ClosedForm.POWER:
        p = _parameter(spec, tokens)
        if p == 2.0:
            return ClassKFunction(lambda s: s * s, lambda v: v ** 0.5, template="({})^2")
        return ClassKFunction(lambda s: s ** p, lambda v: v ** (1.0 / p), template=f"({{}})^{p:g}")
    c = _parameter(spec, tokens)
    return ClassKFunction(lambda s: c * s, lambda v: v / c, template=f"{c:g}*{{}}")


def parse_class_k(spec: ClosedFormSpec) -> ClassKFunction:
    """
    Build a class-K function from a named closed form.

    A list is a composition applied in order: ["scale 2", "sqrt"] is
    s -> sqrt(2*s).
    """
    if isinstance(spec, str):
        return parse_single(spec)
    if len(spec) == 0:
        raise ValueError("An empty composition is not a closed form; use 'identity'")
    result = parse_single(spec[0])
    for item in spec[1:]:
        result = parse_single(item).compose(result)
    return result
