"""User expressions from config strings, compiled to numpy callables through sympy."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr, standard_transformations, implicit_multiplication

_TRANSFORMS = standard_transformations + (implicit_multiplication,)


def split_top_level(text: str, sep: str = ",") -> list[str]:
    """Split on ``sep`` outside parentheses."""
    parts, depth, current = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    parts.append("".join(current).strip())
    return parts


def position_symbols(dim: int) -> list[str]:
    return ["x"] if dim == 1 else ["x1", "x2"]


def compile_expression(text: str, variables: Sequence[str]) -> Callable[..., np.ndarray]:
    """Compile ``text`` as a function of ``variables``; ``x`` aliases ``x1``."""
    syms = {name: sympy.Symbol(name) for name in variables}
    local = dict(syms)
    if "x1" in syms and "x" not in syms:
        local["x"] = syms["x1"]
    local["pi"] = sympy.pi
    local["e"] = sympy.E
    try:
        expr = parse_expr(text, local_dict=local, transformations=_TRANSFORMS)
    except (SyntaxError, TypeError, sympy.SympifyError) as exc:
        raise ValueError(f"cannot parse expression {text!r}: {exc}") from None
    unknown = {str(s) for s in expr.free_symbols} - set(variables)
    if unknown:
        raise ValueError(f"unknown symbols {sorted(unknown)} in {text!r}")
    fn = sympy.lambdify([syms[v] for v in variables], expr, modules="numpy")

    def evaluate(*args):
        out = np.asarray(fn(*args), dtype=float)
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape if args else ()
        return np.broadcast_to(out, shape).astype(float)

    evaluate.expression = text
    return evaluate
