"""Closed-form expression grammar for inline config definitions.

Expressions are parsed by sympy against a fixed whitelist of symbols and
functions and compiled to numpy callables with ``lambdify``. Anything outside
the whitelist is a configuration error.
"""

import re
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import sympy
from shared.exceptions import ConfigurationError
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

ALLOWED_FUNCTIONS: dict[str, object] = {
    "exp": sympy.exp,
    "log": sympy.log,
    "sqrt": sympy.sqrt,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "tan": sympy.tan,
    "sinh": sympy.sinh,
    "cosh": sympy.cosh,
    "tanh": sympy.tanh,
    "Abs": sympy.Abs,
    "abs": sympy.Abs,
    "Min": sympy.Min,
    "Max": sympy.Max,
    "pi": sympy.pi,
    "E": sympy.E,
}

STATE_SYMBOLS = ("x", "x0", "x1", "x2")
TIME_SYMBOLS = ("t", "s")

_SYMBOLS = {name: sympy.Symbol(name, real=True) for name in (*TIME_SYMBOLS, *STATE_SYMBOLS, "T")}
_FORBIDDEN = re.compile(r"__|\.[A-Za-z_]|[\[\]{};:=]|\blambda\b")
_TRANSFORMATIONS = standard_transformations + (convert_xor,)

__all__ = [
    "CompiledExpression",
    "compile_expression",
    "time_function",
    "kernel_function",
    "state_function",
    "state_functions",
]


@dataclass(frozen=True, eq=False)
class CompiledExpression:
    """A parsed expression and its numpy callable over ``arguments``."""

    text: str
    expr: sympy.Expr
    arguments: tuple[str, ...]
    fn: Callable[..., object]

    def __call__(self, **values: np.ndarray | float) -> np.ndarray:
        inputs = [np.asarray(values[name], dtype=float) for name in self.arguments]
        shape = np.broadcast_shapes(*(a.shape for a in inputs)) if inputs else ()
        with np.errstate(all="ignore"):
            result = np.asarray(self.fn(*inputs), dtype=float)
        return np.array(np.broadcast_to(result, shape))


def compile_expression(
    text: str, variables: Sequence[str], constants: Mapping[str, float] | None = None
) -> CompiledExpression:
    """
    Compile an expression over ``variables`` (a subset of t, s, x, x0, x1, x2).

    ``constants`` fixes named values such as the horizon T.

    Raises:
        ConfigurationError: On a syntax error, an unknown name or a non-real result

    Examples:
        >>> compile_expression("exp(-(t - s))", ["t", "s"])(t=1.0, s=1.0)
        array(1.)
    """
    if not isinstance(text, str) or not text.strip():
        raise ConfigurationError("Expression must be a nonempty string")
    if _FORBIDDEN.search(text):
        raise ConfigurationError(f"Expression '{text}' uses forbidden syntax")
    constants = dict(constants or {})
    local: dict[str, object] = dict(ALLOWED_FUNCTIONS)
    local.update(_SYMBOLS)
    global_dict: dict[str, object] = {
        "Integer": sympy.Integer,
        "Float": sympy.Float,
        "Rational": sympy.Rational,
        "Symbol": sympy.Symbol,
        "__builtins__": {},
    }
    try:
        expr = parse_expr(
            text, local_dict=local, global_dict=global_dict, transformations=_TRANSFORMATIONS
        )
    except Exception as e:
        raise ConfigurationError(f"Cannot parse expression '{text}': {e}") from e
    if not isinstance(expr, sympy.Expr):
        raise ConfigurationError(f"Expression '{text}' is not a scalar expression")

    allowed = set(variables) | set(constants)
    unknown = sorted(str(sym) for sym in expr.free_symbols if str(sym) not in allowed)
    unknown += sorted(str(call.func) for call in expr.atoms(AppliedUndef))
    if unknown:
        raise ConfigurationError(f"Expression '{text}' uses unknown names: {', '.join(unknown)}")
    fixed = {_SYMBOLS[name]: value for name, value in constants.items() if name in _SYMBOLS}
    expr = expr.subs(fixed)
    arguments = tuple(variables)
    fn = sympy.lambdify([_SYMBOLS[name] for name in arguments], expr, modules="numpy")
    return CompiledExpression(text=text, expr=expr, arguments=arguments, fn=fn)


def time_function(text: str, T: float) -> Callable[[np.ndarray], np.ndarray]:
    """Scalar function of t."""
    compiled = compile_expression(text, ["t"], {"T": T})
    return lambda t: compiled(t=t)


def kernel_function(
    entries: Sequence[Sequence[str]], T: float, d: int
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """d x d matrix of expressions in (t, s), vectorized to shape (..., d, d)."""
    if len(entries) != d or any(len(row) != d for row in entries):
        raise ConfigurationError(f"Kernel entries must form a {d} x {d} matrix")
    compiled = [[compile_expression(e, ["t", "s"], {"T": T}) for e in row] for row in entries]

    def fn(t: np.ndarray, s: np.ndarray) -> np.ndarray:
        return np.stack(
            [np.stack([entry(t=t, s=s) for entry in row], axis=-1) for row in compiled], axis=-2
        )

    return fn


def _state_names(d: int) -> list[str]:
    return [f"x{i}" for i in range(d)]


def state_functions(
    components: Sequence[str], T: float, d: int
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """
    Componentwise map (t, x) -> R^m with x given as (n, d) states.

    ``x`` is accepted as a name for x0 when d = 1.
    """
    names = ["t", *_state_names(d)]
    constants = {"T": T}
    compiled = []
    for text in components:
        variables = names + (["x"] if d == 1 else [])
        compiled.append(compile_expression(text, variables, constants))

    def fn(times: np.ndarray, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        values: dict[str, np.ndarray] = {"t": np.asarray(times, dtype=float)}
        for i in range(d):
            values[f"x{i}"] = states[..., i]
        if d == 1:
            values["x"] = states[..., 0]
        columns = [c(**{name: values[name] for name in c.arguments}) for c in compiled]
        shape = states.shape[:-1]
        return np.stack([np.broadcast_to(col, shape) for col in columns], axis=-1)

    return fn


def state_function(
    components: Sequence[str], T: float, d: int
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Vector field f(t, x) with exactly d components."""
    if len(components) != d:
        raise ConfigurationError(f"Expected {d} components, got {len(components)}")
    return state_functions(components, T, d)
