"""Closed-form coefficient expressions and field evaluation.

Coefficient fields (drift components, control channels, initial and target
densities, control bounds) can be given as plain numbers, as small
closed-form expressions, as Python callables, or as tabulated arrays.
This module implements the expression language and the common evaluation
entry point used by the assembly and configuration layers.

The expression grammar is deliberately tiny: numeric literals, ``+ - * /``,
unary minus, the functions ``sin``, ``cos``, ``exp``, the constant ``pi``,
and the coordinate names ``x`` (alias ``x1``), ``x1``, ``x2`` (alias ``y``)
and ``t``.  Expressions are parsed once and evaluated with numpy, so they
vectorize over coordinate arrays.
"""

from __future__ import annotations

import ast
import math

import numpy as np

__all__ = ["Expression", "ExpressionError", "evaluate_field", "as_component_fields"]


class ExpressionError(ValueError):
    """Raised when an expression uses syntax outside the supported grammar."""


_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTANTS = {"pi": math.pi}
_ALIASES = {"x": "x1", "y": "x2"}
_COORDS = ("x1", "x2", "t")

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.true_divide,
}


class Expression:
    """A parsed closed-form expression of the coordinates ``x1``, ``x2``, ``t``.

    >>> f = Expression("x*(1-x)")
    >>> f(x1=np.array([0.0, 0.5, 1.0]))
    array([0.  , 0.25, 0.  ])
    """

    def __init__(self, text: str):
        if not isinstance(text, str) or not text.strip():
            raise ExpressionError("empty expression")
        self.text = text.strip()
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.text!r}: {exc.msg}") from None
        self._root = tree.body
        self.variables = frozenset(self._validate(self._root))

    def _validate(self, node: ast.expr) -> set[str]:
        """Walk the tree, rejecting anything outside the grammar; collect coordinates."""
        if isinstance(node, ast.Constant):
            if isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
                return set()
            raise ExpressionError(f"non-numeric constant {node.value!r}")
        if isinstance(node, ast.Name):
            name = _ALIASES.get(node.id, node.id)
            if name in _CONSTANTS:
                return set()
            if name in _COORDS:
                return {name}
            raise ExpressionError(f"unknown name {node.id!r}")
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator {type(node.op).__name__} not supported")
            return self._validate(node.left) | self._validate(node.right)
        if isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ExpressionError(f"operator {type(node.op).__name__} not supported")
            return self._validate(node.operand)
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ExpressionError("only sin, cos and exp may be called")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id} takes exactly one argument")
            return self._validate(node.args[0])
        raise ExpressionError(f"syntax {type(node).__name__} not supported")

    def _eval(self, node: ast.expr, env: dict[str, np.ndarray | float]):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            name = _ALIASES.get(node.id, node.id)
            if name in _CONSTANTS:
                return _CONSTANTS[name]
            return env[name]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            value = self._eval(node.operand, env)
            return -value if isinstance(node.op, ast.USub) else +value
        if isinstance(node, ast.Call):
            return _FUNCTIONS[node.func.id](self._eval(node.args[0], env))
        raise AssertionError("validated tree contains no other node kinds")

    def __call__(self, **coords) -> np.ndarray:
        env = {_ALIASES.get(k, k): np.asarray(v, dtype=float) for k, v in coords.items()}
        missing = self.variables - env.keys()
        if missing:
            raise ExpressionError(f"expression {self.text!r} needs coordinate(s) {sorted(missing)}")
        shape = np.broadcast_shapes(*(np.shape(v) for v in env.values())) if env else ()
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.broadcast_to(np.asarray(self._eval(self._root, env), dtype=float), shape)
            return np.array(out, dtype=float)

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"


def evaluate_field(field, points: np.ndarray, t=None) -> np.ndarray:
    """Evaluate a scalar field specification at spatial points.

    Parameters
    ----------
    field
        A number (constant field), a string or :class:`Expression`, or a
        callable taking one positional 1-D coordinate array per axis.
    points : ndarray, shape (m, d)
        Evaluation points, one row per point.
    t : float, optional
        Time coordinate forwarded to expressions that use ``t``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, dim = points.shape
    if isinstance(field, str):
        field = Expression(field)
    if isinstance(field, Expression):
        coords = {"x1": points[:, 0]}
        if dim > 1:
            coords["x2"] = points[:, 1]
        if t is not None:
            coords["t"] = t
        values = field(**coords)
    elif callable(field):
        values = np.asarray(field(*(points[:, j] for j in range(dim))), dtype=float)
    elif np.ndim(field) == 0:
        values = np.full(m, float(field))
    else:
        raise TypeError(f"cannot evaluate field specification of type {type(field).__name__}")
    values = np.broadcast_to(values, (m,)).astype(float)
    if not np.all(np.isfinite(values)):
        raise ValueError("field evaluation produced non-finite values")
    return values


def as_component_fields(field, dim: int) -> tuple:
    """Normalize a vector field specification to one item per spatial axis.

    Accepts a single item (reused for every component when ``dim`` is 1),
    or a sequence of ``dim`` per-component items.  Array-valued tables pass
    through untouched; strings are parsed once into :class:`Expression`.
    """

    def prepare(item):
        return Expression(item) if isinstance(item, str) else item

    if isinstance(field, (list, tuple)):
        if len(field) != dim:
            raise ValueError(f"vector field needs {dim} components, got {len(field)}")
        return tuple(prepare(item) for item in field)
    if dim != 1:
        raise ValueError(f"vector field needs {dim} components, got a single item")
    return (prepare(field),)
