"""Arithmetic expression strings for model and test functions.

Configs declare D(x), ln rho_eq(x) and test functions as expressions
over ``x`` with the functions sin, cos, exp, ln (alias log), sqrt, abs
and piecewise, plus the constants pi and e.  ``piecewise`` takes
alternating (condition, value) pairs and a final default:

    piecewise(x >= 0, 2, 1)          # the discontinuous-D benchmark

Expressions are parsed with the ast module and checked against a node
whitelist before compilation, so config files cannot execute arbitrary
code.  Compiled functions are NumPy-vectorized.
"""

import ast
import math

import numpy as np

from .errors import ExpressionError

__all__ = ["compile_expression", "FUNCTIONS"]


def _piecewise(*args):
    if len(args) < 3 or len(args) % 2 == 0:
        raise ExpressionError(
            "piecewise needs (cond, value) pairs and a default, e.g. "
            "piecewise(x >= 0, 2, 1)")
    out = args[-1]
    for cond, val in zip(args[-3::-2], args[-2::-2]):
        out = np.where(cond, val, out)
    return out


FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "piecewise": _piecewise,
}

_CONSTANTS = {"pi": math.pi, "e": math.e}

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)
_ALLOWED_CMP = (ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq)


def _validate(node, var):
    if isinstance(node, ast.Expression):
        _validate(node.body, var)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        _validate(node.left, var)
        _validate(node.right, var)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
        _validate(node.operand, var)
    elif isinstance(node, ast.Compare):
        if len(node.ops) != 1 or not isinstance(node.ops[0], _ALLOWED_CMP):
            raise ExpressionError("only single comparisons are allowed")
        _validate(node.left, var)
        _validate(node.comparators[0], var)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError(
                f"unknown function call; allowed: {sorted(FUNCTIONS)}")
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        if node.func.id == "piecewise":
            if len(node.args) < 3 or len(node.args) % 2 == 0:
                raise ExpressionError(
                    "piecewise needs (cond, value) pairs and a default, "
                    "e.g. piecewise(x >= 0, 2, 1)")
        elif len(node.args) != 1:
            raise ExpressionError(
                f"{node.func.id} takes exactly one argument")
        for arg in node.args:
            _validate(arg, var)
    elif isinstance(node, ast.Name):
        if node.id != var and node.id not in _CONSTANTS:
            raise ExpressionError(
                f"unknown name {node.id!r}; allowed: {var!r}, pi, e")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError(f"literal {node.value!r} is not a number")
    else:
        raise ExpressionError(
            f"construct {type(node).__name__} is not allowed in expressions")


def compile_expression(src: str, var: str = "x"):
    """Compile an expression string into a vectorized function of ``var``."""
    if not isinstance(src, str) or not src.strip():
        raise ExpressionError(f"expected an expression string, got {src!r}")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {src!r}: {exc.msg}") from exc
    _validate(tree, var)
    code = compile(tree, f"<expression {src!r}>", "eval")
    namespace = {**FUNCTIONS, **_CONSTANTS, "__builtins__": {}}

    def func(x):
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            return eval(code, namespace, {var: x})

    func.source = src
    return func
