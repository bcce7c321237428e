"""User-defined systems from a small arithmetic expression grammar.

Expressions use numbers, names, ``+ - * /``, ``**`` or ``pow(a, b)``,
unary minus and ``exp(a)``. Nothing else is accepted: the expression is
parsed with :mod:`ast`, checked node by node against this whitelist, then
compiled twice, once for NumPy evaluation and once as a numba kernel for
fast simulation.
"""
from __future__ import annotations

import ast
import keyword
import math

import numpy as np
from numba import njit

from .errors import ConfigError
from .models import SdeSystem, SimKernels

__all__ = ["parse_expression", "expression_system"]

_FUNCS = {"exp": 1, "pow": 2}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_RESERVED = {"math", "np"}


def _validate(node, names):
    if isinstance(node, ast.Expression):
        return _validate(node.body, names)
    if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _validate(node.left, names)
        _validate(node.right, names)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _validate(node.operand, names)
        return
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return
    if isinstance(node, ast.Name):
        if node.id not in names:
            raise ConfigError(f"unknown name {node.id!r} in expression")
        return
    if isinstance(node, ast.Call):
        fname = getattr(node.func, "id", None)
        if isinstance(node.func, ast.Name) and fname in _FUNCS and not node.keywords:
            if len(node.args) != _FUNCS[fname]:
                raise ConfigError(f"{fname}() takes {_FUNCS[fname]} argument(s)")
            for arg in node.args:
                _validate(arg, names)
            return
        raise ConfigError(f"function {fname!r} is not allowed in expressions")
    raise ConfigError(f"unsupported syntax {type(node).__name__} in expression")


def parse_expression(text, names):
    """Validate ``text`` against the grammar and return its normalized source."""
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    _validate(tree, set(names))
    return ast.unparse(tree.body)


def _bindings(state, parameter, params, indent="    "):
    lines = [f"{indent}{name} = _x[{i}]" for i, name in enumerate(state)]
    lines.append(f"{indent}{parameter} = _mu")
    lines += [f"{indent}{k} = {float(v)!r}" for k, v in params.items()]
    return lines


def _compile(source, namespace, name):
    scope = dict(namespace)
    exec(compile(source, f"<metacont:{name}>", "exec"), scope)
    return scope[name]


def expression_system(name, state, parameter, drift, params=None, diffusion=None,
                      noise_cov=None, potential=None, nonnegative=False):
    """Build an :class:`SdeSystem` from expression strings.

    Parameters
    ----------
    name : str
        Model identifier.
    state : list of str
        State variable names, in order.
    parameter : str
        Name of the continuation parameter.
    drift : list of str
        One expression per state component.
    params : dict, optional
        Fixed numeric constants available by name.
    diffusion : list of list of str, optional
        Expressions of the ``n x k`` factor ``F``. Defaults to the identity
        when neither this nor ``noise_cov`` is given.
    noise_cov : list of list of str, optional
        Expressions of ``F F^T`` (state-dependent noise).
    potential : str, optional
        Expression of ``U``; marks the system as a gradient system.
    """
    params = dict(params or {})
    state = list(state)
    names = set(state) | {parameter} | set(params)
    bad = [v for v in names if not v.isidentifier() or keyword.iskeyword(v)]
    if bad:
        raise ConfigError(f"invalid identifiers: {sorted(bad)}")
    clash = {v for v in names if v.startswith("_")} | (names & (_RESERVED | set(_FUNCS)))
    if clash:
        raise ConfigError(f"reserved identifiers used as names: {sorted(clash)}")
    if len(names) != len(state) + 1 + len(params):
        raise ConfigError("state, parameter and constant names must be distinct")
    n = len(state)
    if len(drift) != n:
        raise ConfigError(f"drift needs {n} expressions, got {len(drift)}")
    drift_src = [parse_expression(e, names) for e in drift]

    binds = _bindings(state, parameter, params)
    np_ns = {"np": np, "exp": np.exp, "pow": np.power}
    nb_ns = {"math": math, "exp": math.exp, "pow": math.pow}

    src = "def drift(_x, _mu):\n" + "\n".join(binds) + "\n"
    src += "    return np.array([" + ", ".join(f"({e}) + 0.0 * _x[0]" for e in drift_src) + "], dtype=float)\n"
    drift_fn = _compile(src, np_ns, "drift")

    nb_src = "def drift_nb(_x, _mu, _p, _out):\n" + "\n".join(binds) + "\n"
    nb_src += "".join(f"    _out[{i}] = {e}\n" for i, e in enumerate(drift_src))
    drift_nb = njit(nogil=True)(_compile(nb_src, nb_ns, "drift_nb"))

    def matrix_fns(rows, label):
        rows = [[parse_expression(e, names) for e in row] for row in rows]
        if len(rows) != n or len({len(r) for r in rows}) != 1:
            raise ConfigError(f"{label} must have {n} rows of equal length")
        k = len(rows[0])
        body = ", ".join("[" + ", ".join(f"({e}) + 0.0" for e in row) + "]" for row in rows)
        py = f"def {label}(_x, _mu):\n" + "\n".join(binds) + f"\n    return np.array([{body}], dtype=float)\n"
        return _compile(py, np_ns, label), rows, k

    diffusion_fn = cov_fn = None
    noise_nb = None
    additive = True
    if diffusion is not None and noise_cov is not None:
        raise ConfigError("give diffusion or noise_cov, not both")
    if noise_cov is not None:
        cov_fn, rows, k = matrix_fns(noise_cov, "noise_cov")
        if k != n:
            raise ConfigError("noise_cov must be square")
        additive = False
        dim_noise = n
    elif diffusion is not None:
        diffusion_fn, rows, dim_noise = matrix_fns(diffusion, "diffusion")
        flat = [e for row in rows for e in row]
        additive = not any(set(_names_in(e)) & (set(state) | {parameter}) for e in flat)
        if not additive:
            nsrc = "def noise_nb(_x, _mu, _p, _out):\n" + "\n".join(binds) + "\n"
            nsrc += "".join(
                f"    _out[{i}, {j}] = {e}\n" for i, row in enumerate(rows) for j, e in enumerate(row)
            )
            noise_nb = njit(nogil=True)(_compile(nsrc, nb_ns, "noise_nb"))
    else:
        eye = np.eye(n)
        diffusion_fn = lambda x, mu: eye  # noqa: E731
        dim_noise = n

    potential_fn = None
    if potential is not None:
        usrc = parse_expression(potential, names)
        py = "def potential(_x, _mu):\n" + "\n".join(binds) + f"\n    return float({usrc})\n"
        potential_fn = _compile(py, np_ns, "potential")

    kernels = None
    if cov_fn is None:
        kernels = SimKernels(drift=drift_nb, params=np.zeros(1), noise=noise_nb,
                             reflect=bool(nonnegative))
    return SdeSystem(
        name=name,
        dim_state=n,
        dim_noise=dim_noise,
        drift=drift_fn,
        diffusion=diffusion_fn,
        noise_cov=cov_fn,
        potential=potential_fn,
        parameter_name=parameter,
        state_names=tuple(state),
        additive=additive,
        nonnegative=bool(nonnegative),
        params=params,
        kernels=kernels,
    )


def _names_in(source):
    return [node.id for node in ast.walk(ast.parse(source, mode="eval")) if isinstance(node, ast.Name)]
