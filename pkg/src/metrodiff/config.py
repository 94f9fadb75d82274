"""Declarative experiment configuration (JSON).

A config names a builtin model or defines one inline with expression
strings, and fixes everything a run needs: scheme(s), start point,
horizon, step lengths, trajectory count, test functions, the error
reference, and the base seed.  Identical config plus seed reproduces
every output byte.

Example (weak-convergence study against an exact reference):

    {
      "model": "arcsine",
      "scheme": "mh",
      "x0": 0.5, "T": 1.0,
      "h": [0.125, 0.0625, 0.03125],
      "M": 100000,
      "f": ["x", "x**2"],
      "reference": {"type": "exact"},
      "base_seed": 20250801
    }

Inline models give expressions and an open support interval:

    "model": {"label": "well", "D": "1 + x**2/2",
              "ln_rho_eq": "-x**2/2", "support": [null, null]}
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ExpressionError, NonIntegerStepCount
from .expressions import compile_expression
from .integrator import steps_for_horizon
from .models import DiffusionModel, get_model

__all__ = ["ExperimentConfig", "parse_config", "load_config"]

_REFERENCE_TYPES = ("exact", "self", "fpe")


@dataclass
class ExperimentConfig:
    model: DiffusionModel
    schemes: list
    x0: float
    T: float
    h_list: list
    n_traj: int
    f_labels: list
    f_funcs: list
    reference: dict
    base_seed: int
    min_error_snr: float
    equilibrium: dict
    fpe: dict
    raw: dict = field(repr=False)

    def echo(self):
        """The config as a JSON-ready dict (re-parses to an equivalent config)."""
        return json.loads(json.dumps(self.raw))


def _fail(msg):
    raise ConfigError(msg)


def _inline_model(decl) -> DiffusionModel:
    for key in ("label", "D", "ln_rho_eq"):
        if key not in decl:
            _fail(f"inline model needs {key!r}")
    lo, hi = decl.get("support", [None, None])
    lo = -math.inf if lo is None else float(lo)
    hi = math.inf if hi is None else float(hi)
    if not lo < hi:
        _fail(f"empty support interval ({lo}, {hi})")
    try:
        d_expr = compile_expression(decl["D"])
        lnr_expr = compile_expression(decl["ln_rho_eq"])
    except ExpressionError as exc:
        raise ConfigError(f"model {decl['label']!r}: {exc}") from exc

    def support(x):
        x = np.asarray(x, dtype=float)
        return (x > lo) & (x < hi)

    if math.isinf(lo) and math.isinf(hi):
        anchor = 0.0
    elif math.isinf(hi):
        anchor = lo + 1.0
    elif math.isinf(lo):
        anchor = hi - 1.0
    else:
        anchor = 0.5 * (lo + hi)

    def ln_rho(x):
        x = np.asarray(x, dtype=float)
        inside = (x > lo) & (x < hi)
        # anchor keeps the expression away from out-of-domain arguments
        val = np.asarray(lnr_expr(np.where(inside, x, anchor)), dtype=float)
        return np.where(inside, val, -np.inf)

    return DiffusionModel(
        label=str(decl["label"]),
        dim=1,
        D=lambda x: np.asarray(d_expr(np.asarray(x, dtype=float)), dtype=float),
        ln_rho_eq=ln_rho,
        support=support,
        description=f"D={decl['D']}, ln rho_eq={decl['ln_rho_eq']} on ({lo}, {hi})",
    )


def _resolve_model(decl) -> DiffusionModel:
    if isinstance(decl, str):
        try:
            return get_model(decl)
        except KeyError as exc:
            _fail(str(exc))
    if isinstance(decl, dict):
        return _inline_model(decl)
    _fail(f"model must be a label or an inline definition, got {decl!r}")


def _resolve_schemes(decl):
    s = str(decl).lower()
    if s in ("mh", "em"):
        return [s]
    if s == "both":
        return ["mh", "em"]
    _fail(f"scheme must be MH, EM or both, got {decl!r}")


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a config dict; raises ConfigError on any problem."""
    if not isinstance(data, dict):
        _fail("config root must be a JSON object")
    model = _resolve_model(data.get("model"))
    schemes = _resolve_schemes(data.get("scheme", "mh"))
    try:
        x0 = float(data["x0"])
        T = float(data["T"])
        h_list = [float(h) for h in data["h"]]
        n_traj = int(data["M"])
        base_seed = int(data.get("base_seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        _fail(f"missing or malformed field: {exc!r}")
    if not h_list:
        _fail("h list must be nonempty")
    for h in h_list:
        try:
            steps_for_horizon(T, h)
        except NonIntegerStepCount as exc:
            raise ConfigError(str(exc)) from exc
    if n_traj < 2:
        _fail(f"M must be at least 2, got {n_traj}")

    f_labels = [str(s) for s in data.get("f", ["x"])]
    try:
        f_funcs = [compile_expression(s) for s in f_labels]
    except ExpressionError as exc:
        raise ConfigError(f"test function: {exc}") from exc

    reference = dict(data.get("reference", {"type": "self"}))
    rtype = reference.get("type")
    if rtype not in _REFERENCE_TYPES:
        _fail(f"reference type must be one of {_REFERENCE_TYPES}, got {rtype!r}")
    if rtype == "exact":
        values = reference.get("values", {})
        for label in f_labels:
            if label not in values and label not in model.exact_moments:
                _fail(f"no exact reference for f={label!r}: give "
                      f"reference.values[{label!r}] or use a model with a "
                      "closed form")
    if rtype == "fpe":
        for key in ("n_cells", "dt"):
            if key not in reference:
                _fail(f"fpe reference needs {key!r}")
    if rtype == "self":
        for h in h_list:
            try:
                steps_for_horizon(T, h / 2.0)
            except NonIntegerStepCount as exc:
                raise ConfigError(
                    f"self reference needs h/2 grids too: {exc}") from exc

    # model must be evaluable at the start point
    if not bool(np.all(model.support(x0))):
        _fail(f"x0={x0} is outside the support of model {model.label!r}")
    d0 = float(model.D(x0))
    if not (math.isfinite(d0) and d0 > 0.0):
        _fail(f"D(x0)={d0} must be finite and positive")
    if not math.isfinite(float(model.ln_rho_eq(x0))):
        _fail(f"ln_rho_eq(x0) must be finite at x0={x0}")

    equilibrium = dict(data.get("equilibrium", {}))
    if equilibrium:
        for key in ("T", "h", "range"):
            if key not in equilibrium:
                _fail(f"equilibrium section needs {key!r}")
        equilibrium.setdefault("bins", 20)

    fpe = dict(data.get("fpe", {}))
    if fpe:
        for key in ("n_cells", "dt", "T"):
            if key not in fpe:
                _fail(f"fpe section needs {key!r}")

    return ExperimentConfig(
        model=model,
        schemes=schemes,
        x0=x0,
        T=T,
        h_list=h_list,
        n_traj=n_traj,
        f_labels=f_labels,
        f_funcs=f_funcs,
        reference=reference,
        base_seed=base_seed,
        min_error_snr=float(data.get("min_error_snr", 1.0)),
        equilibrium=equilibrium,
        fpe=fpe,
        raw=data,
    )


def load_config(path) -> ExperimentConfig:
    """Parse a config from a JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)
