"""Experiment configuration: schema validation, digest, object construction.

A config is a JSON document.  Validation normalizes it into a canonical dict
(defaults filled in, unknown keys rejected) before anything numerical runs;
the canonical form is what the content digest hashes, so two configs that
mean the same thing stamp the same digest on their reports.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .branching import BranchingLaw, binary_split, custom_law, pure_death, scaling_scheme
from .errors import ConfigInvalid
from .functions import FunctionSpec
from .measures import Measure
from .model import DEFAULT_DOMAIN, Model, build_model
from .solver import SolverGrid

EXPERIMENTS = ("duality", "moment", "qv", "ergodic", "linear")
_LAW_SCHEMES = ("scaling", "binary-split", "pure-death", "table")
_FUNCTION_KINDS = ("zero", "constant", "gaussian-bump", "cosine-bump", "tabulated-grid")
_MEASURE_TYPES = ("zero", "point", "uniform", "atomic", "function")
_DIGEST_CHARS = 16


def _fail(where: str, message: str) -> None:
    raise ConfigInvalid(f"{where}: {message}")


def _require(block: dict, key: str, where: str):
    if key not in block:
        _fail(where, f"missing required key '{key}'")
    return block[key]


def _only_keys(block: dict, allowed: tuple, where: str) -> None:
    if not isinstance(block, dict):
        _fail(where, f"expected an object, got {type(block).__name__}")
    for key in block:
        if key not in allowed:
            _fail(where, f"unknown key '{key}' (allowed: {', '.join(sorted(allowed))})")


def _number(value, where: str, *, minimum=None, positive=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(where, f"expected a number, got {value!r}")
    value = float(value)
    if positive and value <= 0:
        _fail(where, f"must be > 0, got {value}")
    if minimum is not None and value < minimum:
        _fail(where, f"must be >= {minimum}, got {value}")
    return value


def _integer(value, where: str, *, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(where, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _fail(where, f"must be >= {minimum}, got {value}")
    return int(value)


def _number_list(value, where: str, *, min_len=1) -> list[float]:
    if not isinstance(value, list) or len(value) < min_len:
        _fail(where, f"expected a list of at least {min_len} numbers")
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _validate_function(block, where: str) -> dict:
    _only_keys(block, ("kind", "params"), where)
    kind = _require(block, "kind", where)
    if kind not in _FUNCTION_KINDS:
        _fail(where, f"unknown function kind '{kind}'")
    params = block.get("params", {})
    if not isinstance(params, dict):
        _fail(where, "params must be an object")
    try:
        FunctionSpec.from_dict({"kind": kind, "params": params})
    except (ValueError, TypeError, KeyError) as exc:
        _fail(where, f"bad parameters for '{kind}': {exc}")
    return {"kind": kind, "params": dict(params)}


def _validate_measure(block, where: str) -> dict:
    if not isinstance(block, dict):
        _fail(where, "expected an object")
    kind = _require(block, "type", where)
    if kind not in _MEASURE_TYPES:
        _fail(where, f"unknown measure type '{kind}'")
    out: dict = {"type": kind}
    if kind == "zero":
        _only_keys(block, ("type",), where)
    elif kind == "point":
        _only_keys(block, ("type", "x", "mass"), where)
        out["x"] = _number(_require(block, "x", where), f"{where}.x")
        out["mass"] = _number(block.get("mass", 1.0), f"{where}.mass", minimum=0.0)
    elif kind == "uniform":
        _only_keys(block, ("type", "lo", "hi", "mass"), where)
        out["lo"] = _number(_require(block, "lo", where), f"{where}.lo")
        out["hi"] = _number(_require(block, "hi", where), f"{where}.hi")
        if out["hi"] <= out["lo"]:
            _fail(where, "need hi > lo")
        out["mass"] = _number(block.get("mass", 1.0), f"{where}.mass", minimum=0.0)
    elif kind == "atomic":
        _only_keys(block, ("type", "positions", "weights"), where)
        pos = _number_list(_require(block, "positions", where), f"{where}.positions")
        wts = _number_list(_require(block, "weights", where), f"{where}.weights")
        if len(pos) != len(wts):
            _fail(where, "positions and weights must have equal length")
        if any(w < 0 for w in wts):
            _fail(where, "weights must be nonnegative")
        out["positions"] = pos
        out["weights"] = wts
    else:
        _only_keys(block, ("type", "spec", "lo", "hi", "mass"), where)
        out["spec"] = _validate_function(_require(block, "spec", where), f"{where}.spec")
        out["lo"] = _number(_require(block, "lo", where), f"{where}.lo")
        out["hi"] = _number(_require(block, "hi", where), f"{where}.hi")
        if out["hi"] <= out["lo"]:
            _fail(where, "need hi > lo")
        if "mass" in block:
            out["mass"] = _number(block["mass"], f"{where}.mass", minimum=0.0)
    return out


def _validate_law(block, where: str) -> dict:
    if not isinstance(block, dict):
        _fail(where, "expected an object")
    scheme = _require(block, "scheme", where)
    if scheme not in _LAW_SCHEMES:
        _fail(where, f"unknown scheme '{scheme}' (allowed: {', '.join(_LAW_SCHEMES)})")
    out: dict = {"scheme": scheme}
    if scheme == "scaling":
        _only_keys(block, ("scheme", "k"), where)
        out["k"] = _integer(_require(block, "k", where), f"{where}.k", minimum=2)
    elif scheme in ("binary-split", "pure-death"):
        _only_keys(block, ("scheme", "theta", "gamma"), where)
        out["theta"] = _number(_require(block, "theta", where), f"{where}.theta", positive=True)
        out["gamma"] = _number(_require(block, "gamma", where), f"{where}.gamma", minimum=0.0)
    else:
        _only_keys(block, ("scheme", "theta", "gamma", "table"), where)
        out["theta"] = _number(_require(block, "theta", where), f"{where}.theta", positive=True)
        out["gamma"] = _number(_require(block, "gamma", where), f"{where}.gamma", minimum=0.0)
        table = _require(block, "table", where)
        if not isinstance(table, dict) or not table:
            _fail(where, "table must be a non-empty object of count: probability")
        clean = {}
        for key, prob in table.items():
            try:
                count = int(key)
            except (TypeError, ValueError):
                _fail(f"{where}.table", f"litter size {key!r} is not an integer")
            if count < 0:
                _fail(f"{where}.table", f"litter size {count} is negative")
            clean[str(count)] = _number(prob, f"{where}.table[{key}]", minimum=0.0)
        out["table"] = clean
    return out


def _validate_seeds(block, where: str) -> dict:
    _only_keys(block, ("master", "noise", "branch", "solver"), where)
    out = {"master": _integer(block.get("master", 0), f"{where}.master", minimum=0)}
    for name, default in (("noise", 3), ("branch", 100), ("solver", None)):
        value = block.get(name, default)
        if value is None:
            out[name] = None
        elif isinstance(value, list):
            out[name] = [_integer(v, f"{where}.{name}[{i}]", minimum=0)
                         for i, v in enumerate(value)]
            if not out[name]:
                _fail(where, f"{name} list must not be empty")
        else:
            out[name] = _integer(value, f"{where}.{name}", minimum=1)
    return out


_PARAM_KEYS = {
    "duality": ("t", "phis", "margin", "pooled", "variance_signature", "noise_file"),
    "moment": ("t_points", "replicates", "dt"),
    "qv": ("t", "replicates", "dt"),
    "ergodic": ("lambdas", "t_ladder", "eps"),
    "linear": ("t", "count_ladder", "v0", "reps_per_count", "noise_seed", "noise_file"),
}


def _validate_parameters(experiment: str, block, where: str) -> dict:
    if not isinstance(block, dict):
        _fail(where, "expected an object")
    _only_keys(block, _PARAM_KEYS[experiment], where)
    out: dict = {}
    if experiment == "duality":
        out["t"] = _number(_require(block, "t", where), f"{where}.t", positive=True)
        phis = _require(block, "phis", where)
        if not isinstance(phis, list) or not phis:
            _fail(where, "phis must be a non-empty list of function blocks")
        out["phis"] = [_validate_function(p, f"{where}.phis[{i}]")
                       for i, p in enumerate(phis)]
        out["margin"] = _number(block.get("margin", 0.02), f"{where}.margin", minimum=0.0)
        out["pooled"] = bool(block.get("pooled", True))
        out["variance_signature"] = bool(block.get("variance_signature", False))
        if "noise_file" in block:
            out["noise_file"] = str(block["noise_file"])
    elif experiment == "moment":
        out["t_points"] = _number_list(_require(block, "t_points", where), f"{where}.t_points")
        out["replicates"] = _integer(_require(block, "replicates", where),
                                     f"{where}.replicates", minimum=2)
        out["dt"] = _number(block.get("dt", 1e-3), f"{where}.dt", positive=True)
    elif experiment == "qv":
        out["t"] = _number(_require(block, "t", where), f"{where}.t", positive=True)
        out["replicates"] = _integer(_require(block, "replicates", where),
                                     f"{where}.replicates", minimum=2)
        out["dt"] = _number(block.get("dt", 2e-4), f"{where}.dt", positive=True)
    elif experiment == "ergodic":
        out["lambdas"] = _number_list(_require(block, "lambdas", where), f"{where}.lambdas")
        out["t_ladder"] = _number_list(_require(block, "t_ladder", where),
                                       f"{where}.t_ladder", min_len=2)
        if "eps" in block:
            out["eps"] = _number(block["eps"], f"{where}.eps", positive=True)
    else:
        out["t"] = _number(_require(block, "t", where), f"{where}.t", positive=True)
        ladder = _require(block, "count_ladder", where)
        if not isinstance(ladder, list) or not ladder:
            _fail(where, "count_ladder must be a non-empty list of particle counts")
        out["count_ladder"] = [_integer(n, f"{where}.count_ladder[{i}]", minimum=1)
                               for i, n in enumerate(ladder)]
        out["v0"] = _validate_measure(_require(block, "v0", where), f"{where}.v0")
        out["reps_per_count"] = _integer(block.get("reps_per_count", 3),
                                         f"{where}.reps_per_count", minimum=1)
        if "noise_seed" in block:
            out["noise_seed"] = _integer(block["noise_seed"], f"{where}.noise_seed", minimum=0)
        if "noise_file" in block:
            out["noise_file"] = str(block["noise_file"])
    return out


def validate_config(raw) -> dict:
    """Normalize a raw config dict, rejecting anything off-schema."""
    if not isinstance(raw, dict):
        _fail("config", "top level must be an object")
    _only_keys(raw, ("experiment", "model", "measures", "law", "grids", "seeds",
                     "parameters", "output_dir", "artifacts"), "config")
    experiment = _require(raw, "experiment", "config")
    if experiment not in EXPERIMENTS:
        _fail("config.experiment", f"unknown experiment '{experiment}' "
              f"(allowed: {', '.join(EXPERIMENTS)})")

    model_block = _require(raw, "model", "config")
    _only_keys(model_block, ("c", "h", "sigma", "b", "domain"), "config.model")
    model_out = {
        name: _validate_function(_require(model_block, name, "config.model"),
                                 f"config.model.{name}")
        for name in ("c", "h", "sigma", "b")
    }
    model_out["domain"] = _number(model_block.get("domain", DEFAULT_DOMAIN),
                                  "config.model.domain", positive=True)

    measures_block = raw.get("measures", {})
    _only_keys(measures_block, ("mu", "m"), "config.measures")
    measures_out = {
        "mu": _validate_measure(measures_block.get("mu", {"type": "zero"}),
                                "config.measures.mu"),
        "m": _validate_measure(measures_block.get("m", {"type": "zero"}),
                               "config.measures.m"),
    }

    law_out = _validate_law(raw.get("law", {"scheme": "scaling", "k": 100}), "config.law")

    grids_block = _require(raw, "grids", "config")
    _only_keys(grids_block, ("solver", "noise"), "config.grids")
    solver_block = _require(grids_block, "solver", "config.grids")
    _only_keys(solver_block, ("half_width", "dx", "dt", "scheme", "cfl_safety"),
               "config.grids.solver")
    solver_out = {
        "half_width": _number(solver_block.get("half_width", model_out["domain"]),
                              "config.grids.solver.half_width", positive=True),
        "dx": _number(_require(solver_block, "dx", "config.grids.solver"),
                      "config.grids.solver.dx", positive=True),
        "dt": _number(_require(solver_block, "dt", "config.grids.solver"),
                      "config.grids.solver.dt", positive=True),
        "scheme": solver_block.get("scheme", "semi-implicit-diffusion"),
        "cfl_safety": _number(solver_block.get("cfl_safety", 0.5),
                              "config.grids.solver.cfl_safety", positive=True),
    }
    if solver_out["scheme"] not in ("semi-implicit-diffusion", "explicit"):
        _fail("config.grids.solver.scheme", f"unknown scheme '{solver_out['scheme']}'")
    grids_out: dict = {"solver": solver_out}
    if "noise" in grids_block:
        noise_block = grids_block["noise"]
        _only_keys(noise_block, ("dt", "dy"), "config.grids.noise")
        grids_out["noise"] = {
            "dt": _number(noise_block.get("dt", solver_out["dt"]),
                          "config.grids.noise.dt", positive=True),
            "dy": _number(noise_block.get("dy", solver_out["dx"]),
                          "config.grids.noise.dy", positive=True),
        }

    seeds_out = _validate_seeds(raw.get("seeds", {}), "config.seeds")
    params_out = _validate_parameters(experiment, _require(raw, "parameters", "config"),
                                      "config.parameters")

    artifacts_block = raw.get("artifacts", {})
    _only_keys(artifacts_block, ("export_noise", "field_csv"), "config.artifacts")
    artifacts_out = {
        "export_noise": bool(artifacts_block.get("export_noise", False)),
        "field_csv": bool(artifacts_block.get("field_csv", False)),
    }

    out = {
        "experiment": experiment,
        "model": model_out,
        "measures": measures_out,
        "law": law_out,
        "grids": grids_out,
        "seeds": seeds_out,
        "parameters": params_out,
        "artifacts": artifacts_out,
        "output_dir": str(raw.get("output_dir", "out")),
    }
    return out


def load_config(path) -> dict:
    """Read and validate a JSON config file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {p}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{p} is not valid JSON: {exc}") from exc
    return validate_config(raw)


def config_digest(cfg: dict) -> str:
    """Content hash of the canonical config, stamped into every report."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:_DIGEST_CHARS]


# -- construction --------------------------------------------------------------

def build_function_from(block: dict) -> FunctionSpec:
    return FunctionSpec.from_dict(block)


def build_measure_from(block: dict) -> Measure:
    kind = block["type"]
    if kind == "zero":
        return Measure.zero()
    if kind == "point":
        return Measure.point(block["x"], block["mass"])
    if kind == "uniform":
        return Measure.uniform(block["lo"], block["hi"], block["mass"])
    if kind == "atomic":
        return Measure.atomic(block["positions"], block["weights"])
    spec = build_function_from(block["spec"])
    return Measure.from_function(spec, block["lo"], block["hi"],
                                 mass=block.get("mass"))


def build_model_from(cfg: dict) -> Model:
    mb = cfg["model"]
    return build_model(c=build_function_from(mb["c"]), h=build_function_from(mb["h"]),
                       sigma=build_function_from(mb["sigma"]),
                       b=build_function_from(mb["b"]), domain=mb["domain"])


def build_law_from(cfg: dict) -> BranchingLaw:
    lb = cfg["law"]
    scheme = lb["scheme"]
    if scheme == "scaling":
        mb = cfg["model"]
        return scaling_scheme(lb["k"], build_function_from(mb["sigma"]),
                              build_function_from(mb["b"]), domain=mb["domain"])
    if scheme == "binary-split":
        return binary_split(lb["theta"], lb["gamma"])
    if scheme == "pure-death":
        return pure_death(lb["theta"], lb["gamma"])
    table = {int(k): v for k, v in lb["table"].items()}
    return custom_law(lb["theta"], lb["gamma"], table)


def build_solver_grid_from(cfg: dict) -> SolverGrid:
    sb = cfg["grids"]["solver"]
    return SolverGrid(half_width=sb["half_width"], dx=sb["dx"], dt=sb["dt"],
                      scheme=sb["scheme"], cfl_safety=sb["cfl_safety"])


def expand_seeds(cfg: dict) -> dict:
    """Resolve seed counts into explicit lists derived from the master seed."""
    from .harness import derived_seed

    seeds = cfg["seeds"]
    master = seeds["master"]
    out = {"master": master}
    for name, tag in (("noise", 1), ("branch", 2), ("solver", 3)):
        value = seeds[name]
        if value is None:
            out[name] = None
        elif isinstance(value, list):
            out[name] = list(value)
        else:
            out[name] = [derived_seed(master, tag, i) for i in range(value)]
    return out
