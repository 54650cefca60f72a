"""Experiment configuration: schema validation, hashing, defaults.

Configs are JSON documents with a fixed nested schema; unknown keys are
rejected so typos fail loudly with exit code 2.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .hamiltonians import ModelParams
from .interactions import bump_model, hard_core_model, zero_model

_MODEL_BUILDERS = {
    "bump": lambda p: bump_model(
        height=p.get("height", 1.0), radius=p.get("radius", 0.5),
        r=p.get("r"), d=p["_d"],
    ),
    "hard_core": lambda p: hard_core_model(
        diameter=p.get("diameter", 0.2), B=p.get("B", 1.0), r=p.get("r"),
    ),
    "zero": lambda p: zero_model(),
}

_SCHEMA = {
    "model": {
        "potential": (str, True),
        "height": (float, False),
        "radius": (float, False),
        "diameter": (float, False),
        "B": (float, False),
        "r": (float, False),
    },
    "params": {
        "beta": (float, True),
        "mu": (float, True),
        "L": (float, True),
        "d": (int, True),
        "steps": (int, False),
    },
    "sampler": {
        "kind": (str, False),
        "j_max": (int, False),
        "n_steps": (int, False),
        "burn_in": (int, False),
        "thin": (int, False),
        "n_total_max": (int, False),
        "n_samples": (int, False),
        "split_merge": (bool, False),
    },
    "oracle": {
        "n_max": (int, False),
        "position_nodes": (int, False),
        "bridge_samples": (int, False),
        "budget": (float, False),
    },
    "dlr": {
        "box_lo": (list, False),
        "box_hi": (list, False),
        "mode": (str, False),
        "lower_bound": (float, False),
        "mcmc_steps": (int, False),
    },
    "statistics": (list, False),
    "seed": (int, False),
    "kappa": (float, False),
    "output": {
        "plots": (bool, False),
    },
}

_RANGES = {
    ("params", "beta"): (1e-6, 1e3),
    ("params", "mu"): (-1e3, 1e3),
    ("params", "L"): (1e-3, 1e4),
    ("params", "d"): (1, 3),
    ("params", "steps"): (2, 4096),
    ("sampler", "j_max"): (1, 512),
    ("sampler", "thin"): (1, 10**6),
    ("oracle", "n_max"): (0, 6),
}

DEFAULTS = {
    "params": {"steps": 64},
    "sampler": {"kind": "mh", "burn_in": 10_000, "thin": 10, "n_samples": 1000,
                "split_merge": True},
    "oracle": {"n_max": 3, "position_nodes": 12, "bridge_samples": 50_000,
               "budget": 5e7},
    "dlr": {"mode": "rejection", "mcmc_steps": 400},
    "statistics": ["n_bridges", "f1", "cycle_hist"],
    "seed": 0,
    "kappa": 0.5,
    "output": {"plots": True},
}


def _check_section(name, section_schema, values):
    if not isinstance(values, dict):
        raise ConfigurationError(f"section {name!r} must be a mapping")
    for key in values:
        if key not in section_schema:
            raise ConfigurationError(f"unknown key {name}.{key}")
    out = {}
    for key, (typ, required) in section_schema.items():
        if key in values:
            val = values[key]
            if typ is float and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)
            if not isinstance(val, typ) or isinstance(val, bool) and typ is not bool:
                raise ConfigurationError(
                    f"{name}.{key} must be {typ.__name__}, got {type(val).__name__}"
                )
            lohi = _RANGES.get((name, key))
            if lohi and not (lohi[0] <= val <= lohi[1]):
                raise ConfigurationError(
                    f"{name}.{key}={val} outside documented range {lohi}"
                )
            out[key] = val
        elif required:
            raise ConfigurationError(f"missing required key {name}.{key}")
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    model_name: str
    model: object
    params: ModelParams
    sampler: dict
    oracle: dict
    dlr: dict
    statistics: list
    seed: int
    kappa: float
    output: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()
        ).hexdigest()[:16]


def validate_config(doc):
    """Validate a raw config mapping and build the runtime objects."""
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    for key in doc:
        if key not in _SCHEMA:
            raise ConfigurationError(f"unknown top-level key {key!r}")
    for key, spec in _SCHEMA.items():
        if isinstance(spec, dict):
            continue
        typ, required = spec
        if key in doc and not isinstance(doc[key], typ):
            raise ConfigurationError(f"{key} must be {typ.__name__}")

    model_sec = _check_section("model", _SCHEMA["model"], doc.get("model", {}))
    params_sec = _check_section("params", _SCHEMA["params"], doc.get("params", {}))
    sampler_sec = {**DEFAULTS["sampler"],
                   **_check_section("sampler", _SCHEMA["sampler"], doc.get("sampler", {}))}
    oracle_sec = {**DEFAULTS["oracle"],
                  **_check_section("oracle", _SCHEMA["oracle"], doc.get("oracle", {}))}
    dlr_sec = {**DEFAULTS["dlr"], **_check_section("dlr", _SCHEMA["dlr"], doc.get("dlr", {}))}
    output_sec = {**DEFAULTS["output"],
                  **_check_section("output", _SCHEMA["output"], doc.get("output", {}))}

    params_sec.setdefault("steps", DEFAULTS["params"]["steps"])
    params = ModelParams(**params_sec)
    if not all(math.isfinite(v) for v in (params.beta, params.mu, params.L)):
        raise ConfigurationError("physical parameters must be finite")

    potential = model_sec.get("potential")
    if potential not in _MODEL_BUILDERS:
        raise ConfigurationError(
            f"unknown potential {potential!r}; built-ins: {sorted(_MODEL_BUILDERS)}"
        )
    try:
        model = _MODEL_BUILDERS[potential]({**model_sec, "_d": params.d})
    except ConfigurationError:
        raise
    except Exception as exc:
        raise ConfigurationError(f"cannot build model {potential!r}: {exc}") from exc

    stats = doc.get("statistics", DEFAULTS["statistics"])
    if not isinstance(stats, list) or not all(isinstance(s, str) for s in stats):
        raise ConfigurationError("statistics must be a list of names")

    seed = doc.get("seed", DEFAULTS["seed"])
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigurationError("seed must be an integer")
    kappa = doc.get("kappa", DEFAULTS["kappa"])
    if not (isinstance(kappa, (int, float)) and 0.0 < float(kappa) < 1.0):
        raise ConfigurationError("kappa must lie in (0, 1)")

    if sampler_sec.get("j_max") is None:
        sampler_sec["j_max"] = 8
    return ExperimentConfig(
        raw=doc,
        model_name=potential,
        model=model,
        params=params,
        sampler=sampler_sec,
        oracle=oracle_sec,
        dlr=dlr_sec,
        statistics=stats,
        seed=int(seed),
        kappa=float(kappa),
        output=output_sec,
    )


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    return validate_config(doc)


def default_config_doc():
    """The shipped default experiment: tiny interacting 1-d system."""
    return {
        "model": {"potential": "bump", "height": 1.0, "radius": 0.5, "r": 0.25},
        "params": {"beta": 0.5, "mu": -1.0, "L": 1.0, "d": 1, "steps": 32},
        "sampler": {"kind": "mh", "j_max": 6, "burn_in": 5000, "thin": 20,
                    "n_samples": 500},
        "oracle": {"n_max": 3, "position_nodes": 12, "bridge_samples": 30000},
        "dlr": {"box_lo": [-0.25], "box_hi": [0.25], "mode": "rejection"},
        "statistics": ["n_bridges", "f1", "cycle_hist"],
        "seed": 0,
        "kappa": 0.5,
    }
