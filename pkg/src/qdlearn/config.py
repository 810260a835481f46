"""Experiment config files: schema, embedded presets, and construction of a RunConfig."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from qdlearn.graph import ConfigurationError, LinkFailureModel, build_ring, from_edges
from qdlearn.harness import RunConfig
from qdlearn.learning import WeightSchedule
from qdlearn.mdp import MdpModel, random_model
from qdlearn.rng import StreamFactory

_number_array = {"type": "array", "items": {"anyOf": [{"type": "number"}, {"$ref": "#/$defs/nested"}]}}

# scalar, or one value per agent
_bound = {"anyOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["num_agents", "model", "topology", "schedule"],
    "$defs": {"nested": _number_array},
    "properties": {
        "preset": {"type": "string"},
        "version": {"type": "integer", "minimum": 1},
        "num_agents": {"type": "integer", "minimum": 1},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["num_states", "num_actions", "discount"],
            "properties": {
                "num_states": {"type": "integer", "minimum": 1},
                "num_actions": {"type": "integer", "minimum": 1},
                "discount": {"type": "number"},
                "cost_noise_std": {"anyOf": [{"type": "number", "minimum": 0}, {"$ref": "#/$defs/nested"}]},
                "kernel": {"$ref": "#/$defs/nested"},
                "cost_means": {"$ref": "#/$defs/nested"},
                "generator": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "mean_low": _bound,
                        "mean_high": _bound,
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "topology": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "neighbors_each_side"],
                    "properties": {
                        "type": {"const": "ring"},
                        "neighbors_each_side": {"type": "integer", "minimum": 1},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "edges"],
                    "properties": {
                        "type": {"const": "edges"},
                        "edges": {
                            "type": "array",
                            "items": {
                                "type": "array",
                                "items": {"type": "integer", "minimum": 0},
                                "minItems": 2,
                                "maxItems": 2,
                            },
                        },
                    },
                },
            ]
        },
        "failure": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"erasure_probability": {"type": "number"}},
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "required": ["a", "b"],
            "properties": {
                "a": {"type": "number"},
                "b": {"type": "number"},
                "tau1": {"type": "number"},
                "tau2": {"type": "number"},
                "eps1": {"type": "number"},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "total_steps": {"type": "integer", "minimum": 0},
                "snapshot_interval": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "initial_state": {"type": "integer", "minimum": 0},
                "oracle_tol": {"type": "number", "exclusiveMinimum": 0},
                "stream_seeds": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        name: {"type": "integer", "minimum": 0}
                        for name in ("model", "trajectory", "costs", "graph")
                    },
                },
            },
        },
        "waivers": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "allow_m5_violation": {"type": "boolean"},
                "allow_disconnected": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


class ConfigFileError(ValueError):
    """Malformed or schema-invalid config document."""


def preset_names() -> list[str]:
    files = resources.files("qdlearn").joinpath("presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def load_preset(name: str) -> dict:
    ref = resources.files("qdlearn").joinpath("presets", f"{name}.json")
    if not ref.is_file():
        raise ConfigFileError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(ref.read_text())


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def check_schema(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors:
            where = "/".join(str(p) for p in err.absolute_path) or "<root>"
            lines.append(f"{where}: {err.message}")
        raise ConfigFileError("config failed schema validation:\n  " + "\n  ".join(lines))


def apply_overrides(doc: dict, *, seed=None, steps=None, out=None, allow_m5_violation=False,
                    allow_disconnected=False) -> dict:
    doc = copy.deepcopy(doc)
    run = doc.setdefault("run", {})
    if seed is not None:
        run["seed"] = seed
    if steps is not None:
        run["total_steps"] = steps
    if out is not None:
        doc.setdefault("output", {})["dir"] = str(out)
    waivers = doc.setdefault("waivers", {})
    if allow_m5_violation:
        waivers["allow_m5_violation"] = True
    if allow_disconnected:
        waivers["allow_disconnected"] = True
    return doc


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    document: dict
    run: RunConfig

    @property
    def output_dir(self) -> Path:
        return Path(self.document.get("output", {}).get("dir", "out"))


def build_model(doc: dict, streams: StreamFactory) -> MdpModel:
    mdoc = doc["model"]
    n = doc["num_agents"]
    M, U = mdoc["num_states"], mdoc["num_actions"]
    std = mdoc.get("cost_noise_std", 0.0)
    has_kernel, has_means = "kernel" in mdoc, "cost_means" in mdoc
    if has_kernel and has_means:
        try:
            return MdpModel(mdoc["kernel"], mdoc["cost_means"], std, mdoc["discount"])
        except ValueError as exc:
            raise ConfigFileError(f"model: {exc}") from exc
    if has_kernel or has_means:
        raise ConfigFileError("model: give both kernel and cost_means, or neither (random generation)")
    gen = mdoc.get("generator", {})
    if "seed" in gen:
        rng = StreamFactory(gen["seed"]).generator("model")
    else:
        rng = streams.generator("model")
    low, high = gen.get("mean_low", 0.0), gen.get("mean_high", 400.0)
    for name, value in (("mean_low", low), ("mean_high", high)):
        if isinstance(value, list) and len(value) != n:
            raise ConfigFileError(f"model/generator/{name}: expected {n} values, got {len(value)}")
    return random_model(rng, M, U, n, mdoc["discount"], cost_noise_std=std, mean_low=low, mean_high=high)


def build_config(doc: dict) -> ExperimentConfig:
    """Schema-check ``doc`` and construct the run it describes."""
    check_schema(doc)
    run = doc.get("run", {})
    seed = run.get("seed", 0)
    streams = StreamFactory(seed, run.get("stream_seeds"))
    model = build_model(doc, streams)
    n = doc["num_agents"]
    topo_doc = doc["topology"]
    sched = doc["schedule"]
    try:
        if topo_doc["type"] == "ring":
            topology = build_ring(n, topo_doc["neighbors_each_side"])
        else:
            topology = from_edges(n, topo_doc["edges"])
        failure = LinkFailureModel(doc.get("failure", {}).get("erasure_probability", 0.0))
        schedule = WeightSchedule(
            a=sched["a"], b=sched["b"], tau1=sched.get("tau1", 1.0),
            tau2=sched.get("tau2", 0.2), eps1=sched.get("eps1", 1.0),
        )
    except ConfigurationError as exc:
        raise ConfigFileError(str(exc)) from exc
    waivers = doc.get("waivers", {})
    cfg = RunConfig(
        model=model,
        topology=topology,
        schedule=schedule,
        failure=failure,
        total_steps=run.get("total_steps", 1000),
        snapshot_interval=run.get("snapshot_interval", 100),
        seed=seed,
        stream_seeds=dict(run.get("stream_seeds", {})),
        initial_state=run.get("initial_state", 0),
        allow_m5_violation=waivers.get("allow_m5_violation", False),
        allow_disconnected=waivers.get("allow_disconnected", False),
        oracle_tol=run.get("oracle_tol", 1e-10),
    )
    return ExperimentConfig(doc, cfg)
