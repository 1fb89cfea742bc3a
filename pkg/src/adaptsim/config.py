"""Experiment configuration files (YAML) and their expansion into campaigns.

A single config document declares the service topology, the requirement,
the profile source, and the run policy.  Controllers and traces may be
lists; the cross product becomes one campaign per (controller, trace) pair,
each writing into its own subdirectory of ``out_dir``.

Every section is optional: omitted sections fall back to the shipped
face-pipeline defaults, so a minimal config can be just ``runs: 5``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import defaults
from .controllers import HeuristicParams, LearningParams
from .harness import CONTROLLER_KINDS, ExperimentSpec
from .profiling import (
    ProfileTable,
    SyntheticProfileModel,
    generate_synthetic_profile,
    load_profile,
    validate_profile_coverage,
)
from .service_model import (
    ConstraintSpec,
    OperatorSpec,
    ParameterSpec,
    Requirement,
    ServiceTopology,
)
from .simenv import TRACE_KINDS, CpuChainParams, InputTrace, make_trace


class ConfigError(ValueError):
    """Raised when an experiment config file cannot be interpreted."""


@dataclass
class ExperimentConfig:
    topology: ServiceTopology
    requirement: Requirement
    profile: ProfileTable
    controllers: list[str]
    trace_kinds: list[str]
    cpu_params: CpuChainParams
    heuristic_params: HeuristicParams
    learning_params: LearningParams
    action_count: int | str
    runs: int
    base_seed: int
    reference_input: int | None
    out_dir: Path
    random_trace_length: int
    full_day_schedule: dict[int, int] | None = None
    input_sizes: tuple[int, ...] = defaults.DEFAULT_INPUT_SIZES

    def trace(self, kind: str) -> InputTrace:
        return make_trace(
            kind,
            length=self.random_trace_length,
            schedule=self.full_day_schedule,
        )

    def campaign_specs(
        self,
        controllers: list[str] | None = None,
        trace_kinds: list[str] | None = None,
        out_dir: Path | None = None,
        runs: int | None = None,
        base_seed: int | None = None,
    ) -> list[ExperimentSpec]:
        """One spec per (controller, trace), optionally overridden by the CLI."""
        controllers = controllers or self.controllers
        trace_kinds = trace_kinds or self.trace_kinds
        out_root = Path(out_dir) if out_dir is not None else self.out_dir
        specs = []
        for trace_kind in trace_kinds:
            trace = self.trace(trace_kind)
            for controller in controllers:
                specs.append(
                    ExperimentSpec(
                        topology=self.topology,
                        requirement=self.requirement,
                        profile=self.profile,
                        trace=trace,
                        controller=controller,
                        out_dir=out_root / f"{controller}_{trace_kind}",
                        cpu_params=self.cpu_params,
                        heuristic_params=self.heuristic_params,
                        learning_params=self.learning_params,
                        action_count=self.action_count,
                        runs=runs if runs is not None else self.runs,
                        base_seed=base_seed if base_seed is not None else self.base_seed,
                        reference_input=self.reference_input,
                    )
                )
        return specs


def _require_mapping(node: Any, where: str) -> Mapping[str, Any]:
    if not isinstance(node, Mapping):
        raise ConfigError(f"{where} must be a mapping, got {type(node).__name__}")
    return node


def _parse_topology(node: Any) -> ServiceTopology:
    node = _require_mapping(node, "topology")
    operators = []
    for op_node in node.get("operators", []):
        op_node = _require_mapping(op_node, "topology.operators[]")
        params = []
        for p_node in op_node.get("parameters", []):
            p_node = _require_mapping(p_node, "parameter")
            try:
                params.append(
                    ParameterSpec(
                        name=str(p_node["name"]),
                        values=tuple(str(v) for v in p_node["values"]),
                    )
                )
            except KeyError as exc:
                raise ConfigError(f"parameter entry missing key {exc}") from None
        operators.append(
            OperatorSpec(
                name=str(op_node.get("name", f"op{len(operators)}")),
                parameters=tuple(params),
                granularity=int(op_node.get("granularity", 1)),
            )
        )
    try:
        return ServiceTopology(name=str(node.get("name", "service")), operators=tuple(operators))
    except ValueError as exc:
        raise ConfigError(f"invalid topology: {exc}") from None


def _parse_requirement(node: Any) -> Requirement:
    node = _require_mapping(node, "requirement")
    constraints = []
    for c_node in node.get("constraints", []):
        c_node = _require_mapping(c_node, "constraint")
        constraints.append(
            ConstraintSpec(
                metric=str(c_node.get("metric", "latency")),
                target=float(c_node["target"]),
            )
        )
    try:
        return Requirement(
            objective_metric=str(node.get("objective_metric", "precision")),
            constraints=tuple(constraints),
            objective_sense=str(node.get("objective_sense", "maximize")),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid requirement: {exc}") from None


def _parse_model(node: Any) -> SyntheticProfileModel:
    node = _require_mapping(node, "profile.model")
    try:
        return SyntheticProfileModel(
            latency_weights={
                str(p): {str(v): float(w) for v, w in values.items()}
                for p, values in node["latency_weights"].items()
            },
            objective_weights={
                str(p): {str(v): float(w) for v, w in values.items()}
                for p, values in node["objective_weights"].items()
            },
            per_face_slope=float(node["per_face_slope"]),
            latency_floor=float(node["latency_floor"]),
        )
    except KeyError as exc:
        raise ConfigError(f"profile.model missing key {exc}") from None


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Load an experiment config file; ``None`` yields the built-in defaults."""
    if path is None:
        raw: dict[str, Any] = {}
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        raw = {} if loaded is None else loaded
        if not isinstance(raw, Mapping):
            raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(raw, base_dir=Path(path).parent if path else Path.cwd())


def parse_config(raw: Mapping[str, Any], base_dir: Path | None = None) -> ExperimentConfig:
    base_dir = base_dir or Path.cwd()

    topology = (
        _parse_topology(raw["topology"]) if "topology" in raw else defaults.default_topology()
    )
    requirement = (
        _parse_requirement(raw["requirement"])
        if "requirement" in raw
        else defaults.default_requirement()
    )

    profile_node = _require_mapping(raw.get("profile", {}), "profile")
    input_sizes = tuple(
        int(s) for s in profile_node.get("input_sizes", defaults.DEFAULT_INPUT_SIZES)
    )
    source = profile_node.get("source", "synthetic")
    if source == "synthetic":
        model_node = profile_node.get("model", "default")
        model = defaults.default_model() if model_node == "default" else _parse_model(model_node)
        profile = generate_synthetic_profile(model, topology, input_sizes)
    elif source == "file":
        if "path" not in profile_node:
            raise ConfigError("profile.source is 'file' but profile.path is missing")
        profile_path = Path(profile_node["path"])
        if not profile_path.is_absolute():
            profile_path = base_dir / profile_path
        profile = load_profile(profile_path)
        validate_profile_coverage(profile, topology)
        input_sizes = profile.input_sizes
    else:
        raise ConfigError(f"unknown profile source {source!r}")

    controller_node = _require_mapping(raw.get("controller", {}), "controller")
    controllers = [str(c) for c in controller_node.get("kinds", list(CONTROLLER_KINDS))]
    for c in controllers:
        if c not in CONTROLLER_KINDS:
            raise ConfigError(f"unknown controller {c!r}; pick from {CONTROLLER_KINDS}")
    heuristic_params = HeuristicParams(
        **{k: int(v) for k, v in controller_node.get("heuristic", {}).items()}
    )
    learning_node = dict(controller_node.get("learning", {}))
    if "seed" in learning_node and learning_node["seed"] is not None:
        learning_node["seed"] = int(learning_node["seed"])
    learning_params = LearningParams(
        **{k: (float(v) if k != "seed" else v) for k, v in learning_node.items()}
    )
    action_count: int | str = controller_node.get("actions", 16)
    if action_count != "all":
        action_count = int(action_count)

    trace_node = _require_mapping(raw.get("trace", {}), "trace")
    trace_kinds = [str(t).replace("-", "_") for t in trace_node.get("kinds", ["variable"])]
    for t in trace_kinds:
        if t not in TRACE_KINDS:
            raise ConfigError(f"unknown trace kind {t!r}; pick from {TRACE_KINDS}")
    schedule_node = trace_node.get("full_day_schedule")
    schedule = (
        {int(h): int(f) for h, f in schedule_node.items()} if schedule_node else None
    )

    cpu_node = _require_mapping(raw.get("cpu", {}), "cpu")
    cpu_params = CpuChainParams(**{k: float(v) for k, v in cpu_node.items()})

    out_dir = Path(raw.get("out_dir", "results"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    reference_input = raw.get("reference_input")
    return ExperimentConfig(
        topology=topology,
        requirement=requirement,
        profile=profile,
        controllers=controllers,
        trace_kinds=trace_kinds,
        cpu_params=cpu_params,
        heuristic_params=heuristic_params,
        learning_params=learning_params,
        action_count=action_count,
        runs=int(raw.get("runs", 50)),
        base_seed=int(raw.get("base_seed", 0)),
        reference_input=None if reference_input is None else int(reference_input),
        out_dir=out_dir,
        random_trace_length=int(trace_node.get("random_length", 1000)),
        full_day_schedule=schedule,
        input_sizes=input_sizes,
    )
