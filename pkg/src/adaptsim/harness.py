"""Experiment runner: seeded multi-run campaigns, overhead timing, reports.

A campaign runs one controller on one input trace for a number of seeded
runs.  Learning controllers persist their value table between runs, so run
k resumes from whatever run k-1 learned.  Run k of every campaign uses seed
``base_seed + k``, which gives every controller the identical sequence of
CPU availabilities and inputs for a fair comparison.

Wall-clock decision timing is kept out of the metric files so campaign
outputs are byte-identical across repeated executions with the same seed;
timings land in a separate file.
"""

from __future__ import annotations

import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .controllers import (
    ControllerObservation,
    HeuristicController,
    HeuristicParams,
    LearningParams,
    QLearningController,
    QTable,
    StaticController,
    make_action_space,
    qtable_load_or_zeros,
    qtable_save,
    reward,
    static_fast_index,
)
from .profiling import ProfileTable
from .service_model import (
    Configuration,
    Requirement,
    ServiceTopology,
    enumerate_configurations,
    sort_by_objective,
)
from .simenv import CpuChain, CpuChainParams, Environment, InputTrace, ScriptedCpu

CONTROLLER_KINDS = ("static-hp", "static-fast", "heuristic", "rl1", "rl2")
RL_KINDS = ("rl1", "rl2")

TRACE_FILE_HEADER = "step,cpu,input_size,ordinal,latency,satisfied,reward"
METRICS_HEADER = "run,steps,mean_objective,latency_satisfaction_pct,mean_reward"
TIMINGS_HEADER = "run,decide_median_s,decide_p99_s"


class CampaignLockError(RuntimeError):
    """Another campaign is already writing to the same persistence path."""


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class StepRecord:
    step: int
    cpu: float
    input_size: int
    ordinal: int
    latency: float
    satisfied: bool
    reward: float
    objective: float


@dataclass
class RunMetrics:
    run_index: int
    steps: int
    mean_objective: float
    latency_satisfaction_pct: float
    mean_reward: float
    decide_median_s: float
    decide_p99_s: float


@dataclass
class EpisodeResult:
    records: list[StepRecord]
    metrics: RunMetrics


@dataclass
class CampaignResult:
    controller: str
    trace_kind: str
    objective_metric: str
    metrics: list[RunMetrics]
    out_dir: Path

    def mean_over_runs(self, attr: str) -> float:
        values = [getattr(m, attr) for m in self.metrics]
        return sum(values) / len(values)


@dataclass
class OverheadReport:
    controller: str
    steps: int
    decide_median_s: float
    decide_p99_s: float
    reference_frame_s: float

    @property
    def total_s(self) -> float:
        return self.decide_median_s + self.reference_frame_s

    @property
    def impact_pct(self) -> float:
        return 100.0 * self.decide_median_s / self.total_s


@dataclass
class ExperimentSpec:
    """Everything one campaign needs: model of the world plus run policy."""

    topology: ServiceTopology
    requirement: Requirement
    profile: ProfileTable
    trace: InputTrace
    controller: str
    out_dir: Path
    cpu_params: CpuChainParams = field(default_factory=CpuChainParams)
    heuristic_params: HeuristicParams = field(default_factory=HeuristicParams)
    learning_params: LearningParams = field(default_factory=LearningParams)
    action_count: int | str = 16
    runs: int = 50
    base_seed: int = 0
    reference_input: int | None = None
    qtable_path: Path | None = None

    def __post_init__(self) -> None:
        if self.controller not in CONTROLLER_KINDS:
            raise ValueError(
                f"unknown controller {self.controller!r}; pick from {CONTROLLER_KINDS}"
            )
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        self.out_dir = Path(self.out_dir)
        self.qtable_path = (
            self.out_dir / "qtable.txt" if self.qtable_path is None else Path(self.qtable_path)
        )

    @property
    def reference_size(self) -> int:
        return (
            self.reference_input
            if self.reference_input is not None
            else self.profile.input_sizes[0]
        )


def build_controller(
    kind: str,
    actions: list[Configuration],
    profile: ProfileTable,
    requirement: Requirement,
    reference_input: int,
    heuristic_params: HeuristicParams,
    learning_params: LearningParams,
    table: QTable | None = None,
    rng: np.random.Generator | None = None,
):
    if kind == "static-hp":
        return StaticController(0, name=kind)
    if kind == "static-fast":
        return StaticController(
            static_fast_index(actions, profile, reference_input), name=kind
        )
    if kind == "heuristic":
        return HeuristicController(len(actions), heuristic_params)
    if kind in RL_KINDS:
        encoder = "v1" if kind == "rl1" else "v2"
        if table is None:
            table = QTable.zeros(encoder, len(actions))
        return QLearningController(
            encoder, table, requirement, learning_params, rng=rng, name=kind
        )
    raise ValueError(f"unknown controller {kind!r}")


def run_episode(
    env: Environment,
    controller,
    actions: Sequence[Configuration],
    seed: int | np.random.SeedSequence | None,
    run_index: int = 0,
) -> EpisodeResult:
    """One full pass over the environment's trace with one controller."""
    requirement = env.requirement
    state = env.reset(seed)
    controller.reset()
    obs = ControllerObservation(cpu_availability=state.cpu_availability)
    records: list[StepRecord] = []
    decide_ns: list[int] = []
    for step in range(env.length):
        t0 = time.perf_counter_ns()
        action_index = controller.decide(obs)
        decide_ns.append(time.perf_counter_ns() - t0)
        config = actions[action_index]
        cpu_used = state.cpu_availability
        size_used = state.input_size
        outcome = env.step(config)
        ratios = tuple(outcome.latency / c.target for c in requirement.constraints)
        obs = ControllerObservation(
            cpu_availability=outcome.observation.cpu_availability,
            last_config_ordinal=action_index,
            last_constraint_ratios=ratios,
            satisfied_last=outcome.satisfied,
            last_objective=outcome.objective,
        )
        records.append(
            StepRecord(
                step=step,
                cpu=cpu_used,
                input_size=size_used,
                ordinal=config.ordinal,
                latency=outcome.latency,
                satisfied=all(outcome.satisfied),
                reward=reward(obs, requirement),
                objective=outcome.objective,
            )
        )
        state = outcome.observation
    controller.finish(obs)
    return EpisodeResult(records=records, metrics=_metrics(run_index, records, decide_ns))


def _metrics(run_index: int, records: list[StepRecord], decide_ns: list[int]) -> RunMetrics:
    n = len(records)
    times = np.asarray(decide_ns, dtype=np.float64) / 1e9
    return RunMetrics(
        run_index=run_index,
        steps=n,
        mean_objective=sum(r.objective for r in records) / n,
        latency_satisfaction_pct=100.0 * sum(r.satisfied for r in records) / n,
        mean_reward=sum(r.reward for r in records) / n,
        decide_median_s=float(np.percentile(times, 50)),
        decide_p99_s=float(np.percentile(times, 99)),
    )


def write_run_trace(path: Path, records: Iterable[StepRecord]) -> None:
    lines = [TRACE_FILE_HEADER]
    for r in records:
        lines.append(
            f"{r.step},{_fmt(r.cpu)},{r.input_size},{r.ordinal},"
            f"{_fmt(r.latency)},{int(r.satisfied)},{_fmt(r.reward)}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@contextmanager
def _persistence_lock(path: Path):
    lock = path.with_name(path.name + ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CampaignLockError(
            f"{lock} exists: another campaign appears to be using {path}; "
            "remove the lock file if that campaign is no longer running"
        ) from None
    try:
        yield
    finally:
        os.close(fd)
        lock.unlink(missing_ok=True)


def run_experiment(spec: ExperimentSpec) -> CampaignResult:
    """Run one campaign: ``spec.runs`` seeded episodes of one controller.

    Learning controllers start run 0 from an all-zero table (any existing
    file at the persistence path is overwritten) and chain the table through
    the remaining runs via save/load round trips.
    """
    configs = enumerate_configurations(spec.topology)
    sorted_configs = sort_by_objective(
        configs, spec.profile, spec.reference_size, sense=spec.requirement.objective_sense
    )
    actions = make_action_space(sorted_configs, spec.action_count)
    runs_dir = spec.out_dir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    env = Environment(spec.profile, spec.requirement, spec.trace, spec.cpu_params)
    is_rl = spec.controller in RL_KINDS
    encoder = "v1" if spec.controller == "rl1" else "v2"

    def _run_all() -> list[RunMetrics]:
        all_metrics: list[RunMetrics] = []
        for k in range(spec.runs):
            ss = np.random.SeedSequence(spec.base_seed + k)
            env_ss, ctrl_ss = ss.spawn(2)
            table = None
            if is_rl:
                table = (
                    QTable.zeros(encoder, len(actions))
                    if k == 0
                    else qtable_load_or_zeros(spec.qtable_path, encoder, len(actions))
                )
            controller = build_controller(
                spec.controller,
                actions,
                spec.profile,
                spec.requirement,
                spec.reference_size,
                spec.heuristic_params,
                spec.learning_params,
                table=table,
                rng=np.random.default_rng(ctrl_ss),
            )
            episode = run_episode(env, controller, actions, env_ss, run_index=k)
            write_run_trace(runs_dir / f"run_{k:03d}.csv", episode.records)
            if is_rl:
                qtable_save(controller.table, spec.qtable_path)
            all_metrics.append(episode.metrics)
        return all_metrics

    if is_rl:
        spec.qtable_path.parent.mkdir(parents=True, exist_ok=True)
        with _persistence_lock(spec.qtable_path):
            metrics = _run_all()
    else:
        metrics = _run_all()

    _write_metrics(spec.out_dir / "metrics.csv", metrics)
    _write_timings(spec.out_dir / "timings.csv", metrics)
    return CampaignResult(
        controller=spec.controller,
        trace_kind=spec.trace.kind,
        objective_metric=spec.requirement.objective_metric,
        metrics=metrics,
        out_dir=spec.out_dir,
    )


def _write_metrics(path: Path, metrics: list[RunMetrics]) -> None:
    lines = [METRICS_HEADER]
    for m in metrics:
        lines.append(
            f"{m.run_index},{m.steps},{_fmt(m.mean_objective)},"
            f"{_fmt(m.latency_satisfaction_pct)},{_fmt(m.mean_reward)}"
        )
    n = len(metrics)
    lines.append(
        "mean,{steps},{obj},{sat},{rew}".format(
            steps=sum(m.steps for m in metrics) // n,
            obj=_fmt(sum(m.mean_objective for m in metrics) / n),
            sat=_fmt(sum(m.latency_satisfaction_pct for m in metrics) / n),
            rew=_fmt(sum(m.mean_reward for m in metrics) / n),
        )
    )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_timings(path: Path, metrics: list[RunMetrics]) -> None:
    lines = [TIMINGS_HEADER]
    for m in metrics:
        lines.append(f"{m.run_index},{_fmt(m.decide_median_s)},{_fmt(m.decide_p99_s)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def measure_overhead(
    controller_kind: str,
    steps: int = 20000,
    warmup: int = 1000,
    reference_frame_s: float = 0.070,
    action_count: int = 16,
    seed: int = 7,
    profile: ProfileTable | None = None,
    topology: ServiceTopology | None = None,
    requirement: Requirement | None = None,
) -> OverheadReport:
    """Time the per-step decision cost of a controller over a long episode.

    Only the decide() call is timed (for learners that includes the value
    update).  The impact percentage relates the median decision time to a
    reference frame processing time, 70 ms by default.
    """
    from . import defaults
    from .simenv import make_trace

    if steps < 1:
        raise ValueError("steps must be >= 1")
    topology = topology or defaults.default_topology()
    requirement = requirement or defaults.default_requirement()
    if profile is None:
        from .profiling import generate_synthetic_profile

        profile = generate_synthetic_profile(
            defaults.default_model(), topology, defaults.DEFAULT_INPUT_SIZES
        )
    trace = make_trace("random", length=warmup + steps)
    reference = profile.input_sizes[0]
    configs = sort_by_objective(
        enumerate_configurations(topology), profile, reference
    )
    actions = make_action_space(configs, action_count)
    env = Environment(profile, requirement, trace)
    controller = build_controller(
        controller_kind,
        actions,
        profile,
        requirement,
        reference,
        HeuristicParams(),
        LearningParams(),
        rng=np.random.default_rng(seed + 1),
    )
    state = env.reset(seed)
    controller.reset()
    obs = ControllerObservation(cpu_availability=state.cpu_availability)
    decide_ns: list[int] = []
    for step in range(env.length):
        t0 = time.perf_counter_ns()
        action_index = controller.decide(obs)
        decide_ns.append(time.perf_counter_ns() - t0)
        outcome = env.step(actions[action_index])
        obs = ControllerObservation(
            cpu_availability=outcome.observation.cpu_availability,
            last_config_ordinal=action_index,
            last_constraint_ratios=tuple(
                outcome.latency / c.target for c in requirement.constraints
            ),
            satisfied_last=outcome.satisfied,
            last_objective=outcome.objective,
        )
    timed = np.asarray(decide_ns[warmup:], dtype=np.float64) / 1e9
    return OverheadReport(
        controller=controller_kind,
        steps=len(timed),
        decide_median_s=float(np.percentile(timed, 50)),
        decide_p99_s=float(np.percentile(timed, 99)),
        reference_frame_s=reference_frame_s,
    )


def emit_report(results: Sequence[CampaignResult], out_dir: str | Path) -> dict[str, Path]:
    """Write the cross-campaign summary table and per-controller averages.

    summary.csv has one row per (metric, trace) and one column per
    controller; bar_chart.csv averages each controller over all traces.
    Per-step trace files were already written by each campaign under its
    own directory.
    """
    if not results:
        raise ValueError("no campaign results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def _canonical(known: tuple[str, ...]):
        return lambda name: (known.index(name) if name in known else len(known), name)

    trace_order = ("fixed", "variable", "full_day", "random")
    controllers = sorted(
        dict.fromkeys(r.controller for r in results), key=_canonical(CONTROLLER_KINDS)
    )
    traces = sorted(
        dict.fromkeys(r.trace_kind for r in results), key=_canonical(trace_order)
    )
    objective_metric = results[0].objective_metric
    by_key = {(r.controller, r.trace_kind): r for r in results}

    lines = ["metric,trace," + ",".join(controllers)]
    for metric_label, attr in (
        (objective_metric, "mean_objective"),
        ("latency_satisfaction_pct", "latency_satisfaction_pct"),
    ):
        for trace in traces:
            cells = []
            for controller in controllers:
                result = by_key.get((controller, trace))
                cells.append("" if result is None else _fmt(result.mean_over_runs(attr)))
            lines.append(f"{metric_label},{trace}," + ",".join(cells))
    summary_path = out_dir / "summary.csv"
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    bar_lines = [f"controller,mean_{objective_metric},mean_latency_satisfaction_pct"]
    for controller in controllers:
        rows = [r for r in results if r.controller == controller]
        obj = sum(r.mean_over_runs("mean_objective") for r in rows) / len(rows)
        sat = sum(r.mean_over_runs("latency_satisfaction_pct") for r in rows) / len(rows)
        bar_lines.append(f"{controller},{_fmt(obj)},{_fmt(sat)}")
    bar_path = out_dir / "bar_chart.csv"
    bar_path.write_text("\n".join(bar_lines) + "\n", encoding="utf-8")
    return {"summary": summary_path, "bar_chart": bar_path}


def recompute_metrics_from_trace(
    path: str | Path,
    sorted_configs: Sequence[Configuration],
    profile: ProfileTable,
    run_index: int = 0,
) -> RunMetrics:
    """Rebuild a run's metrics from its per-step trace file.

    Used by the report verb and as a cross-check that summary metrics match
    what the traces imply.  Timing fields are not recoverable from traces
    and come back as zero.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != TRACE_FILE_HEADER:
        raise ValueError(f"{path}: not a run trace file")
    n = 0
    sum_obj = 0.0
    sum_sat = 0
    sum_reward = 0.0
    for line in lines[1:]:
        step, cpu, size, ordinal, latency, satisfied, rew = line.split(",")
        sum_obj += profile.objective(sorted_configs[int(ordinal)].assignments)
        sum_sat += int(satisfied)
        sum_reward += float(rew)
        n += 1
    if n == 0:
        raise ValueError(f"{path}: trace has no steps")
    return RunMetrics(
        run_index=run_index,
        steps=n,
        mean_objective=sum_obj / n,
        latency_satisfaction_pct=100.0 * sum_sat / n,
        mean_reward=sum_reward / n,
        decide_median_s=0.0,
        decide_p99_s=0.0,
    )
