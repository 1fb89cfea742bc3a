"""Discrete-time execution environment: CPU availability chain plus input trace.

One step corresponds to fully processing one input frame.  Effective frame
latency is the profiled base latency divided by the current CPU
availability (fair-share model of a compute-bound task).  After a step is
evaluated, the availability chain and the input trace advance, so the
observation returned by :meth:`Environment.step` already shows the context
the *next* decision will run under.

The interface mirrors the usual reset/step agent-environment loop:
``reset(seed)`` starts a reproducible episode, ``step(action)`` processes
one frame, and stepping past the end of the trace raises
:class:`EpisodeFinished`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .profiling import ProfileTable
from .service_model import Configuration, Requirement

DEFAULT_INPUT_CANDIDATES = (6, 12, 24, 48, 96, 192)

FIXED_TRACE_FACES = 48
FIXED_TRACE_STEPS = 1000
VARIABLE_BLOCK_FACES = (6, 12, 24, 48, 96, 192, 96, 48, 24, 12, 6)
VARIABLE_BLOCK_STEPS = 100
FULL_DAY_STEPS = 86400

# Hour-of-day -> faces per frame for the full-day trace: quiet nights,
# commuter peaks in the morning and late afternoon.
FULL_DAY_SCHEDULE: Mapping[int, int] = {
    **{h: 6 for h in range(0, 6)},
    **{h: 96 for h in range(6, 9)},
    **{h: 192 for h in range(9, 11)},
    **{h: 48 for h in range(11, 16)},
    **{h: 192 for h in range(16, 19)},
    **{h: 96 for h in range(19, 22)},
    **{h: 12 for h in range(22, 24)},
}

TRACE_KINDS = ("fixed", "variable", "full_day", "random")


class EpisodeFinished(RuntimeError):
    """Signals that the input trace is exhausted; reset to start a new episode."""


@dataclass(frozen=True)
class CpuChainParams:
    """Markov-chain parameters for the CPU availability of a shared device."""

    min_avail: float = 0.3
    max_avail: float = 1.0
    change_prob: float = 0.1
    delta_mean: float = 0.1
    delta_stddev: float = 0.1

    def __post_init__(self) -> None:
        if not 0 < self.min_avail <= self.max_avail <= 1:
            raise ValueError("need 0 < min_avail <= max_avail <= 1")
        if not 0 <= self.change_prob <= 1:
            raise ValueError("change_prob must be in [0, 1]")
        if self.delta_stddev < 0:
            raise ValueError("delta_stddev must be >= 0")


def _cpu_step_event(
    avail: float, params: CpuChainParams, rng: np.random.Generator
) -> tuple[float, bool]:
    if float(rng.random()) >= params.change_prob:
        return avail, False
    magnitude = float(rng.normal(params.delta_mean, params.delta_stddev))
    sign = 1.0 if float(rng.random()) < 0.5 else -1.0
    moved = avail + sign * magnitude
    return min(params.max_avail, max(params.min_avail, moved)), True


def cpu_step(avail: float, params: CpuChainParams, rng: np.random.Generator) -> float:
    """Advance the availability chain by one step.

    With probability ``change_prob`` the availability moves by a normally
    distributed magnitude in a uniformly random direction, clamped into
    [min_avail, max_avail]; otherwise it stays put.  Draw order (change,
    magnitude, sign) is fixed so seeded runs are reproducible.
    """
    value, _ = _cpu_step_event(avail, params, rng)
    return value


class CpuChain:
    """Stateful wrapper around :func:`cpu_step`, starting from an idle device.

    ``change_events`` counts steps where the change branch fired.  Note that
    a fired change at a range boundary can be absorbed by clamping, so the
    observable value-change rate sits slightly below ``change_prob``."""

    def __init__(self, params: CpuChainParams | None = None):
        self.params = params or CpuChainParams()
        self._value = self.params.max_avail
        self._rng: np.random.Generator | None = None
        self.change_events = 0

    def reset(self, rng: np.random.Generator) -> float:
        self._rng = rng
        self._value = self.params.max_avail
        self.change_events = 0
        return self._value

    @property
    def value(self) -> float:
        return self._value

    def step(self) -> float:
        if self._rng is None:
            raise RuntimeError("CpuChain.step() before reset()")
        self._value, changed = _cpu_step_event(self._value, self.params, self._rng)
        self.change_events += changed
        assert self.params.min_avail <= self._value <= self.params.max_avail
        return self._value


class ScriptedCpu:
    """Availability follows an explicit per-step script instead of the chain.

    Values are clamped into the params range; the last value holds if the
    episode outlives the script.
    """

    def __init__(self, values: Sequence[float], params: CpuChainParams | None = None):
        self.params = params or CpuChainParams()
        if len(values) == 0:
            raise ValueError("scripted CPU trace must be non-empty")
        lo, hi = self.params.min_avail, self.params.max_avail
        self._values = tuple(min(hi, max(lo, float(v))) for v in values)
        self._idx = 0

    def reset(self, rng: np.random.Generator) -> float:
        self._idx = 0
        return self._values[0]

    @property
    def value(self) -> float:
        return self._values[min(self._idx, len(self._values) - 1)]

    def step(self) -> float:
        self._idx += 1
        return self.value


@dataclass(frozen=True)
class InputTrace:
    """Per-step input sizes (faces per frame) for one episode.

    Deterministic kinds carry their sizes explicitly.  The ``random`` kind
    carries a candidate set and a change probability; sizes are drawn at
    reset time from the episode RNG (or from ``seed`` when pinned, in which
    case every episode sees the same draw).
    """

    kind: str
    sizes: tuple[int, ...] | None = None
    candidates: tuple[int, ...] = DEFAULT_INPUT_CANDIDATES
    change_prob: float = 0.1
    length: int = 0
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.sizes is not None:
            object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
            object.__setattr__(self, "length", len(self.sizes))
        if self.length <= 0:
            raise ValueError("trace length must be >= 1")

    def materialize(self, rng: np.random.Generator) -> tuple[int, ...]:
        """Concrete per-step sizes for one episode."""
        if self.sizes is not None:
            return self.sizes
        if self.seed is not None:
            rng = np.random.default_rng(self.seed)
        sizes = [int(rng.integers(len(self.candidates)))]
        for _ in range(self.length - 1):
            if float(rng.random()) < self.change_prob:
                # A change always switches to a different size.
                step = 1 + int(rng.integers(len(self.candidates) - 1))
                sizes.append((sizes[-1] + step) % len(self.candidates))
            else:
                sizes.append(sizes[-1])
        return tuple(self.candidates[i] for i in sizes)


def make_trace(
    kind: str,
    *,
    length: int | None = None,
    schedule: Mapping[int, int] | None = None,
    candidates: Sequence[int] = DEFAULT_INPUT_CANDIDATES,
    change_prob: float = 0.1,
    seed: int | None = None,
) -> InputTrace:
    """Build one of the standard input traces.

    fixed     1000 frames of 48 faces.
    variable  11 blocks of 100 frames: 6, 12, 24, 48, 96, 192, 96, 48, 24, 12, 6.
    full_day  86400 frames (one per second) following an hourly schedule.
    random    keeps the previous size with probability 1 - change_prob,
              otherwise switches to a different candidate size.
    """
    if kind == "fixed":
        return InputTrace(kind=kind, sizes=(FIXED_TRACE_FACES,) * FIXED_TRACE_STEPS)
    if kind == "variable":
        sizes: list[int] = []
        for faces in VARIABLE_BLOCK_FACES:
            sizes.extend([faces] * VARIABLE_BLOCK_STEPS)
        return InputTrace(kind=kind, sizes=tuple(sizes))
    if kind == "full_day":
        table = dict(FULL_DAY_SCHEDULE if schedule is None else schedule)
        if sorted(table) != list(range(24)):
            raise ValueError("full_day schedule must map every hour 0..23")
        sizes = [table[second // 3600] for second in range(FULL_DAY_STEPS)]
        return InputTrace(kind=kind, sizes=tuple(sizes))
    if kind == "random":
        if len(set(candidates)) < 2:
            raise ValueError("random trace needs at least two candidate sizes")
        return InputTrace(
            kind=kind,
            candidates=tuple(int(c) for c in candidates),
            change_prob=change_prob,
            length=int(length or 1000),
            seed=seed,
        )
    raise ValueError(f"unknown trace kind {kind!r}")


def custom_trace(sizes: Sequence[int]) -> InputTrace:
    """An explicit deterministic trace, for scripted scenarios."""
    return InputTrace(kind="custom", sizes=tuple(sizes))


@dataclass
class EnvState:
    """Observation: context for the next decision plus last-step results."""

    step_index: int
    cpu_availability: float
    input_size: int
    last_latency: float | None = None
    last_objective: float | None = None
    last_config_ordinal: int | None = None


@dataclass(frozen=True)
class StepOutcome:
    latency: float
    objective: float
    satisfied: tuple[bool, ...]
    observation: EnvState
    done: bool


class Environment:
    """Simulates one service instance processing an input trace.

    Not thread-safe; run independently seeded instances for parallelism.
    """

    def __init__(
        self,
        profile: ProfileTable,
        requirement: Requirement,
        trace: InputTrace,
        cpu_params: CpuChainParams | None = None,
        cpu_source: CpuChain | ScriptedCpu | None = None,
    ):
        self.profile = profile
        self.requirement = requirement
        self.trace = trace
        self.cpu = cpu_source if cpu_source is not None else CpuChain(cpu_params)
        self._sizes: tuple[int, ...] = ()
        self._step = 0
        self._done = True

    @property
    def length(self) -> int:
        return self.trace.length

    def reset(self, seed: int | np.random.SeedSequence | None = None) -> EnvState:
        """Start a new episode; identical seeds replay identical episodes."""
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        chain_ss, trace_ss = ss.spawn(2)
        cpu0 = self.cpu.reset(np.random.default_rng(chain_ss))
        self._sizes = self.trace.materialize(np.random.default_rng(trace_ss))
        self._step = 0
        self._done = False
        return EnvState(step_index=0, cpu_availability=cpu0, input_size=self._sizes[0])

    def step(self, action: Configuration) -> StepOutcome:
        """Process one frame with the given configuration."""
        if self._done:
            raise EpisodeFinished("input trace exhausted; call reset()")
        cpu_used = self.cpu.value
        input_size = self._sizes[self._step]
        base_latency, objective = self.profile.lookup(action, input_size)
        latency = base_latency / cpu_used
        satisfied = tuple(
            latency <= c.target for c in self.requirement.constraints
        )
        self._step += 1
        self._done = self._step >= len(self._sizes)
        cpu_next = self.cpu.step()
        params = self.cpu.params
        assert params.min_avail <= cpu_next <= params.max_avail
        next_size = self._sizes[self._step] if not self._done else input_size
        observation = EnvState(
            step_index=self._step,
            cpu_availability=cpu_next,
            input_size=next_size,
            last_latency=latency,
            last_objective=objective,
            last_config_ordinal=action.ordinal,
        )
        return StepOutcome(
            latency=latency,
            objective=objective,
            satisfied=satisfied,
            observation=observation,
            done=self._done,
        )


def export_input_trace(
    trace: InputTrace, path: str | Path, seed: int | None = None
) -> None:
    """Write per-step (step, input_size) records for audit."""
    sizes = trace.materialize(np.random.default_rng(seed))
    lines = ["step,input_size"]
    lines.extend(f"{i},{s}" for i, s in enumerate(sizes))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_cpu_trace(
    params: CpuChainParams, steps: int, path: str | Path, seed: int | None = None
) -> None:
    """Roll the availability chain for ``steps`` steps and write (step, cpu)."""
    chain = CpuChain(params)
    chain.reset(np.random.default_rng(seed))
    lines = ["step,cpu_availability", f"0,{chain.value!r}"]
    for i in range(1, steps):
        lines.append(f"{i},{chain.step()!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
