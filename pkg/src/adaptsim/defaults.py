"""Shipped defaults: a face-analysis pipeline and its synthetic cost model.

The default topology is a three-operator face detection and matching
pipeline with six knobs (three 4-valued, three 2-valued), i.e. 512
configurations.  The default model encodes a pure accuracy/latency
trade-off: every knob's more expensive value buys more objective, so the
best-objective configuration is also the slowest one at every input size.

Calibration: the fastest configuration processes a 6-face frame in 0.300 s
at 100% CPU; the objective spans 0.42 (fastest) to 1.00 (slowest), with a
distinct value for each of the 512 configurations.
"""

from __future__ import annotations

from .profiling import SyntheticProfileModel
from .service_model import ConstraintSpec, Requirement, ServiceTopology, make_topology

DEFAULT_INPUT_SIZES = (6, 12, 24, 48, 96, 192)

DEFAULT_LATENCY_TARGET_S = 1.0

# Value labels are ordered cheap-to-expensive within each parameter.
_PIPELINE = (
    (
        "preprocessing",
        (
            ("image_resize", ("0.25", "0.5", "0.75", "1.0")),
            ("colorization", ("grayscale", "rgb")),
        ),
    ),
    (
        "face_detection",
        (
            ("scale_factor", ("1.30", "1.20", "1.10", "1.05")),
            ("min_neighbors", ("8", "6", "4", "3")),
            ("detector", ("haar", "dnn")),
        ),
    ),
    (
        "face_recognition",
        (
            ("recognizer", ("lbph", "embedding")),
        ),
    ),
)

# Mixed-radix scale per parameter: value index i contributes i * scale, so
# every configuration has a distinct total in [0, 511].
_PARAM_SCALES = {
    "image_resize": 1,
    "scale_factor": 4,
    "min_neighbors": 16,
    "colorization": 64,
    "detector": 128,
    "recognizer": 256,
}

_TOTAL_SPAN = 511  # max achievable mixed-radix total

_LATENCY_SPAN_S = 0.35  # extra seconds from fastest to slowest configuration
_OBJECTIVE_FLOOR = 0.42  # objective of the fastest configuration
_OBJECTIVE_SPAN = 0.58
_LATENCY_FLOOR_S = 0.285
_PER_FACE_SLOPE_S = 0.0025


def default_topology() -> ServiceTopology:
    return make_topology("face_pipeline", _PIPELINE)


def default_requirement() -> Requirement:
    """Maximize precision subject to 1 s end-to-end latency per frame."""
    return Requirement(
        objective_metric="precision",
        constraints=(ConstraintSpec(metric="latency", target=DEFAULT_LATENCY_TARGET_S),),
        objective_sense="maximize",
    )


def default_model() -> SyntheticProfileModel:
    latency_weights: dict[str, dict[str, float]] = {}
    objective_weights: dict[str, dict[str, float]] = {}
    n_params = sum(len(params) for _, params in _PIPELINE)
    for _, params in _PIPELINE:
        for name, values in params:
            scale = _PARAM_SCALES[name]
            latency_weights[name] = {
                label: _LATENCY_SPAN_S * (i * scale) / _TOTAL_SPAN
                for i, label in enumerate(values)
            }
            # Spread the objective floor evenly over the parameters so the
            # all-cheapest configuration lands exactly on the floor.
            objective_weights[name] = {
                label: _OBJECTIVE_FLOOR / n_params
                + _OBJECTIVE_SPAN * (i * scale) / _TOTAL_SPAN
                for i, label in enumerate(values)
            }
    return SyntheticProfileModel(
        latency_weights=latency_weights,
        objective_weights=objective_weights,
        per_face_slope=_PER_FACE_SLOPE_S,
        latency_floor=_LATENCY_FLOOR_S,
    )
