"""Adversarial face patch toolkit: attacks, print-and-capture simulation, evaluation."""

from ._advface import (
    ConfigError,
    ContractViolation,
    DegenerateGridError,
    FeatureExtractor,
    IoError,
    attack,
    calibrate_threshold,
    cli,
    compose_combo,
    face_pairs,
    feature_distance,
    full_grid,
    masked_smoothness,
    masked_smoothness_grad,
    neutral_capture_params,
    physical_asr,
    simulate_capture,
    simulate_print,
    toy_stack,
    tv_loss,
    tv_loss_grad,
    white_balance_gains,
)

__version__ = "0.1.0"
