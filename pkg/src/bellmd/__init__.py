"""Optimal adversarial strategies for Bell tests with limited measurement dependence."""

from .model import (
    CHSH,
    I3322,
    GameSpec,
    MdMeasure,
    MeasureKind,
    OutcomeTable,
    StrategyProfile,
    chsh_outcome_table,
    class_size,
    correct_count,
    derive_outcome_table,
    expand_profile,
    md_from_profile,
    score_from_profile,
)

__version__ = "0.1.0"
