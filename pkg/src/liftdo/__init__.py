"""Exact lifted causal inference in partially directed parametric factor graphs."""

from .causal import (
    DoAnswer,
    DoQuery,
    ParentChoice,
    QueryTargetOverlap,
    UnknownAtom,
    enumerate_parent_choices,
    lifted_do_query,
    orient_and_extend,
    post_intervention_distribution,
    uniquely_identifiable,
)
from .dsep import UnsupportedLiftedQuery, d_separated, d_separated_lifted
from .grounding import GroundAtom, GroundFactor, GroundModel, ground, joint_probability, normalization
from .inference import Distribution, ZeroEvidenceProbability, conditional_given_parents, marginal
from .model import (
    PPCFG,
    PRV,
    Atom,
    Constraint,
    LogVar,
    ModelError,
    Node,
    Parfactor,
    ValidationReport,
    children,
    neighbours,
    parents,
    validate,
)
from .modelio import ModelSource, ParseError, emit_result, parse_model, parse_query, serialize_model
from .oracle import StateSpaceTooLarge, TooManyAmbiguousFactors, brute_force_do, enumerate_extensions
from .shattering import split_on_atoms

__all__ = [name for name in dir() if not name.startswith("_")]
