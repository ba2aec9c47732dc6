"""Deferred acceptance for college admissions and manipulation by colleges."""
from ._accel import backend
from .daa import ProposalTrace, Variant, daa_matching, run_daa
from .errors import (
    CollegeDAError,
    ConfigurationError,
    EmptyInputError,
    MalformedInputError,
    OracleSizeError,
)
from .manipulation import (
    ManipulationReport,
    SearchStats,
    SeatMapping,
    brute_force_oracle,
    find_manipulation_by_subsets,
    find_manipulation_college_proposing,
    find_manipulation_student_proposing,
    find_manipulation_via_seats,
    find_optimal_manipulation_student_proposing,
    split_to_one_to_one,
)
from .model import Dominance, Market, Matching, PreferenceProfile, is_stable, responsive_dominates

__version__ = "0.1.0"

__all__ = [
    "CollegeDAError",
    "ConfigurationError",
    "Dominance",
    "EmptyInputError",
    "MalformedInputError",
    "ManipulationReport",
    "Market",
    "Matching",
    "OracleSizeError",
    "PreferenceProfile",
    "ProposalTrace",
    "SearchStats",
    "SeatMapping",
    "Variant",
    "backend",
    "brute_force_oracle",
    "daa_matching",
    "find_manipulation_by_subsets",
    "find_manipulation_college_proposing",
    "find_manipulation_student_proposing",
    "find_manipulation_via_seats",
    "find_optimal_manipulation_student_proposing",
    "is_stable",
    "responsive_dominates",
    "run_daa",
    "split_to_one_to_one",
]
