"""Locally differentially private frequency estimation over set-valued data.

The core protocol lives in :mod:`privsketch.protocol`; competitors in
:mod:`privsketch.baselines`; the experiment runner in :mod:`privsketch.harness`.
"""

from .datasets import Dataset, dataset_stats, gen_zipf, load_transactions, true_frequencies
from .frequency import FrequencyTable
from .hashing import HashFamily, make_hash_family
from .ldp import PrivacyParams, flip_probability
from .protocol import (
    FullReport,
    UserReport,
    collector_estimate_full,
    collector_estimate_sampled,
    user_report_full,
    user_report_sampled,
)
from .sketch import BoolSketch, OrderingMatrix, argmin_row, encode, generate_ordering_matrix, query_min

__all__ = [
    "BoolSketch", "Dataset", "FrequencyTable", "FullReport", "HashFamily", "OrderingMatrix",
    "PrivacyParams", "UserReport", "argmin_row", "collector_estimate_full",
    "collector_estimate_sampled", "dataset_stats", "encode", "flip_probability", "gen_zipf",
    "generate_ordering_matrix", "load_transactions", "make_hash_family", "query_min",
    "true_frequencies", "user_report_full", "user_report_sampled",
]
