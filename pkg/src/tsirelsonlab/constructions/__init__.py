"""Coded special sequences, R.I.S., exact pairs and spreading certificates."""

from .coding import CodingRegistry, coding_schedule, sigma
from .special import build_special_sequence, check_tree_like, verify_special_sequence
from .averages import find_l1k_average, make_dependent_sequence, make_exact_pair, select_ris
from .basic_inequality import reduce_basic_inequality
from .spreading import certify_c0_spreading, smallest_spreading_instance
