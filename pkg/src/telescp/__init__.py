"""Desk-scale software power side-channel toolkit: simulated telemetry, TVLA and CPA on AES-128."""

__version__ = "0.1.0"

from telescp._accel import backend_name  # noqa: E402
from telescp.aes import encrypt_block, expand_key, hamming_distance, hamming_weight, invert_key_schedule  # noqa: E402
from telescp.cpa import LeakModel, compute_ge, ge_curve, run_cpa  # noqa: E402
from telescp.leakage import (  # noqa: E402
    ChannelProfile,
    MitigationSpec,
    PlaintextSource,
    ThrottleSpec,
    apply_mitigation,
    get_preset,
    simulate_campaign,
    simulate_trace,
    throttle_transform,
)
from telescp.stats import THRESHOLD_TVLA  # noqa: E402
from telescp.tracestore import PlaintextClass, TraceSet, read_traceset, write_traceset  # noqa: E402
from telescp.tvla import classify_cell, run_tvla  # noqa: E402
