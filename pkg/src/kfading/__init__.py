"""Statistics of squared-K (K-distributed) co-channel interference and the
resulting SINR, selection-diversity and error-rate performance."""
from __future__ import annotations

from .ksum import (
    BatchResult,
    EvalResult,
    InterferenceProfile,
    TruncationPolicy,
    exponential_decay_profile,
    interference_cdf,
    interference_mgf,
    interference_pdf,
    required_terms,
    truncation_bound,
)
from .perf import (
    AsymptoticGains,
    ModulationSpec,
    ReceiverConfig,
    abep_cdf,
    abep_high_snr,
    abep_mgf,
    min_branches,
    op_high_snr,
    outage_probability,
)
from .sinr import LinkModel, output_cdf, output_pdf
from .simo import DesiredProfile

__all__ = [
    "AsymptoticGains",
    "BatchResult",
    "DesiredProfile",
    "EvalResult",
    "InterferenceProfile",
    "LinkModel",
    "ModulationSpec",
    "ReceiverConfig",
    "TruncationPolicy",
    "abep_cdf",
    "abep_high_snr",
    "abep_mgf",
    "exponential_decay_profile",
    "interference_cdf",
    "interference_mgf",
    "interference_pdf",
    "min_branches",
    "op_high_snr",
    "outage_probability",
    "output_cdf",
    "output_pdf",
    "required_terms",
    "truncation_bound",
]
