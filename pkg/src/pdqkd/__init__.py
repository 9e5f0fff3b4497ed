"""Passive decoy-state BB84 key rates with a heralded PDC source and a time-multiplexed detector."""
from .channel import ChannelModel
from .estimation import EstimationMode
from .optimize import (RatePoint, intercept_resend_limit, max_secure_distance, optimize_chi,
                       sweep)
from .photon_stats import PhotonDistribution, SourceKind, SourceSpec, make_source
from .pipeline import RateContext, monte_carlo_rate
from .tmd import InversionMethod, TMDModel

__all__ = ["ChannelModel", "EstimationMode", "InversionMethod", "PhotonDistribution",
           "RateContext", "RatePoint", "SourceKind", "SourceSpec", "TMDModel",
           "intercept_resend_limit", "make_source", "max_secure_distance", "monte_carlo_rate",
           "optimize_chi", "sweep"]
