# Don't manually change, let poetry-dynamic-versioning handle it.
__version__ = "0.0.0"


from .capacity import CapacityOptions, CapacityResult, capacity_curve
from .channel import Channel, Distribution, JointDistribution, TiltParams, load_channel
from .errors import (
    BudgetExceededError,
    CertificateError,
    ChannelSpecError,
    ConvergenceError,
    ConvexpError,
    DimensionError,
    InfeasibleError,
    PreconditionError,
)
from .exponent_dk import DkReport, MirrorOptions, g_dk, minimize_dk
from .exponent_oh import ExponentReport, g_ar_point, g_ar_sup, g_oh_point, g_oh_sup
from .oracle import Codebook, OracleOptions, OracleResult, brute_force_gn
from .search import SearchOptions
from .simplex import AscentOptions

__all__ = [
    "Channel", "Distribution", "JointDistribution", "TiltParams", "load_channel",
    "CapacityOptions", "CapacityResult", "capacity_curve",
    "ExponentReport", "g_oh_point", "g_oh_sup", "g_ar_point", "g_ar_sup",
    "DkReport", "MirrorOptions", "g_dk", "minimize_dk",
    "Codebook", "OracleOptions", "OracleResult", "brute_force_gn",
    "SearchOptions", "AscentOptions",
    "ConvexpError", "ChannelSpecError", "DimensionError", "InfeasibleError", "BudgetExceededError",
    "PreconditionError", "ConvergenceError", "CertificateError",
]
