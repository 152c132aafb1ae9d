"""Post-processing groupwise-calibrated scores into fair hard decisions."""

from .errors import FairpostError, InfeasibleError, InputError
from .profiles import AccuracyProfile, ProfileFamily, base_rate, tv_distance

__version__ = "0.1.0"

__all__ = ["AccuracyProfile", "FairpostError", "InfeasibleError", "InputError",
           "ProfileFamily", "base_rate", "tv_distance", "__version__"]
