"""Lévy bridges of deterministic and random length."""
from __future__ import annotations

from .bridge_fixed import BridgeSpec, bridge_fdd, bridge_transition_density, sample_bridge_path, sample_bridge_paths
from .bridge_random import (
    MixedTransition,
    RandomBridge,
    TauPosterior,
    conditional_expectation,
    joint_conditional,
    phi,
    sample_path,
    sample_paths,
    tau_posterior_multi,
    tau_posterior_single,
    transition,
)
from .density import DensityTable, InversionPlan, convolve, density_grid, density_point, mass_at_zero
from .errors import *  # noqa: F403
from .models import CharacteristicExponent, LengthLaw, cdf, evaluate, integrate, parse_model, sample_tau
from .paths import PathBatch, PathSample

__version__ = "0.1.0"
