"""squeezr - a virtual squeezed-light laboratory.

squeezr models a below-threshold optical parametric amplifier, simulates
the locked apparatus around it with its drifts and lock losses, and runs
the supervisor that relocks it and compensates squeezing-angle drift over
long simulated campaigns.

Example:
    >>> from squeezr import config_from_mode, run_campaign
    >>> result = run_campaign(config_from_mode("auto-relock", duration_s=3600))
    >>> result.duty.lock_fraction
"""

import json
from pathlib import Path

__version__ = json.loads((Path(__file__).parent / "package.json").read_text())[
    "version"
]

from squeezr.autolock import (
    Supervisor,
    SupervisorConfig,
    SupervisorMode,
    compensate_drift_step,
    find_double_resonance,
    run_relock_sequence,
)
from squeezr.campaign import CampaignResult, run_campaign, run_seeds
from squeezr.characterize import (
    DutyCycleReport,
    FitResult,
    PumpSweepPoint,
    correct_electronic_noise,
    duty_cycle_report,
    fit_pump_sweep,
    summarize_trace,
)
from squeezr.config import CampaignConfig, config_from_mode, load_config
from squeezr.locks import ChannelId, LockChain, LockStatus
from squeezr.model import (
    ModelParams,
    OperatingPoint,
    QuadraturePair,
    apply_phase_jitter,
    cavity_decay_rate,
    consistency_report,
    quadrature_variance,
)
from squeezr.plant import Plant, PlantConfig, init_plant
from squeezr.trace import EventLog, Trace, TraceRecord
from squeezr.vcurve import fit_v_curve

__all__ = [
    "__version__",
    "CampaignConfig",
    "CampaignResult",
    "ChannelId",
    "DutyCycleReport",
    "EventLog",
    "FitResult",
    "LockChain",
    "LockStatus",
    "ModelParams",
    "OperatingPoint",
    "Plant",
    "PlantConfig",
    "PumpSweepPoint",
    "QuadraturePair",
    "Supervisor",
    "SupervisorConfig",
    "SupervisorMode",
    "Trace",
    "TraceRecord",
    "apply_phase_jitter",
    "cavity_decay_rate",
    "compensate_drift_step",
    "config_from_mode",
    "consistency_report",
    "correct_electronic_noise",
    "duty_cycle_report",
    "find_double_resonance",
    "fit_pump_sweep",
    "fit_v_curve",
    "init_plant",
    "load_config",
    "quadrature_variance",
    "run_campaign",
    "run_relock_sequence",
    "run_seeds",
    "summarize_trace",
]
