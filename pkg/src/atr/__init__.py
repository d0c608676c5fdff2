"""Simulation and monitoring toolkit for anti-tamper radio (ATR) enclosures.

The enclosure's wireless channel is modelled as a tapped delay line. Frontends
turn it into magnitude responses. A monitor compares each response against a
provisioned reference using the mean normalized deviation (MND) over a stable
subset of the spectrum.
"""

from .acquisition import Frontend, Response, UwbConfig, VnaConfig, acquire_uwb, acquire_vna, block_average
from .channel import (
    DriftState,
    EnclosureProfile,
    FrequencyGrid,
    Loading,
    NoiseParams,
    PerturbationEvent,
    PerturbationKind,
    TapSet,
    apply_drift,
    apply_perturbation,
    power_delay_profile,
    rms_delay_spread,
    synth_enclosure,
    taps_to_frequency_response,
)
from .detection import SelectionMask, alpha_profile, build_mask, channel_distance, mnd
from .errors import (
    ArgumentError,
    ATRError,
    ConfigurationError,
    DegenerateInputError,
    StateError,
    TraceFormatError,
    TraceVersionError,
)
from .monitor import Monitor, MonitorConfig, Phase, Verdict, new_monitor

__version__ = "0.1.0"
