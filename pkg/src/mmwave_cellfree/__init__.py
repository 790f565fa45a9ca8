"""Downlink power control for mmWave cell-free and user-centric massive MIMO."""
from .scenario import ConfigError, NetworkGeometry, ScenarioConfig, derive_noise_power, drop_realization, load_config
from .channel import array_response, los_probability, path_loss, synth_all_channels, synth_channel
from .protocol import (Association, EffectiveChannelSet, PrecoderSet, associate, effective_channels, generate_pilots,
                       hybrid_factorize, hybridize, ms_combiner, uplink_train, zf_precoders)
from .rate import GainTensor, PowerModel, effective_gains, gee, power_consumed, user_ase
from .optimizer import (ConvergenceTrace, OptimizerOptions, maximize_ase, maximize_gee,
                        project_box_simplex, uniform_allocation)

__version__ = "0.1.0"
