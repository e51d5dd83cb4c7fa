"""Compute-in-memory transformer accelerator: compiler, simulator, experiments."""

from .hwconfig import HardwareConfig
from .numerics import (
    ExpDecomposition,
    ExpLut,
    FixedTensor,
    ResidualPolicy,
    exp_decompose,
    gelu_ref,
    layernorm_ref,
    lut_exp,
    mvm_bit_serial,
    mvm_exact,
    softmax_stable,
)
from .workload import OpCount, TransformerConfig, count_ops, preset_config

__version__ = "0.1.0"

__all__ = [
    "ExpDecomposition",
    "ExpLut",
    "FixedTensor",
    "HardwareConfig",
    "OpCount",
    "ResidualPolicy",
    "TransformerConfig",
    "count_ops",
    "exp_decompose",
    "gelu_ref",
    "layernorm_ref",
    "lut_exp",
    "mvm_bit_serial",
    "mvm_exact",
    "preset_config",
    "softmax_stable",
    "__version__",
]
