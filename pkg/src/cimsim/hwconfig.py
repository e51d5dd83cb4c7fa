"""Hardware description: structural counts, timing constants, power table.

Powers are milliwatts per active component; at the default 1 GHz clock one
busy cycle of a 1 mW component costs exactly 1 pJ.  The UCLM compute power
is an aggregate that already contains its eight column converters and row
drivers, so the energy ledger splits it into leaf classes to avoid double
counting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace


def _default_power():
    return {
        "global_buffer": 25.35,
        "shared_mem": 25.35,
        "bus": 6.0,
        "vfu": 1.7,
        "register_file": 1.14,
        "uclm_compute": 22.38,   # aggregate: array + S&H + S&A + ADC + writeback
        "uclm_lookup": 0.518,
        "dac": 0.0035,           # per converter
        "adc": 1.35,             # per converter
    }


@dataclass(frozen=True)
class HardwareConfig:
    # structure
    tiles: int = 128
    cores_per_tile: int = 8
    uclms_per_core: int = 16
    arrays_per_uclm: int = 8
    array_dim: int = 64
    adc_bits: int | None = 6
    dac_bits: int = 1
    adcs_per_array: int = 1
    dacs_per_array: int = 64
    alu_width: int = 64          # VFU lanes; 16/32/64 supported
    rf_bytes: int = 4096
    shared_mem_bytes: int = 262144
    gb_bytes: int = 262144
    bus_width_bits: int = 512
    clock_hz: float = 1.0e9

    # timing (cycles); values without a published source are knobs
    lookup_latency_cycles: int = 4
    lut_switch_cycles: int = 1
    rf_access_cycles: int = 1
    sm_access_cycles: int = 2
    gb_access_cycles: int = 2
    dram_latency_cycles: int = 100
    link_latency_cycles: int = 2
    mvm_overhead_cycles: int = 4     # S&A drain + output-buffer writeback
    dispatch_cycles: int = 1
    vfu_exp_cycles_per_elem: int = 22  # software series exp on the VFU
    deadlock_cycles: int = 10_000_000

    # softmax mapping
    softmax_chunk_max: int = 1024    # elements one core handles before fanning out
    lookup_uclms_per_core: int = 4   # UCLMs an attention core flips to lookup mode
    rf_vec_chunk: int = 512          # elements per RF-resident vector chunk

    power_mw: dict = field(default_factory=_default_power)

    def __post_init__(self):
        for name in ("tiles", "cores_per_tile", "uclms_per_core", "arrays_per_uclm",
                     "array_dim", "alu_width", "rf_bytes", "shared_mem_bytes",
                     "gb_bytes", "bus_width_bits"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        missing = set(_default_power()) - set(self.power_mw)
        if missing:
            raise ValueError(f"power table missing components: {sorted(missing)}")

    # derived ------------------------------------------------------------

    @property
    def bus_bytes(self):
        return self.bus_width_bits // 8

    @property
    def mvm_cycles(self):
        """Bit-serial MVM service time: input bits x column conversions."""
        serial = 8 * (self.array_dim // self.adcs_per_array)
        return serial + self.mvm_overhead_cycles

    @property
    def adc_conversions_per_mvm(self):
        return 8 * (self.array_dim // self.adcs_per_array) * self.arrays_per_uclm

    @property
    def uclm_compute_residual_mw(self):
        """Aggregate UCLM compute power minus its ADC and DAC shares."""
        p = self.power_mw
        leaf = (self.arrays_per_uclm * self.adcs_per_array * p["adc"]
                + self.arrays_per_uclm * self.dacs_per_array * p["dac"])
        return max(0.0, p["uclm_compute"] - leaf)

    def cycles_to_seconds(self, cycles):
        return cycles / self.clock_hz

    def pj(self, component, cycles, count=1):
        """Energy of `count` components of a class busy for `cycles`."""
        if component == "uclm_compute":
            mw = self.uclm_compute_residual_mw
        else:
            try:
                mw = self.power_mw[component]
            except KeyError:
                raise KeyError(f"unknown component class {component!r}") from None
        return mw * count * (cycles * 1e9 / self.clock_hz)

    def with_overrides(self, **kw):
        return replace(self, **kw)
