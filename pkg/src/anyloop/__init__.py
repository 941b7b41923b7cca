"""Simulation toolkit for control loops over noisy channels.

The library has three layers:

* plant / channel primitives (`plant`, `channels`, `exponents`, `rng`),
* coding and stabilization constructions (`cantor`, `reduction`,
  `retransmit`, `stabilizer`, `lattice`, `dance`, `awgn`),
* a Monte Carlo harness (`estimators`, `reliability`, `scenarios`,
  `config`, `cli`).
"""

from anyloop.plant import (
    PlantParams,
    PlantState,
    DisturbanceSource,
    StabilityTarget,
    step_plant,
    sample_continuous,
    block_time,
    almost_sure_transform,
)
from anyloop.channels import (
    DmcSpec,
    ErasureSpec,
    AwgnSpec,
    ChannelSession,
    ERASURE,
    channel_step,
    feedback_view,
)
from anyloop.exponents import random_coding_exponent, dmc_capacity, gallager_e0
from anyloop.cantor import (
    BitStream,
    CantorCodecParams,
    cantor_encode_step,
    cantor_state,
    extract_bits,
)
from anyloop.reliability import (
    AnytimeEstimateTable,
    ReliabilityReport,
    estimate_reliability,
)
from anyloop.reduction import reduction_build
from anyloop.stabilizer import (
    VirtualObserverState,
    ControllerInternalModels,
    NoiseBounds,
    observer_emit,
    controller_act,
    closed_loop_run,
    overlapping_bin_quantize,
)
from anyloop.lattice import (
    LatticeQuantizer,
    Trellis,
    lattice_assign,
    trellis_extend,
    trellis_control,
    run_trellis_loop,
)
from anyloop.dance import (
    DanceConfig,
    dance_encode_control,
    dance_decode_output,
    run_dance_loop,
)
from anyloop.awgn import (
    AwgnSchemeParams,
    awgn_choose_params,
    awgn_loop_step,
    awgn_anytime_run,
)
from anyloop.estimators import estimate_moment, estimate_tail
from anyloop.scenarios import ScenarioConfig, StabilityReport, run_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
