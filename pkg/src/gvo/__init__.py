"""gvo: analytical GPU memory-volume and performance estimation.

Predicts, without executing code, the data volumes a kernel moves at
every level of the memory hierarchy and the resulting throughput under a
four-limiter bottleneck model, from address expressions, the launch
configuration and a machine descriptor alone.
"""

from .expr import (
    AddressExpr,
    AddressOverflowError,
    BaseRef,
    BinOp,
    BlockDimRef,
    CoordRef,
    ExprError,
    ExprSyntaxError,
    IntConstant,
    ThreadCoord,
    evaluate,
    evaluate_bulk,
    parse,
    render,
)
from .fit import (
    FitResult,
    GompertzParams,
    RatioObservation,
    calibrate,
    default_fit_params,
    derive_observations,
    zero_fit_params,
)
from .fit import evaluate as evaluate_ratio
from .footprint import (
    CollaborativeGroup,
    FootprintResult,
    Wave,
    block_group,
    build_waves,
    blocks_per_wave,
    grid_iteration,
    naive_footprint_oracle,
    representative_blocks,
    representative_wave_pairs,
    wave_group,
    wave_overlap,
)
from .kernels import (
    Access,
    Field,
    KernelDescriptor,
    KernelError,
    KernelFamily,
    LaunchConfig,
    SweepConfig,
    enumerate_sweep,
    generate_four_point_2d,
    generate_lbm_d3q15,
    generate_star_stencil,
    kernel_from_dict,
    kernel_to_dict,
    load_kernel_spec,
    save_kernel_spec,
)
from .machine import MachineDescriptor, MachineError, load_machine, save_machine, v100_preset
from .perf import PerfPrediction, SweepRow, binding_limiter, evaluate_kernel, predict, rank_sweep
from .volumes import (
    L1CycleEstimate,
    LevelKindVolumes,
    VolumeBreakdown,
    dram_to_l2_volume,
    estimate_volumes,
    l1_register_cycles,
    l2_to_l1_volume,
    sample_block_stats,
    sample_wave_stats,
)

__version__ = "0.1.0"
