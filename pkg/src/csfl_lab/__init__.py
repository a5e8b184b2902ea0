"""Split-federated-learning lab.

Three-way model splits (weak clients / local aggregators / server),
closed-form per-round delay and communication-overhead models, an
exhaustive split planner, and a deterministic desk-scale training engine
running the sfl, locsplitfed, and csfl protocols side by side.
"""

from .data import Dataset, Shard, load_idx, partition_iid, partition_noniid, save_idx, synth_blobs
from .delay import (
    DelayBreakdown,
    phase0_delay,
    phase1_delay,
    phase2_delay,
    phase3_delay,
    round_delay,
    round_delay_locsplitfed,
    round_delay_sfl,
)
from .engine import (
    AuxHead,
    Batch,
    NetSpec,
    ParamSet,
    average_params,
    forward,
    global_loss_and_grads,
    init_aux_head,
    init_params,
    local_loss_and_grads,
    sgd_step,
)
from .overhead import (
    OverheadReport,
    Scheme,
    overhead_csfl,
    overhead_locsplitfed,
    overhead_splitfed,
)
from .planner import PlanCandidate, PlanResult, enumerate_splits, plan
from .profiles import (
    ClientSpec,
    ConfigError,
    FleetSpec,
    LayerProfile,
    ModelProfile,
    Role,
    SERVER_ID,
    SplitConfig,
    profile_from_dims,
    segment_bits,
    segment_flops,
    validate_fleet,
)
from .protocol import (
    RoundTrace,
    SchemeConfig,
    TrainState,
    evaluate_accuracy,
    make_state,
    run_round_csfl,
    run_round_locsplitfed,
    run_round_sfl,
    simulate,
)

__version__ = "0.1.0"
