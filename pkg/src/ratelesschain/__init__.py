"""Rateless coded blockchain storage: raptor coding over grouped blocks,
churn-aware group sizing, and a deterministic network simulator."""

from .chain import (
    BlockHeader,
    BlockPool,
    BlockStore,
    ChainConfig,
    EnhancedBlockHeader,
    VerifyResult,
    confirmation_check,
    mine_enhanced_block,
    remine_decision,
    update_pool,
    verify_enhanced_block,
)
from .config import ConfigError, ScenarioConfig, load_config
from .degree import (
    DegreeDistribution,
    encoding_distribution,
    robust_soliton,
    shifted_distribution,
)
from .failure import (
    FailureTable,
    SizingInfeasibleError,
    SizingPolicy,
    build_failure_table,
    choose_group_size,
    estimate_failure,
    min_survivors_experiment,
)
from .gf import GF, field
from .lt import (
    CodedBlock,
    PeelResult,
    RaptorResult,
    lt_encode,
    peel_decode,
    raptor_decode,
    repair_from_edge,
)
from .metrics import EventLog, MetricsLedger, communication_metrics, storage_reduction
from .network import ChurnModel, Network, NodeState
from .precode import (
    GeneratorMatrix,
    build_systematic_generator,
    precode_decode,
    precode_encode,
)
from .simulation import RunResult, run_scenario
from .skellam import SkellamParams, skellam_pmf

__version__ = "0.1.0"
