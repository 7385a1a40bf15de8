"""execrl: sandboxed unit-test grading of generated programs, turned into
multi-granularity rewards and REINFORCE losses, with an online sample
buffer and a desk-scale training loop that exercises the whole path."""

from .buffer import BufferClient, BufferServer, OnlineBuffer
from .classify import classify, error_distribution, locate_span
from .losses import BaselineRewards, rl_loss, sl_loss, total_loss
from .metrics import pass_at_k, pass_at_k_naive
from .model import (
    BufferEntry,
    CandidateProgram,
    Category,
    Comparison,
    Feedback,
    LossBreakdown,
    Problem,
    RewardBundle,
    SubError,
    TestCase,
    Verdict,
    validate,
)
from .policy import ToyPolicy
from .rewards import (
    BaselineRegister,
    adaptive_reward,
    bundle,
    coarse_reward,
    fine_reward,
    update_baseline,
)
from .sandbox import (
    ExecutionLimits,
    OutcomeStatus,
    RawTestOutcome,
    StructuredError,
    execute,
    execute_batch,
)
from .tokens import candidate_from_source, tokenize
from .trainer import ExperimentConfig, load_toy_suite, run_experiment, train_step

__version__ = "0.1.0"
