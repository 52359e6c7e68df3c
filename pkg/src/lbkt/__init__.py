"""Knowledge tracing through natural-language knowledge summaries.

An encoder model reads a student's question-answer history and writes a
token-budgeted summary of what the student knows; a frozen decoder predicts
future correctness from that summary alone. The package provides the
misconception-based student simulator, session filtering for real response
logs, completion backends (live, replay, oracle), the encode/decode pipeline,
group-relative policy training with a multi-term reward, a Bayesian knowledge
tracing baseline, an evaluation harness, and an HTTP steering service.
"""

from .bkt import BktParams, fit_em, posterior_update, predict_correct_prob, sequence_log_likelihood
from .gateway import (
    BackendSpec,
    CompletionRequest,
    CompletionResponse,
    complete,
    count_tokens,
    oracle_decode,
    truncate_to_tokens,
)
from .grpo import (
    GrpoConfig,
    ToyPolicy,
    ToyStudent,
    ToyTask,
    finetune_via_gateway,
    group_advantages,
    grpo_gradient,
    loo_advantages,
    train_toy_encoder,
)
from .harness import (
    ExperimentConfig,
    MetricsReport,
    bottleneck_sweep,
    compute_sem,
    encoder_decoder_grid,
    run_experiment,
    run_from_manifest,
    steering_ablation_missing_construct,
    stratify_by_misconceptions,
)
from .ingest import (
    RawRecord,
    SessionFilterConfig,
    filter_single_session,
    load_dataset,
    parse_records,
    save_dataset,
)
from .pipeline import (
    Bottleneck,
    PredictionSet,
    Split,
    decode,
    direct_predict,
    encode,
    parse_yes_no,
    sample_split,
)
from .rewards import RewardWeights, accuracy, omega, phi_reward
from .students import (
    Dataset,
    Interaction,
    Misconception,
    MisconceptionKind,
    Operator,
    Question,
    SimConfig,
    StudentProfile,
    Trajectory,
    generate_dataset,
    generate_profile,
    generate_question_bank,
    simulate_answer,
)
from .summary import parse_summary, render_summary

__version__ = "0.1.0"
