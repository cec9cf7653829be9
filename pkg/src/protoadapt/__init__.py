"""Validation-free few-shot adaptation of frozen vision-language embeddings.

Zero-shot-initialized linear probing with temperature scaling and post-step
L2 projection, plus a class-adaptive constrained variant whose per-class
multipliers come from zero-shot confidence on the support set.
"""

from .core import (
    EmbeddingSet,
    OneHotBatch,
    PrototypeBank,
    cross_entropy,
    l2_normalize_rows,
    softmax_scores,
)
from .data import (
    SupportSet,
    SyntheticTaskSpec,
    generate_synthetic,
    load_container,
    load_prompts,
    sample_few_shot,
    save_container,
)
from .penalty import (
    PenaltyState,
    alm_outer_update,
    init_lambda_star,
    lambda_variants,
    penalty_gradient,
    penalty_value,
    phr,
    phr_derivative,
)
from .probe import (
    PenaltySpec,
    TrainConfig,
    TrainTrace,
    ce_gradient,
    cosine_lr,
    drift_norms,
    probe_forward,
    sgd_step,
    train_probe,
)
from .zeroshot import (
    PromptEmbeddings,
    build_text_prototypes,
    zero_shot_accuracy,
    zero_shot_predict,
)

__version__ = "0.1.0"
