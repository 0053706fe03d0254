"""Cross-domain cold-start recommendation.

Pretrain an embedding model per domain, then learn an affine map that
carries source-domain user embeddings into the target space: either
meta-trained on simulated cold-start tasks (ranking objective) or fit by
embedding regression on overlapping users (MSE baseline). Evaluation ranks
the full target catalog for held-out overlap users.
"""
from .dataset import (
    ColdStartSplit,
    InteractionDataset,
    OverlapSet,
    OverlapUser,
    TrainingSample,
    find_overlap,
    load_interactions,
    sample_negatives,
    save_interactions,
    split_cold_start,
)
from .errors import ConfigError, DataError, DivergenceError, OracleError, SamplingError, TmcdrError
from .evaluate import (
    EvalReport,
    affine_embedder,
    auc_per_user,
    evaluate_cold_start,
    ndcg_at_k,
    rank_items,
    target_oracle_embedder,
)
from .mapping import MappingTrainResult, map_cold_user, train_mapping
from .meta import (
    MetaConfig,
    MetaTrainResult,
    TaskBatch,
    TaskGroup,
    cold_start_embed,
    init_meta_network,
    inner_update,
    maml_outer_gradient,
    meta_train,
    outer_gradient,
    phase_loss,
    sample_task_batch,
)
from .models import (
    BPR,
    LISTRANK_MF,
    MF,
    BaseModel,
    LossGradient,
    ModelKind,
    cml,
    loss_bpr,
    loss_cml,
    loss_listrank,
    loss_mf,
    project_unit_ball,
    sample_loss,
    score,
)
from .network import AffineMap, MappingNetwork, MetaNetwork, transform
from .optim import AdamState, FlatParams, adam_step, finite_diff_grad, hessian_vector_product, sgd_step
from .pretrain import PretrainConfig, PretrainResult, init_model, train_base_model
from .synth import SynthConfig, SyntheticWorld, generate_world

__version__ = "0.1.0"
