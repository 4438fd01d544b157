"""Near-optimal glimpse sequences for hard visual attention.

A self-contained finite image world with exact posterior and completion
oracles, an amortized posterior classifier, PCA-retrieval image
completion, a sequential experimental-design engine that annotates images
with greedy entropy-minimizing glimpse sequences, and a hard-attention
network whose training those sequences partially supervise.
"""

from .core import (
    ArtifactHashError,
    Categorical,
    ConfigError,
    EMPTY_HISTORY,
    GlimpseGrid,
    GlimpseHistory,
    GlimpseLocation,
    Image,
    InconsistentHistoryError,
    MaskedEmbedding,
    NumericError,
    SeededRng,
    StorageError,
    entropy,
    entropy_rows,
    footprint_mask,
    fovea,
    fovea_multi,
    history_from,
    masked_embedding,
)
from .optim import AdamState, adam_update
from .world import (
    DatasetItem,
    FiniteWorld,
    LabeledDataset,
    WorldConfig,
    WorldEntry,
    build_world,
    exact_completion,
    exact_posterior,
    load_dataset,
    load_world,
    sample_dataset,
    save_dataset,
    save_world,
    two_entry_pixel_world,
)
from .avp import (
    ExactPosteriorAvp,
    MaskedLinearAvp,
    avp_loss_and_grad,
    avp_train,
    avp_training_batch,
    avp_validation_xent,
    load_avp,
    save_avp,
)
from .completion import (
    AdaptiveSigmaResult,
    CompletionParams,
    CompletionSample,
    ExactCompleter,
    PcaBank,
    ProposalResult,
    RetrievalCompleter,
    adaptive_sigma_q,
    effective_sample_size,
    load_pca_bank,
    obs_indices,
    pca_fit,
    sample_images,
    sample_proposal,
    save_pca_bank,
    slice_reconstruct,
)
from .boed import (
    EpeMap,
    HeuristicSaliency,
    SupervisionRecord,
    annotate_sequence,
    epe_map,
    estimate_epe,
    export_heatmap,
    heuristic_saliency,
    load_records,
    make_supervision_set,
    read_heatmap_csv,
    save_records,
    select_location,
)
from .attention import (
    AttentionParams,
    EvalResult,
    Rollout,
    TrainConfig,
    evaluate,
    iterations_to_within,
    load_attention,
    loss_supervised,
    loss_unsupervised,
    rollout,
    rollout_batch,
    save_attention,
    train,
    write_metrics_csv,
)
from .storage import ArrayImageStore, BankImageStore, read_bank, write_bank

__version__ = "0.1.0"
