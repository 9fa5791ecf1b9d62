"""Sparse task-vector fine-tuning, storage, and merging toolkit."""

from .adapter import (
    AdapterRecord,
    CompressionReport,
    SparseAdapter,
    apply_adapter,
    compression_report,
    decode,
    encode,
    load_adapter,
    save_adapter,
)
from .errors import (
    AlignmentError,
    CapacityError,
    ConfigError,
    DigestMismatchError,
    DivergenceError,
    FormatError,
    HarnessError,
    LotaError,
    NonFiniteError,
)
from .merging import (
    GridSearchResult,
    MergeEntry,
    MergeSpec,
    merge_grid_search,
    merge_lota,
    run_merge_spec,
    task_arithmetic_merge,
    ties_merge,
)
from .models import Dataset, ForwardBackward, ToyModel, concat_datasets, forward_backward
from .params import (
    MapDigest,
    ParameterMap,
    digest,
    linear_combine,
    load_checkpoint,
    save_checkpoint,
    zeros_like,
)
from .sparsity import (
    OverlapStats,
    SparsityMask,
    TaskVector,
    all_false_mask,
    all_true_mask,
    apply_mask,
    compute_task_vector,
    load_mask,
    mask_complement,
    mask_union,
    overlap_stats,
    random_mask,
    save_mask,
    sparsify,
    support_mask,
)
from .training import (
    IterativeLotaResult,
    LotaResult,
    LottoResult,
    OptimizerState,
    RunRecord,
    TrainConfig,
    clip_group_norm,
    iterative_lota,
    lota,
    lotto,
    mixed_data_fft,
    rmsprop_step,
    train,
)

__version__ = "0.1.0"
