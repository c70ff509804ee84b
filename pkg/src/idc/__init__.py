"""Evidence-based memory-bank classifier for unsupervised domain adaptation.

The classifier keeps one key-value memory bank per class, filled with
encoder features of source samples and their learnable representative
scores. A target sample is classified by reading each bank: its feature is
matched against the stored keys and the top matches' scores, weighted by
similarity, become the class score. The stored matches double as the
explanation for the decision, support rejecting low-evidence predictions,
and rank source samples for data selection.
"""

from .data import (
    Dataset,
    SampleRecord,
    SyntheticShiftSpec,
    default_benchmark_spec,
    generate,
    load_embeddings,
    load_model,
    save_embeddings,
    save_model,
)
from .errors import IdcError
from .inference import (
    ExplainReport,
    Prediction,
    RejectionCurve,
    RejectionPoint,
    evaluate,
    explain,
    predict,
    rejection_curve,
)
from .memory import (
    EvidenceItem,
    MemoryBank,
    MemoryBankSet,
    MemorySlot,
    ReadResult,
    WriteOutcome,
    idc_loss_and_value_grads,
    most_confusing_negative,
)
from .selection import (
    ImportanceTable,
    SelectionPlan,
    apply_strategy,
    importance_adv,
    importance_idc,
    importance_in,
    importance_similarity,
    random_importance,
    retrain_on_selection,
    selection_sweep,
)
from .training import LossRecord, TrainConfig, TrainedModel, Trainer, train

__all__ = [
    "Dataset",
    "EvidenceItem",
    "ExplainReport",
    "IdcError",
    "ImportanceTable",
    "LossRecord",
    "MemoryBank",
    "MemoryBankSet",
    "MemorySlot",
    "Prediction",
    "ReadResult",
    "RejectionCurve",
    "RejectionPoint",
    "SampleRecord",
    "SelectionPlan",
    "SyntheticShiftSpec",
    "TrainConfig",
    "TrainedModel",
    "Trainer",
    "WriteOutcome",
    "apply_strategy",
    "default_benchmark_spec",
    "evaluate",
    "explain",
    "generate",
    "idc_loss_and_value_grads",
    "importance_adv",
    "importance_idc",
    "importance_in",
    "importance_similarity",
    "load_embeddings",
    "load_model",
    "most_confusing_negative",
    "predict",
    "random_importance",
    "rejection_curve",
    "retrain_on_selection",
    "save_embeddings",
    "save_model",
    "selection_sweep",
    "train",
]
