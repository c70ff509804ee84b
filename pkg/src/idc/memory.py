"""Per-class key-value-age memory banks.

Each class owns a fixed-capacity bank of slots. A slot stores a key (feature
vector of a source sample), a learnable scalar value (the sample's
representative score), an age counting touch events since the slot was last
selected by a read, and the originating sample id. Reading is pure; age
mutation (touch) and writing are explicit operations so callers control the
event order exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyBank,
    IndexOutOfRange,
    LabelOutOfRange,
    SingleClass,
    ZeroNormKey,
)
from .mathops import batch_normalized_similarity, top_k_indices


@dataclass
class MemorySlot:
    """Snapshot of one slot; key is a copy, safe to hold."""

    key: np.ndarray
    value: float
    age: int
    provenance: str
    write_seq: int  # global insert counter, larger = written later


@dataclass
class EvidenceItem:
    """One selected slot's contribution to a read score."""

    class_id: int
    slot_index: int
    provenance: str
    similarity: float
    value: float

    @property
    def contribution(self) -> float:
        return self.value * self.similarity


@dataclass
class ReadResult:
    """Outcome of reading one bank; evidence sorted by descending similarity."""

    class_id: int
    score: float
    evidence: list

    @property
    def slot_indices(self):
        return [item.slot_index for item in self.evidence]

    @property
    def similarities(self):
        return np.array([item.similarity for item in self.evidence])

    @property
    def values(self):
        return np.array([item.value for item in self.evidence])

    @property
    def k(self) -> int:
        return len(self.evidence)


@dataclass
class WriteOutcome:
    slot_index: int
    evicted: bool
    evicted_age: int | None = None
    evicted_provenance: str | None = None


class MemoryBank:
    """Fixed-capacity slot store for a single class.

    Slot data lives in preallocated arrays; only the first `size` entries are
    meaningful. Key norms are cached at write time since keys never change
    in place.
    """

    def __init__(self, class_id: int, capacity: int, feature_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        self.class_id = int(class_id)
        self.capacity = int(capacity)
        self.feature_dim = int(feature_dim)
        self.keys = np.zeros((capacity, feature_dim))
        self.key_norms = np.zeros(capacity)
        self.values = np.zeros(capacity)
        self.ages = np.zeros(capacity, dtype=np.int64)
        self.provenance = [None] * capacity
        self.write_seq = np.zeros(capacity, dtype=np.int64)
        # Per-slot Adam state for the value updates; reset when overwritten.
        self.adam_m = np.zeros(capacity)
        self.adam_v = np.zeros(capacity)
        self.adam_t = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self._write_counter = 0

    def slot(self, index: int) -> MemorySlot:
        self._check_indices([index])
        return MemorySlot(
            key=self.keys[index].copy(),
            value=float(self.values[index]),
            age=int(self.ages[index]),
            provenance=self.provenance[index],
            write_seq=int(self.write_seq[index]),
        )

    def slots(self):
        return [self.slot(i) for i in range(self.size)]

    def _check_indices(self, indices):
        for i in indices:
            if not 0 <= int(i) < self.size:
                raise IndexOutOfRange(
                    f"slot index {i} outside occupied range [0, {self.size})"
                )

    def read(self, query, n_k: int) -> ReadResult:
        """Score a query against this bank without mutating anything.

        Similarity is (cosine+1)/2 over every occupied slot; the top
        k' = min(n_k, size) slots by similarity (ties by ascending index)
        form the evidence, and the score is the mean of value*similarity
        over the evidence.
        """
        if self.size == 0:
            raise EmptyBank(self.class_id)
        if n_k < 1:
            raise ValueError("n_k must be >= 1")
        sims = batch_normalized_similarity(
            self.keys[: self.size], self.key_norms[: self.size], query
        )
        picked = top_k_indices(sims, n_k)
        evidence = [
            EvidenceItem(
                class_id=self.class_id,
                slot_index=int(i),
                provenance=self.provenance[i],
                similarity=float(sims[i]),
                value=float(self.values[i]),
            )
            for i in picked
        ]
        score = float(np.mean([item.contribution for item in evidence]))
        return ReadResult(class_id=self.class_id, score=score, evidence=evidence)

    def touch(self, selected_indices) -> None:
        """Reset the ages of selected slots to 0; age every other slot by 1."""
        self._check_indices(selected_indices)
        self.ages[: self.size] += 1
        for i in selected_indices:
            self.ages[i] = 0

    def write(self, key, value: float, provenance) -> WriteOutcome:
        """Insert a pair, evicting the oldest-age slot when full.

        Ties on age break by ascending slot index. The written slot starts
        at age 0 with fresh value-optimizer state.
        """
        key = np.asarray(key, dtype=np.float64)
        if key.ndim != 1 or key.shape[0] != self.feature_dim:
            raise DimensionMismatch(
                f"key shape {key.shape} does not match feature_dim {self.feature_dim}"
            )
        norm = float(np.linalg.norm(key))
        if norm == 0.0:
            raise ZeroNormKey("cannot store a zero-norm key")
        if self.size < self.capacity:
            index = self.size
            self.size += 1
            outcome = WriteOutcome(slot_index=index, evicted=False)
        else:
            index = int(np.argmax(self.ages[: self.size]))
            outcome = WriteOutcome(
                slot_index=index,
                evicted=True,
                evicted_age=int(self.ages[index]),
                evicted_provenance=self.provenance[index],
            )
        self.keys[index] = key
        self.key_norms[index] = norm
        self.values[index] = float(value)
        self.ages[index] = 0
        self.provenance[index] = provenance
        self.write_seq[index] = self._write_counter
        self._write_counter += 1
        self.adam_m[index] = 0.0
        self.adam_v[index] = 0.0
        self.adam_t[index] = 0
        return outcome

    def adam_step_values(
        self, indices, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8
    ) -> None:
        """One Adam update per listed slot value, using that slot's own state."""
        self._check_indices(indices)
        if len(indices) != len(grads):
            raise ValueError("indices and grads must have equal length")
        for i, g in zip(indices, grads):
            t = int(self.adam_t[i]) + 1
            m = beta1 * self.adam_m[i] + (1.0 - beta1) * g
            v = beta2 * self.adam_v[i] + (1.0 - beta2) * g * g
            m_hat = m / (1.0 - beta1**t)
            v_hat = v / (1.0 - beta2**t)
            self.values[i] -= lr * m_hat / (np.sqrt(v_hat) + eps)
            self.adam_m[i] = m
            self.adam_v[i] = v
            self.adam_t[i] = t


class MemoryBankSet:
    """One bank per class plus the shared read width n_k."""

    def __init__(self, n_classes: int, capacity: int, feature_dim: int, read_top_k: int):
        if n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if read_top_k < 1:
            raise ValueError("read_top_k must be >= 1")
        self.read_top_k = int(read_top_k)
        self.banks = [MemoryBank(c, capacity, feature_dim) for c in range(n_classes)]

    @property
    def n_classes(self) -> int:
        return len(self.banks)

    @property
    def feature_dim(self) -> int:
        return self.banks[0].feature_dim

    @property
    def capacity(self) -> int:
        return self.banks[0].capacity

    def bank(self, class_id: int) -> MemoryBank:
        if not 0 <= int(class_id) < len(self.banks):
            raise LabelOutOfRange(
                f"class {class_id} outside [0, {len(self.banks)})"
            )
        return self.banks[int(class_id)]

    def read_all(self, query, on_empty: str = "error"):
        """Read every bank with the configured n_k.

        `on_empty` is "error" (raise EmptyBank) or "skip" (None placeholder
        in the returned list).
        """
        if on_empty not in ("error", "skip"):
            raise ValueError("on_empty must be 'error' or 'skip'")
        results = []
        for bank in self.banks:
            if bank.size == 0:
                if on_empty == "error":
                    raise EmptyBank(bank.class_id)
                results.append(None)
            else:
                results.append(bank.read(query, self.read_top_k))
        return results

    def refresh_with_target(self, target_query) -> None:
        """Age tick driven by one target sample.

        Every non-empty bank is read with n_k and the selected slots are
        touched; keys, values, and sizes are untouched. Empty banks are
        skipped.
        """
        for bank in self.banks:
            if bank.size == 0:
                continue
            result = bank.read(target_query, self.read_top_k)
            bank.touch(result.slot_indices)


def most_confusing_negative(fc_probs, true_label: int) -> int:
    """Class with the highest probability other than the true label.

    Ties break by ascending class index.
    """
    probs = np.asarray(fc_probs, dtype=np.float64)
    if probs.ndim != 1:
        raise DimensionMismatch("fc_probs must be a vector")
    if probs.shape[0] < 2:
        raise SingleClass("need at least two classes to pick a negative")
    if not 0 <= int(true_label) < probs.shape[0]:
        raise LabelOutOfRange(
            f"label {true_label} outside [0, {probs.shape[0]})"
        )
    masked = probs.copy()
    masked[int(true_label)] = -np.inf
    return int(np.argmax(masked))


def idc_loss_and_value_grads(pos_read: ReadResult, neg_read: ReadResult):
    """Squared-error evidence loss and its per-slot value gradients.

    loss = (P_pos - 1)^2 + P_neg^2 where each P is a read score. Since
    P = (1/k') sum v_i s_i with keys and query held constant, the gradient
    w.r.t. a selected value is 2(P_pos - 1) s_i / k' in the positive bank
    and 2 P_neg s_i / k' in the negative bank; unselected slots get zero.

    Returns (loss, pos_value_grads, neg_value_grads) with the gradient
    arrays aligned to each read's evidence list.
    """
    p_pos = pos_read.score
    p_neg = neg_read.score
    loss = (p_pos - 1.0) ** 2 + p_neg**2
    pos_grads = 2.0 * (p_pos - 1.0) * pos_read.similarities / pos_read.k
    neg_grads = 2.0 * p_neg * neg_read.similarities / neg_read.k
    return float(loss), pos_grads, neg_grads
