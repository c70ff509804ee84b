"""Discriminative source-sample selection and retraining sweeps.

An importance table scores every source sample for how useful it should be
for adapting to the target domain. A strategy turns the table into a fixed-
size subset: S takes the global top scorers, P preserves the source class
proportions, M guarantees every class a nearly even share before topping up
globally. Retraining runs the standard training loop on the chosen subset.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyInput, EmptyTargetSet, ZeroNormVector
from .inference import evaluate, snap_floor
from .seeding import rng_stream
from .training import train

STRATEGIES = ("S", "P", "M")
METHODS = ("random", "in", "adv", "idc")


@dataclass
class ImportanceTable:
    """Per source sample: id, class label, and an importance score."""

    method: str
    ids: list
    labels: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not (len(self.ids) == len(self.labels) == len(self.scores)):
            raise ValueError("ids, labels, and scores must align")
        if len(self.ids) == 0:
            raise EmptyInput("importance table needs at least one source sample")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("importance scores must be finite")


@dataclass
class SelectionPlan:
    method: str
    strategy: str
    ratio: float
    selected_ids: list
    # id -> "class" (won a per-class slot) or "global" (won a global slot)
    selected_by: dict
    per_class_counts: dict

    def summary(self) -> dict:
        return {
            "method": self.method,
            "strategy": self.strategy,
            "ratio": self.ratio,
            "n_selected": len(self.selected_ids),
            "per_class_counts": {
                str(c): n for c, n in sorted(self.per_class_counts.items())
            },
        }


def _mean_similarity_to_targets(source_features, target_features) -> np.ndarray:
    """Per source row, the mean normalized similarity over all target rows."""
    src = np.asarray(source_features, dtype=np.float64)
    tgt = np.asarray(target_features, dtype=np.float64)
    if src.ndim != 2 or len(src) == 0:
        raise EmptyInput("need at least one source feature row")
    if tgt.ndim != 2 or len(tgt) == 0:
        raise EmptyTargetSet("need at least one target feature row")
    src_norms = np.linalg.norm(src, axis=1)
    tgt_norms = np.linalg.norm(tgt, axis=1)
    if np.any(src_norms == 0.0) or np.any(tgt_norms == 0.0):
        raise ZeroNormVector("similarity is undefined for zero-norm vectors")
    cos = (src @ tgt.T) / np.outer(src_norms, tgt_norms)
    sims = np.clip((cos + 1.0) * 0.5, 0.0, 1.0)
    return sims.mean(axis=1)


def importance_similarity(source_features, target_features, ids, labels,
                          method: str = "in") -> ImportanceTable:
    """Importance = mean feature-space similarity to the target set.

    Used with raw input features ("in") or adapted encoder features ("adv").
    """
    scores = _mean_similarity_to_targets(source_features, target_features)
    return ImportanceTable(method=method, ids=list(ids), labels=labels,
                           scores=scores)


def importance_in(dataset) -> ImportanceTable:
    return importance_similarity(
        dataset.source_features(), dataset.target_features(),
        dataset.source_ids(), dataset.source_labels(), method="in",
    )


def importance_adv(model, dataset) -> ImportanceTable:
    return importance_similarity(
        model.encode(dataset.source_features()),
        model.encode(dataset.target_features()),
        dataset.source_ids(), dataset.source_labels(), method="adv",
    )


def random_importance(ids, labels, seed: int) -> ImportanceTable:
    """Seeded uniform scores; turns every strategy into a random draw."""
    rng = rng_stream(seed, "selection")
    return ImportanceTable(
        method="random",
        ids=list(ids),
        labels=labels,
        scores=rng.random(len(list(ids))),
    )


def _representative_scores(model, dataset, encoded_sources) -> np.ndarray:
    """Per source sample, the trained representative score.

    The score is the value of the most recently written bank slot whose
    provenance matches the sample id; samples without a surviving slot fall
    back to reading their class bank, i.e. the bank's own estimate of them.
    """
    ids = dataset.source_ids()
    labels = dataset.source_labels()
    latest = {}
    for bank in model.banks.banks:
        for i in range(bank.size):
            key = (bank.class_id, bank.provenance[i])
            seq = int(bank.write_seq[i])
            if key not in latest or seq > latest[key][0]:
                latest[key] = (seq, float(bank.values[i]))
    values = np.empty(len(ids))
    for i, (sample_id, label) in enumerate(zip(ids, labels)):
        hit = latest.get((int(label), sample_id))
        if hit is not None:
            values[i] = hit[1]
        else:
            bank = model.banks.bank(int(label))
            values[i] = bank.read(encoded_sources[i], model.banks.read_top_k).score
    return values


def importance_idc(model, dataset) -> ImportanceTable:
    """Representative score times mean similarity, in adapted feature space."""
    encoded_src = model.encode(dataset.source_features())
    encoded_tgt = model.encode(dataset.target_features())
    mean_sims = _mean_similarity_to_targets(encoded_src, encoded_tgt)
    values = _representative_scores(model, dataset, encoded_src)
    return ImportanceTable(
        method="idc",
        ids=dataset.source_ids(),
        labels=dataset.source_labels(),
        scores=values * mean_sims,
    )


def _top_by_score(table, candidate_rows, count):
    """Highest-importance rows among candidates; ties by ascending row."""
    if count <= 0:
        return []
    rows = np.asarray(candidate_rows, dtype=np.int64)
    order = np.argsort(-table.scores[rows], kind="stable")
    return [int(r) for r in rows[order[:count]]]


def _largest_remainder_quotas(class_counts, quota, n_classes):
    """Apportion `quota` across classes proportionally to their counts."""
    total = sum(class_counts.values())
    raw = {c: quota * class_counts.get(c, 0) / total for c in range(n_classes)}
    base = {c: snap_floor(raw[c]) for c in range(n_classes)}
    leftover = quota - sum(base.values())
    by_remainder = sorted(
        range(n_classes), key=lambda c: (-(raw[c] - base[c]), c)
    )
    for c in by_remainder[:leftover]:
        base[c] += 1
    return base


def apply_strategy(table: ImportanceTable, strategy: str, ratio: float,
                   n_classes: int, even_fraction: float = 0.9) -> SelectionPlan:
    """Turn an importance table into a concrete subset of size max(1, floor(ratio*N)).

    S fills the whole quota globally by importance. P apportions the quota
    to classes by largest remainder over the source class proportions, then
    picks per-class top scorers. M guarantees an even class spread first:
    `even_fraction` of the quota is split evenly across classes (remainder
    to the lowest class indices) and the rest is filled globally from the
    not-yet-selected. Per-class demands beyond a class's size spill back
    into the global fill, so the plan always hits the quota exactly.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must lie in (0, 1]")
    if not 0.0 <= even_fraction <= 1.0:
        raise ValueError("even_fraction must lie in [0, 1]")
    n = len(table.ids)
    quota = max(1, snap_floor(ratio * n))
    rows_by_class = {
        c: np.flatnonzero(table.labels == c) for c in range(n_classes)
    }
    selected_by = {}

    def class_rows_sorted(target_counts):
        picked = []
        for c in range(n_classes):
            want = min(target_counts.get(c, 0), len(rows_by_class[c]))
            for r in _top_by_score(table, rows_by_class[c], want):
                picked.append(r)
                selected_by[table.ids[r]] = "class"
        return picked

    if strategy == "S":
        picked = _top_by_score(table, np.arange(n), quota)
        for r in picked:
            selected_by[table.ids[r]] = "global"
    else:
        if strategy == "P":
            class_counts = {c: len(rows_by_class[c]) for c in range(n_classes)}
            quotas = _largest_remainder_quotas(class_counts, quota, n_classes)
        else:
            even_quota = snap_floor(even_fraction * quota)
            base, extra = divmod(even_quota, n_classes)
            quotas = {
                c: base + (1 if c < extra else 0) for c in range(n_classes)
            }
        picked = class_rows_sorted(quotas)
        shortfall = quota - len(picked)
        if shortfall > 0:
            remaining = [r for r in range(n) if table.ids[r] not in selected_by]
            for r in _top_by_score(table, remaining, shortfall):
                picked.append(r)
                selected_by[table.ids[r]] = "global"
    picked = sorted(picked)
    selected_ids = [table.ids[r] for r in picked]
    per_class = {}
    for r in picked:
        per_class[int(table.labels[r])] = per_class.get(int(table.labels[r]), 0) + 1
    return SelectionPlan(
        method=table.method,
        strategy=strategy,
        ratio=float(ratio),
        selected_ids=selected_ids,
        selected_by={i: selected_by[i] for i in selected_ids},
        per_class_counts=per_class,
    )


def retrain_on_selection(plan: SelectionPlan, dataset, config) -> float:
    """Train from scratch on the selected sources; returns target accuracy.

    Banks for classes absent from the selection stay empty, so evaluation
    skips them rather than failing.
    """
    if not plan.selected_ids:
        raise EmptyInput("selection plan is empty")
    subset = dataset.subset_sources(plan.selected_ids)
    model = train(config, subset)
    return evaluate(model, subset, scorer="idc", on_empty="skip")["accuracy"]


def build_importance(method: str, dataset, model=None, seed: int = 0):
    """Dispatch an importance method by name."""
    if method == "random":
        return random_importance(dataset.source_ids(), dataset.source_labels(),
                                 seed)
    if method == "in":
        return importance_in(dataset)
    if method == "adv":
        if model is None:
            raise ValueError("method 'adv' needs a trained model")
        return importance_adv(model, dataset)
    if method == "idc":
        if model is None:
            raise ValueError("method 'idc' needs a trained model")
        return importance_idc(model, dataset)
    raise ValueError(f"method must be one of {METHODS}")


@dataclass
class SweepRow:
    method: str
    strategy: str
    ratio: float
    mean_accuracy: float
    std_accuracy: float
    n_seeds: int


def selection_sweep(dataset_for_seed, config, methods, strategies, ratios,
                    seeds, even_fraction: float = 0.9):
    """Accuracy grid over method x strategy x ratio, averaged over seeds.

    `dataset_for_seed` maps a seed to the dataset to use (so data can be
    regenerated per seed, or held fixed with `lambda s: dataset`). The base
    model for model-dependent importance methods is trained once per seed.
    """
    accs = {}
    for seed in seeds:
        dataset = dataset_for_seed(seed)
        seed_config = replace(config, seed=seed)
        base_model = None
        if any(m in ("adv", "idc") for m in methods):
            base_model = train(seed_config, dataset)
        for method in methods:
            table = build_importance(method, dataset, base_model, seed)
            for strategy in strategies:
                for ratio in ratios:
                    plan = apply_strategy(table, strategy, ratio,
                                          dataset.n_classes, even_fraction)
                    acc = retrain_on_selection(plan, dataset, seed_config)
                    accs.setdefault((method, strategy, ratio), []).append(acc)
    rows = []
    for (method, strategy, ratio), values in sorted(accs.items()):
        arr = np.asarray(values)
        rows.append(SweepRow(
            method=method,
            strategy=strategy,
            ratio=float(ratio),
            mean_accuracy=float(arr.mean()),
            std_accuracy=float(arr.std()),
            n_seeds=len(values),
        ))
    return rows


def save_selection_csv(plan: SelectionPlan, table: ImportanceTable, path,
                       config_hash=None) -> None:
    """One row per selected sample: id, label, importance, selection route."""
    score_by_id = {i: s for i, s in zip(table.ids, table.scores)}
    label_by_id = {i: int(l) for i, l in zip(table.ids, table.labels)}
    lines = []
    if config_hash is not None:
        lines.append(f"# config_hash={config_hash}")
    lines.append("sample_id,label,importance,selected_by")
    for sample_id in plan.selected_ids:
        lines.append(
            f"{sample_id},{label_by_id[sample_id]},"
            f"{score_by_id[sample_id]:.17g},{plan.selected_by[sample_id]}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def save_sweep_csv(rows, path, config_hash=None) -> None:
    lines = []
    if config_hash is not None:
        lines.append(f"# config_hash={config_hash}")
    lines.append("method,strategy,ratio,mean_accuracy,std_accuracy,n_seeds")
    for row in rows:
        lines.append(
            f"{row.method},{row.strategy},{row.ratio:.17g},"
            f"{row.mean_accuracy:.17g},{row.std_accuracy:.17g},{row.n_seeds}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
