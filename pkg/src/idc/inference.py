"""Inference over a trained model: scoring, evidence reports, rejection.

All operations here are pure reads; bank ages never move at inference time.
Per-class scores are the memory-bank read scores and may be negative, so
they are ranked, not treated as probabilities.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput


def snap_ceil(x: float) -> int:
    """Ceil that forgives float dust: 2.9999999999 counts as 3."""
    nearest = round(x)
    if abs(x - nearest) < 1e-9:
        return int(nearest)
    return int(math.ceil(x))


def snap_floor(x: float) -> int:
    """Floor that forgives float dust: 3.0000000001 counts as 3."""
    nearest = round(x)
    if abs(x - nearest) < 1e-9:
        return int(nearest)
    return int(math.floor(x))


@dataclass
class Prediction:
    """Per-class evidence scores for one sample.

    `evidence[c]` lists the slots behind scores[c]; entries are None for
    banks skipped under on_empty="skip", whose score is -inf.
    """

    scores: np.ndarray
    predicted_class: int
    confidence: float
    evidence: list
    sample_id: str | None = None


def predict(model, x, on_empty: str = "error", sample_id: str | None = None):
    """Encode one input and read every class bank."""
    query = model.encode(np.asarray(x, dtype=np.float64))
    reads = model.banks.read_all(query, on_empty=on_empty)
    if all(r is None for r in reads):
        raise EmptyInput("every memory bank is empty")
    scores = np.array(
        [(-np.inf if r is None else r.score) for r in reads], dtype=np.float64
    )
    predicted = int(np.argmax(scores))
    return Prediction(
        scores=scores,
        predicted_class=predicted,
        confidence=float(scores[predicted]),
        evidence=[None if r is None else r.evidence for r in reads],
        sample_id=sample_id,
    )


@dataclass
class ExplainReport:
    """Most- and least-contributing evidence for a prediction."""

    sample_id: str | None
    predicted_class: int
    scores: np.ndarray
    top: list
    least: list

    def to_dict(self) -> dict:
        def items(seq):
            return [
                {
                    "provenance": e.provenance,
                    "class_id": e.class_id,
                    "slot_index": e.slot_index,
                    "similarity": e.similarity,
                    "value": e.value,
                    "contribution": e.contribution,
                }
                for e in seq
            ]

        return {
            "sample_id": self.sample_id,
            "predicted_class": self.predicted_class,
            "scores": [float(s) for s in self.scores],
            "top": items(self.top),
            "least": items(self.least),
        }


def explain(model, x, top_n: int = 3, least_n: int = 0, sample_id=None,
            on_empty: str = "error") -> ExplainReport:
    """Rank the predicted class's evidence by contribution.

    Contribution is value*similarity; `top` is the strongest evidence in
    descending order, `least` the weakest in ascending order. Both lists
    are capped by the evidence actually used (k' items).
    """
    if top_n < 0 or least_n < 0:
        raise ValueError("top_n and least_n must be >= 0")
    pred = predict(model, x, on_empty=on_empty, sample_id=sample_id)
    evidence = pred.evidence[pred.predicted_class] or []
    by_contribution = sorted(
        evidence, key=lambda e: (-e.contribution, e.slot_index)
    )
    return ExplainReport(
        sample_id=sample_id,
        predicted_class=pred.predicted_class,
        scores=pred.scores,
        top=by_contribution[:top_n],
        least=list(reversed(by_contribution))[:least_n],
    )


@dataclass
class RejectionPoint:
    rate: float
    accuracy: float
    retained_count: int


@dataclass
class RejectionCurve:
    """Accuracy over retained sets as low-confidence samples are dropped.

    `ranking` orders sample indices by descending confidence (ties by
    ascending index); the retained set at any rate is a prefix of it.
    """

    points: list
    ranking: np.ndarray

    def retained_indices(self, point: RejectionPoint) -> np.ndarray:
        return self.ranking[: point.retained_count]


def _confidence_and_hits(model, features, labels, scorer: str, on_empty: str):
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(features) == 0:
        raise EmptyInput("need at least one labeled sample")
    if len(features) != len(labels):
        raise ValueError("features and labels must align")
    if scorer == "idc":
        confidences = np.empty(len(features))
        hits = np.empty(len(features), dtype=bool)
        for i in range(len(features)):
            pred = predict(model, features[i], on_empty=on_empty)
            confidences[i] = pred.confidence
            hits[i] = pred.predicted_class == labels[i]
    elif scorer == "fc":
        probs = model.fc_probs(features)
        confidences = probs.max(axis=1)
        hits = probs.argmax(axis=1) == labels
    else:
        raise ValueError("scorer must be 'idc' or 'fc'")
    return confidences, hits


def rejection_curve(model, features, labels, rates, scorer: str = "idc",
                    on_empty: str = "error") -> RejectionCurve:
    """Rank by confidence and evaluate accuracy at each rejection rate.

    At rate r the top ceil((1-r)*N) samples are retained; the accuracy of
    an empty retained set is 1.0 by convention. Rates are deduplicated and
    sorted ascending.
    """
    cleaned = sorted({float(r) for r in rates})
    if not cleaned:
        raise EmptyInput("need at least one rejection rate")
    for r in cleaned:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"rejection rate {r} outside [0, 1]")
    confidences, hits = _confidence_and_hits(model, features, labels, scorer,
                                             on_empty)
    n = len(hits)
    ranking = np.argsort(-confidences, kind="stable")
    points = []
    for r in cleaned:
        retained = snap_ceil((1.0 - r) * n)
        if retained == 0:
            accuracy = 1.0
        else:
            accuracy = float(np.mean(hits[ranking[:retained]]))
        points.append(RejectionPoint(rate=r, accuracy=accuracy,
                                     retained_count=retained))
    return RejectionCurve(points=points, ranking=ranking)


def evaluate(model, dataset, scorer: str = "idc", on_empty: str = "error") -> dict:
    """Target-domain metrics: plain accuracy and mean per-class recall."""
    features = dataset.target_features()
    labels = dataset.target_eval_labels()
    if len(features) == 0:
        raise EmptyInput("dataset has no target samples")
    if scorer == "idc":
        predicted = np.empty(len(features), dtype=np.int64)
        for i in range(len(features)):
            predicted[i] = predict(model, features[i], on_empty=on_empty).predicted_class
    elif scorer == "fc":
        predicted = model.fc_probs(features).argmax(axis=1)
    else:
        raise ValueError("scorer must be 'idc' or 'fc'")
    hits = predicted == labels
    per_class = {}
    for c in range(model.n_classes):
        mask = labels == c
        if np.any(mask):
            per_class[c] = float(np.mean(hits[mask]))
    return {
        "scorer": scorer,
        "n_targets": int(len(labels)),
        "accuracy": float(np.mean(hits)),
        "per_class_accuracy": float(np.mean(list(per_class.values()))),
        "per_class": {str(c): v for c, v in sorted(per_class.items())},
    }


def save_rejection_csv(curve: RejectionCurve, path, config_hash=None) -> None:
    lines = []
    if config_hash is not None:
        lines.append(f"# config_hash={config_hash}")
    lines.append("rate,accuracy,retained")
    for p in curve.points:
        lines.append(f"{p.rate:.17g},{p.accuracy:.17g},{p.retained_count}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
