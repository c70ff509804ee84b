"""Joint training of the encoder, classifier head, discriminator, and banks.

One training step, in order: encode both half-batches; classify the source
half; per source sample, read its positive (true-class) and most-confusing
negative banks and touch the selected slots; refresh bank ages with every
target sample; compute the three losses on the pre-write bank state; step
the networks by momentum SGD (the adversarial gradient reaches the encoder
sign-reversed through the gradient-reversal coefficient); step the touched
memory values by per-slot Adam; finally write every source sample's
(feature, true-class probability) pair into its class bank.

Losses and gradients are also exposed without mutation so tests can check
them against finite differences.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigInvalid, EmptyInput, ZeroNormVector
from .mathops import cross_entropy, softmax
from .memory import MemoryBankSet, idc_loss_and_value_grads, most_confusing_negative
from .nets import (
    SIGMOID_CLAMP,
    SgdMomentum,
    grl_backward,
    grl_schedule,
    make_discriminator,
    make_encoder,
    make_fc_head,
)
from .seeding import rng_stream


@dataclass
class TrainConfig:
    """Hyperparameters; None for n_classes/input_dim means infer from data."""

    n_classes: int | None = None
    input_dim: int | None = None
    feature_dim: int = 32
    encoder_hidden: int = 64
    discriminator_hidden: int = 32
    bank_capacity: int = 256
    read_top_k: int = 4
    batch_size: int = 32
    max_iterations: int = 2000
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    value_learning_rate: float = 1e-5
    grl_gamma: float = 10.0
    # (classification, adversarial, evidence) loss scales; all 1.0 treats
    # the losses equally. Zeroing entries isolates gradient paths.
    loss_weights: tuple = (1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        self.loss_weights = tuple(float(w) for w in self.loss_weights)

    def validate(self) -> None:
        if self.n_classes is not None and self.n_classes < 2:
            raise ConfigInvalid("n_classes must be >= 2")
        if self.input_dim is not None and self.input_dim < 1:
            raise ConfigInvalid("input_dim must be >= 1")
        if min(self.feature_dim, self.encoder_hidden, self.discriminator_hidden) < 1:
            raise ConfigInvalid("layer widths must be >= 1")
        if self.bank_capacity < 1:
            raise ConfigInvalid("bank_capacity must be >= 1")
        if self.read_top_k < 1:
            raise ConfigInvalid("read_top_k must be >= 1")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ConfigInvalid("batch_size must be even and >= 2")
        if self.max_iterations < 1:
            raise ConfigInvalid("max_iterations must be >= 1")
        if self.learning_rate <= 0 or self.value_learning_rate <= 0:
            raise ConfigInvalid("learning rates must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigInvalid("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigInvalid("weight_decay must be >= 0")
        if self.grl_gamma <= 0:
            raise ConfigInvalid("grl_gamma must be positive")
        if len(self.loss_weights) != 3 or any(w < 0 for w in self.loss_weights):
            raise ConfigInvalid("loss_weights must be three non-negative reals")
        if self.seed < 0:
            raise ConfigInvalid("seed must be >= 0")


@dataclass
class LossRecord:
    iteration: int
    loss_fc: float
    loss_adv: float
    loss_idc: float
    source_accuracy: float


@dataclass
class TrainedModel:
    encoder: object
    fc_head: object
    discriminator: object
    banks: MemoryBankSet
    config: TrainConfig
    history: list = field(default_factory=list)

    def encode(self, x) -> np.ndarray:
        features, _ = self.encoder.forward(x)
        return features

    def fc_probs(self, x) -> np.ndarray:
        logits, _ = self.fc_head.forward(self.encode(x))
        return softmax(logits, axis=-1)

    @property
    def n_classes(self) -> int:
        return self.banks.n_classes


@dataclass
class _StepComputation:
    """Everything the backward pass and the bank updates need."""

    loss_fc: float
    loss_adv: float
    loss_idc: float
    source_accuracy: float
    features_src: np.ndarray
    features_tgt: np.ndarray
    probs_src: np.ndarray
    cache_enc_src: object
    cache_enc_tgt: object
    cache_fc: object
    cache_disc_src: object
    cache_disc_tgt: object
    disc_src: np.ndarray
    disc_tgt: np.ndarray
    # Per contributing source sample: (pos ReadResult, neg ReadResult,
    # pos grads, neg grads); empty banks drop the sample from the loss.
    idc_terms: list = field(default_factory=list)


def _validate_nonzero_rows(features: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms == 0.0):
        raise ZeroNormVector(f"{what} produced a zero-norm feature vector")


class Trainer:
    """Mutable training state: networks, banks, optimizers, iteration count."""

    def __init__(self, config: TrainConfig, n_classes: int, input_dim: int):
        config.validate()
        if config.n_classes is not None and config.n_classes != n_classes:
            raise ConfigInvalid(
                f"config says {config.n_classes} classes, data has {n_classes}"
            )
        if config.input_dim is not None and config.input_dim != input_dim:
            raise ConfigInvalid(
                f"config says input_dim {config.input_dim}, data has {input_dim}"
            )
        if n_classes < 2:
            raise ConfigInvalid("training needs at least two classes")
        self.config = replace(config, n_classes=n_classes, input_dim=input_dim)
        rng = rng_stream(self.config.seed, "init")
        self.encoder = make_encoder(
            input_dim, self.config.encoder_hidden, self.config.feature_dim, rng
        )
        self.fc_head = make_fc_head(self.config.feature_dim, n_classes, rng)
        self.discriminator = make_discriminator(
            self.config.feature_dim, self.config.discriminator_hidden, rng
        )
        self.banks = MemoryBankSet(
            n_classes,
            self.config.bank_capacity,
            self.config.feature_dim,
            self.config.read_top_k,
        )
        lr = self.config.learning_rate
        mom = self.config.momentum
        wd = self.config.weight_decay
        self.opt_encoder = SgdMomentum(self.encoder.parameters(), lr, mom, wd)
        self.opt_fc = SgdMomentum(self.fc_head.parameters(), lr, mom, wd)
        self.opt_disc = SgdMomentum(self.discriminator.parameters(), lr, mom, wd)
        self.iteration = 0
        self.history = []

    def grl_lambda(self) -> float:
        progress = (self.iteration + 1) / self.config.max_iterations
        return grl_schedule(progress, self.config.grl_gamma)

    def _compute(self, src_x, src_y, src_ids, tgt_x, mutate_ages: bool):
        src_x = np.asarray(src_x, dtype=np.float64)
        tgt_x = np.asarray(tgt_x, dtype=np.float64)
        src_y = np.asarray(src_y, dtype=np.int64)
        if src_x.ndim != 2 or tgt_x.ndim != 2 or len(src_x) == 0 or len(tgt_x) == 0:
            raise EmptyInput("both half-batches must be non-empty 2-d arrays")
        if len(src_ids) != len(src_x):
            raise ValueError("src_ids must align with src_x")
        f_src, cache_enc_src = self.encoder.forward(src_x)
        f_tgt, cache_enc_tgt = self.encoder.forward(tgt_x)
        _validate_nonzero_rows(f_src, "encoder (source batch)")
        _validate_nonzero_rows(f_tgt, "encoder (target batch)")

        logits, cache_fc = self.fc_head.forward(f_src)
        probs = softmax(logits, axis=-1)
        loss_fc = float(
            np.mean([cross_entropy(probs[i], src_y[i]) for i in range(len(src_y))])
        )
        source_accuracy = float(np.mean(np.argmax(probs, axis=1) == src_y))

        d_src, cache_disc_src = self.discriminator.forward(f_src)
        d_tgt, cache_disc_tgt = self.discriminator.forward(f_tgt)
        d_src_c = np.clip(d_src, SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
        d_tgt_c = np.clip(d_tgt, SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
        loss_adv = float(-np.mean(np.log(d_tgt_c)) - np.mean(np.log(1.0 - d_src_c)))

        idc_terms = []
        n_k = self.config.read_top_k
        for i in range(len(src_y)):
            c = int(src_y[i])
            c_neg = most_confusing_negative(probs[i], c)
            pos_bank = self.banks.bank(c)
            neg_bank = self.banks.bank(c_neg)
            if pos_bank.size == 0 or neg_bank.size == 0:
                continue
            pos_read = pos_bank.read(f_src[i], n_k)
            neg_read = neg_bank.read(f_src[i], n_k)
            if mutate_ages:
                pos_bank.touch(pos_read.slot_indices)
                neg_bank.touch(neg_read.slot_indices)
            loss_i, pos_g, neg_g = idc_loss_and_value_grads(pos_read, neg_read)
            idc_terms.append((loss_i, pos_read, neg_read, pos_g, neg_g))
        if mutate_ages:
            for j in range(len(tgt_x)):
                self.banks.refresh_with_target(f_tgt[j])
        loss_idc = (
            float(np.mean([t[0] for t in idc_terms])) if idc_terms else 0.0
        )
        return _StepComputation(
            loss_fc=loss_fc,
            loss_adv=loss_adv,
            loss_idc=loss_idc,
            source_accuracy=source_accuracy,
            features_src=f_src,
            features_tgt=f_tgt,
            probs_src=probs,
            cache_enc_src=cache_enc_src,
            cache_enc_tgt=cache_enc_tgt,
            cache_fc=cache_fc,
            cache_disc_src=cache_disc_src,
            cache_disc_tgt=cache_disc_tgt,
            disc_src=d_src_c,
            disc_tgt=d_tgt_c,
            idc_terms=idc_terms,
        )

    def _backward(self, comp: _StepComputation, src_y):
        """Analytic gradients of the weighted joint objective.

        Returns (encoder_grads, fc_grads, disc_grads, value_grads) where
        value_grads maps (class_id, slot_index) to the gradient of the
        weighted mean evidence loss w.r.t. that slot's value.
        """
        w_fc, w_adv, w_idc = self.config.loss_weights
        lam = self.grl_lambda()
        n_src = len(src_y)
        n_tgt = len(comp.features_tgt)

        # Classification head: d(mean CE)/d(logits) = (softmax - onehot)/n.
        dlogits = comp.probs_src.copy()
        dlogits[np.arange(n_src), src_y] -= 1.0
        dlogits /= n_src
        fc_grads, dfeat_fc = self.fc_head.backward(comp.cache_fc, dlogits)
        fc_grads = [w_fc * g for g in fc_grads]

        # Discriminator loss: -mean log d(tgt) - mean log(1 - d(src)).
        up_tgt = -1.0 / (n_tgt * comp.disc_tgt)
        up_src = 1.0 / (n_src * (1.0 - comp.disc_src))
        disc_grads_t, dfeat_adv_t = self.discriminator.backward(
            comp.cache_disc_tgt, up_tgt
        )
        disc_grads_s, dfeat_adv_s = self.discriminator.backward(
            comp.cache_disc_src, up_src
        )
        disc_grads = [w_adv * (gt + gs) for gt, gs in zip(disc_grads_t, disc_grads_s)]

        # Encoder: classification gradient plus the reversed adversarial
        # gradient; the evidence loss treats queries as constants.
        up_enc_src = w_fc * dfeat_fc + grl_backward(w_adv * dfeat_adv_s, lam)
        up_enc_tgt = grl_backward(w_adv * dfeat_adv_t, lam)
        enc_grads_s, _ = self.encoder.backward(comp.cache_enc_src, up_enc_src)
        enc_grads_t, _ = self.encoder.backward(comp.cache_enc_tgt, up_enc_tgt)
        enc_grads = [gs + gt for gs, gt in zip(enc_grads_s, enc_grads_t)]

        value_grads = {}
        if comp.idc_terms:
            scale = w_idc / len(comp.idc_terms)
            for _, pos_read, neg_read, pos_g, neg_g in comp.idc_terms:
                for read, grads in ((pos_read, pos_g), (neg_read, neg_g)):
                    for item, g in zip(read.evidence, grads):
                        key = (read.class_id, item.slot_index)
                        value_grads[key] = value_grads.get(key, 0.0) + scale * g
        return enc_grads, fc_grads, disc_grads, value_grads

    def losses(self, src_x, src_y, src_ids, tgt_x):
        """Loss values at the current parameters; mutates nothing."""
        comp = self._compute(src_x, src_y, src_ids, tgt_x, mutate_ages=False)
        return comp.loss_fc, comp.loss_adv, comp.loss_idc

    def gradients(self, src_x, src_y, src_ids, tgt_x):
        """Analytic gradients without applying them; mutates nothing."""
        comp = self._compute(src_x, src_y, src_ids, tgt_x, mutate_ages=False)
        return self._backward(comp, np.asarray(src_y, dtype=np.int64))

    def step(self, src_x, src_y, src_ids, tgt_x) -> LossRecord:
        """One full training step; returns the loss record for this iteration."""
        src_y = np.asarray(src_y, dtype=np.int64)
        comp = self._compute(src_x, src_y, src_ids, tgt_x, mutate_ages=True)
        enc_grads, fc_grads, disc_grads, value_grads = self._backward(comp, src_y)
        self.opt_encoder.step(self.encoder.parameters(), enc_grads)
        self.opt_fc.step(self.fc_head.parameters(), fc_grads)
        self.opt_disc.step(self.discriminator.parameters(), disc_grads)
        by_bank = {}
        for (class_id, slot_index), g in sorted(value_grads.items()):
            by_bank.setdefault(class_id, ([], []))
            by_bank[class_id][0].append(slot_index)
            by_bank[class_id][1].append(g)
        for class_id, (indices, grads) in sorted(by_bank.items()):
            self.banks.bank(class_id).adam_step_values(
                indices, grads, self.config.value_learning_rate
            )
        for i in range(len(src_y)):
            c = int(src_y[i])
            self.banks.bank(c).write(
                comp.features_src[i], float(comp.probs_src[i, c]), src_ids[i]
            )
        record = LossRecord(
            iteration=self.iteration,
            loss_fc=comp.loss_fc,
            loss_adv=comp.loss_adv,
            loss_idc=comp.loss_idc,
            source_accuracy=comp.source_accuracy,
        )
        self.iteration += 1
        self.history.append(record)
        return record

    def model(self) -> TrainedModel:
        return TrainedModel(
            encoder=self.encoder,
            fc_head=self.fc_head,
            discriminator=self.discriminator,
            banks=self.banks,
            config=self.config,
            history=list(self.history),
        )


def train(config: TrainConfig, dataset) -> TrainedModel:
    """Run the full loop over a dataset; deterministic for a given seed.

    Batches are drawn uniformly with replacement, half source and half
    target, source indices before target indices within each iteration.
    """
    sources = dataset.source_records
    targets = dataset.target_records
    if not sources:
        raise ConfigInvalid("dataset has no source samples")
    if not targets:
        raise ConfigInvalid("dataset has no target samples")
    trainer = Trainer(config, dataset.n_classes, dataset.feature_dim)
    src_x = dataset.source_features()
    src_y = dataset.source_labels()
    src_ids = dataset.source_ids()
    tgt_x = dataset.target_features()
    half = trainer.config.batch_size // 2
    rng = rng_stream(trainer.config.seed, "sampling")
    for _ in range(trainer.config.max_iterations):
        si = rng.integers(0, len(src_x), size=half)
        ti = rng.integers(0, len(tgt_x), size=half)
        trainer.step(
            src_x[si], src_y[si], [src_ids[int(i)] for i in si], tgt_x[ti]
        )
    return trainer.model()


def save_losses_csv(history, path, config_hash: str | None = None) -> None:
    """Write the per-iteration loss history as CSV."""
    lines = []
    if config_hash is not None:
        lines.append(f"# config_hash={config_hash}")
    lines.append("iteration,L_fc,L_adv,L_idc,src_acc")
    for rec in history:
        lines.append(
            f"{rec.iteration},{rec.loss_fc:.17g},{rec.loss_adv:.17g},"
            f"{rec.loss_idc:.17g},{rec.source_accuracy:.17g}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
