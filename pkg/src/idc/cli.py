"""Command-line interface for reproducible runs.

Every command resolves its parameters as defaults < JSON config file <
explicit flags, echoes the result (plus a hash of the path-independent
parameters) to `resolved_config.json` in the output directory, and stamps
that hash into every file it writes. Failures print one machine-readable
`error: <Kind>: <detail>` line and exit nonzero.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict

from .data import (
    BENCHMARK_MEAN_ANGLES,
    BENCHMARK_SIGMA,
    SyntheticShiftSpec,
    generate,
    load_embeddings,
    load_model,
    save_embeddings,
    save_model,
)
from .errors import ConfigInvalid, IdcError
from .inference import evaluate, explain, rejection_curve, save_rejection_csv
from .selection import (
    METHODS,
    apply_strategy,
    build_importance,
    retrain_on_selection,
    save_selection_csv,
)
from .training import TrainConfig, save_losses_csv, train

# Fields whose values are filesystem locations; they never enter the config
# hash, so runs in different directories stay byte-comparable.
PATH_KEYS = ("out", "data", "model", "config")


def _train_defaults() -> dict:
    defaults = asdict(TrainConfig())
    defaults.pop("n_classes")
    defaults.pop("input_dim")
    defaults["loss_weights"] = list(defaults["loss_weights"])
    return defaults


GEN_DEFAULTS = {
    "seed": 0,
    "n_classes": 8,
    "input_dim": 16,
    "n_source_per_class": 200,
    "n_target_per_class": 200,
    "radius": 3.0,
    "sigma": BENCHMARK_SIGMA,
    "mean_angles_deg": "benchmark",
    "rotation_deg": 30.0,
    "scale": 1.2,
    "translation": [],
    "overlap": 0.1,
}
EVAL_DEFAULTS = {"scorer": "idc", "on_empty": "error"}
EXPLAIN_DEFAULTS = {"top": 3, "least": 2, "on_empty": "error"}
REJECT_DEFAULTS = {
    "rates": [round(0.1 * i, 1) for i in range(10)],
    "scorer": "idc",
    "on_empty": "error",
}
SELECT_DEFAULTS = {"even_fraction": 0.9, "retrain": False, "seed": 0}


def _ratio_flag(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError("ratio must lie in (0, 1]")
    return value


def _float_list_flag(text: str):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _sigma_value(value):
    """Scalar passes through; one-element lists collapse to a scalar."""
    if isinstance(value, (list, tuple)):
        return float(value[0]) if len(value) == 1 else tuple(
            float(v) for v in value
        )
    return float(value)


def _angles_value(value, n_classes: int) -> tuple:
    """Resolve the mean-angle setting; 'benchmark' fits only 8 classes."""
    if value == "benchmark":
        if n_classes == len(BENCHMARK_MEAN_ANGLES):
            return BENCHMARK_MEAN_ANGLES
        return ()
    if isinstance(value, str):
        raise ConfigInvalid(
            f"mean_angles_deg must be 'benchmark' or a list, got {value!r}"
        )
    return tuple(float(v) for v in value)


def _angles_flag(text: str):
    if text.strip() == "benchmark":
        return "benchmark"
    return _float_list_flag(text)


def _load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config file {path}: {exc}")
    if not isinstance(obj, dict):
        raise ConfigInvalid(f"config file {path} must hold a JSON object")
    return obj


def _resolve(defaults: dict, args) -> dict:
    """defaults < config file < explicit flags; unknown file keys rejected."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        overrides = _load_config_file(args.config)
        unknown = set(overrides) - set(defaults)
        if unknown:
            raise ConfigInvalid(
                f"unknown config keys: {', '.join(sorted(unknown))}"
            )
        resolved.update(overrides)
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
    return resolved


def config_hash(resolved: dict) -> str:
    hashable = {k: v for k, v in resolved.items() if k not in PATH_KEYS}
    canon = json.dumps(hashable, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _prepare_out(args, command: str, resolved: dict) -> tuple:
    os.makedirs(args.out, exist_ok=True)
    digest = config_hash(resolved)
    echo = dict(resolved)
    for key in PATH_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            echo[key] = value
    _write_json(
        os.path.join(args.out, "resolved_config.json"),
        {"command": command, "config_hash": digest, "parameters": echo},
    )
    return digest, args.out


def cmd_gen_data(args) -> int:
    resolved = _resolve(GEN_DEFAULTS, args)
    digest, out = _prepare_out(args, "gen-data", resolved)
    spec = SyntheticShiftSpec(
        n_classes=int(resolved["n_classes"]),
        input_dim=int(resolved["input_dim"]),
        n_source_per_class=int(resolved["n_source_per_class"]),
        n_target_per_class=int(resolved["n_target_per_class"]),
        radius=float(resolved["radius"]),
        sigma=_sigma_value(resolved["sigma"]),
        mean_angles_deg=_angles_value(
            resolved["mean_angles_deg"], int(resolved["n_classes"])
        ),
        rotation=math.radians(float(resolved["rotation_deg"])) % (2.0 * math.pi),
        scale=float(resolved["scale"]),
        translation=tuple(resolved["translation"]),
        overlap=float(resolved["overlap"]),
        seed=int(resolved["seed"]),
    )
    dataset = generate(spec)
    save_embeddings(dataset, os.path.join(out, "embeddings.csv"))
    print(f"wrote {len(dataset.records)} samples to {out}/embeddings.csv")
    return 0


def _build_train_config(resolved: dict) -> TrainConfig:
    kwargs = dict(resolved)
    kwargs["loss_weights"] = tuple(kwargs["loss_weights"])
    try:
        config = TrainConfig(**kwargs)
    except TypeError as exc:
        raise ConfigInvalid(str(exc))
    config.validate()
    return config


def cmd_train(args) -> int:
    resolved = _resolve(_train_defaults(), args)
    digest, out = _prepare_out(args, "train", resolved)
    config = _build_train_config(resolved)
    dataset = load_embeddings(args.data)
    model = train(config, dataset)
    save_model(model, os.path.join(out, "model.json"), config_hash=digest)
    save_losses_csv(model.history, os.path.join(out, "losses.csv"),
                    config_hash=digest)
    final = model.history[-1]
    print(
        f"trained {config.max_iterations} iterations; final losses "
        f"fc={final.loss_fc:.4f} adv={final.loss_adv:.4f} "
        f"idc={final.loss_idc:.4f} to {out}/model.json"
    )
    return 0


def cmd_eval(args) -> int:
    resolved = _resolve(EVAL_DEFAULTS, args)
    digest, out = _prepare_out(args, "eval", resolved)
    model = load_model(args.model)
    dataset = load_embeddings(args.data)
    metrics = evaluate(model, dataset, scorer=resolved["scorer"],
                       on_empty=resolved["on_empty"])
    metrics["config_hash"] = digest
    _write_json(os.path.join(out, "metrics.json"), metrics)
    print(
        f"accuracy={metrics['accuracy']:.4f} "
        f"per_class={metrics['per_class_accuracy']:.4f} -> {out}/metrics.json"
    )
    return 0


def cmd_explain(args) -> int:
    resolved = _resolve(EXPLAIN_DEFAULTS, args)
    digest, out = _prepare_out(args, "explain", resolved)
    model = load_model(args.model)
    dataset = load_embeddings(args.data)
    record = dataset.record(args.sample_id)
    report = explain(
        model,
        record.feature,
        top_n=int(resolved["top"]),
        least_n=int(resolved["least"]),
        sample_id=args.sample_id,
        on_empty=resolved["on_empty"],
    )
    payload = report.to_dict()
    payload["config_hash"] = digest
    payload["domain"] = record.domain
    _write_json(os.path.join(out, "evidence.json"), payload)
    print(
        f"sample {args.sample_id}: predicted class "
        f"{report.predicted_class} -> {out}/evidence.json"
    )
    return 0


def cmd_reject(args) -> int:
    resolved = _resolve(REJECT_DEFAULTS, args)
    digest, out = _prepare_out(args, "reject", resolved)
    model = load_model(args.model)
    dataset = load_embeddings(args.data)
    curve = rejection_curve(
        model,
        dataset.target_features(),
        dataset.target_eval_labels(),
        resolved["rates"],
        scorer=resolved["scorer"],
        on_empty=resolved["on_empty"],
    )
    save_rejection_csv(curve, os.path.join(out, "rejection.csv"),
                       config_hash=digest)
    print(f"wrote {len(curve.points)} rejection points -> {out}/rejection.csv")
    return 0


def cmd_select(args) -> int:
    resolved = _resolve(SELECT_DEFAULTS, args)
    resolved["method"] = args.method
    resolved["strategy"] = args.strategy
    resolved["ratio"] = args.ratio
    digest, out = _prepare_out(args, "select", resolved)
    dataset = load_embeddings(args.data)
    model = None
    if args.model is not None:
        model = load_model(args.model)
    elif args.method in ("adv", "idc"):
        raise ConfigInvalid(f"method {args.method!r} requires --model")
    table = build_importance(args.method, dataset, model,
                             seed=int(resolved["seed"]))
    plan = apply_strategy(table, args.strategy.upper(), args.ratio,
                          dataset.n_classes,
                          even_fraction=float(resolved["even_fraction"]))
    save_selection_csv(plan, table, os.path.join(out, "selection.csv"),
                       config_hash=digest)
    summary = plan.summary()
    summary["config_hash"] = digest
    if resolved["retrain"]:
        config = model.config if model is not None else TrainConfig(
            seed=int(resolved["seed"])
        )
        summary["retrain_accuracy"] = retrain_on_selection(plan, dataset, config)
    _write_json(os.path.join(out, "selection.json"), summary)
    note = (
        f" retrain_accuracy={summary['retrain_accuracy']:.4f}"
        if "retrain_accuracy" in summary
        else ""
    )
    print(
        f"selected {len(plan.selected_ids)} samples"
        f"{note} -> {out}/selection.csv"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="idc",
        description="Evidence-based memory classifier: data generation, "
        "training, evaluation, explanation, rejection, and source selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data=False, model=False):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON file with parameter overrides")
        if data:
            p.add_argument("--data", required=True, help="embedding CSV path")
        if model:
            p.add_argument("--model", required=True, help="model JSON path")

    p = sub.add_parser("gen-data", help="generate a synthetic embedding file")
    add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-classes", dest="n_classes", type=int)
    p.add_argument("--input-dim", dest="input_dim", type=int)
    p.add_argument("--n-source-per-class", dest="n_source_per_class", type=int)
    p.add_argument("--n-target-per-class", dest="n_target_per_class", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--sigma", type=_float_list_flag,
                   help="noise scale, or comma-separated per-class scales")
    p.add_argument("--mean-angles-deg", dest="mean_angles_deg",
                   type=_angles_flag,
                   help="per-class mean angles on the circle, 'benchmark' "
                        "for the default layout, '' for equal spacing")
    p.add_argument("--rotation-deg", dest="rotation_deg", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--translation", type=_float_list_flag,
                   help="comma-separated shift added to target features")
    p.add_argument("--overlap", type=float,
                   help="fraction drawn from a wrong-class Gaussian")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on an embedding file")
    add_common(p, data=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--feature-dim", dest="feature_dim", type=int)
    p.add_argument("--encoder-hidden", dest="encoder_hidden", type=int)
    p.add_argument("--discriminator-hidden", dest="discriminator_hidden",
                   type=int)
    p.add_argument("--bank-capacity", dest="bank_capacity", type=int)
    p.add_argument("--read-top-k", dest="read_top_k", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--value-learning-rate", dest="value_learning_rate",
                   type=float)
    p.add_argument("--grl-gamma", dest="grl_gamma", type=float)
    p.add_argument("--loss-weights", dest="loss_weights",
                   type=_float_list_flag,
                   help="classification,adversarial,evidence loss scales")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="write target-domain metrics for a model")
    add_common(p, data=True, model=True)
    p.add_argument("--scorer", choices=("idc", "fc"))
    p.add_argument("--on-empty", dest="on_empty", choices=("error", "skip"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="evidence report for one sample")
    add_common(p, data=True, model=True)
    p.add_argument("--sample-id", dest="sample_id", required=True)
    p.add_argument("--top", type=int, help="strongest evidence items to list")
    p.add_argument("--least", type=int, help="weakest evidence items to list")
    p.add_argument("--on-empty", dest="on_empty", choices=("error", "skip"))
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("reject", help="accuracy at increasing rejection rates")
    add_common(p, data=True, model=True)
    p.add_argument("--rates", type=_float_list_flag,
                   help="comma-separated rejection rates in [0, 1]")
    p.add_argument("--scorer", choices=("idc", "fc"))
    p.add_argument("--on-empty", dest="on_empty", choices=("error", "skip"))
    p.set_defaults(func=cmd_reject)

    p = sub.add_parser("select", help="pick a discriminative source subset")
    add_common(p, data=True)
    p.add_argument("--model", help="model JSON path (required for adv/idc)")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--strategy", required=True, choices=("s", "p", "m"))
    p.add_argument("--ratio", required=True, type=_ratio_flag,
                   help="fraction of source samples to keep, in (0, 1]")
    p.add_argument("--even-fraction", dest="even_fraction", type=float,
                   help="share of the M quota split evenly across classes")
    p.add_argument("--seed", type=int,
                   help="seed for random importance and default retraining")
    p.add_argument("--retrain", action="store_true", default=None,
                   help="retrain on the selection and report accuracy")
    p.set_defaults(func=cmd_select)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IdcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except KeyError as exc:
        print(f"error: KeyError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
