"""Joint loss and the alternating co-training loop.

Four modes share one loop:

  baseline      plain classifier training, [CLS] pooling
  mask_augment  same, but each epoch adds ~gamma masked copies per sentence
  ssa_co        after warmup, each epoch snapshots the model, probes it for
                token-importance labels, and trains the mixed loss
                alpha * L_target + (1 - alpha) * L_ssa
  ssa_hybrid    ssa_co plus classification through importance-weighted
                pooling instead of raw [CLS]

Every source of randomness draws from its own stream (init / dropout /
shuffle / probing / augmentation), so modes that are algebraically identical
(alpha=1 ssa_co vs baseline) really do produce bit-identical parameters:
adding an exactly-zero-weighted loss term neither perturbs the shared
gradients nor shifts anyone else's random draws.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from . import tensor as T
from .corpus import collate
from .encoder import EncoderConfig, EncoderModel, special_token_mask
from .metrics import accuracy, macro_f1, mcc
from .optim import Adam
from .probing import NO_LABEL, ProbeConfig, generate_epoch_labels, mask_augment

MODES = ("baseline", "mask_augment", "ssa_co", "ssa_hybrid")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "baseline"
    alpha: float = 0.7
    beta: float = 0.5
    gamma: float = 1.0
    mask_ratio: float = 0.3
    epochs: int = 5
    warmup_epochs: int = 1
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    encoder: EncoderConfig = field(default=None)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigError(f"mask_ratio must lie in (0, 1), got {self.mask_ratio}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.encoder is None:
            self.encoder = EncoderConfig(vocab_size=1005, ssa_beta=self.beta)
        elif self.encoder.ssa_beta != self.beta:
            self.encoder = dataclasses.replace(self.encoder, ssa_beta=self.beta)


# ---------------------------------------------------- key=value config files

_INT_KEYS = {"epochs", "warmup_epochs", "batch_size", "seed", "vocab_size",
             "d_model", "n_layers", "n_heads", "d_ff", "max_len", "n_classes"}
_FLOAT_KEYS = {"alpha", "beta", "gamma", "mask_ratio", "lr", "dropout_rate"}
_STR_KEYS = {"mode"}
_ENCODER_KEYS = {"vocab_size", "d_model", "n_layers", "n_heads", "d_ff",
                 "max_len", "n_classes", "dropout_rate"}


def parse_config_items(lines) -> dict:
    """key=value lines to a typed dict. '#' comments and blanks are skipped;
    unknown keys and malformed lines raise ConfigError."""
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in _INT_KEYS:
            try:
                out[key] = int(val)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} needs an integer, got {val!r}") from None
        elif key in _FLOAT_KEYS:
            try:
                out[key] = float(val)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} needs a number, got {val!r}") from None
        elif key in _STR_KEYS:
            out[key] = val
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    return out


def build_run_config(items: dict) -> RunConfig:
    items = dict(items)
    enc_kwargs = {k: items.pop(k) for k in list(items) if k in _ENCODER_KEYS}
    cfg = RunConfig(**items)
    if enc_kwargs:
        enc_kwargs.setdefault("vocab_size", cfg.encoder.vocab_size)
        cfg.encoder = EncoderConfig(ssa_beta=cfg.beta, **enc_kwargs)
    return cfg


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        items = parse_config_items(f)
    items.update(overrides or {})
    return build_run_config(items)


# ------------------------------------------------------------------- losses


def loss_target(logits: T.Tensor, labels, task: str = "classification") -> T.Tensor:
    """Mean target-task loss: cross-entropy for class labels, squared error
    for a 1-wide regression head. A batch must be one task or the other."""
    arr = np.asarray(labels)
    if task == "classification":
        if not np.issubdtype(arr.dtype, np.integer):
            raise ConfigError(f"classification labels must be integers, got {arr.dtype}")
        return T.cross_entropy(logits, arr)
    if task == "regression":
        if logits.data.ndim != 2 or logits.data.shape[1] != 1:
            raise T.ShapeError(f"regression head must be (b, 1), got {logits.data.shape}")
        if np.issubdtype(arr.dtype, np.integer):
            raise ConfigError("regression targets must be floats; got integer labels")
        return T.mse(logits, arr.astype(np.float32).reshape(logits.data.shape))
    raise ConfigError(f"unknown task {task!r}")


def loss_ssa(ssa_logits: T.Tensor, ssa_labels, row_index) -> T.Tensor:
    """Cross-entropy over labeled token positions only.

    ``ssa_logits`` is (b, n, 2). ``ssa_labels`` is (V, n) in {0, 1, NO_LABEL}
    and ``row_index`` (V,) maps each label vector to its batch row; one row
    may carry several vectors when gamma > 1. V = 0, or all positions
    NO_LABEL, gives exactly 0 with zero gradient.
    """
    rows = np.asarray(row_index, dtype=np.int64)
    if rows.size == 0:
        return T.Tensor(np.float32(0.0))
    labels = np.asarray(ssa_labels, dtype=np.int64)
    b, n, c = ssa_logits.data.shape
    if labels.shape != (rows.size, n):
        raise T.ShapeError(f"ssa labels {labels.shape} vs {(rows.size, n)}")
    flat = T.reshape(ssa_logits, (b * n, c))
    idx = (rows[:, None] * n + np.arange(n, dtype=np.int64)[None, :]).reshape(-1)
    picked = T.embedding(flat, idx)
    return T.cross_entropy(picked, labels.reshape(-1), ignore_index=NO_LABEL)


def loss_total(l_target: T.Tensor, l_ssa: T.Tensor, alpha: float) -> T.Tensor:
    return T.add(T.scale(l_target, alpha), T.scale(l_ssa, 1.0 - alpha))


# ----------------------------------------------------------------- training


@dataclass
class EpochReport:
    epoch: int
    l_target: float
    l_ssa: float
    l_total: float
    n_generated: int
    dev_acc: float
    dev_mcc: float
    dev_f1: float


CSV_HEADER = "epoch,l_target,l_ssa,l_total,n_generated,dev_acc,dev_mcc,dev_f1"


def reports_to_csv(reports) -> str:
    lines = [CSV_HEADER]
    for r in reports:
        lines.append(f"{r.epoch},{r.l_target!r},{r.l_ssa!r},{r.l_total!r},"
                     f"{r.n_generated},{r.dev_acc!r},{r.dev_mcc!r},{r.dev_f1!r}")
    return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    model: EncoderModel
    best_model: EncoderModel
    best_epoch: int
    reports: list
    last_labels: list


def _pool_mode(mode: str) -> str:
    return "hybrid" if mode == "ssa_hybrid" else "cls"


def predict_batched(model: EncoderModel, dataset, mode: str = "cls",
                    batch_size: int = 64) -> np.ndarray:
    preds = np.empty(len(dataset), dtype=np.int64)
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start:start + batch_size]
        ids, segs, mask = collate(chunk)
        cls, tokens, _ = model.encode_batch(ids, segs, mask, train_mode=False)
        if mode == "hybrid":
            importance = model.ssa_logits(tokens)[:, :, 1]
            pooled = model.hybrid_pool_batch(cls, tokens, importance,
                                             special_token_mask(ids))
        else:
            pooled = cls
        logits = model.classify(pooled).data
        preds[start:start + len(chunk)] = np.argmax(logits, axis=1)
    return preds


def evaluate(model: EncoderModel, dataset, mode: str = "cls",
             batch_size: int = 64) -> dict:
    """Accuracy / MCC / macro-F1 on a dataset, inference mode."""
    preds = predict_batched(model, dataset, mode, batch_size)
    gold = np.array([e.target_label for e in dataset], dtype=np.int64)
    k = model.config.n_classes
    return {"acc": accuracy(gold, preds), "mcc": mcc(gold, preds, k),
            "f1": macro_f1(gold, preds, k)}


def co_train(config: RunConfig, train_set, dev_set, n_workers: int = 1,
             split_dev: bool = False) -> TrainResult:
    """Run the full schedule and return final model, best-dev model, per-epoch
    reports, and the labels from the last generation epoch.

    ``n_workers`` only fans out probe forwards; results are identical for any
    value. ``split_dev`` selects the best epoch by mean accuracy minus its
    standard deviation over three even dev slices, instead of plain dev
    accuracy; reported dev metrics always cover the whole dev set.
    """
    cfg = config
    model = EncoderModel(cfg.encoder, seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    pool = _pool_mode(cfg.mode)
    reports = []
    last_labels = []
    best_score = -np.inf
    best_epoch = -1
    best_model = None
    dev_slices = None
    if split_dev:
        third = len(dev_set) // 3
        if third == 0:
            raise ConfigError("split_dev needs a dev set of at least 3 examples")
        dev_slices = [dev_set[:third], dev_set[third:2 * third], dev_set[2 * third:]]

    for epoch in range(cfg.epochs):
        ssa_active = cfg.mode in ("ssa_co", "ssa_hybrid") and epoch >= cfg.warmup_epochs
        label_map: dict[int, list] = {}
        n_generated = 0

        if ssa_active:
            snap = model.snapshot()
            probe_cfg = ProbeConfig(mask_ratio=cfg.mask_ratio, gamma=cfg.gamma,
                                    rng_seed=cfg.seed)
            labels = generate_epoch_labels(snap, train_set, probe_cfg, epoch,
                                           mode=pool, n_workers=n_workers)
            assert all(le.epoch_generated == epoch for le in labels)
            if not labels:
                warnings.warn(f"epoch {epoch}: no eligible sentences, SSA loss is 0")
            for le in labels:
                label_map.setdefault(le.origin_id, []).append(le.ssa_labels)
            n_generated = len(labels)
            last_labels = labels

        if cfg.mode == "mask_augment":
            aug_cfg = ProbeConfig(mask_ratio=cfg.mask_ratio, gamma=cfg.gamma,
                                  rng_seed=cfg.seed)
            variants = mask_augment(train_set, aug_cfg,
                                    seeding.make_rng(cfg.seed, seeding.AUGMENT, epoch))
            items = list(enumerate(train_set)) + [(-1, v) for v in variants]
            n_generated = len(variants)
        else:
            items = list(enumerate(train_set))

        perm = seeding.make_rng(cfg.seed, seeding.SHUFFLE, epoch).permutation(len(items))
        drop_rng = seeding.make_rng(cfg.seed, seeding.DROPOUT, epoch)

        w_sum = 0.0
        t_sum = 0.0
        s_sum = 0.0
        tot_sum = 0.0
        for start in range(0, len(items), cfg.batch_size):
            batch = [items[j] for j in perm[start:start + cfg.batch_size]]
            examples = [ex for _, ex in batch]
            ids, segs, mask = collate(examples)
            gold = np.array([ex.target_label for ex in examples], dtype=np.int64)
            b, n = ids.shape

            with T.Graph():
                cls, tokens, _ = model.encode_batch(ids, segs, mask,
                                                    train_mode=True, rng=drop_rng)
                sl = None
                if cfg.mode == "ssa_hybrid":
                    sl = model.ssa_logits(tokens)
                    pooled = model.hybrid_pool_batch(cls, tokens, sl[:, :, 1],
                                                     special_token_mask(ids))
                    logits = model.classify(pooled)
                else:
                    logits = model.classify(cls)
                l_t = loss_target(logits, gold)

                if ssa_active:
                    vecs = []
                    rows = []
                    for r, (origin, ex) in enumerate(batch):
                        for vec in label_map.get(origin, ()):
                            padded = np.full(n, NO_LABEL, dtype=np.int64)
                            padded[:vec.size] = vec
                            vecs.append(padded)
                            rows.append(r)
                    if sl is None:
                        sl = model.ssa_logits(tokens)
                    l_s = loss_ssa(sl, np.array(vecs, dtype=np.int64).reshape(len(rows), n),
                                   np.array(rows, dtype=np.int64))
                    loss = loss_total(l_t, l_s, cfg.alpha)
                    s_val = float(l_s.data)
                else:
                    loss = l_t
                    s_val = 0.0
                T.assert_finite(loss, "training loss")
                opt.zero_grad()
                T.backward(loss)
                opt.step()

            w_sum += b
            t_sum += float(l_t.data) * b
            s_sum += s_val * b
            tot_sum += float(loss.data) * b

        dev = evaluate(model, dev_set, pool)
        reports.append(EpochReport(
            epoch=epoch,
            l_target=t_sum / w_sum,
            l_ssa=s_sum / w_sum,
            l_total=tot_sum / w_sum,
            n_generated=n_generated,
            dev_acc=dev["acc"], dev_mcc=dev["mcc"], dev_f1=dev["f1"],
        ))
        if dev_slices is not None:
            accs = [evaluate(model, part, pool)["acc"] for part in dev_slices]
            score = float(np.mean(accs) - np.std(accs))
        else:
            score = dev["acc"]
        if score > best_score:
            best_score = score
            best_epoch = epoch
            best_model = model.snapshot()

    return TrainResult(model, best_model, best_epoch, reports, last_labels)
