"""Weak token-importance labels from decision-flip probes.

One probe: take a sentence the model currently classifies correctly, mask a
random ~30% of its content tokens, and re-classify. If the prediction flips
the masked tokens were load-bearing, so they are labeled 1; if it holds they
are labeled 0. Unmasked and special positions stay NO_LABEL and contribute
nothing to the auxiliary loss. Labels are regenerated from the current
parameter snapshot every epoch, never cached across epochs.

Every probe draws from its own RNG stream keyed by (seed, epoch, sentence,
probe index) and runs its forwards one sentence at a time, so results are
identical no matter how work is chunked across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import seeding
from .corpus import Example, MASK_ID
from .encoder import special_token_mask

NO_LABEL = -1


@dataclass
class ProbeConfig:
    mask_ratio: float = 0.3
    gamma: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.mask_ratio < 1.0:
            raise ValueError(f"mask_ratio must lie in (0, 1), got {self.mask_ratio}")
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass
class SsaLabeledExample:
    token_ids: np.ndarray
    target_label: int
    ssa_labels: np.ndarray
    origin_id: int
    epoch_generated: int


def maskable_positions(token_ids: np.ndarray) -> np.ndarray:
    """Content positions: everything that is not [PAD]/[CLS]/[SEP]."""
    return np.flatnonzero(~special_token_mask(np.asarray(token_ids)))


def sample_mask(n_maskable: int, mask_ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Pick k = max(1, round(ratio * n)) distinct indices in [0, n), sorted.

    Uses banker's rounding, so e.g. 0.3 of 7 tokens masks 2.
    """
    if n_maskable < 1:
        raise ValueError("need at least one maskable position")
    k = max(1, round(mask_ratio * n_maskable))
    return np.sort(rng.choice(n_maskable, size=k, replace=False))


def apply_mask(token_ids: np.ndarray, positions) -> np.ndarray:
    masked = np.asarray(token_ids).copy()
    masked[np.asarray(positions)] = MASK_ID
    return masked


def probe_with_mask(model, example, positions, mode: str = "cls"):
    """Label an explicit mask set: None if the model's prediction on the
    untouched sentence is already wrong, else a full-length label vector
    with 1s (flip) or 0s (no flip) at exactly the given positions."""
    pred = model.predict_label(example, mode)
    if pred != example.target_label:
        return None
    variant = replace(example, token_ids=apply_mask(example.token_ids, positions))
    flipped = model.predict_label(variant, mode) != pred
    labels = np.full(len(example.token_ids), NO_LABEL, dtype=np.int64)
    labels[np.asarray(positions)] = 1 if flipped else 0
    return labels


def probe(model, example, probe_cfg: ProbeConfig, rng: np.random.Generator,
          mode: str = "cls", origin_id: int = 0, epoch: int = 0):
    """One full probe: eligibility check, mask draw, flip test.

    Returns an SsaLabeledExample carrying the ORIGINAL token ids (the mask
    only exists inside the probe) or None for ineligible input.
    """
    ids = np.asarray(example.token_ids)
    maskable = maskable_positions(ids)
    if maskable.size == 0:
        return None
    if model.predict_label(example, mode) != example.target_label:
        return None
    positions = maskable[sample_mask(maskable.size, probe_cfg.mask_ratio, rng)]
    variant = replace(example, token_ids=apply_mask(ids, positions))
    flipped = model.predict_label(variant, mode) != example.target_label
    labels = np.full(ids.size, NO_LABEL, dtype=np.int64)
    labels[positions] = 1 if flipped else 0
    return SsaLabeledExample(ids, example.target_label, labels, origin_id, epoch)


def probes_per_example(gamma: float, seed: int, epoch: int, origin_id: int) -> int:
    """floor(gamma) probes, plus one more with probability frac(gamma),
    drawn from the example's own stream."""
    base = math.floor(gamma)
    frac = gamma - base
    if frac <= 0.0:
        return base
    coin = seeding.make_rng(seed, seeding.GAMMA, epoch, origin_id).random()
    return base + (1 if coin < frac else 0)


def generate_epoch_labels(model, dataset, probe_cfg: ProbeConfig, epoch: int = 0,
                          mode: str = "cls", n_workers: int = 1):
    """Probe every currently-correct sentence ~gamma times against a frozen
    model. Output is sorted by (origin_id, probe index) and independent of
    n_workers; the parallel path only fans the per-sentence forwards out.
    """
    if not dataset:
        return []

    def is_eligible(item) -> bool:
        origin_id, ex = item
        if maskable_positions(ex.token_ids).size == 0:
            return False
        return model.predict_label(ex, mode) == ex.target_label

    indexed = list(enumerate(dataset))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            eligibility = list(pool.map(is_eligible, indexed, chunksize=16))
    else:
        eligibility = [is_eligible(item) for item in indexed]

    tasks = []
    for (origin_id, ex), ok in zip(indexed, eligibility):
        if not ok:
            continue
        n = probes_per_example(probe_cfg.gamma, probe_cfg.rng_seed, epoch, origin_id)
        tasks.extend((origin_id, ex, j) for j in range(n))

    def run_probe(task):
        origin_id, ex, j = task
        rng = seeding.make_rng(probe_cfg.rng_seed, seeding.PROBE, epoch, origin_id, j)
        ids = np.asarray(ex.token_ids)
        maskable = maskable_positions(ids)
        positions = maskable[sample_mask(maskable.size, probe_cfg.mask_ratio, rng)]
        variant = replace(ex, token_ids=apply_mask(ids, positions))
        flipped = model.predict_label(variant, mode) != ex.target_label
        labels = np.full(ids.size, NO_LABEL, dtype=np.int64)
        labels[positions] = 1 if flipped else 0
        return SsaLabeledExample(ids, ex.target_label, labels, origin_id, epoch)

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(run_probe, tasks, chunksize=16))
    return [run_probe(t) for t in tasks]


def mask_augment(dataset, probe_cfg: ProbeConfig, rng: np.random.Generator):
    """Masked copies for augmentation-only training: ~gamma variants per
    sentence with the sampled positions actually replaced by [MASK] and the
    original label kept. No importance labels involved."""
    out = []
    for ex in dataset:
        base = math.floor(probe_cfg.gamma)
        frac = probe_cfg.gamma - base
        n = base + (1 if frac > 0.0 and rng.random() < frac else 0)
        maskable = maskable_positions(ex.token_ids)
        if maskable.size == 0:
            continue
        for _ in range(n):
            positions = maskable[sample_mask(maskable.size, probe_cfg.mask_ratio, rng)]
            out.append(replace(ex, token_ids=apply_mask(ex.token_ids, positions)))
    return out


# ----------------------------------------------------------------- dump file


def dump_labels(labeled, path):
    """One line per labeled example: origin_id TAB space-joined labels,
    "_" standing in for NO_LABEL."""
    with open(path, "w", encoding="utf-8") as f:
        for le in labeled:
            body = " ".join("_" if v == NO_LABEL else str(int(v)) for v in le.ssa_labels)
            f.write(f"{le.origin_id}\t{body}\n")


def load_labels_dump(path):
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            origin, body = line.split("\t")
            labels = np.array([NO_LABEL if v == "_" else int(v) for v in body.split(" ")],
                              dtype=np.int64)
            out.append((int(origin), labels))
    return out
