"""Decision-flip probing: mask sampling stats, label bookkeeping, and
exact agreement with a brute-force reimplementation."""

import numpy as np
import pytest

from ssattn import seeding
from ssattn.corpus import Example, MASK_ID, synth_generate, SynthSpec
from ssattn.encoder import EncoderConfig, EncoderModel, CLS_ID, SEP_ID, PAD_ID
from ssattn.probing import (
    NO_LABEL,
    ProbeConfig,
    SsaLabeledExample,
    apply_mask,
    dump_labels,
    generate_epoch_labels,
    load_labels_dump,
    mask_augment,
    maskable_positions,
    probe,
    probe_with_mask,
    probes_per_example,
    sample_mask,
)


def make_example(content_ids, target=0):
    ids = np.array([CLS_ID] + list(content_ids) + [SEP_ID], dtype=np.int64)
    return Example(ids, np.zeros(len(ids), dtype=np.int64), target)


class FixedModel:
    """Always predicts the same class, whatever the input."""

    def __init__(self, label=0):
        self.label = label

    def predict_label(self, example, mode="cls"):
        return self.label


class TokenGateModel:
    """Predicts 0 while the trigger token survives, 1 once it is masked out."""

    def __init__(self, trigger=42):
        self.trigger = trigger

    def predict_label(self, example, mode="cls"):
        return 0 if self.trigger in np.asarray(example.token_ids) else 1


# ------------------------------------------------------------ mask sampling


def test_mask_size_pins():
    rng = seeding.make_rng(0, seeding.PROBE, 0, 0, 0)
    # banker's rounding: 0.3*7 = 2.1 -> 2, 0.5*5 = 2.5 -> 2, 0.3*2 = 0.6 -> 1
    assert sample_mask(7, 0.3, rng).size == 2
    assert sample_mask(5, 0.5, rng).size == 2
    assert sample_mask(2, 0.3, rng).size == 1
    assert sample_mask(10, 0.3, rng).size == 3
    # floor would give 0 here; at least one token is always masked
    assert sample_mask(1, 0.3, rng).size == 1
    assert sample_mask(1, 0.01, rng).size == 1


def test_mask_indices_sorted_distinct_in_range():
    for trial in range(50):
        rng = seeding.make_rng(7, seeding.PROBE, 0, trial, 0)
        idx = sample_mask(12, 0.4, rng)
        assert np.all(np.diff(idx) > 0)
        assert idx.min() >= 0 and idx.max() < 12


def test_mask_positions_uniform():
    # 10k draws of 3-of-10: each position expects 3000 hits
    counts = np.zeros(10, dtype=np.int64)
    for trial in range(10_000):
        rng = seeding.make_rng(1, seeding.PROBE, 0, trial, 0)
        counts[sample_mask(10, 0.3, rng)] += 1
    assert counts.sum() == 30_000
    assert np.all(np.abs(counts - 3000) <= 200), counts


def test_probe_config_validation():
    for ratio in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            ProbeConfig(mask_ratio=ratio)
    for gamma in (0.0, -1.0):
        with pytest.raises(ValueError):
            ProbeConfig(gamma=gamma)


def test_maskable_excludes_specials():
    ex = make_example([10, 11, 12])
    ids_padded = np.concatenate([ex.token_ids, [PAD_ID, PAD_ID]])
    assert maskable_positions(ids_padded).tolist() == [1, 2, 3]


# ------------------------------------------------------------- probe logic


def test_wrong_prediction_means_no_probe():
    model = FixedModel(label=1)
    ex = make_example([10, 11, 12], target=0)
    rng = seeding.make_rng(0, seeding.PROBE, 0, 0, 0)
    assert probe(model, ex, ProbeConfig(), rng) is None
    assert probe_with_mask(model, ex, [1, 2]) is None


def test_no_flip_labels_zero_and_only_masked_positions():
    model = FixedModel(label=0)
    ex = make_example([10, 11, 12, 13, 14], target=0)
    rng = seeding.make_rng(0, seeding.PROBE, 0, 0, 0)
    out = probe(model, ex, ProbeConfig(mask_ratio=0.4), rng)
    labeled = np.flatnonzero(out.ssa_labels != NO_LABEL)
    # same rng stream replays the same mask draw
    rng2 = seeding.make_rng(0, seeding.PROBE, 0, 0, 0)
    expected = maskable_positions(ex.token_ids)[sample_mask(5, 0.4, rng2)]
    assert labeled.tolist() == expected.tolist()
    assert np.all(out.ssa_labels[labeled] == 0)
    # original ids travel with the labels, not the masked ones
    assert np.array_equal(out.token_ids, ex.token_ids)


def test_flip_labels_one():
    model = TokenGateModel(trigger=42)
    ex = make_example([10, 42, 12], target=0)
    out = probe_with_mask(model, ex, [2])  # position of 42
    assert out.tolist() == [NO_LABEL, NO_LABEL, 1, NO_LABEL, NO_LABEL]
    out = probe_with_mask(model, ex, [1, 3])  # trigger survives
    assert out.tolist() == [NO_LABEL, 0, NO_LABEL, 0, NO_LABEL]


def test_specials_never_labeled_and_single_value():
    model = TokenGateModel()
    for trial in range(30):
        content = [10 + trial, 42, 12, 13][: 2 + trial % 3]
        ex = make_example(content, target=0)
        rng = seeding.make_rng(3, seeding.PROBE, 0, trial, 0)
        out = probe(model, ex, ProbeConfig(mask_ratio=0.5), rng)
        if out is None:
            continue
        assert out.ssa_labels[0] == NO_LABEL  # [CLS]
        assert out.ssa_labels[-1] == NO_LABEL  # [SEP]
        vals = set(out.ssa_labels[out.ssa_labels != NO_LABEL].tolist())
        assert len(vals) == 1 and vals <= {0, 1}


def test_zero_maskable_returns_none():
    ids = np.array([CLS_ID, SEP_ID], dtype=np.int64)
    ex = Example(ids, np.zeros(2, dtype=np.int64), 0)
    rng = seeding.make_rng(0, seeding.PROBE, 0, 0, 0)
    assert probe(FixedModel(0), ex, ProbeConfig(), rng) is None


# ------------------------------------------------------- per-example budget


def test_integer_gamma_counts():
    assert probes_per_example(1.0, seed=0, epoch=0, origin_id=5) == 1
    assert probes_per_example(2.0, seed=0, epoch=0, origin_id=5) == 2
    assert probes_per_example(3.0, seed=9, epoch=4, origin_id=0) == 3


def test_fractional_gamma_rate():
    counts = [probes_per_example(1.4, seed=11, epoch=0, origin_id=i) for i in range(4000)]
    assert set(counts) <= {1, 2}
    got = np.mean(counts)
    assert abs(got - 1.4) < 0.03, got
    # deterministic per (seed, epoch, origin)
    again = [probes_per_example(1.4, seed=11, epoch=0, origin_id=i) for i in range(4000)]
    assert counts == again


def small_model_and_data(n=40, seed=5):
    spec = SynthSpec(n_examples=n, vocab_size=120, len_lo=5, len_hi=9, seed=seed)
    corpus = synth_generate(spec)
    data = corpus.train + corpus.dev + corpus.test
    cfg = EncoderConfig(vocab_size=len(corpus.vocab), d_model=16, n_layers=1,
                        n_heads=2, d_ff=24, max_len=16)
    return EncoderModel(cfg, seed=1), data


def test_gamma_two_doubles_attempts():
    model, data = small_model_and_data()
    one = generate_epoch_labels(model, data, ProbeConfig(gamma=1.0, rng_seed=3), epoch=0)
    two = generate_epoch_labels(model, data, ProbeConfig(gamma=2.0, rng_seed=3), epoch=0)
    assert len(two) == 2 * len(one)
    per_origin_one = {o: sum(1 for r in one if r.origin_id == o) for o in range(len(data))}
    per_origin_two = {o: sum(1 for r in two if r.origin_id == o) for o in range(len(data))}
    assert per_origin_two == {o: 2 * c for o, c in per_origin_one.items()}
    # probe j is the same draw under both budgets
    for a, b in zip(one, [r for r in two if r.ssa_labels is not None][::2]):
        assert a.origin_id == b.origin_id
        assert np.array_equal(a.ssa_labels, b.ssa_labels)


def test_epoch_labels_deterministic_and_sorted():
    model, data = small_model_and_data()
    cfg = ProbeConfig(mask_ratio=0.3, gamma=1.0, rng_seed=7)
    a = generate_epoch_labels(model, data, cfg, epoch=2)
    b = generate_epoch_labels(model, data, cfg, epoch=2)
    assert len(a) == len(b) > 0
    for x, y in zip(a, b):
        assert x.origin_id == y.origin_id and x.epoch_generated == 2
        assert np.array_equal(x.ssa_labels, y.ssa_labels)
        assert np.array_equal(x.token_ids, y.token_ids)
    assert [x.origin_id for x in a] == sorted(x.origin_id for x in a)


def test_epoch_changes_masks():
    model, data = small_model_and_data()
    cfg = ProbeConfig(gamma=1.0, rng_seed=7)
    a = generate_epoch_labels(model, data, cfg, epoch=0)
    b = generate_epoch_labels(model, data, cfg, epoch=1)
    sets_a = ["".join(map(str, r.ssa_labels)) for r in a]
    sets_b = ["".join(map(str, r.ssa_labels)) for r in b]
    assert sets_a != sets_b


def test_parallel_matches_serial():
    model, data = small_model_and_data(n=60)
    cfg = ProbeConfig(gamma=1.4, rng_seed=9)
    serial = generate_epoch_labels(model, data, cfg, epoch=1, n_workers=1)
    parallel = generate_epoch_labels(model, data, cfg, epoch=1, n_workers=4)
    assert len(serial) == len(parallel)
    for s, p in zip(serial, parallel):
        assert s.origin_id == p.origin_id
        assert s.target_label == p.target_label
        assert np.array_equal(s.ssa_labels, p.ssa_labels)
        assert np.array_equal(s.token_ids, p.token_ids)


def test_brute_force_oracle_agreement():
    """200 (example, mask) pairs checked against a from-scratch reimplementation
    of the eligibility filter and flip rule."""
    model, data = small_model_and_data(n=50, seed=8)
    checked = 0
    trial = 0
    while checked < 200:
        ex = data[trial % len(data)]
        rng = seeding.make_rng(13, seeding.PROBE, 0, trial, 0)
        maskable = maskable_positions(ex.token_ids)
        positions = maskable[sample_mask(maskable.size, 0.3, rng)]
        got = probe_with_mask(model, ex, positions, mode="cls")

        # oracle: plain loop, no shared helpers beyond the model itself
        pred = model.predict_label(ex)
        if pred != ex.target_label:
            want = None
        else:
            masked_ids = ex.token_ids.copy()
            for p in positions:
                masked_ids[p] = MASK_ID
            masked_ex = Example(masked_ids, ex.segment_ids, ex.target_label)
            value = 1 if model.predict_label(masked_ex) != pred else 0
            want = [value if i in set(positions.tolist()) else NO_LABEL
                    for i in range(len(ex.token_ids))]

        if want is None:
            assert got is None
        else:
            assert got.tolist() == want
        checked += 1
        trial += 1


def test_hybrid_mode_probes_hybrid_path():
    model, data = small_model_and_data(n=30, seed=2)
    cls_out = generate_epoch_labels(model, data, ProbeConfig(rng_seed=4), epoch=0, mode="cls")
    hyb_out = generate_epoch_labels(model, data, ProbeConfig(rng_seed=4), epoch=0, mode="hybrid")
    for r in hyb_out:
        assert model.predict_label(data[r.origin_id], "hybrid") == r.target_label
    # different pooling, generally a different eligible set
    assert isinstance(cls_out, list) and isinstance(hyb_out, list)


# ------------------------------------------------------------ augmentation


def test_mask_augment_counts_and_edits():
    _, data = small_model_and_data(n=20)
    cfg = ProbeConfig(mask_ratio=0.3, gamma=2.0, rng_seed=0)
    rng = seeding.make_rng(0, seeding.AUGMENT)
    variants = mask_augment(data, cfg, rng)
    assert len(variants) == 2 * len(data)
    for orig, pair in zip(data, zip(variants[::2], variants[1::2])):
        for v in pair:
            assert v.target_label == orig.target_label
            diff = np.flatnonzero(v.token_ids != orig.token_ids)
            assert diff.size >= 1
            assert np.all(v.token_ids[diff] == MASK_ID)
            # only content positions were touched
            assert np.all(~np.isin(diff, [0, len(orig.token_ids) - 1]))
    # caller's rng drives it: same stream, same output
    again = mask_augment(data, cfg, seeding.make_rng(0, seeding.AUGMENT))
    assert all(np.array_equal(a.token_ids, b.token_ids) for a, b in zip(variants, again))


def test_mask_augment_fractional_gamma():
    _, data = small_model_and_data(n=30)
    cfg = ProbeConfig(gamma=0.5, rng_seed=0)
    variants = mask_augment(data, cfg, seeding.make_rng(1, seeding.AUGMENT))
    assert 0 < len(variants) < len(data)


# ---------------------------------------------------------------- dump file


def test_dump_roundtrip(tmp_path):
    model, data = small_model_and_data()
    out = generate_epoch_labels(model, data, ProbeConfig(rng_seed=5), epoch=0)
    path = tmp_path / "labels.dump"
    dump_labels(out, path)
    back = load_labels_dump(path)
    assert len(back) == len(out)
    for le, (origin, labels) in zip(out, back):
        assert le.origin_id == origin
        assert np.array_equal(le.ssa_labels, labels)
    first = path.read_text(encoding="utf-8").splitlines()[0]
    origin_str, body = first.split("\t")
    assert origin_str == str(out[0].origin_id)
    toks = body.split(" ")
    assert len(toks) == len(out[0].ssa_labels)
    assert set(toks) <= {"_", "0", "1"}
    assert "_" in toks  # [CLS] is never labeled


def test_dump_format_pinned(tmp_path):
    le = SsaLabeledExample(np.array([CLS_ID, 9, 9, SEP_ID]), 1,
                           np.array([NO_LABEL, 1, NO_LABEL, NO_LABEL]), 17, 0)
    path = tmp_path / "one.dump"
    dump_labels([le], path)
    assert path.read_text(encoding="utf-8") == "17\t_ 1 _ _\n"
    assert load_labels_dump(path)[0][0] == 17
