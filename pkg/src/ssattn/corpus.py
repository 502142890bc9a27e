"""Tokenization, vocabulary, dataset ingestion, and a synthetic
keyword-sentiment corpus with known important positions.

The synthetic generator plants exactly one label-determining keyword per
sentence among neutral fillers, and with some probability also injects a
polarity-flavored distractor word drawn independently of the label. The
distractor therefore carries no label signal (a lexicon classifier over
distractors sits at chance) but looks like it should: a model that weights
tokens by true importance has to put the keyword above it.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .encoder import CLS_ID, PAD_ID, SEP_ID

MASK_ID = 3
UNK_ID = 4
RESERVED = ("[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, punctuation becomes its own token."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Token/id map with a fixed 5-slot reserved block at ids 0..4."""

    def __init__(self, extra_tokens):
        self.tokens = list(RESERVED) + list(extra_tokens)
        if len(set(self.tokens)) != len(self.tokens):
            raise CorpusError("duplicate tokens in vocabulary")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def encode_token(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def decode_id(self, i: int) -> str:
        return self.tokens[i]

    def content_hash(self) -> str:
        h = hashlib.sha256("\n".join(self.tokens).encode("utf-8"))
        return h.hexdigest()[:16]

    def save(self, path):
        # one non-reserved token per line; line number (0-based) = id - 5
        with open(path, "w", encoding="utf-8") as f:
            for t in self.tokens[5:]:
                f.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])


def build_vocab(token_lists, min_freq: int = 1) -> Vocabulary:
    """Frequency-sorted vocabulary (ties lexicographic); tokens under
    min_freq are dropped and will encode to [UNK]."""
    counts: dict[str, int] = {}
    for toks in token_lists:
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
    kept = [t for t, c in counts.items() if c >= min_freq and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


@dataclass
class Example:
    token_ids: np.ndarray
    segment_ids: np.ndarray
    target_label: int
    gold_keyword_positions: tuple = ()

    def __post_init__(self):
        self.token_ids = np.asarray(self.token_ids, dtype=np.int64)
        self.segment_ids = np.asarray(self.segment_ids, dtype=np.int64)
        if self.token_ids[0] != CLS_ID:
            raise CorpusError("token_ids must start with [CLS]")


def encode_sentence(vocab: Vocabulary, tokens) -> tuple[np.ndarray, np.ndarray]:
    ids = [CLS_ID] + [vocab.encode_token(t) for t in tokens] + [SEP_ID]
    return np.array(ids, dtype=np.int64), np.zeros(len(ids), dtype=np.int64)


def encode_pair(vocab: Vocabulary, tokens_a, tokens_b) -> tuple[np.ndarray, np.ndarray]:
    a = [vocab.encode_token(t) for t in tokens_a]
    bb = [vocab.encode_token(t) for t in tokens_b]
    ids = [CLS_ID] + a + [SEP_ID] + bb + [SEP_ID]
    segs = [0] * (len(a) + 2) + [1] * (len(bb) + 1)
    return np.array(ids, dtype=np.int64), np.array(segs, dtype=np.int64)


def load_tsv(path, schema: str, vocab: Vocabulary) -> list[Example]:
    """Read sentence\\tlabel ("single") or s1\\ts2\\tlabel ("pair") lines.

    Malformed rows raise CorpusError naming the 1-based line number.
    """
    if schema not in ("single", "pair"):
        raise CorpusError(f"unknown schema {schema!r}")
    want = 2 if schema == "single" else 3
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != want:
                raise CorpusError(f"{path}: line {lineno}: expected {want} columns, got {len(cols)}")
            try:
                label = int(cols[-1])
            except ValueError:
                raise CorpusError(f"{path}: line {lineno}: unknown label {cols[-1]!r}") from None
            if schema == "single":
                ids, segs = encode_sentence(vocab, tokenize(cols[0]))
            else:
                ids, segs = encode_pair(vocab, tokenize(cols[0]), tokenize(cols[1]))
            out.append(Example(ids, segs, label))
    return out


def collate(examples, pad_to: int | None = None):
    """Right-pad a list of Examples into (token_ids, segment_ids, pad_mask)
    int arrays of shape (B, n)."""
    n = pad_to or max(len(e.token_ids) for e in examples)
    b = len(examples)
    ids = np.full((b, n), PAD_ID, dtype=np.int64)
    segs = np.zeros((b, n), dtype=np.int64)
    for i, e in enumerate(examples):
        ln = len(e.token_ids)
        if ln > n:
            raise CorpusError(f"example length {ln} exceeds pad width {n}")
        ids[i, :ln] = e.token_ids
        segs[i, :ln] = e.segment_ids
    return ids, segs, ids != PAD_ID


# ------------------------------------------------------------ synthetic data

POS_KEYWORDS = (
    "good great excellent wonderful superb delightful charming brilliant "
    "touching uplifting lovely inspired engaging vibrant heartfelt witty "
    "masterful graceful riveting luminous"
).split()

NEG_KEYWORDS = (
    "bad awful terrible dreadful boring dull tedious clumsy lifeless stale "
    "shallow sloppy grating hollow plodding inert muddled leaden listless "
    "insufferable"
).split()

# polarity-flavored words injected independently of the label
DISTRACTORS = (
    "foul freaky slick gritty dark sweet sharp wild weird quirky raw stiff"
).split()


@dataclass
class SynthSpec:
    n_examples: int = 2500
    vocab_size: int = 1000
    pos_keywords: tuple = tuple(POS_KEYWORDS)
    neg_keywords: tuple = tuple(NEG_KEYWORDS)
    distractors: tuple = tuple(DISTRACTORS)
    len_lo: int = 5
    len_hi: int = 15
    distractor_prob: float = 0.5
    n_distractors: int = 2
    seed: int = 0

    def __post_init__(self):
        kw = set(self.pos_keywords) | set(self.neg_keywords)
        if kw & set(self.distractors):
            raise CorpusError("keyword lexicons must be disjoint from distractors")
        fixed = 5 + len(kw) + len(self.distractors)
        if self.vocab_size <= fixed:
            raise CorpusError(f"vocab_size must exceed {fixed}")
        if not 0 < self.len_lo <= self.len_hi:
            raise CorpusError("bad sentence length range")


@dataclass
class SynthCorpus:
    train: list
    dev: list
    test: list
    vocab: Vocabulary
    keyword_ids: frozenset = field(default_factory=frozenset)
    distractor_ids: frozenset = field(default_factory=frozenset)


def synth_generate(spec: SynthSpec) -> SynthCorpus:
    """Generate the keyword-sentiment corpus, split 80/10/10.

    Each sentence: one keyword (decides the label), fillers, and with
    probability distractor_prob a run of distractor words whose lexicon
    entries occur equally under both labels.
    """
    words = list(spec.pos_keywords) + list(spec.neg_keywords) + list(spec.distractors)
    n_filler = spec.vocab_size - 5 - len(words)
    fillers = [f"w{i:04d}" for i in range(n_filler)]
    vocab = Vocabulary(words + fillers)

    rng = seeding.make_rng(spec.seed, seeding.SYNTH)
    examples = []
    for _ in range(spec.n_examples):
        length = int(rng.integers(spec.len_lo, spec.len_hi + 1))
        label = int(rng.integers(0, 2))
        lex = spec.pos_keywords if label == 1 else spec.neg_keywords
        keyword = lex[int(rng.integers(0, len(lex)))]
        toks = [fillers[int(rng.integers(0, n_filler))] for _ in range(length)]
        slots = rng.permutation(length)
        toks[slots[0]] = keyword
        if rng.random() < spec.distractor_prob:
            n_d = min(spec.n_distractors, length - 1)
            for s in slots[1:1 + n_d]:
                toks[s] = spec.distractors[int(rng.integers(0, len(spec.distractors)))]
        ids, segs = encode_sentence(vocab, toks)
        examples.append(Example(ids, segs, label,
                                gold_keyword_positions=(int(slots[0]) + 1,)))

    order = rng.permutation(spec.n_examples)
    n_train = round(0.8 * spec.n_examples)
    n_dev = round(0.1 * spec.n_examples)
    pick = lambda idx: [examples[i] for i in idx]
    return SynthCorpus(
        train=pick(order[:n_train]),
        dev=pick(order[n_train:n_train + n_dev]),
        test=pick(order[n_train + n_dev:]),
        vocab=vocab,
        keyword_ids=frozenset(vocab.encode_token(w) for w in
                              list(spec.pos_keywords) + list(spec.neg_keywords)),
        distractor_ids=frozenset(vocab.encode_token(w) for w in spec.distractors),
    )


# ------------------------------------------------------------- spec file IO

_SYNTH_INT = {"n_examples", "vocab_size", "len_lo", "len_hi", "seed", "n_distractors"}
_SYNTH_FLOAT = {"distractor_prob"}
_SYNTH_WORDS = {"pos_keywords", "neg_keywords", "distractors"}


def synth_spec_from_file(path) -> SynthSpec:
    kv = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CorpusError(f"{path}: line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip()
            value = value.strip()
            if key in _SYNTH_INT:
                kv[key] = int(value)
            elif key in _SYNTH_FLOAT:
                kv[key] = float(value)
            elif key in _SYNTH_WORDS:
                kv[key] = tuple(value.split(","))
            else:
                raise CorpusError(f"{path}: line {lineno}: unknown key {key!r}")
    return SynthSpec(**kv)


def synth_spec_to_file(spec: SynthSpec, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"n_examples={spec.n_examples}\n")
        f.write(f"vocab_size={spec.vocab_size}\n")
        f.write(f"len_lo={spec.len_lo}\n")
        f.write(f"len_hi={spec.len_hi}\n")
        f.write(f"seed={spec.seed}\n")
        f.write(f"n_distractors={spec.n_distractors}\n")
        f.write(f"distractor_prob={spec.distractor_prob}\n")
        f.write(f"pos_keywords={','.join(spec.pos_keywords)}\n")
        f.write(f"neg_keywords={','.join(spec.neg_keywords)}\n")
        f.write(f"distractors={','.join(spec.distractors)}\n")
