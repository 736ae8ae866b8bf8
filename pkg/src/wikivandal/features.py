"""Sparse feature construction for revision cases.

Layout of the feature space for a vocabulary of ``V`` words::

    [0, 4V)                 word slots, four per word:
                            base*4 + 0  diff-add   (count increased)
                            base*4 + 1  diff-sub   (count decreased)
                            base*4 + 2  ratio-pos
                            base*4 + 3  ratio-neg
    [4V, 4V + 271)          ancillary slots (see ``ANCILLARY_SLOTS``)
    [4V + 271, 5V + 271)    comment bag-of-words, one slot per word

Every stored value is scaled into (0, 1]; zeros are never stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .ingest import RevisionCase
from .tokens import TokenCounts, count_tokens, tokenize

DIFF_ADD, DIFF_SUB, RATIO_POS, RATIO_NEG = range(4)
SLOT_NAMES = ("diff_add", "diff_sub", "ratio_pos", "ratio_neg")
SLOTS_PER_WORD = 4

SCALINGS = ("atan", "binary", "log-lin")

ANCILLARY_SLOTS: tuple[str, ...] = (
    ("empty_text", "has_comment", "minor", "external_links_change")
    + tuple(f"ip_octet1={i}" for i in range(256))
    + (
        "merged_minus_one",
        "prev_text_chars",
        "cur_text_chars",
        "prev_text_words",
        "cur_text_words",
        "text_chars_added",
        "text_chars_removed",
        "text_words_added",
        "text_words_removed",
        "comment_chars",
        "comment_words",
    )
)
ANCILLARY_INDEX = {name: i for i, name in enumerate(ANCILLARY_SLOTS)}
N_ANCILLARY = len(ANCILLARY_SLOTS)
_IP_BASE = ANCILLARY_INDEX["ip_octet1=0"]

_EXTERNAL_LINKS_HEADING = ("==", "external", "links", "==")


@dataclass(frozen=True)
class SparseVector:
    """Feature ids strictly increasing, values nonzero."""

    ids: tuple[int, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.ids) != len(self.values):
            raise ValueError("ids and values differ in length")
        if any(b <= a for a, b in zip(self.ids, self.ids[1:])):
            raise ValueError("feature ids must be strictly increasing")
        if any(v == 0 for v in self.values):
            raise ValueError("zero values must not be stored")

    @classmethod
    def from_dict(cls, d: Mapping[int, float]) -> "SparseVector":
        items = sorted((k, v) for k, v in d.items() if v != 0)
        return cls(tuple(k for k, _ in items), tuple(float(v) for _, v in items))

    def to_dict(self) -> dict[int, float]:
        return dict(zip(self.ids, self.values))

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class LabeledInstance:
    features: SparseVector
    label: int  # +1 vandalism, -1 legitimate

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.label!r}")


class VocabMap:
    """Bidirectional word <-> base-id map with fixed slot arithmetic."""

    def __init__(self, words: Iterable[str] = ()):
        self.id_to_word: list[str] = []
        self.word_to_id: dict[str, int] = {}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        if word not in self.word_to_id:
            self.word_to_id[word] = len(self.id_to_word)
            self.id_to_word.append(word)
        return self.word_to_id[word]

    def __len__(self):
        return len(self.id_to_word)

    def __contains__(self, word):
        return word in self.word_to_id

    def __eq__(self, other):
        return isinstance(other, VocabMap) and self.id_to_word == other.id_to_word

    @property
    def ancillary_offset(self) -> int:
        return SLOTS_PER_WORD * len(self)

    @property
    def comment_offset(self) -> int:
        return self.ancillary_offset + N_ANCILLARY

    @property
    def n_features(self) -> int:
        return self.comment_offset + len(self)

    def slot(self, word: str, kind: int) -> int | None:
        base = self.word_to_id.get(word)
        return None if base is None else base * SLOTS_PER_WORD + kind

    def describe(self, feature_id: int) -> tuple[str, str]:
        """Inverse of the slot arithmetic: ``(word or slot name, slot kind)``."""
        if not 0 <= feature_id < self.n_features:
            raise IndexError(feature_id)
        if feature_id < self.ancillary_offset:
            base, kind = divmod(feature_id, SLOTS_PER_WORD)
            return self.id_to_word[base], SLOT_NAMES[kind]
        if feature_id < self.comment_offset:
            return ANCILLARY_SLOTS[feature_id - self.ancillary_offset], "ancillary"
        return self.id_to_word[feature_id - self.comment_offset], "comment"

    @classmethod
    def build(cls, cases: Iterable[RevisionCase]) -> "VocabMap":
        """Vocabulary of every token in the cases' texts and comments, first-seen order."""
        vocab = cls()
        for case in cases:
            for text in (case.prev_text, case.cur_text, case.comment):
                for tok in tokenize(text):
                    vocab.add(tok)
        return vocab

    def save(self, fh: IO[str]) -> None:
        fh.write(
            f"# slots_per_word={SLOTS_PER_WORD} slots={','.join(SLOT_NAMES)} "
            f"ancillary_offset={self.ancillary_offset} n_ancillary={N_ANCILLARY} "
            f"comment_offset={self.comment_offset} n_features={self.n_features}\n"
        )
        for i, w in enumerate(self.id_to_word):
            fh.write(f"{i}\t{w}\n")

    @classmethod
    def load(cls, fh: IO[str]) -> "VocabMap":
        vocab = cls()
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            idx, word = line.rstrip("\n").split("\t", 1)
            if int(idx) != len(vocab):
                raise ValueError(f"vocabulary ids out of order at {idx}")
            vocab.add(word)
        return vocab


def word_delta(prev: TokenCounts, cur: TokenCounts) -> tuple[dict[str, int], dict[str, float]]:
    """Count differences and zero-centred count ratios for changed words."""
    diff: dict[str, int] = {}
    ratio: dict[str, float] = {}
    for w in set(prev.counts) | set(cur.counts):
        i, j = prev[w], cur[w]
        if i == j:
            continue
        diff[w] = j - i
        ratio[w] = j / max(i, 1) if j > i else -(i / max(j, 1))
    return diff, ratio


def sign_split(diff: Mapping[str, int], ratio: Mapping[str, float]) -> dict[tuple[str, int], float]:
    """Split signed deltas into unsigned ``(word, slot kind)`` values."""
    out: dict[tuple[str, int], float] = {}
    for w, d in diff.items():
        if d > 0:
            out[w, DIFF_ADD] = float(d)
        elif d < 0:
            out[w, DIFF_SUB] = float(-d)
    for w, r in ratio.items():
        if r > 0:
            out[w, RATIO_POS] = float(r)
        elif r < 0:
            out[w, RATIO_NEG] = float(-r)
    return out


def _has_heading(tokens: Sequence[str], heading=_EXTERNAL_LINKS_HEADING) -> bool:
    n = len(heading)
    return any(tuple(tokens[i:i + n]) == heading for i in range(len(tokens) - n + 1))


def external_links_changed(prev_tokens: Sequence[str], cur_tokens: Sequence[str],
                           prev: TokenCounts, cur: TokenCounts) -> bool:
    return (_has_heading(prev_tokens) != _has_heading(cur_tokens)) or prev["external"] != cur["external"]


def ancillary_features(case: RevisionCase, prev_tokens: Sequence[str], cur_tokens: Sequence[str],
                       comment_tokens: Sequence[str]) -> dict[int, float]:
    """Raw (unscaled) ancillary values keyed by index into ``ANCILLARY_SLOTS``."""
    prev, cur = count_tokens(prev_tokens), count_tokens(cur_tokens)
    raw: dict[str, float] = {
        "empty_text": float(case.cur_text == ""),
        "has_comment": float(case.comment.strip() != ""),
        "minor": float(bool(case.minor)),
        "external_links_change": float(external_links_changed(prev_tokens, cur_tokens, prev, cur)),
        f"ip_octet1={case.ip_octet1}": 1.0,
        "merged_minus_one": float(case.merged_count - 1),
        "prev_text_chars": float(len(case.prev_text)),
        "cur_text_chars": float(len(case.cur_text)),
        "prev_text_words": float(len(prev_tokens)),
        "cur_text_words": float(len(cur_tokens)),
        "comment_chars": float(len(case.comment)),
        "comment_words": float(len(comment_tokens)),
    }
    dchars = len(case.cur_text) - len(case.prev_text)
    dwords = len(cur_tokens) - len(prev_tokens)
    raw["text_chars_added" if dchars > 0 else "text_chars_removed"] = float(abs(dchars))
    raw["text_words_added" if dwords > 0 else "text_words_removed"] = float(abs(dwords))
    return {ANCILLARY_INDEX[k]: v for k, v in raw.items() if v != 0}


@dataclass
class ScalingSpec:
    kind: str
    per_feature_max: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCALINGS:
            raise ValueError(f"unknown scaling {self.kind!r}; expected one of {SCALINGS}")
        if any(m <= 0 for m in self.per_feature_max.values()):
            raise ValueError("per-feature maxima must be positive")

    def save(self, fh: IO[str]) -> None:
        fh.write(f"kind\t{self.kind}\n")
        for fid in sorted(self.per_feature_max):
            fh.write(f"{fid}\t{self.per_feature_max[fid]!r}\n")

    @classmethod
    def load(cls, fh: IO[str]) -> "ScalingSpec":
        tag, kind = fh.readline().rstrip("\n").split("\t")
        if tag != "kind":
            raise ValueError("scaling file must start with a kind line")
        maxima = {}
        for line in fh:
            if line.strip():
                fid, mx = line.split("\t")
                maxima[int(fid)] = float(mx)
        return cls(kind, maxima)


def fit_scaler(kind: str, instances: Iterable[Mapping[int, float]]) -> ScalingSpec:
    """Record per-feature training maxima (log-lin only).

    ``instances`` are raw, unscaled feature maps as produced by
    :meth:`Featurizer.raw`.
    """
    if kind not in SCALINGS:
        raise ValueError(f"unknown scaling {kind!r}")
    if kind != "log-lin":
        return ScalingSpec(kind)
    maxima: dict[int, float] = {}
    seen = False
    for inst in instances:
        seen = True
        for fid, v in inst.items():
            if v > maxima.get(fid, 0.0):
                maxima[fid] = v
    if not seen:
        raise ValueError("log-lin scaling needs at least one training instance")
    return ScalingSpec(kind, maxima)


def scale(x: float, spec: ScalingSpec, feature_id: int) -> float:
    if x < 0:
        raise ValueError("scaling is defined for x >= 0 only")
    if x == 0:
        return 0.0
    if spec.kind == "binary":
        return 1.0
    if spec.kind == "atan":
        return math.atan(x) * 2.0 / math.pi
    mx = spec.per_feature_max.get(feature_id, 0.0)
    if x >= mx:
        return 1.0
    return math.log1p(x) / math.log1p(mx)


class Featurizer:
    """Turns cases into sparse instances for a fixed vocabulary."""

    def __init__(self, vocab: VocabMap, scaling: ScalingSpec | None = None):
        self.vocab = vocab
        self.scaling = scaling

    def raw(self, case: RevisionCase) -> dict[int, float]:
        """Unscaled, sign-split feature values keyed by feature id."""
        prev_tokens, cur_tokens = tokenize(case.prev_text), tokenize(case.cur_text)
        comment_tokens = tokenize(case.comment)
        return self._raw(case, prev_tokens, cur_tokens, comment_tokens)

    def _raw(self, case, prev_tokens, cur_tokens, comment_tokens) -> dict[int, float]:
        vocab = self.vocab
        binary = self.scaling is not None and self.scaling.kind == "binary"
        diff, ratio = word_delta(count_tokens(prev_tokens), count_tokens(cur_tokens))
        out: dict[int, float] = {}
        for (word, kind), v in sign_split(diff, ratio).items():
            if binary and kind >= RATIO_POS:
                continue
            fid = vocab.slot(word, kind)
            if fid is not None:
                out[fid] = v
        off = vocab.ancillary_offset
        for idx, v in ancillary_features(case, prev_tokens, cur_tokens, comment_tokens).items():
            out[off + idx] = v
        off = vocab.comment_offset
        for word, c in count_tokens(comment_tokens).counts.items():
            base = vocab.word_to_id.get(word)
            if base is not None:
                out[off + base] = float(c)
        return out

    def scale_raw(self, raw: Mapping[int, float]) -> SparseVector:
        if self.scaling is None:
            raise ValueError("featurizer has no scaling spec")
        scaled = {fid: scale(v, self.scaling, fid) for fid, v in raw.items()}
        return SparseVector.from_dict(scaled)

    def assemble(self, case: RevisionCase) -> LabeledInstance:
        return LabeledInstance(self.scale_raw(self.raw(case)), 1 if case.is_vandalism else -1)


def assemble(case: RevisionCase, vocab: VocabMap, scaling: ScalingSpec) -> LabeledInstance:
    return Featurizer(vocab, scaling).assemble(case)


def featurize_cases(cases: Sequence[RevisionCase], vocab: VocabMap, kind: str,
                    scaling: ScalingSpec | None = None) -> tuple[list[LabeledInstance], ScalingSpec]:
    """Featurize ``cases``; fits the scaler on them when ``scaling`` is None."""
    probe = Featurizer(vocab, ScalingSpec(kind))
    raws = [probe.raw(c) for c in cases]
    if scaling is None:
        scaling = fit_scaler(kind, raws)
    fz = Featurizer(vocab, scaling)
    instances = [LabeledInstance(fz.scale_raw(r), 1 if c.is_vandalism else -1)
                 for r, c in zip(raws, cases)]
    return instances, scaling


class SparseDataset:
    """Row-compressed instance matrix with +/-1 labels."""

    def __init__(self, indptr, indices, data, labels, n_features: int):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.labels = np.ascontiguousarray(labels, dtype=np.float64)
        self.n_features = int(n_features)
        if len(self.indptr) != len(self.labels) + 1:
            raise ValueError("indptr and labels disagree on the number of rows")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= self.n_features):
            raise ValueError("feature id out of range for n_features")

    @classmethod
    def from_instances(cls, instances: Sequence[LabeledInstance], n_features: int | None = None) -> "SparseDataset":
        lengths = [len(inst.features) for inst in instances]
        indptr = np.zeros(len(instances) + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        indices = np.fromiter((i for inst in instances for i in inst.features.ids), dtype=np.int32,
                              count=int(indptr[-1]))
        data = np.fromiter((v for inst in instances for v in inst.features.values), dtype=np.float64,
                           count=int(indptr[-1]))
        if n_features is None:
            n_features = int(indices.max()) + 1 if len(indices) else 1
        labels = [inst.label for inst in instances]
        return cls(indptr, indices, data, labels, n_features)

    @classmethod
    def from_dense(cls, X, y) -> "SparseDataset":
        X = np.asarray(X, dtype=np.float64)
        rows, cols = np.nonzero(X)
        indptr = np.zeros(X.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=X.shape[0]), out=indptr[1:])
        return cls(indptr, cols, X[rows, cols], y, X.shape[1])

    def __len__(self):
        return len(self.labels)

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def subset(self, rows) -> "SparseDataset":
        rows = np.asarray(rows, dtype=np.int64)
        starts, stops = self.indptr[rows], self.indptr[rows + 1]
        lengths = stops - starts
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        total = int(indptr[-1])
        take = np.arange(total, dtype=np.int64) + np.repeat(starts - indptr[:-1], lengths)
        return SparseDataset(indptr, self.indices[take], self.data[take], self.labels[rows], self.n_features)

    def row(self, i: int) -> SparseVector:
        a, b = self.indptr[i], self.indptr[i + 1]
        return SparseVector(tuple(int(j) for j in self.indices[a:b]), tuple(float(v) for v in self.data[a:b]))

    def to_dense(self) -> np.ndarray:
        X = np.zeros((len(self), self.n_features))
        for i in range(len(self)):
            a, b = self.indptr[i], self.indptr[i + 1]
            X[i, self.indices[a:b]] = self.data[a:b]
        return X

    def instances(self) -> list[LabeledInstance]:
        return [LabeledInstance(self.row(i), int(self.labels[i])) for i in range(len(self))]


def format_instance(inst: LabeledInstance) -> str:
    label = "+1" if inst.label > 0 else "-1"
    body = " ".join(f"{i}:{v:.9g}" for i, v in zip(inst.features.ids, inst.features.values))
    return f"{label} {body}".rstrip()


def parse_instance(line: str) -> LabeledInstance:
    parts = line.split()
    if not parts:
        raise ValueError("empty dataset line")
    label = int(parts[0])
    ids, values = [], []
    for tok in parts[1:]:
        i, v = tok.split(":")
        ids.append(int(i))
        values.append(float(v))
    return LabeledInstance(SparseVector(tuple(ids), tuple(values)), label)


def write_dataset(instances: Iterable[LabeledInstance], fh: IO[str]) -> None:
    for inst in instances:
        fh.write(format_instance(inst))
        fh.write("\n")


def read_dataset(fh: IO[str]) -> list[LabeledInstance]:
    return [parse_instance(line) for line in fh if line.strip()]
