"""Dataset loading, train/eval splitting, and the bag-of-words featurizer.

Text instances are featurized as *binary* bag-of-words over the training
vocabulary (presence/absence, not counts), which makes featurization exactly
linear in the Boolean perturbation vector: dropping a unit zeroes its column
and touches nothing else.  Out-of-vocabulary tokens map to nothing.

A synthetic corpus generator with planted class keywords is included so
experiments can run against ground-truth-bearing data without shipping any
external dataset.
"""

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidDatasetError, InvalidInputError, OutOfVocabularyWarning
from .perturbation import SegmentBundle, tokenize


@dataclass(frozen=True)
class LabeledDataset:
    """Ordered records with labels and a deterministic train/eval split."""

    records: tuple  # of (raw instance, label)
    class_labels: tuple
    train_indices: tuple
    eval_indices: tuple
    split_seed: int

    def __post_init__(self):
        overlap = set(self.train_indices) & set(self.eval_indices)
        if overlap:
            raise InvalidDatasetError(f"records in both splits: {sorted(overlap)[:5]}")
        train_labels = {self.records[i][1] for i in self.train_indices}
        if len(train_labels) < 2:
            raise InvalidDatasetError("train split needs at least 2 distinct labels")

    def __len__(self):
        return len(self.records)

    def train_records(self):
        return [self.records[i] for i in self.train_indices]

    def eval_records(self):
        return [self.records[i] for i in self.eval_indices]


def split_dataset(records, class_labels, split_ratio: float = 0.5, seed: int = 0) -> LabeledDataset:
    """Deterministic shuffled split; ``split_ratio`` is the train fraction."""
    n = len(records)
    if n == 0:
        raise InvalidDatasetError("dataset is empty")
    if not (0.0 < split_ratio < 1.0):
        raise InvalidInputError("split_ratio must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(n)
    n_train = max(1, int(round(n * split_ratio)))
    if n_train >= n:
        n_train = n - 1
    return LabeledDataset(
        records=tuple(records),
        class_labels=tuple(class_labels),
        train_indices=tuple(int(i) for i in order[:n_train]),
        eval_indices=tuple(int(i) for i in order[n_train:]),
        split_seed=int(seed),
    )


def _load_csv(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InvalidDatasetError(f"{path}: empty file")
        if "text" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise InvalidDatasetError(
                f"{path}: need 'text' and 'label' columns, found {reader.fieldnames}"
            )
        records = []
        for lineno, row in enumerate(reader, start=2):
            if row["text"] is None or row["label"] is None:
                raise InvalidDatasetError(f"{path}:{lineno}: short row")
            records.append((row["text"], str(row["label"])))
    return records


def _load_jsonl(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                records.append((str(doc["text"]), str(doc["label"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise InvalidDatasetError(f"{path}:{lineno}: {exc}") from exc
    return records


def _load_segment_dir(path) -> list:
    root = Path(path)
    manifests = sorted(root.glob("*.json"))
    if not manifests:
        raise InvalidDatasetError(f"{path}: no segment manifests found")
    records = []
    for mpath in manifests:
        with open(mpath, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidDatasetError(f"{mpath}: {exc}") from exc
        if "label" not in doc:
            raise InvalidDatasetError(f"{mpath}: manifest is missing a label")
        records.append((SegmentBundle.from_dict(doc), str(doc["label"])))
    return records


def load_dataset(path, fmt: str = "csv", split_ratio: float = 0.5, seed: int = 0) -> LabeledDataset:
    """Load a labeled dataset and split it deterministically.

    Formats: ``csv`` (header text,label), ``jsonl`` ({"text", "label"} per
    line), ``segment-manifest-dir`` (a directory of segment manifests, each
    carrying a label).
    """
    loaders = {
        "csv": _load_csv,
        "jsonl": _load_jsonl,
        "segment-manifest-dir": _load_segment_dir,
    }
    if fmt not in loaders:
        raise InvalidInputError(f"unknown dataset format {fmt!r}")
    records = loaders[fmt](path)
    if not records:
        raise InvalidDatasetError(f"{path}: no records")
    class_labels = sorted({label for _, label in records})
    return split_dataset(records, class_labels, split_ratio, seed)


class Featurizer:
    """Binary bag-of-words over a fixed vocabulary (token -> column)."""

    def __init__(self, tokens):
        self.tokens = tuple(tokens)
        if len(set(self.tokens)) != len(self.tokens):
            raise InvalidInputError("featurizer vocabulary must be unique")
        self.token_to_col = {t: i for i, t in enumerate(self.tokens)}
        self.fingerprint = hashlib.sha256(
            "\x00".join(self.tokens).encode()
        ).hexdigest()

    @property
    def dim(self) -> int:
        return len(self.tokens)

    def featurize(self, text: str) -> np.ndarray:
        x = np.zeros(self.dim)
        hit = False
        for tok in tokenize(text):
            col = self.token_to_col.get(tok)
            if col is not None:
                x[col] = 1.0
                hit = True
        if not hit and text.strip():
            warnings.warn(
                "instance featurized to the zero vector (all tokens out of vocabulary)",
                OutOfVocabularyWarning,
                stacklevel=2,
            )
        return x

    def featurize_batch(self, texts) -> np.ndarray:
        return np.stack([self.featurize(t) for t in texts])

    def to_dict(self) -> dict:
        return {"vocabulary": list(self.tokens)}

    @staticmethod
    def from_dict(doc: dict) -> "Featurizer":
        return Featurizer(doc["vocabulary"])


def build_featurizer(train_records) -> Featurizer:
    """Vocabulary = unique tokens of the train split, first-seen order."""
    texts = [raw for raw, _ in train_records if isinstance(raw, str)]
    if not texts:
        raise InvalidDatasetError("no text records to build a featurizer from")
    vocab = dict.fromkeys(tok for text in texts for tok in tokenize(text))
    return Featurizer(vocab.keys())


def featurize_records(records, featurizer: Featurizer = None):
    """(X, labels) for a record list; text goes through the featurizer,
    segment bundles contribute their base vectors directly."""
    rows, labels = [], []
    for raw, label in records:
        if isinstance(raw, SegmentBundle):
            rows.append(raw.base)
        else:
            if featurizer is None:
                raise InvalidInputError("text records need a featurizer")
            rows.append(featurizer.featurize(raw))
        labels.append(label)
    return np.stack(rows), labels


def make_synthetic_text_dataset(n_per_class: int = 150, n_classes: int = 4,
                                vocab_size: int = 160, keywords_per_class: int = 8,
                                words_per_doc: int = 30, split_ratio: float = 0.5,
                                seed: int = 0) -> LabeledDataset:
    """Planted-keyword corpus: each class owns a disjoint keyword group and
    every document mixes several of its class's keywords with shared
    background words.  Documents have ``words_per_doc`` distinct tokens so
    perturbation spaces are non-trivial."""
    n_keywords = n_classes * keywords_per_class
    if vocab_size <= n_keywords + words_per_doc:
        raise InvalidInputError("vocab_size too small for the keyword structure")
    rng = np.random.default_rng(seed)
    background = [f"bg{i}" for i in range(vocab_size - n_keywords)]
    keywords = {
        c: [f"kw{c}_{i}" for i in range(keywords_per_class)]
        for c in range(n_classes)
    }
    records = []
    for c in range(n_classes):
        label = f"class{c}"
        for _ in range(n_per_class):
            n_kw = int(rng.integers(4, keywords_per_class + 1))
            kws = list(rng.choice(keywords[c], size=n_kw, replace=False))
            n_bg = words_per_doc - n_kw
            bgs = list(rng.choice(background, size=n_bg, replace=False))
            words = kws + bgs
            rng.shuffle(words)
            records.append((" ".join(words), label))
    class_labels = [f"class{c}" for c in range(n_classes)]
    return split_dataset(records, class_labels, split_ratio, seed)
