"""Interpretable units of one instance and Boolean perturbations of them.

An instance is represented by the all-ones vector over its ``|x|`` unique
units (word tokens for text, segment ids for images).  A perturbation keeps
a subset of the units; dropping unit ``u`` removes every occurrence of the
word (text) or fills the segment with a baseline value (segments).

Each perturbation ``y`` with ``k`` ones among ``|x|`` bits sits at angle
``arccos(sqrt(k/|x|))`` from the all-ones vector and carries the similarity
weight ``pi = 1 - sqrt(k/|x|)``.  Note that ``pi`` is a *dissimilarity*: it
is 0 at the instance itself and grows as features are dropped.  (Some prose
around this quantity reads it the other way; the formula is authoritative
here.)  The all-zeros vector is excluded a priori: its angle and weight are
undefined and it materializes to an empty instance.
"""

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInstanceError,
    DimensionError,
    InvalidInputError,
    UndefinedWeightError,
)

WORD_RE = re.compile(r"\w+(?:'\w+)*")


def tokenize(text: str) -> list[str]:
    """Whitespace-plus-punctuation word splitting, case preserved."""
    return WORD_RE.findall(text)


@dataclass(frozen=True)
class SegmentBundle:
    """Precomputed segmentation of one instance in model input space.

    ``base`` is the flat d-dimensional instance; each segment owns a set of
    indices into it.  Segment masks come from an external segmenter and are
    accepted as given.
    """

    base: np.ndarray
    shape: tuple
    segments: tuple  # of (segment_id, index array) pairs

    @staticmethod
    def from_dict(manifest: dict) -> "SegmentBundle":
        try:
            base = np.asarray(manifest["base"], dtype=np.float64)
            shape = tuple(int(s) for s in manifest["shape"])
            segs = []
            for seg in manifest["segments"]:
                idx = np.asarray(seg["indices"], dtype=np.intp)
                segs.append((str(seg["id"]), idx))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed segment manifest: {exc}") from exc
        if base.ndim != 1:
            raise InvalidInputError("manifest base must be a flat array")
        for sid, idx in segs:
            if idx.size and (idx.min() < 0 or idx.max() >= base.size):
                raise InvalidInputError(f"segment {sid} indexes outside the base array")
        ids = [sid for sid, _ in segs]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("duplicate segment ids in manifest")
        base = base.copy()
        base.flags.writeable = False
        return SegmentBundle(base=base, shape=shape, segments=tuple(segs))

    @staticmethod
    def load(path) -> "SegmentBundle":
        with open(path, "r", encoding="utf-8") as fh:
            return SegmentBundle.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "base": [float(v) for v in self.base],
            "shape": list(self.shape),
            "segments": [
                {"id": sid, "indices": [int(i) for i in idx]}
                for sid, idx in self.segments
            ],
        }


class FeatureVocabulary:
    """The |x| interpretable units of one instance plus what is needed to
    rebuild perturbed instances (the original token sequence, or the segment
    masks and base vector)."""

    __slots__ = ("units", "modality", "unit_index", "token_sequence", "bundle", "baseline")

    def __init__(self, units, modality, *, token_sequence=None, bundle=None, baseline=0.0):
        units = tuple(units)
        if len(units) == 0:
            raise InvalidInputError("a vocabulary needs at least one unit")
        if len(set(units)) != len(units):
            raise InvalidInputError("vocabulary units must be unique")
        if modality not in ("text", "segments"):
            raise InvalidInputError(f"unknown modality {modality!r}")
        self.units = units
        self.modality = modality
        self.unit_index = {u: i for i, u in enumerate(units)}
        self.token_sequence = tuple(token_sequence) if token_sequence is not None else None
        self.bundle = bundle
        self.baseline = float(baseline)

    def __len__(self):
        return len(self.units)

    def __repr__(self):
        return f"FeatureVocabulary({self.modality}, |x|={len(self.units)})"


def extract_features(raw_instance, *, baseline: float = 0.0) -> FeatureVocabulary:
    """Build the feature vocabulary of one instance.

    Text: unique word tokens in first-occurrence order (duplicates collapse
    to one unit; all positions are kept for materialization).  Segment
    bundles: one unit per segment id.
    """
    if isinstance(raw_instance, SegmentBundle):
        if not raw_instance.segments:
            raise InvalidInputError("segment bundle has no segments")
        ids = [sid for sid, _ in raw_instance.segments]
        return FeatureVocabulary(ids, "segments", bundle=raw_instance, baseline=baseline)
    if isinstance(raw_instance, str):
        tokens = tokenize(raw_instance)
        if not tokens:
            raise InvalidInputError("instance has no tokens after tokenization")
        units = list(dict.fromkeys(tokens))
        return FeatureVocabulary(units, "text", token_sequence=tokens)
    raise InvalidInputError(
        f"instance must be a string or SegmentBundle, got {type(raw_instance).__name__}"
    )


def _as_bits(bits, width=None) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if b.ndim != 1:
        raise DimensionError(f"bits must be 1-d, got shape {b.shape}")
    if not np.all((b == 0) | (b == 1)):
        raise InvalidInputError("bits must be 0/1")
    if width is not None and b.shape[0] != width:
        raise DimensionError(f"expected {width} bits, got {b.shape[0]}")
    return b


def pi_weight(bits) -> float:
    """Similarity weight 1 - sqrt(k/|x|) of a perturbation with k ones."""
    b = _as_bits(bits)
    k = int(b.sum())
    if k == 0:
        raise UndefinedWeightError("pi weight is undefined for the all-zeros vector")
    return 1.0 - float(np.sqrt(k / b.shape[0]))


def angle_from_ones(bits) -> float:
    """Angle (radians) between a perturbation and the all-ones vector."""
    b = _as_bits(bits)
    k = int(b.sum())
    if k == 0:
        raise UndefinedWeightError("angle is undefined for the all-zeros vector")
    return float(np.arccos(min(1.0, np.sqrt(k / b.shape[0]))))


class BooleanPerturbation:
    """One element of {0,1}^{|x|} with at least one retained unit."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        b = _as_bits(bits)
        if int(b.sum()) == 0:
            raise UndefinedWeightError("the all-zeros perturbation is excluded")
        b = b.copy()
        b.flags.writeable = False
        self.bits = b

    @property
    def width(self) -> int:
        return self.bits.shape[0]

    @property
    def ones_count(self) -> int:
        return int(self.bits.sum())

    @property
    def is_all_ones(self) -> bool:
        return self.ones_count == self.width

    @property
    def angle(self) -> float:
        return angle_from_ones(self.bits)

    @property
    def pi_weight(self) -> float:
        return pi_weight(self.bits)

    def __repr__(self):
        return f"BooleanPerturbation(k={self.ones_count}/{self.width})"


@dataclass(frozen=True)
class PerturbationSet:
    """Sampled perturbations of one instance: the all-ones vector first,
    followed by i.i.d. feature-dropping draws."""

    vocab: FeatureVocabulary
    perturbations: tuple
    seed: int
    _bits_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        width = len(self.vocab)
        n_ones = 0
        for p in self.perturbations:
            if p.width != width:
                raise DimensionError("perturbation width does not match the vocabulary")
            if p.is_all_ones:
                n_ones += 1
        if n_ones != 1:
            raise InvalidInputError(
                f"a perturbation set must contain the all-ones vector exactly once, found {n_ones}"
            )

    @property
    def count(self) -> int:
        return len(self.perturbations)

    def __len__(self):
        return len(self.perturbations)

    def __iter__(self):
        return iter(self.perturbations)

    def bits_matrix(self) -> np.ndarray:
        """(n, |x|) uint8 matrix, rows in sampling order."""
        if "m" not in self._bits_cache:
            m = np.stack([p.bits for p in self.perturbations])
            m.flags.writeable = False
            self._bits_cache["m"] = m
        return self._bits_cache["m"]

    def pi_weights(self) -> np.ndarray:
        """Vector of similarity weights, aligned with the rows."""
        m = self.bits_matrix().astype(np.float64)
        k = m.sum(axis=1)
        return 1.0 - np.sqrt(k / m.shape[1])

    def angles(self) -> np.ndarray:
        m = self.bits_matrix().astype(np.float64)
        k = m.sum(axis=1)
        return np.arccos(np.minimum(1.0, np.sqrt(k / m.shape[1])))


def sample_perturbations(vocab: FeatureVocabulary, n: int, seed: int) -> PerturbationSet:
    """Sample ``n`` perturbations: all-ones first, then ``n - 1`` draws where
    the number of dropped units is uniform on {1, ..., |x|-1} and the dropped
    subset is uniform given its size."""
    if n < 1:
        raise InvalidInputError(f"need n >= 1 perturbations, got {n}")
    width = len(vocab)
    if width < 2:
        raise DegenerateInstanceError(
            "instance has a single unit; only the all-ones vector exists"
        )
    rng = np.random.default_rng(seed)
    perts = [BooleanPerturbation(np.ones(width, dtype=np.uint8))]
    for _ in range(n - 1):
        n_drop = int(rng.integers(1, width))
        dropped = rng.choice(width, size=n_drop, replace=False)
        bits = np.ones(width, dtype=np.uint8)
        bits[dropped] = 0
        perts.append(BooleanPerturbation(bits))
    return PerturbationSet(vocab=vocab, perturbations=tuple(perts), seed=int(seed))


def materialize(vocab: FeatureVocabulary, perturbation, featurizer=None):
    """Map a Boolean perturbation back into model input space.

    Text: rebuild the token sequence with every occurrence of dropped units
    removed; returns the raw string, or its featurization when a featurizer
    is supplied (built-in models).  Segments: return the base vector with
    dropped segments filled by the configured baseline value.
    """
    bits = perturbation.bits if isinstance(perturbation, BooleanPerturbation) else _as_bits(perturbation)
    if bits.shape[0] != len(vocab):
        raise DimensionError(
            f"perturbation has {bits.shape[0]} bits for {len(vocab)} units"
        )
    if vocab.modality == "text":
        kept = [t for t in vocab.token_sequence if bits[vocab.unit_index[t]]]
        text = " ".join(kept)
        return featurizer.featurize(text) if featurizer is not None else text
    out = vocab.bundle.base.copy()
    for unit_pos, (_, idx) in enumerate(vocab.bundle.segments):
        if not bits[unit_pos]:
            out[idx] = vocab.baseline
    return out


def materialize_batch(vocab: FeatureVocabulary, pset, featurizer=None):
    """Materialize every perturbation; returns an (n, d) array when the
    result is numeric, else a list of strings."""
    rows = [materialize(vocab, p, featurizer) for p in pset]
    if rows and isinstance(rows[0], np.ndarray):
        return np.stack(rows)
    return rows


def restrict_by_angle(pset: PerturbationSet, delta: float) -> PerturbationSet:
    """Keep exactly the perturbations within angle ``delta`` (inclusive) of
    the all-ones vector.  The all-ones vector always survives; order is
    preserved, so nested deltas give nested sets."""
    if not (0.0 < delta <= np.pi / 2):
        raise InvalidInputError(f"delta must lie in (0, pi/2], got {delta}")
    kept = tuple(p for p in pset if angle_from_ones(p.bits) <= delta)
    return PerturbationSet(vocab=pset.vocab, perturbations=kept, seed=pset.seed)
