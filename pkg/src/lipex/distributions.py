"""Probability-simplex type and the distances used by the loss and the harness.

Conventions
-----------
A distribution over C classes is a vector ``p`` with ``p_i >= 0`` and
``sum(p) == 1`` (absolute tolerance ``PROB_ATOL`` per the package-wide
double-precision budget).  The distances implemented here:

- Hellinger:        H(p, q) = (1/sqrt(2)) * ||sqrt(p) - sqrt(q)||_2,  in [0, 1]
- squared Hellinger: H^2, computed directly as 0.5 * sum (sqrt p - sqrt q)^2
  (never as ``hellinger(...)**2``, avoiding the sqrt-then-square round trip)
- total variation:  TV(p, q) = 0.5 * sum |p - q|,  in [0, 1]
- Kullback-Leibler: KL(p, q) = sum p * ln(p/q) in nats, with 0*ln 0 := 0,
  defined only when q > 0 wherever p > 0.

Useful facts covered by the property suite: H and TV are metrics,
H^2 <= TV <= sqrt(2) * H, and H^2 <= KL/2 whenever KL is defined.

Everything here is pure value semantics; safe for unrestricted
concurrent use.
"""

import numpy as np

from .errors import DimensionError, DivergenceUndefinedError, InvalidInputError

#: Absolute per-entry tolerance for treating two distributions as equal.
PROB_ATOL = 1e-9


class ClassDistribution:
    """A point on the C-class probability simplex with named classes.

    Validates on construction: entries non-negative, total mass 1 within
    ``PROB_ATOL``, one probability per class label.  The stored array is
    read-only.
    """

    __slots__ = ("probs", "class_labels")

    def __init__(self, probs, class_labels):
        p = np.asarray(probs, dtype=np.float64)
        labels = tuple(str(c) for c in class_labels)
        if p.ndim != 1:
            raise DimensionError(f"probs must be 1-d, got shape {p.shape}")
        if len(labels) != p.shape[0]:
            raise DimensionError(
                f"{p.shape[0]} probabilities for {len(labels)} class labels"
            )
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("probabilities must be finite")
        if np.any(p < 0):
            raise InvalidInputError(f"negative probability: min={p.min()}")
        total = float(p.sum())
        if abs(total - 1.0) > PROB_ATOL:
            raise InvalidInputError(f"probabilities sum to {total!r}, not 1")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "class_labels", labels)

    def __setattr__(self, name, value):
        raise AttributeError("ClassDistribution is immutable")

    def __len__(self):
        return self.probs.shape[0]

    def __getitem__(self, class_name: str) -> float:
        return float(self.probs[self.class_labels.index(class_name)])

    @property
    def argmax_index(self) -> int:
        return int(np.argmax(self.probs))

    @property
    def argmax_label(self) -> str:
        return self.class_labels[self.argmax_index]

    def allclose(self, other: "ClassDistribution", atol: float = PROB_ATOL) -> bool:
        _check_pair(self, other)
        return bool(np.all(np.abs(self.probs - other.probs) <= atol))

    def __repr__(self):
        pairs = ", ".join(
            f"{c}={p:.4f}" for c, p in zip(self.class_labels, self.probs)
        )
        return f"ClassDistribution({pairs})"


def _check_pair(p, q):
    """Validate that two distributions are comparable; return raw arrays."""
    pa = p.probs if isinstance(p, ClassDistribution) else np.asarray(p, dtype=np.float64)
    qa = q.probs if isinstance(q, ClassDistribution) else np.asarray(q, dtype=np.float64)
    if pa.shape != qa.shape:
        raise DimensionError(f"distribution lengths differ: {pa.shape} vs {qa.shape}")
    if isinstance(p, ClassDistribution) and isinstance(q, ClassDistribution):
        if p.class_labels != q.class_labels:
            raise DimensionError("class orderings differ")
    return pa, qa


def softmax(logits, class_labels=None) -> ClassDistribution:
    """Numerically stable softmax of a logit vector.

    Subtracts the max before exponentiating, so large-magnitude logits
    (e.g. after last-layer noise injection) never overflow.  Shifting all
    logits by a constant leaves the output bit-identical.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise DimensionError(f"need a 1-d vector of >= 2 logits, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    if class_labels is None:
        class_labels = [str(i) for i in range(z.shape[0])]
    e = np.exp(z - z.max())
    return ClassDistribution(e / e.sum(), class_labels)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax for an (n, C) logit matrix."""
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def squared_hellinger(p, q) -> float:
    """Squared Hellinger distance, the kernel of the explanation-fit loss."""
    pa, qa = _check_pair(p, q)
    d = np.sqrt(pa) - np.sqrt(qa)
    return float(0.5 * np.dot(d, d))


def hellinger(p, q) -> float:
    """Hellinger distance (1/sqrt 2) * ||sqrt p - sqrt q||, in [0, 1]."""
    return float(np.sqrt(squared_hellinger(p, q)))


def total_variation(p, q) -> float:
    """Total variation distance 0.5 * sum |p - q|, in [0, 1]."""
    pa, qa = _check_pair(p, q)
    return float(0.5 * np.abs(pa - qa).sum())


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats, with the convention 0 * ln 0 = 0.

    Raises :class:`DivergenceUndefinedError` if q assigns zero mass where
    p does not.
    """
    pa, qa = _check_pair(p, q)
    support = pa > 0
    if np.any(qa[support] <= 0):
        raise DivergenceUndefinedError("q has zero mass on the support of p")
    ps = pa[support]
    return float(np.sum(ps * np.log(ps / qa[support])))


def squared_hellinger_rows(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Row-wise squared Hellinger between two (n, C) probability matrices."""
    if P.shape != Q.shape:
        raise DimensionError(f"shape mismatch: {P.shape} vs {Q.shape}")
    d = np.sqrt(P) - np.sqrt(Q)
    return 0.5 * np.einsum("ij,ij->i", d, d)


def total_variation_rows(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Row-wise total variation between two (n, C) probability matrices."""
    if P.shape != Q.shape:
        raise DimensionError(f"shape mismatch: {P.shape} vs {Q.shape}")
    return 0.5 * np.abs(P - Q).sum(axis=1)
