"""Training losses over adapter embeddings, with analytic gradients.

Every loss takes the adapter matrix plus batches of *base* embeddings and
differentiates through the projection and the re-normalization, returning
(scalar loss, gradient with respect to the matrix).  All arithmetic is
float64.
"""

from __future__ import annotations

import enum

import numpy as np


class LossKind(enum.Enum):
    COSINE_SIMILARITY = "cosine_similarity"
    COSINE_SENTENCE = "cosine_sentence"
    TRIPLET = "triplet"

    @classmethod
    def parse(cls, text: str) -> "LossKind":
        key = text.lower().strip().replace("-", "_")
        for kind in cls:
            if key == kind.value:
                return kind
        raise ValueError(f"unknown loss {text!r}")


def _project(weights: np.ndarray, base: np.ndarray):
    """Rows of base through W, with norms and unit rows.

    Returns (projected, norms, unit) where projected[i] = W @ base[i].
    """
    projected = base @ weights.T
    norms = np.linalg.norm(projected, axis=1)
    if np.any(norms == 0.0):
        raise FloatingPointError("adapter projected a batch row to the zero vector")
    unit = projected / norms[:, None]
    return projected, norms, unit


def _pair_cosines_and_coeff_grad(
    weights: np.ndarray,
    base_a: np.ndarray,
    base_b: np.ndarray,
    coeffs: np.ndarray,
) -> np.ndarray:
    """Gradient of sum_i coeffs[i] * cos_i with respect to W.

    cos_i is the cosine of the adapter embeddings of row i; the chain
    rule through normalization gives d cos/d p = (v - cos * u) / |p|.
    """
    _, na, ua = _project(weights, base_a)
    _, nb, ub = _project(weights, base_b)
    cos = np.sum(ua * ub, axis=1)
    ga = (ub - cos[:, None] * ua) * (coeffs / na)[:, None]
    gb = (ua - cos[:, None] * ub) * (coeffs / nb)[:, None]
    return ga.T @ base_a + gb.T @ base_b


def pair_cosines(weights: np.ndarray, base_a: np.ndarray, base_b: np.ndarray) -> np.ndarray:
    """Cosines between adapter embeddings of paired rows."""
    _, _, ua = _project(weights, base_a)
    _, _, ub = _project(weights, base_b)
    return np.sum(ua * ub, axis=1)


def cosine_similarity_loss(
    weights: np.ndarray,
    base_a: np.ndarray,
    base_b: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Mean squared residual between pair cosines and their binary labels."""
    base_a = np.asarray(base_a, dtype=np.float64)
    base_b = np.asarray(base_b, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = base_a.shape[0]
    cos = pair_cosines(weights, base_a, base_b)
    residual = cos - labels
    loss = float(np.mean(residual**2))
    coeffs = 2.0 * residual / n
    grad = _pair_cosines_and_coeff_grad(weights, base_a, base_b, coeffs)
    return loss, grad


def cosine_sentence_loss(
    weights: np.ndarray,
    base_a: np.ndarray,
    base_b: np.ndarray,
    labels: np.ndarray,
    scale: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Ranking loss over all (lower-expected, higher-expected) pair combinations.

    log(1 + sum over negative pair i, positive pair j of
    exp(scale * (cos_i - cos_j))).  A batch without both a positive and a
    negative pair has no comparable combinations and contributes zero
    loss and zero gradient.
    """
    base_a = np.asarray(base_a, dtype=np.float64)
    base_b = np.asarray(base_b, dtype=np.float64)
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        return 0.0, np.zeros_like(weights)
    cos = pair_cosines(weights, base_a, base_b)
    terms = np.exp(scale * (cos[neg][:, None] - cos[pos][None, :]))
    total = float(terms.sum())
    loss = float(np.log1p(total))
    coeffs = np.zeros(len(labels), dtype=np.float64)
    coeffs[neg] = scale * terms.sum(axis=1) / (1.0 + total)
    coeffs[pos] = -scale * terms.sum(axis=0) / (1.0 + total)
    grad = _pair_cosines_and_coeff_grad(weights, base_a, base_b, coeffs)
    return loss, grad


def triplet_loss(
    weights: np.ndarray,
    base_anchor: np.ndarray,
    base_positive: np.ndarray,
    base_negative: np.ndarray,
    margin: float = 3.0,
) -> tuple[float, np.ndarray]:
    """Mean hinge max(|a-p| - |a-n| + margin, 0) on unit adapter embeddings.

    Euclidean distances; at a zero distance the corresponding direction
    term is taken as zero (a subgradient choice).
    """
    base_anchor = np.asarray(base_anchor, dtype=np.float64)
    base_positive = np.asarray(base_positive, dtype=np.float64)
    base_negative = np.asarray(base_negative, dtype=np.float64)
    n = base_anchor.shape[0]
    _, na, ua = _project(weights, base_anchor)
    _, npos, up = _project(weights, base_positive)
    _, nneg, un = _project(weights, base_negative)
    diff_ap = ua - up
    diff_an = ua - un
    d_ap = np.linalg.norm(diff_ap, axis=1)
    d_an = np.linalg.norm(diff_an, axis=1)
    hinge = d_ap - d_an + margin
    active = hinge > 0.0
    loss = float(np.sum(hinge[active]) / n) if np.any(active) else 0.0

    grad = np.zeros_like(weights)
    if np.any(active):
        with np.errstate(divide="ignore", invalid="ignore"):
            dir_ap = np.where(d_ap[:, None] > 0.0, diff_ap / d_ap[:, None], 0.0)
            dir_an = np.where(d_an[:, None] > 0.0, diff_an / d_an[:, None], 0.0)
        mask = active[:, None] / n
        grad_u_anchor = (dir_ap - dir_an) * mask
        grad_u_pos = -dir_ap * mask
        grad_u_neg = dir_an * mask
        for grad_u, unit, norms, base in (
            (grad_u_anchor, ua, na, base_anchor),
            (grad_u_pos, up, npos, base_positive),
            (grad_u_neg, un, nneg, base_negative),
        ):
            # chain through normalization: (I - u u^T) g / |p|
            tangent = grad_u - unit * np.sum(grad_u * unit, axis=1)[:, None]
            grad += (tangent / norms[:, None]).T @ base
    return loss, grad


def clip_gradient(grad: np.ndarray, max_norm: float) -> np.ndarray:
    """Scale the gradient down so its global (Frobenius) norm is at most max_norm."""
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad
