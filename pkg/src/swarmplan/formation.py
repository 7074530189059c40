"""Formation graph and similarity metric.

The swarm formation is a complete undirected graph weighted by pairwise
Euclidean distances. Its symmetric normalized Laplacian is invariant under
rigid transforms (distances preserved) and uniform scaling (the degree
normalization cancels the scale), so the squared Frobenius distance between
the current and desired Laplacians measures shape difference only.

Agent-to-vertex correspondence is fixed by agent order; the metric is not
permutation invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateFormationError(ValueError):
    """Raised when two agents coincide and the graph has a zero weight degree."""


def distance_weights(positions: np.ndarray) -> np.ndarray:
    """Complete-graph weight matrix w_ij = ||p_i - p_j||, zero diagonal."""
    p = np.asarray(positions, dtype=float)
    diff = p[:, None, :] - p[None, :, :]
    return np.linalg.norm(diff, axis=2)


def normalized_laplacian(positions: np.ndarray, min_distance: float = 1e-9) -> np.ndarray:
    """Symmetric normalized Laplacian I - D^{-1/2} W D^{-1/2} of the formation.

    Raises DegenerateFormationError if any two agents are closer than
    ``min_distance`` (the caller decides the fallback).
    """
    p = np.asarray(positions, dtype=float)
    n = p.shape[0]
    if n < 2:
        raise ValueError("need at least 2 agents")
    w = distance_weights(p)
    off = w[~np.eye(n, dtype=bool)]
    if np.any(off < min_distance):
        raise DegenerateFormationError("coincident agents in formation")
    return _laplacian_from_weights(w)


def _laplacian_from_weights(w: np.ndarray) -> np.ndarray:
    deg = w.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = -w * inv_sqrt[:, None] * inv_sqrt[None, :]
    np.fill_diagonal(lap, 1.0)
    return lap


@dataclass(frozen=True)
class FormationGraph:
    """Positions with their weight matrix and normalized Laplacian."""

    positions: np.ndarray
    weights: np.ndarray
    laplacian_norm: np.ndarray

    @classmethod
    def from_positions(cls, positions) -> "FormationGraph":
        p = np.asarray(positions, dtype=float)
        lap = normalized_laplacian(p)
        return cls(positions=p, weights=distance_weights(p), laplacian_norm=lap)

    def __len__(self) -> int:
        return self.positions.shape[0]


def similarity(current: FormationGraph | np.ndarray, desired: FormationGraph | np.ndarray) -> float:
    """Squared Frobenius norm of the Laplacian difference.

    Zero exactly when the formations are geometrically similar (rotated,
    translated, reflected or uniformly scaled copies).
    """
    la = current.laplacian_norm if isinstance(current, FormationGraph) else np.asarray(current)
    lb = desired.laplacian_norm if isinstance(desired, FormationGraph) else np.asarray(desired)
    if la.shape != lb.shape:
        raise ValueError(f"agent count mismatch: {la.shape} vs {lb.shape}")
    diff = la - lb
    return float(np.sum(diff * diff))


def similarity_trace(current: FormationGraph | np.ndarray, desired: FormationGraph | np.ndarray) -> float:
    """Trace form tr((L-L_des)^T (L-L_des)); equals `similarity`, kept as a cross-check."""
    la = current.laplacian_norm if isinstance(current, FormationGraph) else np.asarray(current)
    lb = desired.laplacian_norm if isinstance(desired, FormationGraph) else np.asarray(desired)
    if la.shape != lb.shape:
        raise ValueError(f"agent count mismatch: {la.shape} vs {lb.shape}")
    diff = la - lb
    return float(np.trace(diff.T @ diff))


def similarity_batch_grad(
    positions: np.ndarray,
    agent_index: int,
    desired_laplacian: np.ndarray,
    w_floor: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Similarity value and its gradient w.r.t. one agent's position, batched.

    ``positions`` has shape (m, n, 3): m formation snapshots of n agents.
    Returns (f (m,), df/dp (m, 3)) where p is agent ``agent_index``.

    Pairwise distances are floored at ``w_floor`` to keep the gradient finite
    while the optimizer explores near-coincident configurations; the public
    `normalized_laplacian` keeps the strict error contract instead.
    """
    p = np.asarray(positions, dtype=float)
    m, n, _ = p.shape
    s = agent_index

    diff = p[:, :, None, :] - p[:, None, :, :]  # (m, n, n, 3)
    w = np.linalg.norm(diff, axis=3)
    eye = np.eye(n, dtype=bool)
    w = np.where(~eye & (w < w_floor), w_floor, w)

    deg = w.sum(axis=2)  # (m, n)
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = -w * inv_sqrt[:, :, None] * inv_sqrt[:, None, :]
    lap[:, eye] = 1.0

    delta = lap - desired_laplacian[None, :, :]
    f = np.sum(delta * delta, axis=(1, 2))

    # dF/dW. For a != b:
    #   dL_ab/dw_uv = -[{u,v}={a,b}]/sqrt(d_a d_b)
    #                 + w_ab/2 * ([a in {u,v}] d_a^{-3/2} d_b^{-1/2}
    #                           + [b in {u,v}] d_b^{-3/2} d_a^{-1/2})
    # Accumulated over all (a,b), the derivative w.r.t. the symmetric pair
    # w_uv splits into a direct part and a degree part.
    g = 2.0 * delta  # dF/dL
    gsym = g + np.swapaxes(g, 1, 2)  # combines (a,b) and (b,a) terms

    inv = inv_sqrt  # d^{-1/2}
    inv3 = inv_sqrt / deg  # d^{-3/2}

    # Direct part: -g_uv_sym / sqrt(d_u d_v) for u != v (diagonal of L is constant).
    direct = -0.5 * gsym * inv[:, :, None] * inv[:, None, :]

    # Degree part: row sums r_a = sum_b g_ab_sym * w_ab * d_b^{-1/2}; the
    # derivative of f w.r.t. d_a is r_a/2 * d_a^{-3/2}; and dd_a/dw_uv = [a in {u,v}].
    r = np.einsum("mab,mab,mb->ma", gsym, w, inv)  # (m, n)
    dF_dd = 0.25 * r * inv3  # (m, n)
    degree_part = dF_dd[:, :, None] + dF_dd[:, None, :]

    dF_dw = direct + degree_part
    dF_dw[:, eye] = 0.0

    # Chain to the chosen agent's coordinates: dw_sj/dp_s = (p_s - p_j)/w_sj.
    w_s = w[:, s, :].copy()
    w_s[:, s] = 1.0  # self pair, excluded below
    unit = diff[:, s, :, :] / w_s[:, :, None]
    unit[:, s, :] = 0.0
    grad = np.einsum("mj,mjc->mc", 2.0 * dF_dw[:, s, :], unit)
    return f, grad
