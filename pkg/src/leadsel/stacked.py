"""Helpers for stacked per-agent vectors.

A swarm quantity lives in one flat array of length ``n_agents * dim``;
agent ``i`` (1-based, as everywhere in the public API) owns the slice
``[(i-1)*dim : i*dim]``.
"""

from __future__ import annotations

import numpy as np


def block(x: np.ndarray, agent: int, dim: int) -> np.ndarray:
    """Return agent's d-slice of a stacked vector (a view, not a copy)."""
    return x[(agent - 1) * dim : agent * dim]


def with_block(x: np.ndarray, agent: int, dim: int, value) -> np.ndarray:
    """Copy of ``x`` with agent's block replaced by ``value``."""
    out = np.array(x, dtype=float, copy=True)
    out[(agent - 1) * dim : agent * dim] = value
    return out


def zeroed_block(x: np.ndarray, agent: int, dim: int) -> np.ndarray:
    """Copy of ``x`` with agent's block zeroed (the leader-excision projector)."""
    return with_block(x, agent, dim, 0.0)


def replicate(value, n_agents: int) -> np.ndarray:
    """Stack ``n_agents`` copies of a d-vector: the all-ones Kronecker lift."""
    return np.tile(np.asarray(value, dtype=float), n_agents)


def per_agent(x: np.ndarray, dim: int) -> np.ndarray:
    """Reshape a stacked vector to an (n_agents, dim) matrix view."""
    return x.reshape(-1, dim)


def laplacian_apply(mat: np.ndarray, x: np.ndarray, dim: int) -> np.ndarray:
    """Apply ``mat (kron) I_dim`` to a stacked vector without forming the product."""
    return (mat @ x.reshape(-1, dim)).ravel()
