"""Grid-sampled normalized Brownian excursion and the tree pseudo-metric it codes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Excursion",
    "sample_excursion",
    "vervaat",
    "d_e",
    "d_e_row",
    "d_e_matrix",
    "default_tol",
    "tree_equivalent",
]


@dataclass(frozen=True, eq=False)
class Excursion:
    """Nonnegative path on the grid ``k/m``, ``k = 0..m``, vanishing at both ends."""

    m: int
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if self.m < 2:
            raise ValueError(f"resolution must be >= 2, got {self.m}")
        if v.shape != (self.m + 1,):
            raise ValueError(f"expected {self.m + 1} values, got {v.shape}")
        if v[0] != 0 or v[-1] != 0 or (v < 0).any():
            raise ValueError("excursion must be >= 0 and vanish at 0 and m")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def mesh(self) -> float:
        return 1.0 / self.m

    def _check(self, *idx: int) -> None:
        for i in idx:
            if not 0 <= i <= self.m:
                raise IndexError(f"grid index {i} outside 0..{self.m}")

    @classmethod
    def from_function(cls, f, m: int) -> "Excursion":
        """Grid samples of ``f`` on ``[0, 1]``, e.g. the tent ``min(u, 1 - u)``."""
        u = np.linspace(0.0, 1.0, m + 1)
        vals = np.array([f(x) for x in u], dtype=np.float64)
        vals[0] = vals[-1] = 0.0
        return cls(m, vals)


def vervaat(bridge: np.ndarray) -> np.ndarray:
    """Cyclic shift of a bridge at its (first) argmin."""
    m = bridge.size - 1
    tau = int(np.argmin(bridge[:-1]))
    idx = (np.arange(m + 1) + tau) % m
    out = bridge[idx] - bridge[tau]
    out[-1] = 0.0
    return np.maximum(out, 0.0)


def sample_excursion(m: int, seed: int | None = None) -> Excursion:
    """Brownian bridge on ``m`` Gaussian steps mapped to an excursion by Vervaat's transform."""
    if m < 2:
        raise ValueError(f"resolution must be >= 2, got {m}")
    rng = np.random.default_rng(seed)
    walk = np.concatenate([[0.0], np.cumsum(rng.standard_normal(m) * np.sqrt(1.0 / m))])
    bridge = walk - np.linspace(0.0, 1.0, m + 1) * walk[-1]
    bridge[-1] = 0.0
    return Excursion(m, vervaat(bridge), seed)


def d_e(ex: Excursion, s: int, t: int) -> float:
    ex._check(s, t)
    lo, hi = min(s, t), max(s, t)
    v = ex.values
    return float(v[s] + v[t] - 2.0 * v[lo:hi + 1].min())


def d_e_row(ex: Excursion, s: int) -> np.ndarray:
    """``d_e(s, t)`` for every grid index ``t``, in O(m)."""
    ex._check(s)
    v = ex.values
    mins = np.empty_like(v)
    mins[s:] = np.minimum.accumulate(v[s:])
    mins[:s + 1] = np.minimum.accumulate(v[s::-1])[::-1]
    return v[s] + v - 2.0 * mins


def d_e_matrix(ex: Excursion) -> np.ndarray:
    return np.stack([d_e_row(ex, s) for s in range(ex.m + 1)])


def default_tol(m: int, factor: float = 2.0, exponent: float = 0.5 - 1.0 / 8.0) -> float:
    """Grid tolerance ``factor * (1/m)**exponent`` for identifying tree points."""
    return factor * (1.0 / m) ** exponent


def tree_equivalent(ex: Excursion, s: int, t: int, tol: float | None = None) -> bool:
    if tol is None:
        tol = default_tol(ex.m)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return d_e(ex, s, t) <= tol
