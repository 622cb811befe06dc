"""Surface tension matrices: well-formedness, strict triangle inequality and
isometric simplex embedding."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

RANK_TOL = 1e-10
EMBED_TOL = 1e-9


class MalformedTensions(ValueError):
    """Raised for an asymmetric, negative, or badly shaped matrix."""

    def __init__(self, message: str, index: tuple[int, ...] | None = None):
        super().__init__(message)
        self.index = index


class NotAdmissible(ValueError):
    """The Gram matrix of the tensions is not positive definite."""

    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue


@dataclass(frozen=True, eq=False)
class SurfaceTensionMatrix:
    """Symmetric P x P matrix of pairwise tensions.  Phases are labelled 1..P;
    ``sigma`` itself is a plain 0-based array."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise MalformedTensions(f"sigma must be square, got shape {s.shape}")
        if s.shape[0] < 2:
            raise MalformedTensions("need at least two phases")
        if not np.all(np.isfinite(s)):
            bad = tuple(int(v) + 1 for v in np.argwhere(~np.isfinite(s))[0])
            raise MalformedTensions(f"non-finite entry at {bad}", bad)
        P = s.shape[0]
        for i in range(P):
            if s[i, i] != 0.0:
                raise MalformedTensions(f"nonzero diagonal at ({i + 1},{i + 1})", (i + 1, i + 1))
            for j in range(P):
                if i == j:
                    continue
                if s[i, j] <= 0.0:
                    raise MalformedTensions(
                        f"off-diagonal entry ({i + 1},{j + 1}) = {s[i, j]} is not positive", (i + 1, j + 1))
                if s[i, j] != s[j, i]:
                    raise MalformedTensions(f"asymmetry at ({i + 1},{j + 1})", (i + 1, j + 1))
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def P(self) -> int:
        return self.sigma.shape[0]

    def __call__(self, i: int, j: int) -> float:
        """Tension between phase labels i and j (1-based)."""
        return float(self.sigma[i - 1, j - 1])

    @classmethod
    def equal(cls, P: int, value: float = 1.0) -> "SurfaceTensionMatrix":
        return cls(value * (np.ones((P, P)) - np.eye(P)))

    @classmethod
    def from_points(cls, points) -> "SurfaceTensionMatrix":
        q = np.asarray(points, dtype=float)
        d = np.linalg.norm(q[:, None, :] - q[None, :, :], axis=-1)
        np.fill_diagonal(d, 0.0)
        return cls(0.5 * (d + d.T))

    def to_json(self) -> dict:
        return {"P": self.P, "sigma": self.sigma.tolist()}

    @classmethod
    def from_json(cls, obj) -> "SurfaceTensionMatrix":
        try:
            sigma = obj["sigma"]
        except (TypeError, KeyError) as exc:
            raise MalformedTensions("tensions JSON needs a 'sigma' entry") from exc
        t = cls(np.asarray(sigma, dtype=float))
        if "P" in obj and int(obj["P"]) != t.P:
            raise MalformedTensions(f"P={obj['P']} does not match sigma of size {t.P}")
        return t


@dataclass(frozen=True, eq=False)
class SimplexEmbedding:
    points: np.ndarray            # (P, P-1), row i-1 is q_i
    gram_eigenvalues: np.ndarray  # ascending
    max_distance_error: float = field(default=0.0)


def check_strict_triangle(sigma: SurfaceTensionMatrix) -> list[tuple[int, int, int]]:
    """All ordered triples (i, j, k) of distinct phases with
    sigma_ij >= sigma_ik + sigma_kj."""
    s = sigma.sigma
    out = []
    for i, j, k in permutations(range(sigma.P), 3):
        if s[i, j] >= s[i, k] + s[k, j]:
            out.append((i + 1, j + 1, k + 1))
    return sorted(out)


def gram_matrix(sigma: SurfaceTensionMatrix) -> np.ndarray:
    s2 = sigma.sigma ** 2
    return 0.5 * (s2[0, 1:, None] + s2[0, None, 1:] - s2[1:, 1:])


def embed_simplex(sigma: SurfaceTensionMatrix, rank_tol: float = RANK_TOL,
                  embed_tol: float = EMBED_TOL) -> SimplexEmbedding:
    """Points q_1 = 0, q_2, ..., q_P in R^(P-1) with |q_i - q_j| = sigma_ij.

    Raises NotAdmissible when the Gram matrix is not positive definite.
    """
    G = gram_matrix(sigma)
    w, V = np.linalg.eigh(G)
    scale = max(abs(w[-1]), np.finfo(float).tiny)
    if w[0] <= rank_tol * scale:
        raise NotAdmissible(
            f"Gram matrix is not positive definite (smallest eigenvalue {w[0]:.3e}, "
            f"threshold {rank_tol * scale:.3e})", float(w[0]))
    root = (V * np.sqrt(w)) @ V.T
    q = np.vstack([np.zeros((1, sigma.P - 1)), root])
    d = np.linalg.norm(q[:, None, :] - q[None, :, :], axis=-1)
    err = float(np.max(np.abs(d - sigma.sigma)))
    if err > embed_tol:
        raise NotAdmissible(f"embedding round-trip error {err:.3e} exceeds {embed_tol:.1e}", float(w[0]))
    return SimplexEmbedding(points=q, gram_eigenvalues=w, max_distance_error=err)


def is_admissible(sigma: SurfaceTensionMatrix) -> bool:
    try:
        embed_simplex(sigma)
    except NotAdmissible:
        return False
    return True
