"""Random symplectic matrices for tests and generic-position nudges.

exp(J S) is symplectic for any symmetric S: with J^T J = I and J^2 = -I
one checks d/dt [exp(tJS)^T J exp(tJS)] = 0.  All generators here go
through that exponential, so outputs are symplectic to expm accuracy.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from .core import SymplecticSpace, op_norm


def random_hamiltonian(space: SymplecticSpace, rng: np.random.Generator) -> np.ndarray:
    """J S with S symmetric standard-normal, normalized to unit operator norm."""
    S = rng.standard_normal((space.dim, space.dim))
    S = (S + S.T) / 2.0
    H = space.form @ S
    n = op_norm(H)
    if n == 0.0:
        H = space.form.copy()
        n = 1.0
    return H / n


def random_symplectic(
    space: SymplecticSpace, rng: np.random.Generator, norm_bound: float = 3.0
) -> np.ndarray:
    """Random symplectic M with max(|M|, |M^-1|) <= norm_bound.

    The bound comes from |exp(H)| <= e^{|H|}; the generator scale is drawn
    uniformly below log(norm_bound) so norms spread over [1, norm_bound].
    """
    if norm_bound < 1.0:
        raise ValueError("norm_bound must be >= 1 for a symplectic matrix")
    H = random_hamiltonian(space, rng)
    t = np.log(norm_bound) * rng.uniform(0.0, 1.0)
    return expm(t * H)


def random_symplectic_near_identity(
    space: SymplecticSpace, rng: np.random.Generator, eps: float
) -> np.ndarray:
    """Random symplectic M with |M - Id| <= eps (via |exp(H) - I| <= e^{|H|} - 1)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    H = random_hamiltonian(space, rng)
    t = np.log1p(eps) * rng.uniform(0.5, 1.0)
    return expm(t * H)


def random_canonical_frame(
    space: SymplecticSpace, rng: np.random.Generator, spread: float = 1.0
) -> np.ndarray:
    """Random symplectic change of basis, moderately conditioned.

    Useful for conjugating diagonal model matrices into general position;
    ``spread`` scales the generator, so conditioning degrades smoothly as
    it grows.
    """
    H = random_hamiltonian(space, rng)
    return expm(spread * H)
