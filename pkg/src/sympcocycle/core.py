"""Symplectic linear algebra in the anti-diagonal convention.

The ambient space is R^(2N) with basis e_0, ..., e_{2N-1}.  The symplectic
form is fixed once and for all through its matrix J:

    J[i, 2N-1-i] = +1   for i < N,
    J[i, 2N-1-i] = -1   for i >= N,

all other entries zero.  Writing i* = 2N-1-i for the conjugate index this
means omega(e_i, e_{i*}) = +1 whenever i < i*, omega(e_{i*}, e_i) = -1 and
omega(e_i, e_j) = 0 for j != i*.  Indices are 0-based everywhere; the
conjugate involution is index reversal.

Subspaces are represented by 2D arrays whose *columns* are basis vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space, orth, subspace_angles

DEFAULT_TOL = 1e-9
PAIRING_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SymplecticSpace:
    """Dimension 2N together with the fixed form matrix J."""

    half_dim: int
    form: np.ndarray
    tol: float = DEFAULT_TOL

    @property
    def dim(self) -> int:
        return 2 * self.half_dim

    def conj(self, i: int) -> int:
        """Conjugate index i* = 2N - 1 - i."""
        return self.dim - 1 - i

    def pair_sign(self, i: int) -> float:
        """+1 if the (i, i*) pair is ordered i < i*, else -1."""
        return 1.0 if i < self.half_dim else -1.0

    def omega(self, u, v) -> float:
        return float(np.asarray(u) @ self.form @ np.asarray(v))


def standard_form(half_dim: int, tol: float = DEFAULT_TOL) -> SymplecticSpace:
    """Build the canonical anti-diagonal symplectic space of dimension 2N.

    half_dim is N; the returned space carries the form matrix J described
    in the module docstring.
    """
    if half_dim < 1:
        raise ValueError("half_dim must be a positive integer, got %r" % (half_dim,))
    dim = 2 * half_dim
    J = np.zeros((dim, dim))
    for i in range(half_dim):
        J[i, dim - 1 - i] = 1.0
        J[dim - 1 - i, i] = -1.0
    return SymplecticSpace(half_dim, J, tol)


def space_for_dim(dim: int, tol: float = DEFAULT_TOL) -> SymplecticSpace:
    """Space whose total dimension is dim (must be even)."""
    if dim < 2 or dim % 2 != 0:
        raise ValueError("dimension must be even and >= 2, got %r" % (dim,))
    return standard_form(dim // 2, tol)


def form_eval(space: SymplecticSpace, u, v) -> float:
    """omega(u, v) = u^T J v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (space.dim,) or v.shape != (space.dim,):
        raise ValueError("vectors must have shape (%d,)" % space.dim)
    return float(u @ space.form @ v)


def op_norm(M) -> float:
    """Operator norm (largest singular value)."""
    return float(np.linalg.norm(np.asarray(M, dtype=float), 2))


@dataclass(frozen=True)
class SymplecticCheck:
    """Boolean verdict plus the max-norm residual of M^T J M - J."""

    ok: bool
    residual: float

    def __bool__(self) -> bool:
        return self.ok


def is_symplectic(space: SymplecticSpace, M, tol: float | None = None) -> SymplecticCheck:
    """Check M^T J M = J to tolerance; truthy result carries the residual."""
    M = np.asarray(M, dtype=float)
    if M.shape != (space.dim, space.dim):
        raise ValueError(
            "matrix shape %r does not match space dimension %d" % (M.shape, space.dim)
        )
    tol = space.tol if tol is None else tol
    residual = float(np.max(np.abs(M.T @ space.form @ M - space.form)))
    return SymplecticCheck(residual <= tol, residual)


def _as_basis(space: SymplecticSpace, W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.ndim != 2 or W.shape[0] != space.dim:
        raise ValueError("subspace basis must be a (%d, k) array" % space.dim)
    if W.shape[1] == 0:
        return W
    if np.linalg.matrix_rank(W, tol=1e-10 * max(1.0, op_norm(W))) < W.shape[1]:
        raise ValueError("degenerate basis: columns are not linearly independent")
    return W


def symplectic_complement(space: SymplecticSpace, W) -> np.ndarray:
    """Basis (columns) of {x : omega(x, w) = 0 for all w in span W}.

    dim W + dim W^omega = 2N always; the two spans may intersect.
    """
    W = _as_basis(space, W)
    if W.shape[1] == 0:
        return np.eye(space.dim)
    # omega(x, w) = x . (J w), so the complement is the kernel of (J W)^T.
    comp = null_space((space.form @ W).T)
    if comp.shape[1] != space.dim - W.shape[1]:
        raise ValueError(
            "complement dimension %d inconsistent with input rank %d"
            % (comp.shape[1], W.shape[1])
        )
    return comp


def gram_form(space: SymplecticSpace, W) -> np.ndarray:
    """Gram matrix of the form on the given columns: G[a, b] = omega(w_a, w_b)."""
    W = np.asarray(W, dtype=float)
    return W.T @ space.form @ W


def is_isotropic(space: SymplecticSpace, W, tol: float = 1e-8) -> bool:
    W = _as_basis(space, W)
    if W.shape[1] == 0:
        return True
    scale = max(1.0, np.max(np.abs(W))) ** 2
    return bool(np.max(np.abs(gram_form(space, W))) <= tol * scale)


def is_lagrangian(space: SymplecticSpace, W, tol: float = 1e-8) -> bool:
    W = _as_basis(space, W)
    return W.shape[1] == space.half_dim and is_isotropic(space, W, tol)


def is_symplectic_subspace(space: SymplecticSpace, W, tol: float = 1e-8) -> bool:
    """True iff the form restricted to span W is nondegenerate."""
    W = _as_basis(space, W)
    if W.shape[1] == 0:
        return True
    if W.shape[1] % 2 != 0:
        return False
    svals = np.linalg.svd(gram_form(space, W), compute_uv=False)
    scale = max(1.0, np.max(np.abs(W))) ** 2
    return bool(svals[-1] > tol * scale)


def classify_subspace(space: SymplecticSpace, W, tol: float = 1e-8) -> str:
    """Most specific of Lagrangian / Isotropic / Symplectic / Mixed.

    Lagrangian implies isotropic; the half-dimensional isotropic case is
    reported under the sharper name.  Use the is_* predicates for the
    non-exclusive readings.
    """
    W = _as_basis(space, W)
    if is_isotropic(space, W, tol):
        return "Lagrangian" if W.shape[1] == space.half_dim else "Isotropic"
    if is_symplectic_subspace(space, W, tol):
        return "Symplectic"
    return "Mixed"


@dataclass(frozen=True)
class EigenPair:
    """One (lam, 1/lam) eigenvalue pair with eigenvectors, |lam| >= |1/lam|."""

    value: complex
    value_star: complex
    vector: np.ndarray
    vector_star: np.ndarray

    @property
    def residual(self) -> float:
        return abs(self.value * self.value_star - 1.0)


@dataclass(frozen=True)
class PairedSpectrum:
    pairs: tuple

    @property
    def residual(self) -> float:
        return max((p.residual for p in self.pairs), default=0.0)

    def values(self) -> list:
        out = []
        for p in self.pairs:
            out.extend([p.value, p.value_star])
        return out


def paired_spectrum(space: SymplecticSpace, M, tol: float = PAIRING_TOL) -> PairedSpectrum:
    """Match the spectrum of a symplectic M into (lam, 1/lam) pairs.

    Greedy nearest-inverse matching working down from the largest modulus,
    ties broken by eigen-solver index order; pairs come out sorted by
    modulus of the leading member, descending.  An eigenvalue whose best
    partner leaves |lam * partner - 1| > tol signals numerically
    non-symplectic input and raises.
    """
    M = np.asarray(M, dtype=float)
    check = is_symplectic(space, M, tol=1e-6)
    if not check:
        raise ValueError("matrix is not symplectic (residual %.3g)" % check.residual)
    w, V = np.linalg.eig(M)
    order = sorted(range(len(w)), key=lambda i: (-abs(w[i]), i))
    used = [False] * len(w)
    pairs = []
    for a in order:
        if used[a]:
            continue
        used[a] = True
        best, best_res = None, np.inf
        for b in order:
            if used[b]:
                continue
            res = abs(w[a] * w[b] - 1.0)
            if res < best_res:
                best, best_res = b, res
        if best is None or best_res > tol:
            raise ValueError(
                "eigenvalue %s has no inverse partner within tol=%g (best residual %.3g)"
                % (w[a], tol, best_res)
            )
        used[best] = True
        pairs.append(EigenPair(complex(w[a]), complex(w[best]), V[:, a], V[:, best]))
    return PairedSpectrum(tuple(pairs))


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Symplectically normalized eigenbasis of a symplectic matrix.

    Column i of ``vectors`` is an eigenvector for ``values[i]``, with
    values sorted ascending and the pairing values[i] * values[i*] = 1.
    The columns satisfy the canonical omega table: omega(v_i, v_{i*}) = 1
    for i < i*, all other pairings zero.
    """

    vectors: np.ndarray
    values: np.ndarray
    space: SymplecticSpace = field(repr=False)

    def column(self, i: int) -> np.ndarray:
        return self.vectors[:, i]

    @property
    def inverse(self) -> np.ndarray:
        """Inverse of the column matrix, cheap through the omega table.

        For a symplectically normalized frame P one has P^T J P = J, so
        P^{-1} = J^{-1} P^T J = -J P^T J.
        """
        J = self.space.form
        return -J @ self.vectors.T @ J


def symplectic_polish(space: SymplecticSpace, C) -> np.ndarray:
    """Gram-Schmidt a near-canonical frame into an exactly canonical one.

    Columns are processed in conjugate pairs (r, r*) for r = 0..N-1.  Both
    members of a pair are cleaned against every finished pair (q, q*) via

        x <- x + omega(c_{q*}, x) c_q - omega(c_q, x) c_{q*},

    which zeroes omega(c_q, x) and omega(c_{q*}, x) exactly (to rounding),
    then the pair is rescaled so omega(c_r, c_{r*}) = +1 with the factor
    split evenly between the two columns.  Requires every pairing value to
    stay away from zero, i.e. the input frame must already be close to
    canonical up to scaling.
    """
    C = np.array(C, dtype=float)
    if C.shape != (space.dim, space.dim):
        raise ValueError("frame must be square of size %d" % space.dim)
    N = space.half_dim
    for r in range(N):
        rs = space.conj(r)
        for q in range(r):
            qs = space.conj(q)
            for col in (r, rs):
                a = space.omega(C[:, q], C[:, col])
                b = space.omega(C[:, qs], C[:, col])
                C[:, col] = C[:, col] + b * C[:, q] - a * C[:, qs]
        c = space.omega(C[:, r], C[:, rs])
        if abs(c) < 1e-12:
            raise ValueError("frame pair (%d, %d) is omega-degenerate" % (r, rs))
        s = np.sqrt(abs(c))
        C[:, r] /= s
        C[:, rs] /= s
        if c < 0:
            C[:, rs] = -C[:, rs]
    return C


def eigen_symplectic_basis(
    space: SymplecticSpace, M, gap: float = 1e-6, tol: float = PAIRING_TOL
) -> EigenBasis:
    """Symplectically normalized eigenbasis for simple real spectrum.

    Requires M symplectic with 2N distinct real eigenvalues separated by
    at least ``gap``.  The output columns are eigenvectors sorted by
    ascending eigenvalue; ascending order makes the conjugate pairing
    values[i] * values[2N-1-i] = 1, which only works out when the whole
    spectrum has one sign (positive, after the pairing).  The pair
    (v_i, v_{i*}) is rescaled so omega(v_i, v_{i*}) = +1 with balanced
    factors and a deterministic sign (largest-magnitude entry of v_i
    positive for i < N).
    """
    M = np.asarray(M, dtype=float)
    check = is_symplectic(space, M, tol=1e-6)
    if not check:
        raise ValueError("matrix is not symplectic (residual %.3g)" % check.residual)
    w, V = np.linalg.eig(M)
    if np.max(np.abs(w.imag)) > tol * max(1.0, np.max(np.abs(w))):
        raise ValueError(
            "complex spectrum: max imaginary part %.3g" % np.max(np.abs(w.imag))
        )
    wr = w.real
    order = np.argsort(wr)
    wr = wr[order]
    V = V[:, order].real
    diffs = np.diff(wr)
    if np.min(diffs) < gap:
        raise ValueError(
            "eigenvalue gap %.3g below required %.3g" % (np.min(diffs), gap)
        )
    dim, N = space.dim, space.half_dim
    for i in range(N):
        prod = wr[i] * wr[dim - 1 - i]
        if abs(prod - 1.0) > tol * max(1.0, wr[dim - 1 - i] ** 2):
            raise ValueError(
                "ascending order breaks the (lam, 1/lam) pairing at index %d "
                "(product %.6g); mixed-sign real spectra are not supported" % (i, prod)
            )
    P = symplectic_polish(space, V)
    for i in range(N):
        k = int(np.argmax(np.abs(P[:, i])))
        if P[k, i] < 0:
            P[:, i] = -P[:, i]
            P[:, space.conj(i)] = -P[:, space.conj(i)]
    return EigenBasis(P, wr, space)


def orthonormal_columns(W) -> np.ndarray:
    """Orthonormal basis for the column span (SVD based)."""
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.shape[1] == 0:
        return W
    return orth(W)


def same_subspace(A, B, tol: float = 1e-8) -> bool:
    """True iff the column spans agree to the given principal-angle tolerance."""
    A = orthonormal_columns(A)
    B = orthonormal_columns(B)
    if A.shape != B.shape:
        return False
    if A.shape[1] == 0:
        return True
    return bool(np.max(subspace_angles(A, B)) <= tol)


def subspace_contains(W, X, tol: float = 1e-8) -> bool:
    """True iff span X lies inside span W (projection residual test)."""
    Q = orthonormal_columns(W)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] == 0:
        return True
    R = X - Q @ (Q.T @ X)
    return bool(np.max(np.abs(R)) <= tol * max(1.0, np.max(np.abs(X))))
