"""Symplectic perturbation constructors for periodic cocycles.

Everything here perturbs a periodic orbit by composing a correction into
its chronologically last letter, so the period map changes while the
orbit word keeps its length and labels.  The constructions:

* ``realize_on_pair``: prescribe a 2x2 block on a pair of eigendirections
  and compensate on the conjugate pair so the result stays symplectic.
* ``straighten``: small symplectic map carrying a tilted eigendirection
  back onto the reference one.
* ``mane_2d``: the two-dimensional rotation mechanism; either small
  rotations make the period map non-real or the splitting into the most
  and least expanded directions is dominated, with a certificate.
* ``collapse_and_complexify``: drive two eigenvalues together through a
  rotation isotopy of a 2D quotient, track all four affected eigenvalue
  branches, and rotate in the collided plane at the first crossing that
  lands on the requested modulus rank.
* ``has_rank_complex`` / ``diagonalize``: rank test for non-real pairs
  and the simple-real-positive spectrum normalizer.

Indices are 0-based throughout: the conjugate of index r is 2N-1-r, and
the modulus rank i refers to sorted spectrum positions (i, i+1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cocycle import CocycleSystem, Letter, PeriodicOrbit, orbit_product, word_matrix
from .core import (
    EigenBasis,
    SymplecticSpace,
    eigen_symplectic_basis,
    is_symplectic,
    op_norm,
    orthonormal_columns,
    space_for_dim,
    standard_form,
)
from .domination import find_splitting, FoundSplitting
from .rand import random_symplectic_near_identity


class BudgetError(ValueError):
    """A construction finished but its distance exceeds the allowed budget."""


def rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# block perturbations on an eigendirection pair


@dataclass(frozen=True)
class BlockPerturbation:
    """A 2x2 action on the eigendirections (e_j, e_k), columns = images.

    With coefficients (alpha, beta, gamma, delta) the block maps
    e_j -> alpha e_j + beta e_k and e_k -> gamma e_j + delta e_k, i.e.
    block = [[alpha, gamma], [beta, delta]].  The determinant
    Delta = alpha*delta - beta*gamma must be nonzero.
    """

    j: int
    k: int
    block: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.block, dtype=float)
        if B.shape != (2, 2):
            raise ValueError("block must be 2x2, got %r" % (B.shape,))
        object.__setattr__(self, "block", B)
        if self.j == self.k:
            raise ValueError("block indices must differ")
        if abs(self.det) < 1e-14:
            raise ValueError("degenerate block: determinant %.3g" % self.det)

    @classmethod
    def from_coeffs(cls, j, k, alpha, beta, gamma, delta) -> "BlockPerturbation":
        return cls(j, k, np.array([[alpha, gamma], [beta, delta]]))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.block))


def conjugate_block(B, sigma: int) -> np.ndarray:
    """The compensating block on the conjugate pair (e_j*, e_k*).

    Solving omega(M e_j, M e_j*) = omega(e_j, e_j*) and the three sibling
    equations for the conjugate-pair action gives

        Btilde = (1/Delta) [[delta, -sigma*beta], [-sigma*gamma, alpha]],

    where sigma = omega(e_j, e_j*) * omega(e_k, e_k*) is +1 when j and k
    sit on the same side of N and -1 when they straddle it.
    """
    B = np.asarray(B, dtype=float)
    d = float(np.linalg.det(B))
    if abs(d) < 1e-14:
        raise ValueError("degenerate block: determinant %.3g" % d)
    return (
        np.array(
            [[B[1, 1], -sigma * B[1, 0]], [-sigma * B[0, 1], B[0, 0]]],
        )
        / d
    )


def _embedded_diag(space, values, placements) -> np.ndarray:
    """diag(values) with 2x2 blocks written over index pairs.

    placements is a list of ((r, c), block) with the block acting on the
    coordinates (r, c).
    """
    D = np.diag(np.asarray(values, dtype=float))
    for (r, c), B in placements:
        idx = np.ix_([r, c], [r, c])
        D[idx] = B
    return D


@dataclass(frozen=True, eq=False)
class RealizedPair:
    """Output of realize_on_pair: the perturbed orbit and its period map."""

    orbit: PeriodicOrbit
    matrix: np.ndarray
    btilde: np.ndarray | None
    distance: float


def realize_on_pair(
    orbit: PeriodicOrbit,
    basis: EigenBasis,
    block: BlockPerturbation,
    eps: float | None = None,
) -> RealizedPair:
    """Perturb the orbit so its period map acts as ``block`` on (E_j, E_k).

    The prescribed action replaces the diagonal entries on the pair
    (j, k); on the conjugate pair (j*, k*) the compensating block keeps
    the omega table intact, and every other eigendirection keeps its
    eigenvalue exactly.  When k = j* the two indices form a symplectic
    pair and the block itself must have determinant 1; no compensation is
    involved.  The change is composed into the last letter.
    """
    space = basis.space
    P, vals = basis.vectors, basis.values
    M = orbit_product(orbit)
    resid = op_norm(M @ P - P @ np.diag(vals)) / max(1.0, op_norm(M))
    if resid > 1e-6:
        raise ValueError(
            "basis does not diagonalize the period map (residual %.3g)" % resid
        )
    j, k = block.j, block.k
    if not (0 <= j < space.dim and 0 <= k < space.dim):
        raise ValueError("block indices out of range for dim %d" % space.dim)
    js, ks = space.conj(j), space.conj(k)
    B = block.block
    if k == js:
        if abs(block.det - 1.0) > 1e-8 * max(1.0, op_norm(B) ** 2):
            raise ValueError(
                "block on the conjugate pair (%d, %d) must have determinant 1, "
                "got %.6g" % (j, k, block.det)
            )
        B = B / np.sqrt(block.det)
        placements = [((j, k), B)]
        btilde = None
    else:
        sigma = space.pair_sign(j) * space.pair_sign(k)
        btilde = conjugate_block(B, sigma)
        placements = [((j, k), B), ((js, ks), btilde)]
    Dhat = _embedded_diag(space, vals, placements)
    # M-tilde @ M^{-1} = P (Dhat D^{-1}) P^{-1}, computed directly so the
    # unperturbed case collapses to the identity at machine precision.
    Psi = Dhat * (1.0 / vals)[None, :]
    Delta_amb = P @ Psi @ basis.inverse
    last = orbit.letters[-1]
    new_last = Delta_amb @ last.matrix
    distance = op_norm(new_last - last.matrix)
    if eps is not None and distance > eps:
        contribution = 0.0
        if btilde is not None:
            contribution = op_norm(btilde - np.diag(vals[[js, ks]]))
        raise BudgetError(
            "perturbation distance %.6g exceeds budget %.6g "
            "(conjugate-block contribution %.6g)" % (distance, eps, contribution)
        )
    letters = orbit.letters[:-1] + (
        Letter(new_last, last.label, provenance="perturbed"),
    )
    new_orbit = PeriodicOrbit(orbit.orbit_id, letters)
    return RealizedPair(new_orbit, word_matrix(letters), btilde, distance)


# ---------------------------------------------------------------------------
# straightening a tilted eigendirection


def straighten(basis: EigenBasis, i: int, j: int, line, theta_max: float = 0.5):
    """Symplectic p with p(E_i) = E_i and p(line) = E_j.

    ``line`` is a vector representative of a perturbed eigendirection
    lying inside E_i + E_j; write it as r e_i + s e_j in eigenbasis
    coordinates.  In the isotropic case (j != i*) p fixes e_i, sends the
    vector to e_j, and compensates on the conjugate pair (i*, j*).  In
    the symplectic case (j = i*) the plane carries the form, and p sends
    the vector to e_j at the cost of scaling e_i by s; when i < i* the
    scale s equals omega(e_i, line).  The map is scale-sensitive through
    s, so representatives should be normalized near the unperturbed
    eigenvector.
    """
    space = basis.space
    if i == j:
        raise ValueError("straighten needs two distinct indices")
    vec = np.asarray(line, dtype=float).reshape(-1)
    if vec.shape != (space.dim,):
        raise ValueError("line must be a vector of length %d" % space.dim)
    c = basis.inverse @ vec
    mask = np.ones(space.dim, dtype=bool)
    mask[[i, j]] = False
    outside = np.linalg.norm(c[mask])
    if outside > 1e-8 * np.linalg.norm(c):
        raise ValueError(
            "line leaves the E_%d + E_%d plane (residual %.3g)" % (i, j, outside)
        )
    ej = basis.column(j)
    cosang = abs(float(vec @ ej)) / (np.linalg.norm(vec) * np.linalg.norm(ej))
    angle = float(np.arccos(min(1.0, cosang)))
    if angle > theta_max:
        raise ValueError(
            "angle %.4g to E_%d exceeds the threshold %.4g" % (angle, j, theta_max)
        )
    r, s = float(c[i]), float(c[j])
    if abs(s) < 1e-12:
        raise ValueError("line has no E_%d component" % j)
    if j == space.conj(i):
        Bp = np.array([[s, -r], [0.0, 1.0 / s]])
        placements = [((i, j), Bp)]
    else:
        Bp = np.array([[1.0, -r / s], [0.0, 1.0 / s]])
        sigma = space.pair_sign(i) * space.pair_sign(j)
        placements = [((i, j), Bp), ((space.conj(i), space.conj(j)), conjugate_block(Bp, sigma))]
    Dhat = _embedded_diag(space, np.ones(space.dim), placements)
    return basis.vectors @ Dhat @ basis.inverse


# ---------------------------------------------------------------------------
# the 2D rotation mechanism


@dataclass(frozen=True, eq=False)
class ManeDominated:
    """2D verdict: the expansion splitting is dominated at the given ell."""

    certificate: object
    splitting: object
    ell: int


@dataclass(frozen=True, eq=False)
class ManeComplexified:
    """2D verdict: rotated letters with a non-real period-map spectrum."""

    orbit: PeriodicOrbit
    theta: float
    distance: float


def mane_2d(orbit: PeriodicOrbit, eps: float, ell_max: int = 500, grid: int = 240):
    """Either rotate a 2D orbit into complex eigenvalues or certify domination.

    Each letter is first scaled by det^{-1/2} (a no-op for symplectic
    input, and the normalization that keeps quotient letters in SL(2)),
    then composed on the right with a common rotation R(theta).  The
    smallest |theta| <= eps making the period-map trace satisfy
    tr^2 < 4 robustly wins; theta = 0 covers the already-complex case.
    If no angle works, the splitting into the most and least expanded
    directions is certified by the domination scanner and the empirical
    ell is recorded in the certificate.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    mats = [np.asarray(l.matrix, dtype=float) for l in orbit.letters]
    if any(m.shape != (2, 2) for m in mats):
        raise ValueError("mane_2d needs 2x2 letters")
    dets = [float(np.linalg.det(m)) for m in mats]
    if any(d <= 0 for d in dets):
        raise ValueError("letters must be orientation-preserving (det > 0)")
    normed = [m / np.sqrt(d) for m, d in zip(mats, dets)]

    def period_trace(theta):
        R = rotation2(theta)
        M = np.eye(2)
        for m in normed:
            M = (m @ R) @ M
        return float(np.trace(M))

    h = eps / grid
    thetas = [0.0]
    for g in range(1, grid + 1):
        thetas.extend([g * h, -g * h])
    for theta in thetas:
        if period_trace(theta) ** 2 < 4.0 - 1e-9:
            R = rotation2(theta)
            letters = tuple(
                Letter(m @ R, l.label, provenance="perturbed")
                for m, l in zip(normed, orbit.letters)
            )
            distance = max(
                op_norm(nl.matrix - l.matrix) for nl, l in zip(letters, orbit.letters)
            )
            return ManeComplexified(
                PeriodicOrbit(orbit.orbit_id, letters), theta, distance
            )
    bound = max(max(op_norm(m), op_norm(np.linalg.inv(m))) for m in normed)
    system = CocycleSystem(
        standard_form(1),
        (PeriodicOrbit(orbit.orbit_id, tuple(
            Letter(m, l.label, l.provenance) for m, l in zip(normed, orbit.letters)
        )),),
        bound,
    )
    res = find_splitting(system, 1, ell_max=ell_max)
    if isinstance(res, FoundSplitting):
        return ManeDominated(res.certificate, res.splitting, res.ell)
    raise RuntimeError(
        "2D orbit neither complexifiable within eps=%g nor dominated within "
        "ell_max=%d (%s)" % (eps, ell_max, res.reason)
    )


# ---------------------------------------------------------------------------
# rank test for non-real pairs


def has_rank_complex(M, i: int, tol: float = 1e-8) -> bool:
    """True iff M has a non-real conjugate pair at modulus rank (i, i+1).

    Rank is 0-based over the modulus-sorted spectrum: the pair must sit
    at sorted positions i and i+1, every other modulus below position i
    strictly smaller and above position i+1 strictly larger.  This is
    the invariant-splitting F + G + H picture with dim F = i and the
    eigenplane G spanned by the pair.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if not 0 <= i <= n - 2:
        raise ValueError("rank index must be in [0, %d], got %d" % (n - 2, i))
    w = np.linalg.eigvals(M)
    w = w[np.lexsort((w.imag, w.real, np.abs(w)))]
    a, b = w[i], w[i + 1]
    scale = max(1.0, abs(a))
    if abs(a.imag) <= tol * scale:
        return False
    if abs(a - np.conj(b)) > 1e-6 * scale:
        return False
    if i > 0 and abs(a) - abs(w[i - 1]) <= tol * scale:
        return False
    if i + 2 < n and abs(w[i + 2]) - abs(a) <= tol * scale:
        return False
    return True


# ---------------------------------------------------------------------------
# diagonalization with a simple real positive spectrum


class DiagonalizeError(ValueError):
    """Raised when the budget cannot reach the requested spectral gap."""

    def __init__(self, message: str, achieved_gap: float):
        super().__init__(message)
        self.achieved_gap = achieved_gap


@dataclass(frozen=True, eq=False)
class Diagonalized:
    orbit: PeriodicOrbit
    distance: float
    gap_achieved: float
    values: np.ndarray


def _simple_gap(M, imag_tol: float = 1e-9):
    """Minimal relative gap of a real positive simple spectrum, else 0."""
    w = np.linalg.eigvals(M)
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.max(np.abs(w.imag)) > imag_tol * scale:
        return 0.0, None
    vals = np.sort(w.real)
    if vals[0] <= 0:
        return 0.0, None
    gaps = np.diff(vals) / np.maximum(1.0, np.abs(vals[:-1]))
    return float(np.min(gaps)), vals


def diagonalize(
    orbit: PeriodicOrbit,
    eps: float,
    gap: float = 1e-5,
    seed: int = 0,
    tries: int = 40,
) -> Diagonalized:
    """Perturb the last letter until the period map has 2N distinct real
    positive eigenvalues separated by the relative gap.

    Candidates are paired dilations diag(1 + delta_i, ..., 1/(1 + delta_i))
    with distinct delta_i, then seeded random near-identity symplectic
    draws (which include shear directions), over an escalating magnitude
    ladder within the budget.  Symplectic pairing lam * lam^* = 1 of the
    output spectrum is automatic.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    mats = [l.matrix for l in orbit.letters]
    dim = mats[0].shape[0]
    space = space_for_dim(dim)
    M = orbit_product(orbit)
    g0, vals0 = _simple_gap(M)
    if g0 >= gap:
        return Diagonalized(orbit, 0.0, g0, vals0)
    last = orbit.letters[-1]
    q_eps = eps / max(1.0, op_norm(last.matrix))
    rng = np.random.default_rng(seed)
    N = space.half_dim
    best = g0

    def candidates(t):
        deltas = [t * (r + 1) / N for r in range(N)]
        q = np.ones(dim)
        for r, d in enumerate(deltas):
            q[r] = 1.0 + d
            q[space.conj(r)] = 1.0 / (1.0 + d)
        yield np.diag(q)
        for _ in range(tries):
            yield random_symplectic_near_identity(space, rng, t)

    for f in (0.25, 0.5, 0.75, 0.95):
        t = f * q_eps
        for Q in candidates(t):
            g, vals = _simple_gap(Q @ M)
            best = max(best, g)
            if g >= gap:
                new_last = Q @ last.matrix
                distance = op_norm(new_last - last.matrix)
                if distance > eps:
                    continue
                letters = orbit.letters[:-1] + (
                    Letter(new_last, last.label, provenance="perturbed"),
                )
                return Diagonalized(
                    PeriodicOrbit(orbit.orbit_id, letters), distance, g, vals
                )
    raise DiagonalizeError(
        "budget eps=%g cannot reach spectral gap %g (achieved %.3g)"
        % (eps, gap, best),
        achieved_gap=best,
    )


# ---------------------------------------------------------------------------
# eigenvalue collapse along a rotation isotopy


@dataclass(frozen=True, eq=False)
class IsotopySample:
    """One isotopy time: the modified last letter and the moving branches.

    branches = (lam_j, lam_{k+1}, lam_{j*}, lam_{(k+1)*}) at this time;
    the other letters of the orbit never change, so the letter set at a
    sample is the orbit with its last letter replaced.
    """

    t: float
    last_letter: np.ndarray
    branches: np.ndarray


@dataclass(frozen=True, eq=False)
class IsotopyTrace:
    samples: tuple

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        ts = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("sample times must increase strictly")

    def max_jump(self) -> float:
        """Largest branch movement between consecutive samples."""
        worst = 0.0
        for a, b in zip(self.samples, self.samples[1:]):
            worst = max(worst, float(np.max(np.abs(a.branches - b.branches))))
        return worst

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])


@dataclass(frozen=True, eq=False)
class CollapseResult:
    orbit: PeriodicOrbit
    matrix: np.ndarray
    rank: int
    t_event: float
    kind: str
    trace: IsotopyTrace
    distance: float


@dataclass(frozen=True, eq=False)
class CollapseObstructed:
    """The window quotient is dominated; collapse cannot proceed."""

    certificate: object
    ell: int


@dataclass(frozen=True, eq=False)
class CollapseFailure:
    trace: IsotopyTrace
    reason: str


def _chart(W, Z):
    """Orthonormal basis of the orthogonal complement of Z inside span(W)."""
    B = orthonormal_columns(W)
    if Z.shape[1]:
        Zo = orthonormal_columns(Z)
        B = B - Zo @ (Zo.T @ B)
    Q = orthonormal_columns(B)
    if Q.shape[1] != 2:
        raise ValueError("window quotient chart degenerated")
    return Q


def _window_quotient(orbit: PeriodicOrbit, basis: EigenBasis, j: int, k1: int):
    """2D quotient letters of the window E_j + ... + E_{k1} by its middle.

    Returns (qletters, G) where the quotient letters are oriented to have
    positive determinant and G maps (e_j, e_{k1}) eigen-pair coordinates
    into the base-point chart; G^{-1} (prod qletters) G = diag(lam_j,
    lam_{k1}) up to rounding.
    """
    P = basis.vectors
    mats = [l.matrix for l in orbit.letters]
    W, Z = P[:, j : k1 + 1], P[:, j + 1 : k1]
    charts = [_chart(W, Z)]
    for m in range(1, len(mats)):
        W = mats[m - 1] @ W
        Z = mats[m - 1] @ Z if Z.shape[1] else Z
        Q = _chart(W, Z)
        if np.linalg.det(Q.T @ mats[m - 1] @ charts[m - 1]) < 0:
            Q = Q.copy()
            Q[:, 0] = -Q[:, 0]
        charts.append(Q)
    qletters = []
    for m, L in enumerate(mats):
        Qn = charts[(m + 1) % len(mats)]
        qletters.append(Qn.T @ L @ charts[m])
    d_last = float(np.linalg.det(qletters[-1]))
    if d_last <= 1e-14:
        raise ValueError("window quotient lost orientation around the cycle")
    G = charts[0].T @ P[:, [j, k1]]
    return qletters, G


def _eig2(B):
    """Eigenvalues of a 2x2 block, returned as a complex pair."""
    return np.linalg.eigvals(B)


def _match_pair(prev, new):
    """Order the new eigenvalue pair to continue the previous pair."""
    d_keep = abs(prev[0] - new[0]) + abs(prev[1] - new[1])
    d_swap = abs(prev[0] - new[1]) + abs(prev[1] - new[0])
    return new if d_keep <= d_swap else new[::-1]


def _eig2_vector(B, mu):
    w, V = np.linalg.eig(B)
    idx = int(np.argmin(np.abs(w - mu)))
    v = V[:, idx]
    if np.max(np.abs(v.imag)) > 1e-8 * np.max(np.abs(v)):
        raise ValueError("expected a real eigenvector for the meeting value")
    v = v.real
    return v / np.linalg.norm(v)


def _rank_positions_ok(all_mods, pair_pos, i, margin=1e-9):
    """True iff the two listed entries occupy sorted slots (i, i+1) with
    strict modulus gaps to slots i-1 and i+2."""
    order = np.argsort(all_mods, kind="stable")
    where = {int(np.where(order == p)[0][0]) for p in pair_pos}
    if where != {i, i + 1}:
        return False
    mu = 0.5 * (all_mods[pair_pos[0]] + all_mods[pair_pos[1]])
    m = margin * max(1.0, mu)
    if i > 0 and not all_mods[order[i - 1]] < mu - m:
        return False
    if i + 2 < len(all_mods) and not all_mods[order[i + 2]] > mu + m:
        return False
    return True


class _Isotopy:
    """Rotation-angle isotopy of the window quotient, with realization."""

    def __init__(self, orbit, basis, j, k1, qletters, G, theta):
        self.orbit = orbit
        self.basis = basis
        self.space = basis.space
        self.j, self.k1 = j, k1
        self.js, self.k1s = self.space.conj(j), self.space.conj(k1)
        self.pair_case = self.k1 == self.js
        self.qletters = qletters
        self.G = G
        self.Ginv = np.linalg.inv(G)
        self.theta = theta
        self.last = orbit.letters[-1].matrix

    def block_at(self, t):
        R = rotation2(t * self.theta)
        q = np.eye(2)
        for b in self.qletters:
            q = (b @ R) @ q
        B = self.Ginv @ q @ self.G
        if self.pair_case:
            B = B / np.sqrt(abs(np.linalg.det(B)))
        return B

    def realize_at(self, B):
        block = BlockPerturbation(self.j, self.k1, B)
        return realize_on_pair(self.orbit, self.basis, block)

    def last_letter_at(self, B):
        vals = self.basis.values
        if self.pair_case:
            placements = [((self.j, self.k1), B)]
        else:
            sigma = self.space.pair_sign(self.j) * self.space.pair_sign(self.k1)
            placements = [
                ((self.j, self.k1), B),
                ((self.js, self.k1s), conjugate_block(B, sigma)),
            ]
        Dhat = _embedded_diag(self.space, vals, placements)
        Psi = Dhat * (1.0 / vals)[None, :]
        return (self.basis.vectors @ Psi @ self.basis.inverse) @ self.last

    def fixed_values(self):
        active = {self.j, self.k1, self.js, self.k1s}
        return [
            (r, self.basis.values[r])
            for r in range(self.space.dim)
            if r not in active
        ]


def _surgery_frame(iso, B, mu, partner, idx):
    """Frame and block indices for the rotation surgery at a meeting.

    partner is ("reciprocal", _) for a meeting of a branch with its own
    inverse at +-1, or ("fixed", s) for a meeting with the fixed
    eigenvalue at index s; idx selects which moving branch carries mu
    (0/1 from the window block, 2/3 from the conjugate block).  Returns
    (F, ix_main, ix_dual) where the surgery rotates the coordinates
    ix_main of the frame F and compensates on ix_dual (None for a
    symplectic meeting plane); F itself is None in the pair case, where
    the rotation composes into the window block directly.
    """
    space, P = iso.space, iso.basis.vectors
    j, k1, js, k1s = iso.j, iso.k1, iso.js, iso.k1s
    kind, info = partner
    F = P.copy()
    if iso.pair_case:
        Bt = None
    else:
        sigma = space.pair_sign(j) * space.pair_sign(k1)
        Bt = conjugate_block(B, sigma)

    def amb(cols, vec):
        return P[:, cols] @ vec

    if kind == "reciprocal":
        if iso.pair_case:
            # meeting of the det-1 block's own pair at +-1: rotate the
            # whole symplectic plane (e_j, e_j*) by composing with R(phi)
            return None, None, None
        u1 = amb([j, k1], _eig2_vector(B, mu))
        u2 = amb([js, k1s], _eig2_vector(Bt, mu))
        w12 = space.omega(u1, u2)
        if abs(w12) < 1e-8:
            raise ValueError("meeting plane unexpectedly degenerate")
        other = _other_eig(B, mu)
        w1 = amb([j, k1], _eig2_vector(B, other))
        w2 = amb([js, k1s], _eig2_vector(Bt, 1.0 / other))
        F[:, j] = u1
        F[:, js] = u2 / w12
        F[:, k1] = w1
        F[:, k1s] = w2
        return F, [j, js], None
    # meeting with a fixed eigendirection: isotropic plane plus dual
    s = info
    ss = space.conj(s)
    if idx < 2:
        u1 = amb([j, k1], _eig2_vector(B, mu))
        w1 = amb([j, k1], _eig2_vector(B, _other_eig(B, mu)))
        d1 = amb([js, k1s], _eig2_vector(Bt, 1.0 / mu))
        d_w = amb([js, k1s], _eig2_vector(Bt, 1.0 / _other_eig(B, mu)))
        cu, cw = j, js
        F[:, j], F[:, k1], F[:, js], F[:, k1s] = u1, w1, d1, d_w
    else:
        mu_b = _closest_eig(Bt, mu)
        u1 = amb([js, k1s], _eig2_vector(Bt, mu_b))
        w1 = amb([js, k1s], _eig2_vector(Bt, _other_eig(Bt, mu_b)))
        d1 = amb([j, k1], _eig2_vector(B, 1.0 / mu_b))
        d_w = amb([j, k1], _eig2_vector(B, 1.0 / _other_eig(Bt, mu_b)))
        cu, cw = js, j
        F[:, js], F[:, k1s], F[:, j], F[:, k1] = u1, w1, d1, d_w
    return F, [cu, s], [cw, ss]


def _other_eig(B, mu):
    w = _eig2(B)
    return w[int(np.argmax(np.abs(w - mu)))]


def _closest_eig(B, mu):
    w = _eig2(B)
    return w[int(np.argmin(np.abs(w - mu)))]


def _apply_surgery(iso, B, mu, partner, idx, phi):
    """Compose the complexifying rotation at a meeting into the orbit.

    Returns (orbit, matrix, distance) or None when the construction does
    not produce the requested structure at this phi.
    """
    space = iso.space
    F, ix_main, ix_dual = _surgery_frame(iso, B, mu, partner, idx)
    if F is None:
        # pair-case meeting at +-1: rotate inside the invariant plane by
        # composing the block itself with a trace-shrinking rotation
        tr = np.trace(B)
        off = B[0, 1] - B[1, 0]
        sign = -1.0 if tr * off > 0 else 1.0
        Bp = B @ rotation2(sign * phi)
        Bp = Bp / np.sqrt(abs(np.linalg.det(Bp)))
        if np.trace(Bp) ** 2 >= 4.0 - 1e-12:
            return None
        rp = iso.realize_at(Bp)
        return rp.orbit, rp.matrix, rp.distance
    rp = iso.realize_at(B)
    C = rotation2(phi)
    Itld = np.eye(space.dim)
    Itld[np.ix_(ix_main, ix_main)] = C
    if ix_dual is not None:
        u1, u2 = F[:, ix_main[0]], F[:, ix_main[1]]
        w1, w2 = F[:, ix_dual[0]], F[:, ix_dual[1]]
        Gamma = np.array(
            [
                [space.omega(u1, w1), space.omega(u1, w2)],
                [space.omega(u2, w1), space.omega(u2, w2)],
            ]
        )
        if min(abs(Gamma[0, 0]), abs(Gamma[1, 1])) < 1e-10:
            return None
        # omega(I~ a_m, I~ b_n) = (C^T Gamma D)_{mn} must stay Gamma
        D = np.linalg.solve(Gamma, np.linalg.solve(C.T, Gamma))
        Itld[np.ix_(ix_dual, ix_dual)] = D
    Phi = F @ Itld @ np.linalg.inv(F)
    if not is_symplectic(space, Phi, tol=1e-8):
        return None
    last0 = iso.orbit.letters[-1]
    new_last = Phi @ rp.orbit.letters[-1].matrix
    letters = iso.orbit.letters[:-1] + (
        Letter(new_last, last0.label, provenance="perturbed"),
    )
    new_orbit = PeriodicOrbit(iso.orbit.orbit_id, letters)
    return new_orbit, word_matrix(letters), op_norm(new_last - last0.matrix)


def _deepen_2d(orbit: PeriodicOrbit, verdict: ManeComplexified, eps: float):
    """Push a 2D complexifying rotation toward trace zero within budget.

    The bare Mane angle leaves the period map barely non-real; downstream
    constructions want the rotation angle of the complex pair as large as
    the budget allows, which means driving |trace| toward zero.
    """
    mats = [np.asarray(l.matrix, dtype=float) for l in orbit.letters]
    dets = [float(np.linalg.det(m)) for m in mats]
    normed = [m / np.sqrt(d) for m, d in zip(mats, dets)]
    sign = 1.0 if verdict.theta >= 0 else -1.0
    hi = sign * max(abs(verdict.theta), min(eps, 0.6))
    best = verdict
    best_margin = None
    for theta in np.linspace(verdict.theta, hi, 240):
        R = rotation2(float(theta))
        M = np.eye(2)
        for m in normed:
            M = (m @ R) @ M
        tr = float(np.trace(M))
        if tr * tr >= 4.0 - 1e-9:
            continue
        distance = max(op_norm(m @ R - l.matrix)
                       for m, l in zip(normed, orbit.letters))
        if distance > eps:
            break
        if best_margin is None or abs(tr) < best_margin:
            best_margin = abs(tr)
            letters = tuple(
                Letter(m @ R, l.label, provenance="perturbed")
                for m, l in zip(normed, orbit.letters)
            )
            best = ManeComplexified(
                PeriodicOrbit(orbit.orbit_id, letters), float(theta), distance
            )
    return best


def collapse_and_complexify(
    space: SymplecticSpace,
    orbit: PeriodicOrbit,
    i: int,
    j: int,
    k: int,
    eps: float,
    steps: int = 1000,
    ell_max: int = 200,
    basis: EigenBasis | None = None,
):
    """Produce a non-real pair of modulus rank (i, i+1) through the window
    (j, k+1), or report the quotient obstruction.

    The 2D quotient of E_j + ... + E_{k+1} by its middle either certifies
    domination (CollapseObstructed) or yields a complexifying rotation
    angle.  The angle is then driven from 0 to that value; along the way
    the four affected eigenvalue branches lam_j, lam_{k+1} and their
    conjugates are tracked, while the remaining eigenvalues stay put
    exactly.  Success happens either when the moving pair itself turns
    non-real at the right rank, or at the first branch crossing whose
    meeting lands on sorted positions (i, i+1): there a small rotation in
    the collided plane (symplectic plane directly, isotropic plane with
    its omega-dual compensated) makes the pair genuinely complex.  The
    conjugate rank (2N-2-i, 2N-1-i) comes along automatically.
    """
    dim = space.dim
    if not 0 <= i <= dim - 2:
        raise ValueError("rank index i must be in [0, %d]" % (dim - 2))
    if not (0 <= j <= i and i <= k <= dim - 2):
        raise ValueError("window must satisfy j <= i <= k")
    k1 = k + 1
    M = orbit_product(orbit)
    if has_rank_complex(M, i):
        trace = IsotopyTrace(
            (IsotopySample(0.0, orbit.letters[-1].matrix, np.zeros(4, complex)),)
        )
        return CollapseResult(orbit, M, i, 0.0, "already-complex", trace, 0.0)
    if dim == 2:
        # the whole space is the window: no quotient chart or eigenframe
        # needed, and parabolic spectra are fine
        verdict = mane_2d(orbit, eps, ell_max=ell_max)
        if isinstance(verdict, ManeDominated):
            return CollapseObstructed(verdict.certificate, verdict.ell)
        verdict = _deepen_2d(orbit, verdict, eps)
        M2 = orbit_product(verdict.orbit)
        trace = IsotopyTrace((
            IsotopySample(0.0, orbit.letters[-1].matrix,
                          np.linalg.eigvals(M).astype(complex)),
            IsotopySample(1.0, verdict.orbit.letters[-1].matrix,
                          np.linalg.eigvals(M2).astype(complex)),
        ))
        if verdict.distance > eps:
            return CollapseFailure(
                trace,
                "perturbation %.3g exceeds budget %.3g"
                % (verdict.distance, eps),
            )
        if not has_rank_complex(M2, 0):
            return CollapseFailure(trace, "rotated period map is not complex")
        return CollapseResult(verdict.orbit, M2, 0, float(verdict.theta),
                              "complex", trace, verdict.distance)
    if basis is None:
        basis = eigen_symplectic_basis(space, M)
    qletters, G = _window_quotient(orbit, basis, j, k1)
    q0 = np.eye(2)
    for b in qletters:
        q0 = b @ q0
    target = np.diag(basis.values[[j, k1]])
    resid = op_norm(np.linalg.solve(G, q0 @ G) - target) / max(1.0, op_norm(target))
    if resid > 1e-6:
        raise ValueError(
            "window quotient does not reproduce the eigenvalue pair "
            "(residual %.3g)" % resid
        )
    qorbit = PeriodicOrbit(
        orbit.orbit_id + "/window",
        tuple(Letter(b, l.label) for b, l in zip(qletters, orbit.letters)),
    )
    verdict = mane_2d(qorbit, eps, ell_max=ell_max)
    if isinstance(verdict, ManeDominated):
        return CollapseObstructed(verdict.certificate, verdict.ell)
    # drive the quotient rotation past the bare complexification angle: the
    # deepest admissible sample gives the realized plane a rotation angle
    # well inside the non-real region, which downstream constructions need
    # (a barely-complex plane turns a line across itself uselessly slowly)
    sign = 1.0 if verdict.theta >= 0 else -1.0
    theta_iso = sign * max(abs(verdict.theta), min(eps, 0.6))
    iso = _Isotopy(orbit, basis, j, k1, qletters, G, theta_iso)
    fixed = iso.fixed_values()
    fixed_vals = np.array([v for _, v in fixed])

    def spectrum_entries(branches):
        """(values list, positions of the window pair within the list)."""
        if iso.pair_case:
            moving = [branches[0], branches[1]]
        else:
            moving = list(branches)
        return np.concatenate([fixed_vals, moving]), (len(fixed_vals), len(fixed_vals) + 1)

    samples = []
    ts = np.linspace(0.0, 1.0, steps + 1)
    prev_pair = None
    prev_branches = None
    budget_reason = None
    deepest = None
    for n, t in enumerate(ts):
        B = iso.block_at(t)
        pair = _eig2(B)
        if prev_pair is not None:
            pair = _match_pair(prev_pair, pair)
        else:
            pair = pair[np.argsort(np.abs(pair))]
        branches = np.array([pair[0], pair[1], 1.0 / pair[0], 1.0 / pair[1]])
        samples.append(IsotopySample(float(t), iso.last_letter_at(B), branches))
        went_complex = abs(pair[0].imag) > 1e-10 * max(1.0, abs(pair[0]))
        if deepest is not None and not went_complex:
            break  # rotated out the far side of the non-real region
        # event 1: the moving pair itself went non-real at the right rank
        if went_complex:
            vals, pos = spectrum_entries(branches)
            if _rank_positions_ok(np.abs(vals), pos, i, margin=1e-8):
                rp = iso.realize_at(B)
                if rp.distance > eps:
                    if deepest is not None:
                        break  # budget spent, keep the deepest admissible
                    budget_reason = (
                        "perturbation %.3g exceeds budget %.3g at t=%.4f"
                        % (rp.distance, eps, t)
                    )
                    break
                if has_rank_complex(rp.matrix, i):
                    deepest = (rp, float(t))
        # event 2: a real branch crossed another eigenvalue at the right rank
        elif prev_branches is not None:
            hit = _first_crossing(iso, prev_branches, branches, ts[n - 1], t, fixed, i)
            if hit is not None:
                t_x, B_x, mu, partner, idx = hit
                out = _try_surgery(iso, B_x, mu, partner, idx, eps)
                if out is not None:
                    orbit2, M2, distance, kind = out
                    if has_rank_complex(M2, i):
                        return CollapseResult(
                            orbit2, M2, i, float(t_x), kind,
                            IsotopyTrace(samples), distance,
                        )
        prev_pair = pair
        prev_branches = branches
    if deepest is not None:
        rp, t_deep = deepest
        return CollapseResult(rp.orbit, rp.matrix, i, t_deep, "complex",
                              IsotopyTrace(samples), rp.distance)
    reason = budget_reason or (
        "no event of rank %d detected in [0, 1] at %d samples" % (i, steps)
    )
    return CollapseFailure(IsotopyTrace(samples), reason)


def _crossing_candidates(iso, fixed):
    """(idx_a, partner) pairs to monitor for sign changes."""
    cands = []
    movers = [0, 1] if iso.pair_case else [0, 1, 2, 3]
    for idx in movers:
        for s, _ in fixed:
            cands.append((idx, ("fixed", s)))
    if iso.pair_case:
        cands.append((0, ("reciprocal", 0)))
    else:
        cands.append((0, ("reciprocal", 0)))
        cands.append((1, ("reciprocal", 1)))
    return cands


def _partner_value(iso, branches, fixed_map, partner, idx):
    kind, info = partner
    if kind == "fixed":
        return fixed_map[info]
    return 1.0 / branches[idx]


def _first_crossing(iso, br_prev, br_cur, t_prev, t_cur, fixed, i):
    """Bisect the earliest admissible branch crossing in (t_prev, t_cur]."""
    fixed_map = dict(fixed)
    fixed_vals = np.array([v for _, v in fixed])
    real_prev = np.max(np.abs(br_prev.imag)) < 1e-10
    real_cur = np.max(np.abs(br_cur.imag)) < 1e-10
    if not (real_prev and real_cur):
        return None
    hits = []
    for idx, partner in _crossing_candidates(iso, fixed):
        ga = br_prev[idx].real - np.real(
            _partner_value(iso, br_prev, fixed_map, partner, idx)
        )
        gb = br_cur[idx].real - np.real(
            _partner_value(iso, br_cur, fixed_map, partner, idx)
        )
        if ga == 0.0 or ga * gb >= 0:
            continue
        lo, hi = t_prev, t_cur
        br_lo = br_prev
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            Bm = iso.block_at(mid)
            pm = _match_pair((br_lo[0], br_lo[1]), _eig2(Bm))
            brm = np.array([pm[0], pm[1], 1.0 / pm[0], 1.0 / pm[1]])
            if np.max(np.abs(brm.imag)) > 1e-10:
                hi = mid
                continue
            gm = brm[idx].real - np.real(
                _partner_value(iso, brm, fixed_map, partner, idx)
            )
            if ga * gm > 0:
                lo, br_lo = mid, brm
            else:
                hi = mid
            if hi - lo < 1e-13:
                break
        t_x = 0.5 * (lo + hi)
        B_x = iso.block_at(t_x)
        p_x = _match_pair((br_lo[0], br_lo[1]), _eig2(B_x))
        if np.max(np.abs(np.asarray(p_x).imag)) > 1e-8:
            continue
        br_x = np.array([p_x[0], p_x[1], 1.0 / p_x[0], 1.0 / p_x[1]])
        mu = float(br_x[idx].real)
        if iso.pair_case:
            moving = [br_x[0], br_x[1]]
        else:
            moving = list(br_x)
        moving_idx = idx if idx < len(moving) else None
        all_vals = np.concatenate([fixed_vals, moving])
        pos_a = len(fixed_vals) + (moving_idx if moving_idx is not None else 0)
        kind, info = partner
        if kind == "fixed":
            pos_b = int(np.where([s == info for s, _ in fixed])[0][0])
        else:
            recip_idx = idx + 2 if idx < 2 else idx - 2
            if iso.pair_case:
                recip_idx = 1 - idx
            pos_b = len(fixed_vals) + recip_idx
        if not _rank_positions_ok(np.abs(all_vals), (pos_a, pos_b), i, margin=1e-9):
            continue
        hits.append((t_x, B_x, mu, partner, idx))
    if not hits:
        return None
    return min(hits, key=lambda h: h[0])


def _try_surgery(iso, B_x, mu, partner, idx, eps):
    """Escalate the surgery angle until the complex pair is robust."""
    for phi in (2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1):
        try:
            out = _apply_surgery(iso, B_x, mu, partner, idx, phi)
        except (ValueError, np.linalg.LinAlgError):
            return None
        if out is None:
            continue
        orbit2, M2, distance = out
        if distance > eps:
            return None
        kind = "pair-rotation" if partner[0] == "reciprocal" else "cross-rotation"
        return orbit2, M2, distance, kind
    return None
