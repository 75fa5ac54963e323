"""Transition words between periodic orbits and the identity-product endgame.

A transition word carries one periodic point to another and is composable
with the orbit words at both endpoints.  This module supplies the algebra
on such words (composition, padding by full periods) together with the
constructions that shape a raw transition into an adapted one:

* ``point_data`` bundles an orbit with a symplectic eigenframe, including
  two-dimensional rotation blocks when the period map has complex pairs;
* ``align_extremes`` and ``align_top`` pin the outermost eigenlines or
  eigenplanes of the target exactly, by padding with full periods and
  composing small shear correctors into single letters;
* ``adapted_transition`` peels the spectrum from the outside inward and
  returns transitions that match every invariant line or plane;
* ``swap_transition`` uses an adapted round trip through an orbit with a
  complex plane to exchange two adjacent eigenlines exactly;
* ``elliptic_word`` assembles the cyclic swap words into a long product
  that collapses to the identity matrix after one diagonal correction.

Long padded words are numerically delicate: a naive left-to-right product
of their letters loses the contracted directions once the intermediate
norms grow past the reciprocal machine precision.  Image subspaces are
therefore propagated factor by factor with renormalization, and the
identity certificate is evaluated through the permutation/log-magnitude
structure of the factors.  The flat product is still reported so gentle
instances can cross-check both paths.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .cocycle import Letter, PeriodicOrbit, TransitionWord, word_matrix
from .core import EigenBasis, SymplecticSpace, eigen_symplectic_basis, is_symplectic, op_norm, space_for_dim
from .perturbation import straighten
from .rand import random_symplectic_near_identity

__all__ = [
    "AdaptedTransition",
    "AlignedTransition",
    "AlignmentError",
    "EllipticBudgetError",
    "EllipticWord",
    "PointData",
    "SwapCertificate",
    "TransitionError",
    "adapted_transition",
    "align_extremes",
    "align_top",
    "compose_transitions",
    "elliptic_word",
    "identity_transition",
    "line_corrector",
    "pad_transition",
    "plane_corrector",
    "point_data",
    "swap_transition",
    "verify_swap",
]


class TransitionError(ValueError):
    """A transition-word operation received unusable data."""


class AlignmentError(TransitionError):
    """An alignment ran out of iterates before reaching its tolerance."""

    def __init__(self, message: str, achieved: float = float("nan")):
        super().__init__(message)
        self.achieved = achieved


class EllipticBudgetError(TransitionError):
    """The diagonal correction does not fit the letter budget at this n."""

    def __init__(self, message: str, minimal_n: int):
        super().__init__(message)
        self.minimal_n = minimal_n


# ---------------------------------------------------------------------------
# plain word algebra


def identity_transition(space: SymplecticSpace, from_point: str, to_point: str,
                        eps_budget: float = 0.0) -> TransitionWord:
    """A single identity letter carrying ``from_point`` to ``to_point``."""
    letter = Letter(np.eye(space.dim), "id(%s->%s)" % (from_point, to_point))
    return TransitionWord(from_point, to_point, (letter,), eps_budget)


def compose_transitions(t_ij: TransitionWord, t_jk: TransitionWord) -> TransitionWord:
    """Concatenate ``t_jk`` (applied first) with ``t_ij``.

    The result carries ``t_jk.from_point`` to ``t_ij.to_point``; the budget
    is the larger of the two.
    """
    if t_jk.to_point != t_ij.from_point:
        raise TransitionError(
            "endpoint mismatch: cannot compose %s->%s after %s->%s"
            % (t_ij.from_point, t_ij.to_point, t_jk.from_point, t_jk.to_point)
        )
    return TransitionWord(
        t_jk.from_point,
        t_ij.to_point,
        tuple(t_jk.letters) + tuple(t_ij.letters),
        max(t_ij.eps_budget, t_jk.eps_budget),
    )


def pad_transition(orbit_i: PeriodicOrbit, t_ij: TransitionWord, orbit_j: PeriodicOrbit,
                   alpha: int, beta: int) -> TransitionWord:
    """Pad a transition with full periods: ``M_i^alpha . T . M_j^beta``.

    ``t_ij`` runs from ``orbit_j``'s base point to ``orbit_i``'s.  Padding
    does not change the endpoints or the budget.
    """
    if alpha < 0 or beta < 0:
        raise TransitionError("padding exponents must be nonnegative")
    if t_ij.from_point != orbit_j.orbit_id or t_ij.to_point != orbit_i.orbit_id:
        raise TransitionError(
            "transition %s->%s does not run between orbits %r and %r"
            % (t_ij.from_point, t_ij.to_point, orbit_j.orbit_id, orbit_i.orbit_id)
        )
    letters = tuple(orbit_j.letters) * beta + tuple(t_ij.letters) + tuple(orbit_i.letters) * alpha
    return TransitionWord(t_ij.from_point, t_ij.to_point, letters, t_ij.eps_budget)


# ---------------------------------------------------------------------------
# eigenstructure bundles


@dataclass(frozen=True, eq=False)
class PointData:
    """An orbit with a symplectic frame adapted to its period map.

    ``basis`` holds one column per rank, ordered by increasing modulus, and
    satisfies the canonical pairing table exactly.  Real simple eigenvalues
    occupy one column; each complex pair occupies the two columns recorded
    in ``planes`` (by lower rank), on which the period map restricts to the
    2x2 matrix stored in ``block_mats``.
    """

    space: SymplecticSpace
    orbit: PeriodicOrbit
    basis: np.ndarray
    moduli: np.ndarray
    planes: tuple
    blocks: tuple
    block_mats: tuple
    ebasis: EigenBasis | None = dataclasses.field(repr=False, default=None)
    base_distance: float = 0.0

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def basis_inverse(self) -> np.ndarray:
        J = self.space.form
        return -J @ self.basis.T @ J

    def coords(self, vectors: np.ndarray) -> np.ndarray:
        return self.basis_inverse @ vectors

    def block_of(self, rank: int) -> tuple:
        for block in self.blocks:
            if rank in block:
                return block
        raise TransitionError("rank %d out of range" % rank)

    def block_matrix(self, rank: int) -> np.ndarray:
        for block, mat in zip(self.blocks, self.block_mats):
            if rank in block:
                return mat
        raise TransitionError("rank %d out of range" % rank)


def _complete_planes(dim: int, planes) -> tuple:
    """Close a set of plane lower-ranks under conjugation and validate it."""
    out = set()
    for p in planes:
        p = int(p)
        if not 0 <= p < dim - 1:
            raise TransitionError("plane rank %d out of range for dimension %d" % (p, dim))
        out.add(p)
        out.add(dim - 2 - p)
    ordered = sorted(out)
    for a, b in zip(ordered, ordered[1:]):
        if b - a < 2:
            raise TransitionError("plane ranks %d and %d overlap" % (a, b))
    return tuple(ordered)


def _block_partition(dim: int, planes: tuple) -> tuple:
    blocks = []
    r = 0
    while r < dim:
        if r in planes:
            blocks.append((r, r + 1))
            r += 2
        else:
            blocks.append((r,))
            r += 1
    return tuple(blocks)


def _adapted_polish(space: SymplecticSpace, C: np.ndarray, planes: tuple) -> np.ndarray:
    """Normalize a block-adapted frame to the exact canonical pairing table.

    Columns are assumed pairwise omega-orthogonal except across conjugate
    blocks (true for an eigenframe up to rounding).  Plane blocks are
    rescaled jointly so the restriction of the period map to each plane is
    not disturbed.
    """
    dim = space.dim
    half = space.half_dim
    J = space.form
    C = np.array(C, dtype=float)
    plane_ranks = set()
    for p in planes:
        plane_ranks.update((p, p + 1))

    done_pairs = []

    def clean(col):
        x = C[:, col]
        for q, qs in done_pairs:
            x = x + space.omega(C[:, qs], x) * C[:, q] - space.omega(C[:, q], x) * C[:, qs]
        C[:, col] = x

    def fix_sign(col):
        v = C[:, col]
        if v[np.argmax(np.abs(v))] < 0:
            C[:, col] = -v

    r = 0
    while r < half:
        rs = space.conj(r)
        if r in plane_ranks and r + 1 == rs:
            # self-conjugate plane straddling the center; scale the two
            # columns jointly so the restricted block stays an exact scaled
            # rotation (one-sided scaling would squeeze the chart)
            clean(r)
            clean(rs)
            fix_sign(r)
            c = space.omega(C[:, r], C[:, rs])
            if abs(c) < 1e-12:
                raise TransitionError("center plane is omega-degenerate")
            if c < 0:
                C[:, rs] = -C[:, rs]
                c = -c
            s = np.sqrt(c)
            C[:, r] = C[:, r] / s
            C[:, rs] = C[:, rs] / s
            done_pairs.append((r, rs))
            r += 2
        elif r in plane_ranks:
            # isotropic plane (r, r+1) with dual plane (conj(r+1), conj(r))
            d0, d1 = space.conj(r + 1), space.conj(r)
            for col in (r, r + 1, d0, d1):
                clean(col)
            fix_sign(r)
            fix_sign(r + 1)
            iso = max(abs(space.omega(C[:, r], C[:, r + 1])),
                      abs(space.omega(C[:, d0], C[:, d1])))
            if iso > 1e-6 * np.max(np.abs(C)):
                raise TransitionError("declared plane at rank %d is not isotropic" % r)
            gram = np.array([
                [space.omega(C[:, r], C[:, d0]), space.omega(C[:, r], C[:, d1])],
                [space.omega(C[:, r + 1], C[:, d0]), space.omega(C[:, r + 1], C[:, d1])],
            ])
            target = np.array([[J[r, d0], J[r, d1]], [J[r + 1, d0], J[r + 1, d1]]])
            if abs(np.linalg.det(gram)) < 1e-12:
                raise TransitionError("plane pairing at rank %d is degenerate" % r)
            C[:, [d0, d1]] = C[:, [d0, d1]] @ np.linalg.solve(gram, target)
            done_pairs.append((r, d1))
            done_pairs.append((r + 1, d0))
            r += 2
        else:
            clean(r)
            clean(rs)
            c = space.omega(C[:, r], C[:, rs])
            if abs(c) < 1e-12:
                raise TransitionError("frame pair (%d, %d) is omega-degenerate" % (r, rs))
            if c < 0:
                C[:, rs] = -C[:, rs]
                c = -c
            s = np.sqrt(c)
            C[:, r] = C[:, r] / s
            C[:, rs] = C[:, rs] / s
            if C[np.argmax(np.abs(C[:, r])), r] < 0:
                C[:, r] = -C[:, r]
                C[:, rs] = -C[:, rs]
            done_pairs.append((r, rs))
            r += 1
    return C


def point_data(space: SymplecticSpace, orbit: PeriodicOrbit, planes=(),
               gap: float = 1e-8, base_distance: float = 0.0) -> PointData:
    """Build the adapted frame of an orbit's period map.

    ``planes`` lists the lower rank of every complex pair (conjugate planes
    may be omitted; they are filled in).  With no planes this reduces to the
    simple positive real eigenframe.  Raises ``TransitionError`` when the
    spectrum does not match the declared block structure.
    """
    from .cocycle import orbit_product

    M = orbit_product(orbit)
    dim = space.dim
    planes = _complete_planes(dim, planes)
    blocks = _block_partition(dim, planes)

    if not planes:
        try:
            ebasis = eigen_symplectic_basis(space, M, gap=gap)
        except ValueError as exc:
            raise TransitionError(str(exc)) from exc
        if ebasis.values[0] < 0:
            raise TransitionError(
                "negative real spectrum; double the orbit period first")
        basis = np.array(ebasis.vectors, dtype=float)
        moduli = np.abs(np.asarray(ebasis.values, dtype=float))
        mats = tuple(np.array([[v]]) for v in ebasis.values)
        return PointData(space, orbit, basis, moduli, (), blocks, mats,
                         ebasis=ebasis, base_distance=base_distance)

    w, V = np.linalg.eig(M)
    order = np.argsort(np.abs(w), kind="stable")
    w = w[order]
    V = V[:, order]

    basis = np.zeros((dim, dim))
    moduli = np.zeros(dim)
    scale = np.max(np.abs(w))
    r = 0
    while r < dim:
        lam = w[r]
        if r in planes:
            pair = w[r + 1]
            if abs(lam.imag) <= 1e-9 * scale:
                raise TransitionError("rank %d is not a complex plane" % r)
            if abs(pair - np.conj(lam)) > 1e-6 * abs(lam):
                raise TransitionError("rank %d does not carry a conjugate pair" % r)
            vec = V[:, r] if lam.imag > 0 else V[:, r + 1]
            basis[:, r] = vec.real
            basis[:, r + 1] = vec.imag
            moduli[r] = moduli[r + 1] = abs(lam)
            r += 2
        else:
            if abs(lam.imag) > 1e-9 * scale:
                raise TransitionError("rank %d carries an undeclared complex eigenvalue" % r)
            if lam.real <= 0:
                raise TransitionError("mixed-sign or zero real spectra are not supported")
            vec = V[:, r]
            k = int(np.argmax(np.abs(vec)))
            vec = vec * np.exp(-1j * np.angle(vec[k]))
            if np.max(np.abs(vec.imag)) > 1e-6 * np.max(np.abs(vec)):
                raise TransitionError("rank %d eigenvector is not real" % r)
            basis[:, r] = vec.real / np.linalg.norm(vec.real)
            moduli[r] = lam.real
            r += 1

    for a, b in zip(blocks[:-1], blocks[1:]):
        if moduli[b[0]] - moduli[a[0]] < gap:
            raise TransitionError(
                "modulus gap %.3g between ranks %d and %d is below %.3g"
                % (moduli[b[0]] - moduli[a[0]], a[0], b[0], gap)
            )

    basis = _adapted_polish(space, basis, planes)
    residual = op_norm(basis.T @ space.form @ basis - space.form)
    if residual > 1e-9 * max(1.0, op_norm(basis) ** 2):
        raise TransitionError("adapted frame failed the pairing table check (%.3g)" % residual)

    J = space.form
    inv = -J @ basis.T @ J
    coords = inv @ M @ basis
    mats = []
    for block in blocks:
        idx = np.ix_(block, block)
        mats.append(np.array(coords[idx]))
    off = coords.copy()
    for block in blocks:
        off[np.ix_(block, block)] = 0.0
    if op_norm(off) > 1e-7 * op_norm(M):
        raise TransitionError("period map is not block-diagonal in the adapted frame")

    return PointData(space, orbit, basis, moduli, planes, blocks, tuple(mats),
                     ebasis=None, base_distance=base_distance)


# ---------------------------------------------------------------------------
# factor chains: numerically stable subspace propagation


class _Mat:
    """A bounded matrix factor."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.array(matrix, dtype=float)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return self.matrix @ X

    def apply_inverse(self, X: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.matrix, X)


class _Pow:
    """A full-period power, applied blockwise in the adapted frame."""

    def __init__(self, pd: PointData, n: int):
        self.pd = pd
        self.n = int(n)

    @property
    def matrix(self) -> np.ndarray:
        return self.pd.basis @ self._coord_power(self.n) @ self.pd.basis_inverse

    def _coord_power(self, n: int) -> np.ndarray:
        dim = self.pd.dim
        P = np.zeros((dim, dim))
        for block, mat in zip(self.pd.blocks, self.pd.block_mats):
            if len(block) == 1:
                P[block[0], block[0]] = float(mat[0, 0]) ** n
            else:
                P[np.ix_(block, block)] = np.linalg.matrix_power(mat, n)
        if not np.all(np.isfinite(P)):
            raise TransitionError("period power %d overflows" % n)
        return P

    def apply(self, X: np.ndarray) -> np.ndarray:
        return self.pd.basis @ (self._coord_power(self.n) @ (self.pd.basis_inverse @ X))

    def apply_inverse(self, X: np.ndarray) -> np.ndarray:
        return self.pd.basis @ (self._coord_power(-self.n) @ (self.pd.basis_inverse @ X))


def _normalize_columns(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    return X / norms


def _propagate(chain, X: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Apply a factor chain to columns, renormalizing after every factor."""
    X = _normalize_columns(np.array(X, dtype=float).reshape(len(X), -1))
    factors = reversed(chain) if inverse else chain
    for factor in factors:
        X = factor.apply_inverse(X) if inverse else factor.apply(X)
        X = _normalize_columns(X)
    return X


def _propagate_logs(chain, X: np.ndarray) -> tuple:
    """Like ``_propagate`` but also return the accumulated log stretch.

    Columns come back unit length; ``logs[j]`` is the log of the factor by
    which the chain stretched column ``j`` (measured from a unit start), so
    the per-factor renormalization loses no scale information.
    """
    X = np.array(X, dtype=float).reshape(len(X), -1)
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    X = X / norms
    logs = np.zeros(X.shape[1])
    for factor in chain:
        X = factor.apply(X)
        norms = np.linalg.norm(X, axis=0)
        norms[norms == 0] = 1.0
        logs += np.log(norms)
        X = X / norms
    return X, logs


def _block_angle(Xc: np.ndarray, rows) -> float:
    """Angle between a column span and a coordinate block, from the leaked mass."""
    Q, _ = np.linalg.qr(Xc)
    off = np.delete(Q, list(rows), axis=0)
    s = min(1.0, op_norm(off)) if off.size else 0.0
    return float(np.arcsin(s))


def _block_even(v: np.ndarray, blocks) -> np.ndarray:
    """Average a per-rank vector over each multi-rank block."""
    out = np.array(v, dtype=float)
    for block in blocks:
        if len(block) > 1:
            out[list(block)] = float(np.mean(out[list(block)]))
    return out


# ---------------------------------------------------------------------------
# shear correctors


def _corrector_coords(space: SymplecticSpace, positions: tuple, V: np.ndarray) -> np.ndarray:
    """The symplectic corrector sending the block columns to ``V``.

    ``positions`` lists one or two adjacent ranks; ``V`` holds one target
    column per position, normalized so its block rows equal the identity.
    Every other basis vector picks up compensating components along the
    conjugate positions, solved from the requirement that the pairing table
    is preserved exactly.
    """
    dim = space.dim
    k = len(positions)
    V = np.array(V, dtype=float).reshape(dim, k)
    block = tuple(int(p) for p in positions)
    lead = V[list(block), :]
    if op_norm(lead - np.eye(k)) > 1e-9:
        V = V @ np.linalg.inv(lead)
    duals = tuple(space.conj(p) for p in reversed(block))
    if set(duals) == set(block):
        # center plane: compose two single-line correctors inside the plane;
        # the second column is achieved up to the scale forced by the pairing
        pairing = space.omega(V[:, 0], V[:, 1])
        if abs(pairing) < 1e-12:
            raise TransitionError("center-plane image is omega-degenerate")
        C1 = _corrector_coords(space, (block[0],), V[:, 0:1])
        w = np.linalg.solve(C1, V[:, 1])
        if abs(w[block[1]]) < 1e-12 * np.linalg.norm(w):
            raise TransitionError("center-plane image is degenerate")
        C2 = _corrector_coords(space, (block[1],), w.reshape(-1, 1))
        return C1 @ C2
    if k == 2:
        iso = space.omega(V[:, 0], V[:, 1])
        if abs(iso) > 1e-8 * max(1.0, op_norm(V) ** 2):
            raise TransitionError("plane image is not isotropic (omega = %.3g)" % iso)
    dirs = duals

    C = np.eye(dim)
    for a, p in enumerate(block):
        C[:, p] = V[:, a]
    A = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            e = np.zeros(dim)
            e[dirs[b]] = 1.0
            A[a, b] = space.omega(e, V[:, a])
    touched = set(block) | set(dirs)
    for i in range(dim):
        if i in touched:
            continue
        e = np.zeros(dim)
        e[i] = 1.0
        rhs = np.array([space.form[i, p] - space.omega(e, V[:, a])
                        for a, p in enumerate(block)])
        coeff = np.linalg.solve(A, rhs)
        for b in range(k):
            C[dirs[b], i] += coeff[b]
    check = is_symplectic(space, C, tol=1e-7 * max(1.0, op_norm(C) ** 2))
    if not check:
        raise TransitionError("corrector failed the symplectic check (%.3g)" % check.residual)
    return C


def line_corrector(space: SymplecticSpace, s: int, vector: np.ndarray) -> np.ndarray:
    """Symplectic corrector mapping basis vector ``s`` onto ``vector``.

    Works in canonical coordinates; the vector is normalized to a unit
    component at position ``s``.  All other basis vectors are preserved up
    to a compensating component along the conjugate position of ``s``.
    """
    v = np.array(vector, dtype=float)
    if abs(v[s]) < 1e-12 * np.linalg.norm(v):
        raise TransitionError("vector has no component at position %d" % s)
    return _corrector_coords(space, (s,), (v / v[s]).reshape(-1, 1))


def plane_corrector(space: SymplecticSpace, pair: tuple, vectors: np.ndarray) -> np.ndarray:
    """Symplectic corrector mapping the basis plane ``pair`` onto a 2-column span."""
    s, t = pair
    if t != s + 1:
        raise TransitionError("plane corrector needs adjacent positions")
    V = np.array(vectors, dtype=float)
    lead = V[[s, t], :]
    if abs(np.linalg.det(lead)) < 1e-12:
        raise TransitionError("plane image is degenerate over positions (%d, %d)" % (s, t))
    return _corrector_coords(space, (s, t), V @ np.linalg.inv(lead))


# ---------------------------------------------------------------------------
# the alignment engine


@dataclass(frozen=True, eq=False)
class StageRecord:
    kind: str
    lo_block: tuple
    hi_block: tuple
    n1: int
    n2: int
    target_tilt: float
    source_tilt: float
    nudges: int


@dataclass(frozen=True, eq=False)
class AlignedTransition:
    """An alignment result: the padded word plus stage diagnostics.

    ``images`` holds ``(source_block, target_block, angle)`` triples, each
    angle measured in that block's stable direction (bottom half backward,
    top half forward), so pinned blocks certify near machine precision.
    """

    word: TransitionWord
    n1: int
    n2: int
    source_tilt: float
    target_tilt: float
    distance: float
    images: tuple
    chain: tuple = dataclasses.field(repr=False, default=())
    letter_deltas: tuple = dataclasses.field(repr=False, default=())


@dataclass(frozen=True, eq=False)
class AdaptedTransition:
    """A fully adapted transition: every block maps onto its counterpart."""

    word: TransitionWord
    stages: tuple
    images: tuple
    distance: float
    chain: tuple = dataclasses.field(repr=False, default=())
    letter_deltas: tuple = dataclasses.field(repr=False, default=())


class _Aligner:
    def __init__(self, t0: TransitionWord, src: PointData, tgt: PointData, *,
                 angle_tol: float, n_cap: int, nudge_scale: float, tries: int,
                 gen_floor: float, seed: int):
        if t0.from_point != src.orbit.orbit_id or t0.to_point != tgt.orbit.orbit_id:
            raise TransitionError(
                "raw transition %s->%s does not run from %r to %r"
                % (t0.from_point, t0.to_point, src.orbit.orbit_id, tgt.orbit.orbit_id)
            )
        if not t0.letters:
            raise TransitionError("raw transition needs at least one letter")
        self.src = src
        self.tgt = tgt
        self.t0 = t0
        self.letters = [lt for lt in t0.letters]
        self.bases = [np.array(lt.matrix, dtype=float) for lt in t0.letters]
        self.chain = [_Mat(word_matrix(t0.letters))]
        self.angle_tol = angle_tol
        self.n_cap = n_cap
        self.nudge_scale = nudge_scale
        self.tries = tries
        self.gen_floor = gen_floor
        self.rng = np.random.default_rng(seed)
        self.stages = []
        self.window = (0, src.dim - 1)

    # -- letter bookkeeping -------------------------------------------------

    def _compose_last(self, G: np.ndarray, provenance: str) -> None:
        old = self.letters[-1]
        new = Letter(G @ old.matrix, old.label, provenance)
        self.letters[-1] = new

    def _compose_first(self, G: np.ndarray, provenance: str) -> None:
        old = self.letters[0]
        new = Letter(old.matrix @ G, old.label, provenance)
        self.letters[0] = new

    def _pad_target(self, n: int) -> None:
        if n > 0:
            self.letters.extend(self.tgt.orbit.letters * n)
            self.bases.extend(np.array(lt.matrix, dtype=float)
                              for lt in self.tgt.orbit.letters * n)

    def _pad_source(self, n: int) -> None:
        if n > 0:
            pad = list(self.src.orbit.letters * n)
            self.letters = pad + self.letters
            self.bases = [np.array(lt.matrix, dtype=float) for lt in pad] + self.bases

    def machinery(self) -> float:
        worst = 0.0
        for letter, base in zip(self.letters, self.bases):
            worst = max(worst, op_norm(letter.matrix - base))
        return worst

    # -- window helpers -----------------------------------------------------

    def _window_rows(self):
        lo, hi = self.window
        return list(range(lo, hi + 1))

    def _project_window(self, Xc: np.ndarray, floor: float = 1e-5) -> np.ndarray:
        rows = self._window_rows()
        mask = np.ones(len(Xc), dtype=bool)
        mask[rows] = False
        leaked = np.linalg.norm(Xc[mask]) / max(np.linalg.norm(Xc), 1e-300)
        if leaked > floor:
            raise TransitionError(
                "propagated subspace leaked out of the active window (mass %.2e)" % leaked
            )
        out = Xc.copy()
        out[mask] = 0.0
        return out

    def _nudge(self) -> None:
        lo, hi = self.window
        rows = self._window_rows()
        sub = space_for_dim(len(rows))
        S = random_symplectic_near_identity(sub, self.rng, self.nudge_scale)
        G = np.eye(self.src.dim)
        G[np.ix_(rows, rows)] = S
        amb = self.tgt.basis @ G @ self.tgt.basis_inverse
        self._compose_last(amb, "nudge")
        self.chain.append(_Mat(amb))

    # -- a single outside-in stage ------------------------------------------

    def _coord_step(self, pd: PointData, Xc: np.ndarray, inverse: bool) -> np.ndarray:
        out = np.zeros_like(Xc)
        for block, mat in zip(pd.blocks, pd.block_mats):
            rows = list(block)
            b = mat if not inverse else np.linalg.inv(mat)
            out[rows] = b @ Xc[rows]
        return _normalize_columns(out)

    def stage(self, bsize: int) -> StageRecord:
        lo, hi = self.window
        lo_block = tuple(range(lo, lo + bsize))
        hi_block = tuple(range(hi - bsize + 1, hi + 1))
        if set(lo_block) & set(hi_block):
            raise TransitionError("window too small for block size %d" % bsize)

        # forward: pad with target periods until the image of the top source
        # block hugs the top target block, then pin it with a corrector
        nudges = 0
        while True:
            X = _propagate(self.chain, self.src.basis[:, list(hi_block)])
            Xc = self.tgt.coords(X)
            Xc = self._project_window(Xc)
            gen = np.linalg.svd(Xc[list(hi_block)], compute_uv=False)[-1]
            if gen >= self.gen_floor:
                break
            nudges += 1
            if nudges > self.tries:
                raise AlignmentError(
                    "top block stays degenerate after %d nudges (margin %.2e)"
                    % (self.tries, gen), achieved=float(gen)
                )
            self._nudge()
        n1 = 0
        angle = _block_angle(Xc, hi_block)
        while angle > self.angle_tol:
            if n1 >= self.n_cap:
                raise AlignmentError(
                    "forward alignment stalled at angle %.3g after %d periods (tol %.3g)"
                    % (angle, n1, self.angle_tol), achieved=angle
                )
            Xc = self._coord_step(self.tgt, Xc, inverse=False)
            n1 += 1
            angle = _block_angle(Xc, hi_block)
        V = Xc @ np.linalg.inv(Xc[list(hi_block)])
        K = _corrector_coords(self.tgt.space, hi_block, V)
        S_amb = self.tgt.basis @ np.linalg.inv(K) @ self.tgt.basis_inverse
        target_tilt = op_norm(K - np.eye(self.tgt.dim))
        self._pad_target(n1)
        self._compose_last(S_amb, "corrector")
        self.chain.append(_Pow(self.tgt, n1))
        self.chain.append(_Mat(S_amb))

        check = self.tgt.coords(_propagate(self.chain, self.src.basis[:, list(hi_block)]))
        if _block_angle(check, hi_block) > 1e-8:
            raise TransitionError("top pinning lost precision (angle %.3g)"
                                  % _block_angle(check, hi_block))

        # backward: pull the bottom target block back, pad with source
        # periods until it hugs the bottom source block, pin with a corrector
        Z = _propagate(self.chain, self.tgt.basis[:, list(lo_block)], inverse=True)
        Zc = self.src.coords(Z)
        Zc = self._project_window(Zc)
        gen = np.linalg.svd(Zc[list(lo_block)], compute_uv=False)[-1]
        if gen < 1e-12:
            raise AlignmentError(
                "pulled-back bottom block lost its leading component (margin %.2e)" % gen,
                achieved=float(gen),
            )
        n2 = 0
        angle = _block_angle(Zc, lo_block)
        while angle > self.angle_tol:
            if n2 >= self.n_cap:
                raise AlignmentError(
                    "backward alignment stalled at angle %.3g after %d periods (tol %.3g)"
                    % (angle, n2, self.angle_tol), achieved=angle
                )
            Zc = self._coord_step(self.src, Zc, inverse=True)
            n2 += 1
            angle = _block_angle(Zc, lo_block)
        V2 = Zc @ np.linalg.inv(Zc[list(lo_block)])
        I_coords = _corrector_coords(self.src.space, lo_block, V2)
        I_amb = self.src.basis @ I_coords @ self.src.basis_inverse
        source_tilt = op_norm(I_coords - np.eye(self.src.dim))
        self._pad_source(n2)
        self._compose_first(I_amb, "corrector")
        self.chain = [_Mat(I_amb), _Pow(self.src, n2)] + self.chain

        # the bottom pinning is certified by pulling back: that is the
        # contracting direction for the bottom block, so roundoff stays put.
        # A forward re-check would amplify span roundoff by the full
        # expansion of the word and is meaningless on steep spectra.
        check = self.src.coords(
            _propagate(self.chain, self.tgt.basis[:, list(lo_block)], inverse=True))
        if _block_angle(check, lo_block) > 1e-8:
            raise TransitionError("bottom pinning lost precision (angle %.3g)"
                                  % _block_angle(check, lo_block))

        record = StageRecord("plane" if bsize == 2 else "line", lo_block, hi_block,
                             n1, n2, target_tilt, source_tilt, nudges)
        self.stages.append(record)
        self.window = (lo + bsize, hi - bsize)
        return record

    # -- results ------------------------------------------------------------

    def images(self) -> tuple:
        """Per-block alignment angles, each measured in its stable direction.

        Blocks in the lower half are certified by pulling the target block
        back through the word (contracting for them); the rest forward.
        The opposite direction holds by invertibility but re-measuring it
        forward amplifies roundoff by the word's total expansion.
        """
        out = []
        r = 0
        while r < self.src.dim:
            b = _merged_blocksize(self.src, self.tgt, r)
            cols = list(range(r, r + b))
            if cols[-1] < self.src.dim // 2:
                Z = _propagate(self.chain, self.tgt.basis[:, cols], inverse=True)
                angle = _block_angle(self.src.coords(Z), cols)
            else:
                X = _propagate(self.chain, self.src.basis[:, cols])
                angle = _block_angle(self.tgt.coords(X), cols)
            out.append((tuple(cols), tuple(cols), float(angle)))
            r += b
        return tuple(out)

    def letter_deltas(self) -> tuple:
        return tuple(float(op_norm(letter.matrix - base))
                     for letter, base in zip(self.letters, self.bases))

    def word(self) -> TransitionWord:
        return TransitionWord(self.t0.from_point, self.t0.to_point,
                              tuple(self.letters),
                              self.t0.eps_budget + self.machinery())


def _merged_blocksize(src: PointData, tgt: PointData, rank: int) -> int:
    a = len(src.block_of(rank))
    b = len(tgt.block_of(rank))
    return max(a, b)


def _single_stage(t0, source, target, bsize, *, eps, angle_tol, n_cap,
                  nudge_scale, tries, gen_floor, seed) -> AlignedTransition:
    eng = _Aligner(t0, source, target, angle_tol=angle_tol, n_cap=n_cap,
                   nudge_scale=nudge_scale, tries=tries, gen_floor=gen_floor,
                   seed=seed)
    if source.dim <= 2 * bsize:
        # the whole space is covered by the extreme blocks' span
        return AlignedTransition(eng.word(), 0, 0, 0.0, 0.0, 0.0, eng.images(),
                                 chain=tuple(eng.chain),
                                 letter_deltas=eng.letter_deltas())
    rec = eng.stage(bsize)
    machinery = eng.machinery()
    if eps is not None and machinery > eps:
        raise TransitionError(
            "alignment perturbation %.3g exceeds the budget %.3g" % (machinery, eps)
        )
    return AlignedTransition(eng.word(), rec.n1, rec.n2, rec.source_tilt,
                             rec.target_tilt, machinery, eng.images(),
                             chain=tuple(eng.chain),
                             letter_deltas=eng.letter_deltas())


def align_extremes(t0: TransitionWord, source: PointData, target: PointData, *,
                   eps: float | None = None, angle_tol: float = 1e-2,
                   n_cap: int = 200, nudge_scale: float = 1e-4, tries: int = 8,
                   gen_floor: float = 1e-6, seed: int = 0) -> AlignedTransition:
    """Pin the extreme eigenlines: the image of the bottom source line is the
    bottom target line and likewise at the top, both exactly.

    Pads with full periods at both ends and composes one shear corrector
    into a single letter on each side.  Middle blocks then match as a whole
    by preservation of the pairing.
    """
    for pd, name in ((source, "source"), (target, "target")):
        if 0 in pd.planes or pd.dim - 2 in pd.planes:
            raise TransitionError("%s has a complex plane at an extreme rank" % name)
    return _single_stage(t0, source, target, 1, eps=eps, angle_tol=angle_tol,
                         n_cap=n_cap, nudge_scale=nudge_scale, tries=tries,
                         gen_floor=gen_floor, seed=seed)


def align_top(t0: TransitionWord, source: PointData, target: PointData, *,
              eps: float | None = None, angle_tol: float = 1e-2,
              n_cap: int = 200, nudge_scale: float = 1e-4, tries: int = 8,
              gen_floor: float = 1e-6, seed: int = 0) -> AlignedTransition:
    """Pin the extreme two-dimensional blocks (complex planes or spans of the
    two outermost eigenlines) exactly, top and bottom."""
    extreme = lambda pd: 0 in pd.planes or pd.dim - 2 in pd.planes
    if not extreme(target) and not extreme(source):
        raise TransitionError("neither side has a complex plane at an extreme block")
    return _single_stage(t0, source, target, 2, eps=eps, angle_tol=angle_tol,
                         n_cap=n_cap, nudge_scale=nudge_scale, tries=tries,
                         gen_floor=gen_floor, seed=seed)


def _run_adaptation(t0, src, tgt, *, eps, angle_tol, n_cap, nudge_scale,
                    tries, gen_floor, seed) -> AdaptedTransition:
    eng = _Aligner(t0, src, tgt, angle_tol=angle_tol, n_cap=n_cap,
                   nudge_scale=nudge_scale, tries=tries, gen_floor=gen_floor,
                   seed=seed)
    while True:
        lo, hi = eng.window
        if lo >= hi:
            break
        bsize = _merged_blocksize(src, tgt, lo)
        if _merged_blocksize(src, tgt, hi) != bsize:
            raise TransitionError("asymmetric block structure at window (%d, %d)" % (lo, hi))
        if hi - lo + 1 == 2 and bsize == 2:
            # the center block is a single plane; its image is forced by the
            # pairing once everything outside is pinned
            eng.stages.append(StageRecord("center", (lo, hi), (lo, hi), 0, 0, 0.0, 0.0, 0))
            break
        eng.stage(bsize)
    machinery = eng.machinery()
    if eps is not None and machinery > eps:
        raise TransitionError(
            "adaptation perturbation %.3g exceeds the budget %.3g" % (machinery, eps)
        )
    return AdaptedTransition(eng.word(), tuple(eng.stages), eng.images(),
                             machinery, chain=tuple(eng.chain),
                             letter_deltas=eng.letter_deltas())


def adapted_transition(p: PointData, p_i: PointData, index: int, *,
                       raw: TransitionWord | None = None,
                       raw_back: TransitionWord | None = None,
                       eps: float | None = None, angle_tol: float = 1e-2,
                       n_cap: int = 200, nudge_scale: float = 1e-4,
                       tries: int = 8, gen_floor: float = 1e-6,
                       seed: int = 0) -> tuple:
    """Adapt transitions between an orbit and its rank-``index`` companion.

    Returns ``(t_to, t_back)``: the first carries ``p`` to ``p_i`` mapping
    every eigenblock of ``p`` onto the corresponding block of ``p_i``; the
    second runs the other way.  Raw transitions default to identity letters
    (the companion orbit shares the base point).
    """
    if index not in p_i.planes and p_i.planes:
        raise TransitionError("companion plane is at ranks %r, not %d" % (p_i.planes, index))
    if raw is None:
        raw = identity_transition(p.space, p.orbit.orbit_id, p_i.orbit.orbit_id)
    if raw_back is None:
        raw_back = identity_transition(p.space, p_i.orbit.orbit_id, p.orbit.orbit_id)
    fwd = _run_adaptation(raw, p, p_i, eps=eps, angle_tol=angle_tol, n_cap=n_cap,
                          nudge_scale=nudge_scale, tries=tries,
                          gen_floor=gen_floor, seed=seed)
    back = _run_adaptation(raw_back, p_i, p, eps=eps, angle_tol=angle_tol,
                           n_cap=n_cap, nudge_scale=nudge_scale, tries=tries,
                           gen_floor=gen_floor, seed=seed + 1)
    return fwd, back


# ---------------------------------------------------------------------------
# eigenline swaps


@dataclass(frozen=True, eq=False)
class SwapCertificate:
    """A transition from an orbit to itself exchanging two adjacent eigenlines.

    ``images`` records, for every rank, the rank of the image line and the
    angle between the actual image and that line.  The conjugate pair is
    exchanged as well; this is forced by preservation of the pairing and is
    verified numerically rather than assumed.
    """

    index: int
    matrix: np.ndarray
    word: TransitionWord
    images: tuple
    distance: float
    iterate: int
    padding: int
    chain: tuple = dataclasses.field(repr=False, default=())


def _swap_permutation(dim: int, index: int) -> dict:
    perm = {j: j for j in range(dim)}
    i = index
    perm[i], perm[i + 1] = i + 1, i
    ci, ci1 = dim - 1 - i, dim - 2 - i
    perm[ci], perm[ci1] = ci1, ci
    return perm


def verify_swap(space: SymplecticSpace, basis: np.ndarray, index: int,
                matrix: np.ndarray, tol: float = 1e-6) -> tuple:
    """Check a matrix against the swap image table; returns per-rank angles.

    Raises ``TransitionError`` when an image misses its line by more than
    ``tol`` or the matrix is not symplectic.
    """
    check = is_symplectic(space, matrix, tol=max(1e-8, 1e-12 * op_norm(matrix) ** 2))
    if not check:
        raise TransitionError("swap matrix is not symplectic (%.3g)" % check.residual)
    J = space.form
    inv = -J @ np.asarray(basis).T @ J
    perm = _swap_permutation(space.dim, index)
    images = []
    for j in range(space.dim):
        img = inv @ (matrix @ np.asarray(basis)[:, j])
        angle = _block_angle(img.reshape(-1, 1), (perm[j],))
        images.append((j, perm[j], float(angle)))
        if angle > tol:
            raise TransitionError(
                "image of rank %d misses rank %d by angle %.3g" % (j, perm[j], angle)
            )
    return tuple(images)


def swap_transition(p: PointData, p_i: PointData, index: int, eps0: float,
                    eps1: float, *, raw: TransitionWord | None = None,
                    raw_back: TransitionWord | None = None,
                    angle_tol: float | None = None, n_cap: int = 200,
                    pad_cap: int = 2000, pad_goal: float | None = None,
                    m_cap: int | None = None,
                    swap_tol: float = 1e-6, seed: int = 0) -> SwapCertificate:
    """Exchange eigenlines ``index`` and ``index + 1`` of ``p`` exactly.

    Routes through the companion orbit ``p_i`` whose period map rotates the
    corresponding plane: adapted transitions carry the two lines into the
    plane, iterating the companion period turns one across the other, and
    two small straightenings make both crossings exact.  Forward padding at
    ``p`` drives the second line onto its target between the straightenings.
    ``pad_goal`` is the residual tilt at which the padding may stop; the
    second straightener is exact at any tilt, so the goal only bounds its
    size, and the default spends a slice of ``eps1`` on it to keep the
    padding (and the roundoff it amplifies on gentle spectra) short.

    ``angle_tol`` trades alignment padding against corrector size: the
    prefix norms of the word grow like a power of ``1 / angle_tol``, so the
    default spends as much of ``eps1`` on the correctors as it can to keep
    the word numerically flat.

    The perturbation added by the whole construction must stay within
    ``eps1``; the companion orbit itself is assumed within ``eps0`` of the
    original, so the certificate letters stay within ``eps0 + eps1``.
    """
    if pad_goal is None:
        pad_goal = min(5e-2, max(1e-3, eps1 / 4.0))
    if angle_tol is None:
        angle_tol = min(0.08, max(1e-2, eps1 / 4.0))
    i = int(index)
    dim = p.space.dim
    if not 0 <= i < dim - 1:
        raise TransitionError("swap index %d out of range" % i)
    if p.planes:
        raise TransitionError("swap source must have simple positive real spectrum")
    if i not in p_i.planes:
        raise TransitionError("companion orbit has no complex plane at ranks (%d, %d)"
                              % (i, i + 1))
    if p.ebasis is None:
        raise TransitionError("swap source carries no eigenbasis")

    fwd, back = adapted_transition(p, p_i, i, raw=raw, raw_back=raw_back,
                                   angle_tol=angle_tol, n_cap=n_cap, seed=seed)

    B = p_i.block_matrix(i)
    eigs = np.linalg.eigvals(B)
    phi = float(abs(np.angle(eigs[0])))
    if phi < 1e-9:
        raise TransitionError("companion plane rotation angle is degenerate")
    if m_cap is None:
        m_cap = min(200000, int(np.ceil(3.0 * np.pi / phi)) + 4)

    # carry the two lines into the companion plane chart
    plane_cols = p_i.basis[:, [i, i + 1]]
    up = _propagate(fwd.chain, p.basis[:, [i, i + 1]])
    up_c = p_i.coords(up)
    mask = np.ones(dim, dtype=bool)
    mask[[i, i + 1]] = False
    leak = np.linalg.norm(up_c[mask]) / max(np.linalg.norm(up_c), 1e-300)
    if leak > 1e-5:
        raise TransitionError("swap lines leaked out of the companion plane (%.2e)" % leak)
    chart = up_c[[i, i + 1], :]

    # The return word maps the plane onto the swap coordinate plane of p, but
    # not conformally: its padding periods at p squash the chart toward the
    # upper line, so angles measured after the carry are distorted and the
    # carried line sweeps past the target too fast for the iterate grid.
    # Measure the crossing inside the plane instead, against the pullback of
    # the target eigenline (its contracting direction through the return
    # word), and close the leftover angle with a small rotation of the plane.
    tgt_back = _propagate(back.chain, p.basis[:, i:i + 1], inverse=True)
    tc = p_i.coords(tgt_back)[:, 0]
    leak = np.linalg.norm(tc[mask]) / max(np.linalg.norm(tc), 1e-300)
    if leak > 1e-5:
        raise TransitionError(
            "swap target pulled back outside the companion plane (%.2e)" % leak)
    ell = tc[[i, i + 1]]
    ell = ell / np.linalg.norm(ell)

    best_m, best_turn, best_gap = None, 0.0, np.inf
    cur1 = _normalize_columns(chart[:, 1:2].copy())
    for m in range(1, m_cap + 1):
        cur1 = _normalize_columns(B @ cur1)
        turn = float(np.arctan2(cur1[0, 0] * ell[1] - cur1[1, 0] * ell[0],
                                cur1[0, 0] * ell[0] + cur1[1, 0] * ell[1]))
        if turn > np.pi / 2:
            turn -= np.pi
        elif turn < -np.pi / 2:
            turn += np.pi
        if abs(turn) < best_gap:
            best_m, best_turn, best_gap = m, turn, abs(turn)
    if best_m is None or best_gap > 0.501 * phi + 1e-9:
        raise AlignmentError(
            "companion rotation never crosses the target line within %d iterates "
            "(best angle %.3g)" % (m_cap, best_gap), achieved=float(best_gap)
        )
    m = best_m

    # the leftover turn acts on the plane, compensated by the opposite turn
    # on the omega-dual block (absent for the self-dual center plane); both
    # commute with the companion blocks, so spreading the turn evenly over
    # the m periods keeps the product exact while shrinking every letter move
    q = len(p_i.orbit.letters)
    ca, sa = np.cos(best_turn), np.sin(best_turn)
    D = np.eye(dim)
    D[np.ix_([i, i + 1], [i, i + 1])] = np.array([[ca, -sa], [sa, ca]])
    d0, d1 = dim - 2 - i, dim - 1 - i
    if d0 != i:
        D[np.ix_([d0, d1], [d0, d1])] = np.array([[ca, sa], [-sa, ca]])

    # every leg stretches the carried lines, and the stretches compound: left
    # alone the word ends with eigenline scales as large as the product of
    # all its pad moduli, which ruins the conditioning of the final matrix
    # and of any longer word built from it.  A symplectic diagonal in the
    # local frame (exponents antisymmetric under conjugation, a plane scaled
    # by one common factor) fixes every line the word carries, so composing
    # such factors into existing letters cancels accumulated scale without
    # moving any image.  Whatever fits the budget dies here on the iterate
    # letters; the rest waits for the balancer periods appended at the end.
    _, v_fwd = _propagate_logs(fwd.chain, p.basis)
    v_mid = v_fwd + m * np.log(p_i.moduli)
    v_mid = _block_even(v_mid, p_i.blocks)
    v_mid = 0.5 * (v_mid - v_mid[::-1])
    cond_i = float(np.linalg.cond(p_i.basis))
    norm_i = max(op_norm(let.matrix) for let in p_i.orbit.letters)
    cap_mid = 0.45 * eps1 / max(cond_i * norm_i, 1.0)
    kill = np.sign(v_mid) * np.minimum(np.abs(v_mid), cap_mid * m)
    DA = p_i.basis @ np.diag(np.exp(-kill)) @ p_i.basis_inverse
    G = p_i.basis @ D @ p_i.basis_inverse @ DA

    cs, ss = np.cos(best_turn / m), np.sin(best_turn / m)
    Ds = np.eye(dim)
    Ds[np.ix_([i, i + 1], [i, i + 1])] = np.array([[cs, -ss], [ss, cs]])
    if d0 != i:
        Ds[np.ix_([d0, d1], [d0, d1])] = np.array([[cs, ss], [-ss, cs]])
    Gs = p_i.basis @ (Ds @ np.diag(np.exp(-kill / m))) @ p_i.basis_inverse

    letters = list(fwd.word.letters) + list(p_i.orbit.letters) * m + list(back.word.letters)
    deltas = list(fwd.letter_deltas) + [0.0] * (m * q) + list(back.letter_deltas)
    for k in range(1, m + 1):
        gi = len(fwd.word.letters) + k * q - 1
        new_mat = Gs @ letters[gi].matrix
        deltas[gi] += op_norm(new_mat - letters[gi].matrix)
        letters[gi] = Letter(new_mat, letters[gi].label, "perturbed")
    chain = list(fwd.chain) + [_Pow(p_i, m), _Mat(G)] + list(back.chain)

    line1 = plane_cols @ ell
    line1 = _propagate(back.chain, line1.reshape(-1, 1))[:, 0]
    # straighteners are scale-sensitive: normalize the representative so its
    # coefficient along the target eigenline is exactly one, which keeps the
    # block a plain shear even when the crossing lands antipodally
    c1 = p.coords(line1.reshape(-1, 1))[:, 0]
    if abs(c1[i]) < 1e-12 * np.linalg.norm(c1):
        raise TransitionError("crossed line lost its target component")
    line1 = line1 / c1[i]
    p1 = straighten(p.ebasis, i + 1, i, line1)
    new_last = p1 @ letters[-1].matrix
    deltas[-1] += op_norm(new_last - letters[-1].matrix)
    letters[-1] = Letter(new_last, letters[-1].label, "perturbed")
    chain.append(_Mat(p1))

    # forward padding pulls the image of the first line onto the second.
    # Pushing that line forward through the word would amplify the small
    # forward-carry dust by the word's internal expansion, so the image is
    # computed through the plane instead: the pullbacks of both swap
    # eigenlines into the plane are clean (that is their contracting
    # direction), and with a third pullback fixing the relative scales they
    # give the exact 2x2 chart of the return word on the plane
    pull = _propagate(back.chain, np.column_stack([
        p.basis[:, i], p.basis[:, i + 1],
        p.basis[:, i] + p.basis[:, i + 1]]), inverse=True)
    pc = p_i.coords(pull)
    pleak = np.linalg.norm(pc[mask], axis=0) / np.maximum(
        np.linalg.norm(pc, axis=0), 1e-300)
    if np.max(pleak) > 1e-5:
        raise TransitionError(
            "swap eigenlines pulled back outside the companion plane (%.2e)"
            % np.max(pleak))
    A2 = pc[[i, i + 1], 0:2]
    mu, nu = np.linalg.solve(A2, pc[[i, i + 1], 2])
    back_inv = np.column_stack([mu * A2[:, 0], nu * A2[:, 1]])
    v_plane = np.linalg.matrix_power(B, m) @ chart[:, 0]
    v_plane = v_plane / np.linalg.norm(v_plane)
    v_plane = np.array([[ca, -sa], [sa, ca]]) @ v_plane
    x = np.linalg.solve(back_inv, v_plane)
    P1 = p.coords(p1 @ p.basis[:, [i, i + 1]])[[i, i + 1], :]
    d = P1 @ x
    if abs(d[1]) < 1e-12 * np.linalg.norm(d):
        raise TransitionError("swap image degenerated onto the fixed line")
    # the second straightener is exact at any leftover tilt; padding only
    # shrinks its size, so the goal is a budget knob, and fewer periods mean
    # less roundoff amplification on the conjugate pair
    lam_lo, lam_hi = p.moduli[i], p.moduli[i + 1]
    a = 0
    while abs(d[0]) > pad_goal * abs(d[1]):
        if a >= pad_cap:
            raise AlignmentError(
                "forward padding stalled at angle %.3g after %d periods"
                % (np.arctan2(abs(d[0]), abs(d[1])), a),
                achieved=float(np.arctan2(abs(d[0]), abs(d[1]))),
            )
        d = np.array([lam_lo * d[0], lam_hi * d[1]])
        d = d / np.linalg.norm(d)
        a += 1
    d = d / d[1]
    line2 = np.zeros(dim)
    line2[i], line2[i + 1] = d
    line2 = p.basis @ line2
    p2 = straighten(p.ebasis, i, i + 1, line2)
    letters.extend(p.orbit.letters * a)
    deltas.extend([0.0] * (a * len(p.orbit.letters)))
    new_last = p2 @ letters[-1].matrix
    deltas[-1] += op_norm(new_last - letters[-1].matrix)
    letters[-1] = Letter(new_last, letters[-1].label, "perturbed")
    chain.append(_Pow(p, a))
    chain.append(_Mat(p2))

    # cancel the leftover scale with balancer periods: each appended period
    # of p gets a symplectic diagonal composed into its last letter, sized so
    # the exponents (the remaining scale plus the periods' own moduli) stay
    # within budget.  On steep spectra no feasible count exists because
    # neutralizing a period's own moduli already costs more than the budget;
    # the certificate is still valid then, just badly scaled, so skip.
    perm = _swap_permutation(dim, i)
    pa = np.array([perm[j] for j in range(dim)])
    _, v_end = _propagate_logs(chain, p.basis)
    u = np.zeros(dim)
    u[pa] = v_end
    u = 0.5 * (u - u[::-1])
    lam_log = np.log(p.moduli)
    q_p = len(p.orbit.letters)
    chain_core = tuple(chain)
    if np.max(np.abs(u)) > 0.05:
        last = p.orbit.letters[-1]
        r = max(1, int(np.ceil(np.max(np.abs(u)) / 0.05)))
        Dstep, fits = None, False
        while r <= 4096:
            g = (-u / r) - lam_log
            Dstep = p.basis @ np.diag(np.exp(g)) @ p.basis_inverse
            if op_norm(Dstep @ last.matrix - last.matrix) <= 0.9 * eps1:
                fits = True
                break
            r *= 2
        if fits:
            for _ in range(r):
                letters.extend(p.orbit.letters)
                deltas.extend([0.0] * q_p)
                new_last = Dstep @ letters[-1].matrix
                deltas[-1] += op_norm(new_last - letters[-1].matrix)
                letters[-1] = Letter(new_last, letters[-1].label, "perturbed")
                chain.append(_Pow(p, 1))
                chain.append(_Mat(Dstep))

    distance = max(deltas)
    if distance > eps1:
        raise TransitionError(
            "swap perturbation %.3g exceeds the transition budget %.3g "
            "(letters stay within eps0 + eps1 = %.3g of the original system)"
            % (distance, eps1, eps0 + eps1)
        )

    # each image is measured in its stable direction: lines landing in the
    # lower half are certified by pulling the target back through the word.
    # The balancer factors fix every eigenline exactly (diagonals in the
    # eigenframe and full periods), but they erase the scale separation the
    # stable directions rely on, so measure before them.
    images = []
    for j in range(dim):
        if perm[j] < dim // 2:
            img = _propagate(chain_core, p.basis[:, perm[j]:perm[j] + 1], inverse=True)
            angle = _block_angle(p.coords(img), (j,))
        else:
            img = _propagate(chain_core, p.basis[:, j:j + 1])
            angle = _block_angle(p.coords(img), (perm[j],))
        images.append((j, perm[j], float(angle)))
        if angle > swap_tol:
            raise TransitionError(
                "swap image of rank %d misses rank %d by angle %.3g (tol %.3g)"
                % (j, perm[j], angle, swap_tol)
            )

    word = TransitionWord(p.orbit.orbit_id, p.orbit.orbit_id, tuple(letters),
                          eps0 + distance)
    matrix = word_matrix(letters)
    return SwapCertificate(i, matrix, word, tuple(images), float(distance),
                           m, a, chain=tuple(chain))


# ---------------------------------------------------------------------------
# the identity-product endgame


@dataclass(frozen=True, eq=False)
class EllipticWord:
    """A long word over one orbit whose product is the identity matrix.

    ``matrix`` and ``residual`` come from the structured (permutation and
    log-magnitude) evaluation of the product, which is the numerically
    faithful way to multiply the letters; ``flat_residual`` reports the
    naive left-to-right product for cross-checking on gentle instances.
    """

    word: TransitionWord
    matrix: np.ndarray
    residual: float
    flat_residual: float
    n: int
    c_values: tuple
    budget: dict
    distance: float
    structure_residual: float


class _Monomial:
    """A line-permuting matrix in adapted coordinates: perm, signs, log sizes."""

    def __init__(self, perm, signs, logs, residual=0.0):
        self.perm = np.asarray(perm, dtype=int)
        self.signs = np.asarray(signs, dtype=float)
        self.logs = np.asarray(logs, dtype=float)
        self.residual = float(residual)

    @classmethod
    def identity(cls, dim):
        return cls(np.arange(dim), np.ones(dim), np.zeros(dim))

    @classmethod
    def from_matrix(cls, pd: PointData, M: np.ndarray, what: str) -> "_Monomial":
        C = pd.basis_inverse @ M @ pd.basis
        dim = pd.dim
        perm = np.zeros(dim, dtype=int)
        signs = np.zeros(dim)
        logs = np.zeros(dim)
        residual = 0.0
        for b in range(dim):
            col = C[:, b]
            a = int(np.argmax(np.abs(col)))
            val = col[a]
            if val == 0:
                raise TransitionError("%s has a zero column in adapted coordinates" % what)
            off = np.linalg.norm(col - val * np.eye(dim)[:, a]) / abs(val)
            residual = max(residual, off)
            perm[b] = a
            signs[b] = np.sign(val)
            logs[b] = np.log(abs(val))
        if len(set(perm.tolist())) != dim:
            raise TransitionError("%s does not permute the eigenlines" % what)
        if residual > 1e-5:
            raise TransitionError(
                "%s strays from the eigenline set (off-line mass %.2e)" % (what, residual)
            )
        return cls(perm, signs, logs, residual)

    def after(self, other: "_Monomial") -> "_Monomial":
        """The composition self . other (other applied first)."""
        perm = self.perm[other.perm]
        signs = other.signs * self.signs[other.perm]
        logs = other.logs + self.logs[other.perm]
        return _Monomial(perm, signs, logs, max(self.residual, other.residual))

    def power(self, k: int) -> "_Monomial":
        out = _Monomial.identity(len(self.perm))
        for _ in range(k):
            out = self.after(out)
        return out


def _bn_distance(first_letter: np.ndarray, pd: PointData, c_logs: np.ndarray, n: int):
    d = np.exp(-c_logs / n)
    half = pd.space.half_dim
    for j in range(half):
        d[pd.space.conj(j)] = 1.0 / d[j]
    Bn = pd.basis @ np.diag(d) @ pd.basis_inverse
    return op_norm(first_letter @ Bn - first_letter), Bn


def elliptic_word(p: PointData, swaps, n: int, eps0: float | None = None,
                  eps1: float | None = None, *, tol: float = 1e-6) -> EllipticWord:
    """Assemble the identity word from the independent adjacent-rank swaps.

    ``swaps`` maps each rank ``0 .. dim/2 - 1`` to a ``SwapCertificate``
    over ``p``.  Every swap exchanges its conjugate pair as well (forced by
    the pairing), so these are all the independent folds; composing them
    bottom-up cycles every eigenline through every rank.  Sandwiching ``n``
    full periods between shift words then cancels all the eigenvalue
    growth, the leftover per-line constants are independent of ``n``, and a
    diagonal correction of size ``O(1/n)`` composed into the first segment
    removes them exactly.

    With ``eps1`` given, the correction must fit the letter budget; if it
    does not, ``EllipticBudgetError`` reports the minimal admissible ``n``.
    """
    dim = p.dim
    if p.planes:
        raise TransitionError("identity endgame needs simple positive real spectrum")
    if n < 1:
        raise TransitionError("period exponent must be positive")
    try:
        table = {int(k): swaps[k] for k in swaps}
    except TypeError:
        table = {cert.index: cert for cert in swaps}
    missing = [i for i in range(dim // 2) if i not in table]
    if missing:
        raise TransitionError("missing swaps at ranks %r" % missing)

    period_letters = tuple(p.orbit.letters)
    lam_logs = np.log(np.asarray(p.moduli, dtype=float))
    if abs(lam_logs.sum()) > 1e-8:
        raise TransitionError("eigenvalue moduli do not multiply to one")

    # the shift word: fold at rank 0 acts first, the center fold last; its
    # permutation is a single cycle through all the eigenlines
    shift_letters = []
    shift_mono = _Monomial.identity(dim)
    for i in range(dim // 2):
        shift_letters.extend(table[i].word.letters)
        mono = _Monomial.from_matrix(p, table[i].matrix, "swap at rank %d" % i)
        shift_mono = mono.after(shift_mono)
    seen, j = set(), 0
    while j not in seen:
        seen.add(j)
        j = int(shift_mono.perm[j])
    if len(seen) != dim:
        raise TransitionError("swap set does not cycle through all the eigenlines")

    shifts_l = {0: []}
    shifts_m = {0: _Monomial.identity(dim)}
    for k in range(1, dim):
        shifts_l[k] = shifts_l[k - 1] + shift_letters
        shifts_m[k] = shift_mono.after(shifts_m[k - 1])

    # the n-independent line constants
    c_logs = np.zeros(dim)
    for i in range(dim):
        pair = shifts_m[(dim - i) % dim].after(shifts_m[i])
        if not np.array_equal(pair.perm, np.arange(dim)):
            raise TransitionError("shift pair at offset %d is not line-preserving" % i)
        c_logs += 2.0 * pair.logs
    for j in range(dim):
        mismatch = abs(c_logs[j] + c_logs[p.space.conj(j)])
        if mismatch > 1e-8 * max(1.0, np.max(np.abs(c_logs))):
            raise TransitionError(
                "line constants at ranks %d and %d do not pair to one (log gap %.2e)"
                % (j, p.space.conj(j), mismatch)
            )
    c_values = tuple(np.exp(c_logs))

    first = np.array(period_letters[0].matrix, dtype=float)
    bn_dist, Bn = _bn_distance(first, p, c_logs, n)
    if eps1 is not None and bn_dist > eps1:
        lo, hi = n, n
        while True:
            hi *= 2
            dist, _ = _bn_distance(first, p, c_logs, hi)
            if dist <= eps1 or hi > 10 ** 9:
                break
        if hi > 10 ** 9:
            raise TransitionError("diagonal correction cannot fit the budget")
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            dist, _ = _bn_distance(first, p, c_logs, mid)
            if dist <= eps1:
                hi = mid
            else:
                lo = mid
        raise EllipticBudgetError(
            "diagonal correction %.3g exceeds the budget %.3g at n = %d; "
            "minimal admissible n is %d" % (bn_dist, eps1, n, hi),
            minimal_n=hi,
        )

    corrected_first = Letter(first @ Bn, period_letters[0].label, "corrector")
    corrected_period = (corrected_first,) + period_letters[1:]

    # the stored letters carry the pairing-symmetrized diagonal; account for
    # exactly that, so the structured residual is the true product
    sym_logs = -c_logs.copy()
    for j in range(p.space.half_dim):
        sym_logs[p.space.conj(j)] = -sym_logs[j]

    letters = []
    total_mono = _Monomial.identity(dim)
    for i in range(dim):
        pre = shifts_l[i] + shifts_l[(dim - i) % dim] + shifts_l[i]
        post = shifts_l[(dim - i) % dim]
        if i == 0:
            mid = list(corrected_period) * n
            mid_logs = n * lam_logs + sym_logs
        else:
            mid = list(period_letters) * n
            mid_logs = n * lam_logs
        letters.extend(pre + mid + post)
        mid_mono = _Monomial(np.arange(dim), np.ones(dim), mid_logs)
        factor = shifts_m[(dim - i) % dim].after(
            mid_mono.after(shifts_m[i].after(
                shifts_m[(dim - i) % dim].after(shifts_m[i]))))
        total_mono = factor.after(total_mono)

    if not np.array_equal(total_mono.perm, np.arange(dim)):
        raise TransitionError("assembled word does not preserve the eigenlines")
    if np.any(total_mono.signs < 0):
        raise TransitionError("assembled word flips an eigenline orientation")
    diag = total_mono.signs * np.exp(total_mono.logs)
    matrix = p.basis @ np.diag(diag) @ p.basis_inverse
    residual = op_norm(matrix - np.eye(dim))
    if residual > tol:
        raise TransitionError(
            "identity word misses the identity by %.3g (tol %.3g)" % (residual, tol)
        )

    with np.errstate(over="ignore", invalid="ignore"):
        flat = word_matrix(letters)
        flat_residual = float(op_norm(flat - np.eye(dim))) if np.all(np.isfinite(flat)) \
            else float("inf")

    swap_dist = max(cert.distance for cert in table.values())
    budget = {
        "diagonalize": float(p.base_distance),
        "swap": float(swap_dist),
        "correction": float(bn_dist),
        "bound": float(p.base_distance + swap_dist + bn_dist),
    }
    if eps0 is not None and eps1 is not None and budget["bound"] > eps0 + 2 * eps1:
        raise TransitionError(
            "letter distance bound %.3g exceeds eps0 + 2*eps1 = %.3g"
            % (budget["bound"], eps0 + 2 * eps1)
        )
    word = TransitionWord(p.orbit.orbit_id, p.orbit.orbit_id, tuple(letters),
                          budget["bound"])
    return EllipticWord(word, matrix, float(residual), flat_residual, int(n),
                        c_values, budget, budget["bound"], total_mono.residual)
