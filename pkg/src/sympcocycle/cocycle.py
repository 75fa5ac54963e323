"""Periodic symplectic cocycles: labeled matrix words over finite orbit sets.

An orbit of period n carries letters L_0, ..., L_{n-1}; letter k maps the
fiber over point k to the fiber over point k+1 (mod n).  Words are stored
chronologically, so the matrix of a word is

    letters[-1] @ ... @ letters[1] @ letters[0].

Letters carry symbolic labels; word combinatorics (the power test) compare
labels, never floating-point entries.  Transitions are words attached to a
pair of orbit ids, composable with the orbit words at both endpoints.  The
distance clause tying transitions to nearby orbit segments is metadata of
the input data model and is not re-derived or enforced here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .core import SymplecticSpace, is_symplectic, op_norm, space_for_dim


class CocycleFormatError(ValueError):
    """Raised when a cocycle file violates the schema or its invariants."""


@dataclass(frozen=True, eq=False)
class Letter:
    """One matrix of a word, with a symbolic identity.

    provenance distinguishes original data from machinery output
    ("original", "corrector", "padding", ...); it does not participate
    in equality.
    """

    matrix: np.ndarray
    label: str
    provenance: str = "original"

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))

    def same_symbol(self, other: "Letter") -> bool:
        return self.label == other.label


@dataclass(frozen=True, eq=False)
class Word:
    """A plain word of letters, chronological order."""

    letters: tuple

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(self.letters))

    def __len__(self) -> int:
        return len(self.letters)

    @property
    def matrix(self) -> np.ndarray:
        return word_matrix(self.letters)

    def labels(self) -> tuple:
        return tuple(l.label for l in self.letters)


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    orbit_id: str
    letters: tuple

    def __post_init__(self):
        if len(self.letters) == 0:
            raise ValueError("orbit %r has no letters" % self.orbit_id)
        object.__setattr__(self, "letters", tuple(self.letters))

    @property
    def period(self) -> int:
        return len(self.letters)

    def word(self) -> Word:
        return Word(self.letters)


@dataclass(frozen=True, eq=False)
class TransitionWord:
    """Word of symplectic letters from one orbit point to another.

    from_point and to_point are orbit ids; the word composes with the
    orbit words at both endpoints (same ambient dimension).
    """

    from_point: str
    to_point: str
    letters: tuple
    eps_budget: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(self.letters))

    @property
    def matrix(self) -> np.ndarray:
        return word_matrix(self.letters)

    def __len__(self) -> int:
        return len(self.letters)


@dataclass(frozen=True, eq=False)
class CocycleSystem:
    """The full input object: orbits, transitions, ambient space, norm bound."""

    space: SymplecticSpace
    orbits: tuple
    bound: float
    transitions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "orbits", tuple(self.orbits))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        ids = [o.orbit_id for o in self.orbits]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate orbit ids: %r" % (sorted(ids),))

    def orbit(self, orbit_id: str) -> PeriodicOrbit:
        for o in self.orbits:
            if o.orbit_id == orbit_id:
                return o
        raise KeyError("no orbit with id %r" % orbit_id)

    def self_transitions(self, orbit_id: str) -> list:
        return [
            t
            for t in self.transitions
            if t.from_point == orbit_id and t.to_point == orbit_id
        ]

    def word_view(self) -> dict:
        """orbit_id -> list of letter matrices, the shape the checkers consume."""
        return {o.orbit_id: [l.matrix for l in o.letters] for o in self.orbits}

    def with_orbit(self, new_orbit: PeriodicOrbit) -> "CocycleSystem":
        """Copy of the system with one orbit replaced (same id)."""
        replaced = tuple(
            new_orbit if o.orbit_id == new_orbit.orbit_id else o for o in self.orbits
        )
        if not any(o is new_orbit for o in replaced):
            raise KeyError("no orbit with id %r" % new_orbit.orbit_id)
        return replace(self, orbits=replaced)


def word_matrix(letters) -> np.ndarray:
    """Product letters[-1] @ ... @ letters[0]; letters may be Letter or array."""
    mats = [l.matrix if isinstance(l, Letter) else np.asarray(l, float) for l in letters]
    if not mats:
        raise ValueError("empty word has no matrix without a known dimension")
    out = mats[0]
    for M in mats[1:]:
        out = M @ out
    return out


def orbit_product(orbit: PeriodicOrbit) -> np.ndarray:
    """The period map M_A(x): product of the letters along one period."""
    return word_matrix(orbit.letters)


def orbit_product_at(orbit: PeriodicOrbit, k: int) -> np.ndarray:
    """Period map based at orbit point k (letters k, k+1, ..., k-1 cyclically)."""
    n = orbit.period
    order = [orbit.letters[(k + j) % n] for j in range(n)]
    return word_matrix(order)


def system_norm(system: CocycleSystem) -> float:
    """sup over orbit letters of max(|L|, |L^-1|)."""
    worst = 0.0
    for o in system.orbits:
        for l in o.letters:
            nrm = op_norm(l.matrix)
            try:
                inv_nrm = op_norm(np.linalg.inv(l.matrix))
            except np.linalg.LinAlgError:
                raise ValueError(
                    "singular letter %r in orbit %r" % (l.label, o.orbit_id)
                )
            worst = max(worst, nrm, inv_nrm)
    return worst


def is_power(word: Word):
    """Is the word a proper power of a shorter word, by letter labels?

    Returns (True, primitive_word, k) with k > 1 when word = primitive^k
    for the largest such k (primitive is then not itself a power), and
    (False, word, 1) otherwise.  A single letter is not a power.
    """
    labels = word.labels()
    n = len(labels)
    for d in range(1, n):
        if n % d != 0:
            continue
        if labels == labels[:d] * (n // d):
            return True, Word(word.letters[:d]), n // d
    return False, word, 1


def word_distance(a, b) -> float:
    """Max over positions of the operator norm of the letter difference."""
    la = a.letters if hasattr(a, "letters") else tuple(a)
    lb = b.letters if hasattr(b, "letters") else tuple(b)
    if len(la) != len(lb):
        raise ValueError("words have different lengths: %d vs %d" % (len(la), len(lb)))
    dist = 0.0
    for x, y in zip(la, lb):
        mx = x.matrix if isinstance(x, Letter) else np.asarray(x, float)
        my = y.matrix if isinstance(y, Letter) else np.asarray(y, float)
        dist = max(dist, op_norm(mx - my))
    return dist


# ---------------------------------------------------------------------------
# JSON cocycle format:
# { "dim": 2N, "bound": K,
#   "orbits": [ { "id": str, "letters": [matrix, ...] }, ... ],
#   "transitions": [ { "from": str, "to": str, "letters": [...] }, ... ] }
# with matrices as row-major lists of rows.
# ---------------------------------------------------------------------------

SYMPLECTIC_FILE_TOL = 1e-6


def _parse_matrix(entry, dim: int, where: str) -> np.ndarray:
    try:
        M = np.array(entry, dtype=float)
    except (TypeError, ValueError):
        raise CocycleFormatError("%s: matrix is not numeric" % where)
    if M.shape != (dim, dim):
        raise CocycleFormatError(
            "%s: matrix shape %r, expected (%d, %d)" % (where, M.shape, dim, dim)
        )
    if not np.all(np.isfinite(M)):
        raise CocycleFormatError("%s: non-finite entries" % where)
    return M


def system_from_dict(data: dict, tol: float = SYMPLECTIC_FILE_TOL) -> CocycleSystem:
    for key in ("dim", "bound", "orbits"):
        if key not in data:
            raise CocycleFormatError("missing top-level field %r" % key)
    dim = data["dim"]
    if not isinstance(dim, int) or dim < 2 or dim % 2 != 0:
        raise CocycleFormatError("dim must be a positive even integer, got %r" % (dim,))
    bound = float(data["bound"])
    if bound <= 0:
        raise CocycleFormatError("bound must be positive, got %r" % (bound,))
    space = space_for_dim(dim)

    orbits = []
    for o in data["orbits"]:
        if "id" not in o or "letters" not in o or not o["letters"]:
            raise CocycleFormatError("orbit entries need an id and nonempty letters")
        oid = str(o["id"])
        letters = []
        for k, entry in enumerate(o["letters"]):
            where = "orbit %r letter %d" % (oid, k)
            M = _parse_matrix(entry, dim, where)
            check = is_symplectic(space, M, tol=tol)
            if not check:
                raise CocycleFormatError(
                    "%s: not symplectic (residual %.3g)" % (where, check.residual)
                )
            letters.append(Letter(M, "%s[%d]" % (oid, k)))
        orbits.append(PeriodicOrbit(oid, tuple(letters)))

    ids = {o.orbit_id for o in orbits}
    transitions = []
    for j, t in enumerate(data.get("transitions", [])):
        for key in ("from", "to", "letters"):
            if key not in t:
                raise CocycleFormatError("transition %d: missing field %r" % (j, key))
        src, dst = str(t["from"]), str(t["to"])
        for endpoint in (src, dst):
            if endpoint not in ids:
                raise CocycleFormatError(
                    "transition %d references unknown orbit %r" % (j, endpoint)
                )
        letters = []
        for k, entry in enumerate(t["letters"]):
            where = "transition %d (%s->%s) letter %d" % (j, src, dst, k)
            M = _parse_matrix(entry, dim, where)
            check = is_symplectic(space, M, tol=tol)
            if not check:
                raise CocycleFormatError(
                    "%s: not symplectic (residual %.3g)" % (where, check.residual)
                )
            letters.append(Letter(M, "%s->%s[%d]" % (src, dst, k)))
        transitions.append(TransitionWord(src, dst, tuple(letters)))

    system = CocycleSystem(space, tuple(orbits), bound, tuple(transitions))
    nrm = system_norm(system)
    if nrm > bound * (1 + 1e-9):
        raise CocycleFormatError(
            "system norm %.6g exceeds the declared bound %.6g" % (nrm, bound)
        )
    return system


def system_to_dict(system: CocycleSystem) -> dict:
    return {
        "dim": system.space.dim,
        "bound": system.bound,
        "orbits": [
            {
                "id": o.orbit_id,
                "letters": [l.matrix.tolist() for l in o.letters],
            }
            for o in system.orbits
        ],
        "transitions": [
            {
                "from": t.from_point,
                "to": t.to_point,
                "letters": [l.matrix.tolist() for l in t.letters],
            }
            for t in system.transitions
        ],
    }


def load_system(path, tol: float = SYMPLECTIC_FILE_TOL) -> CocycleSystem:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CocycleFormatError("%s: invalid JSON (%s)" % (path, exc))
    return system_from_dict(data, tol=tol)


def save_system(system: CocycleSystem, path) -> None:
    with open(path, "w") as fh:
        json.dump(system_to_dict(system), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
