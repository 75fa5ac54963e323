"""Driver for the dominated-splitting versus identity-word dichotomy.

Given a periodic symplectic cocycle with transitions and a perturbation
budget eps, either certify an ell-dominated splitting at some index or
assemble an eps-perturbed closed word whose product at a designated point
is the identity.

The budget is split once at the top: eps0 = eps / 4 pays for the
complexifying perturbations found by the rank scan, eps1 = eps / 8 pays
for the spectrum cleanup at the designated point and again for the final
diagonal correction, so every letter of the assembled word stays within
eps0 + 2 * eps1 = eps / 2 of the input system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cocycle import CocycleSystem, PeriodicOrbit, orbit_product
from .core import op_norm
from .domination import (
    DominationCertificate,
    FoundSplitting,
    NotFound,
    Splitting,
    find_splitting,
)
from .perturbation import (
    CollapseObstructed,
    CollapseResult,
    DiagonalizeError,
    collapse_and_complexify,
    diagonalize,
    has_rank_complex,
)
from .transitions import (
    EllipticWord,
    elliptic_word,
    point_data,
    swap_transition,
)

__all__ = [
    "DichotomyError",
    "RankReport",
    "Dominated",
    "Elliptic",
    "DichotomyVerdict",
    "scan_ranks",
    "run_dichotomy",
    "verdict_to_dict",
]


class DichotomyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RankReport:
    """Outcome of the complexification attempts at one splitting index.

    ``index`` is 1-based: it names the splitting between the ``index``
    smallest moduli and the rest, so the eigenvalue pair under attack sits
    at sorted positions (index - 1, index).  ``status`` is ``"achieved"``
    (a witness perturbation produced a non-real pair at that rank),
    ``"obstructed"`` (every attempted window certified dominated in its
    two-dimensional quotient), or ``"inconclusive"``.
    """

    index: int
    status: str
    witness: CollapseResult | None = None
    orbit_id: str | None = None
    certificates: tuple = ()
    failures: tuple = ()


@dataclass(frozen=True, eq=False)
class Dominated:
    """An ell-dominated splitting certified at ``index``."""

    index: int
    ell: int
    splitting: Splitting
    certificate: DominationCertificate
    scan: dict
    parameters: dict


@dataclass(frozen=True, eq=False)
class Elliptic:
    """A perturbed closed word at ``point`` whose product is the identity."""

    system: CocycleSystem
    point: str
    residual: float
    word: EllipticWord
    budget: dict
    scan: dict
    parameters: dict


DichotomyVerdict = Dominated | Elliptic


def _windows(dim: int, rank: int):
    """Quotient windows (j, k) with j <= rank <= k, narrow ones first."""
    out = []
    for width in range(dim - 1):
        for j in range(max(0, rank - width), min(rank, dim - 2 - width) + 1):
            out.append((j, j + width))
    return out


def _scan_index(system, index: int, eps0: float, steps: int, ell_max: int):
    space = system.space
    dim = space.dim
    i0 = index - 1
    # the pairing lambda -> 1/lambda mirrors rank (i, i+1) onto rank
    # (dim-2-i, dim-1-i) with the same modulus ratio, so upper-half ranks
    # are scanned through their cheaper lower-half representative
    r0 = min(i0, dim - 2 - i0)
    certs, fails = [], []
    for orbit in system.orbits:
        for j, k in _windows(dim, r0):
            try:
                out = collapse_and_complexify(
                    space, orbit, r0, j, k, eps0, steps=steps, ell_max=ell_max
                )
            except ValueError as exc:
                fails.append((orbit.orbit_id, (j, k), str(exc)))
                continue
            if isinstance(out, CollapseResult):
                if i0 != r0 and not has_rank_complex(out.matrix, i0):
                    fails.append(
                        (orbit.orbit_id, (j, k),
                         "witness at rank %d does not carry the conjugate "
                         "rank %d" % (r0, i0))
                    )
                    continue
                return RankReport(index, "achieved", out, orbit.orbit_id,
                                  tuple(certs), tuple(fails))
            if isinstance(out, CollapseObstructed):
                certs.append((orbit.orbit_id, (j, k), out.ell, out.certificate))
            else:
                fails.append((orbit.orbit_id, (j, k), out.reason))
    status = "obstructed" if certs and not fails else "inconclusive"
    return RankReport(index, status, None, None, tuple(certs), tuple(fails))


def scan_ranks(system, eps0: float, steps: int = 800, ell_max: int = 200) -> dict:
    """Attempt a rank-(i, i+1) complexification at every splitting index.

    For each index i in 1 .. dim - 1 the adjacent eigenvalue pair of every
    orbit is driven toward a non-real pair through widening quotient
    windows, each within the budget ``eps0``.  Returns ``{i: RankReport}``.
    Indices are independent; the scan runs them in order for determinism.
    """
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    dim = system.space.dim
    return {
        i: _scan_index(system, i, eps0, steps, ell_max) for i in range(1, dim)
    }


def _first_transition(system, a: str, b: str):
    for t in system.transitions:
        if t.from_point == a and t.to_point == b:
            return t
    return None


def _designated_orbit(system, witnesses: dict):
    """First orbit with transitions to and from every witness orbit."""
    needed = {w.orbit.orbit_id for w in witnesses.values()}
    missing_all = []
    for orbit in system.orbits:
        pid = orbit.orbit_id
        missing = [
            (a, b)
            for w in sorted(needed)
            for a, b in ((pid, w), (w, pid))
            if _first_transition(system, a, b) is None
        ]
        if not missing:
            return orbit
        missing_all.append((pid, missing))
    detail = "; ".join(
        "%s lacks %s" % (pid, ", ".join("%s->%s" % m for m in miss))
        for pid, miss in missing_all
    )
    raise DichotomyError(
        "transitions missing when the Elliptic branch is required (%s)" % detail
    )


def run_dichotomy(system, eps: float, *, ell_max: int = 30, n: int | None = None,
                  steps: int = 800, seed: int = 0) -> DichotomyVerdict:
    """Decide the dichotomy for one system within the budget ``eps``.

    If some index resists complexification, the splitting at the smallest
    such index is certified and returned as ``Dominated``.  If every index
    complexifies, the designated point is perturbed to a simple positive
    real spectrum, the scan witnesses provide a swap of each adjacent
    eigenline pair, and the swaps assemble into a closed word whose product
    is the identity, returned as ``Elliptic``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    eps0, eps1 = eps / 4.0, eps / 8.0
    space = system.space
    params = {
        "eps": eps,
        "eps0": eps0,
        "eps1": eps1,
        "K": float(system.bound),
        "N": space.half_dim,
    }

    reports = scan_ranks(system, eps0, steps=steps)
    obstructed = [i for i in sorted(reports) if reports[i].status == "obstructed"]
    inconclusive = [i for i in sorted(reports) if reports[i].status == "inconclusive"]

    if obstructed:
        failures = []
        for idx in obstructed:
            fs = find_splitting(system, idx, ell_max=ell_max)
            if isinstance(fs, FoundSplitting):
                return Dominated(idx, fs.ell, fs.splitting, fs.certificate,
                                 reports, params)
            assert isinstance(fs, NotFound)
            failures.append((idx, fs.reason))
        raise DichotomyError(
            "scan obstructed at %r but no splitting certified within "
            "ell_max=%d: %s"
            % (obstructed, ell_max,
               "; ".join("index %d: %s" % f for f in failures))
        )
    if inconclusive:
        raise DichotomyError(
            "scan inconclusive at indices %r: %r"
            % (inconclusive, [reports[i].failures for i in inconclusive])
        )

    # every index complexified: assemble the identity word at one point
    witnesses = {r: reports[r + 1].witness for r in range(space.half_dim)}
    designated = _designated_orbit(system, witnesses)
    # ask for the widest spectral gap the cleanup budget affords: a steeper
    # spectrum at the designated point keeps the assembled word short and
    # well conditioned
    diag = None
    for gap in (0.08, 0.06, 0.04, 0.02, 0.01, 5e-3, 1e-3, 1e-5):
        try:
            diag = diagonalize(designated, eps1, gap=gap, seed=seed)
            break
        except DiagonalizeError:
            continue
    if diag is None:
        raise DichotomyError(
            "cleanup at %r cannot reach a simple spectrum within eps1=%g"
            % (designated.orbit_id, eps1)
        )
    p = point_data(space, diag.orbit, base_distance=diag.distance)

    swaps = {}
    for r in range(space.half_dim):
        w = witnesses[r]
        companion = point_data(space, w.orbit, planes=(w.rank,))
        raw = _first_transition(system, designated.orbit_id, w.orbit.orbit_id)
        raw_back = _first_transition(system, w.orbit.orbit_id,
                                     designated.orbit_id)
        swaps[r] = swap_transition(p, companion, r, eps0, eps1, raw=raw,
                                   raw_back=raw_back, seed=seed)

    if n is not None:
        ew = elliptic_word(p, swaps, n, eps0, eps1)
    else:
        from .transitions import EllipticBudgetError

        try:
            ew = elliptic_word(p, swaps, 1, eps0, eps1)
        except EllipticBudgetError as exc:
            ew = elliptic_word(p, swaps, exc.minimal_n, eps0, eps1)

    out_orbit = PeriodicOrbit(designated.orbit_id, tuple(ew.word.letters))
    bound = max(op_norm(l.matrix) for l in out_orbit.letters)
    out_system = CocycleSystem(space, (out_orbit,), bound)
    return Elliptic(out_system, designated.orbit_id, ew.residual, ew,
                    ew.budget, reports, params)


def _scan_summary(reports: dict) -> dict:
    out = {}
    for i, rep in sorted(reports.items()):
        entry = {"status": rep.status}
        if rep.witness is not None:
            entry["orbit"] = rep.orbit_id
            entry["distance"] = float(rep.witness.distance)
            entry["kind"] = rep.witness.kind
        if rep.certificates:
            entry["quotients"] = [
                {"orbit": oid, "window": list(win), "ell": int(ell)}
                for oid, win, ell, _ in rep.certificates
            ]
        if rep.failures:
            entry["failures"] = [
                {"orbit": oid, "window": list(win), "reason": reason}
                for oid, win, reason in rep.failures
            ]
        out[str(i)] = entry
    return out


def verdict_to_dict(verdict: DichotomyVerdict) -> dict:
    """JSON-ready summary with the stage-by-stage budget ledger."""
    if isinstance(verdict, Dominated):
        return {
            "verdict": "dominated",
            "index": verdict.index,
            "ell": verdict.ell,
            "certificate": verdict.certificate.to_dict(),
            "scan": _scan_summary(verdict.scan),
            "parameters": verdict.parameters,
        }
    ew = verdict.word
    out_orbit = verdict.system.orbits[0]
    residual_check = op_norm(orbit_product(out_orbit) - np.eye(verdict.system.space.dim))
    return {
        "verdict": "elliptic",
        "point": verdict.point,
        "residual": float(verdict.residual),
        "product_residual": float(residual_check),
        "letters": len(out_orbit.letters),
        "n": ew.n,
        "c_values": [float(c) for c in ew.c_values],
        "budget": {k: float(v) for k, v in verdict.budget.items()},
        "distance": float(ew.distance),
        "scan": _scan_summary(verdict.scan),
        "parameters": verdict.parameters,
    }
