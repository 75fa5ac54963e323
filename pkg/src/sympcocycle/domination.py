"""Dominated-splitting certificates for periodic matrix words.

The checked inequality is

    |A^n restricted to E(x)| * |A^-n restricted to F(f^n x)| < 1/2

for every point x and every n >= ell.  On a periodic system the scan is
finite: the inequality is verified directly for n in [ell, H] with
H = ell + period * dim, and powers beyond H are covered by strict spectral
domination of the period map (largest eigenvalue modulus on E strictly
below the smallest on F).  The two parts are consistent: if the spectral
gap failed, the ratio at n = q * period would be at least
(rho_E / rho_F)^q >= 1, which the scan window already contains.

Everything here operates on a plain "word view" (mapping orbit_id -> list
of letter matrices), so quotient systems, which are not symplectic, go
through the same checkers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

from .core import orthonormal_columns, same_subspace

INVARIANCE_ANGLE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Splitting:
    """Per-point subspace pair (E, F); blocks[orbit_id][k] = (E_k, F_k)."""

    blocks: dict

    def bundle(self, which: int) -> dict:
        return {oid: [pair[which] for pair in pts] for oid, pts in self.blocks.items()}


@dataclass(frozen=True)
class DominationCertificate:
    ell: int
    checked_horizon: int
    worst_ratio: float
    C: float
    lam: float
    min_angle: float

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "horizon": self.checked_horizon,
            "worst_ratio": self.worst_ratio,
            "C": self.C,
            "lambda": self.lam,
            "min_angle": self.min_angle,
        }


@dataclass(frozen=True)
class Counterexample:
    orbit_id: str
    point: int
    n: int
    ratio: float


@dataclass(frozen=True)
class NotFound:
    ell_max: int
    reason: str
    minimal_ell: int | None = None
    details: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class FoundSplitting:
    splitting: "Splitting"
    ell: int
    certificate: DominationCertificate


def as_word_view(system) -> dict:
    if hasattr(system, "word_view"):
        return system.word_view()
    return {oid: [np.asarray(M, float) for M in letters] for oid, letters in system.items()}


def restricted_norm(M: np.ndarray, basis: np.ndarray) -> float:
    """Operator norm of M restricted to the span of orthonormal columns."""
    if basis.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(M @ basis, 2))


def _bundle_at(bundle: dict, oid: str, k: int, period: int) -> np.ndarray:
    return np.asarray(bundle[oid][k % period], dtype=float)


def _check_bundle_invariance(words: dict, bundle: dict, name: str) -> None:
    for oid, letters in words.items():
        if oid not in bundle:
            raise ValueError("bundle %s missing orbit %r" % (name, oid))
        pts = bundle[oid]
        if len(pts) != len(letters):
            raise ValueError(
                "bundle %s on orbit %r has %d points, orbit has period %d"
                % (name, oid, len(pts), len(letters))
            )
        dims = {np.asarray(E).shape[1] for E in pts}
        if len(dims) != 1:
            raise ValueError("bundle %s on orbit %r has varying dimension" % (name, oid))
        if next(iter(dims)) == 0:
            continue
        for k, L in enumerate(letters):
            img = L @ np.asarray(pts[k], float)
            nxt = np.asarray(pts[(k + 1) % len(letters)], float)
            if not same_subspace(img, nxt, tol=INVARIANCE_ANGLE_TOL):
                ang = float(np.max(subspace_angles(
                    orthonormal_columns(img), orthonormal_columns(nxt))))
                raise ValueError(
                    "bundle %s not invariant on orbit %r at point %d (angle %.3g)"
                    % (name, oid, k, ang)
                )


def _period_map(letters: list, k: int) -> np.ndarray:
    M = np.eye(letters[0].shape[0])
    p = len(letters)
    for j in range(p):
        M = letters[(k + j) % p] @ M
    return M


def _spectral_gap_holds(words: dict, Ebun: dict, Fbun: dict) -> bool:
    """Strict gap rho(M|E) < min modulus of M|F at the base point of each orbit."""
    for oid, letters in words.items():
        QE = orthonormal_columns(np.asarray(Ebun[oid][0], float))
        QF = orthonormal_columns(np.asarray(Fbun[oid][0], float))
        M = _period_map(letters, 0)
        rho_E = 0.0
        if QE.shape[1] > 0:
            rho_E = float(np.max(np.abs(np.linalg.eigvals(QE.T @ M @ QE))))
        rho_F = np.inf
        if QF.shape[1] > 0:
            rho_F = float(np.min(np.abs(np.linalg.eigvals(QF.T @ M @ QF))))
        if not rho_E < rho_F:
            return False
    return True


def scan_ratios(words: dict, Ebun: dict, Fbun: dict, n_max: int) -> dict:
    """Worst ratio per n over all starting points, for n = 1..n_max.

    Both bundles must be invariant (the callers check).  Each factor is
    accumulated as a product of chart-restricted letter blocks with
    per-step log rescaling.  Restricting before multiplying keeps long
    products cancellation-free: forming A^n first mixes the expanded
    direction into every entry, and the contracted part drowns in
    rounding once the spread passes 1/eps_machine.
    """
    worst = {}
    for oid, letters in words.items():
        p = len(letters)
        QE = [orthonormal_columns(np.asarray(E, float)) for E in Ebun[oid]]
        QF = [orthonormal_columns(np.asarray(F, float)) for F in Fbun[oid]]
        de, df = QE[0].shape[1], QF[0].shape[1]
        if de == 0 or df == 0:
            for n in range(1, n_max + 1):
                if n not in worst:
                    worst[n] = (0.0, (oid, 0))
            continue
        inverses = [np.linalg.inv(L) for L in letters]
        # forward E-chart along the step, backward F-chart against it
        a_chart = [QE[(m + 1) % p].T @ letters[m] @ QE[m] for m in range(p)]
        b_chart = [QF[m].T @ inverses[m] @ QF[(m + 1) % p] for m in range(p)]
        for k in range(p):
            Ae = np.eye(de)
            Bf = np.eye(df)
            log_a = 0.0
            log_b = 0.0
            for n in range(1, n_max + 1):
                m = (k + n - 1) % p
                Ae = a_chart[m] @ Ae
                Bf = Bf @ b_chart[m]
                fa = float(np.max(np.abs(Ae)))
                fb = float(np.max(np.abs(Bf)))
                if fa == 0.0 or fb == 0.0:
                    ratio = 0.0
                else:
                    Ae /= fa
                    Bf /= fb
                    log_a += np.log(fa)
                    log_b += np.log(fb)
                    log_ratio = (
                        log_a + np.log(np.linalg.norm(Ae, 2))
                        + log_b + np.log(np.linalg.norm(Bf, 2))
                    )
                    ratio = float(np.exp(np.clip(log_ratio, -700.0, 700.0)))
                key = (oid, k)
                if n not in worst or ratio > worst[n][0]:
                    worst[n] = (ratio, key)
    return worst


def _fit_decay(ratios: dict, n_lo: int, n_hi: int):
    """Least-squares fit ratio_n ~ C * lam^n on log scale; diagnostic only."""
    ns, logs = [], []
    for n in range(n_lo, n_hi + 1):
        if n in ratios and ratios[n][0] > 0:
            ns.append(n)
            logs.append(np.log(ratios[n][0]))
    if len(ns) < 2:
        return 0.0, 0.0
    slope, intercept = np.polyfit(ns, logs, 1)
    return float(np.exp(intercept)), float(np.exp(slope))


def _min_split_angle(Ebun: dict, Fbun: dict) -> float:
    worst = np.pi / 2
    for oid in Ebun:
        for E, F in zip(Ebun[oid], Fbun[oid]):
            QE = orthonormal_columns(np.asarray(E, float))
            QF = orthonormal_columns(np.asarray(F, float))
            if QE.shape[1] == 0 or QF.shape[1] == 0:
                continue
            worst = min(worst, float(np.min(subspace_angles(QE, QF))))
    return worst


def check_pair_domination(words: dict, Ebun: dict, Fbun: dict, ell: int):
    """Certify E dominated by F at scale ell, or produce a counterexample.

    E and F need not be complementary; only invariance of each bundle is
    required.  This is the raw checker behind check_domination and the
    combination lemma.
    """
    if ell < 1:
        raise ValueError("ell must be a positive integer")
    _check_bundle_invariance(words, Ebun, "E")
    _check_bundle_invariance(words, Fbun, "F")
    dim = next(iter(words.values()))[0].shape[0]
    horizon = ell + max(len(l) for l in words.values()) * dim
    ratios = scan_ratios(words, Ebun, Fbun, horizon)
    for n in range(ell, horizon + 1):
        ratio, (oid, k) = ratios[n]
        if ratio >= 0.5:
            return Counterexample(oid, k, n, ratio)
    if not _spectral_gap_holds(words, Ebun, Fbun):
        n_star = int(np.ceil(ell / min(len(l) for l in words.values()))) * min(
            len(l) for l in words.values()
        )
        ratio, (oid, k) = max(
            (ratios[n][0], ratios[n][1]) for n in range(ell, horizon + 1)
        )
        return Counterexample(oid, k, max(n_star, ell), ratio)
    worst = max(ratios[n][0] for n in range(ell, horizon + 1))
    C, lam = _fit_decay(ratios, ell, horizon)
    return DominationCertificate(
        ell, horizon, worst, C, lam, _min_split_angle(Ebun, Fbun)
    )


def check_domination(system, splitting: Splitting, ell: int):
    """Certificate or Counterexample for a complementary invariant splitting."""
    words = as_word_view(system)
    Ebun, Fbun = splitting.bundle(0), splitting.bundle(1)
    for oid, letters in words.items():
        dim = letters[0].shape[0]
        for k in range(len(letters)):
            E = _bundle_at(Ebun, oid, k, len(letters))
            F = _bundle_at(Fbun, oid, k, len(letters))
            if E.shape[1] + F.shape[1] != dim:
                raise ValueError(
                    "E and F dimensions %d + %d do not fill the fiber (dim %d)"
                    % (E.shape[1], F.shape[1], dim)
                )
            if E.shape[1] and F.shape[1]:
                if np.linalg.matrix_rank(np.hstack([E, F]), tol=1e-10) != dim:
                    raise ValueError(
                        "E and F are not complementary on orbit %r at point %d"
                        % (oid, k)
                    )
    return check_pair_domination(words, Ebun, Fbun, ell)


def _real_invariant_split(M: np.ndarray, i: int):
    """Split C^2N eigenvectors of M into a real i-dim bundle and its complement.

    Returns (E, F) or a string describing the obstruction.
    """
    dim = M.shape[0]
    w, V = np.linalg.eig(M)
    if np.linalg.matrix_rank(V, tol=1e-9) < dim:
        return "period map is numerically defective"
    order = sorted(range(dim), key=lambda j: (abs(w[j]), j))
    low = order[:i]
    if abs(abs(w[order[i - 1]]) - abs(w[order[i]])) <= 1e-9 * max(1.0, abs(w[order[i]])):
        return "no modulus gap at index %d" % i
    low_set = set(low)
    for j in low:
        if abs(w[j].imag) > 1e-9 * max(1.0, abs(w[j])):
            partner = min(
                (jj for jj in range(dim) if jj != j),
                key=lambda jj: abs(w[jj] - np.conj(w[j])),
            )
            if partner not in low_set:
                return "complex pair split at index %d" % i

    def real_span(indices):
        cols, done = [], set()
        for j in indices:
            if j in done:
                continue
            if abs(w[j].imag) > 1e-9 * max(1.0, abs(w[j])):
                partner = min(
                    (jj for jj in indices if jj != j and jj not in done),
                    key=lambda jj: abs(w[jj] - np.conj(w[j])),
                )
                cols.append(V[:, j].real)
                cols.append(V[:, j].imag)
                done.update({j, partner})
            else:
                cols.append(V[:, j].real)
                done.add(j)
        return np.stack(cols, axis=1) if cols else np.zeros((dim, 0))

    E = real_span(low)
    F = real_span(order[i:])
    if E.shape[1] != i or F.shape[1] != dim - i:
        return "real invariant bundle of dimension %d unavailable" % i
    return E, F


def _transport(letters: list, W0: np.ndarray) -> list:
    out = [W0]
    for L in letters[:-1]:
        out.append(orthonormal_columns(L @ out[-1]))
    return out


def _minimal_ell(ratios_fn, start_horizon: int, cap: int = 5000):
    """Smallest ell with no ratio >= 1/2 at any n >= ell, by extending the scan."""
    horizon = start_horizon
    while True:
        ratios = ratios_fn(horizon)
        violations = [n for n in range(1, horizon + 1) if ratios[n][0] >= 0.5]
        last = max(violations) if violations else 0
        if horizon - last >= start_horizon or horizon >= cap:
            return last + 1, ratios
        horizon = min(cap, horizon * 2)


def find_splitting(system, i: int, ell_max: int = 30):
    """Search the eigenspace-sum splitting of index i and its minimal ell.

    Candidates come from the period map at the base point of each orbit:
    the sum of eigenspaces of the i smallest-modulus eigenvalues against
    the rest, transported along the orbit.  Returns FoundSplitting on
    success, NotFound with diagnostics otherwise.
    """
    words = as_word_view(system)
    dim = next(iter(words.values()))[0].shape[0]
    if not 1 <= i <= dim - 1:
        raise ValueError("index i must be in [1, %d], got %d" % (dim - 1, i))
    blocks, details = {}, {}
    for oid, letters in words.items():
        res = _real_invariant_split(_period_map(letters, 0), i)
        if isinstance(res, str):
            return NotFound(ell_max, res, details={"orbit": oid})
        E0, F0 = res
        Es = _transport(letters, orthonormal_columns(E0))
        Fs = _transport(letters, orthonormal_columns(F0))
        blocks[oid] = [(E, F) for E, F in zip(Es, Fs)]
    splitting = Splitting(blocks)
    Ebun, Fbun = splitting.bundle(0), splitting.bundle(1)
    if not _spectral_gap_holds(words, Ebun, Fbun):
        return NotFound(ell_max, "no spectral gap between the candidate bundles")
    base_h = ell_max + max(len(l) for l in words.values()) * dim
    ell, _ = _minimal_ell(lambda h: scan_ratios(words, Ebun, Fbun, h), base_h)
    if ell > ell_max:
        return NotFound(
            ell_max, "minimal ell exceeds the cap", minimal_ell=ell, details=details
        )
    cert = check_pair_domination(words, Ebun, Fbun, ell)
    if not isinstance(cert, DominationCertificate):
        return NotFound(ell_max, "scan and certificate disagree", minimal_ell=ell)
    return FoundSplitting(splitting, ell, cert)


@dataclass(frozen=True, eq=False)
class QuotientSystem:
    """Quotient of a word system along an invariant subbundle F.

    Letters act on representatives in the Euclidean orthogonal complement
    of F; bases[oid][k] holds the orthonormal complement basis used as the
    chart at each point, so a vector v projects to coordinates Q^T v.
    """

    dim: int
    orbits: dict
    bases: dict

    def word_view(self) -> dict:
        return self.orbits

    def project_bundle(self, bundle: dict) -> dict:
        out = {}
        for oid, pts in bundle.items():
            cols = []
            for k, W in enumerate(pts):
                W = np.asarray(W, float)
                if W.shape[1] == 0:
                    cols.append(np.zeros((self.dim, 0)))
                else:
                    img = self.bases[oid][k].T @ W
                    cols.append(orthonormal_columns(img))
            out[oid] = cols
        return out


def quotient_system(system, Fbun: dict) -> QuotientSystem:
    """Quotient the system along an invariant bundle, complement metric."""
    words = as_word_view(system)
    _check_bundle_invariance(words, Fbun, "F")
    dim = next(iter(words.values()))[0].shape[0]
    m = np.asarray(next(iter(Fbun.values()))[0]).shape[1]
    for oid, pts in Fbun.items():
        for W in pts:
            if np.asarray(W).shape[1] != m:
                raise ValueError("quotient bundle dimension must be constant")
    bases, orbits = {}, {}
    for oid, letters in words.items():
        Qs = []
        for k in range(len(letters)):
            F = np.asarray(Fbun[oid][k], float)
            if m == 0:
                Qs.append(np.eye(dim))
            else:
                comp = np.linalg.svd(F, full_matrices=True)[0][:, np.linalg.matrix_rank(F):]
                Qs.append(comp)
        bases[oid] = Qs
        orbits[oid] = [
            Qs[(k + 1) % len(letters)].T @ L @ Qs[k] for k, L in enumerate(letters)
        ]
    return QuotientSystem(dim - m, orbits, bases)


def _direct_sum(bundles: list) -> dict:
    out = {}
    first = bundles[0]
    for oid in first:
        pts = []
        for k in range(len(first[oid])):
            parts = [np.asarray(b[oid][k], float) for b in bundles]
            parts = [p for p in parts if p.shape[1] > 0]
            if parts:
                pts.append(np.hstack(parts))
            else:
                pts.append(np.asarray(first[oid][k], float))
        out[oid] = pts
    return out


def lift_domination(system, Ebun: dict, Fbun: dict, Gbun: dict, ell: int,
                    L_cap: int = 400) -> int:
    """Combine two ell-dominations into one L-domination.

    Case (1): E dominated by F, and E/F dominated by G/F in the quotient
    along F, gives E dominated by F + G at some L.  Case (2): F dominated
    by G plus the same quotient hypothesis gives E + F dominated by G.
    The first case whose hypotheses certify is used; L is found by upward
    search from ell with the certified checker.  An empty E reduces the
    conclusion to the hypothesis F dominated by G, so L = ell there.
    """
    words = as_word_view(system)
    for name, bun in (("E", Ebun), ("F", Fbun), ("G", Gbun)):
        _check_bundle_invariance(words, bun, name)
    dim = next(iter(words.values()))[0].shape[0]
    dims = [np.asarray(next(iter(b.values()))[0]).shape[1] for b in (Ebun, Fbun, Gbun)]
    if sum(dims) != dim:
        raise ValueError("E + F + G dimensions %r do not fill the fiber" % (dims,))

    if dims[0] == 0:
        res = check_pair_domination(words, Fbun, Gbun, ell)
        if not isinstance(res, DominationCertificate):
            raise ValueError(
                "hypotheses fail: F not dominated by G at ell=%d (n=%d ratio %.3g)"
                % (ell, res.n, res.ratio)
            )
        return ell

    quot = quotient_system(words, Fbun)
    qE = quot.project_bundle(Ebun)
    qG = quot.project_bundle(Gbun)
    hyp_quot = check_pair_domination(quot.word_view(), qE, qG, ell)

    hyp1 = check_pair_domination(words, Ebun, Fbun, ell)
    if isinstance(hyp1, DominationCertificate) and isinstance(hyp_quot, DominationCertificate):
        target_E, target_F = Ebun, _direct_sum([Fbun, Gbun])
    else:
        hyp2 = check_pair_domination(words, Fbun, Gbun, ell)
        if isinstance(hyp2, DominationCertificate) and isinstance(hyp_quot, DominationCertificate):
            target_E, target_F = _direct_sum([Ebun, Fbun]), Gbun
        else:
            raise ValueError(
                "hypotheses fail: neither combination case certifies at ell=%d" % ell
            )

    for L in range(ell, L_cap + 1):
        res = check_pair_domination(words, target_E, target_F, L)
        if isinstance(res, DominationCertificate):
            return L
    raise ValueError("no L up to %d certifies the combined domination" % L_cap)
