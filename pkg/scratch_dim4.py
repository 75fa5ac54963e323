import numpy as np

from sympcocycle.core import space_for_dim, op_norm
from sympcocycle.cocycle import Letter, PeriodicOrbit, CocycleSystem, TransitionWord
import sympcocycle.dichotomy as dy
from sympcocycle.perturbation import diagonalize
from sympcocycle.transitions import point_data, swap_transition, elliptic_word


def system_of(space, mats, tag="a"):
    letters = tuple(Letter(np.asarray(m, float), "%s[%d]" % (tag, k))
                    for k, m in enumerate(mats))
    orb = PeriodicOrbit(tag, letters)
    ts = (TransitionWord(tag, tag, (Letter(np.eye(space.dim), "t"),), 0.0),)
    return CocycleSystem(space, (orb,), max(np.linalg.norm(m, 2) for m in mats), ts)


sp = space_for_dim(4)
eps = 1.6
eps0, eps1 = eps / 4.0, eps / 8.0
system = system_of(sp, [np.diag([1 / 1.04, 1 / 1.01, 1.01, 1.04])])

scan = dy.scan_ranks(system, eps0)
for r, rep in sorted(scan.items()):
    print("rank", r, rep.status,
          None if rep.witness is None else
          (rep.witness.rank, "%.4g" % rep.witness.distance, len(rep.witness.orbit.letters)))

designated = system.orbit("a")
for gap in (0.04, 0.02, 0.01, 5e-3, 1e-3, 1e-5):
    try:
        diag = diagonalize(designated, eps1, gap=gap, seed=0)
        break
    except Exception as exc:
        print("gap", gap, "failed:", exc)
        continue
print("diag gap", gap, "dist %.4g" % diag.distance, "values", np.round(diag.values, 4))

p = point_data(sp, diag.orbit, base_distance=diag.distance)
print("p moduli", np.round(p.moduli, 4))

swaps = {}
for r in (0, 1):
    w = scan[r + 1].witness
    companion = point_data(sp, w.orbit, planes=(w.rank,))
    print("fold", r, "companion moduli", np.round(companion.moduli, 4),
          "planes", companion.planes)
    try:
        sw = swap_transition(p, companion, r, eps0, eps1, raw=dy._first_transition(system, "a", "a"),
                             raw_back=dy._first_transition(system, "a", "a"), seed=0)
        swaps[r] = sw
        print("  swap ok: letters", len(sw.word.letters), "dist %.4g" % sw.distance)
    except Exception as exc:
        print("  swap FAILED:", exc)

if len(swaps) == 2:
    ew = elliptic_word(p, swaps, eps0, eps1, n=1)
    print("elliptic ok: letters", len(ew.word.letters),
          "residual %.3g" % ew.residual, "bound %.3g" % ew.budget["bound"])
    W = np.eye(4)
    peak = 1.0
    for L in ew.word.letters:
        W = L.matrix @ W
        peak = max(peak, np.linalg.norm(W, 2))
    print("flat %.3g  prefix peak 1e%.2f" % (op_norm(W - np.eye(4)), np.log10(peak)))
