import numpy as np

from sympcocycle.core import space_for_dim, op_norm
from sympcocycle.cocycle import Letter, PeriodicOrbit, CocycleSystem, TransitionWord
import sympcocycle.dichotomy as dy
from sympcocycle.perturbation import diagonalize
from sympcocycle.transitions import (point_data, adapted_transition, _propagate,
                                     _normalize_columns, _block_angle)


def system_of(space, mats, tag="a"):
    letters = tuple(Letter(np.asarray(m, float), "%s[%d]" % (tag, k))
                    for k, m in enumerate(mats))
    orb = PeriodicOrbit(tag, letters)
    ts = (TransitionWord(tag, tag, (Letter(np.eye(space.dim), "t"),), 0.0),)
    return CocycleSystem(space, (orb,), max(np.linalg.norm(m, 2) for m in mats), ts)


sp = space_for_dim(4)
system = system_of(sp, [np.diag([1 / 1.04, 1 / 1.01, 1.01, 1.04])])
scan = dy.scan_ranks(system, 0.25)
designated = system.orbit("a")
diag = diagonalize(designated, 0.125, gap=0.04, seed=0)
p = point_data(sp, diag.orbit, base_distance=diag.distance)
print("p moduli", np.round(p.moduli, 4))

w = scan[1].witness
companion = point_data(sp, w.orbit, planes=(w.rank,))
print("companion planes", companion.planes, "moduli", np.round(companion.moduli, 4))

i = 0
fwd, back = adapted_transition(p, companion, i, seed=0)
print("fwd stages:", [(s.kind, s.n1, s.n2) for s in fwd.stages])
print("back stages:", [(s.kind, s.n1, s.n2) for s in back.stages])
print("back chain:", [type(f).__name__ for f in back.chain])

B = companion.block_matrix(i)
plane_cols = companion.basis[:, [i, i + 1]]

# what does the plane itself map to through back.chain, forward?
P_img = _propagate(back.chain, plane_cols)
Pc = p.coords(P_img)
print("plane image coords (p frame), column mass per rank:")
print(np.round(np.abs(Pc), 6))
print("plane->bottom-span angle:", _block_angle(Pc, (0, 1)))

# certified direction: pull p's bottom block back
Z = _propagate(back.chain, p.basis[:, [0, 1]], inverse=True)
Zc = companion.coords(Z)
print("pullback of p-bottom in companion coords, mass per rank:")
print(np.round(np.abs(Zc), 6))

up = _propagate(fwd.chain, p.basis[:, [i, i + 1]])
up_c = companion.coords(up)
chart = up_c[[i, i + 1], :]
print("chart:", np.round(chart, 4))

cur = chart.copy()
for m in range(1, 45):
    cur = B @ cur
    cur = _normalize_columns(cur)
    img = _propagate(back.chain, plane_cols @ cur[:, 1:2])
    c = p.coords(img)
    angle = _block_angle(c, (i,))
    if m <= 8 or m % 8 == 0:
        print("m=%2d angle %.4f  coords mass %s" %
              (m, angle, np.round(np.abs(c[:, 0]) / np.linalg.norm(c), 4)))
