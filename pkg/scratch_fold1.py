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

i = 1
w = scan[i + 1].witness
companion = point_data(sp, w.orbit, planes=(w.rank,))
fwd, back = adapted_transition(p, companion, i, seed=0)
print("back stages:", [(s.kind, s.n1, s.n2) for s in back.stages])
print("fwd stages:", [(s.kind, s.n1, s.n2) for s in fwd.stages])

# pullback of e1 into the plane: the ell target
t_back = _propagate(back.chain, p.basis[:, i:i + 1], inverse=True)
tc = companion.coords(t_back)[:, 0]
print("ell pullback coords mass:", np.abs(np.round(tc / np.linalg.norm(tc), 10)))

# forward re-propagation of ell through back.chain: line1 accuracy
ell = tc[[i, i + 1]] / np.linalg.norm(tc[[i, i + 1]])
plane_cols = companion.basis[:, [i, i + 1]]
line1 = _propagate(back.chain, (plane_cols @ ell).reshape(-1, 1))[:, 0]
c1 = p.coords(line1.reshape(-1, 1))[:, 0]
print("line1 p-coords:", np.round(c1 / np.linalg.norm(c1), 10))
print("line1 angle to e%d: %.3g" % (i, _block_angle(c1.reshape(-1, 1), (i,))))

# how well does back map the plane onto the (i, i+1) span?
P_img = _propagate(back.chain, plane_cols)
Pc = p.coords(P_img)
print("plane image angle to span:", _block_angle(Pc, (i, i + 1)))

# pullback of BOTH eigenlines: chart conditioning
pull = _propagate(back.chain, np.column_stack([
    p.basis[:, i], p.basis[:, i + 1], p.basis[:, i] + p.basis[:, i + 1]]),
    inverse=True)
pc = companion.coords(pull)
print("pullback leak per column:",
      [float("%.3g" % (np.linalg.norm(np.delete(pc[:, k], [i, i + 1])) /
                       np.linalg.norm(pc[:, k]))) for k in range(3)])
A2 = pc[[i, i + 1], 0:2]
print("A2 cond %.3g" % np.linalg.cond(A2))
