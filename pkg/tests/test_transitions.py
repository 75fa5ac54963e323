import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sympcocycle import transitions as tr
from sympcocycle.cocycle import Letter, PeriodicOrbit, TransitionWord, word_matrix
from sympcocycle.core import is_symplectic, op_norm, same_subspace, standard_form
from sympcocycle.rand import random_canonical_frame, random_symplectic

SP2 = standard_form(1)
SP4 = standard_form(2)
SP6 = standard_form(3)


def rotation(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def blockdiag(*blocks):
    mats = [np.atleast_2d(np.asarray(b, float)) for b in blocks]
    n = sum(m.shape[0] for m in mats)
    out = np.zeros((n, n))
    r = 0
    for m in mats:
        k = m.shape[0]
        out[r:r + k, r:r + k] = m
        r += k
    return out


def one_letter_orbit(name, M):
    return PeriodicOrbit(name, (Letter(np.asarray(M, float), name + "[0]"),))


def flat_leak(space, W, src, tgt, cols):
    """How far the word carries a source block from its target block.

    Measured in the block's stable direction: lower-half blocks through the
    inverse word, the rest forward.
    """
    cl = list(cols)
    if cl[-1] < space.dim // 2:
        V = np.linalg.solve(W, tgt.basis[:, cl])
        Vc = src.coords(V)
    else:
        V = W @ src.basis[:, cl]
        Vc = tgt.coords(V)
    mask = np.ones(space.dim, bool)
    mask[cl] = False
    return np.linalg.norm(Vc[mask]) / np.linalg.norm(Vc)


def diag_point(space, vals, name="p"):
    return tr.point_data(space, one_letter_orbit(name, np.diag(np.asarray(vals, float))))


# ---------------------------------------------------------------------------
# transition-word algebra


class TestWordAlgebra:
    def test_identity_transition(self):
        t = tr.identity_transition(SP4, "a", "b")
        assert (t.from_point, t.to_point) == ("a", "b")
        assert len(t.letters) == 1
        np.testing.assert_array_equal(t.letters[0].matrix, np.eye(4))

    def test_compose_matrix_oracle(self, rng):
        A = random_symplectic(SP4, rng)
        B = random_symplectic(SP4, rng)
        t_jk = TransitionWord("i", "j", (Letter(A, "A"),), 0.25)
        t_ij = TransitionWord("j", "k", (Letter(B, "B"),), 0.1)
        t = tr.compose_transitions(t_ij, t_jk)
        assert (t.from_point, t.to_point) == ("i", "k")
        np.testing.assert_allclose(t.matrix, B @ A, atol=1e-14)
        assert t.eps_budget == 0.25

    def test_compose_endpoint_mismatch(self):
        t1 = tr.identity_transition(SP2, "a", "b")
        t2 = tr.identity_transition(SP2, "c", "d")
        with pytest.raises(tr.TransitionError, match="endpoint mismatch"):
            tr.compose_transitions(t2, t1)

    def test_pad_counts_and_matrix(self, rng):
        Mi = np.diag([2.0, 0.5])
        Mj = np.diag([1.25, 0.8])
        oi = one_letter_orbit("i", Mi)
        oj = one_letter_orbit("j", Mj)
        T = random_symplectic(SP2, rng)
        t = TransitionWord("j", "i", (Letter(T, "T"),), 0.0)
        padded = tr.pad_transition(oi, t, oj, alpha=3, beta=2)
        assert len(padded.letters) == 2 + 1 + 3
        oracle = np.linalg.matrix_power(Mi, 3) @ T @ np.linalg.matrix_power(Mj, 2)
        np.testing.assert_allclose(padded.matrix, oracle, rtol=1e-13)

    def test_pad_rejects_negative_exponent(self):
        o = one_letter_orbit("p", np.eye(2))
        t = tr.identity_transition(SP2, "p", "p")
        with pytest.raises(tr.TransitionError, match="nonnegative"):
            tr.pad_transition(o, t, o, -1, 0)

    def test_pad_rejects_wrong_orbits(self):
        oi = one_letter_orbit("i", np.eye(2))
        oj = one_letter_orbit("j", np.eye(2))
        t = tr.identity_transition(SP2, "i", "j")
        with pytest.raises(tr.TransitionError, match="does not run between"):
            tr.pad_transition(oi, t, oj, 1, 1)

    @given(alpha=st.integers(0, 5), beta=st.integers(0, 5))
    @settings(max_examples=30, deadline=None)
    def test_pad_exponent_property(self, alpha, beta):
        Mi = np.diag([3.0, 1.0 / 3.0])
        oi = one_letter_orbit("i", Mi)
        t = tr.identity_transition(SP2, "i", "i")
        padded = tr.pad_transition(oi, t, oi, alpha, beta)
        oracle = np.linalg.matrix_power(Mi, alpha + beta)
        np.testing.assert_allclose(padded.matrix, oracle, rtol=1e-12)


# ---------------------------------------------------------------------------
# eigenstructure bundles


class TestPointData:
    def test_diagonal_blocks(self):
        p = diag_point(SP4, [0.25, 0.5, 2.0, 4.0])
        assert p.blocks == ((0,), (1,), (2,), (3,))
        np.testing.assert_allclose(p.moduli, [0.25, 0.5, 2.0, 4.0], rtol=1e-12)
        np.testing.assert_allclose(p.basis_inverse @ p.basis, np.eye(4), atol=1e-12)

    def test_conjugated_orbit_is_canonical(self, rng):
        C = random_canonical_frame(SP4, rng, 0.6)
        M = C @ np.diag([0.25, 0.5, 2.0, 4.0]) @ np.linalg.inv(C)
        p = tr.point_data(SP4, one_letter_orbit("p", M))
        gram = p.basis.T @ SP4.form @ p.basis
        np.testing.assert_allclose(gram, SP4.form, atol=1e-9)
        coord = p.coords(p.basis)
        np.testing.assert_allclose(coord, np.eye(4), atol=1e-9)
        for j, lam in enumerate(p.moduli):
            img = M @ p.basis[:, j]
            np.testing.assert_allclose(img, lam * p.basis[:, j], atol=1e-8)

    def test_extreme_planes(self):
        rho = 0.55
        M = blockdiag(rho * rotation(0.5), (1 / rho) * rotation(-0.5))
        p = tr.point_data(SP4, one_letter_orbit("p", M), planes=(0,))
        assert p.planes == (0, 2)
        assert p.blocks == ((0, 1), (2, 3))
        np.testing.assert_allclose(p.moduli, [rho, rho, 1 / rho, 1 / rho], rtol=1e-10)
        B = p.block_matrix(0)
        assert abs(np.sqrt(abs(np.linalg.det(B))) - rho) < 1e-10

    def test_center_plane(self):
        M = blockdiag(0.5, rotation(0.4), 2.0)
        p = tr.point_data(SP4, one_letter_orbit("p", M), planes=(1,))
        assert p.blocks == ((0,), (1, 2), (3,))
        np.testing.assert_allclose(p.moduli[1:3], [1.0, 1.0], rtol=1e-12)

    def test_undeclared_complex_is_rejected(self):
        M = blockdiag(0.5, rotation(0.4), 2.0)
        with pytest.raises(tr.TransitionError, match="complex"):
            tr.point_data(SP4, one_letter_orbit("p", M))
        rho = 0.5
        M6 = blockdiag(rho * rotation(0.3), rotation(0.5), (1 / rho) * rotation(-0.3))
        with pytest.raises(tr.TransitionError, match="undeclared complex"):
            tr.point_data(SP6, one_letter_orbit("p", M6), planes=(0,))

    def test_declared_plane_on_real_pair_is_rejected(self):
        with pytest.raises(tr.TransitionError, match="not a complex plane"):
            tr.point_data(SP4, one_letter_orbit("p", np.diag([0.25, 0.5, 2.0, 4.0])),
                          planes=(1,))

    def test_negative_spectrum_is_rejected(self):
        with pytest.raises(Exception, match="[Mm]ixed-sign|negative|real"):
            tr.point_data(SP2, one_letter_orbit("p", np.diag([-2.0, -0.5])))

    def test_modulus_collision_is_rejected(self):
        lam = 1.0 + 2e-10
        M = blockdiag(0.5, 1 / lam, lam, 2.0)
        with pytest.raises(Exception, match="gap|close"):
            tr.point_data(SP4, one_letter_orbit("p", M))


# ---------------------------------------------------------------------------
# shear correctors


class TestCorrectors:
    @pytest.mark.parametrize("s", [0, 1, 2, 3])
    def test_line_sign_table(self, s):
        space = SP4
        rng = np.random.default_rng(100 + s)
        v = np.zeros(4)
        v[s] = 1.0
        for i in range(4):
            if i != s:
                v[i] = 0.03 * rng.standard_normal()
        K = tr.line_corrector(space, s, v)
        chk = is_symplectic(space, K)
        assert chk.ok and chk.residual < 1e-12
        np.testing.assert_allclose(K[:, s], v, atol=1e-15)
        cs = space.conj(s)
        np.testing.assert_array_equal(K[:, cs], np.eye(4)[:, cs])
        for i in range(4):
            if i in (s, cs):
                continue
            expected = np.eye(4)[:, i].copy()
            expected[cs] = space.pair_sign(i) * v[space.conj(i)] / space.pair_sign(s)
            np.testing.assert_allclose(K[:, i], expected, atol=1e-14)

    def test_straight_target_gives_identity(self):
        v = np.zeros(6)
        v[2] = 1.0
        np.testing.assert_array_equal(tr.line_corrector(SP6, 2, v), np.eye(6))

    @given(
        s=st.integers(0, 5),
        tilts=st.lists(st.floats(-0.2, 0.2), min_size=5, max_size=5),
    )
    @settings(max_examples=60, deadline=None)
    def test_line_corrector_symplectic(self, s, tilts):
        v = np.zeros(6)
        v[s] = 1.0
        others = [i for i in range(6) if i != s]
        for i, t in zip(others, tilts):
            v[i] = t
        K = tr.line_corrector(SP6, s, v)
        chk = is_symplectic(SP6, K)
        assert chk.ok and chk.residual < 1e-10
        np.testing.assert_allclose(K[:, s], v, atol=1e-12)

    def test_disjoint_plane_corrector(self):
        V = np.zeros((6, 2))
        V[0, 0] = 1.0
        V[1, 1] = 1.0
        # proportional tails keep the span isotropic
        V[2, 0], V[3, 0] = 0.02, -0.01
        V[2, 1], V[3, 1] = 0.015, -0.0075
        K = tr.plane_corrector(SP6, (0, 1), V)
        chk = is_symplectic(SP6, K)
        assert chk.ok and chk.residual < 1e-12
        np.testing.assert_allclose(K[:, [0, 1]], V, atol=1e-13)

    def test_plane_corrector_rejects_nonisotropic(self):
        V = np.zeros((6, 2))
        V[0, 0] = 1.0
        V[1, 1] = 1.0
        V[5, 1] = 0.02  # pairs with column 0's head along the form
        with pytest.raises(tr.TransitionError, match="isotropic"):
            tr.plane_corrector(SP6, (0, 1), V)

    def test_center_plane_corrector_spans_target(self):
        space = SP6
        V = np.zeros((6, 2))
        V[2, 0] = 1.0
        V[3, 1] = 1.0
        V[0, 0], V[1, 0] = 0.02, -0.01
        V[4, 1], V[5, 1] = 0.03, 0.015
        K = tr.plane_corrector(space, (2, 3), V)
        chk = is_symplectic(space, K)
        assert chk.ok and chk.residual < 1e-12
        np.testing.assert_allclose(K[:, 2], V[:, 0], atol=1e-13)
        assert same_subspace(K[:, 2:4], V, tol=1e-10)


# ---------------------------------------------------------------------------
# alignment


class TestAlign:
    def setup_method(self):
        self.src = diag_point(SP4, [0.25, 0.5, 2.0, 4.0], "p")
        self.tgt = diag_point(SP4, [1 / 4.2, 1 / 1.9, 1.9, 4.2], "q")

    def raw(self, seed=11):
        rng = np.random.default_rng(seed)
        return TransitionWord("p", "q",
                              (Letter(random_symplectic(SP4, rng), "T0"),), 0.0)

    def test_already_aligned_stays_put(self):
        t0 = tr.identity_transition(SP4, "p", "q")
        al = tr.align_extremes(t0, self.src, self.tgt)
        assert al.n1 == 0 and al.n2 == 0
        assert al.distance == 0.0
        np.testing.assert_array_equal(al.word.letters[0].matrix, np.eye(4))

    def test_random_raw_pins_extremes(self):
        al = tr.align_extremes(self.raw(), self.src, self.tgt, angle_tol=1e-3)
        assert 0 < al.n1 <= 30 and 0 < al.n2 <= 30
        table = {cols: angle for cols, _, angle in al.images}
        assert table[(0,)] < 1e-10 and table[(3,)] < 1e-10
        W = word_matrix(al.word.letters)
        assert is_symplectic(SP4, W, tol=1e-7).ok
        assert flat_leak(SP4, W, self.src, self.tgt, (3,)) < 1e-10
        assert flat_leak(SP4, W, self.src, self.tgt, (0,)) < 1e-10
        assert al.word.eps_budget == pytest.approx(al.distance)
        assert len(al.word.letters) == 1 + al.n1 + al.n2

    def test_correctors_are_marked(self):
        al = tr.align_extremes(self.raw(), self.src, self.tgt, angle_tol=1e-3)
        assert al.word.letters[-1].provenance == "corrector"
        assert al.word.letters[0].provenance == "corrector"

    def test_extreme_plane_is_rejected(self):
        rho = 0.55
        planar = tr.point_data(
            SP4, one_letter_orbit("p", blockdiag(rho * rotation(0.5),
                                                 (1 / rho) * rotation(-0.5))),
            planes=(0,))
        t0 = tr.identity_transition(SP4, "p", "q")
        with pytest.raises(tr.TransitionError, match="extreme rank"):
            tr.align_extremes(t0, planar, self.tgt)

    def test_align_top_needs_a_plane(self):
        t0 = tr.identity_transition(SP4, "p", "q")
        with pytest.raises(tr.TransitionError, match="extreme block"):
            tr.align_top(t0, self.src, self.tgt)

    def test_align_top_pins_extreme_planes(self):
        rho = 0.55
        src = tr.point_data(
            SP6, one_letter_orbit("p", blockdiag(rho * rotation(0.5), 0.9, 1 / 0.9,
                                                 (1 / rho) * rotation(-0.5))),
            planes=(0, 4))
        tgt = diag_point(SP6, [0.3, 0.6, 0.95, 1 / 0.95, 1 / 0.6, 1 / 0.3], "q")
        rng = np.random.default_rng(5)
        t0 = TransitionWord("p", "q",
                            (Letter(random_symplectic(SP6, rng), "T0"),), 0.0)
        al = tr.align_top(t0, src, tgt, angle_tol=1e-3)
        table = {cols: angle for cols, _, angle in al.images}
        assert table[(0, 1)] < 1e-8 and table[(4, 5)] < 1e-8
        W = word_matrix(al.word.letters)
        assert flat_leak(SP6, W, src, tgt, (0, 1)) < 1e-8
        assert flat_leak(SP6, W, src, tgt, (4, 5)) < 1e-8

    def test_period_cap_raises_with_achieved_angle(self):
        with pytest.raises(tr.AlignmentError) as err:
            tr.align_extremes(self.raw(), self.src, self.tgt,
                              angle_tol=1e-12, n_cap=3)
        assert err.value.achieved > 1e-12

    def test_budget_overrun_raises(self):
        with pytest.raises(tr.TransitionError, match="exceeds the budget"):
            tr.align_extremes(self.raw(), self.src, self.tgt, eps=1e-12)


# ---------------------------------------------------------------------------
# fully adapted transitions


class TestAdapted:
    def test_dim2_center_only(self):
        p = diag_point(SP2, [0.5, 2.0], "p")
        pi = tr.point_data(SP2, one_letter_orbit("c", rotation(0.4)), planes=(0,))
        fwd, back = tr.adapted_transition(p, pi, 0)
        assert [s.kind for s in fwd.stages] == ["center"]
        assert len(fwd.word.letters) == 1 and len(back.word.letters) == 1
        assert (fwd.word.from_point, fwd.word.to_point) == ("p", "c")
        assert (back.word.from_point, back.word.to_point) == ("c", "p")

    def test_dim4_center_fold(self, rng):
        p = diag_point(SP4, [0.5, 0.8, 1.25, 2.0], "p")
        pi = tr.point_data(SP4, one_letter_orbit("c", blockdiag(0.5, rotation(0.4), 2.0)),
                           planes=(1,))
        raw = TransitionWord("p", "c", (Letter(random_symplectic(SP4, rng), "T"),), 0.0)
        rawb = TransitionWord("c", "p", (Letter(random_symplectic(SP4, rng), "S"),), 0.0)
        fwd, back = tr.adapted_transition(p, pi, 1, raw=raw, raw_back=rawb,
                                          angle_tol=1e-3)
        assert [s.kind for s in fwd.stages] == ["line", "center"]
        assert max(a for _, _, a in fwd.images) < 1e-8
        assert max(a for _, _, a in back.images) < 1e-8
        Wf = word_matrix(fwd.word.letters)
        for block in ((0,), (1, 2), (3,)):
            assert flat_leak(SP4, Wf, p, pi, block) < 1e-8

    def test_dim4_extreme_fold(self, rng):
        p = diag_point(SP4, [0.5, 0.6, 1 / 0.6, 2.0], "p")
        rho = np.sqrt(0.3)
        pi = tr.point_data(
            SP4, one_letter_orbit("c", blockdiag(rho * rotation(0.45),
                                                 (1 / rho) * rotation(-0.45))),
            planes=(0,))
        raw = TransitionWord("p", "c", (Letter(random_symplectic(SP4, rng), "T"),), 0.0)
        fwd, back = tr.adapted_transition(p, pi, 0, raw=raw, angle_tol=1e-3)
        assert [s.kind for s in fwd.stages] == ["plane"]
        assert max(a for _, _, a in fwd.images) < 1e-8
        assert max(a for _, _, a in back.images) < 1e-8

    def test_dim6_window_walk(self, rng):
        p = diag_point(SP6, [0.4, 0.7, 0.9, 1 / 0.9, 1 / 0.7, 1 / 0.4], "p")
        pi = tr.point_data(
            SP6, one_letter_orbit("c", blockdiag(0.4, 0.7, rotation(0.6),
                                                 1 / 0.7, 1 / 0.4)),
            planes=(2,))
        raw = TransitionWord("p", "c", (Letter(random_symplectic(SP6, rng), "T"),), 0.0)
        fwd, back = tr.adapted_transition(p, pi, 2, raw=raw, angle_tol=1e-2)
        assert [s.kind for s in fwd.stages] == ["line", "line", "center"]
        assert max(a for _, _, a in fwd.images) < 1e-8
        Wf = word_matrix(fwd.word.letters)
        assert is_symplectic(SP6, Wf, tol=1e-6).ok
        for block in ((0,), (1,), (2, 3), (4,), (5,)):
            assert flat_leak(SP6, Wf, p, pi, block) < 1e-8

    def test_wrong_companion_plane(self):
        p = diag_point(SP4, [0.5, 0.8, 1.25, 2.0], "p")
        pi = tr.point_data(SP4, one_letter_orbit("c", blockdiag(0.5, rotation(0.4), 2.0)),
                           planes=(1,))
        with pytest.raises(tr.TransitionError, match="companion plane"):
            tr.adapted_transition(p, pi, 0)


# ---------------------------------------------------------------------------
# eigenline swaps


def center_fold_setup():
    lam0, lam1 = 1.25, 1.1
    p = diag_point(SP4, [1 / lam0, 1 / lam1, lam1, lam0], "p")
    pi = tr.point_data(
        SP4, one_letter_orbit("c1", blockdiag(1 / lam0, rotation(0.4), lam0)),
        planes=(1,))
    return p, pi


def extreme_fold_setup():
    lam0, lam1 = 1.25, 1.1
    p = diag_point(SP4, [1 / lam0, 1 / lam1, lam1, lam0], "p")
    rho = np.sqrt(1 / (lam0 * lam1))
    pi = tr.point_data(
        SP4, one_letter_orbit("c0", blockdiag(rho * rotation(0.4),
                                              (1 / rho) * rotation(-0.4))),
        planes=(0,))
    return p, pi


class TestSwap:
    def test_dim2_exchange(self):
        p = diag_point(SP2, [1 / 1.2, 1.2], "p")
        pi = tr.point_data(SP2, one_letter_orbit("c", rotation(0.35)), planes=(0,))
        cert = tr.swap_transition(p, pi, 0, 0.5, 0.5)
        assert cert.iterate >= 1
        assert [(j, k) for j, k, _ in cert.images] == [(0, 1), (1, 0)]
        assert max(a for _, _, a in cert.images) < 1e-8
        assert cert.distance <= 0.5
        assert (cert.word.from_point, cert.word.to_point) == ("p", "p")
        assert is_symplectic(SP2, cert.matrix, tol=1e-8).ok

    def test_dim4_center_fold(self):
        p, pi = center_fold_setup()
        cert = tr.swap_transition(p, pi, 1, 0.5, 0.5)
        perm = {j: k for j, k, _ in cert.images}
        assert perm == {0: 0, 1: 2, 2: 1, 3: 3}
        assert max(a for _, _, a in cert.images) < 1e-8
        # untouched extreme lines are fixed exactly
        table = {j: a for j, _, a in cert.images}
        assert table[0] < 1e-14 and table[3] < 1e-14

    def test_dim4_extreme_fold_carries_conjugates(self):
        p, pi = extreme_fold_setup()
        cert = tr.swap_transition(p, pi, 0, 0.5, 0.5)
        perm = {j: k for j, k, _ in cert.images}
        assert perm == {0: 1, 1: 0, 2: 3, 3: 2}
        assert max(a for _, _, a in cert.images) < 1e-8
        imgs = tr.verify_swap(SP4, p.basis, 0, cert.matrix, tol=1e-6)
        assert max(a for _, _, a in imgs) < 1e-6

    def test_dim6_fixed_lines_exact(self):
        l0, l1, l2 = 1.3, 1.15, 1.05
        p = diag_point(SP6, [1 / l0, 1 / l1, 1 / l2, l2, l1, l0], "p")
        pi = tr.point_data(
            SP6, one_letter_orbit("c2", blockdiag(1 / l0, 1 / l1, rotation(0.4),
                                                  l1, l0)),
            planes=(2,))
        cert = tr.swap_transition(p, pi, 2, 0.5, 0.5)
        table = {j: a for j, _, a in cert.images}
        for j in (0, 1, 4, 5):
            assert table[j] < 1e-13
        assert table[2] < 1e-8 and table[3] < 1e-8

    def test_budget_overrun(self):
        p, pi = center_fold_setup()
        with pytest.raises(tr.TransitionError, match="exceeds the transition budget"):
            tr.swap_transition(p, pi, 1, 0.01, 1e-4)

    def test_wrong_plane(self):
        p, pi = center_fold_setup()
        with pytest.raises(tr.TransitionError, match="no complex plane"):
            tr.swap_transition(p, pi, 0, 0.5, 0.5)

    def test_index_out_of_range(self):
        p, pi = center_fold_setup()
        with pytest.raises(tr.TransitionError, match="out of range"):
            tr.swap_transition(p, pi, 3, 0.5, 0.5)

    def test_source_must_be_real_simple(self):
        _, pi = center_fold_setup()
        with pytest.raises(tr.TransitionError, match="simple positive real"):
            tr.swap_transition(pi, pi, 1, 0.5, 0.5)

    def test_verify_swap_archetype(self):
        T = np.array([[0.0, 1.0], [-1.0, 0.0]])
        imgs = tr.verify_swap(SP2, np.eye(2), 0, T)
        assert max(a for _, _, a in imgs) == 0.0

    def test_verify_swap_rejects_identity(self):
        with pytest.raises(tr.TransitionError, match="misses rank"):
            tr.verify_swap(SP2, np.eye(2), 0, np.eye(2))


# ---------------------------------------------------------------------------
# the identity-word endgame


def archetype_cert():
    T = np.array([[0.0, 1.0], [-1.0, 0.0]])
    word = TransitionWord("p", "p", (Letter(T, "swap"),), 0.0)
    images = ((0, 1, 0.0), (1, 0, 0.0))
    return tr.SwapCertificate(0, T, word, images, 0.0, 1, 0)


def dim4_swaps():
    p, pi1 = center_fold_setup()
    _, pi0 = extreme_fold_setup()
    c0 = tr.swap_transition(p, pi0, 0, 0.5, 0.5)
    c1 = tr.swap_transition(p, pi1, 1, 0.5, 0.5)
    return p, {0: c0, 1: c1}


class TestElliptic:
    def test_dim2_archetype_is_exact(self):
        p = diag_point(SP2, [0.5, 2.0], "p")
        ew = tr.elliptic_word(p, [archetype_cert()], 3)
        assert ew.flat_residual == 0.0
        assert ew.residual < 1e-12
        np.testing.assert_allclose(ew.c_values, (1.0, 1.0), atol=1e-12)
        assert ew.budget["correction"] < 1e-12
        assert (ew.word.from_point, ew.word.to_point) == ("p", "p")

    def test_dim2_pipeline(self):
        p = diag_point(SP2, [1 / 1.2, 1.2], "p")
        pi = tr.point_data(SP2, one_letter_orbit("c", rotation(0.35)), planes=(0,))
        cert = tr.swap_transition(p, pi, 0, 0.5, 0.5)
        ew = tr.elliptic_word(p, [cert], 6, 0.5, 0.5)
        assert ew.residual < 1e-6
        assert ew.flat_residual < 1e-5
        assert ew.budget["bound"] <= 0.5 + 2 * 0.5

    def test_dim4_pipeline(self):
        p, swaps = dim4_swaps()
        ew = tr.elliptic_word(p, swaps, 4, 0.5, 0.5)
        assert ew.residual < 1e-6
        assert ew.structure_residual < 1e-6
        assert set(ew.budget) == {"diagonalize", "swap", "correction", "bound"}
        assert ew.budget["bound"] == pytest.approx(
            ew.budget["diagonalize"] + ew.budget["swap"] + ew.budget["correction"])
        for j in range(4):
            pair = np.log(ew.c_values[j]) + np.log(ew.c_values[SP4.conj(j)])
            assert abs(pair) < 1e-8

    def test_missing_swaps(self):
        p, swaps = dim4_swaps()
        with pytest.raises(tr.TransitionError, match=r"missing swaps at ranks \[1\]"):
            tr.elliptic_word(p, {0: swaps[0]}, 2)

    def test_bad_period_exponent(self):
        p = diag_point(SP2, [0.5, 2.0], "p")
        with pytest.raises(tr.TransitionError, match="positive"):
            tr.elliptic_word(p, [archetype_cert()], 0)

    def test_moduli_must_multiply_to_one(self):
        orbit = one_letter_orbit("p", np.diag([2.0, 3.0]))
        p = tr.PointData(SP2, orbit, np.eye(2), (2.0, 3.0), (), ((0,), (1,)),
                         (np.array([[2.0]]), np.array([[3.0]])), None, 0.0)
        with pytest.raises(tr.TransitionError, match="multiply to one"):
            tr.elliptic_word(p, [archetype_cert()], 2)

    def test_swaps_must_cycle(self):
        p, swaps = dim4_swaps()
        with pytest.raises(tr.TransitionError, match="cycle through all"):
            tr.elliptic_word(p, {0: swaps[0], 1: swaps[0]}, 2)

    def test_correction_budget_reports_minimal_n(self):
        p, swaps = dim4_swaps()
        probe = tr.elliptic_word(p, swaps, 1)
        corr = probe.budget["correction"]
        if corr == 0.0:
            pytest.skip("correction vanished identically on this instance")
        with pytest.raises(tr.EllipticBudgetError) as err:
            tr.elliptic_word(p, swaps, 1, 0.5, corr / 10.0)
        n_min = err.value.minimal_n
        assert n_min > 1
        retry = tr.elliptic_word(p, swaps, n_min, 0.5, corr / 10.0)
        assert retry.budget["correction"] <= corr / 10.0
        assert retry.residual < 1e-6
