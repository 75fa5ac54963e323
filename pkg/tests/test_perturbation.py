import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sympcocycle import perturbation as pert
from sympcocycle.cocycle import Letter, PeriodicOrbit, word_matrix
from sympcocycle.core import (
    eigen_symplectic_basis,
    is_symplectic,
    op_norm,
    paired_spectrum,
    standard_form,
)
from sympcocycle.domination import DominationCertificate
from sympcocycle.rand import random_canonical_frame, random_symplectic


def one_letter_orbit(M, name="p"):
    return PeriodicOrbit(name, (Letter(np.asarray(M, float), name + "[0]"),))


VALS6 = np.array([0.2, 0.4, 0.8, 1.25, 2.5, 5.0])


@pytest.fixture
def diag6():
    space = standard_form(3)
    orbit = one_letter_orbit(np.diag(VALS6), "d6")
    basis = eigen_symplectic_basis(space, np.diag(VALS6))
    return space, orbit, basis


class TestConjugateBlock:
    def test_two_three_oracle(self):
        Bt = pert.conjugate_block(np.diag([2.0, 3.0]), 1)
        np.testing.assert_allclose(Bt, np.diag([0.5, 1.0 / 3.0]), rtol=1e-15)

    def test_rotation_compensates_with_same_rotation(self):
        R = pert.rotation2(0.37)
        np.testing.assert_allclose(pert.conjugate_block(R, 1), R, atol=1e-15)

    def test_determinant_inverts(self):
        B = np.array([[1.2, 0.3], [-0.4, 0.8]])
        Bt = pert.conjugate_block(B, -1)
        assert np.linalg.det(Bt) == pytest.approx(1.0 / np.linalg.det(B))

    @given(
        coeffs=st.tuples(*[st.floats(-3.0, 3.0) for _ in range(4)]).filter(
            lambda c: abs(c[0] * c[3] - c[1] * c[2]) > 0.05
        ),
        sigma=st.sampled_from([-1, 1]),
    )
    @settings(max_examples=60, deadline=None)
    def test_involution(self, coeffs, sigma):
        a, b, g, d = coeffs
        B = np.array([[a, g], [b, d]])
        back = pert.conjugate_block(pert.conjugate_block(B, sigma), sigma)
        np.testing.assert_allclose(back, B, atol=1e-10)

    def test_degenerate_block_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            pert.conjugate_block(np.array([[1.0, 2.0], [2.0, 4.0]]), 1)


class TestBlockPerturbation:
    def test_from_coeffs_layout(self):
        bp = pert.BlockPerturbation.from_coeffs(0, 1, 1.0, 2.0, 3.0, 4.0)
        np.testing.assert_allclose(bp.block, [[1.0, 3.0], [2.0, 4.0]])
        assert bp.det == pytest.approx(-2.0)

    def test_zero_determinant_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            pert.BlockPerturbation.from_coeffs(0, 1, 1.0, 1.0, 1.0, 1.0)

    def test_equal_indices_rejected(self):
        with pytest.raises(ValueError, match="differ"):
            pert.BlockPerturbation(2, 2, np.eye(2))


class TestRealizeOnPair:
    def test_restriction_of_input_gives_identity(self, diag6):
        space, orbit, basis = diag6
        bp = pert.BlockPerturbation(0, 1, np.diag(VALS6[[0, 1]]))
        rp = pert.realize_on_pair(orbit, basis, bp)
        assert rp.distance < 1e-12
        np.testing.assert_allclose(rp.matrix, np.diag(VALS6), atol=1e-12)

    def test_two_three_block_oracle(self, diag6):
        space, orbit, basis = diag6
        bp = pert.BlockPerturbation.from_coeffs(0, 1, 2.0, 0.0, 0.0, 3.0)
        rp = pert.realize_on_pair(orbit, basis, bp)
        np.testing.assert_allclose(rp.btilde, np.diag([0.5, 1.0 / 3.0]), atol=1e-14)
        got = np.sort(np.linalg.eigvals(rp.matrix).real)
        want = np.sort([2.0, 3.0, 0.5, 1.0 / 3.0, 0.8, 1.25])
        np.testing.assert_allclose(got, want, rtol=1e-9)
        assert is_symplectic(space, rp.matrix, tol=1e-8)

    def test_rotation_block_compensated_by_same_rotation(self, diag6):
        space, orbit, basis = diag6
        bp = pert.BlockPerturbation(1, 2, pert.rotation2(0.25))
        rp = pert.realize_on_pair(orbit, basis, bp)
        np.testing.assert_allclose(rp.btilde, pert.rotation2(0.25), atol=1e-12)

    def test_restriction_identities_exact_in_general_position(self, rng):
        space = standard_form(3)
        C = random_canonical_frame(space, rng, 0.5)
        M = C @ np.diag(VALS6) @ np.linalg.inv(C)
        orbit = one_letter_orbit(M, "g6")
        basis = eigen_symplectic_basis(space, M)
        bp = pert.BlockPerturbation.from_coeffs(1, 2, 1.1, 0.3, -0.2, 0.9)
        rp = pert.realize_on_pair(orbit, basis, bp)
        coords = basis.inverse @ rp.matrix @ basis.vectors
        pair = np.ix_([1, 2], [1, 2])
        conj_pair = np.ix_([4, 3], [4, 3])
        np.testing.assert_allclose(coords[pair], bp.block, atol=1e-12)
        np.testing.assert_allclose(coords[conj_pair], rp.btilde, atol=1e-12)
        # untouched eigendirections keep their eigenvalue exactly
        assert coords[0, 0] == pytest.approx(basis.values[0], abs=1e-12)
        assert coords[5, 5] == pytest.approx(basis.values[5], abs=1e-12)

    @pytest.mark.parametrize("jk", [(0, 1), (3, 4), (0, 3), (2, 5)])
    def test_omega_table_survives_every_index_placement(self, diag6, jk):
        space, orbit, basis = diag6
        bp = pert.BlockPerturbation.from_coeffs(jk[0], jk[1], 1.3, 0.4, -0.1, 0.7)
        rp = pert.realize_on_pair(orbit, basis, bp)
        assert is_symplectic(space, rp.matrix, tol=1e-8)
        paired_spectrum(space, rp.matrix)

    def test_pair_indices_need_determinant_one(self, diag6):
        space, orbit, basis = diag6
        with pytest.raises(ValueError, match="determinant 1"):
            pert.realize_on_pair(
                orbit, basis, pert.BlockPerturbation.from_coeffs(1, 4, 2.0, 0.0, 0.0, 3.0)
            )

    def test_pair_indices_rotation_goes_complex(self, diag6):
        space, orbit, basis = diag6
        rp = pert.realize_on_pair(
            orbit, basis, pert.BlockPerturbation(1, 4, pert.rotation2(0.3))
        )
        assert rp.btilde is None
        mods = np.sort(np.abs(np.linalg.eigvals(rp.matrix)))
        np.testing.assert_allclose(mods[2:4], [1.0, 1.0], atol=1e-9)
        assert is_symplectic(space, rp.matrix, tol=1e-8)

    def test_budget_overrun_reports_conjugate_contribution(self, diag6):
        space, orbit, basis = diag6
        bp = pert.BlockPerturbation.from_coeffs(0, 1, 2.0, 0.0, 0.0, 3.0)
        with pytest.raises(pert.BudgetError, match="conjugate-block contribution"):
            pert.realize_on_pair(orbit, basis, bp, eps=1e-6)

    def test_wrong_basis_rejected(self, diag6):
        space, orbit, basis = diag6
        other = one_letter_orbit(np.diag([0.3, 0.5, 0.9, 1 / 0.9, 2.0, 1 / 0.3]), "x")
        with pytest.raises(ValueError, match="diagonalize"):
            pert.realize_on_pair(
                other, basis, pert.BlockPerturbation.from_coeffs(0, 1, 2.0, 0.0, 0.0, 3.0)
            )


class TestStraighten:
    def test_line_already_straight_gives_identity(self, diag6):
        space, orbit, basis = diag6
        p = pert.straighten(basis, 0, 1, basis.column(1))
        np.testing.assert_allclose(p, np.eye(6), atol=1e-12)

    def test_isotropic_case(self):
        space = standard_form(2)
        basis = eigen_symplectic_basis(space, np.diag([0.2, 0.5, 2.0, 5.0]))
        line = 0.1 * basis.column(0) + basis.column(1)
        p = pert.straighten(basis, 0, 1, line)
        np.testing.assert_allclose(p @ basis.column(0), basis.column(0), atol=1e-12)
        np.testing.assert_allclose(p @ line, basis.column(1), atol=1e-12)
        assert space.omega(p @ basis.column(0), p @ line) == pytest.approx(
            space.omega(basis.column(0), line), abs=1e-12
        )
        assert is_symplectic(space, p, tol=1e-8)

    def test_symplectic_case_scales_by_omega(self):
        space = standard_form(1)
        basis = eigen_symplectic_basis(space, np.diag([0.5, 2.0]))
        line = 0.05 * basis.column(0) + 0.98 * basis.column(1)
        assert space.omega(basis.column(0), line) == pytest.approx(0.98)
        p = pert.straighten(basis, 0, 1, line)
        np.testing.assert_allclose(p @ basis.column(0), 0.98 * basis.column(0), atol=1e-12)
        np.testing.assert_allclose(p @ line, basis.column(1), atol=1e-12)
        assert is_symplectic(space, p, tol=1e-8)

    def test_line_outside_plane_rejected(self, diag6):
        space, orbit, basis = diag6
        line = basis.column(1) + 0.2 * basis.column(2)
        with pytest.raises(ValueError, match="leaves"):
            pert.straighten(basis, 0, 1, line)

    def test_angle_threshold_rejected(self, diag6):
        space, orbit, basis = diag6
        line = 0.6 * basis.column(0) + basis.column(1)
        with pytest.raises(ValueError, match="threshold"):
            pert.straighten(basis, 0, 1, line)

    @given(r=st.floats(-0.2, 0.2), s=st.floats(0.85, 1.15))
    @settings(max_examples=40, deadline=None)
    def test_distance_to_identity_scales_with_tilt(self, r, s):
        space = standard_form(2)
        basis = eigen_symplectic_basis(space, np.diag([0.2, 0.5, 2.0, 5.0]))
        line = r * basis.column(0) + s * basis.column(1)
        p = pert.straighten(basis, 0, 1, line)
        assert op_norm(p - np.eye(4)) <= 8.0 * (abs(r) + abs(1.0 - s)) + 1e-12
        assert is_symplectic(space, p, tol=1e-8)


class TestMane2d:
    def test_rotation_needs_no_perturbation(self):
        v = pert.mane_2d(one_letter_orbit(pert.rotation2(0.2)), 0.1)
        assert isinstance(v, pert.ManeComplexified)
        assert v.theta == 0.0
        assert v.distance == 0.0

    def test_weak_diagonal_complexifies_within_tenth(self):
        v = pert.mane_2d(one_letter_orbit(np.diag([1.05, 1 / 1.05])), 0.2)
        assert isinstance(v, pert.ManeComplexified)
        assert 0 < abs(v.theta) <= 0.1
        M = word_matrix(v.orbit.letters)
        assert abs(np.trace(M)) < 2.0
        assert np.linalg.eigvals(M)[0].imag != 0.0

    def test_strong_diagonal_certified_at_ell_one(self):
        v = pert.mane_2d(one_letter_orbit(np.diag([10.0, 0.1])), 0.01)
        assert isinstance(v, pert.ManeDominated)
        assert v.ell == 1
        assert isinstance(v.certificate, DominationCertificate)
        assert v.certificate.worst_ratio == pytest.approx(0.01, rel=1e-6)

    def test_nonpositive_eps_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            pert.mane_2d(one_letter_orbit(np.eye(2)), 0.0)

    def test_exclusive_and_exhaustive_on_random_orbits(self):
        space = standard_form(1)
        rng = np.random.default_rng(20240818)
        seen = {pert.ManeComplexified: 0, pert.ManeDominated: 0}
        for case in range(200):
            period = int(rng.integers(1, 4))
            K = float(rng.uniform(1.5, 10.0))
            eps = float(rng.uniform(0.05, 0.5))
            letters = tuple(
                Letter(random_symplectic(space, rng, K), "o[%d]" % m)
                for m in range(period)
            )
            v = pert.mane_2d(PeriodicOrbit("o%d" % case, letters), eps)
            seen[type(v)] += 1
            if isinstance(v, pert.ManeComplexified):
                w = np.linalg.eigvals(word_matrix(v.orbit.letters))
                assert abs(w[0].imag) > 1e-9
                assert abs(v.theta) <= eps
                for letter in v.orbit.letters:
                    assert is_symplectic(space, letter.matrix, tol=1e-8)
            else:
                assert 1 <= v.ell <= 500
        assert seen[pert.ManeComplexified] > 0
        assert seen[pert.ManeDominated] > 0


class TestHasRankComplex:
    def test_rotation_dim2(self):
        assert pert.has_rank_complex(pert.rotation2(0.3), 0)

    def test_block_diagonal_moduli_pattern(self):
        B = np.zeros((4, 4))
        B[:2, :2] = 0.5 * pert.rotation2(0.4)
        B[2:, 2:] = 2.0 * pert.rotation2(-0.4)
        assert [pert.has_rank_complex(B, i) for i in range(3)] == [True, False, True]

    def test_real_diagonal_has_no_rank(self):
        M = np.diag([0.2, 0.5, 2.0, 5.0])
        assert all(not pert.has_rank_complex(M, i) for i in range(3))

    def test_rank_out_of_range(self):
        with pytest.raises(ValueError, match="rank index"):
            pert.has_rank_complex(np.eye(4), 3)


class TestDiagonalize:
    def test_distinct_diagonal_unchanged(self):
        orbit = one_letter_orbit(np.diag([0.2, 0.5, 2.0, 5.0]))
        d = pert.diagonalize(orbit, 0.1)
        assert d.distance == 0.0
        assert d.orbit is orbit

    def test_identity_splits_into_paired_dilations(self):
        d = pert.diagonalize(one_letter_orbit(np.eye(4)), 0.1)
        assert d.distance <= 0.1
        vals = d.values
        assert vals.shape == (4,)
        assert np.all(vals > 0)
        assert np.all(np.diff(vals) > 0)
        np.testing.assert_allclose(np.abs(vals - 1.0).max(), 0.0, atol=0.12)
        np.testing.assert_allclose(vals * vals[::-1], np.ones(4), rtol=1e-9)

    def test_rotation_under_tight_budget_reports_gap(self):
        with pytest.raises(pert.DiagonalizeError) as info:
            pert.diagonalize(one_letter_orbit(pert.rotation2(0.3)), 0.01)
        assert info.value.achieved_gap < 1e-5

    def test_rotation_with_room_succeeds(self):
        d = pert.diagonalize(one_letter_orbit(pert.rotation2(0.3)), 1.2)
        assert np.all(d.values > 0)
        assert d.values[0] * d.values[1] == pytest.approx(1.0, rel=1e-9)


class TestIsotopyTrace:
    def test_times_must_increase(self):
        s = pert.IsotopySample(0.5, np.eye(2), np.zeros(4, complex))
        with pytest.raises(ValueError, match="increase"):
            pert.IsotopyTrace((s, s))

    def test_max_jump_over_samples(self):
        a = pert.IsotopySample(0.0, np.eye(2), np.array([1.0, 2.0, 1.0, 0.5], complex))
        b = pert.IsotopySample(1.0, np.eye(2), np.array([1.2, 2.0, 1.0, 0.5], complex))
        assert pert.IsotopyTrace((a, b)).max_jump() == pytest.approx(0.2)


class TestCollapse:
    def setup_method(self):
        self.s2 = standard_form(1)
        self.s4 = standard_form(2)
        self.s6 = standard_form(3)

    def test_already_complex_short_circuits(self):
        r = pert.collapse_and_complexify(
            self.s2, one_letter_orbit(pert.rotation2(0.3)), 0, 0, 0, 0.5
        )
        assert isinstance(r, pert.CollapseResult)
        assert r.kind == "already-complex"
        assert r.distance == 0.0
        assert r.t_event == 0.0

    def test_dominated_window_is_obstructed(self):
        r = pert.collapse_and_complexify(
            self.s2, one_letter_orbit(np.diag([10.0, 0.1])), 0, 0, 0, 0.01
        )
        assert isinstance(r, pert.CollapseObstructed)
        assert r.ell == 1
        assert isinstance(r.certificate, DominationCertificate)

    def test_dim2_pair_meets_at_one_and_turns(self):
        orbit = one_letter_orbit(np.diag([1.2, 1 / 1.2]))
        r = pert.collapse_and_complexify(self.s2, orbit, 0, 0, 0, 0.35)
        assert isinstance(r, pert.CollapseResult)
        assert r.kind == "complex"
        w = np.linalg.eigvals(r.matrix)
        assert abs(w[0].imag) > 1e-9
        np.testing.assert_allclose(np.abs(w), [1.0, 1.0], atol=1e-9)
        assert r.distance <= 0.35
        assert is_symplectic(self.s2, r.orbit.letters[-1].matrix, tol=1e-8)

    def test_dim4_branch_meets_own_reciprocal(self):
        orbit = one_letter_orbit(np.diag([0.6, 0.9, 1 / 0.9, 1 / 0.6]))
        r = pert.collapse_and_complexify(self.s4, orbit, 1, 0, 1, 0.8)
        assert isinstance(r, pert.CollapseResult)
        assert r.kind == "pair-rotation"
        assert pert.has_rank_complex(r.matrix, 1)
        mods = np.sort(np.abs(np.linalg.eigvals(r.matrix)))
        np.testing.assert_allclose(mods[1:3], [1.0, 1.0], atol=1e-8)
        assert mods[0] == pytest.approx(2.0 / 3.0, rel=1e-6)
        assert mods[3] == pytest.approx(1.5, rel=1e-6)
        assert is_symplectic(self.s4, r.orbit.letters[-1].matrix, tol=1e-8)
        paired_spectrum(self.s4, r.matrix)

    def test_dim6_branch_meets_fixed_eigenvalue(self):
        vals = [0.5, 0.7, 0.9, 1 / 0.9, 1 / 0.7, 2.0]
        orbit = one_letter_orbit(np.diag(vals))
        r = pert.collapse_and_complexify(self.s6, orbit, 1, 0, 1, 0.8)
        assert isinstance(r, pert.CollapseResult)
        assert r.kind == "cross-rotation"
        assert pert.has_rank_complex(r.matrix, 1)
        mods = np.sort(np.abs(np.linalg.eigvals(r.matrix)))
        np.testing.assert_allclose(mods[1:3], [0.7, 0.7], atol=1e-8)
        np.testing.assert_allclose(mods[3:5], [1 / 0.7, 1 / 0.7], atol=1e-8)
        assert is_symplectic(self.s6, r.orbit.letters[-1].matrix, tol=1e-8)
        paired_spectrum(self.s6, r.matrix)

    def test_crossing_time_stable_under_refinement(self):
        orbit = one_letter_orbit(np.diag([0.6, 0.9, 1 / 0.9, 1 / 0.6]))
        r400 = pert.collapse_and_complexify(self.s4, orbit, 1, 0, 1, 0.8, steps=400)
        r800 = pert.collapse_and_complexify(self.s4, orbit, 1, 0, 1, 0.8, steps=800)
        assert abs(r400.t_event - r800.t_event) < 1.0 / 400.0

    def test_sample_event_time_converges_under_halving(self):
        orbit = one_letter_orbit(np.diag([1.2, 1 / 1.2]))
        c500 = pert.collapse_and_complexify(self.s2, orbit, 0, 0, 0, 0.35, steps=500)
        c1000 = pert.collapse_and_complexify(self.s2, orbit, 0, 0, 0, 0.35, steps=1000)
        assert abs(c500.t_event - c1000.t_event) < 1.0 / 500.0

    def test_refinement_halves_max_jump(self):
        orbit = one_letter_orbit(np.diag([0.6, 0.9, 1 / 0.9, 1 / 0.6]))
        r400 = pert.collapse_and_complexify(self.s4, orbit, 1, 0, 1, 0.8, steps=400)
        r800 = pert.collapse_and_complexify(self.s4, orbit, 1, 0, 1, 0.8, steps=800)
        ratio = r800.trace.max_jump() / r400.trace.max_jump()
        assert 0.35 <= ratio <= 0.65

    def test_bad_window_rejected(self):
        orbit = one_letter_orbit(np.diag([0.6, 0.9, 1 / 0.9, 1 / 0.6]))
        with pytest.raises(ValueError, match="window"):
            pert.collapse_and_complexify(self.s4, orbit, 1, 2, 1, 0.5)
