import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gendyne import DomainError, NumericalError
from gendyne import fock
from gendyne import gaussian as gc
from gendyne import scheme

angles = st.floats(-math.pi, math.pi)
small = st.floats(-1.5, 1.5)


def test_vacuum_saturates_uncertainty():
    v = gc.vacuum(1)
    assert v.is_physical()
    assert abs(v.min_uncertainty_eigenvalue()) < 1e-12
    assert v.purity() == pytest.approx(1.0)


def test_sub_vacuum_covariance_is_unphysical():
    assert not gc.GaussianState([0, 0], 0.5 * np.eye(2)).is_physical()


def test_thermal_examples():
    assert np.allclose(gc.make_thermal(0).cov, np.eye(2))
    assert np.allclose(gc.make_thermal(1).cov, 3 * np.eye(2))
    assert np.allclose(gc.make_thermal(0.5).cov, 2 * np.eye(2))
    with pytest.raises(DomainError):
        gc.make_thermal(-0.1)


def test_state_validation():
    with pytest.raises(DomainError):
        gc.GaussianState([0, 0, 0], np.eye(3))
    with pytest.raises(DomainError):
        gc.GaussianState([0, 0], [[1, 0.5], [0, 1]])


def test_two_mode_squeezed_blocks():
    assert np.allclose(gc.make_two_mode_squeezed(0).cov, np.eye(4))
    cov = gc.make_two_mode_squeezed(1).cov
    # cosh 2 and sinh 2, frozen from mpmath at 30 digits
    ch, sh = 3.7621956910836314, 3.626860407847019
    expected = np.array([[ch, 0, sh, 0], [0, ch, 0, -sh], [sh, 0, ch, 0], [0, -sh, 0, ch]])
    assert np.allclose(cov, expected, rtol=1e-15, atol=0)


def test_two_mode_squeezed_large_s_against_mpmath():
    cov = gc.make_two_mode_squeezed(10).cov
    with mp.workdps(40):
        ch, sh = mp.cosh(20), mp.sinh(20)
        assert abs(cov[0, 0] - float(ch)) <= 1e-15 * float(ch)
        assert abs(cov[0, 2] - float(sh)) <= 1e-15 * float(sh)
        m = mp.matrix([[ch, 0, sh, 0], [0, ch, 0, -sh], [sh, 0, ch, 0], [0, -sh, 0, ch]])
        om = mp.matrix([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]])
        ev = mp.eig(mp.mpc(0, 1) * om * m)[0]
        nus = sorted(abs(e) for e in ev)
    assert all(abs(float(n) - 1) < 1e-20 for n in nus)


@pytest.mark.parametrize("s", [0.0, 1.0, 3.0, 5.0])
def test_two_mode_squeezed_is_pure(s):
    nu = gc.symplectic_eigenvalues(gc.make_two_mode_squeezed(s).cov)
    assert np.allclose(nu, 1.0, atol=1e-7)


@pytest.mark.parametrize("phi,expected", [
    (0.0, np.eye(4)),
    (math.pi / 2, np.block([[np.zeros((2, 2)), -np.eye(2)], [np.eye(2), np.zeros((2, 2))]])),
])
def test_beam_splitter_examples(phi, expected):
    assert np.allclose(gc.beam_splitter(phi).matrix, expected, atol=1e-15)


def test_balanced_beam_splitter_keeps_vacuum():
    out = gc.apply(gc.beam_splitter(math.pi / 4), gc.vacuum(2))
    assert np.allclose(out.cov, np.eye(4))
    assert np.allclose(out.mean, 0)


def test_beam_splitter_on_two_mode_squeezed_vacuum():
    # blocks expanded by hand: A = ch I - sin2p sh Z, B = ch I + sin2p sh Z, C = cos2p sh Z
    s, p = 1.0, math.pi / 8
    ch, sh = math.cosh(2 * s), math.sinh(2 * s)
    z = np.diag([1.0, -1.0])
    out = gc.apply(gc.beam_splitter(p), gc.make_two_mode_squeezed(s)).cov
    assert np.allclose(out[:2, :2], ch * np.eye(2) - math.sin(2 * p) * sh * z)
    assert np.allclose(out[2:, 2:], ch * np.eye(2) + math.sin(2 * p) * sh * z)
    assert np.allclose(out[:2, 2:], math.cos(2 * p) * sh * z)


def test_apply_mode_mismatch():
    with pytest.raises(DomainError):
        gc.apply(gc.beam_splitter(0.3), gc.vacuum(1))


def test_beam_splitter_matches_fock_transform():
    dim = 20
    alpha = 0.7 - 0.3j
    psi = np.kron(fock.coherent_vector(alpha, dim), fock.basis(0, dim))
    phi = 0.4
    out = fock.beam_splitter_unitary(phi, dim).conj().T @ psi
    a, v = fock.two_mode_ops(dim)
    g = gc.apply(gc.beam_splitter(phi), gc.tensor(gc.coherent(alpha), gc.vacuum(1)))
    assert np.vdot(out, a @ out) == pytest.approx(g.mean[0] / 2 + 1j * g.mean[1] / 2, abs=1e-10)
    assert np.vdot(out, v @ out) == pytest.approx(g.mean[2] / 2 + 1j * g.mean[3] / 2, abs=1e-10)


def test_condition_product_state_leaves_kept_mode():
    a = gc.GaussianState([0.3, -1.0], [[2.0, 0.4], [0.4, 1.5]])
    out = gc.condition_on_vacuum_projection(gc.tensor(a, gc.make_thermal(2)))
    assert np.allclose(out.mean, a.mean)
    assert np.allclose(out.cov, a.cov)


def test_condition_errors():
    with pytest.raises(DomainError):
        gc.condition_on_vacuum_projection(gc.vacuum(1))
    with pytest.raises(DomainError):
        gc.condition_on_vacuum_projection(gc.vacuum(2), projected_mode=2)
    cov = np.eye(4)
    cov[2:, 2:] = -np.eye(2)
    with pytest.raises(NumericalError):
        gc.condition_on_vacuum_projection(gc.GaussianState(np.zeros(4), cov))


@pytest.mark.parametrize("s", [0.5, 1.0])
@pytest.mark.parametrize("projected", [0, 1])
def test_conditioning_matches_fock_projection(s, projected):
    dim = 40
    z, phi = 0.3 + 0.2j, 0.35
    g = gc.make_two_mode_squeezed(s)
    g = gc.apply(gc.displacement_map(z, 2, 0), g)
    g = gc.apply(gc.beam_splitter(phi), g)
    g_out = gc.condition_on_vacuum_projection(g, projected_mode=projected)

    psi = fock.two_mode_squeezed_vector(s, dim)
    psi = np.kron(fock.displacement(z, dim), np.eye(dim)) @ psi
    psi = fock.beam_splitter_unitary(phi, dim).conj().T @ psi
    ket = fock.project_mode_on_vacuum(psi, dim, projected)
    assert fock.trace_distance(ket, fock.gaussian_density(g_out, dim)) < 1e-4


def test_balanced_pipeline_gives_vacuum_covariance():
    out = scheme.conditioned_state_finite(0.0, 0.5, 10.0)
    assert np.allclose(out.cov, np.eye(2), atol=1e-6)


def test_unbalanced_pipeline_float_and_extended_precision():
    limit = np.diag([1 / 3, 3.0])
    flt = scheme.conditioned_state_finite(0.0, 0.75, 10.0)
    assert np.max(np.abs(flt.cov - limit)) < 1e-6
    ext = scheme.conditioned_state_finite(0.0, 0.75, 12.0, dps=40)
    assert np.max(np.abs(ext.cov - limit)) < 1e-6


def test_overlap_of_coherent_states():
    a, b = 0.5 + 0.1j, -0.2 + 0.4j
    expected = math.exp(-abs(a - b) ** 2)
    assert gc.overlap(gc.coherent(a), gc.coherent(b)) == pytest.approx(expected, rel=1e-12)


def test_sampling_moments(rng):
    x = gc.sample_quadratures(gc.make_thermal(1), ["q", "p"], rng, size=100_000)
    se = math.sqrt(2 / len(x)) * 3
    var = x.var(axis=0, ddof=1)
    assert np.all(np.abs(var - 3) < 3 * se)
    with pytest.raises(DomainError):
        gc.sample_gaussian_outcome(gc.vacuum(1), "x", rng)


def test_sampling_is_deterministic():
    st_ = gc.make_thermal(0.5)
    a = gc.sample_quadratures(st_, ["q", "p"], np.random.default_rng(3), size=10)
    b = gc.sample_quadratures(st_, ["q", "p"], np.random.default_rng(3), size=10)
    assert np.array_equal(a, b)


def _gaussian_unitary(phi, r, chi, s, z):
    one = gc.squeezing_map(r).then(gc.phase_rotation(chi)).then(gc.displacement_map(z))
    two = gc.SymplecticMap(np.kron(np.eye(2), np.eye(2)), np.zeros(4))
    two = two.then(gc.two_mode_squeezing_map(s)).then(gc.beam_splitter(phi))
    big = np.eye(4)
    big[:2, :2] = one.matrix
    return gc.SymplecticMap(big, np.r_[one.displacement, 0, 0]).then(two)


@given(angles, small, angles, st.floats(0, 1.2), small, small)
def test_maps_are_symplectic_and_preserve_physicality(phi, r, chi, s, zr, zi):
    m = _gaussian_unitary(phi, r, chi, s, complex(zr, zi))
    assert m.is_symplectic(1e-9)
    out = gc.apply(m, gc.tensor(gc.make_thermal(0.3), gc.vacuum(1)))
    assert out.is_physical()


@given(angles, small, angles, st.floats(0, 1.2), small, small, st.sampled_from([0, 1]))
def test_conditioning_pure_state_stays_pure(phi, r, chi, s, zr, zi, mode):
    m = _gaussian_unitary(phi, r, chi, s, complex(zr, zi))
    out = gc.condition_on_vacuum_projection(gc.apply(m, gc.vacuum(2)), mode)
    assert np.linalg.det(out.cov) == pytest.approx(1.0, abs=1e-8)
    assert out.is_physical()


@given(angles, st.floats(0, 1.5))
def test_symplectic_spectrum_invariant_under_beam_splitter(phi, n):
    st_ = gc.tensor(gc.make_thermal(n), gc.vacuum(1))
    out = gc.apply(gc.beam_splitter(phi), st_)
    assert np.allclose(gc.symplectic_eigenvalues(out.cov), [1.0, 2 * n + 1], rtol=1e-9)
