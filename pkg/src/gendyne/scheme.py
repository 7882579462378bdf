"""Unbalanced double homodyne: beam splitter plus two quadrature detectors.

The signal mode ``a`` meets a vacuum mode ``v`` on a beam splitter of
transmissivity ``T = cos(phi)**2``; detectors then read ``q`` of the
transmitted arm and ``p`` of the reflected arm, which commute.  Choosing
``T = (1 + U)/2`` and rescaling the outcomes realises the general-dyne
measurement of ``a + U a^dag``.

Conventions (fixed by the eigen-equation on the Fock oracle):

* ``S(r) = exp((r/2)(a^2 - a^dag^2))``, so ``S^dag a S = a cosh r - a^dag sinh r``;
* the eigenstate for raw outcome ``z`` is ``D(beta) S(r) |0>`` with
  ``beta = z1/sqrt(2T) + i z2/sqrt(2(1-T))`` and ``r = log(T/(1-T))/2``,
  i.e. ``tanh r = U``;
* its eigenvalue is ``beta + U beta* = z1 sqrt(1+U) + i z2 sqrt(1-U)``.

Raw outcomes ``z`` are in units where the vacuum quadrature variance is
``1/2``; sampled detector readings (vacuum variance 1) are rescaled by
``sqrt((1 +- U)/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fock
from . import gaussian as gc
from .errors import DomainError, HomodyneLimitError, NumericalError
from .povm import GendyneOutcome, povm_element, projected_eigen_residual

CROSSCHECK_SQUEEZINGS = (2.0, 4.0, 8.0, 12.0)
CROSSCHECK_DPS = 40
CONVERGENCE_TOL = 1e-6
OVERLAP_TOL = 1e-5


def transmissivity_for(upsilon: float) -> float:
    if not -1.0 <= upsilon <= 1.0:
        raise DomainError(f"upsilon must lie in [-1, 1], got {upsilon}")
    return (1.0 + upsilon) / 2.0


def beam_splitter_angle(t: float) -> float:
    """``phi`` with ``cos(phi)**2 = T``."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"transmissivity must lie in [0, 1], got {t}")
    return math.acos(math.sqrt(t))


def _check_open(t: float) -> None:
    if not 0.0 < t < 1.0:
        raise HomodyneLimitError(
            f"T={t}: one detector arm carries no signal; use the homodyne branch")


@dataclass(frozen=True)
class SchemeEigenstate:
    """Displaced squeezed vacuum ``D(beta) S(r)|0>`` selected by raw outcome ``z``."""

    beta: complex
    r: float
    upsilon: float
    z: complex

    @property
    def theta(self) -> complex:
        return self.beta + self.upsilon * np.conj(self.beta)

    def gaussian_state(self) -> gc.GaussianState:
        mean = [2 * self.beta.real, 2 * self.beta.imag]
        return gc.GaussianState(mean, np.diag([math.exp(-2 * self.r), math.exp(2 * self.r)]))

    def vector(self, dim: int = fock.DEFAULT_DIM) -> np.ndarray:
        """Fock amplitudes of the first ``dim`` levels (built on a padded space)."""
        big = min(fock.MAX_DIM, 2 * dim + 20)
        vac = fock.basis(0, big)
        vec = fock.displacement(self.beta, big) @ (fock.squeeze(self.r, big) @ vac)
        return vec[:dim]

    def eigen_residual(self, dim: int = fock.DEFAULT_DIM) -> float:
        """``||(Theta - theta) psi|| / ||psi||`` on the first ``dim`` levels."""
        return projected_eigen_residual(self.vector(dim + 1), self.upsilon, self.theta, dim)


def eigenstate_params(z: complex, t: float) -> SchemeEigenstate:
    _check_open(t)
    z = complex(z)
    beta = z.real / math.sqrt(2 * t) + 1j * z.imag / math.sqrt(2 * (1 - t))
    r = 0.5 * math.log(t / (1 - t))
    return SchemeEigenstate(beta, r, 2 * t - 1, z)


def eigenstate_for_theta(theta: complex, upsilon: float) -> SchemeEigenstate:
    """Eigenstate labelled by its eigenvalue rather than by the raw outcome."""
    t = transmissivity_for(upsilon)
    _check_open(t)
    theta = complex(theta)
    z = theta.real / math.sqrt(1 + upsilon) + 1j * theta.imag / math.sqrt(1 - upsilon)
    return eigenstate_params(z, t)


def squeezing_coefficients(r: float) -> tuple[float, float]:
    """``(mu, nu)`` with ``S(r)^dag a S(r) = mu a + nu a^dag``."""
    return math.cosh(r), -math.sinh(r)


def conditioned_state_limit(z: complex, t: float) -> gc.GaussianState:
    """State of ``a`` after a vacuum-projected ancilla in the perfect-correlation limit."""
    _check_open(t)
    z = complex(z)
    mean = [math.sqrt(2) * z.real / math.sqrt(t), math.sqrt(2) * z.imag / math.sqrt(1 - t)]
    return gc.GaussianState(mean, np.diag([(1 - t) / t, t / (1 - t)]))


def conditioned_state_finite(z: complex, t: float, s: float,
                             dps: int | None = None) -> gc.GaussianState:
    """Same construction from a two-mode squeezed vacuum of finite squeezing ``s``.

    The resource is displaced by ``z`` on mode ``a``, mixed on a beam splitter
    of angle ``-(phi - pi/4)`` and mode ``v`` is projected on the vacuum.

    In double precision the conditioning cancels entries of size
    ``cosh(2s)``, so for ``s`` beyond about 8 pass ``dps`` (decimal digits)
    to run the same algebra in arbitrary precision.
    """
    _check_open(t)
    z = complex(z)
    if dps is not None:
        return _conditioned_state_mp(z, t, s, dps)
    phi_t = beam_splitter_angle(t) - math.pi / 4
    st = gc.make_two_mode_squeezed(s)
    st = gc.apply(gc.displacement_map(z, 2, 0), st)
    st = gc.apply(gc.beam_splitter(-phi_t), st)
    return gc.condition_on_vacuum_projection(st, projected_mode=1)


def _conditioned_state_mp(z: complex, t: float, s: float, dps: int) -> gc.GaussianState:
    import mpmath as mp

    with mp.workdps(dps):
        t_, s_ = mp.mpf(t), mp.mpf(s)
        ch, sh = mp.cosh(2 * s_), mp.sinh(2 * s_)
        cov = mp.matrix([[ch, 0, sh, 0], [0, ch, 0, -sh], [sh, 0, ch, 0], [0, -sh, 0, ch]])
        mean = mp.matrix([2 * mp.mpf(z.real), 2 * mp.mpf(z.imag), 0, 0])
        ang = -(mp.acos(mp.sqrt(t_)) - mp.pi / 4)
        c, sn = mp.cos(ang), mp.sin(ang)
        bs = mp.matrix([[c, 0, -sn, 0], [0, c, 0, -sn], [sn, 0, c, 0], [0, sn, 0, c]])
        cov = bs * cov * bs.T
        mean = bs * mean
        a = cov[0:2, 0:2]
        b = cov[2:4, 2:4] + mp.eye(2)
        cr = cov[0:2, 2:4]
        gain = cr * mp.inverse(b)
        m_out = mean[0:2, 0] - gain * mean[2:4, 0]
        c_out = a - gain * cr.T
        m_out = [float(m_out[i]) for i in range(2)]
        c_out = [[float(c_out[i, j]) for j in range(2)] for i in range(2)]
    c_out = np.array(c_out)
    return gc.GaussianState(m_out, 0.5 * (c_out + c_out.T))


def sample_detectors(input_state: gc.GaussianState, upsilon: float, rng: np.random.Generator,
                     size=None) -> np.ndarray:
    """Joint samples of ``(q_a', p_v')`` after the beam splitter (vacuum variance 1)."""
    if input_state.n_modes != 1:
        raise DomainError("the scheme takes a single-mode input")
    phi = beam_splitter_angle(transmissivity_for(upsilon))
    out = gc.apply(gc.beam_splitter(phi), gc.tensor(input_state, gc.vacuum(1)))
    return gc.sample_quadratures(out, ["q0", "p1"], rng, size=size)


def scheme_outcome_sample(input_state: gc.GaussianState, upsilon: float,
                          rng: np.random.Generator, size=None):
    """Rescaled general-dyne outcome(s).

    Returns a :class:`GendyneOutcome` when ``size`` is ``None``, otherwise
    an array of shape ``(size, 2)``.  A component whose arm carries no
    signal (``U = +-1``) is ``nan``.
    """
    x = sample_detectors(input_state, upsilon, rng, size)
    scale = np.array([math.sqrt((1 + upsilon) / 2), math.sqrt((1 - upsilon) / 2)])
    theta = x * scale
    if upsilon == 1.0:
        theta[..., 1] = np.nan
    elif upsilon == -1.0:
        theta[..., 0] = np.nan
    if size is None:
        return GendyneOutcome(float(theta[0]), float(theta[1]))
    return theta


def detector_commutator(upsilon: float) -> float:
    """Symplectic product of the Heisenberg images of ``q_a'`` and ``p_v'``."""
    phi = beam_splitter_angle(transmissivity_for(upsilon))
    s = gc.beam_splitter(phi).matrix
    return float(s[0] @ gc.symplectic_form(2) @ s[3])


@dataclass(frozen=True)
class CrossCheck:
    """Overlaps between three constructions of one general-dyne eigenstate.

    ``direct``: ``|<povm|D(beta)S(r)0>|^2``; ``limit``: the analytic conditioned
    state against the POVM vector; ``curve``: finite-``s`` overlaps with the
    POVM vector; ``extrapolated``: the value carried to ``s -> inf``.
    """

    upsilon: float
    theta: complex
    direct: float
    limit: float
    squeezings: tuple
    curve: tuple
    extrapolated: float

    @property
    def worst(self) -> float:
        return min(self.direct, self.limit, self.extrapolated)

    def passed(self, tol: float = OVERLAP_TOL) -> bool:
        return self.worst > 1 - tol


def _extrapolate(s, f):
    """Aitken delta-squared limit of ``f(s) = f_inf - c exp(-k s)``.

    Uses the last three points, which must be equally spaced in ``s``.
    """
    s = np.asarray(s, dtype=float)
    f = np.asarray(f, dtype=float)
    if len(f) < 3 or not np.isclose(s[-1] - s[-2], s[-2] - s[-3]):
        return float(f[-1])
    d1, d2 = f[-2] - f[-3], f[-1] - f[-2]
    denom = d2 - d1
    if denom == 0 or abs(d2) < 1e-15:
        return float(f[-1])
    return float(f[-1] - d2 * d2 / denom)


def scheme_povm_crosscheck(upsilon: float, theta: complex, dim: int = fock.DEFAULT_DIM,
                           squeezings=CROSSCHECK_SQUEEZINGS) -> CrossCheck:
    """Compare the scheme eigenstate with the POVM eigenvector on ``dim`` levels."""
    eig = eigenstate_for_theta(theta, upsilon)
    target = povm_element(theta, upsilon, dim).vector
    target = target / np.linalg.norm(target)

    # only the top-left block of rho enters <target|rho|target>
    work = min(fock.MAX_DIM, dim + 40)

    def against(state: gc.GaussianState) -> float:
        return fock.fidelity(target, fock.gaussian_density(state, work)[:dim, :dim])

    direct = fock.fidelity(target, eig.vector(dim) / np.linalg.norm(eig.vector(dim)))
    t = transmissivity_for(upsilon)
    limit = against(conditioned_state_limit(eig.z, t))
    curve = [against(conditioned_state_finite(eig.z, t, s, dps=CROSSCHECK_DPS))
             for s in squeezings]
    if abs(curve[-1] - curve[-2]) > CONVERGENCE_TOL:
        raise NumericalError(
            f"finite-s overlaps not converged: s={list(squeezings)}, overlap={curve}")
    return CrossCheck(upsilon, complex(theta), direct, limit, tuple(squeezings), tuple(curve),
                      _extrapolate(squeezings, curve))
