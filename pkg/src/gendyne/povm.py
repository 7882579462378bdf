"""General-dyne observable ``Theta = a + Upsilon a^dag``: eigenstates, POVM and outcome laws.

For ``|Upsilon| < 1`` the improper eigenstates of ``Theta`` have the position
wavefunction (``q = a + a^dag`` eigenbasis, ``p -> -2i d/dx``)::

    psi(x) = [(1 + U) / (2 pi (1 - U))]^(1/4)
             * exp(-(sqrt((1 + U) / (2 (1 - U))) x - sqrt(2 / (1 - U^2)) theta_1)^2 / 2
                   + i theta_2 x / (1 - U))

and ``|theta><theta| dtheta_1 dtheta_2 / (pi (1 - U^2))`` resolves the
identity.  Against a thermal bath with ``N`` photons the outcomes are
zero-mean Gaussian with covariance ``diag(L1, L2)``,
``L_{1,2} = (1 +- U)(1 + N (1 +- U)) / 2``.

Fock amplitudes ``<n|theta>`` are obtained by trapezoidal quadrature of
``psi`` against oscillator eigenfunctions; for the smooth, Gaussian-decaying
integrands met here the trapezoid rule converges exponentially, and each
grid is checked against its half-step refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fock
from .errors import DomainError, HomodyneLimitError, NumericalError

HOMODYNE_EPS = 1e-6
AMPLITUDE_TOL = 1e-10

# 8th-order central first-derivative stencil
_FD8 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])


@dataclass(frozen=True)
class Unravelling:
    """General-dyne parameter ``upsilon`` together with the bath photon number."""

    upsilon: float
    n_bath: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.upsilon) or abs(self.upsilon) > 1:
            raise DomainError(f"upsilon must lie in [-1, 1], got {self.upsilon}")
        if not np.isfinite(self.n_bath) or self.n_bath < 0:
            raise DomainError(f"n_bath must be >= 0, got {self.n_bath}")

    @property
    def l1(self) -> float:
        u, n = self.upsilon, self.n_bath
        return (1 + u) * (1 + n * (1 + u)) / 2

    @property
    def l2(self) -> float:
        u, n = self.upsilon, self.n_bath
        return (1 - u) * (1 + n * (1 - u)) / 2

    @property
    def t_upsilon(self) -> float:
        """Beam-splitter transmissivity realising this unravelling."""
        return (1 + self.upsilon) / 2

    @property
    def outcome_cov(self) -> np.ndarray:
        return np.diag([self.l1, self.l2])

    @property
    def degenerate_axis(self):
        """Index of the unused outcome component at ``upsilon = +-1``, else ``None``."""
        if self.upsilon >= 1 - HOMODYNE_EPS:
            return 1
        if self.upsilon <= -1 + HOMODYNE_EPS:
            return 0
        return None


@dataclass(frozen=True)
class GendyneOutcome:
    """Outcome ``theta = theta1 + i theta2``; ``nan`` marks a degenerate component."""

    theta1: float
    theta2: float

    @property
    def theta(self) -> complex:
        return complex(np.nan_to_num(self.theta1), np.nan_to_num(self.theta2))

    @property
    def degenerate(self) -> tuple[bool, bool]:
        return (bool(np.isnan(self.theta1)), bool(np.isnan(self.theta2)))

    @classmethod
    def from_complex(cls, theta: complex) -> "GendyneOutcome":
        return cls(float(np.real(theta)), float(np.imag(theta)))


def _as_complex(theta) -> complex:
    return theta.theta if isinstance(theta, GendyneOutcome) else complex(theta)


def _check_upsilon(upsilon: float) -> float:
    if not np.isfinite(upsilon) or abs(upsilon) > 1:
        raise DomainError(f"upsilon must lie in [-1, 1], got {upsilon}")
    if abs(upsilon) > 1 - HOMODYNE_EPS:
        raise HomodyneLimitError(
            f"|upsilon| = {abs(upsilon)} is within {HOMODYNE_EPS} of 1; use the homodyne branch"
        )
    return float(upsilon)


def povm_weight(upsilon: float) -> float:
    """Density of the outcome measure, ``1 / (pi (1 - upsilon^2))``."""
    u = _check_upsilon(upsilon)
    return 1.0 / (math.pi * (1 - u * u))


def eigen_wavefunction(x, theta, upsilon: float):
    """Position wavefunction ``<x|theta>`` of the ``Theta`` eigenstate (L2-normalised)."""
    u = _check_upsilon(upsilon)
    th = _as_complex(theta)
    x = np.asarray(x, dtype=float)
    pref = ((1 + u) / (2 * math.pi * (1 - u))) ** 0.25
    a = math.sqrt((1 + u) / (2 * (1 - u)))
    b = math.sqrt(2 / (1 - u * u))
    return pref * np.exp(-0.5 * (a * x - b * th.real) ** 2 + 1j * th.imag * x / (1 - u))


def ode_residual(theta, upsilon: float, x=None) -> float:
    """Max residual of ``[(1+U) x + 2 (1-U) d/dx] psi / 2 = theta psi`` on a grid.

    The derivative uses an 8th-order central stencil; the four points at each
    end of the grid are excluded.
    """
    u = _check_upsilon(upsilon)
    th = _as_complex(theta)
    x = np.linspace(-10, 10, 2000) if x is None else np.asarray(x, dtype=float)
    h = x[1] - x[0]
    psi = eigen_wavefunction(x, th, u)
    dpsi = np.convolve(psi, _FD8[::-1], mode="valid") / h
    xi, psii = x[4:-4], psi[4:-4]
    lhs = 0.5 * ((1 + u) * xi * psii + 2 * (1 - u) * dpsi)
    return float(np.max(np.abs(lhs - th * psii)))


def oscillator_eigenfunctions(x, dim: int) -> np.ndarray:
    """``<x|n>`` for ``n < dim`` in the ``q = a + a^dag`` convention, shape ``(dim, len(x))``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((dim,) + x.shape)
    out[0] = (2 * math.pi) ** -0.25 * np.exp(-x * x / 4)
    if dim > 1:
        out[1] = x * out[0]
    for n in range(1, dim - 1):
        out[n + 1] = (x * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


def _x_grid(upsilon: float, dim: int, theta1, theta2, refine: int = 1):
    u = upsilon
    var = (1 - u) / (1 + u)
    sd = math.sqrt(var)
    centre = 2 * np.asarray(theta1, dtype=float) / (1 + u)
    x_osc = 2 * math.sqrt(dim) + 12
    lo = max(-x_osc, float(np.min(centre)) - 14 * sd)
    hi = min(x_osc, float(np.max(centre)) + 14 * sd)
    if hi <= lo:
        lo, hi = -x_osc, x_osc
    k_max = (math.sqrt(dim) + 8 + float(np.max(np.abs(theta2), initial=0.0)) / (1 - u)
             + 10 / math.sqrt(2 * var))
    h = 0.9 * math.pi / k_max / refine
    n = int(math.ceil((hi - lo) / h)) + 1
    return np.linspace(lo, hi, n)


def _amplitudes_on(x, theta1, theta2, upsilon, dim):
    """Amplitudes for paired arrays ``theta1``, ``theta2``; shape ``(dim, npts)``."""
    u = upsilon
    h = x[1] - x[0]
    phi = oscillator_eigenfunctions(x, dim)
    pref = ((1 + u) / (2 * math.pi * (1 - u))) ** 0.25
    a = math.sqrt((1 + u) / (2 * (1 - u)))
    b = math.sqrt(2 / (1 - u * u))
    t1 = np.asarray(theta1, dtype=float).reshape(-1)
    t2 = np.asarray(theta2, dtype=float).reshape(-1)
    out = np.empty((dim, t1.size), dtype=complex)
    chunk = max(1, int(4e6 // max(x.size, 1)))
    for i in range(0, t1.size, chunk):
        sl = slice(i, i + chunk)
        psi = pref * np.exp(-0.5 * (a * x[:, None] - b * t1[None, sl]) ** 2
                            + 1j * x[:, None] * t2[None, sl] / (1 - u))
        out[:, sl] = h * (phi @ psi)
    return out


def fock_amplitudes(theta1, theta2, upsilon: float, dim: int, tol: float = AMPLITUDE_TOL):
    """Fock amplitudes ``<n|theta>`` for paired outcome arrays, shape ``(dim, npts)``.

    The quadrature is repeated on a grid with half the step; disagreement
    above ``tol`` raises :class:`NumericalError`.
    """
    u = _check_upsilon(upsilon)
    t1 = np.atleast_1d(np.asarray(theta1, dtype=float))
    t2 = np.atleast_1d(np.asarray(theta2, dtype=float))
    t1, t2 = np.broadcast_arrays(t1, t2)
    x = _x_grid(u, dim, t1, t2)
    amp = _amplitudes_on(x, t1, t2, u, dim)
    # refinement check on the most demanding outcome
    j = int(np.argmax(np.abs(t1) + np.abs(t2)))
    xf = _x_grid(u, dim, t1, t2, refine=2)
    fine = _amplitudes_on(xf, t1.reshape(-1)[j:j + 1], t2.reshape(-1)[j:j + 1], u, dim)
    err = float(np.max(np.abs(fine[:, 0] - amp[:, j])))
    if err > tol:
        raise NumericalError(f"Fock amplitude quadrature did not converge (change {err:.2e})")
    return amp.reshape((dim,) + t1.shape)


@dataclass(frozen=True)
class PovmElement:
    """Truncated eigenvector ``<n|theta>`` and the outcome-measure density.

    ``next_amplitude`` is ``<dim|theta>``, the first amplitude beyond the
    truncation; it lets :meth:`eigen_residual` test the eigen-equation on every
    retained level without a truncation artefact in the last row.
    """

    vector: np.ndarray
    weight: float
    upsilon: float
    theta: complex
    next_amplitude: complex = 0.0

    @property
    def operator(self) -> np.ndarray:
        """``weight * |theta><theta|`` on the truncated space."""
        return self.weight * fock.projector(self.vector)

    @property
    def tail(self) -> float:
        """Squared norm lost to the truncation."""
        return 1.0 - float(np.sum(np.abs(self.vector) ** 2))

    def eigen_residual(self) -> float:
        """``||P (a + U a^dag - theta)|theta>|| / ||P |theta>||``, ``P`` the projector on ``n < dim``."""
        return projected_eigen_residual(
            np.append(self.vector, self.next_amplitude), self.upsilon, self.theta)


def projected_eigen_residual(vec: np.ndarray, upsilon: float, theta: complex,
                             dim: int | None = None) -> float:
    """Eigen-equation residual of ``Theta`` restricted to the first ``dim`` levels.

    ``vec`` must hold at least ``dim + 1`` accurate amplitudes; ``dim``
    defaults to ``len(vec) - 1``.
    """
    vec = np.asarray(vec, dtype=complex)
    dim = vec.size - 1 if dim is None else dim
    if vec.size < dim + 1:
        raise DomainError("need one amplitude beyond the tested levels")
    n = np.arange(dim)
    res = np.sqrt(n + 1) * vec[1:dim + 1] - complex(theta) * vec[:dim]
    res[1:] += upsilon * np.sqrt(n[1:]) * vec[:dim - 1]
    return float(np.linalg.norm(res) / np.linalg.norm(vec[:dim]))


def povm_element(theta, upsilon: float, dim: int = fock.DEFAULT_DIM) -> PovmElement:
    """POVM element for outcome ``theta``; the eigenvector is not renormalised after truncation."""
    th = _as_complex(theta)
    vec = fock_amplitudes(th.real, th.imag, upsilon, dim + 1)[:, 0]
    return PovmElement(vec[:dim], povm_weight(upsilon), float(upsilon), th, complex(vec[dim]))


def default_outcome_box(upsilon: float, dim: int):
    """Half-widths of an outcome grid that captures every state supported on ``n < dim``."""
    u = upsilon
    noise = math.sqrt((1 - u * u) / 4)
    q_max = 2 * math.sqrt(dim) + 6
    return ((1 + u) / 2 * q_max + 8 * noise, (1 - u) / 2 * q_max + 8 * noise)


def _grid(half, step):
    n = 2 * int(math.ceil(half / step)) + 1
    return np.linspace(-half, half, n)


def completeness(upsilon: float, dim: int, half_widths=None, step: float | None = None):
    """``sum_grid weight |theta><theta| dtheta_1 dtheta_2`` on ``dim`` levels.

    ``half_widths`` defaults to :func:`default_outcome_box`; the step defaults
    to a fifth of the smallest outcome-noise standard deviation.
    """
    u = _check_upsilon(upsilon)
    w1, w2 = default_outcome_box(u, dim) if half_widths is None else half_widths
    if step is None:
        step = min(0.25, math.sqrt((1 - u * u) / 4) / 2)
    g1, g2 = _grid(w1, step), _grid(w2, step)
    d1, d2 = g1[1] - g1[0], g2[1] - g2[0]
    t1, t2 = np.meshgrid(g1, g2, indexing="ij")
    amp = fock_amplitudes(t1.ravel(), t2.ravel(), u, dim)
    return povm_weight(u) * d1 * d2 * (amp @ amp.conj().T)


def outcome_distribution(rho: np.ndarray, upsilon: float):
    """Return ``p(theta1, theta2) = weight * <theta|rho|theta>`` as a vectorised callable."""
    u = _check_upsilon(upsilon)
    rho = np.asarray(rho)
    dim = rho.shape[0]
    w = povm_weight(u)

    def p(theta1, theta2):
        t1, t2 = np.broadcast_arrays(np.asarray(theta1, float), np.asarray(theta2, float))
        amp = fock_amplitudes(t1.ravel(), t2.ravel(), u, dim)
        val = w * np.real(np.einsum("in,ij,jn->n", amp.conj(), rho, amp))
        return val.reshape(t1.shape) if t1.ndim else float(val[0])

    return p


def predicted_outcome_moments(rho: np.ndarray, upsilon: float):
    """Outcome mean and covariance from the quadrature moments of ``rho``.

    The outcome equals ``((1+U) q / 2, (1-U) p / 2)`` plus independent
    Gaussian noise of variance ``(1 - U^2) / 4`` per component.
    """
    u = float(upsilon)
    mean, cov = fock.quadrature_moments(rho)
    scale = np.diag([(1 + u) / 2, (1 - u) / 2])
    return scale @ mean, scale @ cov @ scale + (1 - u * u) / 4 * np.eye(2)


def outcome_moments(rho: np.ndarray, upsilon: float, n_sd: float = 10.0, step: float | None = None):
    """Mean and covariance of ``theta`` by 2-D quadrature of :func:`outcome_distribution`.

    Returns ``(mean, cov, norm)`` where ``norm`` is the integrated probability.
    """
    u = _check_upsilon(upsilon)
    mu, cov = predicted_outcome_moments(rho, u)
    sd = np.sqrt(np.diag(cov))
    noise = math.sqrt((1 - u * u) / 4)
    if step is None:
        step = noise / 2
    g1 = mu[0] + _grid(n_sd * sd[0], step)
    g2 = mu[1] + _grid(n_sd * sd[1], step)
    d1, d2 = g1[1] - g1[0], g2[1] - g2[0]
    t1, t2 = np.meshgrid(g1, g2, indexing="ij")
    p = outcome_distribution(rho, u)(t1, t2)
    norm = float(p.sum() * d1 * d2)
    m1 = float((p * t1).sum() * d1 * d2) / norm
    m2 = float((p * t2).sum() * d1 * d2) / norm
    c11 = float((p * (t1 - m1) ** 2).sum() * d1 * d2) / norm
    c22 = float((p * (t2 - m2) ** 2).sum() * d1 * d2) / norm
    c12 = float((p * (t1 - m1) * (t2 - m2)).sum() * d1 * d2) / norm
    return np.array([m1, m2]), np.array([[c11, c12], [c12, c22]]), norm


def quadrature_density(rho: np.ndarray, x, quadrature: str = "q"):
    """Probability density of ``q`` (or ``p``) outcomes for ``rho`` at points ``x``."""
    rho = np.asarray(rho)
    dim = rho.shape[0]
    if quadrature == "p":
        # exp(-i pi n / 2) maps p onto q
        ph = np.exp(-0.5j * math.pi * np.arange(dim))
        rho = ph[:, None] * rho * ph[None, :].conj()
    elif quadrature != "q":
        raise DomainError(f"quadrature must be 'q' or 'p', got {quadrature!r}")
    phi = oscillator_eigenfunctions(x, dim)
    return np.real(np.einsum("mx,mn,nx->x", phi, rho, phi))


def outcome_marginal_moments(rho: np.ndarray, upsilon: float, axis: int = 0):
    """Mean and variance of one outcome component, by 1-D quadrature.

    Integrating the POVM over the other component leaves the quadrature
    density (``q`` for ``axis=0``, ``p`` for ``axis=1``), scaled by
    ``(1 +- U)/2``, convolved with Gaussian noise of variance ``(1 - U^2)/4``.
    Valid for every ``|U| <= 1``, including the homodyne limits.
    """
    u = float(upsilon)
    if abs(u) > 1:
        raise DomainError(f"upsilon must lie in [-1, 1], got {u}")
    dim = np.asarray(rho).shape[0]
    x_max = 2 * math.sqrt(dim) + 14
    x = np.linspace(-x_max, x_max, int(40 * x_max) + 1)
    dens = quadrature_density(rho, x, "q" if axis == 0 else "p")
    h = x[1] - x[0]
    scale = (1 + u) / 2 if axis == 0 else (1 - u) / 2
    norm = h * dens.sum()
    m = h * (dens * scale * x).sum() / norm
    var = h * (dens * (scale * x - m) ** 2).sum() / norm + (1 - u * u) / 4
    return float(m), float(var)


@dataclass(frozen=True)
class HomodyneLaw:
    """Outcome law at ``upsilon = 1``: a Gaussian in ``theta1`` times ``delta(theta2)``."""

    variance: float
    degenerate_axis: int = 1

    def pdf(self, theta1):
        t = np.asarray(theta1, dtype=float)
        return np.exp(-t * t / (2 * self.variance)) / np.sqrt(2 * math.pi * self.variance)


def homodyne_limit_distribution(n_bath: float) -> HomodyneLaw:
    """Thermal ``q``-quadrature law, variance ``1 + 2N``."""
    if not np.isfinite(n_bath) or n_bath < 0:
        raise DomainError(f"n_bath must be >= 0, got {n_bath}")
    return HomodyneLaw(1.0 + 2.0 * n_bath)


def thermal_outcome_pdf(theta1, theta2, upsilon: float, n_bath: float):
    """Closed-form thermal outcome density: zero-mean Gaussian, covariance ``diag(L1, L2)``."""
    un = Unravelling(upsilon, n_bath)
    t1, t2 = np.asarray(theta1, float), np.asarray(theta2, float)
    return (np.exp(-t1 ** 2 / (2 * un.l1) - t2 ** 2 / (2 * un.l2))
            / (2 * math.pi * math.sqrt(un.l1 * un.l2)))
