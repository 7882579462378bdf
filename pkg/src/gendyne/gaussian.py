"""Phase-space description of Gaussian states.

Quadratures are ordered ``(q1, p1, q2, p2, ...)`` with ``q = a + a^dag`` and
``p = -i (a - a^dag)``, so that ``[q, p] = 2i`` and the vacuum covariance
matrix is the identity.  Covariances are symmetrised second moments,
``cov_ij = <{dR_i, dR_j}>/2``, and the uncertainty relation reads
``cov + i*Omega >= 0`` with ``Omega`` the unit-block symplectic form.

A Gaussian unitary acts through its Heisenberg matrix ``S`` (``U^dag R U =
S R + d``): the state transforms as ``mean -> S mean + d`` and
``cov -> S cov S^T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, NumericalError

SYMMETRY_RTOL = 1e-12
UNCERTAINTY_ATOL = 1e-9
SYMPLECTIC_ATOL = 1e-10
MAX_CONDITION_NUMBER = 1e12


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form with blocks ``[[0, 1], [-1, 0]]``."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class GaussianState:
    """First and second moments of an ``n``-mode Gaussian state."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.size % 2 or cov.shape != (mean.size, mean.size):
            raise DomainError(
                f"mean of length {mean.size} and cov of shape {cov.shape} "
                "do not describe a set of modes"
            )
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
            raise DomainError("covariance matrix is not symmetric")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    def min_uncertainty_eigenvalue(self) -> float:
        """Smallest eigenvalue of ``cov + i*Omega``."""
        herm = self.cov + 1j * symplectic_form(self.n_modes)
        return float(np.linalg.eigvalsh(herm)[0])

    def is_physical(self, atol: float = UNCERTAINTY_ATOL) -> bool:
        # eigenvalue round-off grows with the matrix norm (large squeezing)
        scale = max(1.0, float(np.linalg.norm(self.cov, 2)))
        return self.min_uncertainty_eigenvalue() >= -atol * scale

    def mode(self, k: int) -> "GaussianState":
        """Reduced state of mode ``k``."""
        sl = slice(2 * k, 2 * k + 2)
        return GaussianState(self.mean[sl], self.cov[sl, sl])

    def purity(self) -> float:
        return float(1.0 / np.sqrt(np.linalg.det(self.cov)))


@dataclass(frozen=True)
class SymplecticMap:
    """Affine phase-space map ``R -> S R + d`` of a Gaussian unitary."""

    matrix: np.ndarray
    displacement: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        disp = np.array(self.displacement, dtype=float).reshape(-1)
        if matrix.shape != (disp.size, disp.size) or disp.size % 2:
            raise DomainError("matrix and displacement sizes disagree")
        matrix.setflags(write=False)
        disp.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "displacement", disp)

    @property
    def n_modes(self) -> int:
        return self.displacement.size // 2

    def symplectic_defect(self) -> float:
        omega = symplectic_form(self.n_modes)
        return float(np.max(np.abs(self.matrix @ omega @ self.matrix.T - omega)))

    def is_symplectic(self, atol: float = SYMPLECTIC_ATOL) -> bool:
        return self.symplectic_defect() <= atol

    def then(self, other: "SymplecticMap") -> "SymplecticMap":
        """Map obtained by applying ``self`` first and ``other`` second."""
        return SymplecticMap(
            other.matrix @ self.matrix,
            other.matrix @ self.displacement + other.displacement,
        )


def vacuum(n_modes: int = 1) -> GaussianState:
    return GaussianState(np.zeros(2 * n_modes), np.eye(2 * n_modes))


def make_thermal(n_photons: float) -> GaussianState:
    """Single-mode thermal state, covariance ``(2N + 1) * I``."""
    if not np.isfinite(n_photons) or n_photons < 0:
        raise DomainError(f"thermal photon number must be >= 0, got {n_photons}")
    return GaussianState(np.zeros(2), (2.0 * n_photons + 1.0) * np.eye(2))


def coherent(alpha: complex) -> GaussianState:
    """Coherent state ``D(alpha)|0>``."""
    return GaussianState([2.0 * alpha.real, 2.0 * alpha.imag], np.eye(2))


def make_two_mode_squeezed(s: float) -> GaussianState:
    """Two-mode squeezed vacuum with ``cosh(2s)`` diagonal and ``sinh(2s)*sigma_z`` correlations.

    This is ``sum_n tanh(s)^n |n, n> / cosh(s)``; as ``s`` grows it approaches
    the unnormalised maximally entangled state ``sum_n |n, n>``.
    """
    if not np.isfinite(s):
        raise DomainError("squeezing parameter must be finite")
    ch, sh = np.cosh(2 * s), np.sinh(2 * s)
    sz = np.diag([1.0, -1.0])
    cov = np.block([[ch * np.eye(2), sh * sz], [sh * sz, ch * np.eye(2)]])
    return GaussianState(np.zeros(4), cov)


def tensor(*states: GaussianState) -> GaussianState:
    """Product state of the given Gaussian states, modes in argument order."""
    mean = np.concatenate([s.mean for s in states])
    cov = np.zeros((mean.size, mean.size))
    i = 0
    for s in states:
        k = s.mean.size
        cov[i:i + k, i:i + k] = s.cov
        i += k
    return GaussianState(mean, cov)


def identity_map(n_modes: int) -> SymplecticMap:
    return SymplecticMap(np.eye(2 * n_modes), np.zeros(2 * n_modes))


def beam_splitter(phi: float, n_modes: int = 2) -> SymplecticMap:
    """Beam splitter with transmissivity ``cos(phi)**2`` between modes 0 and 1.

    Heisenberg action ``a -> cos(phi) a - sin(phi) v``,
    ``v -> sin(phi) a + cos(phi) v``.  Extra modes (``n_modes > 2``) are left
    untouched.
    """
    if n_modes < 2:
        raise DomainError("a beam splitter needs at least two modes")
    c, s = np.cos(phi), np.sin(phi)
    m = np.eye(2 * n_modes)
    m[:4, :4] = np.block([[c * np.eye(2), -s * np.eye(2)], [s * np.eye(2), c * np.eye(2)]])
    return SymplecticMap(m, np.zeros(2 * n_modes))


def displacement_map(z: complex, n_modes: int = 1, mode: int = 0) -> SymplecticMap:
    """Displacement ``D(z) = exp(z a^dag - z* a)`` acting on ``mode``."""
    d = np.zeros(2 * n_modes)
    d[2 * mode:2 * mode + 2] = [2.0 * np.real(z), 2.0 * np.imag(z)]
    return SymplecticMap(np.eye(2 * n_modes), d)


def squeezing_map(r: float) -> SymplecticMap:
    """Single-mode ``S(r) = exp((r/2)(a^2 - a^dag^2))``: ``q -> e^{-r} q``, ``p -> e^{r} p``."""
    return SymplecticMap(np.diag([np.exp(-r), np.exp(r)]), np.zeros(2))


def phase_rotation(chi: float) -> SymplecticMap:
    """Single-mode ``exp(i chi a^dag a)``, under which ``a -> e^{i chi} a``."""
    c, s = np.cos(chi), np.sin(chi)
    return SymplecticMap(np.array([[c, -s], [s, c]]), np.zeros(2))


def two_mode_squeezing_map(s: float) -> SymplecticMap:
    """Map taking the two-mode vacuum to :func:`make_two_mode_squeezed`."""
    ch, sh = np.cosh(s), np.sinh(s)
    sz = np.diag([1.0, -1.0])
    return SymplecticMap(
        np.block([[ch * np.eye(2), sh * sz], [sh * sz, ch * np.eye(2)]]), np.zeros(4)
    )


def apply(smap: SymplecticMap, state: GaussianState) -> GaussianState:
    """Push ``state`` through the Gaussian unitary described by ``smap``."""
    if smap.n_modes != state.n_modes:
        raise DomainError(
            f"map acts on {smap.n_modes} modes but state has {state.n_modes}"
        )
    s = smap.matrix
    return GaussianState(s @ state.mean + smap.displacement, s @ state.cov @ s.T)


def condition_on_vacuum_projection(state: GaussianState, projected_mode: int = 1) -> GaussianState:
    """Project one mode of a two-mode state onto the vacuum and renormalise.

    With blocks ``A`` (kept mode), ``B`` (projected mode) and cross block
    ``C = cov[kept, projected]``::

        mean_out = mean_a - C (B + I)^{-1} mean_v
        cov_out  = A - C (B + I)^{-1} C^T
    """
    if state.n_modes != 2:
        raise DomainError("vacuum conditioning is defined for two-mode states")
    if projected_mode not in (0, 1):
        raise DomainError(f"projected_mode must be 0 or 1, got {projected_mode}")
    keep = slice(0, 2) if projected_mode == 1 else slice(2, 4)
    proj = slice(2, 4) if projected_mode == 1 else slice(0, 2)
    a = state.cov[keep, keep]
    b = state.cov[proj, proj]
    c = state.cov[keep, proj]
    bi = b + np.eye(2)
    cond = np.linalg.cond(bi)
    if not np.isfinite(cond) or cond > MAX_CONDITION_NUMBER:
        raise NumericalError(f"B + I is near-singular (condition number {cond:.3e})")
    gain = np.linalg.solve(bi, c.T).T
    mean = state.mean[keep] - gain @ state.mean[proj]
    cov = a - gain @ c.T
    return GaussianState(mean, 0.5 * (cov + cov.T))


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of ``cov`` (all ones for a pure state), ascending."""
    n = cov.shape[0] // 2
    w, v = np.linalg.eigh(cov)
    half = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    ev = np.linalg.eigvalsh(1j * half @ symplectic_form(n) @ half)
    return np.sort(np.abs(ev))[::2]


Selector = Union[int, str]


def _quadrature_index(state: GaussianState, which: Selector) -> int:
    if isinstance(which, str):
        names = {f"{x}{k}": 2 * k + (x == "p") for k in range(state.n_modes) for x in "qp"}
        if state.n_modes == 1:
            names.update(q=0, p=1)
        if which not in names:
            raise DomainError(f"unknown quadrature {which!r}")
        return names[which]
    if not 0 <= which < 2 * state.n_modes:
        raise DomainError(f"quadrature index {which} out of range")
    return int(which)


def sample_gaussian_outcome(state: GaussianState, which: Selector, rng: np.random.Generator,
                            size=None):
    """Sample the marginal of one quadrature (``"q"``, ``"p1"`` or an index)."""
    i = _quadrature_index(state, which)
    return rng.normal(state.mean[i], np.sqrt(state.cov[i, i]), size=size)


def sample_quadratures(state: GaussianState, which, rng: np.random.Generator, size=None):
    """Jointly sample several quadratures from their marginal Gaussian law.

    The selected quadratures must commute pairwise for the joint law to be a
    measurement statistic; callers are responsible for that.
    """
    idx = [_quadrature_index(state, w) for w in which]
    mean = state.mean[idx]
    cov = state.cov[np.ix_(idx, idx)]
    return rng.multivariate_normal(mean, cov, size=size, method="cholesky")


def overlap(rho: GaussianState, sigma: GaussianState) -> float:
    """``Tr(rho sigma)``; equals the fidelity when either state is pure."""
    if rho.n_modes != sigma.n_modes:
        raise DomainError("states have different numbers of modes")
    s = rho.cov + sigma.cov
    d = rho.mean - sigma.mean
    n = rho.n_modes
    return float(2.0 ** n / np.sqrt(np.linalg.det(s)) * np.exp(-0.5 * d @ np.linalg.solve(s, d)))
