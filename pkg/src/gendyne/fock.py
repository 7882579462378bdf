"""Dense truncated-Fock-space matrices for one and two bosonic modes.

Everything here is brute force and independent of the phase-space algebra in
:mod:`gendyne.gaussian`; the two are compared against each other throughout
the test-suite.  Operators and density matrices are plain complex
``numpy`` arrays of shape ``(dim, dim)``; two-mode objects use the Kronecker
ordering ``|m>_a |n>_v -> m * dim + n``.

Unitaries generated by unbounded operators (displacement, squeezing, beam
splitter) are exponentiated on a padded space and cropped back, so their
low-lying columns are accurate; each constructor checks that the relevant
state does not leak beyond the requested truncation.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm, sqrtm

from .errors import DomainError, TruncationError

DEFAULT_DIM = 40
MAX_DIM = 200
THERMAL_TAIL_TOL = 1e-10
UNITARY_TAIL_TOL = 1e-8


def _check_dim(dim: int, minimum: int = 2) -> int:
    dim = int(dim)
    if dim < minimum:
        raise DomainError(f"truncation dimension must be >= {minimum}, got {dim}")
    if dim > MAX_DIM:
        raise DomainError(f"truncation dimension {dim} exceeds the dense limit {MAX_DIM}")
    return dim


def annihilation(dim: int) -> np.ndarray:
    """Ladder matrix with ``a[n-1, n] = sqrt(n)``."""
    dim = _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).conj().T


def number(dim: int) -> np.ndarray:
    return np.diag(np.arange(_check_dim(dim), dtype=float)).astype(complex)


def position(dim: int) -> np.ndarray:
    """``q = a + a^dag``."""
    a = annihilation(dim)
    return a + a.conj().T


def momentum(dim: int) -> np.ndarray:
    """``p = -i (a - a^dag)``."""
    a = annihilation(dim)
    return -1j * (a - a.conj().T)


def basis(n: int, dim: int) -> np.ndarray:
    v = np.zeros(_check_dim(dim), dtype=complex)
    v[n] = 1.0
    return v


def projector(vec: np.ndarray) -> np.ndarray:
    return np.outer(vec, vec.conj())


def tail_weight(rho: np.ndarray, levels: int = 1) -> float:
    """Population of the top ``levels`` Fock levels: a truncation-error proxy."""
    return float(np.real(np.trace(rho[-levels:, -levels:])))


def vector_tail(vec: np.ndarray, levels: int = 1) -> float:
    return float(np.sum(np.abs(vec[-levels:]) ** 2))


def thermal_density(n_photons: float, dim: int = DEFAULT_DIM,
                    tail_tol: float = THERMAL_TAIL_TOL) -> np.ndarray:
    """Thermal state ``p_n = N^n / (N + 1)^(n + 1)``, renormalised on ``dim`` levels."""
    dim = _check_dim(dim)
    if not np.isfinite(n_photons) or n_photons < 0:
        raise DomainError(f"thermal photon number must be >= 0, got {n_photons}")
    x = n_photons / (n_photons + 1.0)
    tail = x ** dim
    if tail > tail_tol:
        raise TruncationError(
            f"thermal N={n_photons} leaves weight {tail:.2e} above level {dim}; "
            "increase dim"
        )
    p = x ** np.arange(dim) / (n_photons + 1.0)
    return np.diag(p / p.sum()).astype(complex)


def coherent_vector(alpha: complex, dim: int = DEFAULT_DIM, check: bool = True) -> np.ndarray:
    """Amplitudes ``exp(-|alpha|^2/2) alpha^n / sqrt(n!)`` (not renormalised)."""
    dim = _check_dim(dim, 1)
    amp = np.empty(dim, dtype=complex)
    amp[0] = np.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, dim):
        amp[n] = amp[n - 1] * alpha / np.sqrt(n)
    if check:
        missing = 1.0 - float(np.sum(np.abs(amp) ** 2))
        if missing > UNITARY_TAIL_TOL:
            raise TruncationError(
                f"coherent state |{alpha}> loses {missing:.2e} beyond level {dim}"
            )
    return amp


def _padded_unitary(generator, dim: int, pad: int | None) -> np.ndarray:
    big = min(MAX_DIM, 2 * dim + 20) if pad is None else dim + pad
    return expm(generator(big))[:dim, :dim]


def _guard(u: np.ndarray, what: str) -> None:
    missing = 1.0 - float(np.sum(np.abs(u[:, 0]) ** 2))
    if missing > UNITARY_TAIL_TOL:
        raise TruncationError(f"{what}|0> loses {missing:.2e} beyond the truncation")


def displacement(z: complex, dim: int = DEFAULT_DIM, pad: int | None = None) -> np.ndarray:
    """``D(z) = exp(z a^dag - z* a)``."""
    dim = _check_dim(dim)

    def gen(d):
        a = annihilation(d)
        return z * a.conj().T - np.conj(z) * a

    u = _padded_unitary(gen, dim, pad)
    _guard(u, f"D({z})")
    return u


def squeeze(r: complex, dim: int = DEFAULT_DIM, pad: int | None = None) -> np.ndarray:
    """``S(r) = exp((r^* a^2 - r a^dag^2) / 2)``; real ``r > 0`` squeezes ``q``."""
    dim = _check_dim(dim)

    def gen(d):
        a = annihilation(d)
        ad = a.conj().T
        return 0.5 * (np.conj(r) * a @ a - r * ad @ ad)

    u = _padded_unitary(gen, dim, pad)
    _guard(u, f"S({r})")
    return u


def rotation(chi: float, dim: int = DEFAULT_DIM) -> np.ndarray:
    """``exp(i chi a^dag a)``; its Heisenberg action is ``a -> e^{i chi} a``."""
    return np.diag(np.exp(1j * chi * np.arange(_check_dim(dim)))).astype(complex)


def expectation(op: np.ndarray, rho: np.ndarray) -> complex:
    """``Tr(op rho)``; ``rho`` may also be a ket."""
    if rho.ndim == 1:
        if op.shape[1] != rho.size:
            raise DomainError("dimension mismatch between operator and state")
        return complex(np.vdot(rho, op @ rho))
    if op.shape != rho.shape:
        raise DomainError("dimension mismatch between operator and state")
    return complex(np.einsum("ij,ji->", op, rho))


def _as_density(x: np.ndarray) -> np.ndarray:
    return projector(x) if x.ndim == 1 else x


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``; kets accepted."""
    if rho.shape[0] != sigma.shape[0]:
        raise DomainError("dimension mismatch")
    if rho.ndim == 1 and sigma.ndim == 1:
        return float(abs(np.vdot(rho, sigma)) ** 2)
    if rho.ndim == 1 or sigma.ndim == 1:
        ket, dm = (rho, sigma) if rho.ndim == 1 else (sigma, rho)
        return float(np.real(np.vdot(ket, dm @ ket)))
    sr = sqrtm(rho)
    return float(np.real(np.trace(sqrtm(sr @ sigma @ sr))) ** 2)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``||rho - sigma||_1 / 2``; kets accepted."""
    rho, sigma = _as_density(rho), _as_density(sigma)
    if rho.shape != sigma.shape:
        raise DomainError("dimension mismatch")
    d = rho - sigma
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def embed(rho: np.ndarray, dim: int) -> np.ndarray:
    """Zero-pad a density matrix (or ket) to a larger truncation."""
    out = np.zeros((dim,) * rho.ndim, dtype=complex)
    out[tuple(slice(0, n) for n in rho.shape)] = rho
    return out


def husimi_q(rho: np.ndarray, alpha: complex) -> float:
    """``<alpha| rho |alpha> / pi``."""
    vec = coherent_vector(alpha, rho.shape[0], check=False)
    if rho.ndim == 1:
        return float(abs(np.vdot(vec, rho)) ** 2 / np.pi)
    return float(np.real(np.vdot(vec, rho @ vec)) / np.pi)


def quadrature_moments(rho: np.ndarray):
    """Mean ``(<q>, <p>)`` and symmetrised covariance of a state."""
    rho = _as_density(rho)
    dim = rho.shape[0]
    a = annihilation(dim)
    ea = expectation(a, rho)
    eaa = expectation(a @ a, rho)
    # <a^dag a> from the diagonal avoids the truncated [a, a^dag]
    en = float(np.real(np.sum(np.arange(dim) * np.diag(rho))))
    mean = np.array([2 * ea.real, 2 * ea.imag])
    vq = 2 * en + 1 + 2 * eaa.real
    vp = 2 * en + 1 - 2 * eaa.real
    cqp = 2 * eaa.imag
    cov = np.array([[vq, cqp], [cqp, vp]]) - np.outer(mean, mean)
    return mean, cov


def gaussian_pure_vector(mean, cov, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Ket of the pure single-mode Gaussian state with the given moments.

    The state is built as ``D(beta) R(chi) S(r) |0>`` where ``R(chi) S(r)``
    reproduces ``cov``; the global phase is arbitrary.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if abs(np.linalg.det(cov) - 1.0) > 1e-6:
        raise DomainError(f"covariance with determinant {np.linalg.det(cov):.8f} is not pure")
    w, v = np.linalg.eigh(cov)
    if np.linalg.det(v) < 0:
        v[:, 1] *= -1
    chi = math.atan2(v[1, 0], v[0, 0])
    r = -0.5 * math.log(w[0])
    beta = 0.5 * (mean[0] + 1j * mean[1])
    vac = basis(0, dim)
    return displacement(beta, dim) @ (rotation(chi, dim) @ (squeeze(r, dim) @ vac))


# -- two modes ---------------------------------------------------------------

def two_mode_ops(dim: int):
    """Annihilators ``(a, v)`` on the ``dim**2`` two-mode space."""
    a = annihilation(dim)
    eye = np.eye(dim)
    return np.kron(a, eye), np.kron(eye, a)


def two_mode_squeezed_vector(s: float, dim: int = DEFAULT_DIM) -> np.ndarray:
    """``sum_n tanh(s)^n |n, n> / cosh(s)`` truncated to ``n < dim``."""
    dim = _check_dim(dim)
    lam = np.tanh(s) ** np.arange(dim) / np.cosh(s)
    missing = 1.0 - float(np.sum(lam ** 2))
    if missing > UNITARY_TAIL_TOL:
        raise TruncationError(f"two-mode squeezed vacuum s={s} loses {missing:.2e}")
    psi = np.zeros((dim, dim), dtype=complex)
    psi[np.arange(dim), np.arange(dim)] = lam
    return psi.reshape(-1)


def beam_splitter_unitary(phi: float, dim: int = DEFAULT_DIM) -> np.ndarray:
    """``R(phi) = exp(phi (a^dag v - a v^dag))`` on the two-mode space.

    Its Heisenberg action is ``a -> cos(phi) a + sin(phi) v``; the *state*
    transformation ``R^dag`` therefore matches
    :func:`gendyne.gaussian.beam_splitter` with angle ``phi``.  It conserves
    the total photon number, so it is exponentiated exactly block by block.
    """
    dim = _check_dim(dim)
    a, v = two_mode_ops(dim)
    gen = phi * (a.conj().T @ v - a @ v.conj().T)
    tot = np.add.outer(np.arange(dim), np.arange(dim)).reshape(-1)
    u = np.zeros((dim * dim, dim * dim), dtype=complex)
    for n in range(2 * dim - 1):
        idx = np.flatnonzero(tot == n)
        u[np.ix_(idx, idx)] = expm(gen[np.ix_(idx, idx)])
    return u


def project_mode_on_vacuum(psi: np.ndarray, dim: int, projected_mode: int = 1) -> np.ndarray:
    """Normalised ``<0|_mode psi`` of a two-mode ket."""
    m = psi.reshape(dim, dim)
    out = m[:, 0] if projected_mode == 1 else m[0, :]
    norm = np.linalg.norm(out)
    if norm == 0:
        raise DomainError("state has no overlap with the vacuum of the projected mode")
    return out / norm


def gaussian_density(state, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Density matrix of a single-mode Gaussian state (any purity).

    Uses the decomposition ``D(beta) R(chi) S(r) rho_th(N_eff) S^dag R^dag D^dag``
    with ``2 N_eff + 1 = sqrt(det cov)``.
    """
    mean = np.asarray(state.mean, dtype=float)
    cov = np.asarray(state.cov, dtype=float)
    if mean.size != 2:
        raise DomainError("gaussian_density handles single-mode states")
    nu = math.sqrt(np.linalg.det(cov))
    if nu < 1 - 1e-9:
        raise DomainError(f"covariance violates the uncertainty relation (det = {nu**2:.6f})")
    nu = max(nu, 1.0)
    w, v = np.linalg.eigh(cov / nu)
    if np.linalg.det(v) < 0:
        v[:, 1] *= -1
    chi = math.atan2(v[1, 0], v[0, 0])
    r = -0.5 * math.log(w[0])
    beta = 0.5 * (mean[0] + 1j * mean[1])
    n_eff = (nu - 1) / 2
    big = max(dim, min(MAX_DIM - 20, 2 * dim + 20))
    pad = min(20, MAX_DIM - big)
    x = n_eff / (n_eff + 1)
    th = np.diag(x ** np.arange(big) / (n_eff + 1)).astype(complex)
    u = displacement(beta, big, pad=pad) @ rotation(chi, big) @ squeeze(r, big, pad=pad)
    rho = (u @ th @ u.conj().T)[:dim, :dim]
    missing = 1.0 - float(np.real(np.trace(rho)))
    if missing > UNITARY_TAIL_TOL:
        raise TruncationError(f"Gaussian state loses {missing:.2e} beyond level {dim}")
    return rho / np.trace(rho)
