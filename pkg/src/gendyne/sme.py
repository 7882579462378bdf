"""Unconditional and general-dyne conditional dynamics of a damped mode.

The unconditional evolution (damping rate 1, bath photon number ``N``) is::

    d rho/dt = (N+1) D[c] rho + N D[c^dag] rho

and general-dyne monitoring of the bath gives the conditional equation::

    d rho = L rho dt + (1+U)/2 dw1/sqrt(L1) H[(N+1) c - N c^dag] rho
                     + (1-U)/2 dw2/sqrt(L2) H[-i ((N+1) c + N c^dag)] rho

with ``H[O] rho = O rho + rho O^dag - Tr[(O + O^dag) rho] rho``.  The records
are ``sqrt(dt) theta1 = (1+U)/2 <q> dt + sqrt(L1) dw1`` and
``sqrt(dt) theta2 = (1-U)/2 <p> dt + sqrt(L2) dw2``.

Two engines integrate it with shared noise:

* ``fock``: the density matrix on a truncated Fock space, Euler-Maruyama
  (or Milstein) followed by Hermitisation and renormalisation;
* ``gaussian``: first moments and covariance.  In quadrature units
  (vacuum covariance ``I``) with ``sigma_th = (2N+1) I`` and channel gains
  ``k1 = (1+U)/(2 sqrt(L1))``, ``k2 = (1-U)/(2 sqrt(L2))``::

      d mean  = -mean/2 dt + sum_j k_j (sigma - sigma_th) e_j dw_j
      d sigma = (sigma_th - sigma) dt - (sigma - sigma_th) K (sigma - sigma_th) dt

  with ``K = diag(k1^2, k2^2)``.  The thermal covariance is a fixed point
  for every ``U``, so the conditional steady state is the thermal state.

Each trajectory draws its increments from ``SeedSequence(seed,
spawn_key=(index,))``, so results do not depend on batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .errors import DomainError, IntegrationError
from .gaussian import GaussianState, symplectic_form
from .povm import HOMODYNE_EPS, Unravelling

MAX_DEFAULT_DT = 1e-2
TRACE_DRIFT_TOL = 1e-3
NEGATIVITY_TOL = -1e-6
ENGINES = ("fock", "gaussian", "both")
SCHEMES = ("euler", "milstein")


@dataclass(frozen=True)
class SmeConfig:
    """Parameters of a conditional run; time is in units of the inverse damping rate."""

    unravelling: Unravelling
    dt: float = 1e-3
    n_steps: int = 1000
    dim: int = fock.DEFAULT_DIM
    seed: int = 0
    engine: str = "fock"
    scheme: str = "euler"
    checkpoint_every: int = 0
    positivity_check_every: int = 50
    allow_large_dt: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.dt > MAX_DEFAULT_DT and not self.allow_large_dt:
            raise DomainError(f"dt={self.dt} exceeds the default policy limit {MAX_DEFAULT_DT}")
        if self.n_steps < 1:
            raise DomainError("n_steps must be >= 1")
        if self.engine not in ENGINES:
            raise DomainError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.dim < 2 or self.dim > fock.MAX_DIM:
            raise DomainError(f"dim must lie in [2, {fock.MAX_DIM}], got {self.dim}")

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


def channel_gains(un: Unravelling) -> tuple[float, float]:
    """Gains ``(k1, k2)`` multiplying ``dw_j`` in front of the innovation terms.

    A channel whose weight vanishes (``U = -1`` resp. ``U = +1``) gets gain 0
    instead of the ``0/0`` of the raw formula.
    """
    u = un.upsilon
    k1 = 0.0 if u <= -1 + HOMODYNE_EPS else (1 + u) / (2 * math.sqrt(un.l1))
    k2 = 0.0 if u >= 1 - HOMODYNE_EPS else (1 - u) / (2 * math.sqrt(un.l2))
    return k1, k2


def noise_stream(seed: int, index: int) -> np.random.Generator:
    """Generator owned by trajectory ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def wiener_increments(cfg: SmeConfig, index: int = 0) -> np.ndarray:
    """Increments ``(dw1, dw2)`` of trajectory ``index``, shape ``(n_steps, 2)``."""
    return noise_stream(cfg.seed, index).normal(0.0, math.sqrt(cfg.dt), size=(cfg.n_steps, 2))


# -- Fock engine ----------------------------------------------------------------

def _dissipator(op, op_dag, opdag_op, rho):
    return op @ rho @ op_dag - 0.5 * (opdag_op @ rho + rho @ opdag_op)


class FockModel:
    """Operators of the thermal master equation and its general-dyne unravelling.

    Every operator involved is a combination ``alpha c + beta c^dag`` or
    diagonal, so products with density matrices are done by shifting rows and
    columns (``O(D^2)`` per product) rather than by dense matrix products.
    """

    def __init__(self, unravelling: Unravelling, dim: int):
        self.unravelling = unravelling
        self.dim = dim
        n = unravelling.n_bath
        c = fock.annihilation(dim)
        cd = c.conj().T
        self.c, self.cd = c, cd
        self._sq = np.sqrt(np.arange(1, dim, dtype=float))
        self.number_diag = np.arange(dim, dtype=float)
        # truncated c c^dag is diag(1, ..., D-1, 0)
        ccd_diag = np.append(np.arange(1, dim, dtype=float), 0.0)
        d = (n + 1) * self.number_diag + n * ccd_diag
        # anticommutator part of both dissipators, elementwise
        self._decay = 0.5 * (d[:, None] + d[None, :])
        self._w = np.outer(self._sq, self._sq)
        k1, k2 = channel_gains(unravelling)
        self.gains = (k1, k2)
        coeffs = []
        if k1:
            coeffs.append((0, k1 * (n + 1), -k1 * n))
        if k2:
            coeffs.append((1, -1j * k2 * (n + 1), -1j * k2 * n))
        self.channel_coeffs = coeffs
        self.channels = [(j, a * c + b * cd) for j, a, b in coeffs]

    def _left(self, alpha, beta, x):
        """``(alpha c + beta c^dag) @ x`` by row shifts."""
        out = np.zeros_like(x, dtype=complex)
        sq = self._sq[:, None]
        if alpha:
            out[..., :-1, :] += alpha * sq * x[..., 1:, :]
        if beta:
            out[..., 1:, :] += beta * sq * x[..., :-1, :]
        return out

    def lindblad_rhs(self, rho):
        n = self.unravelling.n_bath
        out = -self._decay * rho
        out[..., :-1, :-1] += (n + 1) * self._w * rho[..., 1:, 1:]
        if n:
            out[..., 1:, 1:] += n * self._w * rho[..., :-1, :-1]
        return out

    @staticmethod
    def innovation(op, rho):
        """``H[op] rho`` for one state or a stack of states."""
        return _innovation_from(op @ rho, rho)

    @staticmethod
    def innovation_derivative(op, rho, x):
        """Directional derivative of ``rho -> H[op] rho`` along ``x``."""
        return _innovation_derivative_from(op @ rho, op @ x, rho, x)

    def moments(self, rho):
        """Conditional ``<q>, <p>`` and covariance entries for a stack of states."""
        sq = self._sq
        ea = np.einsum("i,...ii->...", sq, rho[..., 1:, :-1])
        sq2 = sq[:-1] * sq[1:]
        eaa = np.einsum("i,...ii->...", sq2, rho[..., 2:, :-2])
        en = np.einsum("i,...ii->...", self.number_diag, rho).real
        mq, mp = 2 * ea.real, 2 * ea.imag
        vq = 2 * en + 1 + 2 * eaa.real - mq ** 2
        vp = 2 * en + 1 - 2 * eaa.real - mp ** 2
        cqp = 2 * eaa.imag - mq * mp
        return mq, mp, vq, vp, cqp, en

    def _noise_term(self, rho, dw):
        """``sum_j dw_j H[M_j] rho``, using ``sum_j dw_j M_j = A c + B c^dag``."""
        a = sum(dw[..., j] * aj for j, aj, _ in self.channel_coeffs)
        b = sum(dw[..., j] * bj for j, _, bj in self.channel_coeffs)
        a = np.asarray(a)[..., None, None]
        b = np.asarray(b)[..., None, None]
        sq = self._sq[:, None]
        x = np.zeros_like(rho)
        x[..., :-1, :] = a * (sq * rho[..., 1:, :])
        x[..., 1:, :] += b * (sq * rho[..., :-1, :])
        tr = 2 * np.trace(x, axis1=-2, axis2=-1).real
        x += np.swapaxes(x, -1, -2).conj()
        x -= tr[..., None, None] * rho
        return x

    def _milstein_noise(self, rho, dw, dt):
        inc = np.zeros_like(rho)
        terms = []
        for j, a, b in self.channel_coeffs:
            op_rho = self._left(a, b, rho)
            h = _innovation_from(op_rho, rho)
            terms.append((j, a, b, op_rho, h))
            inc += dw[..., j, None, None] * h
        for j, _, _, _, hj in terms:
            for k, a, b, op_rho, _ in terms:
                w = dw[..., j] * dw[..., k] - (dt if j == k else 0.0)
                d = _innovation_derivative_from(op_rho, self._left(a, b, hj), rho, hj)
                inc += 0.5 * w[..., None, None] * d
        return inc

    def step(self, rho, dw, dt, scheme="euler"):
        """One conditional step for a stack ``rho`` (``(..., D, D)``) and ``dw`` (``(..., 2)``).

        Returns the new states and the pre-renormalisation trace drift.
        """
        inc = self.lindblad_rhs(rho) * dt
        if scheme == "euler":
            inc += self._noise_term(rho, dw)
        else:
            inc += self._milstein_noise(rho, dw, dt)
        new = rho + inc
        new = 0.5 * (new + np.swapaxes(new, -1, -2).conj())
        tr = np.trace(new, axis1=-2, axis2=-1).real
        drift = np.abs(tr - 1.0)
        if np.any(drift > TRACE_DRIFT_TOL):
            raise IntegrationError(
                f"trace drift {float(np.max(drift)):.2e} in one step; reduce dt")
        return new / tr[..., None, None], drift


def _innovation_from(op_rho, rho):
    r = op_rho + np.swapaxes(op_rho, -1, -2).conj()
    tr = np.trace(r, axis1=-2, axis2=-1).real
    return r - tr[..., None, None] * rho


def _innovation_derivative_from(op_rho, op_x, rho, x):
    rx = op_x + np.swapaxes(op_x, -1, -2).conj()
    tr_x = np.trace(rx, axis1=-2, axis2=-1).real
    tr_r = 2 * np.trace(op_rho, axis1=-2, axis2=-1).real
    return rx - tr_x[..., None, None] * rho - tr_r[..., None, None] * x


def lindblad_rhs(rho: np.ndarray, n_bath: float) -> np.ndarray:
    """``(N+1) D[c] rho + N D[c^dag] rho`` on the truncation of ``rho``."""
    rho = np.asarray(rho)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise DomainError("rho must be a square matrix")
    return FockModel(Unravelling(0.0, n_bath), rho.shape[-1]).lindblad_rhs(rho)


def h_superop(op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Innovation superoperator ``H[op] rho``."""
    if op.shape[-1] != rho.shape[-1]:
        raise DomainError("dimension mismatch between operator and state")
    return FockModel.innovation(op, rho)


def fock_sme_step(rho, cfg: SmeConfig, rng: np.random.Generator | None = None, dw=None,
                  model: FockModel | None = None):
    """Single conditional step; returns ``(rho', dw1, dw2, theta1, theta2)``.

    Pass either ``rng`` (increments are drawn from it) or explicit ``dw``.
    Degenerate outcome components (``U = +-1``) are ``nan``.
    """
    model = model or FockModel(cfg.unravelling, rho.shape[-1])
    if dw is None:
        dw = rng.normal(0.0, math.sqrt(cfg.dt), size=2)
    dw = np.asarray(dw, dtype=float)
    mq, mp, *_ = model.moments(rho)
    new, _ = model.step(rho, dw, cfg.dt, cfg.scheme)
    th1, th2 = outcome_records(cfg, mq, mp, dw)
    return new, float(dw[0]), float(dw[1]), float(th1), float(th2)


def outcome_records(cfg: SmeConfig, mean_q, mean_p, dw):
    """Outcomes ``(theta1, theta2)`` generated by increments ``dw`` from pre-step means."""
    un = cfg.unravelling
    u, dt = un.upsilon, cfg.dt
    k1, k2 = channel_gains(un)
    dw = np.asarray(dw)
    th1 = ((1 + u) / 2 * mean_q * dt + math.sqrt(un.l1) * dw[..., 0]) / math.sqrt(dt)
    th2 = ((1 - u) / 2 * mean_p * dt + math.sqrt(un.l2) * dw[..., 1]) / math.sqrt(dt)
    if not k1:
        th1 = np.full_like(np.asarray(th1, dtype=float), np.nan)
    if not k2:
        th2 = np.full_like(np.asarray(th2, dtype=float), np.nan)
    return th1, th2


# -- Gaussian engine ------------------------------------------------------------

class GaussianModel:
    """Moment equations of the conditional dynamics (quadrature units, vacuum cov ``I``)."""

    def __init__(self, unravelling: Unravelling):
        self.unravelling = unravelling
        self.sigma_th = (2 * unravelling.n_bath + 1) * np.eye(2)
        k1, k2 = channel_gains(unravelling)
        self.gains = np.array([k1, k2])

    def noise_gain(self, cov):
        """Matrix ``G`` with ``d mean = ... + G dw``; column ``j`` is ``k_j (cov - sigma_th) e_j``."""
        return (cov - self.sigma_th) * self.gains[None, :]

    def riccati_rhs(self, cov):
        g = self.noise_gain(cov)
        return self.sigma_th - cov - g @ g.T

    def step(self, mean, cov, dw, dt):
        """Euler step; ``mean`` may be a stack ``(..., 2)`` sharing one ``cov``."""
        g = self.noise_gain(cov)
        new_mean = mean - 0.5 * mean * dt + dw @ g.T
        new_cov = cov + dt * self.riccati_rhs(cov)
        new_cov = 0.5 * (new_cov + new_cov.T)
        herm = new_cov + 1j * symplectic_form(1)
        if np.linalg.eigvalsh(herm)[0] < NEGATIVITY_TOL:
            raise IntegrationError("conditional covariance violates the uncertainty relation")
        return new_mean, new_cov


def gaussian_sme_step(mean, cov, cfg: SmeConfig, rng: np.random.Generator | None = None,
                      dw=None):
    """Single moment step; returns ``(mean', cov', (dw1, dw2, theta1, theta2))``."""
    model = GaussianModel(cfg.unravelling)
    if dw is None:
        dw = rng.normal(0.0, math.sqrt(cfg.dt), size=2)
    dw = np.asarray(dw, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    new_mean, new_cov = model.step(mean, cov, dw, cfg.dt)
    th1, th2 = outcome_records(cfg, mean[0], mean[1], dw)
    return new_mean, new_cov, (float(dw[0]), float(dw[1]), float(th1), float(th2))


def riccati_steady_state(unravelling: Unravelling, cov0=None, t_final: float = 40.0,
                         dt: float = 1e-3) -> np.ndarray:
    """Integrate the covariance flow until ``t_final`` (deterministic)."""
    model = GaussianModel(unravelling)
    cov = np.eye(2) if cov0 is None else np.asarray(cov0, dtype=float)
    for _ in range(int(round(t_final / dt))):
        cov = cov + dt * model.riccati_rhs(cov)
    return cov


# -- trajectories -----------------------------------------------------------------

@dataclass
class TrajectoryRecord:
    """Time series of one conditional trajectory.

    ``mean`` and ``cov`` hold ``(<q>, <p>)`` and ``[[var_q, cov_qp],
    [cov_qp, var_p]]`` at every grid time (``n_steps + 1`` rows); ``dw`` and
    ``theta`` hold one row per step.  ``trace_err`` is the
    pre-renormalisation trace drift of each step (zero for the Gaussian
    engine).  ``snapshots`` maps checkpoint times to Fock density matrices.
    """

    engine: str
    times: np.ndarray
    dw: np.ndarray
    theta: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    photon_number: np.ndarray
    trace_err: np.ndarray
    snapshots: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> tuple[bool, bool]:
        return tuple(bool(np.all(np.isnan(self.theta[:, j]))) for j in range(2))


def _initial_density(initial, dim):
    if isinstance(initial, GaussianState):
        return fock.gaussian_density(initial, dim)
    rho = np.asarray(initial, dtype=complex)
    if rho.ndim == 1:
        rho = fock.projector(rho / np.linalg.norm(rho))
    if rho.shape != (dim, dim):
        raise DomainError(f"initial density has shape {rho.shape}, expected {(dim, dim)}")
    return rho


def _initial_moments(initial, dim):
    if isinstance(initial, GaussianState):
        if initial.n_modes != 1:
            raise DomainError("the Gaussian engine evolves a single mode")
        return np.array(initial.mean), np.array(initial.cov)
    return fock.quadrature_moments(_initial_density(initial, dim))


def _min_eigenvalues(rho):
    return np.linalg.eigvalsh(rho)[..., 0]


def _run_fock(cfg, rho0, dws, keep_snapshots=True):
    """Integrate a batch of trajectories; ``dws`` has shape ``(B, n_steps, 2)``."""
    model = FockModel(cfg.unravelling, cfg.dim)
    b, n = dws.shape[0], cfg.n_steps
    rho = np.broadcast_to(rho0, (b,) + rho0.shape).copy()
    mean = np.empty((b, n + 1, 2))
    cov = np.empty((b, n + 1, 2, 2))
    nbar = np.empty((b, n + 1))
    drift = np.zeros((b, n + 1))
    snaps = {}

    def record(i):
        mq, mp, vq, vp, cqp, en = model.moments(rho)
        mean[:, i, 0], mean[:, i, 1] = mq, mp
        cov[:, i, 0, 0], cov[:, i, 1, 1] = vq, vp
        cov[:, i, 0, 1] = cov[:, i, 1, 0] = cqp
        nbar[:, i] = en
        if keep_snapshots and cfg.checkpoint_every and i % cfg.checkpoint_every == 0:
            snaps[round(i * cfg.dt, 12)] = rho.copy()

    record(0)
    for i in range(n):
        rho, drift[:, i + 1] = model.step(rho, dws[:, i], cfg.dt, cfg.scheme)
        if cfg.positivity_check_every and (i + 1) % cfg.positivity_check_every == 0:
            low = float(np.min(_min_eigenvalues(rho)))
            if low < NEGATIVITY_TOL:
                raise IntegrationError(
                    f"conditional state eigenvalue {low:.2e} at t={(i + 1) * cfg.dt:.4g}")
        record(i + 1)
    return mean, cov, nbar, drift, snaps, rho


def _run_gaussian(cfg, mean0, cov0, dws):
    model = GaussianModel(cfg.unravelling)
    b, n = dws.shape[0], cfg.n_steps
    mean = np.empty((b, n + 1, 2))
    cov = np.empty((n + 1, 2, 2))
    m, c = np.broadcast_to(mean0, (b, 2)).copy(), np.array(cov0, dtype=float)
    mean[:, 0], cov[0] = m, c
    for i in range(n):
        m, c = model.step(m, c, dws[:, i], cfg.dt)
        mean[:, i + 1], cov[i + 1] = m, c
    cov = np.broadcast_to(cov, (b,) + cov.shape)
    nbar = (cov[..., 0, 0] + cov[..., 1, 1] + mean[..., 0] ** 2 + mean[..., 1] ** 2 - 2) / 4
    return mean, cov, nbar


def run_trajectory(cfg: SmeConfig, initial_state, index: int = 0, dw=None):
    """Integrate one trajectory; returns a record, or a ``{engine: record}`` dict for ``both``.

    Both engines consume the same increments (``dw`` or trajectory ``index``
    of ``cfg.seed``).
    """
    dws = wiener_increments(cfg, index) if dw is None else np.asarray(dw, dtype=float)
    if dws.shape != (cfg.n_steps, 2):
        raise DomainError(f"dw must have shape {(cfg.n_steps, 2)}")
    out = {}
    if cfg.engine in ("fock", "both"):
        rho0 = _initial_density(initial_state, cfg.dim)
        mean, cov, nbar, drift, snaps, _ = _run_fock(cfg, rho0, dws[None])
        th = np.stack(outcome_records(cfg, mean[0, :-1, 0], mean[0, :-1, 1], dws), axis=1)
        out["fock"] = TrajectoryRecord("fock", cfg.times, dws, th, mean[0], cov[0], nbar[0],
                                       drift[0], {t: r[0] for t, r in snaps.items()})
    if cfg.engine in ("gaussian", "both"):
        m0, c0 = _initial_moments(initial_state, cfg.dim)
        mean, cov, nbar = _run_gaussian(cfg, m0, c0, dws[None])
        th = np.stack(outcome_records(cfg, mean[0, :-1, 0], mean[0, :-1, 1], dws), axis=1)
        out["gaussian"] = TrajectoryRecord("gaussian", cfg.times, dws, th, mean[0],
                                           np.array(cov[0]), nbar[0], np.zeros(cfg.n_steps + 1))
    return out if cfg.engine == "both" else out[cfg.engine]


@dataclass
class EnsembleStats:
    """Per-time ensemble statistics of conditional moments.

    Arrays indexed ``[time]`` (or ``[time, component]``); ``*_se`` are
    standard errors of the ensemble means.  ``mean_state`` holds the
    trajectory-averaged Fock density at checkpoint times (Fock engine only).
    """

    engine: str
    n_traj: int
    times: np.ndarray
    photon_number: np.ndarray
    photon_number_se: np.ndarray
    mean: np.ndarray
    mean_se: np.ndarray
    mean_spread: np.ndarray
    cond_var: np.ndarray
    cond_var_se: np.ndarray
    mean_state: dict = field(default_factory=dict)

    def steady_conditional_variance(self, t_min: float):
        """Time- and ensemble-averaged conditional ``(var_q, var_p)`` for ``t >= t_min``."""
        sel = self.times >= t_min
        return self.cond_var[sel].mean(axis=0)


class _Accumulator:
    """Running sums merged across batches (order-independent)."""

    def __init__(self):
        self.n = 0
        self.sums = {}

    def add(self, key, values):
        s1 = values.sum(axis=0)
        s2 = (values ** 2).sum(axis=0)
        if key in self.sums:
            a, b = self.sums[key]
            self.sums[key] = (a + s1, b + s2)
        else:
            self.sums[key] = (s1, s2)

    def stats(self, key):
        s1, s2 = self.sums[key]
        m = s1 / self.n
        var = np.maximum(s2 / self.n - m ** 2, 0.0) * self.n / max(self.n - 1, 1)
        return m, np.sqrt(var / self.n), np.sqrt(var)


def run_ensemble(cfg: SmeConfig, n_traj: int, initial_state, batch_size: int = 250):
    """Run ``n_traj`` independent trajectories (vectorised in batches).

    Trajectory ``i`` uses stream ``(cfg.seed, i)`` whatever the batch layout,
    and statistics are merged from per-batch sums, so the result does not
    depend on ``batch_size``.  For ``engine='both'`` a dict of stats is
    returned.
    """
    if n_traj < 1:
        raise DomainError("n_traj must be >= 1")
    engines = ["fock", "gaussian"] if cfg.engine == "both" else [cfg.engine]
    acc = {e: _Accumulator() for e in engines}
    state_sums = {}
    if "fock" in engines:
        rho0 = _initial_density(initial_state, cfg.dim)
    if "gaussian" in engines:
        m0, c0 = _initial_moments(initial_state, cfg.dim)
    for start in range(0, n_traj, batch_size):
        idx = range(start, min(n_traj, start + batch_size))
        dws = np.stack([wiener_increments(cfg, i) for i in idx])
        for e in engines:
            if e == "fock":
                mean, cov, nbar, _, snaps, _ = _run_fock(cfg, rho0, dws)
                for t, r in snaps.items():
                    state_sums[t] = state_sums.get(t, 0) + r.sum(axis=0)
            else:
                mean, cov, nbar = _run_gaussian(cfg, m0, c0, dws)
            a = acc[e]
            a.n += len(idx)
            a.add("n", nbar)
            a.add("mean", mean)
            a.add("var", np.stack([cov[..., 0, 0], cov[..., 1, 1]], axis=-1))
    out = {}
    for e in engines:
        a = acc[e]
        n_m, n_se, _ = a.stats("n")
        m_m, m_se, m_sd = a.stats("mean")
        v_m, v_se, _ = a.stats("var")
        states = {t: s / n_traj for t, s in state_sums.items()} if e == "fock" else {}
        out[e] = EnsembleStats(e, n_traj, cfg.times, n_m, n_se, m_m, m_se, m_sd, v_m, v_se,
                               states)
    return out if cfg.engine == "both" else out[cfg.engine]


def integrate_lindblad(rho0: np.ndarray, n_bath: float, t_final: float, dt: float = 1e-3,
                       method: str = "rk4") -> np.ndarray:
    """Deterministic integration of the master equation (``rk4`` or the ``euler`` mean map)."""
    model = FockModel(Unravelling(0.0, n_bath), rho0.shape[0])
    rho = np.array(rho0, dtype=complex)
    f = model.lindblad_rhs
    for _ in range(int(round(t_final / dt))):
        if method == "euler":
            rho = rho + dt * f(rho)
        elif method == "rk4":
            k1 = f(rho)
            k2 = f(rho + 0.5 * dt * k1)
            k3 = f(rho + 0.5 * dt * k2)
            k4 = f(rho + dt * k3)
            rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            raise DomainError(f"unknown method {method!r}")
    return rho


def thermal_photon_number(n0: float, n_bath: float, t):
    """Closed-form ``<n>(t) = N + (n0 - N) exp(-t)`` of the master equation."""
    return n_bath + (n0 - n_bath) * np.exp(-np.asarray(t, dtype=float))


def photon_number(rho: np.ndarray) -> float:
    return float(np.real(np.sum(np.arange(rho.shape[0]) * np.diag(rho))))


def euler_mean_photon_number(rho0: np.ndarray, n_bath: float, t: float, dt: float) -> float:
    """Exact ensemble mean of ``<n>(t)`` produced by the Euler scheme.

    The innovation terms are trace-free and linear in the increments, so
    the trajectory average obeys the Euler-discretised master equation.
    """
    return photon_number(integrate_lindblad(rho0, n_bath, t, dt, method="euler"))


def euler_weak_bias(rho0: np.ndarray, n_bath: float, t: float, dts, ref_dt: float = 5e-4):
    """Weak bias of ``<n>(t)`` for each step in ``dts``.

    Measured against an RK4 solution on the same truncation, so the result
    is the time-discretisation error alone (free of truncation error).
    """
    ref = photon_number(integrate_lindblad(rho0, n_bath, t, ref_dt))
    return np.array([euler_mean_photon_number(rho0, n_bath, t, dt) - ref for dt in dts])


def _order_lstsq(dts, y, n_corr):
    x = np.stack([np.log(dts), np.ones_like(dts)] + [dts ** j for j in range(1, n_corr + 1)],
                 axis=1)
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    dof = len(dts) - x.shape[1]
    s2 = float(resid @ resid) / dof if dof else 0.0
    cov = s2 * np.linalg.inv(x.T @ x)
    return coef, math.sqrt(cov[0, 0])


def weak_order_fit(dts, biases, n_corr: int = 2):
    """Fit ``log|bias| = p log dt + c + sum_k kappa_k dt^k`` (``k <= n_corr``).

    Returns ``(p, se_p, kappas)``.  The biases are deterministic, so the
    residual scatter only reflects the omitted next order; ``se_p`` therefore
    combines the residual standard error with the shift of ``p`` when the
    last correction term is dropped.
    """
    dts = np.asarray(dts, dtype=float)
    y = np.log(np.abs(np.asarray(biases, dtype=float)))
    if n_corr < 1 or len(dts) < n_corr + 3:
        raise DomainError(f"need at least {n_corr + 3} step sizes for the order fit")
    coef, se = _order_lstsq(dts, y, n_corr)
    lower, _ = _order_lstsq(dts, y, n_corr - 1)
    se = math.hypot(se, float(coef[0] - lower[0]))
    return float(coef[0]), se, tuple(float(k) for k in coef[2:])


def steady_state_variance(cfg: SmeConfig, n_traj: int, initial_state, t_min: float) -> dict:
    """Steady conditional ``var_q`` per engine as ``(estimate, error bar)``.

    The estimate is the time average over ``t >= t_min`` of the ensemble
    mean; the error bar is the largest ensemble standard error in that window.
    """
    stats = run_ensemble(cfg, n_traj, initial_state)
    stats = stats if isinstance(stats, dict) else {cfg.engine: stats}
    out = {}
    for name, st in stats.items():
        sel = st.times >= t_min
        out[name] = (float(st.cond_var[sel, 0].mean()), float(st.cond_var_se[sel, 0].max()))
    return out
