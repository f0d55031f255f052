"""Variational equations of motion and their time integration.

The Dirac-Frenkel equations are linear in the time derivatives of the
variational parameters but also contain their complex conjugates (through the
normalization of the coherent states), so they are solved as a real system in
the real and imaginary parts of every derivative.

Unknowns and equations share one ordering: the parameter families A, B, C, D,
mu, nu, eta_1 .. eta_N, each running over the M branches, first all real parts
then all imaginary parts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, lapack, lstsq

from .ansatz import N_QUBIT_STATES, MultiD2State, build_overlap_tables, write_checkpoint
from .elements import amplitude_elements, mode_elements
from .model import ModelSpec
from .observables import observe

log = logging.getLogger(__name__)

DEFAULT_DT = 2.5e-3
DEFAULT_RCOND = 1e-12
NORM_TOL = 1e-3
# a step whose norm changes by more than STEP_NORM_TOL is split in two, at most MAX_HALVINGS deep
STEP_NORM_TOL = 1e-7
MAX_HALVINGS = 8
# after this many truncated solves in a row the LU attempt is only repeated every LU_RETRY solves
LU_PATIENCE = 4
LU_RETRY = 32


class NumericalError(ArithmeticError):
    """The linear system or the state became non-finite."""

    def __init__(self, message, **dump):
        super().__init__(message)
        self.dump = dump


class NormDriftError(ArithmeticError):
    """The norm of the trial state drifted beyond tolerance."""

    def __init__(self, message, state=None, checkpoint=None):
        super().__init__(message)
        self.state = state
        self.checkpoint = checkpoint


@dataclass
class TangentVector:
    """Time derivatives of all variational parameters, family-major flat layout."""

    z_dot: np.ndarray
    multiplicity: int

    @property
    def amps(self) -> np.ndarray:
        m = self.multiplicity
        return self.z_dot[: N_QUBIT_STATES * m].reshape(N_QUBIT_STATES, m).T

    @property
    def disp(self) -> np.ndarray:
        m = self.multiplicity
        return self.z_dot[N_QUBIT_STATES * m:].reshape(-1, m).T


@dataclass
class SolverReport:
    residual: float
    rank: int
    condition: float
    truncated: bool = False


@dataclass
class SolverStats:
    """Running summary of the per-step solver reports of one trajectory."""

    solves: int = 0
    truncated: int = 0
    max_residual: float = 0.0
    max_condition: float = 0.0
    min_rank: int | None = None
    rejected_steps: int = 0
    streak: int = field(default=0, repr=False)

    def add(self, report: SolverReport) -> None:
        self.solves += 1
        self.truncated += report.truncated
        self.streak = self.streak + 1 if report.truncated else 0
        self.max_residual = max(self.max_residual, report.residual)
        self.max_condition = max(self.max_condition, report.condition)
        self.min_rank = report.rank if self.min_rank is None else min(self.min_rank, report.rank)

    def wants_lu(self) -> bool:
        """False while the system keeps needing truncation; the LU attempt would be wasted."""
        return self.streak < LU_PATIENCE or self.streak % LU_RETRY == 0

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        del out["streak"]
        return out


def _coefficients(state: MultiD2State, tables):
    """Complex coefficient blocks P (of z_dot) and Q (of conj(z_dot)) of the left-hand side."""
    m, k = state.multiplicity, state.n_modes
    amps, disp = state.amps, state.disp
    S = tables.S
    nf = N_QUBIT_STATES + k
    P = np.zeros((nf, m, nf, m), dtype=complex)
    Q = np.zeros_like(P)

    # derivative of branch n's coherent normalization seen from bra branch l
    W = np.conj(disp).T[:, :, None] - 0.5 * np.conj(disp).T[:, None, :]   # [mode, l, n]
    V = -0.5 * disp.T                                                      # [mode, n]
    iS = 1j * S
    qa, md = slice(0, N_QUBIT_STATES), slice(N_QUBIT_STATES, nf)

    idx = np.arange(N_QUBIT_STATES)
    P[idx, :, idx, :] = iS[None]
    P[qa, :, md, :] = np.einsum("ln,ns,mln->slmn", iS, amps, W)
    Q[qa, :, md, :] = np.einsum("ln,ns,mn->slmn", iS, amps, V)

    P[md, :, qa, :] = np.einsum("ln,ls,nm->mlsn", iS, np.conj(amps), disp)
    wt = iS * tables.theta_a
    mm = np.einsum("ln,nm,pln->mlpn", wt, disp, W)
    mm[np.arange(k), :, np.arange(k), :] += wt[None]
    P[md, :, md, :] = mm
    Q[md, :, md, :] = np.einsum("ln,nm,pn->mlpn", wt, disp, V)
    size = nf * m
    return P.reshape(size, size), Q.reshape(size, size)


def assemble_eom(state: MultiD2State, model: ModelSpec, t: float | None = None):
    """Real linear system ``matrix @ y = rhs`` for ``y = [Re z_dot, Im z_dot]``."""
    t = state.t if t is None else t
    if state.n_bath != model.n_bath:
        raise ValueError(f"state has {state.n_bath} bath modes, model has {model.n_bath}")
    tables = build_overlap_tables(state, model.modes.omega, model.modes.phi)
    P, Q = _coefficients(state, tables)
    h = amplitude_elements(state, model, t, tables)
    r = mode_elements(state, model, t, tables, h)
    rhs = np.concatenate([h.sum(axis=2).ravel(), r.sum(axis=2).ravel()])

    G = P + Q
    H = 1j * (P - Q)
    matrix = np.block([[G.real, H.real], [G.imag, H.imag]])
    return matrix, np.concatenate([rhs.real, rhs.imag])


def solve_tangent(matrix, rhs, rcond: float = DEFAULT_RCOND, multiplicity: int | None = None,
                  try_lu: bool = True):
    """Minimum-norm solution with singular values below ``rcond * s_max`` discarded.

    An LU solve is tried first (unless ``try_lu`` is false); it is kept only
    when the condition estimate guarantees that no singular value would have
    been truncated.
    """
    if not 0 < rcond < 1:
        raise ValueError(f"rcond must lie in (0, 1), got {rcond}")
    matrix = np.asarray(matrix, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(rhs))):
        raise NumericalError(
            f"non-finite entries: {np.count_nonzero(~np.isfinite(matrix))} in matrix, "
            f"{np.count_nonzero(~np.isfinite(rhs))} in rhs", matrix=matrix, rhs=rhs)
    p = matrix.shape[0]

    rc = 0.0
    if try_lu:
        lu, piv, info = lapack.dgetrf(matrix)
        if info == 0:
            rc, _ = lapack.dgecon(lu, np.abs(matrix).sum(axis=0).max())
    # 1-norm and 2-norm condition numbers differ by at most a factor p
    if rc > p * rcond:
        y, _ = lapack.dgetrs(lu, piv, rhs)
        report = SolverReport(float(np.linalg.norm(matrix @ y - rhs)), p, 1.0 / rc)
    else:
        try:
            y, _, rank, sv = lstsq(matrix, rhs, cond=rcond, lapack_driver="gelsd",
                                   check_finite=False)
        except LinAlgError:
            # divide and conquer occasionally fails to converge; plain QR iteration is slower but robust
            try:
                y, _, rank, sv = lstsq(matrix, rhs, cond=rcond, lapack_driver="gelss",
                                       check_finite=False)
            except LinAlgError as exc:
                raise NumericalError(f"SVD failed: {exc}", matrix=matrix, rhs=rhs) from exc
        cond = sv[0] / sv[rank - 1] if rank else np.inf
        report = SolverReport(float(np.linalg.norm(matrix @ y - rhs)), int(rank), float(cond),
                              truncated=bool(rank < p))
    half = p // 2
    z_dot = y[:half] + 1j * y[half:]
    if multiplicity is None:
        return z_dot, report
    return TangentVector(z_dot, multiplicity), report


def time_derivative(state: MultiD2State, model: ModelSpec, t: float | None = None,
                    rcond: float = DEFAULT_RCOND, try_lu: bool = True):
    matrix, rhs = assemble_eom(state, model, t)
    return solve_tangent(matrix, rhs, rcond, state.multiplicity, try_lu)


def rk4_step(state: MultiD2State, model: ModelSpec, t: float | None, dt: float,
             rcond: float = DEFAULT_RCOND, stats: SolverStats | None = None) -> MultiD2State:
    """Classic four-stage Runge-Kutta step on the full parameter vector."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    t = state.t if t is None else t
    m = state.multiplicity
    z0 = state.to_vector()

    def f(z, tau):
        try_lu = stats is None or stats.wants_lu()
        tangent, report = time_derivative(MultiD2State.from_vector(z, m, tau), model, tau, rcond,
                                          try_lu)
        if stats is not None:
            stats.add(report)
        return tangent.z_dot

    k1 = f(z0, t)
    k2 = f(z0 + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(z0 + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(z0 + dt * k3, t + dt)
    z1 = z0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(z1)):
        raise NumericalError(f"state became non-finite at t={t + dt}", z=z1)
    return MultiD2State.from_vector(z1, m, t + dt)


def _advance(state, model, t, dt, rcond, stats, step_tol, depth):
    """One RK4 step, recursively split while the norm changes by more than ``step_tol``.

    The exact variational flow conserves the norm, so its change over a step
    is a cheap local error indicator.
    """
    new = rk4_step(state, model, t, dt, rcond, stats)
    if depth > 0 and abs(new.norm() - state.norm()) > step_tol:
        stats.rejected_steps += 1
        log.debug("norm jump %.2e at t=%.6f, splitting dt=%.3e",
                  new.norm() - state.norm(), t, dt)
        half = _advance(state, model, t, 0.5 * dt, rcond, stats, step_tol, depth - 1)
        new = _advance(half, model, t + 0.5 * dt, 0.5 * dt, rcond, stats, step_tol, depth - 1)
    return new


def propagate(state: MultiD2State, model: ModelSpec, t_max: float, dt: float = DEFAULT_DT,
              sample_every: int = 1, sink=None, rcond: float = DEFAULT_RCOND,
              norm_tol: float = NORM_TOL, checkpoint=None, checkpoint_every: int = 0,
              stats: SolverStats | None = None, step_tol: float = STEP_NORM_TOL,
              max_halvings: int = MAX_HALVINGS) -> MultiD2State:
    """Integrate from ``state.t`` to ``state.t + t_max`` on a fixed grid of width ``dt``.

    ``sink`` receives an ObservableRecord at the start and after every
    ``sample_every``-th step.  A step whose norm changes by more than
    ``step_tol`` is redone as two half steps, recursively up to
    ``max_halvings`` times.  If the norm still leaves ``1 +- norm_tol`` the
    last good state is checkpointed (when ``checkpoint`` names a file) and
    NormDriftError raised.
    """
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    stats = SolverStats() if stats is None else stats
    emit = sink if sink is not None else (lambda rec: None)
    emit(observe(state, model))
    n_steps = int(round(t_max / dt))
    t0 = state.t
    for step in range(1, n_steps + 1):
        t = t0 + (step - 1) * dt
        new = _advance(state, model, t, dt, rcond, stats, step_tol, max_halvings)
        if abs(new.norm() - 1.0) > norm_tol:
            if checkpoint is not None:
                write_checkpoint(state, checkpoint)
            raise NormDriftError(
                f"norm drifted to {new.norm():.6f} at t={t + dt:.6f}", state, checkpoint)
        new.t = t0 + step * dt
        state = new
        if checkpoint is not None and checkpoint_every and step % checkpoint_every == 0:
            write_checkpoint(state, checkpoint)
        if step % sample_every == 0:
            emit(observe(state, model))
    return state
