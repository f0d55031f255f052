"""Exact propagation in a truncated product Fock basis.

Basis ordering is qubits (L, R; up = 0) x left photon x right photon x bath
modes, the last factor varying fastest.  Intended for small instances only:
it validates the variational engine and shares none of its machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .model import ModelSpec
from .observables import ObservableRecord

MAX_BATH_MODES = 3
DEFAULT_DT = 1e-3
NORM_DRIFT_TOL = 1e-6
TRUNCATION_TOL = 1e-8

_SZ = sp.csr_matrix(np.diag([1.0, -1.0]))
_SX = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


class BudgetError(ValueError):
    """The requested Fock basis exceeds the configured size budget."""


class TruncationError(ValueError):
    """A coherent state does not fit in the truncated basis."""


class UnitarityError(ArithmeticError):
    """The exact propagation lost norm beyond tolerance."""


@dataclass(frozen=True)
class FockBasisSpec:
    n_max_photon: int = 14
    n_max_bath: int = 4
    n_bath: int = 0
    max_dim: int = 2_000_000

    @property
    def dims(self) -> tuple:
        return (2, 2, self.n_max_photon + 1, self.n_max_photon + 1) + \
            (self.n_max_bath + 1,) * self.n_bath

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def check(self) -> None:
        if self.n_bath > MAX_BATH_MODES:
            raise BudgetError(f"oracle supports at most {MAX_BATH_MODES} bath modes, got {self.n_bath}")
        if self.dim > self.max_dim:
            raise BudgetError(f"Fock dimension {self.dim} exceeds budget {self.max_dim}")


@dataclass
class FockState:
    vector: np.ndarray
    spec: FockBasisSpec
    t: float = 0.0

    def norm(self) -> float:
        return float(np.vdot(self.vector, self.vector).real)


def _annihilator(n_max: int):
    return sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1, format="csr")


def _embed(ops: dict, dims):
    """Kronecker product placing ``ops[i]`` on factor i and identities elsewhere."""
    out = None
    for i, d in enumerate(dims):
        factor = ops.get(i, sp.identity(d, format="csr"))
        out = factor if out is None else sp.kron(out, factor, format="csr")
    return out


class FockHamiltonian:
    """H(t) = H_static + Delta_L(t)/2 sz_L + Delta_R(t)/2 sz_R in the truncated basis."""

    def __init__(self, model: ModelSpec, spec: FockBasisSpec):
        if spec.n_bath != model.n_bath:
            raise ValueError(f"basis has {spec.n_bath} bath modes, model has {model.n_bath}")
        spec.check()
        self.model, self.spec = model, spec
        dims = spec.dims
        a = _annihilator(spec.n_max_photon)
        aL, aR = _embed({2: a}, dims), _embed({3: a}, dims)
        self.sz_left = _embed({0: _SZ}, dims)
        self.sz_right = _embed({1: _SZ}, dims)
        sx_left, sx_right = _embed({0: _SX}, dims), _embed({1: _SX}, dims)

        h = model.omega_left * (aL.T @ aL) + model.omega_right * (aR.T @ aR)
        h = h - model.J * (aL.T @ aR + aR.T @ aL)
        h = h - model.g * ((aL.T + aL) @ sx_left + (aR.T + aR) @ sx_right)
        b = _annihilator(spec.n_max_bath)
        sz_sum = self.sz_left + self.sz_right
        self.bath_number = []
        for k in range(spec.n_bath):
            bk = _embed({4 + k: b}, dims)
            nk = bk.T @ bk
            self.bath_number.append(nk.diagonal())
            h = h + model.modes.omega[k] * nk + model.modes.phi[k] * ((bk.T + bk) @ sz_sum)
        self.static = h.tocsr()
        self.n_left = (aL.T @ aL).diagonal()
        self.n_right = (aR.T @ aR).diagonal()
        self.sz_left_diag = self.sz_left.diagonal()
        self.sz_right_diag = self.sz_right.diagonal()

    def __call__(self, t: float):
        dl, dr = self.model.splittings(t)
        return (self.static + 0.5 * dl * self.sz_left + 0.5 * dr * self.sz_right).tocsr()

    def apply(self, t: float, psi):
        dl, dr = self.model.splittings(t)
        return self.static @ psi + 0.5 * (dl * self.sz_left_diag + dr * self.sz_right_diag) * psi

    def observe(self, psi, t: float) -> ObservableRecord:
        prob = np.abs(psi) ** 2
        energy = np.vdot(psi, self.apply(t, psi))
        return ObservableRecord(
            t=t, tJ=t * self.model.J,
            N_L=float(prob @ self.n_left), N_R=float(prob @ self.n_right),
            sigz_L=float(prob @ self.sz_left_diag), sigz_R=float(prob @ self.sz_right_diag),
            norm=float(prob.sum()), energy=float(energy.real),
            bath_populations=np.array([prob @ nk for nk in self.bath_number]))


def build_hamiltonian(model: ModelSpec, spec: FockBasisSpec, t: float = 0.0):
    """Sparse matrix of H(t) in the truncated basis."""
    return FockHamiltonian(model, spec)(t)


def coherent_vector(z: complex, n_max: int) -> np.ndarray:
    """Fock amplitudes exp(-|z|^2/2) z^n / sqrt(n!) for n <= n_max."""
    n = np.arange(n_max + 1)
    log_fact = np.array([0.5 * np.log(float(factorial(int(k)))) for k in n])
    vec = np.exp(-0.5 * abs(z) ** 2 - log_fact) * np.power(complex(z), n)
    tail = 1.0 - np.sum(np.abs(vec) ** 2)
    if tail > TRUNCATION_TOL:
        raise TruncationError(
            f"coherent state |{z:.4g}> loses {tail:.2e} of its weight above n={n_max}")
    return vec


def convert_ansatz_to_fock(state, spec: FockBasisSpec) -> FockState:
    """Expand a multi-D2 state over the truncated Fock basis."""
    if state.n_bath != spec.n_bath:
        raise ValueError(f"state has {state.n_bath} bath modes, basis has {spec.n_bath}")
    spec.check()
    psi = np.zeros(spec.dim, dtype=complex)
    for n in range(state.multiplicity):
        bos = coherent_vector(state.mu[n], spec.n_max_photon)
        bos = np.kron(bos, coherent_vector(state.nu[n], spec.n_max_photon))
        for k in range(spec.n_bath):
            bos = np.kron(bos, coherent_vector(state.eta[n, k], spec.n_max_bath))
        psi += np.kron(state.amps[n], bos)
    return FockState(psi, spec, state.t)


def propagate_exact(state: FockState, model: ModelSpec, t_max: float, dt: float = DEFAULT_DT,
                    sample_every: int = 1, sink=None, method: str = "auto") -> list[ObservableRecord]:
    """Integrate the Schroedinger equation; returns the sampled trajectory.

    ``method="rk4"`` steps on the ``dt`` grid.  ``method="expm"`` applies the
    exact propagator between samples and needs a static Hamiltonian.  The
    default picks ``expm`` whenever the driving is static.
    """
    if method == "auto":
        method = "expm" if model.is_static() else "rk4"
    if method not in ("rk4", "expm"):
        raise ValueError(f"unknown method {method!r}")
    if method == "expm" and not model.is_static():
        raise ValueError("expm propagation needs a time-independent Hamiltonian")
    ham = FockHamiltonian(model, state.spec)
    psi = state.vector.copy()
    t0 = state.t
    norm0 = float(np.vdot(psi, psi).real)
    records = []

    def emit(t):
        rec = ham.observe(psi, t)
        records.append(rec)
        if sink is not None:
            sink(rec)

    def check(t):
        drift = abs(float(np.vdot(psi, psi).real) - norm0)
        if drift > NORM_DRIFT_TOL:
            raise UnitarityError(f"norm drift {drift:.2e} at t={t:.4f}")

    def f(t, y):
        return -1j * ham.apply(t, y)

    emit(t0)
    n_steps = int(round(t_max / dt))
    if method == "expm":
        gen = (-1j * ham(t0)).tocsc()
        step = 0
        while step < n_steps:
            block = min(sample_every, n_steps - step)
            psi = expm_multiply(gen * (block * dt), psi)
            step += block
            check(t0 + step * dt)
            if step % sample_every == 0:
                emit(t0 + step * dt)
    else:
        for step in range(1, n_steps + 1):
            t = t0 + (step - 1) * dt
            k1 = f(t, psi)
            k2 = f(t + 0.5 * dt, psi + 0.5 * dt * k1)
            k3 = f(t + 0.5 * dt, psi + 0.5 * dt * k2)
            k4 = f(t + dt, psi + dt * k3)
            psi = psi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if step % sample_every == 0 or step == n_steps:
                check(t + dt)
                if step % sample_every == 0:
                    emit(t0 + step * dt)
    state.vector = psi
    state.t = t0 + n_steps * dt
    return records
