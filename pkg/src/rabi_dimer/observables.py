"""Expectation values in the multi-D2 state.

All quantities are bare expectation values <D|O|D>; divide by ``norm`` for the
normalized ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ansatz import LEFT, RIGHT, MultiD2State, OverlapTables, build_overlap_tables
from .elements import amplitude_elements
from .model import ModelSpec

#: largest imaginary part tolerated in an expectation value of a Hermitian operator
IMAG_TOL = 1e-9

COLUMNS = ("t", "tJ", "N_L", "N_R", "Z", "N_tot", "sigz_L", "sigz_R", "norm", "energy")


class ConsistencyError(ArithmeticError):
    """An expectation value of a Hermitian operator came out complex."""


@dataclass
class ObservableRecord:
    t: float
    tJ: float
    N_L: float
    N_R: float
    sigz_L: float
    sigz_R: float
    norm: float
    energy: float
    bath_populations: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def Z(self) -> float:
        return self.N_L - self.N_R

    @property
    def N_tot(self) -> float:
        return self.N_L + self.N_R

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in COLUMNS)


def _real(value, what: str) -> float:
    value = complex(value)
    if abs(value.imag) > IMAG_TOL * max(1.0, abs(value.real)):
        raise ConsistencyError(f"{what} has imaginary residue {value.imag:.3e}")
    return value.real


def _tables(state, tables, model=None):
    if tables is not None:
        return tables
    if model is not None and state.n_bath:
        return build_overlap_tables(state, model.modes.omega, model.modes.phi)
    return build_overlap_tables(state)


def norm(state: MultiD2State, tables: OverlapTables | None = None) -> float:
    tables = _tables(state, tables)
    return _real(np.sum(tables.theta_a * tables.S), "norm")


def photon_numbers(state: MultiD2State, tables: OverlapTables | None = None):
    tables = _tables(state, tables)
    weight = tables.theta_a * tables.S
    n_l = _real(np.sum(weight * tables.disp_pair[LEFT]), "N_L")
    n_r = _real(np.sum(weight * tables.disp_pair[RIGHT]), "N_R")
    return n_l, n_r


def qubit_polarizations(state: MultiD2State, tables: OverlapTables | None = None):
    tables = _tables(state, tables)
    return (_real(np.sum(tables.theta_b * tables.S), "sigma_z left"),
            _real(np.sum(tables.theta_c * tables.S), "sigma_z right"))


def bath_populations(state: MultiD2State, tables: OverlapTables | None = None) -> np.ndarray:
    tables = _tables(state, tables)
    if not state.n_bath:
        return np.zeros(0)
    eta = state.eta
    weight = tables.theta_a * tables.S
    pops = np.einsum("ln,lk,nk->k", weight, np.conj(eta), eta)
    scale = np.maximum(1.0, np.abs(pops.real))
    if np.any(np.abs(pops.imag) > IMAG_TOL * scale):
        raise ConsistencyError(
            f"bath populations have imaginary residue {np.abs(pops.imag).max():.3e}")
    return pops.real.copy()


def energy(state: MultiD2State, model: ModelSpec, t: float,
           tables: OverlapTables | None = None) -> float:
    """<D|H(t)|D>."""
    tables = _tables(state, tables, model)
    h = amplitude_elements(state, model, t, tables)
    return _real(np.einsum("ls,sln->", np.conj(state.amps), h), "energy")


def observe(state: MultiD2State, model: ModelSpec, t: float | None = None) -> ObservableRecord:
    """Evaluate every observable from one set of overlap tables."""
    t = state.t if t is None else t
    tables = _tables(state, None, model)
    n_l, n_r = photon_numbers(state, tables)
    sz_l, sz_r = qubit_polarizations(state, tables)
    return ObservableRecord(
        t=t, tJ=t * model.J, N_L=n_l, N_R=n_r, sigz_L=sz_l, sigz_R=sz_r,
        norm=norm(state, tables), energy=energy(state, model, t, tables),
        bath_populations=bath_populations(state, tables))
