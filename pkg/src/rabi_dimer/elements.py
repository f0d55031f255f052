"""Hamiltonian matrix elements between multi-D2 branches.

``amplitude_elements`` gives <s, l| H |D> split by ket branch ``n`` and
``mode_elements`` the same for the projections <l| b_m H |D>.  Both already
carry the Debye-Waller factor.  They feed the right-hand side of the equations
of motion and the energy expectation value.
"""

from __future__ import annotations

import numpy as np

from .ansatz import (FLIP_LEFT, FLIP_RIGHT, LEFT, N_PHOTON_MODES, RIGHT, SIGZ_LEFT,
                     SIGZ_RIGHT, MultiD2State, OverlapTables)
from .model import ModelSpec

# +2 on |uu>, -2 on |dd>: eigenvalues of sigma_z^L + sigma_z^R
BATH_SIGN = SIGZ_LEFT + SIGZ_RIGHT


def photon_energy(state: MultiD2State, model: ModelSpec, tables: OverlapTables):
    """Pi[l, n]: free photon, hopping and bath energies of the coherent pair."""
    mu, nu = state.mu, state.nu
    return (model.omega_left * tables.disp_pair[LEFT]
            + model.omega_right * tables.disp_pair[RIGHT]
            - model.J * (np.conj(mu)[:, None] * nu[None, :] + np.conj(nu)[:, None] * mu[None, :])
            + tables.bath_energy)


def amplitude_elements(state: MultiD2State, model: ModelSpec, t: float,
                       tables: OverlapTables) -> np.ndarray:
    """h[s, l, n] = <s, coh_l| H |s-components of branch n>."""
    delta_l, delta_r = model.splittings(t)
    amps = state.amps
    mu, nu = state.mu, state.nu
    pi = photon_energy(state, model, tables)
    lift_mu = np.conj(mu)[:, None] + mu[None, :]
    lift_nu = np.conj(nu)[:, None] + nu[None, :]
    site = 0.5 * (SIGZ_LEFT * delta_l + SIGZ_RIGHT * delta_r)

    diag = site[:, None, None] + pi[None] + BATH_SIGN[:, None, None] * tables.bath_shift[None]
    h = amps.T[:, None, :] * diag
    h -= model.g * (lift_mu[None] * amps[:, FLIP_LEFT].T[:, None, :]
                    + lift_nu[None] * amps[:, FLIP_RIGHT].T[:, None, :])
    return h * tables.S[None]


def mode_elements(state: MultiD2State, model: ModelSpec, t: float, tables: OverlapTables,
                  amp_elems: np.ndarray | None = None) -> np.ndarray:
    """r[m, l, n] = sum_s conj(a_ls) <s, coh_l| b_m H |s-components of branch n>."""
    if amp_elems is None:
        amp_elems = amplitude_elements(state, model, t, tables)
    amps, disp = state.amps, state.disp
    mu, nu = state.mu, state.nu
    projected = np.einsum("ls,sln->ln", np.conj(amps), amp_elems)
    r = disp.T[:, None, :] * projected[None]

    ta = tables.theta_a
    extra = np.empty_like(r)
    extra[LEFT] = ta * (model.omega_left * mu - model.J * nu)[None, :] - model.g * tables.theta_d
    extra[RIGHT] = ta * (model.omega_right * nu - model.J * mu)[None, :] - model.g * tables.theta_e
    if state.n_bath:
        omega_k, phi_k = model.modes.omega, model.modes.phi
        eta = state.eta
        polar = (np.conj(amps[:, 0])[:, None] * amps[None, :, 0]
                 - np.conj(amps[:, 3])[:, None] * amps[None, :, 3])
        extra[N_PHOTON_MODES:] = (ta[None] * (omega_k[:, None] * eta.T)[:, None, :]
                                  + 2.0 * phi_k[:, None, None] * polar[None])
    return r + extra * tables.S[None]
