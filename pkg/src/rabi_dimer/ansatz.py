"""Multi-D2 trial state and its overlap machinery.

A branch ``n`` carries four qubit amplitudes (|uu>, |ud>, |du>, |dd>), with the
left qubit written first, and a coherent displacement for every bosonic mode.
Displacements are stored per branch as ``disp[n, m]`` with ``m = 0`` the left
photon, ``m = 1`` the right photon and ``m = 2 + k`` bath mode ``k``.

Every pair table below is indexed ``[l, n]`` with ``l`` the bra branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEFT, RIGHT = 0, 1
N_PHOTON_MODES = 2
N_QUBIT_STATES = 4

# sigma_z eigenvalues on the four-state qubit basis
SIGZ_LEFT = np.array([1.0, 1.0, -1.0, -1.0])
SIGZ_RIGHT = np.array([1.0, -1.0, 1.0, -1.0])
# basis index reached by flipping the left / right qubit
FLIP_LEFT = np.array([2, 3, 0, 1])
FLIP_RIGHT = np.array([1, 0, 3, 2])


@dataclass
class MultiD2State:
    """Snapshot of all variational parameters at time ``t``.

    Parameters
    ----------
    amps : (M, 4) complex array
        Qubit amplitudes ``A_n, B_n, C_n, D_n`` of each branch.
    disp : (M, 2 + N_bath) complex array
        Coherent displacements ``mu_n, nu_n, eta_nk``.
    t : float
        Time in units of 1/omega0.
    """

    amps: np.ndarray
    disp: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        self.disp = np.asarray(self.disp, dtype=complex)
        if self.amps.ndim != 2 or self.amps.shape[1] != N_QUBIT_STATES:
            raise ValueError(f"amps must have shape (M, 4), got {self.amps.shape}")
        if self.disp.ndim != 2 or self.disp.shape[0] != self.amps.shape[0] \
                or self.disp.shape[1] < N_PHOTON_MODES:
            raise ValueError(
                f"disp must have shape (M, 2 + N_bath) with M={self.amps.shape[0]}, "
                f"got {self.disp.shape}")

    @property
    def multiplicity(self) -> int:
        return self.amps.shape[0]

    @property
    def n_bath(self) -> int:
        return self.disp.shape[1] - N_PHOTON_MODES

    @property
    def n_modes(self) -> int:
        return self.disp.shape[1]

    A = property(lambda self: self.amps[:, 0])
    B = property(lambda self: self.amps[:, 1])
    C = property(lambda self: self.amps[:, 2])
    D = property(lambda self: self.amps[:, 3])
    mu = property(lambda self: self.disp[:, LEFT])
    nu = property(lambda self: self.disp[:, RIGHT])
    eta = property(lambda self: self.disp[:, N_PHOTON_MODES:])

    def copy(self) -> "MultiD2State":
        return MultiD2State(self.amps.copy(), self.disp.copy(), self.t)

    # flat complex vector, family-major: A..., B..., C..., D..., then each mode
    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.amps.T.ravel(), self.disp.T.ravel()])

    @classmethod
    def from_vector(cls, z, multiplicity: int, t: float = 0.0) -> "MultiD2State":
        z = np.asarray(z, dtype=complex)
        m = multiplicity
        amps = z[: N_QUBIT_STATES * m].reshape(N_QUBIT_STATES, m).T
        disp = z[N_QUBIT_STATES * m:].reshape(-1, m).T
        return cls(amps.copy(), disp.copy(), t)

    def norm(self) -> float:
        return float(np.real(np.sum(amplitude_bilinears(self.amps)[0] * overlap_matrix(self.disp))))

    def normalized(self) -> "MultiD2State":
        return MultiD2State(self.amps / np.sqrt(self.norm()), self.disp.copy(), self.t)


def coherent_overlap(z_bra, z_ket):
    """<z_bra|z_ket> for single-mode coherent states (broadcasts)."""
    z_bra = np.asarray(z_bra, dtype=complex)
    z_ket = np.asarray(z_ket, dtype=complex)
    return np.exp(np.conj(z_bra) * z_ket - 0.5 * np.abs(z_bra) ** 2 - 0.5 * np.abs(z_ket) ** 2)


def overlap_matrix(disp) -> np.ndarray:
    """Debye-Waller matrix ``S[l, n]`` over all modes at once."""
    disp = np.asarray(disp, dtype=complex)
    sq = 0.5 * np.sum(np.abs(disp) ** 2, axis=1)
    return np.exp(np.conj(disp) @ disp.T - sq[:, None] - sq[None, :])


def debye_waller(state: MultiD2State, l: int, n: int) -> complex:
    """Overlap of the bosonic coherent products of branches ``l`` (bra) and ``n`` (ket).

    Indices are zero-based.
    """
    m = state.multiplicity
    if not (0 <= l < m and 0 <= n < m):
        raise IndexError(f"branch indices ({l}, {n}) out of range for M={m}")
    zl, zn = state.disp[l], state.disp[n]
    photon = (np.conj(zl[:2]) * zn[:2] - 0.5 * np.abs(zl[:2]) ** 2 - 0.5 * np.abs(zn[:2]) ** 2)
    bath = np.sum(np.conj(zl[2:]) * zn[2:] - 0.5 * np.abs(zl[2:]) ** 2 - 0.5 * np.abs(zn[2:]) ** 2)
    return complex(np.exp(photon[0]) * np.exp(photon[1]) * np.exp(bath))


def amplitude_bilinears(amps):
    """The five qubit bilinears (a, b, c, d, e), each an ``[l, n]`` matrix.

    a: identity, b: left sigma_z, c: right sigma_z, d: left flip, e: right flip.
    """
    amps = np.asarray(amps, dtype=complex)
    ca = np.conj(amps)
    ta = ca @ amps.T
    tb = (ca * SIGZ_LEFT) @ amps.T
    tc = (ca * SIGZ_RIGHT) @ amps.T
    td = ca @ amps[:, FLIP_LEFT].T
    te = ca @ amps[:, FLIP_RIGHT].T
    return ta, tb, tc, td, te


@dataclass
class OverlapTables:
    """Pair tables shared by the equations of motion and the observables."""

    S: np.ndarray
    theta_a: np.ndarray
    theta_b: np.ndarray
    theta_c: np.ndarray
    theta_d: np.ndarray
    theta_e: np.ndarray
    # disp_pair[m, l, n] = conj(x_lm) x_nm
    disp_pair: np.ndarray
    # sum_k omega_k conj(eta_lk) eta_nk
    bath_energy: np.ndarray
    # sum_k phi_k (conj(eta_lk) + eta_nk)
    bath_shift: np.ndarray


def build_overlap_tables(state: MultiD2State, omega_k=None, phi_k=None) -> OverlapTables:
    nb = state.n_bath
    omega_k = np.zeros(nb) if omega_k is None else np.asarray(omega_k, dtype=float)
    phi_k = np.zeros(nb) if phi_k is None else np.asarray(phi_k, dtype=float)
    disp = state.disp
    eta = disp[:, N_PHOTON_MODES:]
    ta, tb, tc, td, te = amplitude_bilinears(state.amps)
    pair = np.conj(disp).T[:, :, None] * disp.T[:, None, :]
    bath_energy = (np.conj(eta) * omega_k) @ eta.T
    bath_shift = (np.conj(eta) @ phi_k)[:, None] + (eta @ phi_k)[None, :]
    return OverlapTables(overlap_matrix(disp), ta, tb, tc, td, te, pair, bath_energy, bath_shift)


NOISE_CENTERS = ("occupied", "vacuum")


def initial_state(multiplicity: int, n_bath: int, photons: float = 20.0,
                  noise_scale: float = 1e-2, seed: int = 0,
                  center: str = "occupied") -> MultiD2State:
    """Left resonator in a coherent state with mean ``photons``, both qubits down.

    Only branch 0 carries amplitude; its displacements are exact (no bath or
    right-photon excitation).  The empty branches get complex Gaussian noise
    of width ``noise_scale`` on every displacement, centred on branch 0
    (``center="occupied"``) or on the vacuum (``center="vacuum"``).  Since
    their amplitudes vanish, the noise leaves every observable unchanged.

    Branches seeded on the vacuum have negligible overlap with a strongly
    displaced branch 0 and barely take part in the early dynamics, hence the
    default.
    """
    if photons < 0:
        raise ValueError("photons must be >= 0")
    if center not in NOISE_CENTERS:
        raise ValueError(f"center must be one of {NOISE_CENTERS}, got {center!r}")
    rng = np.random.default_rng(seed)
    shape = (multiplicity, N_PHOTON_MODES + n_bath)
    disp = noise_scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    disp[0] = 0.0
    if center == "occupied":
        disp[:, LEFT] += np.sqrt(photons)
    else:
        disp[0, LEFT] = np.sqrt(photons)
    amps = np.zeros((multiplicity, N_QUBIT_STATES), dtype=complex)
    amps[0, 3] = 1.0
    return MultiD2State(amps, disp, 0.0).normalized()


def write_checkpoint(state: MultiD2State, path) -> None:
    """Flat text record: t, M, N_bath, then Re/Im pairs of A, B, C, D, mu, nu, eta[n, k]."""
    z = np.concatenate([state.amps.T.ravel(), state.mu, state.nu, state.eta.ravel()])
    flat = np.empty(2 * z.size)
    flat[0::2], flat[1::2] = z.real, z.imag
    with open(path, "w") as fh:
        fh.write(f"{state.t!r} {state.multiplicity} {state.n_bath}\n")
        fh.write(" ".join(f"{v:.17e}" for v in flat) + "\n")


def read_checkpoint(path) -> MultiD2State:
    with open(path) as fh:
        head = fh.readline().split()
        flat = np.array(fh.read().split(), dtype=float)
    t, m, nb = float(head[0]), int(head[1]), int(head[2])
    z = flat[0::2] + 1j * flat[1::2]
    if z.size != m * (N_QUBIT_STATES + N_PHOTON_MODES + nb):
        raise ValueError(f"checkpoint {path} has {z.size} parameters, expected M={m}, N_bath={nb}")
    amps = z[: 4 * m].reshape(4, m).T
    mu, nu = z[4 * m: 5 * m], z[5 * m: 6 * m]
    eta = z[6 * m:].reshape(m, nb)
    disp = np.column_stack([mu, nu, eta])
    return MultiD2State(amps.copy(), disp, t)
