"""Physical model of the driven, dissipative Rabi dimer.

All energies and frequencies are in units of the photon frequency (omega0 = 1),
times in units of 1/omega0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gamma, gammainc, gammaincc

#: lower edge of the logarithmic grid, relative to the cutoff frequency
OMEGA_FLOOR_FACTOR = 1e-4


class ModelError(ValueError):
    """Raised when model parameters violate a physical invariant."""


@dataclass(frozen=True)
class DrivingField:
    """Harmonic modulation ``amplitude * cos(frequency * t + phase)`` of a qubit splitting."""

    amplitude: float = 1.0
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ModelError(f"driving amplitude must be >= 0, got {self.amplitude}")
        if self.frequency < 0:
            raise ModelError(f"driving frequency must be >= 0, got {self.frequency}")

    def __call__(self, t):
        return driving(t, self)


@dataclass(frozen=True)
class BathSpec:
    alpha: float = 0.1
    s: float = 0.5
    omega_c: float = 1.0
    omega_max: float = 20.0
    n_modes: int = 60

    def __post_init__(self):
        if self.alpha < 0:
            raise ModelError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.s <= 1:
            raise ModelError(f"exponent s must lie in (0, 1], got {self.s}")
        if self.omega_c <= 0:
            raise ModelError(f"omega_c must be > 0, got {self.omega_c}")
        if self.omega_max <= self.omega_c:
            raise ModelError(
                f"omega_max must exceed omega_c, got {self.omega_max} <= {self.omega_c}")
        if self.n_modes < 0:
            raise ModelError(f"n_modes must be >= 0, got {self.n_modes}")

    @property
    def omega_floor(self) -> float:
        return OMEGA_FLOOR_FACTOR * self.omega_c

    @property
    def effective_alpha(self) -> float:
        """Coupling actually felt by the qubits (zero without modes)."""
        return self.alpha if self.n_modes > 0 else 0.0


@dataclass(frozen=True)
class DiscretizedBath:
    """Bath modes with frequencies ``omega`` and qubit couplings ``phi``."""

    omega: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float).reshape(-1)
        phi = np.asarray(self.phi, dtype=float).reshape(-1)
        if omega.shape != phi.shape:
            raise ModelError("omega and phi must have the same length")
        if omega.size and (np.any(omega <= 0) or np.any(np.diff(omega) <= 0)):
            raise ModelError("bath frequencies must be positive and strictly increasing")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "phi", phi)

    def __len__(self):
        return self.omega.size

    def reorganization(self) -> float:
        """Sum of squared couplings, i.e. the integrated spectral weight."""
        return float(np.sum(self.phi**2))


def spectral_density(omega, bath: BathSpec):
    """Sub-Ohmic spectral density ``2 alpha wc^(1-s) w^s exp(-w/wc)``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ModelError("spectral density is defined for omega >= 0 only")
    val = 2.0 * bath.alpha * bath.omega_c ** (1.0 - bath.s) * w**bath.s * np.exp(-w / bath.omega_c)
    return val if val.ndim else float(val)


def _moment(bath: BathSpec, lo, hi, order: int):
    # closed form of int_lo^hi w^order J(w) dw via the regularized incomplete gamma
    a = bath.s + 1.0 + order
    wc = bath.omega_c
    lo = np.asarray(lo, dtype=float) / wc
    hi = np.asarray(hi, dtype=float) / wc
    # past the peak the lower function is close to 1; difference the upper one instead
    diff = np.where(lo > a, gammaincc(a, lo) - gammaincc(a, hi), gammainc(a, hi) - gammainc(a, lo))
    return 2.0 * bath.alpha * wc ** (2.0 + order) * gamma(a) * diff


def bin_weights(bath: BathSpec, edges):
    """Return ``(centroids, couplings)`` for the bins delimited by ascending ``edges``."""
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    w0 = _moment(bath, lo, hi, 0)
    w1 = _moment(bath, lo, hi, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        centroid = np.where(w0 > 0, w1 / w0, 0.5 * (lo + hi))
    return centroid, np.sqrt(np.clip(w0, 0.0, None))


def log_edges(bath: BathSpec) -> np.ndarray:
    """Ascending logarithmic bin edges from the frequency floor to ``omega_max``."""
    n = bath.n_modes
    ratio = (bath.omega_floor / bath.omega_max) ** (1.0 / n)
    edges = bath.omega_max * ratio ** np.arange(n + 1)
    edges[-1] = bath.omega_floor
    return edges[::-1].copy()


def discretize_bath(bath: BathSpec) -> DiscretizedBath:
    """Logarithmic discretization of the spectral density.

    Each bin carries ``phi_k**2 = int_bin J`` and sits at the J-weighted centroid
    of the bin, so the zeroth and first moments of J are preserved bin by bin.
    """
    if bath.omega_max <= 0:
        raise ModelError("omega_max must be positive")
    if bath.n_modes == 0:
        return DiscretizedBath()
    omega, phi = bin_weights(bath, log_edges(bath))
    return DiscretizedBath(omega, phi)


def bath_from_frequencies(bath: BathSpec, frequencies) -> DiscretizedBath:
    """Place modes by hand and assign couplings from the sum rule.

    Bin edges are the midpoints between neighbouring frequencies; the lowest bin
    starts at the frequency floor and the highest is mirrored about its mode.
    """
    freqs = np.sort(np.asarray(frequencies, dtype=float))
    if freqs.size == 0:
        return DiscretizedBath()
    mids = 0.5 * (freqs[1:] + freqs[:-1])
    top = freqs[-1] + (freqs[-1] - mids[-1] if mids.size else freqs[-1])
    edges = np.concatenate([[bath.omega_floor], mids, [top]])
    _, phi = bin_weights(bath, edges)
    return DiscretizedBath(freqs, phi)


def driving(t, field: DrivingField):
    """Instantaneous qubit splitting ``A cos(Omega t + Phi)``."""
    return field.amplitude * np.cos(field.frequency * t + field.phase)


@dataclass(frozen=True)
class ModelSpec:
    """Complete Hamiltonian parameters of the dimer plus its discretized bath.

    ``modes`` defaults to the logarithmic discretization of ``bath``; pass it
    explicitly to use hand-placed modes.
    """

    omega0: float = 1.0
    J: float = 0.05
    g: float = 0.3
    left: DrivingField = field(default_factory=DrivingField)
    right: DrivingField = field(default_factory=DrivingField)
    bath: BathSpec = field(default_factory=lambda: BathSpec(n_modes=0))
    modes: DiscretizedBath | None = None

    def __post_init__(self):
        if self.J < 0:
            raise ModelError(f"J must be >= 0, got {self.J}")
        if self.g < 0:
            raise ModelError(f"g must be >= 0, got {self.g}")
        if self.omega0 < 0:
            raise ModelError(f"omega0 must be >= 0, got {self.omega0}")
        modes = self.modes if self.modes is not None else discretize_bath(self.bath)
        if self.bath.effective_alpha == 0.0 and len(modes):
            # no coupling: keep the modes but silence them
            modes = DiscretizedBath(modes.omega, np.zeros_like(modes.phi))
        object.__setattr__(self, "modes", modes)

    @property
    def n_bath(self) -> int:
        return len(self.modes)

    @property
    def omega_left(self) -> float:
        return self.omega0

    @property
    def omega_right(self) -> float:
        return self.omega0

    def splittings(self, t):
        """``(Delta_L(t), Delta_R(t))``."""
        return driving(t, self.left), driving(t, self.right)

    def is_static(self) -> bool:
        return (self.left.frequency == 0 or self.left.amplitude == 0) and \
            (self.right.frequency == 0 or self.right.amplitude == 0)

    def with_(self, **changes) -> "ModelSpec":
        if "bath" in changes and "modes" not in changes:
            changes["modes"] = None
        return replace(self, **changes)
