"""Closed-form fault physics of the machine under test.

Covers PM flux degradation, coil-to-ground voltage modification, the
three-phase current unbalance index, inter-turn short-circuit parameter
modification and circulating current, two-phase (open-circuit) torque,
and the truncated MMF space distribution.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError

TWO_THIRDS_PI = 2.0 * math.pi / 3.0


class FaultClass(enum.IntEnum):
    """The five diagnostic classes; indices fix the classifier output layout."""

    NONE = 0
    DMAG = 1
    GND = 2
    ITSC = 3
    IOC = 4

    @property
    def csv_name(self) -> str:
        return "None" if self is FaultClass.NONE else self.name

    @classmethod
    def from_name(cls, name: str) -> "FaultClass":
        for member in cls:
            if member.csv_name == name:
                return member
        raise ConfigError(f"unknown fault class name {name!r}")


#: CSV label strings in class-index order.
FAULT_NAMES = tuple(fc.csv_name for fc in FaultClass)


@dataclass(frozen=True)
class FaultConfig:
    """Severity and circuit parameters shared by all fault recipes.

    ``mu_d`` and ``mu_t`` are rated fault magnitudes; the global scale
    ``severity`` multiplies every fault perturbation, so the effective
    demagnetization is ``severity * mu_d`` and the effective shorted-turn
    count is ``severity * mu_t``.
    """

    mu_d: float = 0.35              # rated demagnetization severity
    mu_t: int = 1                   # rated shorted turns
    R_g: float = 0.5                # ground-path resistance [ohm]
    R_sc: float = 10e-3             # shorted-loop resistance [ohm]
    L_sc: float | None = None       # shorted-loop inductance [H]; None -> turns^2 scaling
    severity: float = 1.0           # global scale in [0, 1]

    def __post_init__(self):
        if not 0.0 <= self.mu_d < 1.0:
            raise ConfigError(f"mu_d must be in [0, 1), got {self.mu_d}")
        if self.mu_t < 0:
            raise ConfigError(f"mu_t must be >= 0, got {self.mu_t}")
        if self.R_g <= 0:
            raise ConfigError(f"R_g must be > 0, got {self.R_g}")
        if self.R_sc <= 0:
            raise ConfigError(f"R_sc must be > 0, got {self.R_sc}")
        if self.L_sc is not None and self.L_sc < 0:
            raise ConfigError(f"L_sc must be >= 0, got {self.L_sc}")
        if not 0.0 <= self.severity <= 1.0:
            raise ConfigError(f"severity must be in [0, 1], got {self.severity}")

    def shorted_loop_inductance(self, Ls: float, N_ph: int) -> float:
        """L_sc if set, else the turns-squared default (mu_t/N_ph)^2 Ls."""
        if self.L_sc is not None:
            return self.L_sc
        return (self.mu_t / N_ph) ** 2 * Ls


def demagnetized_flux(psi_f, mu_d):
    """Degraded PM flux linkage (1 - mu_d) psi_f.

    Raises:
        ConfigError: if ``mu_d`` is outside [0, 1).
    """
    mu = np.asarray(mu_d, dtype=float)
    if np.any(mu < 0.0) or np.any(mu >= 1.0):
        raise ConfigError(f"mu_d must be in [0, 1), got {mu_d}")
    return (1.0 - mu_d) * psi_f


def ground_fault_voltage(Rs, Ls, i_a, di_a_dt, e_a, R_g, i_g):
    """Phase-a terminal voltage with a coil-to-ground path carrying ``i_g``."""
    return Rs * i_a + Ls * di_a_dt + e_a - R_g * i_g


def current_unbalance_index(I_a, I_b, I_c):
    """Percentage excess of the largest phase-current magnitude over the mean.

    Raises:
        NumericalError: if the mean magnitude is zero (degenerate input).
    """
    mags = np.abs(np.asarray([I_a, I_b, I_c], dtype=float))
    avg = mags.mean(axis=0)
    if np.any(avg == 0.0):
        raise NumericalError("current unbalance index undefined: zero mean magnitude")
    return (mags.max(axis=0) - avg) / avg * 100.0


def itsc_modified_params(Rs, Ls, mu_t, N_ph, R_sc):
    """Faulty-phase resistance and inductance with ``mu_t`` of ``N_ph`` turns shorted.

    Accepts fractional ``mu_t`` so severity-scaled effective turn counts can
    be evaluated on the same expressions.
    """
    if N_ph <= 0:
        raise ConfigError(f"N_ph must be > 0, got {N_ph}")
    if not 0 <= mu_t <= N_ph:
        raise ConfigError(f"mu_t must be in [0, N_ph], got {mu_t}")
    healthy_frac = (1.0 - mu_t / N_ph) ** 2
    return Rs * healthy_frac + R_sc, Ls * healthy_frac


def itsc_circulating_current(mu_t, N_ph, e_a_peak, R_sc, L_sc, omega_e):
    """Magnitude and phase of the circulating current in the shorted loop.

    Returns:
        (magnitude, phase) of (mu_t/N_ph) e_a / (R_sc + j w_e L_sc).

    Raises:
        NumericalError: if the loop impedance is identically zero.
    """
    reactance = omega_e * L_sc
    if R_sc == 0.0 and reactance == 0.0:
        raise NumericalError("shorted loop has zero impedance")
    magnitude = (mu_t / N_ph) * e_a_peak / math.hypot(R_sc, reactance)
    phase = -math.atan2(reactance, R_sc)
    return magnitude, phase


def open_circuit_torque(p, psi_f, i_a, i_b, theta_e):
    """Electromagnetic torque with phase c open.

    Callers encode the open-phase constraint by supplying i_b = -i_a; the
    resulting torque carries a second-harmonic ripple at 2 w_e.
    """
    return p * psi_f * (i_a * np.sin(theta_e) - i_b * np.sin(theta_e - TWO_THIRDS_PI))


def mmf_distribution(N_ph, k_w, theta, i, max_order):
    """Truncated odd-harmonic MMF series at spatial angle ``theta``.

    Args:
        N_ph: turns per phase.
        k_w: mapping {odd order: winding factor}; every odd order up to
            ``max_order`` must be present.
        theta: spatial angle(s) along the bore [rad].
        i: instantaneous phase current.
        max_order: highest (odd) harmonic order included.

    Raises:
        ConfigError: on even orders in ``k_w`` or an even/invalid ``max_order``.
    """
    if max_order < 1 or max_order % 2 == 0:
        raise ConfigError(f"max_order must be odd and >= 1, got {max_order}")
    for order in k_w:
        if order % 2 == 0:
            raise ConfigError(f"winding factor orders must be odd, got {order}")
    theta = np.asarray(theta, dtype=float)
    total = np.zeros_like(theta)
    for n in range(1, max_order + 1, 2):
        if n not in k_w:
            raise ConfigError(f"missing winding factor for order {n}")
        total = total + (4.0 / (math.pi * n)) * N_ph * k_w[n] * np.sin(n * theta)
    return total * i
