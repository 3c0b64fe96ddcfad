"""Analytic dq-frame model of the machine under test.

Holds the nameplate/dq constants of the 350 kW interior PMSM, the
electrical frequency/speed relations, steady-state voltage and torque
equations, and the amplitude-invariant Park transform pair used to map
dq quantities onto the three phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .errors import ConfigError

TWO_THIRDS_PI = 2.0 * math.pi / 3.0

# 12-slot/10-pole double-layer concentrated winding: fundamental factor
# 0.933, low-order space harmonics per the standard star-of-slots result.
DEFAULT_WINDING_FACTORS = {1: 0.933, 3: 0.5, 5: 0.067, 7: 0.067}


@dataclass(frozen=True)
class MotorParams:
    """Nameplate and dq-model constants of the machine under test.

    Attribute names follow the datasheet symbols so that config files map
    one-to-one onto fields. ``k_hs``/``k_Js``/``k_es`` and the
    characterization grids (``I_vec``, ``theta_vec``, ``B_vec``) are
    recorded for fidelity but never enter any computation here.
    """

    p: int = 5                      # pole pairs
    Rs: float = 7e-3                # stator resistance [ohm]
    Ld: float = 0.20e-3             # d-axis inductance [H]
    Lq: float = 0.35e-3             # q-axis inductance [H]
    Ls: float = 0.25e-3             # average phase inductance [H]
    psi_f: float = 0.50             # PM flux linkage [Wb]
    T_max: float = 1238.0           # maximum torque [Nm]
    P_max: float = 350e3            # maximum power [W]
    N_ph: int = 20                  # turns per phase
    k_w: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_WINDING_FACTORS))
    k_hs: float = 1.2e-3            # hysteresis loss coefficient (record only)
    k_Js: float = 0.8e-5            # Joule loss coefficient (record only)
    k_es: float = 0.5e-6            # eddy loss coefficient (record only)
    n_max: float = 2700.0           # rated speed [rpm]
    I_vec: tuple[float, ...] = (0.0, 100.0, 200.0)
    theta_vec: tuple[float, ...] = (0.0, 72.0)
    B_vec: tuple[float, ...] = (-180.0, -90.0, 0.0, 90.0, 180.0)

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError(f"pole pairs must be >= 1, got {self.p}")
        for name in ("Rs", "Ld", "Lq", "Ls", "psi_f", "n_max"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.N_ph < 1:
            raise ConfigError(f"N_ph must be >= 1, got {self.N_ph}")
        for order in self.k_w:
            if order % 2 == 0:
                raise ConfigError(f"winding factors are per odd order, got order {order}")

    @classmethod
    def from_dict(cls, raw: dict) -> "MotorParams":
        """Build params from a mapping; unknown keys are an error."""
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown motor parameter keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "k_w" in kwargs:
            kwargs["k_w"] = {int(k): float(v) for k, v in kwargs["k_w"].items()}
        for name in ("I_vec", "theta_vec", "B_vec"):
            if name in kwargs:
                kwargs[name] = tuple(float(v) for v in kwargs[name])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "MotorParams":
        """Load params from a YAML file keyed by the datasheet symbols."""
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(f"motor config {path} must be a mapping")
        return cls.from_dict(raw)


@dataclass(frozen=True)
class OperatingPoint:
    """Commanded shaft speed and dq current set-point of one run."""

    rpm: float
    i_d: float = 0.0
    i_q: float = 0.0

    def validate(self, n_max: float) -> "OperatingPoint":
        if abs(self.rpm) > n_max:
            raise ConfigError(f"|rpm| = {abs(self.rpm)} exceeds n_max = {n_max}")
        return self


def electrical_frequency(rpm, p: int):
    """Electrical frequency in Hz at shaft speed ``rpm`` for ``p`` pole pairs.

    Total on all inputs; the sign of the speed does not affect the
    frequency (see :func:`electrical_angular_velocity` for the signed rate).
    """
    if p < 1:
        raise ConfigError(f"pole pairs must be >= 1, got {p}")
    return p * np.abs(rpm) / 60.0


def electrical_angular_velocity(rpm, p: int):
    """Signed electrical angular velocity in rad/s.

    Carries the sign of ``rpm`` so regenerative-quadrant speeds produce
    phase-reversed sequences.
    """
    return 2.0 * math.pi * electrical_frequency(rpm, p) * np.sign(rpm)


def torque_dq(params: MotorParams, i_d, i_q, psi_eff=None):
    """Electromagnetic torque from dq currents and an effective PM flux.

    T = (3/2) p [psi_eff i_q + (Ld - Lq) i_d i_q]; passing a degraded
    ``psi_eff`` yields the torque deficit of a weakened magnet.
    """
    psi = params.psi_f if psi_eff is None else psi_eff
    return 1.5 * params.p * (psi * i_q + (params.Ld - params.Lq) * i_d * i_q)


def steady_state_voltages(params: MotorParams, i_d, i_q, omega_e, psi_eff=None):
    """Steady-state dq terminal voltages (di/dt = 0).

    Returns:
        (u_d, u_q) with u_d = Rs i_d - w_e Lq i_q and
        u_q = Rs i_q + w_e (Ld i_d + psi_eff).
    """
    psi = params.psi_f if psi_eff is None else psi_eff
    u_d = params.Rs * i_d - omega_e * params.Lq * i_q
    u_q = params.Rs * i_q + omega_e * (params.Ld * i_d + psi)
    return u_d, u_q


def dq_to_abc(x_d, x_q, theta_e):
    """Amplitude-invariant inverse Park transform.

    dq magnitudes equal phase peak amplitudes; outputs sum to zero for
    any input (no zero-sequence path).
    """
    x_a = x_d * np.cos(theta_e) - x_q * np.sin(theta_e)
    x_b = x_d * np.cos(theta_e - TWO_THIRDS_PI) - x_q * np.sin(theta_e - TWO_THIRDS_PI)
    x_c = x_d * np.cos(theta_e + TWO_THIRDS_PI) - x_q * np.sin(theta_e + TWO_THIRDS_PI)
    return x_a, x_b, x_c


def abc_to_dq(x_a, x_b, x_c, theta_e):
    """Amplitude-invariant forward Park transform (inverse of dq_to_abc)."""
    x_d = (2.0 / 3.0) * (
        x_a * np.cos(theta_e)
        + x_b * np.cos(theta_e - TWO_THIRDS_PI)
        + x_c * np.cos(theta_e + TWO_THIRDS_PI)
    )
    x_q = -(2.0 / 3.0) * (
        x_a * np.sin(theta_e)
        + x_b * np.sin(theta_e - TWO_THIRDS_PI)
        + x_c * np.sin(theta_e + TWO_THIRDS_PI)
    )
    return x_d, x_q
