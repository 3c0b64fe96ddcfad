"""Seven-channel time-domain waveform synthesis per fault scenario.

An open-loop generator (dynamometer) run at constant shaft speed produces
[torque, ia, ib, ic, va, vb, vc]; fault recipes perturb the healthy
construction, and calibrated white Gaussian noise is added per channel.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericalError
from .faults import FaultClass, FaultConfig, itsc_modified_params, open_circuit_torque
from .motor import (
    MotorParams,
    OperatingPoint,
    dq_to_abc,
    electrical_angular_velocity,
    steady_state_voltages,
    torque_dq,
)

#: Channel order of every run and of the CSV schema (after rpm and fault).
CHANNEL_NAMES = ("torque", "ia", "ib", "ic", "va", "vb", "vc")

#: Phase offsets of (a, b, c) relative to the electrical angle.
PHASE_OFFSETS = (0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0)

#: Fault classes whose signature rides on harmonics of the fundamental and
#: therefore collapses toward DC at standstill.
HARMONIC_SIGNATURE_FAULTS = (FaultClass.DMAG, FaultClass.GND, FaultClass.ITSC)


@dataclass(frozen=True)
class InjectionAmplitudes:
    """Fault-harmonic injection ratios relative to the fundamental amplitude.

    Ratios are severity-1 values; the run severity scales them down.
    """

    dmag_h2: float = 0.10   # balanced 2nd-harmonic current, all phases
    gnd_dc: float = 0.15    # DC offset on phase a
    gnd_h3: float = 0.08    # 3rd harmonic on phase a
    itsc_h5: float = 0.12   # 5th harmonic on phase a


@dataclass(frozen=True)
class FaultScenario:
    """Everything needed to deterministically synthesize one run.

    ``snr_db = None`` disables noise entirely; otherwise it must be finite.
    The output sample interval is ``1 / sample_rate``.
    """

    fault: FaultClass
    op: OperatingPoint
    config: FaultConfig = field(default_factory=FaultConfig)
    snr_db: float | None = 40.0
    seed: int = 0
    n_samples: int = 50_000
    sample_rate: float = 50_000.0
    amplitudes: InjectionAmplitudes = field(default_factory=InjectionAmplitudes)
    noise_floor_power: float = 1.0

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ConfigError(f"n_samples must be > 0, got {self.n_samples}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be > 0, got {self.sample_rate}")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise ConfigError(f"snr_db must be finite or None, got {self.snr_db}")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate


@dataclass
class SignalRun:
    """One synthesized run: 7 channels by n_samples at a fixed speed."""

    channels: np.ndarray
    rpm: float
    fault: FaultClass
    severity: float

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        if self.channels.ndim != 2 or self.channels.shape[0] != len(CHANNEL_NAMES):
            raise NumericalError(
                f"expected {len(CHANNEL_NAMES)} channels, got shape {self.channels.shape}")
        if not np.all(np.isfinite(self.channels)):
            raise NumericalError("non-finite sample in synthesized run")

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


def add_awgn(signal, snr_db, rng, floor_power=None):
    """Add white Gaussian noise at the requested SNR.

    Noise variance is ``power(signal) / 10^(snr_db/10)``. A zero-power
    channel is an error unless ``floor_power`` supplies the reference
    power to use instead. ``snr_db = inf`` returns the signal unchanged.

    Raises:
        NumericalError: zero-power signal without a floor.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if math.isinf(snr_db) and snr_db > 0:
        return signal.copy()
    power = float(np.mean(signal**2))
    if power == 0.0:
        if floor_power is None:
            raise NumericalError("zero-power channel: supply floor_power or skip noise")
        power = float(floor_power)
    sigma = math.sqrt(power / 10.0 ** (snr_db / 10.0))
    return signal + rng.normal(0.0, sigma, signal.shape)


def synthesize_run(scenario: FaultScenario, params: MotorParams) -> SignalRun:
    """Produce the 7-channel waveform set for one (fault, speed, severity) run.

    Deterministic given ``scenario.seed``; the same scenario always yields
    bitwise-identical output.
    """
    if not isinstance(scenario.fault, FaultClass):
        raise ConfigError(f"unknown fault class {scenario.fault!r}")
    scenario.op.validate(params.n_max)
    if scenario.op.rpm == 0.0 and scenario.fault in HARMONIC_SIGNATURE_FAULTS:
        warnings.warn(
            f"{scenario.fault.csv_name} at 0 rpm: harmonic signature degenerates to DC",
            stacklevel=2,
        )

    cfg = scenario.config
    amps = scenario.amplitudes
    sev = cfg.severity
    i_d, i_q = scenario.op.i_d, scenario.op.i_q
    i_fund = math.hypot(i_d, i_q)

    omega_e = float(electrical_angular_velocity(scenario.op.rpm, params.p))
    t = np.arange(scenario.n_samples, dtype=np.float64) * scenario.dt
    theta = omega_e * t

    psi_eff = params.psi_f
    if scenario.fault is FaultClass.DMAG:
        psi_eff = params.psi_f * (1.0 - sev * cfg.mu_d)

    ia, ib, ic = dq_to_abc(i_d, i_q, theta)
    ia = np.broadcast_to(ia, t.shape).copy()
    ib = np.broadcast_to(ib, t.shape).copy()
    ic = np.broadcast_to(ic, t.shape).copy()

    u_d, u_q = steady_state_voltages(params, i_d, i_q, omega_e, psi_eff)
    va, vb, vc = dq_to_abc(u_d, u_q, theta)
    va = np.broadcast_to(va, t.shape).copy()
    vb = np.broadcast_to(vb, t.shape).copy()
    vc = np.broadcast_to(vc, t.shape).copy()

    torque = np.full_like(t, torque_dq(params, i_d, i_q, psi_eff))

    if scenario.fault is FaultClass.DMAG:
        # Balanced (zero-sequence-free) 2nd-harmonic injection on all phases.
        a2 = sev * amps.dmag_h2 * i_fund
        for phase, offset in zip((ia, ib, ic), PHASE_OFFSETS):
            phase -= a2 * np.sin(2.0 * (theta + offset))

    elif scenario.fault is FaultClass.GND:
        ia += sev * amps.gnd_dc * i_fund
        ia -= sev * amps.gnd_h3 * i_fund * np.sin(3.0 * theta)
        # Ground current: back-EMF driven through R_g, clipped to the phase scale.
        e_a = -omega_e * psi_eff * np.sin(theta)
        i_g = np.clip(e_a / cfg.R_g, -i_fund, i_fund)
        va -= sev * cfg.R_g * i_g

    elif scenario.fault is FaultClass.ITSC:
        a5 = sev * amps.itsc_h5 * i_fund
        ia -= a5 * np.sin(5.0 * theta)
        # Rated-fault R/L deltas reflected on the phase-a terminal voltage.
        rs_f, ls_f = itsc_modified_params(
            params.Rs, params.Ls, cfg.mu_t, params.N_ph, cfg.R_sc)
        di_a = omega_e * (-i_d * np.sin(theta) - i_q * np.cos(theta))
        di_a -= 5.0 * omega_e * a5 * np.cos(5.0 * theta)
        va += sev * ((rs_f - params.Rs) * ia + (ls_f - params.Ls) * di_a)

    elif scenario.fault is FaultClass.IOC:
        # Phase c opens; with isolated neutral the return path forces ib = -ia.
        ic *= 1.0 - sev
        ib = -(ia + ic)
        healthy_torque = torque_dq(params, i_d, i_q, params.psi_f)
        ripple = open_circuit_torque(params.p, params.psi_f, ia, -ia, theta)
        ripple = ripple - ripple.mean()
        torque = (1.0 - 0.5 * sev) * healthy_torque + sev * ripple

    channels = np.vstack([torque, ia, ib, ic, va, vb, vc])

    if scenario.snr_db is not None:
        rng = np.random.default_rng(scenario.seed)
        noisy = [
            add_awgn(channels[k], scenario.snr_db, rng,
                     floor_power=scenario.noise_floor_power)
            for k in range(channels.shape[0])
        ]
        channels = np.vstack(noisy)

    return SignalRun(channels=channels, rpm=scenario.op.rpm,
                     fault=scenario.fault, severity=sev)


def speed_grid(step: float = 150.0, n_max: float = 2700.0) -> tuple[float, ...]:
    """Uniform speed grid from -n_max to +n_max inclusive."""
    if step <= 0 or n_max <= 0 or round(n_max / step) * step != n_max:
        raise ConfigError(f"grid step {step} must divide n_max {n_max}")
    count = int(round(2 * n_max / step)) + 1
    return tuple(-n_max + k * step for k in range(count))


@dataclass(frozen=True)
class SweepConfig:
    """Full description of a dataset sweep.

    The default sweep reproduces the reference protocol: 37 speeds from
    -2700 to +2700 rpm in 150 rpm steps, all five classes at severity 1,
    50 kS runs at 50 kHz, 40 dB SNR.
    """

    speeds: tuple[float, ...] = field(default_factory=speed_grid)
    faults: tuple[FaultClass, ...] = tuple(FaultClass)
    severities: tuple[float, ...] = (1.0,)
    snr_db: float | None = 40.0
    seed: int = 76123
    i_d: float = 0.0
    i_q: float = 200.0
    n_samples: int = 50_000
    sample_rate: float = 50_000.0
    amplitudes: InjectionAmplitudes = field(default_factory=InjectionAmplitudes)
    fault: FaultConfig = field(default_factory=FaultConfig)
    noise_floor_power: float = 1.0

    @property
    def n_runs(self) -> int:
        return len(self.speeds) * len(self.faults) * len(self.severities)


def run_seed(base_seed: int, *key) -> int:
    """Derive a stable 64-bit per-run seed from a base seed and a key tuple."""
    ss = np.random.SeedSequence((int(base_seed),) + tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def build_scenario(cfg: SweepConfig, rpm: float, fault: FaultClass,
                   severity: float, seed: int) -> FaultScenario:
    return FaultScenario(
        fault=fault,
        op=OperatingPoint(rpm=rpm, i_d=cfg.i_d, i_q=cfg.i_q),
        config=replace(cfg.fault, severity=severity),
        snr_db=cfg.snr_db,
        seed=seed,
        n_samples=cfg.n_samples,
        sample_rate=cfg.sample_rate,
        amplitudes=cfg.amplitudes,
        noise_floor_power=cfg.noise_floor_power,
    )


def generate_sweep(cfg: SweepConfig, params: MotorParams):
    """Yield one SignalRun per (speed, fault, severity), in that nesting order.

    Per-run seeds are derived from the sweep seed and the run index, so
    output is deterministic and independent of any execution schedule.
    """
    index = 0
    for rpm in cfg.speeds:
        for fault in cfg.faults:
            for severity in cfg.severities:
                seed = run_seed(cfg.seed, index)
                scenario = build_scenario(cfg, rpm, fault, severity, seed)
                yield synthesize_run(scenario, params)
                index += 1
