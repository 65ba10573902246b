"""Stochastic macro-spin model of spin-torque MTJ write switching.

The free layer is a single macro-spin m (unit vector) with uniaxial
perpendicular anisotropy along +z.  Dynamics follow the Landau-Lifshitz
form of the LLG equation with a Slonczewski spin-transfer term whose
polarizer points along -z, so a positive write amplitude drives the
stored bit from the +z basin toward -z:

    (1+a^2) dm/dt = -g m x H  -  g*a m x (m x H)
                    + g*aj m x (m x z) + g*a*aj (m x z)

with g the gyromagnetic ratio, a the damping constant, H the effective
field (anisotropy + thermal), and aj the spin-torque amplitude in field
units.  aj is calibrated so the zero-temperature long-pulse switching
threshold sits exactly at i_c0 = thermal_stability / stt_efficiency.

Unit system is CGS-Gaussian: fields in Oe, magnetization in emu/cc,
k_B = 1.380649e-16 erg/K.  The API uses nm / ns / ps / uA; conversions
happen internally.  The per-step thermal field has one independent
normal sample per spatial component with standard deviation

    sigma = sqrt(2 * a * k_B * T / (g * M_s * V * dt))

which makes the integrated noise a proper Wiener increment regardless
of the step size.  Integration uses the stochastic Heun scheme (the
thermal field is frozen within a step and shared by predictor and
corrector) with renormalization of m after every step.

Monte Carlo streams: every sweep point derives a private stream from
(seed, point index) through SeedSequence spawn keys, and the trials of
a point are the rows of batched draws from that stream, so estimates
are bit-identical for a fixed seed regardless of worker scheduling.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import (
    ConfigError,
    InsufficientDataError,
    InvalidFitError,
    InvalidParameterError,
    NumericalFailureError,
)

KB_ERG = 1.380649e-16      # Boltzmann constant [erg/K]
T_REF_K = 300.0            # reference temperature anchoring the stability factor [K]
GYRO_OE = 1.76e7           # free-electron gyromagnetic ratio [rad/(s*Oe)]
SWITCH_THRESHOLD_MZ = -0.5  # m_z below this counts as switched
WER_BASELINE = 8.62e-10    # write error rate at the baseline operating point

# WER targets for the required-amplitude ladder, shallow to deep.
LADDER_TARGETS = (1e-5, 1e-6, 1e-7, 1e-8, 1e-9)


@dataclass(frozen=True)
class MtjDevice:
    """Perpendicular MTJ free layer, geometry in nm, CGS magnetics.

    thermal_stability is the barrier height in units of k_B * 300 K
    (anchoring to a fixed reference keeps the anisotropy field finite
    when the simulated temperature is 0).  stt_efficiency converts the
    barrier to the critical current: i_c0 = thermal_stability /
    stt_efficiency, in uA.
    """

    fl_thickness_nm: float = 1.0
    lateral_x_nm: float = 35.0
    lateral_y_nm: float = 35.0
    saturation_magnetization_emu_cc: float = 1200.0
    damping: float = 0.006
    temperature_k: float = 300.0
    thermal_stability: float = 55.0
    stt_efficiency_kbt_per_ua: float = 1.15
    gyromagnetic_ratio_oe: float = GYRO_OE

    def __post_init__(self):
        if self.fl_thickness_nm <= 0 or self.lateral_x_nm <= 0 or self.lateral_y_nm <= 0:
            raise InvalidParameterError("device dimensions must be positive")
        if self.saturation_magnetization_emu_cc <= 0:
            raise InvalidParameterError("saturation magnetization must be positive")
        if not 0 < self.damping < 1:
            raise InvalidParameterError("damping must lie in (0, 1)")
        if self.temperature_k < 0:
            raise InvalidParameterError("temperature must be >= 0 K")
        if not 20.0 <= self.thermal_stability <= 100.0:
            raise InvalidParameterError("thermal_stability must lie in [20, 100]")
        if self.stt_efficiency_kbt_per_ua <= 0:
            raise InvalidParameterError("stt_efficiency must be positive")
        if self.gyromagnetic_ratio_oe <= 0:
            raise InvalidParameterError("gyromagnetic ratio must be positive")

    @property
    def volume_cm3(self) -> float:
        return (self.fl_thickness_nm * self.lateral_x_nm * self.lateral_y_nm) * 1e-21

    @property
    def barrier_erg(self) -> float:
        return self.thermal_stability * KB_ERG * T_REF_K

    @property
    def anisotropy_field_oe(self) -> float:
        # E_b = M_s * H_k * V / 2  ->  H_k = 2 E_b / (M_s V)
        return 2.0 * self.barrier_erg / (self.saturation_magnetization_emu_cc * self.volume_cm3)

    @property
    def critical_current_ua(self) -> float:
        return self.thermal_stability / self.stt_efficiency_kbt_per_ua


@dataclass(frozen=True)
class WritePulse:
    """Rectangular current pulse in the switching polarity."""

    amplitude_ua: float
    duration_ns: float

    def __post_init__(self):
        if self.amplitude_ua < 0:
            raise InvalidParameterError("pulse amplitude must be >= 0 uA")
        if self.duration_ns <= 0:
            raise InvalidParameterError("pulse duration must be > 0 ns")


@dataclass(frozen=True)
class MagSimConfig:
    """Integrator and Monte Carlo settings.

    initial_tilt_rad applies only at T = 0, where there is no thermal
    distribution to draw the starting angle from; None picks the
    room-temperature equilibrium scale 1/sqrt(2*thermal_stability).
    """

    time_step_ps: float = 1.0
    relax_time_ns: float = 5.0
    trials: int = 20000
    seed: int = 12345
    initial_tilt_rad: float | None = None

    def __post_init__(self):
        if not 0 < self.time_step_ps <= 10.0:
            raise InvalidParameterError("time_step_ps must lie in (0, 10]")
        if self.relax_time_ns < 0:
            raise InvalidParameterError("relax_time_ns must be >= 0")
        if self.trials < 1:
            raise InvalidParameterError("trials must be >= 1")


@dataclass(frozen=True)
class SwitchingResult:
    switched: bool
    switch_time_ns: float | None


@dataclass(frozen=True)
class WerPoint:
    amplitude_ua: float
    duration_ns: float
    trials: int
    p_switch: float

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise InvalidParameterError("trials must be >= 1")
        if not 0.0 <= self.p_switch <= 1.0:
            raise InvalidParameterError(
                f"p_switch must be in [0, 1], got {self.p_switch}"
            )

    @property
    def ln_wer(self) -> float:
        # ln(1 - p); p == 1 maps to -inf, which is fine for reporting
        return math.log1p(-self.p_switch) if self.p_switch < 1.0 else -math.inf


@dataclass
class WerCurve:
    """Monte Carlo switching-probability samples over an amplitude/duration grid."""

    points: list[WerPoint] = field(default_factory=list)

    def durations(self) -> list[float]:
        seen: list[float] = []
        for p in self.points:
            if not any(abs(p.duration_ns - d) < 1e-9 for d in seen):
                seen.append(p.duration_ns)
        return seen

    def at_duration(self, duration_ns: float) -> list[WerPoint]:
        pts = [p for p in self.points if abs(p.duration_ns - duration_ns) < 1e-9]
        return sorted(pts, key=lambda p: p.amplitude_ua)

    def onset_amplitude(self, duration_ns: float) -> float:
        """First grid amplitude whose p_switch reaches 0.5."""
        for p in self.at_duration(duration_ns):
            if p.p_switch >= 0.5:
                return p.amplitude_ua
        raise InsufficientDataError(
            f"no point reaches p_switch >= 0.5 at duration {duration_ns} ns"
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["amplitude_uA", "duration_ns", "trials", "p_switch", "ln_wer"])
            for p in self.points:
                w.writerow([repr(p.amplitude_ua), repr(p.duration_ns), p.trials,
                            repr(p.p_switch), repr(p.ln_wer)])

    @classmethod
    def from_csv(cls, path) -> "WerCurve":
        pts = []
        with open(path, newline="") as fh:
            r = csv.DictReader(fh)
            for row in r:
                pts.append(WerPoint(float(row["amplitude_uA"]), float(row["duration_ns"]),
                                    int(row["trials"]), float(row["p_switch"])))
        return cls(pts)


@dataclass(frozen=True)
class LnWerFit:
    """Least-squares line ln(WER) = slope * amplitude + intercept at one duration."""

    duration_ns: float
    slope_per_ua: float
    intercept: float
    r_squared: float
    n_points: int

    def ln_wer_at(self, amplitude_ua: float) -> float:
        return self.slope_per_ua * amplitude_ua + self.intercept

    def wer_at(self, amplitude_ua: float) -> float:
        return math.exp(self.ln_wer_at(amplitude_ua))

    def fitted_psw(self, amplitude_ua: float) -> float:
        return min(1.0, max(0.0, 1.0 - self.wer_at(amplitude_ua)))


# ---------------------------------------------------------------------------
# thermal field


def thermal_field_std_oe(device: MtjDevice, time_step_ps: float) -> float:
    """Per-component standard deviation of the thermal field, in Oe."""
    if time_step_ps <= 0:
        raise InvalidParameterError("time_step_ps must be > 0")
    if device.volume_cm3 <= 0:
        raise InvalidParameterError("device volume must be positive")
    dt_s = time_step_ps * 1e-12
    num = 2.0 * device.damping * KB_ERG * device.temperature_k
    den = (device.gyromagnetic_ratio_oe * device.saturation_magnetization_emu_cc
           * device.volume_cm3 * dt_s)
    return math.sqrt(num / den)


def sample_thermal_field(device: MtjDevice, time_step_ps: float,
                         rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """n independent thermal field vectors, shape (n, 3), in Oe."""
    sigma = thermal_field_std_oe(device, time_step_ps)
    if sigma == 0.0:
        return np.zeros((n, 3))
    return sigma * rng.standard_normal((n, 3))


# ---------------------------------------------------------------------------
# integrator


def derive_stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-style stream splitting: a private generator per index tuple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _default_tilt(device: MtjDevice) -> float:
    return 1.0 / math.sqrt(2.0 * device.thermal_stability)


def _initial_state(device: MtjDevice, cfg: MagSimConfig, rng: np.random.Generator,
                   n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Initial (mx, my, mz) columns near +z.

    At T > 0 the polar angle is drawn from the small-angle equilibrium
    distribution in the +z well, p(th) ~ th * exp(-D_T th^2) with
    D_T = thermal_stability * T_ref / T (Rayleigh with scale
    1/sqrt(2 D_T)).  At T = 0 a fixed tilt avoids the unstable
    stationary point at th = 0.
    """
    if device.temperature_k > 0:
        scale = math.sqrt(device.temperature_k
                          / (2.0 * device.thermal_stability * T_REF_K))
        theta = np.minimum(rng.rayleigh(scale=scale, size=n), math.pi / 2)
    else:
        tilt = cfg.initial_tilt_rad if cfg.initial_tilt_rad is not None else _default_tilt(device)
        theta = np.full(n, tilt)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    st = np.sin(theta)
    return st * np.cos(phi), st * np.sin(phi), np.cos(theta)


def _rhs(mx, my, mz, hx, hy, hz, aj, alpha, pre):
    """Landau-Lifshitz right-hand side; hz must already include anisotropy."""
    mdh = mx * hx + my * hy + mz * hz
    # -m x H (precession) and -a m x (m x H) = -a (m (m.H) - H) (damping)
    rx = pre * (-(my * hz - mz * hy) - alpha * (mx * mdh - hx)
                + aj * (mx * mz) + alpha * aj * my)
    ry = pre * (-(mz * hx - mx * hz) - alpha * (my * mdh - hy)
                + aj * (my * mz) - alpha * aj * mx)
    rz = pre * (-(mx * hy - my * hx) - alpha * (mz * mdh - hz)
                + aj * (mz * mz - 1.0))
    return rx, ry, rz


_CHUNK_STEPS = 512  # noise is drawn chunk-wise; switched trials are compacted out


def _integrate_batch(device: MtjDevice, amplitudes_ua: np.ndarray, duration_ns: float,
                     cfg: MagSimConfig, rng: np.random.Generator,
                     record: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Integrate a batch of trials; row i uses drive amplitudes_ua[i].

    Returns (switched bool array, first-crossing time in ns with nan for
    trials that never switched).  The pulse runs for duration_ns, then the
    drive is removed for cfg.relax_time_ns while the state keeps evolving.
    """
    n = len(amplitudes_ua)
    alpha = device.damping
    pre = device.gyromagnetic_ratio_oe / (1.0 + alpha * alpha)
    hk = device.anisotropy_field_oe
    # calibrated torque prefactor: aj = alpha * hk at the critical current
    aj_all = alpha * hk * np.asarray(amplitudes_ua, dtype=float) / device.critical_current_ua
    sigma = thermal_field_std_oe(device, cfg.time_step_ps)
    dt = cfg.time_step_ps * 1e-12

    n_pulse = max(1, round(duration_ns * 1000.0 / cfg.time_step_ps))
    n_relax = round(cfg.relax_time_ns * 1000.0 / cfg.time_step_ps)

    mx, my, mz = _initial_state(device, cfg, rng, n)
    switched = np.zeros(n, dtype=bool)
    switch_step = np.full(n, -1, dtype=np.int64)
    active = np.arange(n)

    step = 0
    for phase_steps, with_drive in ((n_pulse, True), (n_relax, False)):
        target = step + phase_steps
        while step < target and len(active):
            chunk = min(_CHUNK_STEPS, target - step)
            na = len(active)
            noise = (sigma * rng.standard_normal((chunk, na, 3))) if sigma > 0 else None
            aj = aj_all[active] if with_drive else 0.0
            crossed = np.zeros(na, dtype=bool)
            first = np.full(na, -1, dtype=np.int64)
            for j in range(chunk):
                if noise is not None:
                    hx, hy, hz = noise[j, :, 0], noise[j, :, 1], noise[j, :, 2]
                else:
                    hx = hy = hz = 0.0
                k1x, k1y, k1z = _rhs(mx, my, mz, hx, hy, hz + hk * mz, aj, alpha, pre)
                px, py, pz = mx + dt * k1x, my + dt * k1y, mz + dt * k1z
                k2x, k2y, k2z = _rhs(px, py, pz, hx, hy, hz + hk * pz, aj, alpha, pre)
                mx = mx + 0.5 * dt * (k1x + k2x)
                my = my + 0.5 * dt * (k1y + k2y)
                mz = mz + 0.5 * dt * (k1z + k2z)
                norm = np.sqrt(mx * mx + my * my + mz * mz)
                if not np.all(np.isfinite(norm)) or np.any(norm < 0.5):
                    raise NumericalFailureError(
                        "integration blow-up: |m| left the unit sphere")
                mx /= norm
                my /= norm
                mz /= norm
                newly = (mz < SWITCH_THRESHOLD_MZ) & ~crossed
                if newly.any():
                    crossed |= newly
                    first[newly] = step + j + 1
                if record is not None:
                    record.append(((step + j + 1) * cfg.time_step_ps * 1e-3,
                                   float(mx[0]), float(my[0]), float(mz[0])))
            if crossed.any():
                idx = active[crossed]
                switched[idx] = True
                switch_step[idx] = first[crossed]
                keep = ~crossed
                active = active[keep]
                mx, my, mz = mx[keep], my[keep], mz[keep]
            step += chunk
        step = target

    times = np.where(switch_step >= 0, switch_step * cfg.time_step_ps * 1e-3, np.nan)
    return switched, times


def integrate_llg(device: MtjDevice, pulse: WritePulse, cfg: MagSimConfig,
                  rng: np.random.Generator | None = None,
                  record: list | None = None) -> SwitchingResult:
    """Single-trial switching outcome for one write pulse."""
    if rng is None:
        rng = derive_stream(cfg.seed)
    switched, times = _integrate_batch(
        device, np.array([pulse.amplitude_ua]), pulse.duration_ns, cfg, rng, record)
    return SwitchingResult(bool(switched[0]),
                           float(times[0]) if switched[0] else None)


def estimate_psw(device: MtjDevice, pulse: WritePulse, cfg: MagSimConfig,
                 rng: np.random.Generator | None = None) -> float:
    """Monte Carlo switching probability over cfg.trials trials."""
    if rng is None:
        rng = derive_stream(cfg.seed)
    switched, _ = _integrate_batch(
        device, np.full(cfg.trials, pulse.amplitude_ua), pulse.duration_ns, cfg, rng)
    return int(switched.sum()) / cfg.trials


def wer_from_psw(p_switch):
    """Write error rate 1 - p_switch; exact complement, scalar or array."""
    arr = np.asarray(p_switch, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise InvalidParameterError("p_switch must lie in [0, 1]")
    out = 1.0 - arr
    return float(out) if np.isscalar(p_switch) or arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# sweeps and fits


def _sweep_point(args):
    device, cfg, seed_key, amplitude, duration = args
    rng = derive_stream(cfg.seed, seed_key)
    p = estimate_psw(device, WritePulse(amplitude, duration), cfg, rng)
    return WerPoint(amplitude, duration, cfg.trials, p)


def run_wer_sweep(device: MtjDevice, amplitudes_ua, durations_ns,
                  cfg: MagSimConfig, workers: int = 1) -> WerCurve:
    """Monte Carlo p_switch over the amplitude x duration grid.

    Each grid point gets a private stream derived from (cfg.seed, point
    index), so the result is identical no matter how many workers run.
    """
    tasks = [(device, cfg, i, float(a), float(d))
             for i, (d, a) in enumerate(
                 (d, a) for d in durations_ns for a in amplitudes_ua)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_sweep_point, tasks))
    else:
        points = [_sweep_point(t) for t in tasks]
    return WerCurve(points)


def fit_ln_wer(curve: WerCurve, duration_ns: float) -> LnWerFit:
    """Least-squares ln(WER)-vs-amplitude line over the post-onset points.

    Post-onset means p_switch >= 0.5 (the onset definition) and < 1 so
    the log error is finite; below onset ln(WER) is pinned near zero and
    does not sit on the exponential-decay line.
    """
    pts = [p for p in curve.at_duration(duration_ns) if 0.5 <= p.p_switch < 1.0]
    if len(pts) < 3:
        raise InsufficientDataError(
            f"need >= 3 post-onset points with p_switch in [0.5, 1) at "
            f"{duration_ns} ns, found {len(pts)}")
    x = np.array([p.amplitude_ua for p in pts])
    y = np.array([p.ln_wer for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    if not slope < 0:
        raise InvalidFitError(f"ln(WER) slope must be negative, got {slope}")
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LnWerFit(duration_ns, float(slope), float(intercept), r2, len(pts))


def required_amplitude(fit: LnWerFit, target_wer: float) -> float:
    """Amplitude at which the fitted line reaches the target WER."""
    if not 0.0 < target_wer < 1.0:
        raise InvalidParameterError("target_wer must lie in (0, 1)")
    if not fit.slope_per_ua < 0:
        raise InvalidFitError("fit slope must be negative")
    return (math.log(target_wer) - fit.intercept) / fit.slope_per_ua


def amplitude_ladder(fit: LnWerFit, targets=LADDER_TARGETS,
                     baseline_wer: float = WER_BASELINE) -> dict[float, float]:
    """Required amplitudes for each WER target plus the baseline point."""
    ladder = {t: required_amplitude(fit, t) for t in targets}
    ladder[baseline_wer] = required_amplitude(fit, baseline_wer)
    return ladder


def relative_write_energy(pulse: WritePulse, baseline: WritePulse) -> float:
    """(I/I0)^2 * (t/t0): write energy relative to a baseline pulse."""
    if baseline.amplitude_ua <= 0:
        raise InvalidParameterError("baseline amplitude must be > 0")
    return ((pulse.amplitude_ua / baseline.amplitude_ua) ** 2
            * (pulse.duration_ns / baseline.duration_ns))


def find_switching_threshold(device: MtjDevice, duration_ns: float, cfg: MagSimConfig,
                             lo_ua: float, hi_ua: float, probes: int = 16,
                             rounds: int = 2) -> float:
    """Deterministic (T = 0) switching boundary in amplitude.

    Batched bisection: each round integrates `probes` amplitudes at once
    and narrows the bracket to the first switching interval, so the whole
    search costs probes * rounds integrations.  The device must be at
    T = 0; lo must not switch and hi must switch.
    """
    if device.temperature_k != 0:
        raise InvalidParameterError("threshold search requires temperature_k == 0")
    if not 0 <= lo_ua < hi_ua:
        raise InvalidParameterError("need 0 <= lo_ua < hi_ua")
    rng = derive_stream(cfg.seed)
    for _ in range(rounds):
        grid = np.linspace(lo_ua, hi_ua, probes)
        switched, _ = _integrate_batch(device, grid, duration_ns, cfg, rng)
        if switched[0] or not switched[-1]:
            raise InvalidParameterError(
                f"bracket [{lo_ua}, {hi_ua}] uA does not straddle the threshold")
        first = int(np.argmax(switched))
        lo_ua, hi_ua = float(grid[first - 1]), float(grid[first])
    return 0.5 * (lo_ua + hi_ua)


# ---------------------------------------------------------------------------
# config files


_DEVICE_FIELDS = {f.name for f in fields(MtjDevice)}
_SIM_FIELDS = {f.name for f in fields(MagSimConfig)}


def load_device_config(path) -> tuple[MtjDevice, MagSimConfig]:
    """JSON config with optional "device" and "simulation" sections.

    Unknown keys are rejected by name so typos fail loudly.
    """
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    extra = set(raw) - {"device", "simulation"}
    if extra:
        raise ConfigError(f"{path}: unknown sections {sorted(extra)}")
    dev_raw = raw.get("device", {})
    sim_raw = raw.get("simulation", {})
    bad = set(dev_raw) - _DEVICE_FIELDS
    if bad:
        raise ConfigError(f"{path}: unknown device keys {sorted(bad)}")
    bad = set(sim_raw) - _SIM_FIELDS
    if bad:
        raise ConfigError(f"{path}: unknown simulation keys {sorted(bad)}")
    try:
        return MtjDevice(**dev_raw), MagSimConfig(**sim_raw)
    except InvalidParameterError as e:
        raise ConfigError(f"{path}: {e}") from e


def merge_sim_config(cfg: MagSimConfig, **overrides) -> MagSimConfig:
    """Apply non-None overrides (flag > file > default precedence helper)."""
    actual = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **actual) if actual else cfg
