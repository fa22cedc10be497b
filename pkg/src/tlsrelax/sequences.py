"""Pulse-protocol engine for two-timescale relaxometry and standard T1 scans.

Every protocol step acts on the joint polarization vector as an affine map,
so a whole block compiles to one ``(N+2) x (N+2)`` homogeneous matrix.
Readout samples and on-time integrals of the qubit polarization are linear
functionals of the block-entry state.  Averages over many identical cycles
are then a geometric series of the cycle map, evaluated by repeated squaring
instead of stepping through every cycle.

Protocol layout
---------------
One *shot* is ``pump -> idle -> reset -> delay -> readout``:

* pump: qubit held at ``z_pump``; TLS exchange only at ``gamma_qt_eff``.
* idle: the pump leaves the qubit at the target polarization, which then
  evolves with full interaction while stray population settles.
* reset: qubit set to ``reset_z_e`` or ``reset_z_g`` (TLS untouched).  With
  ``exact_reset=False`` this step is skipped, so the prepared polarization
  drifts with the bath state.
* delay: full interaction for ``t_i``.  The sample is Z at the end of it.
* readout: qubit held at ``z_pump`` again, interaction suppressed.

An FD-4 block runs ``shots_per_delay`` shots for each delay and ends with
``extra_wait`` (suppressed).  A CD-8 block runs two resets and one readout,
``pump, idle, reset, d, readout, pump, idle, reset, (window - d), extra_wait``,
and the read delay ``d`` cycles through ``delays`` from one bath cycle to the
next.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import expm

from .model import Environment, SystemState, affine_generator, rate_matrix

US = 1e-6

FD4 = "FD4"
CD8 = "CD8"
BATH_PREP_T1 = "BathPrepT1"
STANDARD_T1 = "StandardT1"
VARIANTS = (FD4, CD8, BATH_PREP_T1, STANDARD_T1)

FD4_DELAYS = (1 * US, 40 * US, 150 * US, 330 * US)
CD8_DELAYS = tuple(d * US for d in (1, 10, 20, 30, 40, 50, 60, 70))


@dataclass(frozen=True)
class ProtocolConfig:
    """Timing and reset description of a relaxometry sequence.

    Durations are in seconds.  ``interaction_window`` is only used by CD-8:
    the total free-interaction time per block, split between the read delay
    and the unread second delay.
    """

    variant: str = FD4
    delays: tuple = FD4_DELAYS
    pump_duration: float = 35 * US
    idle_duration: float = 15 * US
    readout_duration: float = 15.4 * US
    extra_wait: float = 34.8 * US
    blocks_per_half: int = 12
    cycles: int = 1
    reset_z_e: float = 0.44
    reset_z_g: float = -0.44
    z_pump: float = 0.0
    gamma_qt_eff: float = 0.0
    readout_noise_sigma: float = 0.0
    shots_per_delay: int = 2
    interaction_window: float = 70 * US
    exact_reset: bool = True

    def __post_init__(self):
        object.__setattr__(self, "delays", tuple(float(d) for d in self.delays))
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown protocol variant {self.variant!r}")
        d = np.asarray(self.delays)
        if d.size == 0 or np.any(d < 0) or np.any(np.diff(d) <= 0):
            raise ValueError("delays must be non-negative and strictly increasing")
        for name in ("pump_duration", "idle_duration", "readout_duration", "extra_wait", "interaction_window"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.reset_z_e > self.reset_z_g:
            raise ValueError("reset_z_e must exceed reset_z_g")
        for name in ("reset_z_e", "reset_z_g", "z_pump"):
            if abs(getattr(self, name)) > 1:
                raise ValueError(f"{name} must lie in [-1, 1]")
        if self.gamma_qt_eff < 0 or self.readout_noise_sigma < 0:
            raise ValueError("gamma_qt_eff and readout_noise_sigma must be >= 0")
        if self.blocks_per_half < 1 or self.cycles < 1 or self.shots_per_delay < 1:
            raise ValueError("blocks_per_half, cycles and shots_per_delay must be >= 1")
        if self.variant == CD8:
            if d[-1] > self.interaction_window + 1e-15:
                raise ValueError("CD-8 delays must not exceed the interaction window")
            if self.cycles % len(d):
                raise ValueError("CD-8 needs a whole number of delay rotations (cycles % len(delays) == 0)")

    # factories ---------------------------------------------------------

    @classmethod
    def fd4(cls, block="1.6ms", **kw):
        """FD-4 defaults.  ``block="800us"`` gives the single-measurement block."""
        if block == "800us":
            base = dict(shots_per_delay=1, extra_wait=17.4 * US)
        elif block == "1.6ms":
            base = dict(shots_per_delay=2, extra_wait=34.8 * US)
        else:
            raise ValueError("block must be '800us' or '1.6ms'")
        base.update(kw)
        base.setdefault("delays", FD4_DELAYS)
        return cls(variant=FD4, **base)

    @classmethod
    def cd8(cls, **kw):
        base = dict(variant=CD8, delays=CD8_DELAYS, extra_wait=14.6 * US, shots_per_delay=1, cycles=8)
        base.update(kw)
        return cls(**base)

    @classmethod
    def bath_prep(cls, **kw):
        base = dict(variant=BATH_PREP_T1, delays=tuple(np.linspace(0, 2e-3, 41)), blocks_per_half=1,
                    reset_z_e=1.0, reset_z_g=-1.0, extra_wait=0.0)
        base.update(kw)
        return cls(**base)

    @classmethod
    def standard_t1(cls, **kw):
        base = dict(variant=STANDARD_T1, delays=tuple(10 * US * np.arange(50)), readout_duration=15 * US,
                    blocks_per_half=1, reset_z_e=0.5, reset_z_g=-0.5, extra_wait=0.0)
        base.update(kw)
        return cls(**base)

    # derived timing ----------------------------------------------------

    @property
    def resets_per_block(self):
        if self.variant == CD8:
            return 2
        return self.shots_per_delay * len(self.delays)

    @property
    def readouts_per_block(self):
        return 1 if self.variant == CD8 else self.resets_per_block

    @property
    def delay_time_per_block(self):
        if self.variant == CD8:
            return self.interaction_window
        return self.shots_per_delay * float(np.sum(self.delays))

    @property
    def on_time_per_block(self):
        return self.resets_per_block * self.idle_duration + self.delay_time_per_block

    @property
    def suppressed_time_per_block(self):
        return (self.resets_per_block * self.pump_duration
                + self.readouts_per_block * self.readout_duration + self.extra_wait)

    @property
    def block_length(self):
        return self.on_time_per_block + self.suppressed_time_per_block

    @property
    def eta(self):
        """Fraction of a block with full qubit-TLS interaction."""
        return self.on_time_per_block / self.block_length

    @property
    def epsilon(self):
        """Fraction of a block with suppressed interaction (pump, readout, wait)."""
        return self.suppressed_time_per_block / self.block_length

    @property
    def cycle_period(self):
        """Number of bath cycles after which the delay pattern repeats."""
        return len(self.delays) if self.variant == CD8 else 1

    @property
    def half_length(self):
        return self.blocks_per_half * self.block_length

    def measurement_offset(self):
        """Mean delay from block start to the reset instants whose slopes a block reports.

        For CD-8 this is the single read shot; for FD-4 it averages over all
        shots of the block.
        """
        shot = self.pump_duration + self.idle_duration
        if self.variant == CD8:
            return shot
        times = []
        t = 0.0
        for d in self.delays:
            for _ in range(self.shots_per_delay):
                times.append(t + shot)
                t += shot + d + self.readout_duration
        return float(np.mean(times))

    def averages_per_sample(self):
        """Shots averaged into one recorded (half, block, delay) value."""
        if self.variant == CD8:
            return self.cycles // self.cycle_period
        return self.cycles * self.shots_per_delay

    def sample_sigma(self):
        return self.readout_noise_sigma / np.sqrt(self.averages_per_sample())

    def to_dict(self):
        d = asdict(self)
        d["delays"] = list(self.delays)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# --------------------------------------------------------------------------
# affine building blocks


class AffineSteps:
    """Cached homogeneous matrices of elementary protocol steps for one environment.

    Coordinates are ``(Z, p_1..p_N, 1)``.
    """

    def __init__(self, env: Environment, gamma_qt_eff=0.0):
        self.env = env
        self.gamma_qt_eff = float(gamma_qt_eff)
        self.n = env.n_tls + 1
        m, c = rate_matrix(env, interaction_on=True)
        self._gen_on = affine_generator(m, c)
        self._on_cache = {}
        self._held_cache = {}

    @property
    def dim(self):
        return self.n + 1

    def identity(self):
        return np.eye(self.dim)

    def on(self, dt):
        """Free evolution with full interaction; returns ``(map, integral)``.

        ``integral`` maps the entry state to the time integral of every
        coordinate over the step (exact, via the block-triangular exponential).
        """
        key = round(dt * 1e12)
        hit = self._on_cache.get(key)
        if hit is not None:
            return hit
        d = self.dim
        if dt == 0:
            out = (np.eye(d), np.zeros((d, d)))
        else:
            big = np.zeros((2 * d, 2 * d))
            big[:d, :d] = self._gen_on
            big[:d, d:] = np.eye(d)
            full = expm(big * dt)
            out = (full[:d, :d], full[:d, d:])
        self._on_cache[key] = out
        return out

    def held(self, dt, z_hold):
        """Qubit pinned at ``z_hold``; each TLS relaxes and exchanges at ``gamma_qt_eff``."""
        key = (round(dt * 1e12), float(z_hold))
        hit = self._held_cache.get(key)
        if hit is not None:
            return hit
        d = self.dim
        out = np.zeros((d, d))
        out[-1, -1] = 1.0
        out[0, -1] = z_hold
        k = self.env.gamma_t() + self.gamma_qt_eff
        c = self.env.gamma_t() * self.env.p_eq() + self.gamma_qt_eff * z_hold
        decay = np.exp(-k * dt)
        # (1 - e^{-k dt}) / k, continuous at k = 0
        weight = np.where(k > 0, -np.expm1(-k * dt) / np.where(k > 0, k, 1.0), dt)
        idx = np.arange(1, self.n)
        out[idx, idx] = decay
        out[idx, -1] = c * weight
        self._held_cache[key] = out
        return out

    def set_qubit(self, z):
        out = np.eye(self.dim)
        out[0, 0] = 0.0
        out[0, -1] = z
        return out


@dataclass
class CompiledBlock:
    """One block as linear functionals of its homogeneous entry state."""

    transfer: np.ndarray          # entry -> exit
    sample_rows: np.ndarray       # (n_samples, dim): qubit Z at each readout
    sample_delays: np.ndarray     # delay of each sample
    zbar_row: np.ndarray          # on-time average of Z
    on_time: float


def _compile_block(steps: AffineSteps, ops):
    """Compose a list of ops into a :class:`CompiledBlock`.

    ops: ``("on", dt)``, ``("held", dt, z)``, ``("set", z)`` or ``("sample", delay)``.
    """
    prefix = steps.identity()
    rows, delays = [], []
    integral = np.zeros(steps.dim)
    on_time = 0.0
    for op in ops:
        kind = op[0]
        if kind == "on":
            m, integ = steps.on(op[1])
            integral += (integ @ prefix)[0]
            on_time += op[1]
            prefix = m @ prefix
        elif kind == "held":
            prefix = steps.held(op[1], op[2]) @ prefix
        elif kind == "set":
            prefix = steps.set_qubit(op[1]) @ prefix
        elif kind == "sample":
            rows.append(prefix[0].copy())
            delays.append(op[1])
        else:
            raise ValueError(kind)
    zbar = integral / on_time if on_time > 0 else np.zeros(steps.dim)
    return CompiledBlock(prefix, np.array(rows).reshape(len(rows), steps.dim), np.array(delays), zbar, on_time)


def _shot_ops(config: ProtocolConfig, target_z, delay, sample=True):
    ops = [("held", config.pump_duration, config.z_pump),
           ("set", target_z),
           ("on", config.idle_duration)]
    if config.exact_reset:
        ops.append(("set", target_z))
    ops.append(("on", delay))
    if sample:
        ops.append(("sample", delay))
        ops.append(("held", config.readout_duration, config.z_pump))
    return ops


def block_ops(config: ProtocolConfig, half: str, cycle: int = 0, block: int = 0):
    """Elementary op list of one block of the two-timescale protocol."""
    target = config.reset_z_e if half == "H" else config.reset_z_g
    ops = []
    if config.variant == CD8:
        n = len(config.delays)
        # even blocks read from the first column of the rotation, odd blocks
        # from the column shifted by half a rotation, so each block index
        # visits every delay once per rotation
        d = config.delays[(cycle + (block % 2) * (n // 2)) % n]
        ops += _shot_ops(config, target, d)
        ops += _shot_ops(config, target, config.interaction_window - d, sample=False)
    else:
        for d in config.delays:
            for _ in range(config.shots_per_delay):
                ops += _shot_ops(config, target, d)
    ops.append(("held", config.extra_wait, config.z_pump))
    return ops


# --------------------------------------------------------------------------
# records


@dataclass
class MeasurementRecord:
    """Readout samples of a two-timescale run.

    ``samples`` is a structured array with fields ``half`` (``"H"``/``"L"``),
    ``block``, ``T_s`` (block start time measured from the start of its
    half), ``t_s`` (delay) and ``z``.
    """

    samples: np.ndarray
    config: ProtocolConfig
    truth: Environment | None = None
    diagnostics: dict = field(default_factory=dict)

    DTYPE = np.dtype([("half", "U1"), ("block", "i4"), ("T_s", "f8"), ("t_s", "f8"), ("z", "f8")])

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=self.DTYPE)
        delays = np.asarray(self.config.delays)
        if len(self.samples) and not np.all(np.isclose(self.samples["t_s"][:, None], delays[None, :],
                                                        rtol=0, atol=1e-12).any(axis=1)):
            raise ValueError("sample delay not among config delays")
        for h in ("H", "L"):
            t = self.samples["T_s"][self.samples["half"] == h]
            if np.any(np.diff(t) < 0):
                raise ValueError("T_s must be non-decreasing within each half")

    def select(self, half, block=None):
        m = self.samples["half"] == half
        if block is not None:
            m &= self.samples["block"] == block
        return self.samples[m]

    def sample_sigma(self):
        return self.config.sample_sigma()


@dataclass
class DecayCurve:
    delays: np.ndarray
    z: np.ndarray
    label: str = ""
    sigma: float = 0.0

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.delays.shape != self.z.shape:
            raise ValueError("delays and z must have equal length")
        if np.any(np.diff(self.delays) <= 0):
            raise ValueError("delays must be strictly increasing")

    @property
    def points(self):
        return list(zip(self.delays.tolist(), self.z.tolist()))


# --------------------------------------------------------------------------
# two-timescale engine


def _geometric_power(mat, n):
    """Return ``(mat**n, sum_{j<n} mat**j)`` by repeated squaring."""
    d = mat.shape[0]
    big = np.zeros((2 * d, 2 * d))
    big[:d, :d] = mat
    big[:d, d:] = np.eye(d)
    big[d:, d:] = np.eye(d)
    res = np.linalg.matrix_power(big, n)
    return res[:d, :d], res[:d, d:]


class TwoTimescaleProgram:
    """Compiled FD-4 / CD-8 bath cycle for one environment."""

    def __init__(self, config: ProtocolConfig, env: Environment):
        if config.variant not in (FD4, CD8):
            raise ValueError("two-timescale runs need an FD4 or CD8 config")
        self.config = config
        self.env = env
        self.steps = AffineSteps(env, config.gamma_qt_eff)
        self._cache = {}
        # blocks[c][(half, b)] for each cycle of the delay rotation
        self.blocks = []
        for c in range(config.cycle_period):
            per = {}
            for half in ("H", "L"):
                for b in range(config.blocks_per_half):
                    key = (half, c if config.variant == CD8 else 0, b % 2 if config.variant == CD8 else 0)
                    if key not in self._cache:
                        self._cache[key] = _compile_block(self.steps, block_ops(config, half, c, b))
                    per[(half, b)] = self._cache[key]
            self.blocks.append(per)
        # entry maps of every block relative to the start of its rotation cycle
        self.entry = []
        self.cycle_maps = []
        for c in range(config.cycle_period):
            m = self.steps.identity()
            ent = {}
            for half in ("H", "L"):
                for b in range(config.blocks_per_half):
                    ent[(half, b)] = m
                    m = self.blocks[c][(half, b)].transfer @ m
            self.entry.append(ent)
            self.cycle_maps.append(m)
        self.period_map = self.steps.identity()
        self.period_entry = []
        for m in self.cycle_maps:
            self.period_entry.append(self.period_map)
            self.period_map = m @ self.period_map

    def initial_vector(self, state: SystemState | None = None):
        if state is None:
            state = self.env.equilibrium_state()
        return np.append(state.as_vector(), 1.0)

    def periodic_vector(self):
        """Cycle-entry state of the exact periodic steady state."""
        a = self.period_map[:-1, :-1]
        b = self.period_map[:-1, -1]
        s = np.linalg.solve(np.eye(len(b)) - a, b)
        return np.append(s, 1.0)

    def mean_samples(self, start_vec, n_periods):
        """Average over ``n_periods`` rotations of every (half, block, delay) sample."""
        _, geo = _geometric_power(self.period_map, n_periods)
        summed = geo @ start_vec
        out = {}
        for c in range(self.config.cycle_period):
            cyc_start = self.period_entry[c] @ summed
            for key, blk in self.blocks[c].items():
                vals = blk.sample_rows @ (self.entry[c][key] @ cyc_start) / n_periods
                for d, v in zip(blk.sample_delays, vals):
                    out.setdefault(key, {}).setdefault(float(d), []).append(v)
        return {k: {d: float(np.mean(v)) for d, v in dv.items()} for k, dv in out.items()}

    def block_entry_states(self, cycle_vec, cycle=0):
        """Entry vectors (Z, p..., 1) of every block for one cycle started at ``cycle_vec``."""
        return {k: m @ cycle_vec for k, m in self.entry[cycle].items()}

    def zbar(self, cycle_vec, half, cycle=0, block=None):
        b = self.config.blocks_per_half - 1 if block is None else block
        blk = self.blocks[cycle][(half, b)]
        return float(blk.zbar_row @ (self.entry[cycle][(half, b)] @ cycle_vec))


def run_two_timescale(config: ProtocolConfig, env: Environment, seed=None, initial: SystemState | None = None):
    """Simulate ``config.cycles`` bath-polarization cycles and record cycle-averaged samples.

    The bath starts from its thermal equilibrium (or ``initial``) and carries
    its state across all blocks and cycles.  Gaussian readout noise of
    ``readout_noise_sigma`` per shot is added after averaging.
    """
    prog = TwoTimescaleProgram(config, env)
    start = prog.initial_vector(initial)
    n_periods = config.cycles // config.cycle_period
    means = prog.mean_samples(start, n_periods)

    rng = np.random.default_rng(seed)
    sigma = config.sample_sigma()
    rows = []
    for half in ("H", "L"):
        for b in range(config.blocks_per_half):
            T = b * config.block_length
            for d in config.delays:
                z = means[(half, b)][d]
                if sigma > 0:
                    z = z + rng.normal(0.0, sigma)
                rows.append((half, b, T, d, z))

    periodic = prog.periodic_vector()
    last_vec = _geometric_power(prog.period_map, n_periods)[0] @ start
    diagnostics = {
        "qubit_freq_hz": env.qubit_freq_hz,
        "zbar_h": prog.zbar(periodic, "H"),
        "zbar_l": prog.zbar(periodic, "L"),
        "z_e": config.reset_z_e,
        "z_g": config.reset_z_g,
        "eta": config.eta,
        "epsilon": config.epsilon,
        "final_state": last_vec[:-1].tolist(),
    }
    return MeasurementRecord(np.array(rows, dtype=MeasurementRecord.DTYPE), config, env, diagnostics)


def block_tls_trajectory(config: ProtocolConfig, env: Environment, n_cycles=1, initial: SystemState | None = None):
    """Block-entry states over consecutive cycles, shape ``(n_cycles, 2N, N_tls+1)``."""
    prog = TwoTimescaleProgram(config, env)
    vec = prog.initial_vector(initial)
    out = []
    for c in range(n_cycles):
        cc = c % config.cycle_period
        ent = prog.block_entry_states(vec, cc)
        out.append([ent[(h, b)][:-1] for h in ("H", "L") for b in range(config.blocks_per_half)])
        vec = prog.cycle_maps[cc] @ vec
    return np.array(out)


# --------------------------------------------------------------------------
# single-state helpers


def _reset_map(steps: AffineSteps, config: ProtocolConfig, target: str):
    z_target = config.reset_z_e if target == "e" else config.reset_z_g
    ops = [("held", config.pump_duration, config.z_pump), ("set", z_target), ("on", config.idle_duration)]
    if config.exact_reset:
        ops.append(("set", z_target))
    return _compile_block(steps, ops).transfer


def apply_reset(state: SystemState, env: Environment, target: str, config: ProtocolConfig):
    """Apply one reset (pump, set, idle, set) to ``state``."""
    if target not in ("e", "g"):
        raise ValueError("target must be 'e' or 'g'")
    steps = AffineSteps(env, config.gamma_qt_eff)
    m = _reset_map(steps, config, target)
    vec = m @ np.append(state.as_vector(), 1.0)
    return SystemState.from_vector(vec[:-1])


@dataclass(frozen=True)
class BathPrep:
    bath: str = "e"
    repeats: int = 7
    interaction_t: float = 25 * US

    def __post_init__(self):
        if self.bath not in ("e", "g"):
            raise ValueError("bath must be 'e' or 'g'")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.interaction_t < 0:
            raise ValueError("interaction_t must be >= 0")


def run_bath_prep_t1(config: ProtocolConfig, env: Environment, prep: BathPrep, qubit_init: str,
                     delays=None, seed=None):
    """T1 scan after polarizing the bath with repeated resets.

    Each delay point starts from thermal equilibrium, applies ``prep.repeats``
    reset-and-interact blocks, resets the qubit to ``qubit_init`` and lets it
    evolve for the delay.  The curve records the qubit polarization at the
    end of the delay.
    """
    if qubit_init not in ("e", "g"):
        raise ValueError("qubit_init must be 'e' or 'g'")
    delays = np.asarray(config.delays if delays is None else delays, dtype=float)
    steps = AffineSteps(env, config.gamma_qt_eff)

    def reset(target):
        return _reset_map(steps, config, target)

    prep_map = steps.identity()
    one = steps.on(prep.interaction_t)[0] @ reset(prep.bath)
    for _ in range(prep.repeats):
        prep_map = one @ prep_map
    start = reset(qubit_init) @ prep_map @ np.append(env.equilibrium_state().as_vector(), 1.0)
    z = np.array([(steps.on(t)[0] @ start)[0] for t in delays])
    sigma = config.sample_sigma()
    if sigma > 0:
        z = z + np.random.default_rng(seed).normal(0.0, sigma, size=z.shape)
    return DecayCurve(delays, z, label=f"qubit_{qubit_init}_bath_{prep.bath}", sigma=sigma)


def run_bath_prep_family(config, env, prep_repeats=7, interaction_t=25 * US, delays=None, seed=None):
    """All four (bath, qubit) combinations, keyed ``(bath, qubit)``."""
    seeds = np.random.SeedSequence(seed).spawn(4)
    out = {}
    i = 0
    for bath in ("e", "g"):
        for q in ("e", "g"):
            prep = BathPrep(bath, prep_repeats, interaction_t)
            out[(bath, q)] = run_bath_prep_t1(config, env, prep, q, delays, np.random.default_rng(seeds[i]))
            i += 1
    return out


# --------------------------------------------------------------------------
# standard T1 protocols


@dataclass(frozen=True)
class StandardT1Scheme:
    """How a conventional T1 scan resets the qubit and orders its shots.

    ``clock_cycle``: a pi pulse every ``cycle_period`` seconds (or later if
    the delay plus readout does not fit).  ``active_reset``: the qubit is
    set to ``reset_z`` and the next shot starts ``relax_delay`` after the
    readout.  ``rounds`` sweeps all delays once per pass; ``repetitions``
    finishes every shot at one delay before moving on.
    """

    reset: str = "active_reset"
    order: str = "rounds"
    step: float = 100 * US
    n_points: int = 50
    averages: int = 100
    cycle_period: float = 0.5e-3
    relax_delay: float = 10 * US
    reset_z: float = 0.5

    def __post_init__(self):
        if self.reset not in ("clock_cycle", "active_reset"):
            raise ValueError("reset must be 'clock_cycle' or 'active_reset'")
        if self.order not in ("rounds", "repetitions"):
            raise ValueError("order must be 'rounds' or 'repetitions'")
        if not (self.step > 0 and self.n_points > 0 and self.averages > 0 and self.cycle_period > 0
                and self.relax_delay >= 0):
            raise ValueError("scheme timings and counts must be positive")

    def delays(self):
        return self.step * np.arange(self.n_points)


def run_standard_t1(config: ProtocolConfig, env: Environment, scheme: StandardT1Scheme, seed=None):
    """Conventional T1 scan with the bath carried across the whole acquisition.

    The readout is an interaction-on window of ``config.readout_duration``
    whose recorded value is the time-averaged qubit polarization.
    """
    steps = AffineSteps(env, 0.0)
    delays = scheme.delays()
    ro = config.readout_duration
    ro_map, ro_int = steps.on(ro)
    flip = steps.identity()
    flip[0, 0] = -1.0
    reset = steps.set_qubit(scheme.reset_z)

    if scheme.order == "rounds":
        order = np.tile(np.arange(len(delays)), scheme.averages)
    else:
        order = np.repeat(np.arange(len(delays)), scheme.averages)

    vec = np.append(env.equilibrium_state().as_vector(), 1.0)
    acc = np.zeros(len(delays))
    for i in order:
        d = delays[i]
        if scheme.reset == "clock_cycle":
            vec = flip @ vec
            vec = steps.on(d)[0] @ vec
            acc[i] += (ro_int @ vec)[0] / ro
            vec = ro_map @ vec
            wait = max(scheme.cycle_period - d - ro, 0.0)
            vec = steps.on(wait)[0] @ vec
        else:
            vec = reset @ vec
            vec = steps.on(d)[0] @ vec
            acc[i] += (ro_int @ vec)[0] / ro
            vec = ro_map @ vec
            vec = steps.on(scheme.relax_delay)[0] @ vec
    z = acc / scheme.averages
    sigma = config.readout_noise_sigma / np.sqrt(scheme.averages)
    if sigma > 0:
        z = z + np.random.default_rng(seed).normal(0.0, sigma, size=z.shape)
    return DecayCurve(delays, z, label=f"{scheme.reset}_{scheme.order}", sigma=sigma)
