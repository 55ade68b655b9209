"""Automated operation of the squeezer.

Two controller modes share one supervisor:

- AutoRelock watches the squeezing level and, once it stays below threshold,
  tears every lock down and rebuilds the chain: SHG, then the OPA on each
  stored mode offset until the Omega beat shows double resonance, then locks
  B and C, then a phase scan whose v-curve vertex sets the B/C offset.
- DriftCompensation keeps the locks and nudges the B/C phase offset in
  perturb-and-observe cycles whenever the cycle-mean squeezing falls below the
  best level seen.

The supervisor is a pure state machine: it consumes readings and returns
plant commands (see :mod:`squeezr.executor`).
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from squeezr._utils import unknown_option_message
from squeezr.exceptions import ConfigError, LockSequenceError, VCurveError
from squeezr.executor import (
    ApplyPhaseOffset,
    Command,
    CommandFailure,
    LockToMode,
    PlantExecutor,
    SetLock,
    Wait,
)
from squeezr.locks import ChannelId, LockChain, LockStatus
from squeezr.plant import Measurement, Plant
from squeezr.trace import EventLog
from squeezr.vcurve import VCURVE_MODELS, fit_v_curve

logger = logging.getLogger(__name__)


class SupervisorMode(str, Enum):
    AUTO_RELOCK = "AutoRelock"
    DRIFT_COMPENSATION = "DriftCompensation"

    @classmethod
    def parse(cls, value: str | SupervisorMode) -> SupervisorMode:
        if isinstance(value, SupervisorMode):
            return value
        aliases = {
            "auto-relock": cls.AUTO_RELOCK,
            "drift-comp": cls.DRIFT_COMPENSATION,
            "AutoRelock": cls.AUTO_RELOCK,
            "DriftCompensation": cls.DRIFT_COMPENSATION,
        }
        if value in aliases:
            return aliases[value]
        raise ConfigError(unknown_option_message("mode", value, aliases))

    @property
    def cli_name(self) -> str:
        return "auto-relock" if self is SupervisorMode.AUTO_RELOCK else "drift-comp"


@dataclass(frozen=True)
class VCurveScan:
    half_range: float
    n_points: int
    dwell: float

    def offsets(self, center: float) -> list[float]:
        steps = np.linspace(-self.half_range, self.half_range, self.n_points)
        return [center + float(x) for x in steps]


@dataclass(frozen=True)
class DriftCompSettings:
    probe_step: float
    trigger_drop: float
    cycle_length: int
    reference_decay: float
    actuator_range: float


@dataclass(frozen=True)
class SupervisorConfig:
    """Controller settings.

    Attributes:
        mode: AutoRelock or DriftCompensation.
        squeezing_threshold_dB: Relock threshold on the squeezing magnitude.
        beat_threshold: Omega beat amplitude that counts as double resonance.
        vcurve_half_range: Half width of the phase scan (rad).
        vcurve_points: Number of scan points.
        vcurve_dwell: Settling time per scan point (s).
        vcurve_model: ``"v"`` or ``"quadrature"``.
        probe_step: Drift-compensation probe step (rad).
        trigger_drop: Cycle-mean drop below the best level that starts probing (dB).
        cycle_length: Readings per compensation cycle.
        reference_decay: Largest drop of the best level per completed cycle (dB).
        actuator_range: Largest cumulative phase offset compensation may apply (rad).
        debounce_samples: Consecutive bad readings before a relock.
        max_retries: Retries of a phase after plant errors before a restart.
        acquisition_wait: Time given to each lock to acquire (s).
        teardown_wait: Settling time after dropping all locks (s).
    """

    mode: SupervisorMode = SupervisorMode.AUTO_RELOCK
    squeezing_threshold_dB: float = 9.5
    beat_threshold: float = 0.5
    vcurve_half_range: float = 0.030
    vcurve_points: int = 11
    vcurve_dwell: float = 0.3
    vcurve_model: str = "v"
    probe_step: float = 1e-3
    trigger_drop: float = 0.2
    cycle_length: int = 5
    reference_decay: float = 0.01
    actuator_range: float = 1.0
    debounce_samples: int = 2
    max_retries: int = 3
    acquisition_wait: float = 2.0
    teardown_wait: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "mode", SupervisorMode.parse(self.mode))
        if not self.squeezing_threshold_dB > 0.0:
            raise ConfigError(
                "supervisor.squeezing_threshold_dB must be > 0, "
                f"got {self.squeezing_threshold_dB}"
            )
        if not 0.0 <= self.beat_threshold <= 1.0:
            raise ConfigError(
                f"supervisor.beat_threshold must be in [0, 1], got {self.beat_threshold}"
            )
        if int(self.vcurve_points) != self.vcurve_points or self.vcurve_points < 3:
            raise ConfigError(
                f"supervisor.vcurve_points must be an integer >= 3, got {self.vcurve_points}"
            )
        if not self.probe_step > 0.0:
            raise ConfigError(f"supervisor.probe_step must be > 0, got {self.probe_step}")
        if int(self.cycle_length) != self.cycle_length or self.cycle_length < 1:
            raise ConfigError(
                f"supervisor.cycle_length must be an integer >= 1, got {self.cycle_length}"
            )
        if int(self.debounce_samples) != self.debounce_samples or self.debounce_samples < 1:
            raise ConfigError(
                "supervisor.debounce_samples must be an integer >= 1, "
                f"got {self.debounce_samples}"
            )
        if self.vcurve_model not in VCURVE_MODELS:
            raise ConfigError(
                unknown_option_message("vcurve_model", self.vcurve_model, VCURVE_MODELS)
            )
        for name in (
            "vcurve_half_range",
            "vcurve_dwell",
            "trigger_drop",
            "reference_decay",
            "actuator_range",
            "acquisition_wait",
            "teardown_wait",
            "max_retries",
        ):
            value = getattr(self, name)
            if not value >= 0.0:
                raise ConfigError(f"supervisor.{name} must be >= 0, got {value}")

    @property
    def vcurve_scan(self) -> VCurveScan:
        return VCurveScan(self.vcurve_half_range, int(self.vcurve_points), self.vcurve_dwell)

    @property
    def drift_comp(self) -> DriftCompSettings:
        return DriftCompSettings(
            probe_step=self.probe_step,
            trigger_drop=self.trigger_drop,
            cycle_length=int(self.cycle_length),
            reference_decay=self.reference_decay,
            actuator_range=self.actuator_range,
        )

    def replace(self, **changes: Any) -> SupervisorConfig:
        return dataclasses.replace(self, **changes)


class ControllerPhase(str, Enum):
    MONITORING = "Monitoring"
    TEAR_DOWN = "TearDown"
    RELOCK_SHG = "RelockShg"
    RELOCK_OPA_MODE_SEARCH = "RelockOpaModeSearch"
    ENGAGE_B = "EngageB"
    CHECK_DOUBLE_RESONANCE = "CheckDoubleResonance"
    ENGAGE_C = "EngageC"
    VCURVE_SCAN = "VCurveScan"
    APPLY_OFFSET = "ApplyOffset"
    COMPENSATE_PROBE = "CompensateProbe"


RELOCK_PHASES = frozenset(
    {
        ControllerPhase.TEAR_DOWN,
        ControllerPhase.RELOCK_SHG,
        ControllerPhase.RELOCK_OPA_MODE_SEARCH,
        ControllerPhase.ENGAGE_B,
        ControllerPhase.CHECK_DOUBLE_RESONANCE,
        ControllerPhase.ENGAGE_C,
        ControllerPhase.VCURVE_SCAN,
        ControllerPhase.APPLY_OFFSET,
    }
)


@dataclass
class ControllerState:
    """Mutable progress of the supervisor.

    ``phase`` names the step whose commands were issued last; the next
    reading completes it.
    """

    phase: ControllerPhase = ControllerPhase.MONITORING
    mode_index: int = 0
    modes_tried: int = 0
    scan_offsets: list[float] = field(default_factory=list)
    scan_samples: list[tuple[float, float]] = field(default_factory=list)
    best_squeezing_seen: float | None = None
    applied_offset: float = 0.0
    relock_count: int = 0
    time_in_sequence: float = 0.0
    sequence_start: float = 0.0
    last_good_mode: int = 0
    debounce_count: int = 0
    retries: int = 0
    retry_phase: ControllerPhase | None = None
    cycle_readings: list[float] = field(default_factory=list)
    probe_direction: int = 1
    last_success_direction: int = 1
    probe_reference: float = 0.0
    probe_improvements: int = 0
    probe_reversed: bool = False
    probe_origin: float = 0.0
    probe_cycles: int = 0

    @property
    def phase_label(self) -> str:
        if self.phase is ControllerPhase.RELOCK_OPA_MODE_SEARCH:
            return f"{self.phase.value}({self.mode_index})"
        if self.phase is ControllerPhase.VCURVE_SCAN:
            return f"{self.phase.value}({len(self.scan_samples)})"
        if self.phase is ControllerPhase.COMPENSATE_PROBE:
            return f"{self.phase.value}({self.probe_direction:+d})"
        return self.phase.value

    @property
    def in_relock(self) -> bool:
        return self.phase in RELOCK_PHASES


@dataclass(frozen=True)
class RelockOutcome:
    success: bool
    elapsed_s: float
    final_squeezing_dB: float | None
    modes_tried: int
    attempts: int = 1
    started_at: float = 0.0
    vertex: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


class Supervisor:
    """Relock state machine and drift compensator for one plant.

    Args:
        config: Controller settings.
        n_modes: Number of stored OPA mode offsets.
        event_log: Optional structured log receiving every transition.
        last_good_mode: Mode the first search starts from.
    """

    def __init__(
        self,
        config: SupervisorConfig | None = None,
        n_modes: int = 8,
        event_log: EventLog | None = None,
        last_good_mode: int = 0,
        chain: LockChain | None = None,
    ):
        if n_modes < 2:
            raise ConfigError(f"n_modes must be >= 2, got {n_modes}")
        self.config = config or SupervisorConfig()
        self.n_modes = n_modes
        self.event_log = event_log
        self.chain = chain or LockChain()
        self.state = ControllerState(last_good_mode=last_good_mode % n_modes)
        self.outcomes: list[RelockOutcome] = []
        self._events: list[str] = []
        self._reading_dB: float | None = None
        self._clock = 0.0
        self._pending_restart = False

    # -- bookkeeping ------------------------------------------------------

    def _emit(self, label: str) -> None:
        self._events.append(label)
        self._log(None, label)

    def _log(self, command: Command | None, outcome: str) -> None:
        if self.event_log is not None:
            self.event_log.record(
                t=self._clock,
                phase=self.state.phase_label,
                command=None if command is None else command.describe(),
                reading_dB=self._reading_dB,
                outcome=outcome,
            )

    def _issue(self, commands: list[Command]) -> list[Command]:
        for command in commands:
            self._log(command, "issued")
        return commands

    def pop_events(self) -> list[str]:
        events, self._events = self._events, []
        return events

    @property
    def successes(self) -> int:
        return sum(1 for o in self.outcomes if o.success)

    @property
    def failures(self) -> int:
        return sum(1 for o in self.outcomes if not o.success)

    # -- entry point ------------------------------------------------------

    def supervise_step(self, reading: Measurement, clock: float) -> list[Command]:
        """Consume one reading and return the next plant commands."""
        self._clock = clock
        self._reading_dB = reading.squeezing_db
        st = self.state
        if st.in_relock:
            st.time_in_sequence = clock - st.sequence_start
        handler = {
            ControllerPhase.MONITORING: self._monitor,
            ControllerPhase.TEAR_DOWN: self._after_teardown,
            ControllerPhase.RELOCK_SHG: self._after_shg,
            ControllerPhase.RELOCK_OPA_MODE_SEARCH: self._after_opa,
            ControllerPhase.ENGAGE_B: self._after_b,
            ControllerPhase.CHECK_DOUBLE_RESONANCE: self._check_double_resonance,
            ControllerPhase.ENGAGE_C: self._after_c,
            ControllerPhase.VCURVE_SCAN: self._scan_point,
            ControllerPhase.APPLY_OFFSET: self._finish_offset,
            ControllerPhase.COMPENSATE_PROBE: self._compensate,
        }[st.phase]
        return handler(reading)

    def start_relock(self, clock: float, reason: str = "relock-triggered") -> list[Command]:
        """Begin a full relock sequence now; returns the tear-down commands."""
        self._clock = clock
        self._emit(reason)
        return self._begin_sequence()

    def on_command_error(self, failure: CommandFailure, clock: float) -> None:
        """Absorb a rejected command: retry the phase, restart after max_retries."""
        self._clock = clock
        st = self.state
        for command in (failure.command, *failure.skipped):
            if isinstance(command, ApplyPhaseOffset):
                st.applied_offset -= command.delta
        self._log(failure.command, f"error: {failure.error}")
        if st.retry_phase is None:
            # Outside a relock the next invalid readings trigger one.
            st.phase = ControllerPhase.MONITORING
            self._emit("command-rejected")
            return
        st.retries += 1
        if st.retries > self.config.max_retries:
            logger.warning(
                "Relock phase %s failed %d times, restarting", st.phase_label, st.retries
            )
            self._emit("restart")
            st.retries = 0
            st.phase = ControllerPhase.TEAR_DOWN
            st.retry_phase = ControllerPhase.TEAR_DOWN
            self._pending_restart = True
            return
        self._emit("retry")
        st.phase = st.retry_phase

    # -- monitoring -------------------------------------------------------

    def _monitor(self, reading: Measurement) -> list[Command]:
        st = self.state
        cfg = self.config
        if cfg.mode is SupervisorMode.DRIFT_COMPENSATION:
            if not reading.valid:
                st.debounce_count += 1
                if st.debounce_count >= cfg.debounce_samples:
                    return self._trigger_relock()
                return []
            st.debounce_count = 0
            return self._collect_cycle(reading)

        bad = (not reading.valid) or reading.squeezing_level < cfg.squeezing_threshold_dB
        st.debounce_count = st.debounce_count + 1 if bad else 0
        if st.debounce_count >= cfg.debounce_samples:
            return self._trigger_relock()
        return []

    def _trigger_relock(self) -> list[Command]:
        st = self.state
        st.relock_count += 1
        logger.info(
            "Squeezing lost at t=%.1f s (reading %.2f dB), relock #%d",
            self._clock,
            self._reading_dB,
            st.relock_count,
        )
        self._emit("relock-triggered")
        return self._begin_sequence()

    # -- relock sequence --------------------------------------------------

    def _begin_sequence(self) -> list[Command]:
        st = self.state
        st.phase = ControllerPhase.TEAR_DOWN
        st.sequence_start = self._clock
        st.time_in_sequence = 0.0
        st.debounce_count = 0
        st.retries = 0
        st.retry_phase = ControllerPhase.TEAR_DOWN
        st.modes_tried = 0
        st.mode_index = st.last_good_mode
        st.scan_samples = []
        st.cycle_readings = []
        self._pending_restart = False
        commands: list[Command] = [
            SetLock(channel, False) for channel in self.chain.teardown_order()
        ]
        if self.config.teardown_wait > 0.0:
            commands.append(Wait(self.config.teardown_wait))
        return self._issue(commands)

    def _after_teardown(self, reading: Measurement) -> list[Command]:
        if self._pending_restart:
            return self._begin_sequence()
        st = self.state
        st.retry_phase = ControllerPhase.TEAR_DOWN
        st.phase = ControllerPhase.RELOCK_SHG
        return self._issue(
            [SetLock(ChannelId.SHG_LENGTH, True), Wait(self.config.acquisition_wait)]
        )

    def _after_shg(self, reading: Measurement) -> list[Command]:
        st = self.state
        st.retry_phase = ControllerPhase.RELOCK_SHG
        st.phase = ControllerPhase.RELOCK_OPA_MODE_SEARCH
        st.modes_tried = max(st.modes_tried, 1)
        return self._issue(
            [
                SetLock(ChannelId.OPA_LENGTH, True),
                LockToMode(st.mode_index),
                Wait(self.config.acquisition_wait),
            ]
        )

    def _after_opa(self, reading: Measurement) -> list[Command]:
        st = self.state
        st.retry_phase = ControllerPhase.RELOCK_OPA_MODE_SEARCH
        st.phase = ControllerPhase.ENGAGE_B
        return self._issue(
            [SetLock(ChannelId.PUMP_CSF_OFFSET, True), Wait(self.config.acquisition_wait)]
        )

    def _after_b(self, reading: Measurement) -> list[Command]:
        self.state.phase = ControllerPhase.CHECK_DOUBLE_RESONANCE
        return self._check_double_resonance(reading)

    def _check_double_resonance(self, reading: Measurement) -> list[Command]:
        st = self.state
        cfg = self.config
        if reading.beat_amplitude >= cfg.beat_threshold:
            self._emit(f"double-resonance mode {st.mode_index}")
            st.retry_phase = ControllerPhase.ENGAGE_B
            st.phase = ControllerPhase.ENGAGE_C
            return self._issue(
                [SetLock(ChannelId.CSF_LO_OFFSET, True), Wait(cfg.acquisition_wait)]
            )
        if st.modes_tried >= self.n_modes:
            return self._fail_sequence()
        st.mode_index = (st.mode_index + 1) % self.n_modes
        st.modes_tried += 1
        st.retry_phase = ControllerPhase.RELOCK_SHG
        st.phase = ControllerPhase.RELOCK_OPA_MODE_SEARCH
        return self._issue([LockToMode(st.mode_index), Wait(cfg.acquisition_wait)])

    def _fail_sequence(self) -> list[Command]:
        st = self.state
        outcome = RelockOutcome(
            success=False,
            elapsed_s=self._clock - st.sequence_start,
            final_squeezing_dB=None,
            modes_tried=st.modes_tried,
            started_at=st.sequence_start,
        )
        self.outcomes.append(outcome)
        logger.warning(
            "No double resonance in %d modes, restarting from the SHG", st.modes_tried
        )
        self._emit("relock-failed")
        return self._begin_sequence()

    def _after_c(self, reading: Measurement) -> list[Command]:
        st = self.state
        scan = self.config.vcurve_scan
        st.scan_offsets = scan.offsets(st.applied_offset)
        st.scan_samples = []
        st.retry_phase = ControllerPhase.ENGAGE_B
        st.phase = ControllerPhase.VCURVE_SCAN
        return self._issue(self._move_to(st.scan_offsets[0]) + [Wait(scan.dwell)])

    def _move_to(self, offset: float) -> list[Command]:
        st = self.state
        delta = offset - st.applied_offset
        st.applied_offset = offset
        return [ApplyPhaseOffset(delta)]

    def _scan_point(self, reading: Measurement) -> list[Command]:
        st = self.state
        if not reading.valid:
            self._emit("lock-lost-during-scan")
            return self._fail_sequence()
        st.scan_samples.append((st.applied_offset, reading.squeezing_level))
        if len(st.scan_samples) < len(st.scan_offsets):
            nxt = st.scan_offsets[len(st.scan_samples)]
            return self._issue(self._move_to(nxt) + [Wait(self.config.vcurve_dwell)])
        st.phase = ControllerPhase.APPLY_OFFSET
        return self._finish_offset(reading)

    def _finish_offset(self, reading: Measurement) -> list[Command]:
        st = self.state
        try:
            fit = fit_v_curve(st.scan_samples, model=self.config.vcurve_model)
        except VCurveError as e:
            st.retries += 1
            self._log(None, f"vcurve-error: {e}")
            if st.retries > self.config.max_retries:
                self._emit("restart")
                return self._begin_sequence()
            self._emit("retry")
            st.phase = ControllerPhase.VCURVE_SCAN
            st.scan_samples = []
            return self._issue(
                self._move_to(st.scan_offsets[0]) + [Wait(self.config.vcurve_dwell)]
            )

        commands = self._issue(self._move_to(fit.vertex))
        st.last_good_mode = st.mode_index
        outcome = RelockOutcome(
            success=True,
            elapsed_s=self._clock - st.sequence_start,
            final_squeezing_dB=-fit.floor,
            modes_tried=st.modes_tried,
            started_at=st.sequence_start,
            vertex=fit.vertex,
        )
        self.outcomes.append(outcome)
        logger.info(
            "Relocked in %.1f s on mode %d, vertex %.2f mrad",
            outcome.elapsed_s,
            st.mode_index,
            fit.vertex * 1e3,
        )
        self._emit("relock-success")
        st.phase = ControllerPhase.MONITORING
        st.retry_phase = None
        st.retries = 0
        st.cycle_readings = []
        return commands

    # -- drift compensation -----------------------------------------------

    def _collect_cycle(self, reading: Measurement) -> list[Command]:
        st = self.state
        st.cycle_readings.append(reading.squeezing_level)
        if len(st.cycle_readings) < self.config.cycle_length:
            return []
        history = st.cycle_readings
        st.cycle_readings = []
        command = compensate_drift_step(self, history)
        return [] if command is None else self._issue([command])

    def _compensate(self, reading: Measurement) -> list[Command]:
        if not reading.valid:
            st = self.state
            st.debounce_count += 1
            if st.debounce_count >= self.config.debounce_samples:
                return self._trigger_relock()
            return []
        self.state.debounce_count = 0
        return self._collect_cycle(reading)


def _clamped_move(st: ControllerState, delta: float, limit: float) -> float:
    target = min(limit, max(-limit, st.applied_offset + delta))
    return target - st.applied_offset


def _track_reference(st: ControllerState, mean: float, decay: float) -> None:
    # Follows a decline slower than `decay` per cycle without probing.
    if st.best_squeezing_seen is None:
        st.best_squeezing_seen = mean
    else:
        st.best_squeezing_seen = max(mean, st.best_squeezing_seen - decay)


def _converge(controller: Supervisor, delta: float) -> ApplyPhaseOffset | None:
    st = controller.state
    cfg = controller.config.drift_comp
    delta = _clamped_move(st, delta, cfg.actuator_range)
    st.phase = ControllerPhase.MONITORING
    controller._emit("converged")
    if abs(delta) < 1e-15:
        return None
    st.applied_offset += delta
    return ApplyPhaseOffset(delta)


def _probe(controller: Supervisor, delta: float) -> ApplyPhaseOffset | None:
    st = controller.state
    cfg = controller.config.drift_comp
    clamped = _clamped_move(st, delta, cfg.actuator_range)
    if abs(clamped) < 1e-15:
        return _converge(controller, 0.0)
    st.applied_offset += clamped
    st.probe_cycles += 1
    return ApplyPhaseOffset(clamped)


def compensate_drift_step(
    controller: Supervisor, reading_history: Sequence[float]
) -> ApplyPhaseOffset | None:
    """Perturb-and-observe update from one completed cycle of readings.

    Args:
        controller: Supervisor in DriftCompensation mode.
        reading_history: Squeezing magnitudes (dB) of the cycle just completed.

    Returns:
        The phase offset to apply, or None to keep monitoring.
    """
    st = controller.state
    cfg = controller.config.drift_comp
    if not reading_history:
        return None
    mean = float(np.mean(reading_history))
    _track_reference(st, mean, cfg.reference_decay)

    if st.phase is ControllerPhase.MONITORING:
        if mean > st.best_squeezing_seen - cfg.trigger_drop:
            return None
        st.phase = ControllerPhase.COMPENSATE_PROBE
        st.probe_direction = st.last_success_direction
        st.probe_reference = mean
        st.probe_improvements = 0
        st.probe_reversed = False
        st.probe_origin = st.applied_offset
        controller._emit("probe-start")
        return _probe(controller, st.probe_direction * cfg.probe_step)

    if mean > st.probe_reference:
        st.probe_improvements += 1
        st.last_success_direction = st.probe_direction
        st.probe_reference = mean
        return _probe(controller, st.probe_direction * cfg.probe_step)

    if st.probe_improvements == 0 and not st.probe_reversed:
        st.probe_reversed = True
        st.probe_direction = -st.probe_direction
        return _probe(controller, 2.0 * st.probe_direction * cfg.probe_step)

    if st.probe_improvements == 0:
        return _converge(controller, st.probe_origin - st.applied_offset)
    return _converge(controller, -st.probe_direction * cfg.probe_step)


# -- sequence helpers -------------------------------------------------------


def run_relock_sequence(
    plant: Plant,
    config: SupervisorConfig | None = None,
    *,
    start_mode: int = 0,
    max_attempts: int = 3,
    on_cycle: Callable[[Supervisor, Plant], None] | None = None,
    event_log: EventLog | None = None,
) -> RelockOutcome:
    """Run the full relock sequence on a plant until it succeeds or gives up.

    Exhausting every mode counts as a failed attempt and the sequence restarts
    from the SHG; after ``max_attempts`` failures a failure outcome is returned
    with the locks torn down. The first reading after success is reported as
    ``final_squeezing_dB``.
    """
    config = config or SupervisorConfig(mode=SupervisorMode.AUTO_RELOCK)
    supervisor = Supervisor(
        config.replace(mode=SupervisorMode.AUTO_RELOCK),
        n_modes=plant.config.n_modes_per_scan,
        event_log=event_log,
        last_good_mode=start_mode,
        chain=plant.chain,
    )
    executor = PlantExecutor(plant, record=False)
    started = plant.time
    failure = executor.execute(supervisor.start_relock(started, reason="relock-requested"))
    if failure is not None:
        supervisor.on_command_error(failure, plant.time)

    # Generous bound: every attempt visits each mode once plus the scan.
    scan_cycles = (config.vcurve_points + 2) * (config.max_retries + 2)
    max_cycles = max_attempts * (3 * plant.config.n_modes_per_scan + 8 + scan_cycles)
    for _ in range(max_cycles):
        executor.cycle(supervisor)
        if on_cycle is not None:
            on_cycle(supervisor, plant)
        if supervisor.successes:
            break
        if supervisor.failures >= max_attempts:
            for channel in supervisor.chain.teardown_order():
                plant.set_lock(channel, False)
            last = supervisor.outcomes[-1]
            return dataclasses.replace(
                last,
                elapsed_s=plant.time - started,
                attempts=supervisor.failures,
                started_at=started,
            )

    if not supervisor.successes:
        return RelockOutcome(
            success=False,
            elapsed_s=plant.time - started,
            final_squeezing_dB=None,
            modes_tried=supervisor.state.modes_tried,
            attempts=len(supervisor.outcomes) + 1,
            started_at=started,
        )

    success = next(o for o in supervisor.outcomes if o.success)
    executor.wait(plant.config.measurement_period)
    after = executor.measure()
    return dataclasses.replace(
        success,
        elapsed_s=success.started_at + success.elapsed_s - started,
        final_squeezing_dB=after.squeezing_db,
        attempts=len(supervisor.outcomes),
        started_at=started,
    )


def _lock_mode_and_b(plant: Plant, mode: int, wait: float) -> float | None:
    opa = ChannelId.OPA_LENGTH
    if plant.status(opa) is LockStatus.DISENGAGED:
        plant.set_lock(opa, True)
    plant.lock_to_mode(mode)
    plant.advance(wait)
    try:
        plant.set_lock(ChannelId.PUMP_CSF_OFFSET, True)
    except LockSequenceError:
        return None
    plant.advance(wait)
    return plant.read_beat_amplitude()


def find_double_resonance(
    plant: Plant,
    config: SupervisorConfig | None = None,
    start_mode: int = 0,
) -> int | None:
    """First mode, in search order from ``start_mode``, showing double resonance.

    Returns:
        The mode index, or None when no mode reaches the beat threshold.

    Raises:
        LockSequenceError: If the SHG is not locked.
    """
    config = config or SupervisorConfig()
    if not plant.is_locked(ChannelId.SHG_LENGTH):
        raise LockSequenceError("find_double_resonance requires the SHG locked")
    n = plant.config.n_modes_per_scan
    for k in range(n):
        mode = (start_mode + k) % n
        beat = _lock_mode_and_b(plant, mode, config.acquisition_wait)
        if beat is not None and beat >= config.beat_threshold:
            return mode
    return None


def scan_all_modes(plant: Plant, config: SupervisorConfig | None = None) -> list[float]:
    """Beat amplitude of every stored mode with OPA and B locked on it."""
    config = config or SupervisorConfig()
    if not plant.is_locked(ChannelId.SHG_LENGTH):
        raise LockSequenceError("scan_all_modes requires the SHG locked")
    beats = []
    for mode in range(plant.config.n_modes_per_scan):
        beat = _lock_mode_and_b(plant, mode, config.acquisition_wait)
        beats.append(0.0 if beat is None else beat)
    return beats
