"""Plant commands and the executor that applies them.

Controllers never touch a plant directly: they return command values and a
:class:`PlantExecutor` applies them, advances simulated time, takes the
readings and keeps a replayable log of everything it did.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

from squeezr.exceptions import LockSequenceError
from squeezr.locks import ChannelId
from squeezr.plant import Measurement, Plant

if TYPE_CHECKING:
    from squeezr.autolock import Supervisor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SetLock:
    channel: ChannelId
    engage: bool

    def describe(self) -> str:
        return f"{'engage' if self.engage else 'disengage'} {self.channel.short}"


@dataclass(frozen=True)
class LockToMode:
    mode_index: int

    def describe(self) -> str:
        return f"lock_to_mode {self.mode_index}"


@dataclass(frozen=True)
class ApplyPhaseOffset:
    delta: float

    def describe(self) -> str:
        return f"phase_offset {self.delta * 1e3:+.4f} mrad"


@dataclass(frozen=True)
class Wait:
    seconds: float

    def describe(self) -> str:
        return f"wait {self.seconds:g} s"


@dataclass(frozen=True)
class Measure:
    """Take one reading. Only appears in the executor log."""

    def describe(self) -> str:
        return "measure"


Command = Union[SetLock, LockToMode, ApplyPhaseOffset, Wait]
LogEntry = Union[SetLock, LockToMode, ApplyPhaseOffset, Wait, Measure]


@dataclass(frozen=True)
class CommandFailure:
    """A command the plant rejected, plus the commands skipped after it."""

    command: Command
    error: Exception
    skipped: tuple[Command, ...] = ()


@dataclass(frozen=True)
class CycleResult:
    reading: Measurement
    phase: str
    commands: tuple[Command, ...]
    failure: CommandFailure | None = None
    events: tuple[str, ...] = field(default_factory=tuple)
    applied_offset: float = 0.0


class PlantExecutor:
    """Applies controller commands to one plant and logs them in order."""

    def __init__(self, plant: Plant, record: bool = True):
        self.plant = plant
        self.record = record
        self.log: list[LogEntry] = []

    def _log(self, entry: LogEntry) -> None:
        if self.record:
            self.log.append(entry)

    def apply(self, command: Command) -> None:
        plant = self.plant
        self._log(command)
        if isinstance(command, SetLock):
            plant.set_lock(command.channel, command.engage)
        elif isinstance(command, LockToMode):
            plant.lock_to_mode(command.mode_index)
        elif isinstance(command, ApplyPhaseOffset):
            plant.apply_phase_offset(command.delta)
        elif isinstance(command, Wait):
            plant.advance(command.seconds)
        else:
            raise TypeError(f"Unknown plant command: {command!r}")

    def execute(self, commands: Sequence[Command]) -> CommandFailure | None:
        """Apply commands in order; stop at the first one the plant rejects."""
        for i, command in enumerate(commands):
            try:
                self.apply(command)
            except (LockSequenceError, ValueError) as e:
                logger.debug("Plant rejected %s: %s", command.describe(), e)
                return CommandFailure(command, e, tuple(commands[i + 1 :]))
        return None

    def wait(self, seconds: float) -> None:
        self.apply(Wait(seconds))

    def measure(self) -> Measurement:
        self._log(Measure())
        return self.plant.read_squeezing()

    def cycle(self, supervisor: Supervisor) -> CycleResult:
        """Read, let the supervisor decide, apply its commands, advance time.

        When the supervisor asks for no explicit wait, the plant advances by
        one measurement period so readings keep their nominal cadence.
        """
        reading = self.measure()
        phase = supervisor.state.phase_label
        offset = supervisor.state.applied_offset
        started = self.plant.time
        commands = tuple(supervisor.supervise_step(reading, self.plant.time))
        failure = self.execute(commands)
        if failure is not None:
            supervisor.on_command_error(failure, self.plant.time)
        events = supervisor.pop_events()
        if self.plant.time <= started:
            self.wait(self.plant.config.measurement_period)
        return CycleResult(reading, phase, commands, failure, tuple(events), offset)

    def run(
        self,
        supervisor: Supervisor,
        until: float,
        on_cycle: Callable[[CycleResult], None] | None = None,
    ) -> None:
        while self.plant.time < until - 1e-9:
            result = self.cycle(supervisor)
            if on_cycle is not None:
                on_cycle(result)


def replay(plant: Plant, log: Iterable[LogEntry]) -> list[Measurement]:
    """Re-apply a recorded executor log to a fresh plant.

    Rejected commands are skipped exactly as they were when recorded, so the
    plant ends in the same state; returns the readings in order.
    """
    executor = PlantExecutor(plant, record=False)
    readings = []
    for entry in log:
        if isinstance(entry, Measure):
            readings.append(plant.read_squeezing())
            continue
        try:
            executor.apply(entry)
        except (LockSequenceError, ValueError):
            pass
    return readings
