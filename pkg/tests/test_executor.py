import pytest
from conftest import DR_MODE

from squeezr.autolock import ControllerPhase, Supervisor
from squeezr.exceptions import LockSequenceError
from squeezr.executor import (
    ApplyPhaseOffset,
    CommandFailure,
    LockToMode,
    Measure,
    PlantExecutor,
    SetLock,
    Wait,
    replay,
)
from squeezr.locks import ChannelId
from squeezr.plant import PlantConfig, init_plant


class TestPlantExecutor:
    def test_apply_commands(self, quiet_plant):
        executor = PlantExecutor(quiet_plant)
        failure = executor.execute(
            [
                SetLock(ChannelId.SHG_LENGTH, True),
                Wait(2.0),
                SetLock(ChannelId.OPA_LENGTH, True),
                LockToMode(DR_MODE),
                Wait(2.0),
            ]
        )
        assert failure is None
        assert quiet_plant.current_mode == DR_MODE
        assert quiet_plant.time == pytest.approx(4.0)
        assert len(executor.log) == 5

    def test_rejected_command_stops_the_batch(self, quiet_plant):
        executor = PlantExecutor(quiet_plant)
        commands = [SetLock(ChannelId.PUMP_CSF_OFFSET, True), Wait(1.0), ApplyPhaseOffset(1e-3)]
        failure = executor.execute(commands)
        assert isinstance(failure, CommandFailure)
        assert failure.command == commands[0]
        assert failure.skipped == (Wait(1.0), ApplyPhaseOffset(1e-3))
        assert isinstance(failure.error, LockSequenceError)
        assert quiet_plant.time == 0.0
        assert executor.log == [commands[0]]

    def test_unknown_command(self, quiet_plant):
        with pytest.raises(TypeError):
            PlantExecutor(quiet_plant).apply("engage everything")

    def test_measure_is_logged(self, quiet_plant):
        executor = PlantExecutor(quiet_plant)
        reading = executor.measure()
        assert not reading.valid
        assert executor.log == [Measure()]

    def test_recording_can_be_disabled(self, quiet_plant):
        executor = PlantExecutor(quiet_plant, record=False)
        executor.wait(1.0)
        executor.measure()
        assert executor.log == []

    def test_idle_cycle_advances_one_period(self, locked_plant):
        executor = PlantExecutor(locked_plant)
        before = locked_plant.time
        result = executor.cycle(Supervisor())
        assert result.commands == ()
        assert result.phase == "Monitoring"
        assert locked_plant.time == pytest.approx(before + 1.0)

    def test_run_stops_at_duration(self, locked_plant):
        executor = PlantExecutor(locked_plant, record=False)
        cycles = []
        executor.run(Supervisor(), until=locked_plant.time + 10.0, on_cycle=cycles.append)
        assert len(cycles) == 10


class TestCommandErrors:
    def test_retry_then_restart(self, supervisor_config):
        supervisor = Supervisor(supervisor_config.replace(max_retries=2))
        supervisor.start_relock(0.0)
        supervisor.pop_events()
        failure = CommandFailure(
            SetLock(ChannelId.SHG_LENGTH, True), LockSequenceError("interlock")
        )
        supervisor.on_command_error(failure, 1.0)
        supervisor.on_command_error(failure, 2.0)
        assert supervisor.pop_events() == ["retry", "retry"]
        supervisor.on_command_error(failure, 3.0)
        assert supervisor.pop_events() == ["restart"]
        assert supervisor.state.phase is ControllerPhase.TEAR_DOWN

    def test_rejected_offset_is_rolled_back(self):
        supervisor = Supervisor()
        supervisor.state.applied_offset = 5e-3
        failure = CommandFailure(
            ApplyPhaseOffset(2e-3), LockSequenceError("C not locked"), (ApplyPhaseOffset(1e-3),)
        )
        supervisor.on_command_error(failure, 0.0)
        assert supervisor.state.applied_offset == pytest.approx(2e-3)
        assert supervisor.pop_events() == ["command-rejected"]
        assert supervisor.state.phase is ControllerPhase.MONITORING

    def test_cycle_reports_failure_and_events(self, quiet_config):
        plant = init_plant(quiet_config.replace(faulty_channels=("SHG",)), seed=1)
        supervisor = Supervisor()
        executor = PlantExecutor(plant)
        assert executor.execute(supervisor.start_relock(0.0)) is None
        assert executor.cycle(supervisor).failure is None

        started = plant.time
        result = executor.cycle(supervisor)
        assert result.phase == "RelockShg"
        assert result.failure.command == SetLock(ChannelId.OPA_LENGTH, True)
        assert result.failure.skipped == (LockToMode(0), Wait(2.0))
        assert result.events == ("retry",)
        assert plant.time == pytest.approx(started + 1.0)


class TestReplay:
    def _record(self, seed):
        config = PlantConfig(lock_loss_rate=1.0 / 600.0)
        plant = init_plant(config, seed=seed)
        supervisor = Supervisor(n_modes=config.n_modes_per_scan, chain=plant.chain)
        executor = PlantExecutor(plant)
        failure = executor.execute(supervisor.start_relock(0.0, reason="cold-start"))
        assert failure is None
        readings = []
        executor.run(supervisor, until=1800.0, on_cycle=lambda r: readings.append(r.reading))
        return plant, executor.log, readings

    def test_replay_reproduces_readings_and_state(self):
        plant, log, readings = self._record(seed=21)
        fresh = init_plant(plant.config, seed=21)
        assert replay(fresh, log) == readings
        assert fresh.snapshot() == plant.snapshot()

    def test_log_mixes_commands_and_readings(self):
        _, log, readings = self._record(seed=22)
        assert sum(isinstance(entry, Measure) for entry in log) == len(readings)
        assert any(isinstance(entry, LockToMode) for entry in log)
        assert any(isinstance(entry, ApplyPhaseOffset) for entry in log)
