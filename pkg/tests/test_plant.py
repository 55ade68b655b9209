import math

import numpy as np
import pytest
from conftest import DR_MODE, lock_everything

from squeezr.exceptions import ConfigError, LockSequenceError
from squeezr.locks import ChannelId, LockStatus
from squeezr.model import OperatingPoint, measured_variances
from squeezr.plant import Disturbance, PlantConfig, init_plant


def _statuses(plant):
    return {channel: plant.status(channel) for channel in ChannelId}


class TestPlantConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dt": 0.0},
            {"double_resonance_mode": 8},
            {"lock_loss_rate": -1.0},
            {"nominal_pump_ratio": 1.0},
            {"n_modes_per_scan": 1},
            {"beat_full": 1.5},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            PlantConfig(**kwargs)

    def test_faulty_channels_are_parsed(self):
        config = PlantConfig(faulty_channels=("B", "CsfLoOffset"))
        assert config.faulty_channels == (
            ChannelId.PUMP_CSF_OFFSET,
            ChannelId.CSF_LO_OFFSET,
        )

    def test_frozen(self):
        assert not PlantConfig().is_frozen
        frozen = PlantConfig().frozen(noiseless=True)
        assert frozen.is_frozen
        assert frozen.readout_noise_db == 0.0

    def test_bad_seed(self):
        with pytest.raises(ConfigError):
            init_plant(PlantConfig(), seed=-1)


class TestDeterminism:
    def _run(self, seed):
        plant = init_plant(PlantConfig(), seed=seed)
        lock_everything(plant, mode=plant.double_resonance_mode)
        readings = []
        for _ in range(300):
            plant.advance(1.0)
            readings.append(plant.read_squeezing())
        return plant.snapshot(), readings

    def test_same_seed_same_trajectory(self):
        state_a, readings_a = self._run(5)
        state_b, readings_b = self._run(5)
        assert state_a == state_b
        assert readings_a == readings_b

    def test_different_seed_differs(self):
        _, readings_a = self._run(5)
        _, readings_b = self._run(6)
        assert readings_a != readings_b

    def test_double_resonance_mode_drawn_from_seed(self):
        modes = {init_plant(PlantConfig(), seed=s).double_resonance_mode for s in range(40)}
        assert len(modes) > 1
        assert modes <= set(range(8))


class TestLockChannels:
    def test_starts_disengaged(self, quiet_plant):
        assert all(s is LockStatus.DISENGAGED for s in _statuses(quiet_plant).values())
        assert quiet_plant.current_mode is None

    def test_acquisition_takes_dead_time(self, quiet_plant):
        quiet_plant.set_lock("SHG", True)
        assert quiet_plant.status("SHG") is LockStatus.ACQUIRING
        quiet_plant.advance(1.9)
        assert quiet_plant.status("SHG") is LockStatus.ACQUIRING
        quiet_plant.advance(0.1)
        assert quiet_plant.status("SHG") is LockStatus.LOCKED

    def test_out_of_order_engage_rejected(self, quiet_plant):
        with pytest.raises(LockSequenceError, match="prerequisite"):
            quiet_plant.set_lock("B", True)
        assert quiet_plant.status("B") is LockStatus.DISENGAGED

    def test_engage_while_prerequisite_acquiring_rejected(self, quiet_plant):
        quiet_plant.set_lock("SHG", True)
        with pytest.raises(LockSequenceError):
            quiet_plant.set_lock("OPA", True)

    def test_disengage_cascades(self, locked_plant):
        assert locked_plant.all_locked
        locked_plant.set_lock("OPA", False)
        statuses = _statuses(locked_plant)
        assert statuses[ChannelId.SHG_LENGTH] is LockStatus.LOCKED
        assert statuses[ChannelId.OPA_LENGTH] is LockStatus.DISENGAGED
        assert statuses[ChannelId.PUMP_CSF_OFFSET] is LockStatus.DISENGAGED
        assert statuses[ChannelId.CSF_LO_OFFSET] is LockStatus.DISENGAGED
        assert locked_plant.current_mode is None

    def test_chain_stays_consistent_under_lock_losses(self):
        plant = init_plant(PlantConfig(lock_loss_rate=0.02), seed=3)
        losses = 0
        for _ in range(3000):
            locked_before = sum(plant.is_locked(c) for c in ChannelId)
            plant.step()
            if sum(plant.is_locked(c) for c in ChannelId) < locked_before:
                losses += 1
            assert plant.chain.is_consistent(_statuses(plant))
            for channel in plant.chain.engage_order():
                if plant.status(channel) is LockStatus.DISENGAGED:
                    try:
                        plant.set_lock(channel, True)
                    except LockSequenceError:
                        pass
            assert plant.chain.is_consistent(_statuses(plant))
        assert losses > 0

    def test_faulty_channel_never_locks(self, quiet_config):
        plant = init_plant(quiet_config.replace(faulty_channels=("C",)), seed=1)
        lock_everything(plant)
        plant.advance(10.0)
        assert plant.status("C") is LockStatus.ACQUIRING
        assert plant.is_locked("B")

    def test_lock_to_mode_validation(self, quiet_plant):
        with pytest.raises(LockSequenceError):
            quiet_plant.lock_to_mode(1)
        quiet_plant.set_lock("SHG", True)
        quiet_plant.advance(2.0)
        quiet_plant.set_lock("OPA", True)
        with pytest.raises(ValueError):
            quiet_plant.lock_to_mode(8)

    def test_lock_to_mode_drops_dependents(self, locked_plant):
        locked_plant.lock_to_mode(0)
        assert locked_plant.status("OPA") is LockStatus.ACQUIRING
        assert locked_plant.status("B") is LockStatus.DISENGAGED
        assert locked_plant.status("C") is LockStatus.DISENGAGED
        locked_plant.advance(2.0)
        assert locked_plant.current_mode == 0


class TestReadouts:
    def test_unlocked_reading_is_shot_noise(self, quiet_plant):
        reading = quiet_plant.read_squeezing()
        assert reading.valid is False
        assert reading.squeezing_db == pytest.approx(0.0, abs=1e-12)
        assert reading.antisqueezing_db is None

    def test_locked_reading_matches_model(self, locked_plant, quiet_config):
        reading = locked_plant.read_squeezing()
        expected = measured_variances(quiet_config.model, OperatingPoint(0.67))
        assert reading.valid
        assert reading.squeezing_db == pytest.approx(expected.squeezing_db, abs=1e-9)
        assert reading.antisqueezing_db == pytest.approx(
            expected.antisqueezing_db, abs=1e-9
        )
        assert reading.squeezing_level == pytest.approx(12.11, abs=0.02)
        assert reading.pump_mW == pytest.approx(0.67 * 710.0)

    def test_wrong_mode_gives_no_squeezing(self, quiet_plant, quiet_config):
        lock_everything(quiet_plant, mode=(DR_MODE + 1) % 8)
        reading = quiet_plant.read_squeezing()
        assert not reading.valid
        assert reading.beat_amplitude == pytest.approx(quiet_config.beat_floor)

    def test_beat_amplitudes(self, quiet_plant, quiet_config):
        quiet_plant.set_lock("SHG", True)
        quiet_plant.advance(2.0)
        quiet_plant.set_lock("OPA", True)
        quiet_plant.lock_to_mode(DR_MODE)
        quiet_plant.advance(2.0)
        quiet_plant.set_lock("B", True)
        quiet_plant.advance(2.0)
        assert quiet_plant.read_beat_amplitude() == pytest.approx(quiet_config.beat_resonant)
        quiet_plant.set_lock("C", True)
        quiet_plant.advance(2.0)
        assert quiet_plant.read_beat_amplitude() == pytest.approx(quiet_config.beat_full)
        control = quiet_plant.coherent_control()
        assert control.beat_amplitude_omega == quiet_config.beat_full

    def test_lock_b_phase_follows_detuning(self, locked_plant, quiet_plant):
        assert locked_plant.coherent_control().phase_offset_B == 0.0
        locked_plant.inject_disturbance("ResonanceShift", mode=DR_MODE)
        detuning = locked_plant.resonance_detuning
        assert detuning != 0.0
        control = locked_plant.coherent_control()
        assert control.phase_offset_B == pytest.approx(math.atan(detuning))
        assert quiet_plant.coherent_control().phase_offset_B == 0.0

    def test_phase_offset_needs_lock_c(self, quiet_plant):
        with pytest.raises(LockSequenceError):
            quiet_plant.apply_phase_offset(0.01)

    def test_phase_offset_moves_angle_error(self, locked_plant):
        best = locked_plant.read_squeezing().squeezing_level
        locked_plant.apply_phase_offset(0.03)
        assert locked_plant.angle_error == pytest.approx(-0.03)
        assert locked_plant.read_squeezing().squeezing_level < best - 1.0
        assert locked_plant.coherent_control().phase_offset_C == pytest.approx(0.03)

    def test_right_angle_error_reads_antisqueezing(self, locked_plant):
        locked_plant.apply_phase_offset(-math.pi / 2)
        assert locked_plant.read_squeezing().squeezing_db == pytest.approx(19.66, abs=0.01)

    def _locked_readings(self, config, n=1000, seed=3):
        plant = lock_everything(init_plant(config, seed=seed))
        return np.array([plant.read_squeezing().squeezing_db for _ in range(n)])

    def test_reading_mean_matches_model(self, quiet_config):
        config = quiet_config.replace(readout_noise_db=0.05)
        samples = self._locked_readings(config)
        expected = measured_variances(config.model, OperatingPoint(0.67))
        # Readout noise sits on the raw trace; the dark-noise correction
        # scales it by (V + d) / V.
        dark = 10.0 ** (-config.electronic_noise_clearance_db / 10.0)
        gain = (expected.v_squeezed + dark) / expected.v_squeezed
        tolerance = 3.0 * 0.05 * gain / math.sqrt(len(samples))
        assert samples.mean() == pytest.approx(expected.squeezing_db, abs=tolerance)

    def test_reading_never_beats_efficiency_bound(self, quiet_config):
        config = quiet_config.replace(readout_noise_db=0.05)
        samples = self._locked_readings(config)
        bound = 10.0 * math.log10(1.0 - config.model.total_efficiency) - 3.0 * 0.05
        assert samples.min() >= bound

    def test_electronic_noise_widens_corrected_readings(self, quiet_config):
        config = quiet_config.replace(readout_noise_db=0.05)
        expected = measured_variances(config.model, OperatingPoint(0.67))
        for clearance in (18.0, 10.0):
            noisy_dark = config.replace(electronic_noise_clearance_db=clearance)
            samples = self._locked_readings(noisy_dark, n=4000)
            dark = 10.0 ** (-clearance / 10.0)
            gain = (expected.v_squeezed + dark) / expected.v_squeezed
            assert samples.std() == pytest.approx(0.05 * gain, rel=0.08)


class TestDrifts:
    def test_pump_power_is_stationary(self):
        config = PlantConfig().frozen().replace(
            pump_rms_fraction=0.005, pump_relaxation_time=1.0
        )
        plant = init_plant(config, seed=11)
        samples = np.empty(100_000)
        for k in range(samples.size):
            plant.step()
            samples[k] = plant.pump_power
        nominal = config.nominal_pump_power
        assert samples.mean() == pytest.approx(nominal, rel=1e-3)
        assert samples.var() / nominal**2 == pytest.approx(0.005**2, rel=0.05)

    def test_pump_power_long_relaxation(self):
        config = PlantConfig().frozen().replace(pump_rms_fraction=0.005)
        plant = init_plant(config, seed=11)
        samples = []
        for _ in range(2000):
            plant.advance(10.0)
            samples.append(plant.pump_power)
        samples = np.asarray(samples)
        nominal = config.nominal_pump_power
        assert samples.mean() == pytest.approx(nominal, rel=2e-3)
        assert samples.std() / nominal == pytest.approx(0.005, rel=0.2)

    def test_angle_random_walk_rate(self):
        config = PlantConfig().frozen().replace(angle_walk_rate=6.75e-4)
        plant = init_plant(config, seed=12)
        walk = []
        for _ in range(10000):
            plant.advance(1.0)
            walk.append(plant.angle_error)
        increments = np.diff(walk)
        assert increments.std() == pytest.approx(6.75e-4, rel=0.05)

    def test_linear_angle_drift(self, quiet_config):
        plant = init_plant(quiet_config.replace(angle_drift_rate=1e-5), seed=1)
        plant.advance(100.0)
        assert plant.angle_error == pytest.approx(1e-3, rel=1e-9)

    def test_frozen_plant_does_not_move(self, locked_plant):
        before = locked_plant.read_squeezing().squeezing_db
        locked_plant.advance(3600.0)
        assert locked_plant.read_squeezing().squeezing_db == before
        assert locked_plant.all_locked


class TestDisturbances:
    def test_lock_loss(self, locked_plant):
        locked_plant.inject_disturbance(Disturbance.LOCK_LOSS)
        assert locked_plant.is_locked("SHG")
        assert not locked_plant.is_locked("OPA")
        assert not locked_plant.read_squeezing().valid

    def test_pump_jump(self, locked_plant, quiet_config):
        locked_plant.inject_disturbance("PumpJump")
        assert locked_plant.pump_power == pytest.approx(quiet_config.nominal_pump_power * 1.1)
        for _ in range(10):
            locked_plant.inject_disturbance("PumpJump")
        assert locked_plant.effective_pump_ratio == quiet_config.max_pump_ratio

    def test_resonance_shift_moves_double_resonance(self, locked_plant):
        locked_plant.inject_disturbance("ResonanceShift", mode=5)
        assert locked_plant.double_resonance_mode == 5
        assert not locked_plant.read_squeezing().valid
        assert locked_plant.resonance_detuning != 0.0

    def test_relock_recenters_detuning(self, locked_plant):
        locked_plant.inject_disturbance("ResonanceShift", mode=DR_MODE)
        assert locked_plant.resonance_detuning != 0.0
        locked_plant.lock_to_mode(DR_MODE)
        locked_plant.advance(2.0)
        assert locked_plant.resonance_detuning == 0.0

    def test_unknown_disturbance(self, locked_plant):
        with pytest.raises(ValueError):
            locked_plant.inject_disturbance("Earthquake")
