import numpy as np
import pytest

from hero_mux.geometry import Pose
from hero_mux.health import (
    CheckConfig,
    CheckId,
    EpochMismatch,
    InsufficientStreams,
    Verdict,
    divergence_check,
    jump_check,
    rate_check,
    sensor_data_check,
    voting_check,
)
from hero_mux.state import CovarianceBlock, InvalidCovariance, RobotState
from hero_mux.streams import OdometryMessage, SensorStats

CFG = CheckConfig(nominal_rate=20.0, gap_factor=3.0)


@pytest.mark.parametrize("gap, verdict", [(0.05, Verdict.PASS), (0.15, Verdict.PASS), (0.20, Verdict.SOFT_FAIL),
                                          (0.30, Verdict.SOFT_FAIL), (1.0, Verdict.HARD_FAIL)])
def test_rate_check_examples(gap, verdict):
    r = rate_check(10.0, 10.0 + gap, CFG)
    assert r.check_id is CheckId.RATE
    assert r.verdict is verdict


def test_rate_check_monotone():
    gaps = np.linspace(0, 2, 401)
    verdicts = [rate_check(0.0, g, CFG).verdict for g in gaps]
    assert all(a <= b for a, b in zip(verdicts, verdicts[1:]))


def _msg(p, stamp, epoch=0):
    return OdometryMessage("s", stamp, pose=Pose(p), init_epoch=epoch)


def test_jump_check_examples():
    cfg = CheckConfig(v_max=2.0, jump_margin=0.1)
    prev = RobotState(1.0, p=(1, 2, 3))
    assert jump_check(prev, _msg((1, 2, 3), 1.5), cfg).verdict is Verdict.PASS
    r = jump_check(RobotState(0.0), _msg((10, 0, 0), 0.05), cfg)
    assert r.verdict is Verdict.HARD_FAIL and r.detail == pytest.approx(10.0)
    # exactly at the 0.2 m bound is inclusive
    assert jump_check(RobotState(0.0), _msg((0.2, 0, 0), 0.05), cfg).verdict is Verdict.PASS
    assert jump_check(RobotState(0.0), _msg((0.2001, 0, 0), 0.05), cfg).verdict is Verdict.HARD_FAIL


def test_jump_check_translation_invariant(rng):
    cfg = CheckConfig(v_max=2.0, jump_margin=0.1)
    for _ in range(200):
        a, b, off = rng.normal(size=3) * 0.2, rng.normal(size=3) * 0.2, rng.normal(size=3) * 100
        v1 = jump_check(RobotState(0.0, p=a), _msg(b, 0.05), cfg).verdict
        v2 = jump_check(RobotState(0.0, p=a + off), _msg(b + off, 0.05), cfg).verdict
        assert v1 is v2


def test_jump_check_refuses_cross_epoch():
    with pytest.raises(EpochMismatch):
        jump_check(RobotState(0.0), _msg((0, 0, 0), 0.05, epoch=1), CFG, prev_epoch=0)


@pytest.mark.parametrize("diag, verdict", [(0.0, Verdict.PASS), (1.0, Verdict.HARD_FAIL), (0.1, Verdict.PASS)])
def test_divergence_examples(diag, verdict):
    r = divergence_check(CovarianceBlock.isotropic(diag), CheckConfig(cov_trace_max=0.5))
    assert r.verdict is verdict
    assert r.detail == pytest.approx(3 * diag)


def test_divergence_rejects_invalid_covariance():
    with pytest.raises(InvalidCovariance):
        divergence_check(CovarianceBlock(-np.eye(3)), CFG)


def test_sensor_data_examples():
    assert sensor_data_check(SensorStats(20.0), CFG).verdict is Verdict.PASS
    dust = sensor_data_check(SensorStats(20.0, invalid_fraction=0.9), CFG)
    assert dust.verdict is Verdict.SOFT_FAIL and dust.check_id is CheckId.SENSOR_DATA
    assert sensor_data_check(SensorStats(20.0, intensity_var=0.0), CFG).verdict is Verdict.SOFT_FAIL
    assert sensor_data_check(SensorStats(5.0), CFG).verdict is Verdict.SOFT_FAIL


def _oracle_vote(vels, k=3.0, floor=0.05):
    # brute force: per axis median and MAD by sorting
    flagged = set()
    v = [list(x) for x in vels]
    for axis in range(3):
        col = sorted(x[axis] for x in v)
        med = col[len(col) // 2] if len(col) % 2 else 0.5 * (col[len(col) // 2 - 1] + col[len(col) // 2])
        devs = sorted(abs(x[axis] - med) for x in v)
        mad = devs[len(devs) // 2] if len(devs) % 2 else 0.5 * (devs[len(devs) // 2 - 1] + devs[len(devs) // 2])
        for i, x in enumerate(v):
            if abs(x[axis] - med) > k * max(mad, floor):
                flagged.add(i)
    return flagged


def test_voting_examples():
    same = voting_check([("a", (1, 0, 0)), ("b", (1, 0, 0)), ("c", (1, 0, 0))], CFG)
    assert all(r.verdict is Verdict.PASS for r in same.values())
    out = voting_check([("a", (1, 0, 0)), ("b", (1.01, 0, 0)), ("c", (9, 0, 0))], CFG)
    assert [out[s].verdict for s in "abc"] == [Verdict.PASS, Verdict.PASS, Verdict.HARD_FAIL]
    with pytest.raises(InsufficientStreams):
        voting_check([("a", (1, 0, 0)), ("b", (1, 0, 0))], CFG)


def test_voting_matches_oracle_and_minority_bound(rng):
    for _ in range(300):
        n = int(rng.integers(3, 7))
        vels = rng.normal(0, 0.05, (n, 3)) + 1.0
        outliers = rng.choice(n, size=int(rng.integers(0, (n - 1) // 2 + 1)), replace=False)
        vels[outliers] += rng.normal(0, 5, (len(outliers), 3))
        out = voting_check([(str(i), v) for i, v in enumerate(vels)], CFG)
        got = {i for i in range(n) if out[str(i)].verdict is Verdict.HARD_FAIL}
        assert got == _oracle_vote(vels)
        assert len(got) <= (n - 1) // 2


def test_config_rejects_non_positive():
    with pytest.raises(ValueError):
        CheckConfig(v_max=0.0)
