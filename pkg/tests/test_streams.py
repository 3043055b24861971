import pytest

from hero_mux.geometry import Pose
from hero_mux.health import CheckId, CheckResult, Verdict
from hero_mux.streams import (
    IllegalTransition,
    LifecycleConfig,
    OdometryMessage,
    StreamState,
    StreamStatus,
    command_reinit,
    complete_reinit,
    ingest,
)

PASS = CheckResult(CheckId.RATE, Verdict.PASS, 0.0)
SOFT = CheckResult(CheckId.RATE, Verdict.SOFT_FAIL, 0.2)
JUMP = CheckResult(CheckId.JUMP, Verdict.HARD_FAIL, 10.0)
CFG = LifecycleConfig(suspect_grace=0.5, recover_window=1.0)


def _msg(stamp, epoch=0, sid="s"):
    return OdometryMessage(sid, stamp, pose=Pose(), init_epoch=epoch)


def test_healthy_all_pass_stays_healthy():
    st = ingest(StreamStatus("s"), _msg(0.1), [PASS], CFG)
    assert st.state is StreamState.HEALTHY and st.last_msg_stamp == 0.1


def test_hard_failure_fails_with_reason():
    st = ingest(StreamStatus("s"), _msg(0.1), [PASS, JUMP], CFG)
    assert st.state is StreamState.FAILED and st.failure_reason == "Jump"


def test_suspect_beyond_grace_fails_hand_stepped():
    # rate decays: every tick at 100 Hz yields a soft rate failure
    st = StreamStatus("s")
    states = []
    for k in range(1, 80):
        t = k * 0.01
        st = ingest(st, None, [SOFT], CFG, now=t)
        states.append((t, st.state))
        if st.state is StreamState.FAILED:
            break
    first_suspect = states[0][0]
    failed_at = states[-1][0]
    assert states[0][1] is StreamState.SUSPECT
    assert all(s is StreamState.SUSPECT for _, s in states[:-1])
    # hand-stepped oracle: fail on the first tick strictly past the grace
    assert failed_at == pytest.approx(first_suspect + 0.51)
    assert st.failure_reason == "Rate"


def test_suspect_recovers_on_passing_message():
    st = ingest(StreamStatus("s"), _msg(0.1), [SOFT], CFG)
    assert st.state is StreamState.SUSPECT
    st = ingest(st, None, [PASS], CFG, now=0.2)
    assert st.state is StreamState.SUSPECT
    st = ingest(st, _msg(0.3), [PASS], CFG)
    assert st.state is StreamState.HEALTHY and st.failure_reason is None


def test_reinit_cycle():
    st = ingest(StreamStatus("s"), _msg(1.0), [JUMP], CFG)
    st = command_reinit(st, 1.0)
    assert st.state is StreamState.REINITIALIZING
    with pytest.raises(IllegalTransition):
        ingest(st, _msg(1.5), [PASS], CFG)
    with pytest.raises(IllegalTransition):
        complete_reinit(st, _msg(2.0, epoch=0))
    st = complete_reinit(st, _msg(2.0, epoch=1))
    assert st.state is StreamState.INITIALIZING and st.init_epoch == 1
    st = ingest(st, _msg(2.5, epoch=1), [PASS], CFG)
    assert st.state is StreamState.INITIALIZING
    st = ingest(st, _msg(3.0, epoch=1), [PASS], CFG)
    assert st.state is StreamState.HEALTHY


def test_command_reinit_requires_failed():
    with pytest.raises(IllegalTransition):
        command_reinit(StreamStatus("s"), 0.0)


def test_stale_epoch_and_wrong_stream_rejected():
    st = StreamStatus("s", init_epoch=2)
    with pytest.raises(IllegalTransition):
        ingest(st, _msg(0.1, epoch=1), [PASS], CFG)
    with pytest.raises(ValueError):
        ingest(StreamStatus("s"), _msg(0.1, sid="x"), [PASS], CFG)


def test_message_needs_pose_or_velocity():
    with pytest.raises(ValueError):
        OdometryMessage("s", 0.0)
