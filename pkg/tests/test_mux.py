import numpy as np
import pytest

from hero_mux.fusion import GRAVITY, ImuSample
from hero_mux.geometry import Pose, UnitRotation, between, compose, inverse
from hero_mux.mux import (
    AnchorTable,
    MissingAnchor,
    MuxConfig,
    Ranking,
    ResiliencyMux,
    StreamSetup,
    TickInputs,
    apply_continuity,
    rebase_anchor,
    select_channel,
)
from hero_mux.state import CovarianceBlock, RobotState, StateQuality
from hero_mux.streams import OdometryMessage, StreamKind, StreamState, StreamStatus
from tests.conftest import random_pose


def _st(sid, state):
    return StreamStatus(sid, state)


H, F = StreamState.HEALTHY, StreamState.FAILED


def test_select_channel_examples():
    rank = Ranking(("B", "A"))
    assert select_channel({"A": _st("A", H), "B": _st("B", H)}, rank, "A") == "A"
    assert select_channel({"A": _st("A", F), "B": _st("B", H)}, rank, "A") == "B"
    assert select_channel({"A": _st("A", F), "B": _st("B", F)}, rank, "A") is None
    assert select_channel({"A": _st("A", H), "B": _st("B", H)}, rank, "A", preempt=True) == "B"
    suspect = {"A": _st("A", StreamState.SUSPECT), "B": _st("B", H)}
    assert select_channel(suspect, Ranking(("A", "B")), None) == "B"


def test_ranking_rejects_duplicates():
    with pytest.raises(ValueError):
        Ranking(("a", "a"))


def _msg(pose, epoch=0):
    return OdometryMessage("s", 0.0, pose=pose, init_epoch=epoch)


def test_apply_continuity_examples(rng):
    x = random_pose(rng)
    assert np.allclose(apply_continuity(AnchorTable().with_anchor("s", 0, Pose()), _msg(x)).t, x.t)
    out = apply_continuity(AnchorTable().with_anchor("s", 0, Pose((5, 0, 0))), _msg(Pose()))
    np.testing.assert_allclose(out.t, [5, 0, 0])
    with pytest.raises(MissingAnchor):
        apply_continuity(AnchorTable(), _msg(Pose(), epoch=3))
    for _ in range(100):
        anchor, world = random_pose(rng), random_pose(rng)
        local = between(anchor, world)
        back = apply_continuity(AnchorTable().with_anchor("s", 0, anchor), _msg(local))
        np.testing.assert_allclose(back.t, world.t, atol=1e-9)
        np.testing.assert_allclose(back.r.q, world.r.q, atol=1e-9)


def test_rebase_anchor_examples(rng):
    last = random_pose(rng)
    table = rebase_anchor(AnchorTable(), "s", 1, last, Pose())
    np.testing.assert_allclose(table.get("s", 1).t, last.t)
    first = random_pose(rng)
    table = rebase_anchor(AnchorTable(), "s", 2, last, first)
    mapped = apply_continuity(table, _msg(first, epoch=2))
    np.testing.assert_allclose(mapped.t, last.t, atol=1e-9)
    np.testing.assert_allclose(mapped.r.q, last.r.q, atol=1e-9)


def _hover_imu(t, n=2, rate=200.0):
    return [ImuSample(t - 0.01 + j / rate, np.zeros(3), -GRAVITY) for j in range(n)]


def test_mux_switches_on_gap_with_continuous_output():
    cfg = MuxConfig(tick_rate=100, imu_rate=200, v_max=3.0)
    setups = [StreamSetup("a", StreamKind.POSE), StreamSetup("b", StreamKind.POSE)]
    start = RobotState(0.0, p=(0, 0, 1))
    mux = ResiliencyMux(setups, Ranking(("a", "b")), start, cfg)
    cov = CovarianceBlock.isotropic(1e-4)
    outs = []
    # stream b reports a frame offset by (3, 0, 0): continuity must hide it
    for k in range(300):
        t = k * 0.01
        msgs = []
        if k % 5 == 0:
            if t < 1.0:
                msgs.append(OdometryMessage("a", t, pose=Pose(), covariance=cov))
            msgs.append(OdometryMessage("b", t, pose=Pose((3, 0, 0)), covariance=cov))
        out = mux.step(TickInputs(t, msgs, _hover_imu(t) if k else []))
        outs.append(out)
    channels = [o.channel for o in outs]
    assert channels[0] == "a"
    switch = channels.index("b")
    # last a-message at 0.95; a Suspect stream is not eligible, so the switch
    # comes on the first tick whose gap exceeds 3 periods (0.15 s)
    assert switch * 0.01 == pytest.approx(1.11, abs=1e-9)
    assert switch * 0.01 - 0.95 <= 2 * 3 / 20.0
    steps = [np.linalg.norm(b.state.p - a.state.p) for a, b in zip(outs, outs[1:])]
    assert max(steps) <= 3.0 * 0.01 + 1e-6
    assert outs[-1].quality == StateQuality.all_good()
    assert sum(o.reinit_commands.count("a") for o in outs) == 1


def test_mux_without_channel_dead_reckons():
    setups = [StreamSetup("a", StreamKind.POSE)]
    mux = ResiliencyMux(setups, Ranking(("a",)), RobotState(0.0, p=(0, 0, 1)), MuxConfig())
    out = None
    for k in range(100):
        t = k * 0.01
        msgs = [OdometryMessage("a", t, pose=Pose())] if k == 0 else []
        out = mux.step(TickInputs(t, msgs, _hover_imu(t) if k else []))
    assert out.channel is None
    assert out.quality.bits() == (False, False, False, False, True)
    assert out.service_hint.label == "Attitude"
