import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import truth_sequence
from racerecon.errors import NoCompleteFrames, OutOfFrame, UnknownSeat, WrongClass, WrongCount
from racerecon.geometry import Homography, apply
from racerecon.io import records_from_objects
from racerecon.localization import (
    AthleteObservation,
    BoatTrack,
    Detection,
    OffsetCalibration,
    TipObservation,
    athlete_image_position,
    boat_class,
    boat_position,
    calibrate_offsets,
    fill_track,
    initial_tip_estimate,
    order_athletes,
    sort_seats,
    tip_roi,
)
from racerecon.pipeline import _lane_detections, calibrate_lane
from racerecon.tracking import FlowVectors

IDENTITY = Homography(np.eye(3))


def obs(x, y, seat=None):
    return AthleteObservation(np.zeros(2), np.array([x, y], dtype=float), 1, seat)


def test_athlete_image_position():
    assert athlete_image_position(Detection("athlete", (10, 20, 30, 40))).tolist() == [25, 60]
    assert athlete_image_position(Detection("athlete", (0, 0, 2, 2))).tolist() == [1, 2]
    with pytest.raises(WrongClass):
        athlete_image_position(Detection("buoy", (0, 0, 2, 2)))


def test_initial_tip_estimate():
    assert initial_tip_estimate([obs(-100, 4.5)], boat_class("K1")) == (-97.6, 4.5)
    k2 = initial_tip_estimate([obs(-100, 4), obs(-102, 4)], boat_class("K2"))
    assert np.allclose(k2, (-98, 4))
    with pytest.raises(WrongCount):
        initial_tip_estimate([obs(0, 0)] * 3, boat_class("K4"))


def test_tip_roi():
    size = (3840, 2160)
    assert tip_roi(IDENTITY, (500, 400), size) == (425, 325, 150, 150)
    assert tip_roi(IDENTITY, (50, 400), size) == (0, 325, 150, 150)
    with pytest.raises(OutOfFrame):
        tip_roi(IDENTITY, (5000, 400), size)


@given(st.floats(0, 3839.9), st.floats(0, 2159.9))
def test_tip_roi_inside_raster(u, v):
    l, t, w, h = tip_roi(IDENTITY, (u, v), (3840, 2160))
    assert 0 <= l and l + w <= 3840 and 0 <= t and t + h <= 2160


def test_calibrate_single_frame():
    cal = calibrate_offsets([[obs(-100.0, 4.5)]], [TipObservation(0, world=(-97.6, 4.5))], None,
                            boat_class("K1"))
    assert np.allclose(cal.offsets, [[2.4, 0.0]])


def test_calibrate_identical_frames_average():
    frames = [[obs(-100, 4), obs(-102, 4)] for _ in range(5)]
    tips = [TipObservation(i, world=(-97.0, 4.2)) for i in range(5)]
    cal = calibrate_offsets(frames, tips, None, boat_class("K2"))
    one = calibrate_offsets(frames[:1], tips[:1], None, boat_class("K2"))
    assert np.allclose(cal.offsets, one.offsets)


def test_calibrate_simulated_k4_spacing(k4_sim):
    sc, (stream, ras, gt) = k4_sim
    hseq = truth_sequence(gt)
    dets = _lane_detections(sc.course, records_from_objects(stream), hseq)[3]
    cal = calibrate_lane(3, boat_class("K4"), dets, hseq, gt.anchor_frame, sc.camera.image_size)
    assert np.allclose(np.diff(cal.offsets[:, 0]), 1.8, atol=0.05)


def test_boat_position_examples():
    cal2 = OffsetCalibration(np.array([[1.0, 0.0], [3.0, 0.5]]), [], [])
    assert np.allclose(boat_position([obs(-51, 3, 1), obs(-53, 2.5, 2)], cal2), (-50, 3))
    cal1 = OffsetCalibration(np.array([[2.4, 0.0]]), [], [])
    assert np.allclose(boat_position([obs(-200, 13, 1)], cal1), (-197.6, 13))
    with pytest.raises(UnknownSeat):
        boat_position([obs(0, 0, 3)], cal2)


def test_boat_position_partial_k4_matches_truth(k4_sim):
    sc, (stream, ras, gt) = k4_sim
    hseq = truth_sequence(gt)
    dets = _lane_detections(sc.course, records_from_objects(stream), hseq)[3]
    cal = calibrate_lane(3, boat_class("K4"), dets, hseq, gt.anchor_frame, sc.camera.image_size)
    for i in range(gt.anchor_frame - 50, gt.anchor_frame + 50, 7):
        img = np.array([athlete_image_position(d) for d in dets[i]])
        world = apply(hseq.image_to_world(i), img)
        order = sort_seats(world)
        present = [AthleteObservation(img[order[s]], world[order[s]], 3, s + 1) for s in (0, 2)]
        assert np.linalg.norm(np.subtract(boat_position(present, cal), gt.tips[3][i])) <= 0.1


def flow(deltas, valid=None):
    d = np.asarray(deltas, dtype=float)
    return FlowVectors(np.zeros_like(d), d, np.ones(len(d), bool) if valid is None else np.asarray(valid))


def test_order_athletes_examples():
    prev = {1: np.array([10.0, 10.0]), 2: np.array([30.0, 12.0])}
    f = flow([[2, 0], [2, 0]])
    assert order_athletes(prev, f, [[32.5, 12], [12.5, 10]], 5) == {1: 1, 2: 0}
    assert order_athletes(prev, f, [[12, 10]], 5) == {1: 0}


def test_order_athletes_shared_nearest():
    prev = {1: np.array([10.0, 10.0]), 2: np.array([14.0, 10.0])}
    f = flow([[0, 0], [0, 0]])
    det = [[13.0, 10.0]]
    # brute force over the 2x1 assignment: the closer seat wins
    d = {k: np.hypot(*(prev[k] - det[0])) for k in prev}
    best = min(d, key=d.get)
    assert order_athletes(prev, f, det, 5) == {best: 0}


def linear_track(x, t=None):
    x = np.asarray(x, dtype=float)
    t = np.arange(len(x)) * 0.04 if t is None else t
    pos = np.c_[x, np.zeros(len(x))]
    complete = np.isfinite(x)
    cls = boat_class("K1")
    return BoatTrack(1, cls, np.arange(len(x)), t, [np.zeros((0, 2))] * len(x), pos, complete,
                     np.where(complete, "detected", "missing").astype(object),
                     OffsetCalibration(np.array([[2.4, 0.0]]), [], []))


def test_linear_fill_midpoint():
    out = fill_track(linear_track([-100, np.nan, -99]), "linear")
    assert out.positions[1, 0] == pytest.approx(-99.5)
    assert out.source.tolist() == ["detected", "interpolated", "detected"]


def test_linear_fill_no_complete_frames():
    with pytest.raises(NoCompleteFrames):
        fill_track(linear_track([np.nan, np.nan]), "linear")


@settings(max_examples=50, deadline=None)
@given(st.floats(-500, 0), st.floats(1, 7), st.lists(st.booleans(), min_size=6, max_size=60))
def test_linear_fill_exact_on_constant_velocity(x0, v, keep):
    keep = np.array(keep)
    keep[[0, -1]] = True
    t = np.arange(len(keep)) * 0.04
    x = np.where(keep, x0 + v * t, np.nan)
    out = fill_track(linear_track(x, t), "linear")
    assert np.allclose(out.positions[:, 0], x0 + v * t, atol=1e-9)
    assert np.all(out.source[keep] == "detected")


@settings(max_examples=50, deadline=None)
@given(st.floats(1, 7), st.integers(2, 20), st.integers(2, 20))
def test_end_extrapolation_holds_velocity(v, lead, tail):
    t = np.arange(lead + 30 + tail) * 0.04
    x = np.full(len(t), np.nan)
    x[lead:lead + 30] = -100 + v * t[lead:lead + 30]
    out = fill_track(linear_track(x, t), "linear")
    assert np.allclose(out.positions[:, 0], -100 + v * t, atol=1e-9)
    assert set(out.source[:lead]) == {"extrapolated"}
