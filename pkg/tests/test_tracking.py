import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import blob_raster
from racerecon.errors import AnchorFitFailed, DimensionMismatch
from racerecon.geometry import Correspondence, apply
from racerecon.io import records_from_objects
from racerecon.tracking import (
    Raster,
    propagate,
    read_pgm,
    snap_to_detections,
    track_points,
    vote_shift,
    write_pgm,
)


def test_identical_rasters_zero_flow():
    img = blob_raster((64, 64), [(20, 20), (40, 30)])
    r = Raster(img)
    fl = track_points(r, r, [(20, 20), (40, 30)])
    assert fl.valid.all()
    assert np.allclose(fl.delta, 0, atol=1e-6)


def test_translated_blob():
    a = Raster(blob_raster((64, 64), [(30, 30)]))
    b = Raster(blob_raster((64, 64), [(33, 32)]))
    fl = track_points(a, b, [(30, 30)])
    assert fl.valid[0]
    assert np.linalg.norm(fl.delta[0] - (3, 2)) <= 0.2


def test_flat_region_invalid():
    a = Raster(np.full((64, 64), 0.5))
    fl = track_points(a, a, [(32, 32)])
    assert not fl.valid[0]


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        track_points(Raster(np.zeros((10, 10))), Raster(np.zeros((12, 10))), [(5, 5)])


@settings(max_examples=25, deadline=None)
@given(st.floats(-6, 6), st.floats(-6, 6))
def test_blob_flow_accuracy_property(dx, dy):
    a = Raster(blob_raster((80, 80), [(40, 40)]))
    b = Raster(blob_raster((80, 80), [(40 + dx, 40 + dy)]))
    fl = track_points(a, b, [(40, 40)])
    assert fl.valid[0]
    assert np.linalg.norm(fl.delta[0] - (dx, dy)) <= 0.2


def test_snap_examples():
    pts = np.array([[0, 0], [10, 10.0]])
    assert snap_to_detections(pts, pts, 3).tolist() == [0, 1]
    assert snap_to_detections([[0, 0]], [[5, 0], [1, 0]], 3).tolist() == [1]
    assert snap_to_detections([[0, 0]], [[10, 0]], 3).tolist() == [-1]


def test_snap_conflict_goes_to_closer():
    assert snap_to_detections([[0, 0], [2, 0]], [[1.5, 0]], 3).tolist() == [-1, 0]


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=1, max_size=8),
       st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), max_size=8),
       st.floats(0.5, 30))
def test_snap_invariants(pred, dets, radius):
    m = snap_to_detections(pred, dets, radius)
    used = m[m >= 0]
    assert len(set(used.tolist())) == len(used)
    p, d = np.array(pred), np.array(dets).reshape(-1, 2)
    for i, j in enumerate(m):
        if j >= 0:
            assert np.hypot(*(p[i] - d[j])) <= radius


def test_vote_shift_recovers_translation():
    rng = np.random.default_rng(0)
    dets = rng.uniform(100, 900, (12, 2))
    shift, support = vote_shift(dets - (40, -15), dets, 4.0, 96.0)
    assert support == 12
    assert np.allclose(shift, (40, -15), atol=1e-9)


def test_pgm_round_trip(tmp_path):
    img = np.linspace(0, 1, 12).reshape(3, 4)
    write_pgm(tmp_path / "a.pgm", Raster(img))
    back = read_pgm(tmp_path / "a.pgm")
    assert np.allclose(back.intensity, img, atol=1 / 255)


def _window(k1_sim, n=3):
    sc, (stream, ras, gt) = k1_sim
    a = gt.anchor_frame
    idx = list(range(a, a + n))
    frames = [ras[i] for i in idx]
    recs = records_from_objects([stream[i] for i in idx])
    dets = [r.buoy_centers() for r in recs]
    return sc, gt, idx, frames, dets


def test_propagate_three_frame_pan(k1_sim):
    sc, gt, idx, frames, dets = _window(k1_sim)
    size = sc.camera.image_size
    hseq = propagate(frames, 0, gt.anchor_correspondences, sc.course, dets, size)
    world = np.array([[x, y] for x in np.arange(-60, -20, 5.0) for y in (0, 9, 18, 27, 36)])
    for k, i in enumerate(idx):
        ref = apply(gt.homography(i), world)
        est = apply(hseq[k], world)
        ok = (ref[:, 0] > 0) & (ref[:, 0] < size[0]) & (ref[:, 1] > 0) & (ref[:, 1] < size[1])
        rms = np.sqrt(np.mean(np.sum((est[ok] - ref[ok]) ** 2, axis=1)))
        assert rms <= 0.5
        assert not hseq.flagged[k]


def test_propagate_missing_middle_detections(k1_sim):
    sc, gt, idx, frames, dets = _window(k1_sim)
    dets[1] = np.zeros((0, 2))
    hseq = propagate(frames, 0, gt.anchor_correspondences, sc.course, dets, sc.camera.image_size)
    assert len(hseq) == 3
    assert hseq.flagged.tolist() == [False, True, False]
    assert all(h is not None for h in hseq.homographies)


def test_propagate_collinear_anchor(k1_sim):
    sc, gt, idx, frames, dets = _window(k1_sim)
    corrs = [Correspondence((100.0 * k, 50.0 * k), (-50.0 + 12.5 * k, 0.0)) for k in range(5)]
    with pytest.raises(AnchorFitFailed):
        propagate(frames, 0, corrs, sc.course, dets, sc.camera.image_size)
