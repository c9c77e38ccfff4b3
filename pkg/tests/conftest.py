import numpy as np
import pytest

from racerecon.course import CourseSpec
from racerecon.simulator import CameraScript, LaneScript, NoiseModel, RaceScript, Scenario, generate


def blob_raster(shape, centers, sigma=2.0, amp=1.0):
    yy, xx = np.mgrid[: shape[0], : shape[1]].astype(float)
    img = np.zeros(shape)
    for cx, cy in centers:
        img += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma ** 2))
    return img


def small_scenario(lanes=None, distance=100.0, noise=None, seed=0):
    lanes = lanes or [LaneScript(2, "K1", 5.0, stroke_schedule=[[0, 120], [distance, 120]])]
    spec = CourseSpec(distance, 4, 9.0, 12.5, (0, 1, 2, 3, 4), {ln.lane: ln.boat_class for ln in lanes})
    return Scenario(spec, RaceScript(lanes, seed=seed), CameraScript(), noise or NoiseModel())


@pytest.fixture(scope="session")
def k1_sim():
    sc = small_scenario()
    return sc, generate(sc)


def truth_sequence(gt):
    """HomographySequence holding the simulator's exact homographies."""
    from racerecon.geometry import Homography
    from racerecon.tracking import HomographySequence

    n = gt.frame_count
    hs = [Homography(gt.homographies[i], i) for i in range(n)]
    return HomographySequence(hs, [None] * n, [[] for _ in range(n)], np.zeros(n, dtype=bool), gt.anchor_frame)


@pytest.fixture(scope="session")
def k4_sim():
    sc = small_scenario([LaneScript(3, "K4", 5.5, stroke_schedule=[[0, 125], [100, 125]])])
    return sc, generate(sc)


# acceptance criteria outcomes, printed once at the end of the run
ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str, part: str = "") -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), part, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p[0] for p in parts)
        if len(parts) > 4:
            failed = [p[1] for p in parts if not p[0]]
            detail = f"{len(parts) - len(failed)}/{len(parts)} passed" + (f", failed: {', '.join(failed)}" if failed else "")
        else:
            detail = "; ".join(f"{p[1]}: {p[2]}" if p[1] else p[2] for p in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
