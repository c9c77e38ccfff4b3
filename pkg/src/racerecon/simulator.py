"""Synthetic regatta generator with exact ground truth.

A pinhole camera on the bank pans and tilts to follow the leading boat and
zooms so the tracked area keeps a fixed width. The water is a plane, so each
frame's image <-> course mapping is exactly a homography. Boats follow a
closed-form pacing law; athletes sit at fixed points on a rigid hull and
sway slightly fore and aft with the stroke.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .course import CourseSpec, buoy_world_positions
from .errors import InvalidScript
from .geometry import Correspondence, Homography
from .kinematics import Profile, segment_index
from .localization import BOAT_CLASSES
from .tracking import Raster

ATHLETE_WIDTH_M = 0.6
ATHLETE_HEIGHT_M = 0.9
BUOY_SIZE_M = 0.4
DEFAULT_BOW_OFFSET = {1: 2.4, 2: 2.1, 4: 1.6}  # tip to seat 1, metres


@dataclass
class LaneScript:
    lane: int
    boat_class: str = "K1"
    v_peak: float = 5.0  # m/s
    rise_tau: float = 1.5  # s; 0 means the boat is at v_peak from the gun
    fade: float = 0.15  # m/s lost per 100 m covered
    start_delay: float = 0.0  # s
    # (distance from start in m, strokes/min) knots, linearly interpolated
    stroke_schedule: list = field(default_factory=lambda: [[0.0, 120.0], [500.0, 120.0]])
    seat_spacing: float = 1.8
    bow_offset: float | None = None
    stroke_phase: float = 0.0
    # slow pace variation v += A sin(2 pi t / P) from the gun (tactical surges)
    pace_wave_amplitude: float = 0.0  # m/s
    pace_wave_period: float = 10.0  # s

    @property
    def n(self) -> int:
        return BOAT_CLASSES[self.boat_class].n

    def seat_offsets(self) -> np.ndarray:
        """True tip minus seat anchor for each seat (boat at rest)."""
        bow = DEFAULT_BOW_OFFSET[self.n] if self.bow_offset is None else self.bow_offset
        return np.array([[bow + k * self.seat_spacing, 0.0] for k in range(self.n)])


@dataclass
class RaceScript:
    lanes: list
    seed: int = 0
    sway_m: float = 0.03  # fore-aft athlete sway amplitude
    tail_s: float = 2.0  # recording time after the last finish
    lead_in_s: float = 0.0  # recording time before the gun
    tip_window: int = 40  # frames either side of the anchor that carry a tip


@dataclass
class CameraScript:
    position: tuple | None = None  # default: abreast of mid-course, 60 m off, 20 m up
    target_height_px: float = 90.0  # athlete height held by the zoom
    fps: float = 25.0
    image_size: tuple = (3840, 2160)


@dataclass
class NoiseModel:
    jitter_px: float = 0.0
    seat_dropout: float = 0.0
    dropout_burst: float = 1.0  # mean length of a dropout run, frames
    occlusions: list = field(default_factory=list)  # [x_lo, x_hi] world intervals
    buoy_dropout: float = 0.0
    keypoint_jitter_px: float = 0.0
    tip_jitter_px: float = 0.0


@dataclass
class Scenario:
    course: CourseSpec
    race: RaceScript
    camera: CameraScript = field(default_factory=CameraScript)
    noise: NoiseModel = field(default_factory=NoiseModel)

    @classmethod
    def from_json(cls, d: dict) -> "Scenario":
        try:
            course = CourseSpec.from_json(d["course"])
            r = dict(d["race"])
            lanes = [LaneScript(**ln) for ln in r.pop("lanes")]
            race = RaceScript(lanes=lanes, **r)
            cam = d.get("camera", {})
            camera = CameraScript(**{k: tuple(v) if isinstance(v, list) else v for k, v in cam.items()})
            noise = NoiseModel(**d.get("noise", {}))
        except (KeyError, TypeError) as e:
            raise InvalidScript(f"malformed scenario: {e}") from None
        if not course.boats:
            course = CourseSpec(course.race_distance, course.lane_count, course.lane_width,
                                course.segment_spacing, course.buoy_boundaries,
                                {ln.lane: ln.boat_class for ln in lanes})
        return cls(course, race, camera, noise)

    def to_json(self) -> dict:
        return {"course": self.course.to_json(), "race": asdict(self.race),
                "camera": asdict(self.camera), "noise": asdict(self.noise)}


# ---------------------------------------------------------------------------
# boat kinematics


class Pacing:
    """Closed-form distance s(t) and velocity v(t) from the gun.

    The base law is ds/dt = v_peak (1 - exp(-t / rise_tau)) - k s with
    k = fade / 100, which for rise_tau = 0 makes velocity fall linearly with
    distance. An optional sinusoidal pace wave is added on top.
    """

    def __init__(self, ln: LaneScript):
        self.V = ln.v_peak
        self.tau = ln.rise_tau
        self.k = ln.fade / 100.0
        self.t0 = ln.start_delay
        self.wave_a = ln.pace_wave_amplitude
        self.wave_w = 2 * math.pi / ln.pace_wave_period

    def s(self, t):
        t = np.maximum(np.asarray(t, dtype=float) - self.t0, 0.0)
        base = self._base(t)
        if self.wave_a:
            base = base + self.wave_a / self.wave_w * (1 - np.cos(self.wave_w * t))
        return base

    def _base(self, t):
        V, k, tau = self.V, self.k, self.tau
        if tau <= 0:
            return V * t if k == 0 else V / k * -np.expm1(-k * t)
        a = 1.0 / tau
        if k == 0:
            return V * (t + tau * np.expm1(-a * t))
        base = V / k * -np.expm1(-k * t)
        if abs(k - a) < 1e-9:
            return base - V * t * np.exp(-k * t)
        return base - V / (k - a) * (np.exp(-a * t) - np.exp(-k * t))

    def v(self, t):
        t_rel = np.asarray(t, dtype=float) - self.t0
        tt = np.maximum(t_rel, 0.0)
        rise = 1.0 if self.tau <= 0 else -np.expm1(-tt / self.tau)
        out = self.V * rise - self.k * self._base(tt)
        if self.wave_a:
            out = out + self.wave_a * np.sin(self.wave_w * tt)
        return np.where(t_rel < 0, 0.0, out)

    def time_at(self, dist: float) -> float:
        """Time at which distance ``dist`` from the start is reached."""
        if dist <= 0:
            return self.t0
        hi = self.t0 + 1.0
        while self.s(hi) < dist:
            hi = self.t0 + 2 * (hi - self.t0)
            if hi > 1e5:
                raise InvalidScript("boat never reaches the requested distance")
        return brentq(lambda t: float(self.s(t)) - dist, self.t0, hi, xtol=1e-13, rtol=1e-15)


class StrokePhase:
    """Stroke phase phi(t) = 2 pi * integral of rate / 60, by fine quadrature."""

    def __init__(self, ln: LaneScript, pacing: Pacing, t_end: float, t_start: float = 0.0, step: float = 1e-3):
        knots = np.array(ln.stroke_schedule, dtype=float)
        if knots.ndim != 2 or knots.shape[1] != 2 or np.any(np.diff(knots[:, 0]) < 0):
            raise InvalidScript(f"lane {ln.lane}: stroke_schedule must be sorted [distance, rate] pairs")
        self.knots = knots
        self.t = np.arange(t_start - 1.0, t_end + 1.0 + step, step)
        r = self.rate(pacing.s(self.t))
        inc = 0.5 * (r[1:] + r[:-1]) * np.diff(self.t) / 60.0
        self.cycles = np.concatenate([[0.0], np.cumsum(inc)]) + ln.stroke_phase / (2 * math.pi)

    def rate(self, dist):
        return np.interp(dist, self.knots[:, 0], self.knots[:, 1])

    def phase(self, t):
        return 2 * math.pi * np.interp(t, self.t, self.cycles)

    def peak_times(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Times where sin(phase) peaks, i.e. phase = pi/2 mod 2 pi."""
        c_lo, c_hi = np.interp([t_lo, t_hi], self.t, self.cycles)
        n0 = math.ceil(c_lo - 0.25)
        n1 = math.floor(c_hi - 0.25)
        targets = np.arange(n0, n1 + 1) + 0.25
        return np.interp(targets, self.cycles, self.t)


# ---------------------------------------------------------------------------
# camera


def camera_homography(cam: CameraScript, target) -> tuple[np.ndarray, np.ndarray, float]:
    """World(plane) -> image homography, world->camera rotation and focal."""
    c = np.asarray(cam.position, dtype=float)
    tgt = np.array([target[0], target[1], 0.0])
    fwd = tgt - c
    dist = np.linalg.norm(fwd)
    fwd /= dist
    right = np.cross(fwd, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.vstack([right, down, fwd])
    w, h = cam.image_size
    f = cam.target_height_px * dist / ATHLETE_HEIGHT_M
    k = np.array([[f, 0, w / 2], [0, f, h / 2], [0, 0, 1.0]])
    t = -rot @ c
    m = k @ np.column_stack([rot[:, 0], rot[:, 1], t])
    return m / m[2, 2], rot, f


def _project(m, pts):
    pts = np.atleast_2d(pts)
    q = pts @ m[:, :2].T + m[:, 2]
    return q[:, :2] / q[:, 2:3], q[:, 2]


# ---------------------------------------------------------------------------
# rendering


def _splat(img, cx, cy, sx, sy, amp):
    h, w = img.shape
    x0, x1 = int(math.floor(cx - 4 * sx)), int(math.ceil(cx + 4 * sx)) + 1
    y0, y1 = int(math.floor(cy - 4 * sy)), int(math.ceil(cy + 4 * sy)) + 1
    x0, y0, x1, y1 = max(x0, 0), max(y0, 0), min(x1, w), min(y1, h)
    if x0 >= x1 or y0 >= y1:
        return None
    gx = np.exp(-0.5 * ((np.arange(x0, x1) - cx) / sx) ** 2)
    gy = np.exp(-0.5 * ((np.arange(y0, y1) - cy) / sy) ** 2)
    patch = img[y0:y1, x0:x1]
    patch += amp * np.outer(gy, gx).astype(img.dtype)
    np.clip(patch, 0.0, 1.0, out=patch)
    return y0, y1, x0, x1


class RasterSequence:
    """Frames rendered on demand: Gaussian splats on a dark background.

    Frame buffers are recycled: a returned Raster stays valid until
    ``cache_size`` further distinct frames have been requested.
    """

    def __init__(self, scene: "_Scene", buoy_sigma: float = 2.0, cache_size: int = 3):
        self.scene = scene
        self.buoy_sigma = buoy_sigma
        self.cache_size = max(2, cache_size)
        self._cache: dict[int, Raster] = {}
        self._dirty: dict[int, list] = {}
        self._free: list = []

    def __len__(self):
        return self.scene.frame_count

    def __getitem__(self, i: int) -> Raster:
        if i in self._cache:
            return self._cache[i]
        if not 0 <= i < len(self):
            raise IndexError(i)
        if len(self._cache) >= self.cache_size:
            old = next(iter(self._cache))
            buf = self._cache.pop(old).intensity
            for y0, y1, x0, x1 in self._dirty.pop(old):
                buf[y0:y1, x0:x1] = 0.0
            self._free.append(buf)
        r = self.render(i)
        self._cache[i] = r
        return r

    def render(self, i: int) -> Raster:
        sc = self.scene
        w, h = sc.cam.image_size
        img = self._free.pop() if self._free else np.zeros((h, w), dtype=np.float32)
        dirty = self._dirty[i] = []
        for u, v in sc.visible_buoys(i)[1]:
            dirty.append(_splat(img, u, v, self.buoy_sigma, self.buoy_sigma, 0.8))
        for a in sc.athletes(i):
            l, t, bw, bh = a["bbox"]
            u, v = a["anchor_px"]
            dirty.append(_splat(img, u, v - bh / 2, bw / 5, bh / 4, 0.45))
            dirty.append(_splat(img, u, v, 3.0, 3.0, 1.0))
            dirty.append(_splat(img, l + 0.1 * bw, t + 0.9 * bh, 0.08 * bw, 0.08 * bh,
                                0.45 + 0.35 * math.sin(a["phase"])))
        self._dirty[i] = [d for d in dirty if d is not None]
        return Raster(img, i)


# ---------------------------------------------------------------------------
# scene


class _Scene:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.course = sc.course
        self.cam = sc.camera
        if self.cam.position is None:
            self.cam = replace(self.cam, position=(-self.course.race_distance / 2, -60.0, 20.0))
        self.race = sc.race
        self.lanes = sc.race.lanes
        fps = self.cam.fps
        self.pacing = {ln.lane: Pacing(ln) for ln in self.lanes}
        finish = max(p.time_at(self.course.race_distance) for p in self.pacing.values())
        t_end = finish + self.race.tail_s
        self.frame_count = int(math.floor((t_end + self.race.lead_in_s) * fps)) + 1
        self.times = np.arange(self.frame_count) / fps - self.race.lead_in_s
        self.phase = {ln.lane: StrokePhase(ln, self.pacing[ln.lane], t_end, self.times[0]) for ln in self.lanes}
        self.tip_x = {ln.lane: -self.course.race_distance + self.pacing[ln.lane].s(self.times)
                      for ln in self.lanes}
        # the camera follows the leader but holds at the start and finish lines
        lead = np.clip(np.max(np.vstack(list(self.tip_x.values())), axis=0), -self.course.race_distance, 0.0)
        ys = [self.course.lane_center(ln.lane) for ln in self.lanes]
        self.target_y = 0.5 * (min(ys) + max(ys))
        self.lead_x = lead
        self.H = np.empty((self.frame_count, 3, 3))
        self.focal = np.empty(self.frame_count)
        self.rot = np.empty((self.frame_count, 3, 3))
        for i in range(self.frame_count):
            self.H[i], self.rot[i], self.focal[i] = camera_homography(self.cam, (lead[i], self.target_y))
        self.anchor_frame = int(np.argmin(np.abs(lead - self.cam.position[0])))
        self.buoys = np.array([b.point for b in buoy_world_positions(self.course)], dtype=float)
        self._athletes_cache: dict = {}

    def depth(self, i, world_xy):
        p = np.c_[world_xy, np.zeros(len(world_xy))] - np.asarray(self.cam.position)
        return p @ self.rot[i][2]

    def visible_buoys(self, i):
        w, h = self.cam.image_size
        uv, _ = _project(self.H[i], self.buoys)
        depth = self.depth(i, self.buoys)
        ok = (depth > 1.0) & (uv[:, 0] >= 0) & (uv[:, 0] <= w - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= h - 1)
        return np.flatnonzero(ok), uv[ok], depth[ok]

    def athletes(self, i):
        """True athlete geometry for frame i (no noise)."""
        if i in self._athletes_cache:
            return self._athletes_cache[i]
        out = []
        t = self.times[i]
        w_img, h_img = self.cam.image_size
        for ln in self.lanes:
            phase = float(self.phase[ln.lane].phase(t))
            sway = self.race.sway_m * math.sin(phase)
            tip = np.array([self.tip_x[ln.lane][i], self.course.lane_center(ln.lane)])
            seats = tip - ln.seat_offsets() + np.array([sway, 0.0])
            uv, _ = _project(self.H[i], seats)
            depth = self.depth(i, seats)
            for k in range(ln.n):
                bw = ATHLETE_WIDTH_M * self.focal[i] / depth[k]
                bh = ATHLETE_HEIGHT_M * self.focal[i] / depth[k]
                u, v = uv[k]
                inside = depth[k] > 1.0 and bw / 2 <= u <= w_img - 1 - bw / 2 and bh <= v <= h_img - 1
                out.append({"lane": ln.lane, "seat": k + 1, "world": seats[k], "anchor_px": (u, v),
                            "bbox": (u - bw / 2, v - bh, bw, bh), "phase": phase, "inside": inside})
        if len(self._athletes_cache) > 4:
            self._athletes_cache.pop(next(iter(self._athletes_cache)))
        self._athletes_cache[i] = out
        return out


@dataclass
class GroundTruth:
    fps: float
    times: np.ndarray
    homographies: np.ndarray  # (F, 3, 3) world -> image
    tips: dict  # lane -> (F, 2)
    velocity: dict  # lane -> (F,)
    peaks: dict  # lane -> stroke peak times
    seat_offsets: dict  # lane -> (N, 2)
    anchor_frame: int
    anchor_correspondences: list
    scenario: Scenario
    pacing: dict = field(repr=False, default_factory=dict)
    phase: dict = field(repr=False, default_factory=dict)

    @property
    def frame_count(self):
        return len(self.times)

    def homography(self, i) -> Homography:
        return Homography(self.homographies[i], i)

    def to_json(self, profiles: dict | None = None) -> dict:
        frames = []
        for i in range(self.frame_count):
            frames.append({"H": [float(v) for v in self.homographies[i].ravel()],
                           "tips": {str(k): [float(v) for v in tip[i]] for k, tip in self.tips.items()}})
        d = {
            "frames": frames,
            "tracks": {str(k): {"t": self.times.tolist(), "x": self.tips[k][:, 0].tolist(),
                                "v": self.velocity[k].tolist()} for k in self.tips},
            "peaks": {str(k): [float(p) for p in v] for k, v in self.peaks.items()},
            "anchor_frame": self.anchor_frame,
        }
        if profiles:
            d["profiles"] = profiles
        return d


def _validate(sc: Scenario):
    lanes = sc.race.lanes
    if not lanes:
        raise InvalidScript("race has no lanes")
    seen = set()
    for ln in lanes:
        if ln.boat_class not in BOAT_CLASSES:
            raise InvalidScript(f"lane {ln.lane}: unknown boat class {ln.boat_class!r}")
        if not 1 <= ln.lane <= sc.course.lane_count or ln.lane in seen:
            raise InvalidScript(f"lane {ln.lane} invalid or duplicated")
        seen.add(ln.lane)
        if not 2 < ln.v_peak < 8:
            raise InvalidScript(f"lane {ln.lane}: v_peak {ln.v_peak} outside (2, 8) m/s")
        if ln.rise_tau < 0 or ln.fade < 0 or ln.start_delay < 0:
            raise InvalidScript(f"lane {ln.lane}: negative pacing parameter")
        if ln.v_peak - ln.fade / 100 * sc.course.race_distance - ln.pace_wave_amplitude <= 0.5:
            raise InvalidScript(f"lane {ln.lane}: fade stops the boat before the finish")
        if ln.pace_wave_amplitude < 0 or ln.pace_wave_period <= 0:
            raise InvalidScript(f"lane {ln.lane}: pace wave needs amplitude >= 0 and period > 0")
        p = Pacing(ln)
        tt = ln.start_delay + np.linspace(1e-3, p.time_at(sc.course.race_distance), 4000)
        if np.any(p.v(tt) <= 0):
            raise InvalidScript(f"lane {ln.lane}: pacing makes the boat stop or reverse")
    n = sc.noise
    for name in ("seat_dropout", "buoy_dropout"):
        p = getattr(n, name)
        if not 0 <= p <= 1:
            raise InvalidScript(f"{name} must be a probability, got {p}")
    if n.dropout_burst < 1:
        raise InvalidScript("dropout_burst must be >= 1 frame")
    cam = sc.camera
    if cam.fps <= 0 or cam.target_height_px <= 0:
        raise InvalidScript("fps and target_height_px must be positive")
    if cam.position is not None and (len(cam.position) != 3 or cam.position[2] <= 0):
        raise InvalidScript("camera must be above the water")
    if cam.position is not None and cam.position[1] >= 0:
        raise InvalidScript("camera must stand on the bank at negative y")


def _dropout_mask(rng, frames, p, burst):
    """Seat visibility over time; stationary drop rate p, mean run length burst."""
    if p <= 0:
        return np.ones(frames, dtype=bool)
    if p >= 1:
        return np.zeros(frames, dtype=bool)
    if burst <= 1:
        return rng.random(frames) >= p
    p_recover = 1.0 / burst
    p_drop = p * p_recover / (1 - p)
    u = rng.random(frames)
    vis = np.empty(frames, dtype=bool)
    state = u[0] >= p
    for i in range(frames):
        if i:
            state = (u[i] >= p_drop) if state else (u[i] < p_recover)
        vis[i] = state
    return vis


def _r4(x):
    return round(float(x), 4)


def generate(scenario: Scenario, seed: int | None = None):
    """Simulate a race.

    Returns (stream, rasters, ground_truth) where ``stream`` is the list of
    per-frame detection records in the JSON Lines schema.
    """
    _validate(scenario)
    sc = _Scene(scenario)
    rng = np.random.default_rng(scenario.race.seed if seed is None else seed)
    noise = scenario.noise
    fps = scenario.camera.fps
    F = sc.frame_count

    visibility = {}
    for ln in sc.lanes:
        for k in range(ln.n):
            visibility[(ln.lane, k + 1)] = _dropout_mask(rng, F, noise.seat_dropout, noise.dropout_burst)

    stream = []
    for i in range(F):
        dets = []
        idx, uv, depth = sc.visible_buoys(i)
        for (u, v), d in zip(uv, depth):
            if noise.buoy_dropout and rng.random() < noise.buoy_dropout:
                continue
            size = float(np.clip(BUOY_SIZE_M * sc.focal[i] / d, 4.0, 40.0))
            ju, jv = rng.normal(0, noise.jitter_px, 2) if noise.jitter_px else (0.0, 0.0)
            cu, cv = u + ju, v + jv
            dets.append({"class": "buoy", "bbox": [_r4(cu - size / 2), _r4(cv - size / 2), _r4(size), _r4(size)],
                         "conf": 0.9})
        athletes = []
        tip_lanes = set()
        for a in sc.athletes(i):
            if not a["inside"] or not visibility[(a["lane"], a["seat"])][i]:
                continue
            if any(lo <= a["world"][0] <= hi for lo, hi in noise.occlusions):
                continue
            l, t, bw, bh = a["bbox"]
            ju, jv = rng.normal(0, noise.jitter_px, 2) if noise.jitter_px else (0.0, 0.0)
            l, t = l + ju, t + jv
            r = 0.6 + 0.25 * math.sin(a["phase"])
            su, sv = l + bw / 2, t + 0.3 * bh
            wu, wv = su + 0.6 * r * bw, sv + 0.8 * r * bw
            if noise.keypoint_jitter_px:
                su, sv, wu, wv = np.array([su, sv, wu, wv]) + rng.normal(0, noise.keypoint_jitter_px, 4)
            rec = {"class": "athlete", "bbox": [_r4(l), _r4(t), _r4(bw), _r4(bh)], "conf": 0.8,
                   "keypoints": {"shoulder": [_r4(su), _r4(sv)], "wrist": [_r4(wu), _r4(wv)]}}
            if abs(i - sc.anchor_frame) <= scenario.race.tip_window and a["lane"] not in tip_lanes:
                tip_w = np.array([[sc.tip_x[a["lane"]][i], sc.course.lane_center(a["lane"])]])
                tuv, _ = _project(sc.H[i], tip_w)
                tj = rng.normal(0, noise.tip_jitter_px, 2) if noise.tip_jitter_px else (0.0, 0.0)
                rec["tip"] = [_r4(tuv[0, 0] + tj[0]), _r4(tuv[0, 1] + tj[1])]
                tip_lanes.add(a["lane"])
            athletes.append(rec)
        order = rng.permutation(len(athletes))
        dets.extend(athletes[k] for k in order)
        stream.append({"frame": i, "t_s": round(float(sc.times[i]), 6), "detections": dets})

    tips = {ln.lane: np.c_[sc.tip_x[ln.lane], np.full(F, sc.course.lane_center(ln.lane))] for ln in sc.lanes}
    vel = {ln.lane: sc.pacing[ln.lane].v(sc.times) for ln in sc.lanes}
    peaks = {ln.lane: sc.phase[ln.lane].peak_times(sc.times[0], sc.times[-1]) for ln in sc.lanes}
    offsets = {ln.lane: ln.seat_offsets() for ln in sc.lanes}
    gt = GroundTruth(fps, sc.times.copy(), sc.H.copy(), tips, vel, peaks, offsets,
                     sc.anchor_frame, anchor_correspondences(sc), scenario,
                     pacing=sc.pacing, phase=sc.phase)
    return stream, RasterSequence(sc), gt


def anchor_correspondences(sc: _Scene, per_row: int = 3, rows: int = 2) -> list:
    """Exact buoy correspondences near the image centre of the anchor frame.

    Takes the ``per_row`` buoys closest to the centre from each of the
    ``rows`` nearest buoy rows, so the points are never collinear.
    """
    i = sc.anchor_frame
    idx, uv, _ = sc.visible_buoys(i)
    w, h = sc.cam.image_size
    order = np.argsort(np.hypot(uv[:, 0] - w / 2, uv[:, 1] - h / 2), kind="stable")
    taken: dict = {}
    for o in order:
        row = float(sc.buoys[idx[o], 0])
        if row not in taken and len(taken) >= rows:
            continue
        if len(taken.setdefault(row, [])) < per_row:
            taken[row].append(o)
    chosen = [o for r in taken.values() for o in r]
    return [Correspondence((float(uv[o, 0]), float(uv[o, 1])), tuple(float(c) for c in sc.buoys[idx[o]]))
            for o in chosen]


# ---------------------------------------------------------------------------
# reference profiles


def truth_profiles(gt: GroundTruth, spec: CourseSpec, average: str = "time") -> dict:
    """Segment means of scripted velocity and stroke rate per lane.

    ``average="time"`` is the time average over the interval the boat spends
    in a segment (what uniformly sampled measurements estimate);
    ``"distance"`` averages velocity over distance instead.
    """
    out = {}
    for ln in gt.scenario.race.lanes:
        pace = gt.pacing[ln.lane]
        ph = gt.phase[ln.lane]
        vel, rate = [], []
        for c in spec.segment_centers():
            d0 = c - spec.segment_spacing / 2 + spec.race_distance
            d1 = d0 + spec.segment_spacing
            t0, t1 = pace.time_at(d0), pace.time_at(d1)
            if average == "time":
                vel.append(spec.segment_spacing / (t1 - t0))
            elif average == "distance":
                vel.append(quad(lambda t: float(pace.v(t)) ** 2, t0, t1, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
                           / spec.segment_spacing)
            else:
                raise ValueError(f"unknown average {average!r}")
            p0, p1 = ph.phase(t0), ph.phase(t1)
            rate.append(60.0 * (p1 - p0) / (2 * math.pi) / (t1 - t0))
        centers = np.array(spec.segment_centers())
        ones = np.ones(len(centers), dtype=int)
        out[ln.lane] = (Profile(centers, np.array(vel), ones, "velocity_mps"),
                        Profile(centers, np.array(rate), ones.copy(), "stroke_rate_spm"))
    return out
