"""Readers and writers for detection streams, anchors, profiles and reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, IngestError
from .geometry import Correspondence
from .kinematics import Profile
from .localization import Detection

CLASSES = ("buoy", "athlete")
PROFILE_HEADERS = {"velocity_mps": "segment_center_m,velocity_mps",
                   "stroke_rate_spm": "segment_center_m,stroke_rate_spm"}


@dataclass
class FrameRecord:
    frame: int
    t_s: float
    detections: list

    def of_class(self, cls: str) -> list:
        return [d for d in self.detections if d.cls == cls]

    def buoy_centers(self) -> np.ndarray:
        return np.array([d.center for d in self.detections if d.cls == "buoy"], dtype=float).reshape(-1, 2)


def _pair(v, what, line):
    if not (isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(c, (int, float)) for c in v)):
        raise IngestError(f"line {line}: {what} must be [u, v], got {v!r}")
    return float(v[0]), float(v[1])


def parse_record(obj, line: int = 0) -> FrameRecord:
    """Validate one frame object of the detection stream."""
    if not isinstance(obj, dict):
        raise IngestError(f"line {line}: expected a JSON object")
    for key in ("frame", "t_s", "detections"):
        if key not in obj:
            raise IngestError(f"line {line}: missing field {key!r}")
    frame = obj["frame"]
    if not isinstance(frame, int) or isinstance(frame, bool) or frame < 0:
        raise IngestError(f"line {line}: frame must be a non-negative integer")
    if not isinstance(obj["t_s"], (int, float)):
        raise IngestError(f"line {line}: t_s must be a number")
    if not isinstance(obj["detections"], list):
        raise IngestError(f"line {line}: detections must be a list")
    dets = []
    for d in obj["detections"]:
        if not isinstance(d, dict):
            raise IngestError(f"line {line}: detection must be an object")
        cls = d.get("class")
        if cls not in CLASSES:
            raise IngestError(f"line {line}: unknown class {cls!r}; expected one of {CLASSES}")
        bb = d.get("bbox")
        if not (isinstance(bb, list) and len(bb) == 4 and all(isinstance(c, (int, float)) for c in bb)):
            raise IngestError(f"line {line}: bbox must be [l, t, w, h]")
        if not (bb[2] > 0 and bb[3] > 0):
            raise IngestError(f"line {line}: bbox needs positive width and height, got {bb[2:]}")
        kp = d.get("keypoints")
        if kp is not None:
            if not isinstance(kp, dict) or not {"shoulder", "wrist"} <= set(kp):
                raise IngestError(f"line {line}: keypoints need shoulder and wrist")
            kp = {"shoulder": _pair(kp["shoulder"], "shoulder", line), "wrist": _pair(kp["wrist"], "wrist", line)}
        tip = d.get("tip")
        if tip is not None:
            tip = _pair(tip, "tip", line)
        dets.append(Detection(cls, tuple(float(c) for c in bb), float(d.get("conf", 1.0)), kp, tip, frame))
    return FrameRecord(frame, float(obj["t_s"]), dets)


def _check_order(records):
    for a, b in zip(records, records[1:]):
        if b.frame != a.frame + 1:
            raise IngestError(f"frame {b.frame} follows frame {a.frame}; frames must be consecutive")


def read_stream(path) -> list[FrameRecord]:
    """Load a JSON Lines detection stream; errors name the offending line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"detection stream not found: {path}")
    records = []
    with open(path) as f:
        for n, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as e:
                raise IngestError(f"line {n}: invalid JSON ({e.msg})") from None
            records.append(parse_record(obj, n))
    if not records:
        raise IngestError(f"{path}: empty detection stream")
    _check_order(records)
    return records


def records_from_objects(objs) -> list[FrameRecord]:
    records = [parse_record(o, n) for n, o in enumerate(objs, start=1)]
    _check_order(records)
    return records


def write_stream(path, objs) -> None:
    with open(path, "w") as f:
        for o in objs:
            f.write(json.dumps(o, separators=(",", ":")) + "\n")


def read_anchors(path):
    """Anchor correspondences [{image, world, frame?}] -> (list, frame or None)."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"anchors file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg})") from None
    if not isinstance(data, list) or len(data) < 4:
        raise ConfigError("anchors file must list at least 4 {image, world} entries")
    corrs, frames = [], set()
    for k, e in enumerate(data):
        try:
            corrs.append(Correspondence(_pair(e["image"], "image", k + 1), _pair(e["world"], "world", k + 1)))
        except (KeyError, TypeError, IngestError) as err:
            raise ConfigError(f"anchor entry {k + 1} malformed: {err}") from None
        if "frame" in e:
            frames.add(int(e["frame"]))
    if len(frames) > 1:
        raise ConfigError(f"anchor entries name different frames: {sorted(frames)}")
    return corrs, (frames.pop() if frames else None)


def write_anchors(path, corrs, frame: int | None = None) -> None:
    out = []
    for c in corrs:
        e = {"image": [float(v) for v in c.image], "world": [float(v) for v in c.world]}
        if frame is not None:
            e["frame"] = int(frame)
        out.append(e)
    Path(path).write_text(json.dumps(out, indent=1))


def write_profile_csv(path, profile: Profile, extra: dict | None = None) -> None:
    """Segment profile CSV; ``extra`` adds named columns (e.g. truth, error)."""
    header = PROFILE_HEADERS.get(profile.quantity, f"segment_center_m,{profile.quantity}")
    extra = extra or {}
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header.split(",") + list(extra))
        for i, (c, v) in enumerate(zip(profile.centers, profile.values)):
            row = [f"{c:g}", "" if not np.isfinite(v) else f"{v:.6f}"]
            row += ["" if not np.isfinite(col[i]) else f"{col[i]:.6f}" for col in extra.values()]
            w.writerow(row)


def read_profile_csv(path) -> Profile:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except FileNotFoundError:
        raise DataError(f"profile CSV not found: {path}") from None
    if not rows or len(rows[0]) < 2 or rows[0][0] != "segment_center_m":
        raise DataError(f"{path}: expected a header starting with segment_center_m")
    quantity = rows[0][1]
    centers, values = [], []
    for n, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        try:
            centers.append(float(r[0]))
            values.append(float(r[1]) if r[1].strip() else np.nan)
        except (ValueError, IndexError):
            raise DataError(f"{path}: line {n} is not numeric") from None
    v = np.array(values)
    return Profile(np.array(centers), v, np.isfinite(v).astype(int), quantity)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, default=_default))


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
