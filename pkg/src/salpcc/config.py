"""Run configuration: defaults, flat key=value files, report embedding."""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import DataError
from .view import CameraPose


@dataclass
class CodecConfig:
    """All pipeline knobs; defaults follow the reference parameter table."""

    depth: int = 10  # voxel grid is 2^depth per axis
    k_n: int = 6  # delta-coordinate graph
    k_a: int = 125  # visibility screen-space window
    k_g: int = 25  # saliency neighborhood
    s_thresh: float = 0.1  # rate-control scale
    w1: float = 1.0  # geometric saliency weight
    w2: float = 1.0  # visibility saliency weight
    w3: float = 0.1  # depth saliency weight
    w4: float = 0.1  # focus saliency weight
    m: float = 1.0  # focus falloff exponent
    strict_paper_mode: bool = False
    uniform: bool = False  # constant scale instead of saliency
    uniform_value: float = 1.0
    tol: float = 1e-8
    maxiter: int = 5000
    backend: str = "auto"
    threads: int = 1
    # camera overrides; None means derive the default pose from the cloud
    camera_eye: tuple | None = None
    camera_dir: tuple | None = None
    camera_near: float | None = None
    camera_far: float | None = None
    fov_deg: float = 60.0
    image_size: tuple = (1024, 1024)

    def weights(self):
        return (self.w1, self.w2, self.w3, self.w4)

    def camera_for(self, points) -> CameraPose:
        """Explicit pose when fully given, otherwise the default pose.

        A partial override (eye without dir, or missing planes) is an
        error: a half-specified pose silently changes meaning.
        """
        given = [self.camera_eye, self.camera_dir,
                 self.camera_near, self.camera_far]
        if all(v is None for v in given):
            from .view import default_camera

            return default_camera(
                points, fov_deg=self.fov_deg, image_size=self.image_size
            )
        if any(v is None for v in given):
            raise DataError(
                "camera override needs eye, dir, near and far together"
            )
        return CameraPose(
            eye=np.asarray(self.camera_eye, dtype=np.float64),
            view_dir=np.asarray(self.camera_dir, dtype=np.float64),
            z_near=float(self.camera_near),
            z_far=float(self.camera_far),
            image_size=tuple(self.image_size),
            fov_deg=float(self.fov_deg),
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


_TUPLE_FIELDS = {"camera_eye": float, "camera_dir": float, "image_size": int}
_BOOL_FIELDS = {"strict_paper_mode", "uniform"}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name in _TUPLE_FIELDS:
        if raw.lower() == "none":
            return None
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(_TUPLE_FIELDS[name](p) for p in parts)
    if name in _BOOL_FIELDS:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DataError(f"bad boolean for {name}: {raw!r}")
    if name in ("camera_near", "camera_far") and raw.lower() == "none":
        return None
    current = CodecConfig.__dataclass_fields__[name].default
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float) or current is None:
        return float(raw)
    return raw


def load_config(path) -> CodecConfig:
    """Read a flat key=value file; unknown keys are an error."""
    known = {f.name for f in fields(CodecConfig)}
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in known:
                raise DataError(f"{path}:{lineno}: unknown key {key!r}")
            overrides[key] = _parse_value(key, raw)
    return replace(CodecConfig(), **overrides)


def save_config(config: CodecConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in config.to_dict().items():
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key}={value}\n")
