"""Scan geometry, image/sinogram containers and row-sparse view masks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, ShapeMismatchError

# Reference scanner: 40 cm source-to-center, 40 cm center-to-detector,
# 41.3 cm flat detector. Desk-scale problems keep these ratios.
_REF_SOD_MM = 400.0
_REF_CDD_MM = 400.0
_REF_DET_WIDTH_MM = 413.0

_GEOM_KEYS = (
    "sod_mm",
    "cdd_mm",
    "n_views",
    "n_detectors",
    "det_width_mm",
    "angle_start_rad",
    "angle_end_rad",
)


def _readonly(a, dtype=np.float64):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FanBeamGeometry:
    """Fan-beam scan description with a flat detector.

    The source rotates at distance ``source_to_center`` from the rotation
    center; the detector line sits ``center_to_detector`` beyond the center,
    perpendicular to the source-center ray. View angles are evenly spaced
    over ``angular_range`` with the endpoint excluded.
    """

    source_to_center: float
    center_to_detector: float
    n_views: int
    n_detectors: int
    detector_width: float
    angular_range: tuple[float, float] = (0.0, 2.0 * math.pi)

    def __post_init__(self):
        if not (self.source_to_center > 0 and self.center_to_detector > 0):
            raise InvalidArgumentError("source/detector distances must be positive")
        if self.detector_width <= 0:
            raise InvalidArgumentError("detector_width must be positive")
        if self.n_views < 1 or self.n_detectors < 1:
            raise InvalidArgumentError("n_views and n_detectors must be >= 1")
        lo, hi = self.angular_range
        if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
            raise InvalidArgumentError("angular_range must be a finite increasing pair")

    @property
    def view_angles(self):
        lo, hi = self.angular_range
        return np.linspace(lo, hi, self.n_views, endpoint=False)

    @property
    def detector_spacing(self):
        return self.detector_width / self.n_detectors

    @property
    def detector_offsets(self):
        """Element-center offsets along the physical detector line."""
        idx = np.arange(self.n_detectors, dtype=np.float64)
        return (idx - (self.n_detectors - 1) / 2.0) * self.detector_spacing

    @property
    def magnification(self):
        return (self.source_to_center + self.center_to_detector) / self.source_to_center

    @property
    def virtual_detector_coords(self):
        """Detector coordinates rescaled to the line through the center."""
        return self.detector_offsets / self.magnification

    @property
    def virtual_detector_spacing(self):
        return self.detector_spacing / self.magnification

    def to_kv(self) -> str:
        lo, hi = self.angular_range
        vals = {
            "sod_mm": repr(self.source_to_center),
            "cdd_mm": repr(self.center_to_detector),
            "n_views": str(self.n_views),
            "n_detectors": str(self.n_detectors),
            "det_width_mm": repr(self.detector_width),
            "angle_start_rad": repr(lo),
            "angle_end_rad": repr(hi),
        }
        return "".join(f"{k}={vals[k]}\n" for k in _GEOM_KEYS)

    @classmethod
    def from_kv(cls, text: str) -> "FanBeamGeometry":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidArgumentError(f"malformed geometry line: {line!r}")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
        missing = [k for k in _GEOM_KEYS if k not in kv]
        if missing:
            raise InvalidArgumentError(f"geometry block missing keys: {missing}")
        unknown = [k for k in kv if k not in _GEOM_KEYS]
        if unknown:
            raise InvalidArgumentError(f"geometry block has unknown keys: {unknown}")
        return cls(
            source_to_center=float(kv["sod_mm"]),
            center_to_detector=float(kv["cdd_mm"]),
            n_views=int(kv["n_views"]),
            n_detectors=int(kv["n_detectors"]),
            detector_width=float(kv["det_width_mm"]),
            angular_range=(float(kv["angle_start_rad"]), float(kv["angle_end_rad"])),
        )


def desk_geometry(n_views, n_detectors, nx, pixel_size=1.0, margin=1.02):
    """Reference geometry scaled so the whole grid sits inside the fan FOV.

    Keeps the 40 cm / 40 cm / 41.3 cm ratios of the reference scanner and
    rescales them so the field-of-view circle covers the image half-diagonal
    times ``margin``.
    """
    half_fan = math.atan((_REF_DET_WIDTH_MM / 2.0) / (_REF_SOD_MM + _REF_CDD_MM))
    fov_radius_ref = _REF_SOD_MM * math.sin(half_fan)
    half_diag = math.sqrt(2.0) * nx * pixel_size / 2.0
    scale = margin * half_diag / fov_radius_ref
    return FanBeamGeometry(
        source_to_center=_REF_SOD_MM * scale,
        center_to_detector=_REF_CDD_MM * scale,
        n_views=n_views,
        n_detectors=n_detectors,
        detector_width=_REF_DET_WIDTH_MM * scale,
    )


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Square-pixel image on a centered grid. values[iy, ix], both centered."""

    nx: int
    ny: int
    pixel_size: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.pixel_size <= 0:
            raise InvalidArgumentError("bad image dimensions")
        v = _readonly(self.values)
        if v.shape != (self.ny, self.nx):
            raise ShapeMismatchError(f"values shape {v.shape} != (ny, nx)=({self.ny}, {self.nx})")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("image values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def xs(self):
        return (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.pixel_size

    @property
    def ys(self):
        return (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.pixel_size

    def with_values(self, values) -> "ImageGrid":
        return ImageGrid(self.nx, self.ny, self.pixel_size, values)


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Stack of projection rows, one per view. values[view, detector]."""

    values: np.ndarray = field(repr=False)
    geometry: FanBeamGeometry = None

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 2:
            raise ShapeMismatchError("sinogram values must be 2-D")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("sinogram values must be finite")
        if self.geometry is not None:
            g = self.geometry
            if v.shape != (g.n_views, g.n_detectors):
                raise ShapeMismatchError(
                    f"sinogram shape {v.shape} != geometry ({g.n_views}, {g.n_detectors})"
                )
        object.__setattr__(self, "values", v)

    @property
    def n_views(self):
        return self.values.shape[0]

    @property
    def n_detectors(self):
        return self.values.shape[1]

    def with_values(self, values) -> "Sinogram":
        return Sinogram(values, self.geometry)


@dataclass(frozen=True, eq=False)
class SparseMask:
    """Row mask keeping every r-th view: row i active iff i % r == 0."""

    n_views: int
    r: int
    active: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.n_views < 1:
            raise InvalidArgumentError("n_views must be >= 1")
        if self.r < 1 or self.r > self.n_views:
            raise InvalidArgumentError("stride r must satisfy 1 <= r <= n_views")
        active = (np.arange(self.n_views) % self.r) == 0
        active.setflags(write=False)
        object.__setattr__(self, "active", active)

    @property
    def n_active(self):
        return int(self.active.sum())

    @property
    def active_indices(self):
        return np.flatnonzero(self.active)


def make_sparse_mask(n_views: int, r: int) -> SparseMask:
    """Build the stride-r view mask; keeps ceil(n_views / r) rows."""
    return SparseMask(n_views=n_views, r=r)


def apply_mask(s: Sinogram, m: SparseMask) -> Sinogram:
    """Zero out inactive view rows. Active rows pass through bit-exactly."""
    if s.n_views != m.n_views:
        raise ShapeMismatchError(f"mask has {m.n_views} views, sinogram has {s.n_views}")
    out = np.where(m.active[:, None], s.values, 0.0)
    return Sinogram(out, s.geometry)


def mask_rows(values: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Row-mask a plain array (views along axis 0)."""
    values = np.asarray(values)
    if values.shape[0] != active.shape[0]:
        raise ShapeMismatchError("row mask length does not match array")
    return np.where(np.asarray(active, bool)[:, None], values, 0.0)
