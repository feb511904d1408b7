"""Synthetic gel-pad tactile sensing: depth-frame rendering, contact-patch
extraction, and the ground-truth contact plant the grasp controller runs
against.

Conventions: pad coordinates are millimeters with the origin at the pad
center, x along the image width and y along the height; pixel (i, j) has
its center at y = (i - (H-1)/2) / resolution, x = (j - (W-1)/2) / resolution.
Depth values are indentation in millimeters (positive into the gel).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# Emboss relief of the digit band on card-face frames, mm per side: half of
# the thickness step between the plain card body and the raised-digit region.
EMBOSS_HEIGHT = 0.4

PATCH_CSV_HEADER = "tick,area_px,edge_offset_mm,edge_angle_rad"


@dataclass(frozen=True)
class GelPadSpec:
    """Geometry and noise model of one synthetic gel pad."""

    width_px: int = 320
    height_px: int = 240
    resolution: float = 10.0  # pixels per millimeter
    max_indent: float = 2.0   # mm of gel travel before saturation
    noise_sigma: float = 0.0  # additive area noise, px

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("pad dimensions must be positive")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.max_indent <= 0:
            raise ValueError("max_indent must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def half_width_mm(self) -> float:
        return 0.5 * self.width_px / self.resolution

    @property
    def half_height_mm(self) -> float:
        return 0.5 * self.height_px / self.resolution

    def grid_mm(self):
        """Cell-center coordinate arrays (x, y), each height_px x width_px."""
        j = np.arange(self.width_px)
        i = np.arange(self.height_px)
        x = (j - (self.width_px - 1) / 2.0) / self.resolution
        y = (i - (self.height_px - 1) / 2.0) / self.resolution
        return np.meshgrid(x, y)


@dataclass(frozen=True)
class TactileFrame:
    """One depth image at a 60 Hz tick."""

    depth: np.ndarray
    pad: GelPadSpec
    tick: int = 0

    def __post_init__(self):
        if self.depth.shape != (self.pad.height_px, self.pad.width_px):
            raise ValueError("depth grid does not match the pad dimensions")
        if np.any(self.depth < 0) or np.any(self.depth > self.pad.max_indent + 1e-12):
            raise ValueError("depth values outside [0, max_indent]")


@dataclass(frozen=True)
class ContactPatch:
    """Thresholded-contact summary: area, centroid, and fitted edge line."""

    area: int
    centroid_px: tuple[float, float] | None = None  # (x_px, y_px) image coords
    edge_offset: float | None = None  # mm, signed distance of edge from pad center
    edge_angle: float | None = None   # rad, edge line orientation


def render_sphere_contact(pad: GelPadSpec, radius: float, indent: float,
                          tick: int = 0) -> TactileFrame:
    """Spherical indenter pressed into the pad center.

    Depth follows the paraboloid approximation of a spherical cap:
    max(0, indent - r^2 / (2 radius)).
    """
    if not 0.0 <= indent <= min(radius, pad.max_indent):
        raise ValueError(
            f"indent {indent} outside [0, min(radius, max_indent)]")
    x, y = pad.grid_mm()
    depth = np.maximum(0.0, indent - (x * x + y * y) / (2.0 * radius))
    return TactileFrame(depth, pad, tick)


def render_edge_contact(pad: GelPadSpec, offset: float, angle: float,
                        indent: float, tick: int = 0,
                        digit_band: tuple[float, float] | None = None) -> TactileFrame:
    """Half-plane imprint bounded by the line at signed distance `offset`
    from the pad center with direction `angle`.

    The contacted side is where (x, y) . (-sin angle, cos angle) <= offset;
    an offset beyond the pad extent yields an all-zero or all-contact frame.
    `digit_band`, given as (near, far) distances in mm from the edge into
    the contact side, raises a strip by EMBOSS_HEIGHT (emulating embossed
    digits near a card edge).
    """
    if not 0.0 <= indent <= pad.max_indent:
        raise ValueError(f"indent {indent} outside [0, max_indent]")
    x, y = pad.grid_mm()
    signed = -np.sin(angle) * x + np.cos(angle) * y
    contact = signed <= offset
    depth = np.where(contact, indent, 0.0)
    if digit_band is not None:
        near, far = digit_band
        into = offset - signed
        band = contact & (into >= near) & (into <= far)
        depth = np.where(band, indent + EMBOSS_HEIGHT, depth)
    depth = np.clip(depth, 0.0, pad.max_indent)
    return TactileFrame(depth, pad, tick)


def render_card_face(pad: GelPadSpec, indent: float,
                     band_x: tuple[float, float] | None = None,
                     band_y: tuple[float, float] | None = None,
                     tick: int = 0) -> TactileFrame:
    """Full-face card press: uniform indent over the whole pad, with an
    optional embossed rectangle spanning band_x by band_y (mm, pad-centered
    intervals; an omitted axis spans the full pad)."""
    if not 0.0 <= indent <= pad.max_indent:
        raise ValueError(f"indent {indent} outside [0, max_indent]")
    x, y = pad.grid_mm()
    depth = np.full((pad.height_px, pad.width_px), indent)
    if band_x is not None or band_y is not None:
        band = np.ones_like(depth, dtype=bool)
        if band_x is not None:
            band &= (x >= band_x[0]) & (x <= band_x[1])
        if band_y is not None:
            band &= (y >= band_y[0]) & (y <= band_y[1])
        depth = np.where(band, indent + EMBOSS_HEIGHT, depth)
    depth = np.clip(depth, 0.0, pad.max_indent)
    return TactileFrame(depth, pad, tick)


def extract_patch(frame: TactileFrame, threshold: float = 0.05) -> ContactPatch:
    """Threshold the depth image and summarize the contact.

    Area counts every cell with depth >= threshold.  The edge line is a
    total-least-squares fit to the interior boundary of the largest
    connected component (pad-border cells are not boundary); its normal is
    oriented away from the contact side so that (offset, angle) round-trips
    the render_edge_contact parameterization.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    mask = frame.depth >= threshold
    area = int(np.count_nonzero(mask))
    if area == 0:
        return ContactPatch(area=0)

    iy, ix = np.nonzero(mask)
    centroid = (float(np.mean(ix)), float(np.mean(iy)))

    labels, n_comp = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n_comp > 1:
        largest = int(np.argmax(ndimage.sum_labels(mask, labels, range(1, n_comp + 1)))) + 1
        comp = labels == largest
    else:
        comp = mask
    interior = ndimage.binary_erosion(
        comp, structure=ndimage.generate_binary_structure(2, 1), border_value=1)
    boundary = comp & ~interior
    by, bx = np.nonzero(boundary)
    if len(bx) < 2:
        return ContactPatch(area=area, centroid_px=centroid)

    res = frame.pad.resolution
    px = (bx - (frame.pad.width_px - 1) / 2.0) / res
    py = (by - (frame.pad.height_px - 1) / 2.0) / res
    pts = np.column_stack([px, py])
    mean = pts.mean(axis=0)
    cov = np.cov((pts - mean).T) if len(pts) > 2 else np.eye(2) * 1e-12
    evals, evecs = np.linalg.eigh(np.atleast_2d(cov))
    direction = evecs[:, int(np.argmax(evals))]
    normal = np.array([-direction[1], direction[0]])

    cy, cx = ndimage.center_of_mass(comp)
    comp_centroid = np.array([(cx - (frame.pad.width_px - 1) / 2.0) / res,
                              (cy - (frame.pad.height_px - 1) / 2.0) / res])
    if normal @ (comp_centroid - mean) > 0:
        normal = -normal
    edge_offset = float(normal @ mean)
    edge_angle = float(np.arctan2(-normal[0], normal[1]))
    return ContactPatch(area=area, centroid_px=centroid,
                        edge_offset=edge_offset, edge_angle=edge_angle)


def patch_csv_row(tick: int, patch: ContactPatch) -> str:
    """Format one patch as a CSV row matching PATCH_CSV_HEADER."""
    if patch.edge_offset is None:
        return f"{tick},{patch.area},,"
    return (f"{tick},{patch.area},{float(patch.edge_offset)!r},"
            f"{float(patch.edge_angle)!r}")


def write_pgm(frame: TactileFrame, path) -> None:
    """Export the frame as a 16-bit binary PGM, depth in micrometers."""
    um = np.round(frame.depth * 1000.0).astype(">u2")
    header = f"P5\n{frame.pad.width_px} {frame.pad.height_px}\n65535\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(um.tobytes())


class ContactPlant:
    """Ground-truth contact response used to exercise the controller.

    The measured contact area saturates linearly in the squeeze depth:
    area(p) = area_max * clamp((object_width - p) / squeeze_range, 0, 1),
    plus seeded Gaussian pixel noise.  The saturating response is
    deliberately richer than the controller's unbounded linear model, so
    closed-loop runs always carry model mismatch.  object_width may be
    updated between calls (e.g. while an object rolls during rubbing).
    """

    def __init__(self, object_width: float, area_max: float = 8000.0,
                 squeeze_range: float = 8.0, noise_sigma: float = 0.0,
                 seed: int = 0, pad: GelPadSpec | None = None):
        pad = pad if pad is not None else GelPadSpec()
        if object_width <= 0:
            raise ValueError("object_width must be positive")
        if area_max <= 0 or area_max > pad.width_px * pad.height_px:
            raise ValueError("area_max must be in (0, pad pixel count]")
        if squeeze_range <= 0:
            raise ValueError("squeeze_range must be positive")
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        self.object_width = float(object_width)
        self.area_max = float(area_max)
        self.squeeze_range = float(squeeze_range)
        self.noise_sigma = float(noise_sigma)
        self.seed = int(seed)
        self.pad = pad
        self._rng = np.random.default_rng(seed)

    def area(self, opening: float) -> float:
        """Contact area (px) at gripper opening `opening` (mm).

        Accepts solver-tolerance roundoff below zero (a closed loop holds
        opening nonnegative only to its constraint tolerance)."""
        if opening < -1e-6:
            raise ValueError("opening must be nonnegative")
        opening = max(opening, 0.0)
        squeeze = (self.object_width - opening) / self.squeeze_range
        c = self.area_max * float(np.clip(squeeze, 0.0, 1.0))
        if self.noise_sigma > 0:
            c += self.noise_sigma * float(self._rng.standard_normal())
        return max(0.0, c)


def plant_step(plant: ContactPlant, opening: float) -> float:
    """Read the plant's contact area at the given opening."""
    return plant.area(opening)
