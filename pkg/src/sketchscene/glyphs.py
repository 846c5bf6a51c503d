"""Procedural glyph geometry and its two rasterization styles.

A glyph instance is a small set of polygons in a canonical unit frame
(y grows downward, matching raster rows). The same instance renders two
ways: "photo" fills the support and applies a shading gradient,
"sketch" draws thin jittered outlines with occasional stroke dropout.
Masks are always the filled support, so a sketch and a photo of the
same instance have nearly identical masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from skimage.draw import line, polygon

RASTER_SIZE = 32

FAMILIES = ("circle", "triangle", "house", "tree", "star", "cross", "arrow", "ring")

# Characteristic on-canvas footprint (w, h) per family, as a fraction
# of the scene. Sizes are deliberately class-specific so box extents
# are predictable from class identity alone.
BASE_SIZE = {
    "circle": (0.22, 0.22),
    "triangle": (0.26, 0.24),
    "house": (0.36, 0.34),
    "tree": (0.24, 0.36),
    "star": (0.26, 0.26),
    "cross": (0.19, 0.19),
    "arrow": (0.34, 0.17),
    "ring": (0.16, 0.16),
}


@dataclass
class Geometry:
    """One glyph instance: filled polygons minus optional holes."""

    family: str
    polys: list = field(default_factory=list)
    holes: list = field(default_factory=list)


def _ngon(cx, cy, rx, ry, n, phase=0.0):
    angles = phase + np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([cx + rx * np.cos(angles), cy + ry * np.sin(angles)], axis=1)


def sample_geometry(family, rng):
    """Draw a fresh instance of `family` with per-instance proportions."""
    if family == "circle":
        r = 0.46 * rng.uniform(0.92, 1.0)
        e = rng.uniform(0.92, 1.08)
        return Geometry(family, [_ngon(0.5, 0.5, r * e, r / e, 24, rng.uniform(0, 0.26))])
    if family == "ring":
        r_out = 0.47 * rng.uniform(0.94, 1.0)
        r_in = r_out * rng.uniform(0.42, 0.55)
        phase = rng.uniform(0, 0.26)
        return Geometry(family, [_ngon(0.5, 0.5, r_out, r_out, 24, phase)],
                        [_ngon(0.5, 0.5, r_in, r_in, 24, phase)])
    if family == "triangle":
        apex = (0.5 + rng.uniform(-0.06, 0.06), 0.03 + rng.uniform(0, 0.05))
        return Geometry(family, [np.array([
            apex,
            (0.06 + rng.uniform(0, 0.06), 0.95),
            (0.94 - rng.uniform(0, 0.06), 0.95),
        ])])
    if family == "house":
        overhang = rng.uniform(0.0, 0.04)
        apex_x = 0.5 + rng.uniform(-0.03, 0.03)
        roof = np.array([(0.08 - overhang, 0.46), (0.92 + overhang, 0.46), (apex_x, 0.04)])
        body = np.array([(0.08, 0.44), (0.92, 0.44), (0.92, 0.97), (0.08, 0.97)])
        return Geometry(family, [body, roof])
    if family == "tree":
        cw = rng.uniform(0.34, 0.46)
        tw = rng.uniform(0.06, 0.09)
        canopy = np.array([(0.5 + rng.uniform(-0.04, 0.04), 0.02),
                           (0.5 - cw, 0.66), (0.5 + cw, 0.66)])
        trunk = np.array([(0.5 - tw, 0.64), (0.5 + tw, 0.64),
                          (0.5 + tw, 0.98), (0.5 - tw, 0.98)])
        return Geometry(family, [canopy, trunk])
    if family == "star":
        inner = rng.uniform(0.38, 0.50)
        rot = -np.pi / 2 + rng.uniform(-0.12, 0.12)
        angles = rot + np.arange(10) * np.pi / 5
        radii = np.where(np.arange(10) % 2 == 0, 0.48, 0.48 * inner)
        pts = np.stack([0.5 + radii * np.cos(angles), 0.53 + radii * np.sin(angles)], axis=1)
        return Geometry(family, [pts])
    if family == "cross":
        a = rng.uniform(0.14, 0.18)
        lo, hi = 0.5 - a, 0.5 + a
        return Geometry(family, [np.array([
            (lo, 0.02), (hi, 0.02), (hi, lo), (0.98, lo), (0.98, hi), (hi, hi),
            (hi, 0.98), (lo, 0.98), (lo, hi), (0.02, hi), (0.02, lo), (lo, lo),
        ])])
    if family == "arrow":
        t = rng.uniform(0.10, 0.14)
        s = rng.uniform(0.26, 0.34)
        split = rng.uniform(0.55, 0.65)
        shaft = np.array([(0.02, 0.5 - t), (split, 0.5 - t),
                          (split, 0.5 + t), (0.02, 0.5 + t)])
        head = np.array([(split - 0.02, 0.5 - s), (0.98, 0.5), (split - 0.02, 0.5 + s)])
        return Geometry(family, [shaft, head])
    raise ValueError(f"unknown glyph family: {family}")


def _to_px(pts):
    # Unit frame -> pixel coords with a 1-px margin on every side.
    scale = RASTER_SIZE - 3
    return pts[:, 1] * scale + 1.0, pts[:, 0] * scale + 1.0


def _fill(polys, holes):
    mask = np.zeros((RASTER_SIZE, RASTER_SIZE), dtype=bool)
    for pts in polys:
        rr, cc = polygon(*_to_px(pts), shape=(RASTER_SIZE, RASTER_SIZE))
        mask[rr, cc] = True
    for pts in holes:
        rr, cc = polygon(*_to_px(pts), shape=(RASTER_SIZE, RASTER_SIZE))
        mask[rr, cc] = False
    return mask


def render_mask(geom):
    """Filled support of the instance, 32x32 boolean."""
    return _fill(geom.polys, geom.holes)


def render_photo(geom, rng):
    """Filled raster with a linear shading gradient, values in [0,1]."""
    mask = render_mask(geom)
    theta = rng.uniform(0, 2 * np.pi)
    base = rng.uniform(0.62, 0.88)
    amp = rng.uniform(0.15, 0.30)
    grid = (np.arange(RASTER_SIZE) / (RASTER_SIZE - 1)) - 0.5
    shade = base + 2.0 * amp * (np.cos(theta) * grid[None, :] + np.sin(theta) * grid[:, None])
    raster = np.where(mask, np.clip(shade, 0.35, 1.0), 0.0)
    return raster.astype(np.float32), mask


def _jitter(pts, rng, sigma=0.016):
    return np.clip(pts + rng.normal(0.0, sigma, pts.shape), 0.004, 0.996)


def render_sketch(geom, rng):
    """Thin-stroke outline raster plus the filled mask of the jittered shape."""
    jittered_polys = [_jitter(p, rng) for p in geom.polys]
    jittered_holes = [_jitter(p, rng) for p in geom.holes]
    ink = rng.uniform(0.78, 1.0)
    raster = np.zeros((RASTER_SIZE, RASTER_SIZE), dtype=np.float32)
    for pts in jittered_polys + jittered_holes:
        n = len(pts)
        keep = rng.random(n) >= 0.12
        # Dropout is cosmetic: never erase more than a third of a shape.
        if keep.sum() < max(2, int(np.ceil(n * 2 / 3))):
            keep[:] = True
        rr_all, cc_all = _to_px(pts)
        for i in range(n):
            if not keep[i]:
                continue
            j = (i + 1) % n
            rr, cc = line(int(round(rr_all[i])), int(round(cc_all[i])),
                          int(round(rr_all[j])), int(round(cc_all[j])))
            inside = (rr >= 0) & (rr < RASTER_SIZE) & (cc >= 0) & (cc < RASTER_SIZE)
            raster[rr[inside], cc[inside]] = ink
    return raster, _fill(jittered_polys, jittered_holes)


def sample_box(family, rng):
    """Scene-normalized (x0, y0, x1, y1) with class-specific extent."""
    bw, bh = BASE_SIZE[family]
    scale = rng.uniform(0.85, 1.15)
    w = bw * scale
    h = bh * scale * rng.uniform(0.95, 1.05)
    cx = rng.uniform(w / 2, 1.0 - w / 2)
    cy = rng.uniform(h / 2, 1.0 - h / 2)
    return (float(cx - w / 2), float(cy - h / 2), float(cx + w / 2), float(cy + h / 2))
