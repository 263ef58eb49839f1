"""Procedural pseudo-CXR renderer.

Base anatomy is two dark lung-field ellipses, a bright central cardiac
ellipse, rib striping, and seeded Gaussian noise. Each finding perturbs its
canonical region: opacity adds a bright blob in the named lung, effusion a
bright band at the named base, cardiomegaly enlarges the cardiac ellipse,
edema adds a diffuse bilateral haze, pneumothorax darkens the named apex.
Severity scales both amplitude and extent monotonically.

Noise is keyed by the seed alone (not by the findings), so two renders with
the same seed differ only inside the perturbed regions; the region masks
exposed by :class:`Anatomy` are seed-independent, which is what the
region-statistic oracles in the tests rely on.
"""

from __future__ import annotations

import numpy as np

from ..numcore import np_rng
from .findings import Finding, validate_findings

SEV_LEVEL = {"mild": 1, "moderate": 2, "severe": 3}

BODY = 0.55
LUNG = 0.22
HEART = 0.75
RIB_AMP = 0.04
NOISE_SIGMA = 0.02

OPACITY_AMP = {1: 0.12, 2: 0.19, 3: 0.26}
OPACITY_SIGMA = {1: 1.9, 2: 2.4, 3: 2.9}  # at size=32, scaled with size/32
EFFUSION_AMP = {1: 0.16, 2: 0.24, 3: 0.32}
EFFUSION_ROWS = {1: 3, 2: 4, 3: 5}
EDEMA_AMP = {1: 0.05, 2: 0.10, 3: 0.15}
PTX_AMP = {1: 0.08, 2: 0.13, 3: 0.18}
PTX_ROWS = {1: 3, 2: 4, 3: 5}
HEART_SCALE = {1: 1.18, 2: 1.36, 3: 1.54}
HEART_SCALE_MAX = HEART_SCALE[3]


class Anatomy:
    """Seed-independent geometry: masks and centers for one image size."""

    def __init__(self, size: int = 32):
        self.size = size
        s = size / 32.0
        self.ys, self.xs = np.mgrid[0:size, 0:size].astype(np.float64)
        self.lung_cx = {"left": 9.5 * s, "right": 22.5 * s}
        self.lung_cy = 15.0 * s
        self.lung_rx = 5.8 * s
        self.lung_ry = 9.5 * s
        self.heart_c = (16.5 * s, 19.0 * s)
        self.heart_r = (4.6 * s, 6.2 * s)
        self._scale = s

    def _ellipse(self, cx, cy, rx, ry) -> np.ndarray:
        return ((self.xs - cx) / rx) ** 2 + ((self.ys - cy) / ry) ** 2 <= 1.0

    def lung(self, side: str) -> np.ndarray:
        return self._ellipse(self.lung_cx[side], self.lung_cy, self.lung_rx, self.lung_ry)

    def heart(self, scale: float = 1.0) -> np.ndarray:
        cx, cy = self.heart_c
        rx, ry = self.heart_r
        return self._ellipse(cx, cy, rx * scale, ry * scale)

    def lung_tissue(self, side: str) -> np.ndarray:
        """Lung field minus the (base-size) cardiac ellipse; findings live here."""
        return self.lung(side) & ~self.heart(1.0)

    def base_band(self, side: str, rows: int | None = None) -> np.ndarray:
        rows = rows if rows is not None else EFFUSION_ROWS[3]
        ymin = self.lung_cy + self.lung_ry - rows * self._scale
        return self.lung_tissue(side) & (self.ys >= ymin)

    def apex_band(self, side: str, rows: int | None = None) -> np.ndarray:
        rows = rows if rows is not None else PTX_ROWS[3]
        ytop = self.lung_cy - self.lung_ry
        return self.lung_tissue(side) & (self.ys <= ytop + rows * self._scale + 2.0)

    def cardiac_region(self) -> np.ndarray:
        return self.heart(HEART_SCALE_MAX)

    def sides_of(self, side: str) -> list[str]:
        return ["left", "right"] if side == "bilateral" else [side]

    def finding_region(self, kind: str, side: str | None) -> np.ndarray:
        """Canonical probe region per finding kind, for intensity oracles."""
        if kind == "cardiomegaly":
            return self.cardiac_region()
        if kind == "edema":
            return self.lung_tissue("left") | self.lung_tissue("right")
        sides = self.sides_of(side)
        if kind == "effusion":
            out = np.zeros((self.size, self.size), dtype=bool)
            for s in sides:
                out |= self.base_band(s)
            return out
        if kind == "pneumothorax":
            out = np.zeros((self.size, self.size), dtype=bool)
            for s in sides:
                out |= self.apex_band(s)
            return out
        # opacity: whole named lung tissue
        out = np.zeros((self.size, self.size), dtype=bool)
        for s in sides:
            out |= self.lung_tissue(s)
        return out


def _opacity_center(anat: Anatomy, side: str, seed: int) -> tuple[float, float]:
    # jitter keyed by (seed, kind, side) so severity sweeps share the center
    rng = np_rng(seed, "opacity_center", side)
    jx, jy = rng.uniform(-1.5, 1.5, size=2) * anat._scale
    return anat.lung_cx[side] + jx, anat.lung_cy - 2.0 * anat._scale + jy


def render_image(findings: list[Finding], seed: int, size: int = 32) -> np.ndarray:
    """Render one grayscale study image, deterministic in (findings, seed)."""
    validate_findings(findings)
    anat = Anatomy(size)
    img = np.full((size, size), BODY, dtype=np.float64)

    heart_scale = 1.0
    for f in findings:
        if f.kind == "cardiomegaly":
            heart_scale = HEART_SCALE[SEV_LEVEL[f.severity]]

    for side in ("left", "right"):
        img[anat.lung(side)] = LUNG
    img[anat.heart(heart_scale)] = HEART

    tissue = (anat.lung_tissue("left") | anat.lung_tissue("right")) & ~anat.heart(heart_scale)
    ribs = RIB_AMP * (0.5 + 0.5 * np.sin(2.0 * np.pi * anat.ys / (5.3 * anat._scale)))
    img[tissue] += ribs[tissue]

    for f in findings:
        if f.kind in ("no_finding", "cardiomegaly"):
            continue
        lvl = SEV_LEVEL[f.severity]
        for side in anat.sides_of(f.side):
            t = anat.lung_tissue(side)
            if f.kind == "opacity":
                cx, cy = _opacity_center(anat, side, seed)
                sig = OPACITY_SIGMA[lvl] * anat._scale
                blob = np.exp(-((anat.xs - cx) ** 2 + (anat.ys - cy) ** 2) / (2 * sig**2))
                img[t] += OPACITY_AMP[lvl] * blob[t]
            elif f.kind == "effusion":
                band = anat.base_band(side, EFFUSION_ROWS[lvl])
                img[band] += EFFUSION_AMP[lvl]
            elif f.kind == "edema":
                img[t] += EDEMA_AMP[lvl]
            elif f.kind == "pneumothorax":
                apex = anat.apex_band(side, PTX_ROWS[lvl])
                img[apex] -= PTX_AMP[lvl]

    noise = np_rng(seed, "image_noise").normal(0.0, NOISE_SIGMA, size=(size, size))
    img += noise
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def region_mean(image: np.ndarray, kind: str, side: str | None, size: int | None = None) -> float:
    """Mean intensity over the canonical region of a finding kind."""
    anat = Anatomy(size or image.shape[0])
    mask = anat.finding_region(kind, side)
    return float(image[mask].mean())
