"""Parallel-beam CT simulation with a beam-hardening artifact model.

Synthesizes paired corrupted/clean images for training: the clean image is
a phantom's attenuation map; the corruption is the reconstruction of the
nonlinear projection error

    e(p) = ln(sinh(eta * p) / (eta * p)),   p = metal trace thickness,

back-projected with a negative sign, which yields the dark bands and streaks
characteristic of dense implants. A linear-interpolation prior image is
produced alongside by inpainting the metal trace in the sinogram.

Everything here is a pure function of its inputs (float64 numpy), so dataset
generation can be parallelized per sample with per-sample RNGs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

_RAY_STEP = 0.5        # ray sampling step, pixels
_TRACE_THRESHOLD = 1e-6


@dataclass(frozen=True)
class ProjectionGeometry:
    """Parallel-beam geometry in image-pixel units."""

    n_angles: int = 180
    n_detectors: int = 0          # 0 = derive from the image diagonal
    detector_spacing: float = 1.0
    angle_range: float = math.pi

    def __post_init__(self):
        if self.n_angles < 1:
            raise ValueError("n_angles must be >= 1")
        if self.detector_spacing <= 0:
            raise ValueError("detector_spacing must be > 0")

    def resolved(self, image_side: int) -> "ProjectionGeometry":
        """Fill in n_detectors so the detector row covers the image diagonal."""
        if self.n_detectors:
            return self
        n_det = int(math.ceil(image_side * math.sqrt(2.0) / self.detector_spacing)) + 1
        return ProjectionGeometry(self.n_angles, n_det, self.detector_spacing,
                                  self.angle_range)

    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * (self.angle_range / self.n_angles)

    def offsets(self) -> np.ndarray:
        center = (self.n_detectors - 1) / 2.0
        return (np.arange(self.n_detectors) - center) * self.detector_spacing


@dataclass(frozen=True)
class PhantomImage:
    """Attenuation map in [0, 1] plus a binary metal mask of the same shape."""

    attenuation: np.ndarray
    metal_mask: np.ndarray

    def __post_init__(self):
        att, mask = self.attenuation, self.metal_mask
        if att.shape != mask.shape:
            raise ValueError("attenuation and metal_mask shapes differ")
        if not np.isfinite(att).all() or (att < 0).any():
            raise ValueError("attenuation must be finite and non-negative")
        if not np.isin(mask, (0, 1)).all():
            raise ValueError("metal_mask must be binary")


@dataclass(frozen=True)
class ArtifactPair:
    """One training sample: corrupted, clean, interpolation prior, non-metal mask."""

    x_m: np.ndarray
    x_gt: np.ndarray
    x_l: np.ndarray
    mask_i: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        shapes = {a.shape for a in (self.x_m, self.x_gt, self.x_l, self.mask_i)}
        if len(shapes) != 1:
            raise ValueError("pair arrays must share one shape")
        if not np.isfinite(self.x_gt).all():
            raise ValueError("x_gt must be finite")
        if not np.isin(self.mask_i, (0, 1)).all():
            raise ValueError("mask_i must be binary")


def _validate_image(image: np.ndarray) -> int:
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"image must be square 2D, got shape {image.shape}")
    if image.shape[0] < 8:
        raise ValueError("image side must be >= 8")
    return image.shape[0]


def radon(image: np.ndarray, geometry: ProjectionGeometry) -> np.ndarray:
    """Line-integral projections of a square image, (n_angles, n_detectors).

    Rays are sampled at quarter-pixel steps with bilinear interpolation
    (zero outside the grid), so the operator is exactly linear in the image.
    """
    n = _validate_image(image)
    geom = geometry.resolved(n)
    if geom.n_detectors < n * math.sqrt(2.0) / geom.detector_spacing:
        raise ValueError("detector row does not cover the image diagonal")

    img = np.asarray(image, dtype=np.float64)
    center = (n - 1) / 2.0
    half_len = n * math.sqrt(2.0) / 2.0
    n_steps = int(math.ceil(2.0 * half_len / _RAY_STEP))
    t = -half_len + (np.arange(n_steps + 1) + 0.5) * (2.0 * half_len / (n_steps + 1))
    offsets = geom.offsets()

    sino = np.empty((geom.n_angles, geom.n_detectors), dtype=np.float64)
    for ai, theta in enumerate(geom.angles()):
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        # ray point = s * (cos, sin) + t * (-sin, cos) in centered (x, y)
        xs = offsets[:, None] * cos_t - t[None, :] * sin_t + center
        ys = offsets[:, None] * sin_t + t[None, :] * cos_t + center
        sino[ai] = _bilinear_sum(img, xs, ys) * (2.0 * half_len / (n_steps + 1))
    return sino


def _bilinear_sum(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sum of bilinear samples along each row of (xs, ys); zero off-grid."""
    n = img.shape[0]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    total = np.zeros(xs.shape[0], dtype=np.float64)
    for dx, dy, wt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        valid = (xi >= 0) & (xi < n) & (yi >= 0) & (yi < n)
        vals = np.where(valid, img[yi.clip(0, n - 1), xi.clip(0, n - 1)], 0.0)
        total += (vals * wt).sum(axis=1)
    return total


def _ramp_kernel(length: int, spacing: float) -> np.ndarray:
    """Discrete Ram-Lak kernel in the spatial domain (band-limited ramp)."""
    k = np.zeros(length, dtype=np.float64)
    k[0] = 1.0 / (4.0 * spacing ** 2)
    odd = np.arange(1, length // 2 + 1, 2)
    vals = -1.0 / (math.pi ** 2 * odd ** 2 * spacing ** 2)
    k[odd] = vals
    k[-odd] = vals
    return k


def fbp(sino: np.ndarray, geometry: ProjectionGeometry, image_side: int = 0) -> np.ndarray:
    """Ramp-filtered back-projection onto a square grid.

    Inverts :func:`radon` approximately: projections are filtered with the
    discrete Ram-Lak kernel via zero-padded FFT, back-projected with linear
    interpolation, and scaled by the angular step.
    """
    sino = np.asarray(sino, dtype=np.float64)
    if not image_side:
        image_side = int(math.floor((sino.shape[1] - 1) / math.sqrt(2.0)))
    geom = geometry.resolved(image_side)
    if sino.shape != (geom.n_angles, geom.n_detectors):
        raise ValueError(f"sinogram shape {sino.shape} does not match geometry "
                         f"({geom.n_angles}, {geom.n_detectors})")

    n_det = geom.n_detectors
    pad = 1
    while pad < 2 * n_det:
        pad *= 2
    kernel_f = np.fft.rfft(_ramp_kernel(pad, geom.detector_spacing))
    filtered = np.fft.irfft(np.fft.rfft(sino, pad, axis=1) * kernel_f, pad, axis=1)
    filtered = filtered[:, :n_det] * geom.detector_spacing

    n = image_side
    center = (n - 1) / 2.0
    grid = np.arange(n) - center
    xg, yg = np.meshgrid(grid, grid)      # xg: columns, yg: rows
    det_center = (n_det - 1) / 2.0

    recon = np.zeros((n, n), dtype=np.float64)
    d_theta = geom.angle_range / geom.n_angles
    for ai, theta in enumerate(geom.angles()):
        s = (xg * math.cos(theta) + yg * math.sin(theta)) / geom.detector_spacing
        s_idx = s + det_center
        i0 = np.floor(s_idx).astype(np.int64)
        frac = s_idx - i0
        i1 = i0 + 1
        v0 = np.where((i0 >= 0) & (i0 < n_det), filtered[ai][i0.clip(0, n_det - 1)], 0.0)
        v1 = np.where((i1 >= 0) & (i1 < n_det), filtered[ai][i1.clip(0, n_det - 1)], 0.0)
        recon += v0 * (1 - frac) + v1 * frac
    return recon * d_theta


def beam_hardening_error(metal_trace: np.ndarray, eta: float) -> np.ndarray:
    """Nonlinear projection error ln(sinh(eta*p) / (eta*p)), elementwise.

    Zero at p = 0 (continuous extension), strictly increasing in p and eta,
    and overflow-safe: for large arguments ln(sinh(x)) is evaluated as
    x - ln 2 + log1p(-exp(-2x)).
    """
    if eta <= 0:
        raise ValueError("eta must be > 0")
    p = np.asarray(metal_trace, dtype=np.float64)
    if (p < 0).any():
        raise ValueError("metal trace must be non-negative")
    x = eta * p
    out = np.empty_like(x)
    small = x < 1e-4
    xs = x[small]
    out[small] = np.log1p(xs * xs / 6.0 * (1.0 + xs * xs / 20.0))
    xl = x[~small]
    big = xl > 20.0
    log_sinh = np.empty_like(xl)
    log_sinh[big] = xl[big] - math.log(2.0) + np.log1p(-np.exp(-2.0 * xl[big]))
    log_sinh[~big] = np.log(np.sinh(xl[~big]))
    out[~small] = log_sinh - np.log(xl)
    return out


def metal_trace_mask(metal_mask: np.ndarray, geometry: ProjectionGeometry) -> np.ndarray:
    """Binary sinogram mask of rays intersecting the metal region."""
    return radon(metal_mask.astype(np.float64), geometry) > _TRACE_THRESHOLD


def interpolate_trace(sino: np.ndarray, trace: np.ndarray) -> np.ndarray:
    """Replace in-trace values by per-row 1D linear interpolation.

    Each projection row is inpainted between its nearest uncorrupted
    neighbors; a row masked end to end falls back to the mean of its two
    boundary samples. Idempotent for a fixed trace.
    """
    if trace.shape != sino.shape:
        raise ValueError("trace mask shape must match the sinogram")
    out = np.array(sino, dtype=np.float64, copy=True)
    cols = np.arange(sino.shape[1])
    for r in range(sino.shape[0]):
        bad = trace[r]
        if not bad.any():
            continue
        if bad.all():
            out[r] = 0.5 * (sino[r, 0] + sino[r, -1])
            continue
        good = ~bad
        out[r, bad] = np.interp(cols[bad], cols[good], sino[r, good])
    return out


def li_prior(sino: np.ndarray, trace: np.ndarray, geometry: ProjectionGeometry,
             image_side: int = 0) -> np.ndarray:
    """Reconstruction of the trace-inpainted sinogram (the LI prior image)."""
    return fbp(interpolate_trace(sino, trace), geometry, image_side)


def synthesize_pair(phantom: PhantomImage, eta: float,
                    geometry: ProjectionGeometry) -> ArtifactPair:
    """Build one corrupted/clean/prior/mask sample from a phantom.

    The clean image is the attenuation map. The artifact image adds the
    reconstructed (negated) beam-hardening error, paints metal pixels at the
    display maximum, and clips to [0, 1]. With an empty metal mask the pair
    degenerates to the clean pipeline: x_m == x_gt bit-exactly.
    """
    n = _validate_image(phantom.attenuation)
    geom = geometry.resolved(n)
    x_gt = np.asarray(phantom.attenuation, dtype=np.float64)
    metal = np.asarray(phantom.metal_mask, dtype=np.float64)

    trace_vals = radon(metal, geom)
    err = beam_hardening_error(trace_vals, eta)
    f_ma = -fbp(err, geom, n)

    x_m = x_gt + f_ma
    x_m = np.where(metal > 0, 1.0, x_m)
    x_m = np.clip(x_m, 0.0, 1.0)

    sino_clean = radon(x_gt, geom)
    trace = trace_vals > _TRACE_THRESHOLD
    x_l = li_prior(sino_clean, trace, geom, n)

    mask_i = (1.0 - metal).astype(np.float64)
    return ArtifactPair(x_m=x_m, x_gt=x_gt, x_l=x_l, mask_i=mask_i, eta=float(eta))


# --------------------------------------------------------------------------
# Phantom generation for dataset synthesis

@dataclass(frozen=True)
class PhantomSpec:
    """Knobs for the random phantom generator."""

    n_ellipses: tuple[int, int] = (4, 9)
    n_metal: tuple[int, int] = (1, 3)
    metal_radius: tuple[float, float] = (0.02, 0.05)   # fraction of the side
    body_radius: float = 0.44
    smooth_sigma: float = 1.5
    background: float = 0.05
    value_range: tuple[float, float] = field(default=(0.1, 0.9))


def random_phantom(size: int, rng: np.random.Generator,
                   spec: PhantomSpec = PhantomSpec()) -> PhantomImage:
    """Random soft-tissue-like phantom with small metal inserts.

    A few overlapping ellipses inside a circular body, lightly smoothed and
    normalized into the display range, with 1-3 metal disks placed inside
    the body.
    """
    from scipy.ndimage import gaussian_filter

    grid = np.arange(size) - (size - 1) / 2.0
    xg, yg = np.meshgrid(grid, grid)
    r_body = spec.body_radius * size
    body = (xg ** 2 + yg ** 2) <= r_body ** 2

    img = np.zeros((size, size), dtype=np.float64)
    for _ in range(rng.integers(*spec.n_ellipses)):
        cx, cy = rng.uniform(-0.5, 0.5, 2) * r_body
        ax_, ay_ = rng.uniform(0.15, 0.7, 2) * r_body
        phi = rng.uniform(0, math.pi)
        c, s = math.cos(phi), math.sin(phi)
        xr = (xg - cx) * c + (yg - cy) * s
        yr = -(xg - cx) * s + (yg - cy) * c
        inside = (xr / ax_) ** 2 + (yr / ay_) ** 2 <= 1.0
        img[inside] += rng.uniform(-0.3, 0.5)
    img = gaussian_filter(img, spec.smooth_sigma)
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = (img - lo) / (hi - lo)
    v0, v1 = spec.value_range
    img = (v0 + (v1 - v0) * img) * body + spec.background * body
    img = np.clip(img, 0.0, 1.0)

    metal = np.zeros((size, size), dtype=np.float64)
    for _ in range(rng.integers(spec.n_metal[0], spec.n_metal[1] + 1)):
        radius = rng.uniform(*spec.metal_radius) * size
        ang = rng.uniform(0, 2 * math.pi)
        dist = rng.uniform(0.1, 0.75) * r_body
        cx, cy = dist * math.cos(ang), dist * math.sin(ang)
        metal[(xg - cx) ** 2 + (yg - cy) ** 2 <= radius ** 2] = 1.0
    return PhantomImage(attenuation=img, metal_mask=metal)


def disk_image(size: int, radius: float, value: float = 1.0,
               center: tuple[float, float] = (0.0, 0.0),
               antialias: bool = True) -> np.ndarray:
    """Disk of the given value, optionally with smooth pixel-coverage edges."""
    grid = np.arange(size) - (size - 1) / 2.0
    xg, yg = np.meshgrid(grid, grid)
    dist = np.sqrt((xg - center[0]) ** 2 + (yg - center[1]) ** 2)
    if antialias:
        cover = np.clip(radius - dist + 0.5, 0.0, 1.0)
    else:
        cover = (dist <= radius).astype(np.float64)
    return value * cover


def two_disk_phantom(size: int, spacing: float = 0.35,
                     metal_radius: float = 0.04) -> PhantomImage:
    """Uniform body with two metal disks on a horizontal line (test fixture)."""
    grid = np.arange(size) - (size - 1) / 2.0
    xg, yg = np.meshgrid(grid, grid)
    r_body = 0.45 * size
    body = ((xg ** 2 + yg ** 2) <= r_body ** 2).astype(np.float64)
    att = 0.3 * body
    off = spacing * size / 2.0
    rad = metal_radius * size
    metal = np.zeros_like(att)
    metal[(xg - off) ** 2 + yg ** 2 <= rad ** 2] = 1.0
    metal[(xg + off) ** 2 + yg ** 2 <= rad ** 2] = 1.0
    return PhantomImage(attenuation=att, metal_mask=metal)
