"""Boundary segmentation by polynomial fitting of detected landmarks.

Nineteen boundary landmarks (left to right) plus one filling-apex
landmark are ingested from upstream detection. The landmarks are
rotation-corrected so the root canal is vertical, a degree-``delta``
polynomial is fitted by ordinary least squares on the normal equations,
and the curve is rasterized one pixel wide into an anatomy-feature
channel together with the apex point.

For conditioning, x values are centered at their mean and scaled to unit
max-abs before the Gram matrix is formed; the system is solved by
Gaussian elimination with partial pivoting and the coefficients are
mapped back to the original frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateInputError, DimensionError, FittingError,
                     InsufficientDataError, UsageError)
from .tensor import Tensor

__all__ = [
    "BOUNDARY_POINTS", "LandmarkSet", "PolynomialCurve", "AnatomyFeature",
    "rotation_angle", "rotate_points", "fit_polynomial", "rasterize",
    "anatomy_feature", "fitted_pointset", "compose_input", "curve_to_pointset",
    "read_landmarks_csv", "write_pgm", "curve_to_json",
]

BOUNDARY_POINTS = 19


@dataclass(frozen=True)
class LandmarkSet:
    """Boundary landmarks, filling apex and optional canal axis, all in
    image pixel coordinates."""
    boundary: np.ndarray           # (19, 2), left to right
    gutta_apex: np.ndarray         # (2,)
    canal_axis: np.ndarray | None  # (2, 2) endpoints, or None for no rotation

    def __post_init__(self):
        b = np.asarray(self.boundary, dtype=np.float64)
        if b.shape != (BOUNDARY_POINTS, 2):
            raise UsageError(
                f"expected {BOUNDARY_POINTS} boundary points, got {b.shape}")
        object.__setattr__(self, "boundary", b)
        object.__setattr__(self, "gutta_apex",
                           np.asarray(self.gutta_apex, dtype=np.float64).reshape(2))
        if self.canal_axis is not None:
            ax = np.asarray(self.canal_axis, dtype=np.float64)
            if ax.shape != (2, 2):
                raise UsageError(f"canal axis needs two points, got {ax.shape}")
            if np.allclose(ax[0], ax[1]):
                raise DegenerateInputError("canal axis points coincide")
            object.__setattr__(self, "canal_axis", ax)


def rotation_angle(canal_axis: np.ndarray) -> float:
    """Signed angle between the canal direction and the vertical axis,
    wrapped into (-pi/2, pi/2] (the canal is an undirected line)."""
    ax = np.asarray(canal_axis, dtype=np.float64)
    dx, dy = ax[1] - ax[0]
    if dx == 0.0 and dy == 0.0:
        raise DegenerateInputError("canal axis points coincide")
    a = math.atan2(dx, dy)
    while a > math.pi / 2:
        a -= math.pi
    while a <= -math.pi / 2:
        a += math.pi
    return a


def rotate_points(points: np.ndarray, angle: float,
                  center: np.ndarray | tuple[float, float]) -> np.ndarray:
    """Rigid rotation of (n, 2) points about ``center``."""
    pts = np.asarray(points, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64).reshape(2)
    ca, sa = math.cos(angle), math.sin(angle)
    rot = np.array([[ca, -sa], [sa, ca]])
    return (pts - c) @ rot.T + c


@dataclass(frozen=True)
class PolynomialCurve:
    """y = p(x) on a closed x-domain.

    ``coefficients`` are in the original x frame, highest degree first.
    Evaluation goes through the centered representation used during
    fitting (coefficients of u = (x - x_offset) / x_scale) because the
    raw high-degree coefficients are poorly conditioned at pixel scale.
    """
    degree: int
    coefficients: np.ndarray
    domain: tuple[float, float]
    x_offset: float = 0.0
    x_scale: float = 1.0
    centered_coefficients: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        co = np.asarray(self.coefficients, dtype=np.float64)
        if co.shape != (self.degree + 1,):
            raise UsageError(
                f"degree {self.degree} needs {self.degree + 1} coefficients,"
                f" got {co.shape}")
        object.__setattr__(self, "coefficients", co)
        if self.centered_coefficients is None:
            object.__setattr__(self, "centered_coefficients", co)
            object.__setattr__(self, "x_offset", 0.0)
            object.__setattr__(self, "x_scale", 1.0)

    def evaluate(self, x) -> np.ndarray:
        u = (np.asarray(x, dtype=np.float64) - self.x_offset) / self.x_scale
        return np.polyval(self.centered_coefficients, u)


def _substitute_linear(coeffs_u: np.ndarray, alpha: float,
                       beta: float) -> np.ndarray:
    """Coefficients of p(alpha*x + beta) given those of p(u), highest first."""
    deg = coeffs_u.size - 1
    out = np.zeros(deg + 1)
    power = np.array([1.0])  # (alpha*x + beta)^0
    for j in range(deg, -1, -1):  # term coeffs_u[j] * u^(deg-j)
        out[deg + 1 - power.size:] += coeffs_u[j] * power
        if j > 0:
            power = np.convolve(power, [alpha, beta])
    return out


def _solve_partial_pivot(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = gram.shape[0]
    a = np.hstack([gram, rhs[:, None]]).astype(np.float64)
    scale = max(1.0, float(np.abs(gram).max()))
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) < 1e-12 * scale:
            raise FittingError("normal equations are rank deficient")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
        a[col + 1:] -= np.outer(a[col + 1:, col] / a[col, col], a[col])
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (a[row, n] - a[row, row + 1:n] @ x[row + 1:]) / a[row, row]
    return x


def fit_polynomial(points: np.ndarray, degree: int = 2) -> PolynomialCurve:
    """Ordinary least squares fit of y = p(x) through the normal equations.

    Needs at least degree+1 points with degree+1 distinct x values. The
    degree-2 fit must have a nonzero leading coefficient (a parabola, not
    a line); exact degeneracy raises FittingError.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise UsageError(f"points must be (n, 2), got {pts.shape}")
    if degree < 1:
        raise UsageError(f"degree must be >= 1, got {degree}")
    n = pts.shape[0]
    if n < degree + 1:
        raise InsufficientDataError(
            f"{n} points cannot determine a degree-{degree} polynomial")
    x, y = pts[:, 0], pts[:, 1]
    if np.unique(x).size < degree + 1:
        raise FittingError(
            f"need {degree + 1} distinct x values, got {np.unique(x).size}")

    offset = float(x.mean())
    scale = float(np.abs(x - offset).max()) or 1.0
    u = (x - offset) / scale
    # powers[k] = sum of u^k, k = 0 .. 2*degree
    powers = np.array([np.sum(u ** k) for k in range(2 * degree + 1)])
    gram = np.empty((degree + 1, degree + 1))
    rhs = np.empty(degree + 1)
    for a_ix in range(degree + 1):
        for b_ix in range(degree + 1):
            gram[a_ix, b_ix] = powers[(degree - a_ix) + (degree - b_ix)]
        rhs[a_ix] = np.sum(u ** (degree - a_ix) * y)
    coeffs_u = _solve_partial_pivot(gram, rhs)
    coeffs_x = _substitute_linear(coeffs_u, 1.0 / scale, -offset / scale)
    if degree == 2 and coeffs_x[0] == 0.0:
        raise FittingError("degree-2 fit collapsed to a line (leading term 0)")
    return PolynomialCurve(degree, coeffs_x, (float(x.min()), float(x.max())),
                           offset, scale, coeffs_u)


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.where(v >= 0, np.floor(v + 0.5), np.ceil(v - 0.5)).astype(np.int64)


def rasterize(curve: PolynomialCurve, shape: tuple[int, int]) -> np.ndarray:
    """One-pixel-wide raster of the curve: for each integer x in the
    domain, the pixel (round(p(x)), x) inside an (H, W) image.

    Rounding is half-away-from-zero; out-of-bounds columns are skipped.
    Returns a uint8 {0,1} mask with exactly one pixel per in-bounds column.
    """
    h, w = shape
    mask = np.zeros((h, w), dtype=np.uint8)
    x0, x1 = curve.domain
    xs = np.arange(math.ceil(x0), math.floor(x1) + 1)
    if xs.size == 0:
        return mask
    ys = _round_half_away(curve.evaluate(xs))
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    mask[ys[ok], xs[ok]] = 1
    return mask


@dataclass(frozen=True)
class AnatomyFeature:
    """Binary (H, W) channel: the fitted boundary curve plus the apex pixel."""
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=np.uint8)
        if m.ndim != 2:
            raise DimensionError(f"mask must be 2-D, got {m.shape}")
        object.__setattr__(self, "mask", m)


def _prepare_fit(landmarks: LandmarkSet, degree: int):
    angle = (rotation_angle(landmarks.canal_axis)
             if landmarks.canal_axis is not None else 0.0)
    center = landmarks.boundary.mean(axis=0)
    rotated = rotate_points(landmarks.boundary, angle, center)
    if not np.all(np.diff(rotated[:, 0]) > 0):
        raise UsageError(
            "boundary x coordinates are not strictly increasing after"
            " rotation correction")
    return fit_polynomial(rotated, degree), angle, center


def fitted_pointset(landmarks: LandmarkSet, degree: int = 2,
                    step: float = 0.25) -> np.ndarray:
    """Dense samples of the fitted boundary, back in image coordinates."""
    curve, angle, center = _prepare_fit(landmarks, degree)
    samples = curve_to_pointset(curve, step)
    return rotate_points(samples, -angle, center)


def anatomy_feature(landmarks: LandmarkSet, shape: tuple[int, int],
                    degree: int = 2, step: float = 0.25):
    """Fit in the rotation-corrected frame and rasterize in image space.

    Curve samples are taken in the corrected frame, rotated back, and one
    pixel is kept per image column (the sample nearest the column center),
    so the drawn curve stays one pixel wide. Returns
    (AnatomyFeature, PolynomialCurve, rotation angle).
    """
    h, w = shape
    curve, angle, center = _prepare_fit(landmarks, degree)
    pts = rotate_points(curve_to_pointset(curve, step), -angle, center)
    cols = _round_half_away(pts[:, 0])
    offsets = np.abs(pts[:, 0] - cols)
    mask = np.zeros((h, w), dtype=np.uint8)
    best: dict[int, tuple[float, float]] = {}
    for col, off, y in zip(cols, offsets, pts[:, 1]):
        c = int(col)
        if 0 <= c < w and (c not in best or off < best[c][0]):
            best[c] = (float(off), float(y))
    for c, (_, y) in best.items():
        r = int(_round_half_away(np.array([y]))[0])
        if 0 <= r < h:
            mask[r, c] = 1
    ax, ay = _round_half_away(landmarks.gutta_apex)
    if 0 <= ay < h and 0 <= ax < w:
        mask[ay, ax] = 1
    return AnatomyFeature(mask), curve, angle


def curve_to_pointset(curve: PolynomialCurve, step: float) -> np.ndarray:
    """Samples (x, p(x)) over the domain at the given x step."""
    if step <= 0:
        raise UsageError(f"step must be positive, got {step}")
    x0, x1 = curve.domain
    xs = np.arange(x0, x1 + step / 2, step)
    return np.column_stack([xs, curve.evaluate(xs)])


def compose_input(image, feature, mode: str = "combined") -> Tensor:
    """Stack the image and/or the anatomy channel per the input mode."""
    img = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    mask = feature.mask if isinstance(feature, AnatomyFeature) else np.asarray(feature)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"image must be (3, H, W), got {img.shape}")
    if mask.shape != img.shape[1:]:
        raise DimensionError(
            f"mask {mask.shape} does not match image {img.shape[1:]}")
    if mode == "image":
        return Tensor(img)
    if mode == "anatomy":
        return Tensor(mask[None, :, :].astype(np.float64))
    if mode == "combined":
        return Tensor(np.concatenate([img, mask[None].astype(np.float64)]))
    raise UsageError(f"mode must be image, anatomy or combined, got {mode!r}")


# ----------------------------------------------------------------- file I/O

def read_landmarks_csv(path) -> LandmarkSet:
    """Landmark file: one ``x,y`` per line; lines 1-19 the boundary left to
    right, line 20 the filling apex, optional lines 21-22 the canal axis.
    Lines starting with ``#`` are comments."""
    pts = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise UsageError(f"{path}: line {lineno}: expected 'x,y', got {raw!r}")
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise UsageError(
                    f"{path}: line {lineno}: non-numeric coordinate in {raw!r}")
    if len(pts) not in (BOUNDARY_POINTS + 1, BOUNDARY_POINTS + 3):
        raise UsageError(
            f"{path}: expected {BOUNDARY_POINTS} boundary points + apex"
            f" (+ optional 2 canal-axis points), got {len(pts)} points")
    arr = np.array(pts)
    axis = arr[20:22] if len(pts) == BOUNDARY_POINTS + 3 else None
    return LandmarkSet(arr[:BOUNDARY_POINTS], arr[BOUNDARY_POINTS], axis)


def write_pgm(mask: np.ndarray, path) -> None:
    """Plain-text PGM (P2) with set pixels at 255."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise DimensionError(f"mask must be 2-D, got {m.shape}")
    h, w = m.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{w} {h}\n255\n")
        for row in m:
            fh.write(" ".join("255" if v else "0" for v in row) + "\n")


def curve_to_json(curve: PolynomialCurve, angle: float) -> str:
    return json.dumps({
        "degree": curve.degree,
        "coefficients": [float(c) for c in curve.coefficients],
        "domain": [float(curve.domain[0]), float(curve.domain[1])],
        "rotation_angle": float(angle),
        "x_offset": float(curve.x_offset),
        "x_scale": float(curve.x_scale),
    }, indent=2)
