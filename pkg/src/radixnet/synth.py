"""Seeded synthetic data so every test and CLI command runs with zero
external inputs: noisy-parabola landmark cases with known ground truth,
and random prediction tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvefit import BOUNDARY_POINTS, LandmarkSet, rotate_points

__all__ = ["SyntheticCase", "synthetic_landmark_case", "synthetic_corpus",
           "write_landmarks_csv", "random_predictions",
           "write_predictions_csv", "write_pointset_csv"]


@dataclass(frozen=True)
class SyntheticCase:
    """One generated case: landmarks in image space, the dense true
    boundary in image space, the canonical-frame truth, and the noise
    actually applied."""
    landmarks: LandmarkSet
    true_points: np.ndarray
    true_coefficients: np.ndarray   # canonical frame, highest first
    angle: float
    noise: float


def synthetic_landmark_case(rng: np.random.Generator, size: int = 128,
                            noise: float = 1.5,
                            max_angle: float = 0.15) -> SyntheticCase:
    """A quadratic boundary with jittered landmarks, rotated so the canal
    axis sits at a random angle to the vertical."""
    a = rng.uniform(0.004, 0.012)
    cx = size / 2 + rng.uniform(-8, 8)
    cy = 0.65 * size + rng.uniform(-8, 8)
    coeffs = np.array([a, -2 * a * cx, a * cx * cx + cy])  # a(x-cx)^2 + cy

    half_span = 0.4 * size
    xs = np.linspace(cx - half_span, cx + half_span, BOUNDARY_POINTS)
    xs = xs + rng.uniform(-0.25, 0.25, BOUNDARY_POINTS) * (xs[1] - xs[0])
    ys = np.polyval(coeffs, xs) + rng.normal(0.0, noise, BOUNDARY_POINTS)
    boundary = np.column_stack([xs, ys])

    apex = np.array([cx + rng.uniform(-3, 3), cy - rng.uniform(10, 20)])
    axis = np.array([[cx, cy - 30.0], [cx, cy - 5.0]])

    dense_x = np.arange(xs.min(), xs.max() + 0.125, 0.25)
    true_pts = np.column_stack([dense_x, np.polyval(coeffs, dense_x)])

    angle = rng.uniform(-max_angle, max_angle)
    center = boundary.mean(axis=0)
    landmarks = LandmarkSet(
        rotate_points(boundary, -angle, center),
        rotate_points(apex[None], -angle, center)[0],
        rotate_points(axis, -angle, center))
    return SyntheticCase(landmarks, rotate_points(true_pts, -angle, center),
                         coeffs, angle, noise)


def synthetic_corpus(n: int = 100, seed: int = 42, size: int = 128,
                     noise: float = 1.5) -> list[SyntheticCase]:
    rng = np.random.default_rng(seed)
    return [synthetic_landmark_case(rng, size=size, noise=noise)
            for _ in range(n)]


def write_landmarks_csv(path, landmarks: LandmarkSet) -> None:
    with open(path, "w") as fh:
        fh.write("# boundary points 1-19 left to right, then apex,"
                 " then canal axis\n")
        for x, y in landmarks.boundary:
            fh.write(f"{float(x)!r},{float(y)!r}\n")
        fh.write(f"{float(landmarks.gutta_apex[0])!r},"
                 f"{float(landmarks.gutta_apex[1])!r}\n")
        if landmarks.canal_axis is not None:
            for x, y in landmarks.canal_axis:
                fh.write(f"{float(x)!r},{float(y)!r}\n")


def write_pointset_csv(path, points: np.ndarray) -> None:
    with open(path, "w") as fh:
        for x, y in np.asarray(points, dtype=np.float64):
            fh.write(f"{float(x)!r},{float(y)!r}\n")


def random_predictions(rng: np.random.Generator, n: int, classes: int = 3,
                       accuracy: float = 0.8):
    """Labels, predictions hitting the truth with the given probability,
    and scores correlated with the predictions."""
    y_true = rng.integers(0, classes, n)
    y_pred = y_true.copy()
    wrong = rng.random(n) >= accuracy
    offsets = rng.integers(1, classes, n)
    y_pred[wrong] = (y_true[wrong] + offsets[wrong]) % classes
    scores = rng.uniform(0.0, 1.0, (n, classes))
    scores[np.arange(n), y_pred] += rng.uniform(0.5, 1.5, n)
    return y_true, y_pred, scores


def write_predictions_csv(path, y_true, y_pred, scores) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    k = scores.shape[1]
    with open(path, "w") as fh:
        fh.write("true_label,pred_label," +
                 ",".join(f"score_{i}" for i in range(k)) + "\n")
        for t, p, row in zip(y_true, y_pred, scores):
            fh.write(f"{int(t)},{int(p)}," + ",".join(repr(float(v)) for v in row) + "\n")
