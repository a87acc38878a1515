"""Data ingestion and the synthetic two-sample scenarios."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from PIL import Image, ImageDraw
from scipy import ndimage

from src.core.errors import DataError

logger = logging.getLogger(__name__)

Column = Union[str, int]


@dataclass(frozen=True)
class LabeledSample:
    """Pooled observations with binary group indicators (1 = first sample)."""

    points: NDArray[np.float64]
    labels: NDArray[np.int8]

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        labels = np.asarray(self.labels)
        if points.ndim != 2:
            raise DataError("points must be an n x D matrix")
        if labels.shape != (points.shape[0],):
            raise DataError(
                f"{labels.shape[0] if labels.ndim else 0} labels for {points.shape[0]} points"
            )
        if not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if not np.isfinite(points).all():
            raise DataError("all coordinates must be finite")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels.astype(np.int8))
        if self.n1 < 1 or self.n0 < 1:
            raise DataError("both groups need at least one observation")

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def n1(self) -> int:
        return int(self.labels.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def to_frame(self, label_name: str = "group") -> pd.DataFrame:
        """Features x1..xD followed by the label column."""
        frame = pd.DataFrame(self.points, columns=[f"x{j + 1}" for j in range(self.dim)])
        frame[label_name] = self.labels.astype(int)
        return frame


def _stack(first: NDArray[np.float64], second: NDArray[np.float64]) -> LabeledSample:
    labels = np.concatenate([np.ones(len(first), np.int8), np.zeros(len(second), np.int8)])
    return LabeledSample(np.vstack([first, second]), labels)


# CSV ingestion / export

def _resolve_column(frame: pd.DataFrame, column: Column) -> str:
    if column in frame.columns:
        return str(column)
    try:
        index = int(column)
    except (TypeError, ValueError):
        raise DataError(f"label column '{column}' not found")
    if not -len(frame.columns) <= index < len(frame.columns):
        raise DataError(f"label column index {index} out of range")
    return str(frame.columns[index])


def _numeric_matrix(frame: pd.DataFrame) -> NDArray[np.float64]:
    coerced = frame.apply(pd.to_numeric, errors="coerce")
    bad = coerced.isna().to_numpy() | ~np.isfinite(coerced.to_numpy(dtype=np.float64))
    if bad.any():
        row, col = map(int, np.argwhere(bad)[0])
        raise DataError(
            f"non-numeric or missing value at row {row + 1}, column '{frame.columns[col]}': "
            f"{frame.iat[row, col]!r}"
        )
    return coerced.to_numpy(dtype=np.float64)


def _read_frame(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, comment="#", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse {path}: {e}")
    if frame.empty:
        raise DataError(f"{path} has no data rows")
    return frame


def load_csv(
    path: Union[str, Path],
    label_column: Column,
    positive_label: Optional[str] = None,
) -> LabeledSample:
    """
    Load a labeled two-sample CSV (header row, one row per observation).

    Label 1 goes to the lexicographically smaller label value unless
    `positive_label` names the value that should be group 1.
    """
    frame = _read_frame(path)
    column = _resolve_column(frame, label_column)
    raw = frame[column].astype(str).str.strip()
    groups = sorted(raw.unique())
    if len(groups) > 2:
        raise DataError(f"more than two groups in column '{column}': {groups[:5]}")
    if len(groups) < 2:
        raise DataError(f"column '{column}' holds a single group")
    positive = groups[0] if positive_label is None else str(positive_label)
    if positive not in groups:
        raise DataError(f"label value '{positive}' not present in column '{column}'")

    points = _numeric_matrix(frame.drop(columns=[column]))
    labels = (raw == positive).to_numpy().astype(np.int8)
    for value, count in ((positive, int(labels.sum())), ("other", int((labels == 0).sum()))):
        if count < 2:
            raise DataError(f"group '{value}' has fewer than 2 rows")
    logger.info("loaded %s: n=%d D=%d", path, len(labels), points.shape[1])
    return LabeledSample(points, labels)


def load_points_csv(
    path: Union[str, Path],
    drop_columns: Iterable[Column] = (),
) -> NDArray[np.float64]:
    """Load an unlabeled feature matrix, dropping the named columns."""
    frame = _read_frame(path)
    drop = [_resolve_column(frame, c) for c in drop_columns]
    return _numeric_matrix(frame.drop(columns=drop))


def read_provenance(path: Union[str, Path]) -> Dict[str, str]:
    """Parse the leading `# key: value` comment lines of an output file."""
    header: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
    return header


def write_csv(frame: pd.DataFrame, path: Union[str, Path], header: Dict[str, str]) -> Path:
    """Write a CSV preceded by provenance comment lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, value in header.items():
            f.write(f"# {key}: {value}\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    return path


# Gaussian scenarios

def _check_sizes(n1: int, n0: int, d: int) -> None:
    if n1 < 1 or n0 < 1:
        raise DataError("n1 and n0 must be at least 1")
    if d < 1:
        raise DataError("dimension must be at least 1")


def gen_gaussian_null(n1: int, n0: int, d: int, seed: int) -> LabeledSample:
    """Both groups i.i.d. MVN(0, I_d)."""
    _check_sizes(n1, n0, d)
    rng = np.random.default_rng(seed)
    return _stack(rng.standard_normal((n1, d)), rng.standard_normal((n0, d)))


def uniform_on_sphere(d: int, radius: float, rng: np.random.Generator) -> NDArray[np.float64]:
    """One point uniform on the sphere of the given radius in R^d."""
    while True:
        v = rng.standard_normal(d)
        norm = float(np.linalg.norm(v))
        if norm > 0.0:
            return radius * v / norm


def gen_gaussian_location(
    n1: int, n0: int, d: int, radius: float, seed: int
) -> LabeledSample:
    """Group 1 ~ MVN(0, I); group 0 ~ MVN(delta, I) with |delta| = radius, delta uniform."""
    _check_sizes(n1, n0, d)
    if radius <= 0:
        raise DataError("radius must be positive")
    rng = np.random.default_rng(seed)
    first = rng.standard_normal((n1, d))
    shift = uniform_on_sphere(d, radius, rng)
    second = rng.standard_normal((n0, d)) + shift
    return _stack(first, second)


def gen_gaussian_direction(
    n1: int, n0: int, d: int, scale: float, seed: int
) -> LabeledSample:
    """Zero-mean groups whose high-variance block sits on opposite halves of the axes."""
    _check_sizes(n1, n0, d)
    if d % 2:
        raise DataError("direction scenario needs an even dimension")
    if scale <= 0:
        raise DataError("scale must be positive")
    rng = np.random.default_rng(seed)
    half = d // 2
    sd_first = np.concatenate([np.full(half, scale), np.ones(half)])
    sd_second = sd_first[::-1].copy()
    first = rng.standard_normal((n1, d)) * sd_first
    second = rng.standard_normal((n0, d)) * sd_second
    return _stack(first, second)


def default_radius(d: int) -> float:
    """Location shift radius used for dimension d (0.8 up to d=20, else 1)."""
    return 0.8 if d <= 20 else 1.0


# Resampled pools

def gen_resample_null(
    pool: NDArray[np.float64], n1: int, n0: int, seed: int
) -> LabeledSample:
    """Draw n1 + n0 distinct pool rows; the first n1 drawn form group 1."""
    pool = np.asarray(pool, dtype=np.float64)
    if n1 < 1 or n0 < 1:
        raise DataError("n1 and n0 must be at least 1")
    if n1 + n0 > len(pool):
        raise DataError(f"pool has {len(pool)} rows, need {n1 + n0}")
    rng = np.random.default_rng(seed)
    rows = rng.choice(len(pool), size=n1 + n0, replace=False)
    return _stack(pool[rows[:n1]], pool[rows[n1:]])


def gen_resample_threshold(
    pool: NDArray[np.float64],
    covariate: NDArray[np.float64],
    threshold: float,
    n1: int,
    n0: int,
    seed: int,
) -> LabeledSample:
    """Group 1 from rows with covariate <= threshold, group 0 from the rest."""
    pool = np.asarray(pool, dtype=np.float64)
    covariate = np.asarray(covariate, dtype=np.float64)
    if covariate.shape != (len(pool),):
        raise DataError("covariate length must match the pool")
    low = np.flatnonzero(covariate <= threshold)
    high = np.flatnonzero(covariate > threshold)
    if len(low) < n1 or len(high) < n0:
        raise DataError(
            f"threshold {threshold} leaves {len(low)}/{len(high)} rows, need {n1}/{n0}"
        )
    rng = np.random.default_rng(seed)
    first = pool[rng.choice(low, size=n1, replace=False)]
    second = pool[rng.choice(high, size=n0, replace=False)]
    return _stack(first, second)


def jitter(
    points: NDArray[np.float64], seed: int, relative: float = 1e-9
) -> NDArray[np.float64]:
    """Perturb coordinates by Gaussian noise of sd relative * max|coordinate|."""
    points = np.asarray(points, dtype=np.float64)
    scale = float(np.max(np.abs(points))) if points.size else 0.0
    sd = relative * (scale if scale > 0 else 1.0)
    rng = np.random.default_rng(seed)
    return points + sd * rng.standard_normal(points.shape)


# Image manifold

class ImageScenario(Enum):
    """Distortion parameter domains for the image-manifold scenarios."""
    NULL = "null"
    LOCATION = "location"
    DIRECTION = "direction"


# (theta_low, theta_high, disk_center_h, disk_center_v, disk_radius) per (scenario, group)
_DOMAINS: Dict[Tuple[ImageScenario, int], Tuple[float, float, float, float, float]] = {
    (ImageScenario.NULL, 1): (-math.pi / 8, math.pi / 8, 0.0, 0.0, 2.0),
    (ImageScenario.NULL, 0): (-math.pi / 8, math.pi / 8, 0.0, 0.0, 2.0),
    (ImageScenario.LOCATION, 1): (-19 * math.pi / 160, 21 * math.pi / 160, 0.05, 0.05, 2.0),
    (ImageScenario.LOCATION, 0): (-21 * math.pi / 160, 19 * math.pi / 160, -0.05, -0.05, 2.0),
    (ImageScenario.DIRECTION, 1): (-19 * math.pi / 160, 19 * math.pi / 160, 0.0, 0.0, 2.0 * 1.05),
    (ImageScenario.DIRECTION, 0): (-21 * math.pi / 160, 21 * math.pi / 160, 0.0, 0.0, 2.0 * 0.95),
}


@dataclass(frozen=True)
class ImageTemplate:
    """Gray-value image plus the zero padding added on every side."""

    pixels: NDArray[np.float64]
    pad: int = 6

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or pixels.size == 0:
            raise DataError("template must be a non-empty H x W grid")
        if pixels.min() < 0 or pixels.max() > 255:
            raise DataError("template gray values must lie in [0, 255]")
        if self.pad < 0:
            raise DataError("padding must be nonnegative")
        object.__setattr__(self, "pixels", pixels)

    @property
    def padded(self) -> NDArray[np.float64]:
        return np.pad(self.pixels, self.pad, mode="constant", constant_values=0.0)

    @property
    def dim(self) -> int:
        h, w = self.padded.shape
        return h * w

    @classmethod
    def from_file(cls, path: Union[str, Path], pad: int = 6) -> "ImageTemplate":
        """Read a PGM/PNG image or a headerless CSV grid of gray values."""
        path = Path(path)
        if not path.exists():
            raise DataError(f"template not found: {path}")
        if path.suffix.lower() == ".csv":
            grid = pd.read_csv(path, header=None, comment="#")
            return cls(_numeric_matrix(grid), pad)
        with Image.open(path) as img:
            return cls(np.asarray(img.convert("L"), dtype=np.float64), pad)

    @classmethod
    def default_digit(cls, pad: int = 6) -> "ImageTemplate":
        """A 28x28 handwritten-style digit three drawn with two strokes."""
        img = Image.new("L", (28, 28), 0)
        draw = ImageDraw.Draw(img)
        draw.arc((7, 3, 20, 14), start=190, end=90, fill=255, width=3)
        draw.arc((7, 13, 21, 25), start=270, end=170, fill=255, width=3)
        return cls(np.asarray(img, dtype=np.float64), pad)


def distort_image(
    padded: NDArray[np.float64], theta: float, h: float, v: float
) -> NDArray[np.float64]:
    """
    Rotate by theta about the image center and shift by (h, v).

    Pixel centers carry Cartesian coordinates (xi to the right, eta upward);
    gray values are resampled bilinearly with zeros outside the canvas and
    rounded to integers in [0, 255].
    """
    rows, cols = padded.shape
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    r, c = np.mgrid[0:rows, 0:cols].astype(np.float64)
    x = c - cx - h
    y = cy - r - v
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    xi = cos_t * x + sin_t * y
    eta = -sin_t * x + cos_t * y
    source = np.array([cy - eta, xi + cx])
    values = ndimage.map_coordinates(padded, source, order=1, mode="constant", cval=0.0)
    return np.clip(np.rint(values), 0, 255)


def sample_distortions(
    scenario: ImageScenario, group: int, count: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    """Uniform (theta, h, v) draws from the scenario/group domain."""
    if group not in (0, 1):
        raise DataError("group must be 0 or 1")
    low, high, ch, cv, radius = _DOMAINS[(scenario, group)]
    theta = rng.uniform(low, high, size=count)
    shifts = np.empty((0, 2))
    while len(shifts) < count:
        batch = rng.uniform(-radius, radius, size=(2 * (count - len(shifts)) + 4, 2))
        batch = batch[(batch ** 2).sum(axis=1) <= radius ** 2]
        shifts = np.vstack([shifts, batch])
    shifts = shifts[:count] + (ch, cv)
    return np.column_stack([theta, shifts])


def gen_image_manifold(
    template: ImageTemplate,
    scenario: ImageScenario,
    group: int,
    count: int,
    seed: int,
) -> NDArray[np.float64]:
    """`count` distorted copies of the padded template, flattened row-major."""
    if count < 1:
        raise DataError("count must be at least 1")
    rng = np.random.default_rng(seed)
    params = sample_distortions(scenario, group, count, rng)
    padded = template.padded
    out = np.empty((count, padded.size))
    for row, (theta, h, v) in enumerate(params):
        out[row] = distort_image(padded, theta, h, v).ravel()
    return out


def gen_image_sample(
    template: ImageTemplate, scenario: ImageScenario, n1: int, n0: int, seed: int
) -> LabeledSample:
    """Both groups of an image-manifold scenario from one seed."""
    first_seed, second_seed = np.random.SeedSequence(seed).spawn(2)
    first = gen_image_manifold(
        template, scenario, 1, n1, int(first_seed.generate_state(1)[0])
    )
    second = gen_image_manifold(
        template, scenario, 0, n0, int(second_seed.generate_state(1)[0])
    )
    return _stack(first, second)
