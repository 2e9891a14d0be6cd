"""Visual feature extraction and drawing/symbolic-image detection.

Features per image: pixel dimensions, grayscale-histogram entropy and
energy, intensity skewness, an optional document-skew angle from
projection profiles, and three drawing-detection features (distinct
color ratio, edge density, mean saturation).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DegenerateImage, InvalidInput

SUPPORTED_FORMATS = ("PNG", "JPEG", "GIF", "BMP")

# Number of voting rules in classify_symbolic; used to normalize the score.
SYMBOLIC_RULE_COUNT = 5

EDGE_THRESHOLD = 16.0 / 255.0


def decode_image(blob: bytes) -> np.ndarray:
    """Decode PNG/JPEG/GIF(first frame)/BMP bytes to an RGB uint8 array (H, W, 3)."""
    try:
        img = Image.open(io.BytesIO(blob))
        fmt = img.format
        if fmt not in SUPPORTED_FORMATS:
            raise DecodeError(f"unsupported image format {fmt!r}")
        rgb = img.convert("RGB")
    except UnidentifiedImageError as exc:
        raise DecodeError(f"not a decodable image: {exc}") from exc
    except (OSError, ValueError) as exc:
        raise DecodeError(f"image decode failed: {exc}") from exc
    arr = np.asarray(rgb, dtype=np.uint8)
    if arr.size == 0:
        raise DecodeError("image has no pixels")
    return arr


def grayscale(pixels: np.ndarray) -> np.ndarray:
    """Luma grayscale 0.299R + 0.587G + 0.114B, rounded half-up, clipped to [0, 255]."""
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        return arr.astype(np.uint8)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise InvalidInput(f"expected (H, W) or (H, W, 3) pixels, got shape {arr.shape}")
    rgb = arr.astype(np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def grayscale_histogram(pixels: np.ndarray) -> np.ndarray:
    """256-bin probability histogram over grayscale intensity."""
    gray = grayscale(pixels)
    if gray.size == 0:
        raise DegenerateImage("zero-pixel image")
    counts = np.bincount(gray.ravel(), minlength=256)
    return counts / gray.size


def _check_histogram(hist) -> np.ndarray:
    h = np.asarray(hist, dtype=np.float64)
    if h.shape != (256,) or np.any(h < 0) or abs(h.sum() - 1.0) > 1e-6:
        raise InvalidInput("not a valid 256-bin probability histogram")
    return h


def entropy(hist) -> float:
    """Shannon entropy in bits, -sum p*log2(p) with 0*log(0) = 0. Range [0, 8]."""
    h = _check_histogram(hist)
    p = h[h > 0]
    return float(-(p * np.log2(p)).sum() + 0.0)  # + 0.0 normalizes -0.0


def energy(hist) -> float:
    """Histogram energy sum p^2. 1 for a single intensity, 1/256 for uniform."""
    h = _check_histogram(hist)
    return float((h * h).sum())


def skewness(pixels) -> float:
    """Third standardized moment of intensity, population moments; 0 when flat."""
    arr = np.asarray(pixels)
    if arr.ndim == 3:
        arr = grayscale(arr)
    values = arr.astype(np.float64).ravel()
    if values.size == 0:
        raise DegenerateImage("zero-pixel image")
    mean = values.mean()
    centered = values - mean
    var = (centered * centered).mean()
    if var <= 0.0:
        return 0.0
    m3 = (centered ** 3).mean()
    return float(m3 / var ** 1.5)


def otsu_threshold(gray: np.ndarray) -> int | None:
    """Otsu's threshold on a uint8 image; None when no split exists."""
    counts = np.bincount(np.asarray(gray, dtype=np.uint8).ravel(), minlength=256).astype(np.float64)
    total = counts.sum()
    sum_all = float((np.arange(256) * counts).sum())
    w_b = 0.0
    sum_b = 0.0
    best = -1.0
    best_t = None
    for t in range(256):
        w_b += counts[t]
        if w_b == 0:
            continue
        w_f = total - w_b
        if w_f == 0:
            break
        sum_b += t * counts[t]
        mean_b = sum_b / w_b
        mean_f = (sum_all - sum_b) / w_f
        between = w_b * w_f * (mean_b - mean_f) ** 2
        if between > best:
            best = between
            best_t = t
    return best_t


@lru_cache(maxsize=256)
def _rotation_index(height: int, width: int, angle_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbor source indices for rotating an (H, W) image about its center.

    Returns (flat source index, validity mask), both flattened over the
    output grid. Cached: the skew search reuses the same grid for every
    image of a given shape.
    """
    cy = (height - 1) / 2.0
    cx = (width - 1) / 2.0
    rad = np.deg2rad(angle_deg)
    cos, sin = np.cos(rad), np.sin(rad)
    yy, xx = np.indices((height, width), dtype=np.float64)
    dy = yy - cy
    dx = xx - cx
    src_y = np.rint(cos * dy - sin * dx + cy).astype(np.int64)
    src_x = np.rint(sin * dy + cos * dx + cx).astype(np.int64)
    valid = (src_y >= 0) & (src_y < height) & (src_x >= 0) & (src_x < width)
    src_y = np.clip(src_y, 0, height - 1)
    src_x = np.clip(src_x, 0, width - 1)
    return (src_y * width + src_x).ravel(), valid.ravel()


def rotate_nn(arr: np.ndarray, angle_deg: float, fill=0) -> np.ndarray:
    """Rotate a 2-D array about its center by nearest-neighbor resampling.

    Positive angles turn content counter-clockwise on screen (y axis
    pointing down); the output keeps the input shape, padding with fill.
    """
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise InvalidInput("rotate_nn expects a 2-D array")
    idx, valid = _rotation_index(arr.shape[0], arr.shape[1], float(angle_deg))
    out = arr.ravel()[idx]
    out[~valid] = fill
    return out.reshape(arr.shape)


def _profile_variances(ink: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Row-rate variance of the un-rotated ink mask, for every candidate angle.

    Rows are normalized by how many of their pixels fall inside the
    rotated frame; rows mostly outside would only add fill noise. All
    angles are evaluated in one vectorized pass.
    """
    height, width = ink.shape
    cy = (height - 1) / 2.0
    cx = (width - 1) / 2.0
    yy, xx = np.indices((height, width), dtype=np.float32)
    dy = (yy - cy).ravel()
    dx = (xx - cx).ravel()
    rad = np.deg2rad(-angles.astype(np.float32))[:, None]
    cos, sin = np.cos(rad), np.sin(rad)
    src_y = np.rint(cos * dy - sin * dx + cy).astype(np.int32)
    src_x = np.rint(sin * dy + cos * dx + cx).astype(np.int32)
    valid = (src_y >= 0) & (src_y < height) & (src_x >= 0) & (src_x < width)
    np.clip(src_y, 0, height - 1, out=src_y)
    np.clip(src_x, 0, width - 1, out=src_x)
    sampled = ink.ravel()[src_y * width + src_x] & valid

    coverage = valid.reshape(-1, height, width).sum(axis=2)
    sums = sampled.reshape(-1, height, width).sum(axis=2)
    variances = np.zeros(len(angles))
    usable = coverage >= width * 0.5
    for i in range(len(angles)):
        rows = usable[i]
        if rows.sum() >= 2:
            rates = sums[i, rows] / coverage[i, rows]
            variances[i] = rates.var()
    return variances


def text_skew_angle(pixels, max_angle: float = 10.0, step: float = 0.5) -> float | None:
    """Document skew estimate from horizontal projection profiles.

    Binarizes with Otsu, rotates the ink mask through [-max_angle,
    +max_angle] (nearest neighbor) and returns the angle whose
    un-rotation maximizes the variance of row sums. Returns None when
    the image shows no line structure: no usable ink, or no angle beats
    both 1.1x the median variance across candidates and the sampling
    variance of a structureless mask.
    """
    gray = grayscale(np.asarray(pixels))
    if gray.size == 0:
        raise DegenerateImage("zero-pixel image")
    threshold = otsu_threshold(gray)
    if threshold is None:
        return None
    ink = (gray <= threshold)
    frac = ink.mean()
    if frac < 0.002 or frac > 0.998:
        return None
    height, width = ink.shape
    angles = np.arange(-max_angle, max_angle + step / 2.0, step)
    variances = _profile_variances(ink, angles)
    best_i = int(np.argmax(variances))
    best = variances[best_i]
    sampling_floor = 4.0 * frac * (1.0 - frac) / width
    if best <= 0.0 or best < 1.1 * float(np.median(variances)) or best < sampling_floor:
        return None
    return float(angles[best_i])


def drawing_features(pixels) -> tuple[float, float, float]:
    """(distinct_color_ratio, edge_density, saturation_mean) for drawing detection.

    Colors are quantized to 4 bits per channel before counting; the edge
    test thresholds the central-difference gradient magnitude of the
    normalized grayscale at 16/255.
    """
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = np.stack([arr, arr, arr], axis=-1)
    if arr.size == 0:
        raise DegenerateImage("zero-pixel image")
    quant = (arr[..., :3].astype(np.uint16) >> 4)
    codes = (quant[..., 0] << 8) | (quant[..., 1] << 4) | quant[..., 2]
    npix = codes.size
    distinct_color_ratio = float(np.unique(codes).size) / npix

    gray = grayscale(arr).astype(np.float64) / 255.0
    if gray.shape[0] < 2 or gray.shape[1] < 2:
        edge_density = 0.0
    else:
        gy, gx = np.gradient(gray)
        edge_density = float((np.hypot(gx, gy) > EDGE_THRESHOLD).mean())

    channels = arr[..., :3].astype(np.float64)
    maxc = channels.max(axis=-1)
    minc = channels.min(axis=-1)
    sat = np.where(maxc > 0, (maxc - minc) / np.maximum(maxc, 1e-12), 0.0)
    saturation_mean = float(sat.mean())
    return distinct_color_ratio, edge_density, saturation_mean


@dataclass(frozen=True)
class VisualFeatures:
    width: int
    height: int
    size: int
    entropy: float
    energy: float
    skewness: float
    text_skew_deg: float | None
    distinct_color_ratio: float
    edge_density: float
    saturation_mean: float

    def to_dict(self) -> dict:
        def sig9(x):
            return None if x is None else float(f"{x:.9g}")

        return {
            "width": self.width,
            "height": self.height,
            "size": self.size,
            "entropy": sig9(self.entropy),
            "energy": sig9(self.energy),
            "skewness": sig9(self.skewness),
            "text_skew_deg": sig9(self.text_skew_deg),
            "distinct_color_ratio": sig9(self.distinct_color_ratio),
            "edge_density": sig9(self.edge_density),
            "saturation_mean": sig9(self.saturation_mean),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "VisualFeatures":
        return cls(
            width=int(obj["width"]),
            height=int(obj["height"]),
            size=int(obj["size"]),
            entropy=float(obj["entropy"]),
            energy=float(obj["energy"]),
            skewness=float(obj["skewness"]),
            text_skew_deg=None if obj.get("text_skew_deg") is None else float(obj["text_skew_deg"]),
            distinct_color_ratio=float(obj["distinct_color_ratio"]),
            edge_density=float(obj["edge_density"]),
            saturation_mean=float(obj["saturation_mean"]),
        )


def compute_features(pixels: np.ndarray) -> VisualFeatures:
    arr = np.asarray(pixels)
    height, width = arr.shape[:2]
    hist = grayscale_histogram(arr)
    dcr, edge, sat = drawing_features(arr)
    return VisualFeatures(
        width=width,
        height=height,
        size=width * height,
        entropy=entropy(hist),
        energy=energy(hist),
        skewness=skewness(arr),
        text_skew_deg=text_skew_angle(arr),
        distinct_color_ratio=dcr,
        edge_density=edge,
        saturation_mean=sat,
    )


@dataclass(frozen=True)
class SymbolicThresholds:
    entropy_below: float = 4.0
    distinct_color_ratio_below: float = 0.02
    edge_density_below: float = 0.02
    saturation_mean_below: float = 0.05
    min_votes: int = 2


@dataclass(frozen=True)
class NaturalnessVerdict:
    symbolic: bool
    score: float  # rule votes; higher = more drawing-like

    @property
    def normalized_score(self) -> float:
        return min(max(self.score / SYMBOLIC_RULE_COUNT, 0.0), 1.0)


def classify_symbolic(features: VisualFeatures, thresholds: SymbolicThresholds | None = None) -> NaturalnessVerdict:
    """Vote over drawing-indicator rules; symbolic once min_votes rules fire."""
    th = thresholds or SymbolicThresholds()
    votes = 0
    votes += features.entropy < th.entropy_below
    votes += features.distinct_color_ratio < th.distinct_color_ratio_below
    votes += features.edge_density < th.edge_density_below
    votes += features.saturation_mean < th.saturation_mean_below
    votes += features.text_skew_deg is not None
    return NaturalnessVerdict(symbolic=votes >= th.min_votes, score=float(votes))


# Ranking-feature composition used for prototypes and clustering.
PROTOTYPE_FEATURE_NAMES = ("width", "height", "size", "entropy", "energy", "skewness")


def prototype_vector(features: VisualFeatures) -> np.ndarray:
    """Raw (unstandardized) visual vector used for prototypes and clustering."""
    return np.array(
        [features.width, features.height, features.size,
         features.entropy, features.energy, features.skewness],
        dtype=np.float64,
    )


def sniff_content_type(blob: bytes) -> str:
    if blob.startswith(b"\x89PNG\r\n\x1a\n"):
        return "image/png"
    if blob.startswith(b"\xff\xd8"):
        return "image/jpeg"
    if blob[:6] in (b"GIF87a", b"GIF89a"):
        return "image/gif"
    if blob.startswith(b"BM"):
        return "image/bmp"
    return "application/octet-stream"
