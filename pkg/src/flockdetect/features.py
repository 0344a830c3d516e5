"""Pairwise feature extraction and per-column scaling.

Each pair of aligned length-L blocks becomes an L x 6 matrix with columns

    0 interDistance        planar Euclidean distance [mm]
    1 timeDifference       |timestamp delta| [ms]
    2 velocityDifference   |speed delta| [mm/s]
    3 motionAngleDifference circular distance [rad], in [0, pi]
    4 faceAngleDifference   circular distance [rad], in [0, pi]
    5 dtwValues            trajectory-shape similarity (DTW cost)

Columns are normalized with per-column scalers fitted on the training split
only: robust (median/IQR) for 0, minmax for 1, standard (mean/std) for 2-5.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import TrajectoryPoint
from .errors import CannotFit, InvalidInput

N_FEATURES = 6
FEATURE_NAMES = (
    "interDistance", "timeDifference", "velocityDifference",
    "motionAngleDifference", "faceAngleDifference", "dtwValues",
)
COLUMN_SCALERS = ("robust", "minmax", "standard", "standard", "standard", "standard")
DTW_MODES = ("full_broadcast", "prefix")

SCALER_STATE_VERSION = 1


@dataclass(frozen=True)
class PairSample:
    """Feature matrix and label for one agent pair."""

    agent_a: int
    agent_b: int
    features: np.ndarray  # (L, 6) float64
    label: int
    scaled: bool = False

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", feats)
        if feats.ndim != 2 or feats.shape[1] != N_FEATURES:
            raise ValueError(f"features must be (L, {N_FEATURES}), got {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite entries")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if not self.scaled:
            if feats[:, [0, 1, 2, 5]].min(initial=0.0) < 0:
                raise ValueError("distance/difference columns must be non-negative")
            angle_cols = feats[:, 3:5]
            if angle_cols.min(initial=0.0) < 0 or angle_cols.max(initial=0.0) > math.pi + 1e-12:
                raise ValueError("angle-difference columns must lie in [0, pi]")

    @property
    def sequence_length(self) -> int:
        return self.features.shape[0]


def inter_distance(p: TrajectoryPoint, q: TrajectoryPoint) -> float:
    """Planar Euclidean distance between two records, in mm."""
    return math.hypot(p.x_mm - q.x_mm, p.y_mm - q.y_mm)


def scalar_abs_diffs(p: TrajectoryPoint, q: TrajectoryPoint) -> tuple[float, float, float, float]:
    """(|dt| ms, |dv| mm/s, motion-angle distance, face-angle distance).

    Angle differences are circular: 3.0 rad vs -3.0 rad differ by ~0.283,
    not 6.0.
    """
    dt = float(abs(p.timestamp_ms - q.timestamp_ms))
    dv = abs(p.velocity_mm_s - q.velocity_mm_s)
    dmotion = _circular_distance(p.motion_angle_rad, q.motion_angle_rad)
    dface = _circular_distance(p.face_angle_rad, q.face_angle_rad)
    return dt, dv, dmotion, dface


def _circular_distance(a: float, b: float) -> float:
    d = abs(a - b) % (2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


def _as_xy(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise InvalidInput(f"expected a non-empty sequence of (x, y) points, got shape {arr.shape}")
    return arr


def _local_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def _accumulated_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full DTW cumulative-cost matrix, boundary matched, steps right/down/diag."""
    cost = _local_cost(a, b)
    n, m = cost.shape
    acc = np.empty((n, m))
    acc[0, 0] = cost[0, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
        row = acc[i]
        prev = acc[i - 1]
        ci = cost[i]
        for j in range(1, m):
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if row[j - 1] < best:
                best = row[j - 1]
            row[j] = ci[j] + best
    return acc


def dtw_distance(seq_a, seq_b) -> float:
    """Classic dynamic time warping with Euclidean local cost.

    Returns the unnormalized optimal cumulative cost over monotone,
    boundary-matched alignments.
    """
    a = _as_xy(seq_a)
    b = _as_xy(seq_b)
    return float(_accumulated_cost(a, b)[-1, -1])


def _dtw_path(acc: np.ndarray) -> list[tuple[int, int]]:
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            choices = (acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
            pick = int(np.argmin(choices))
            if pick == 0:
                i, j = i - 1, j - 1
            elif pick == 1:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return path


def _halve(arr: np.ndarray) -> np.ndarray:
    even = arr.shape[0] - arr.shape[0] % 2
    return (arr[0:even:2] + arr[1:even:2]) / 2.0


def _expand_window(path, n: int, m: int, radius: int) -> dict[int, tuple[int, int]]:
    """Project a coarse path to fine resolution and widen by radius.

    Returns per-row inclusive (j_lo, j_hi) column ranges.
    """
    coarse = set()
    for i, j in path:
        for di in range(-radius, radius + 1):
            for dj in range(-radius, radius + 1):
                coarse.add((i + di, j + dj))
    lo = [m] * n
    hi = [-1] * n
    for ci, cj in coarse:
        for fi in (2 * ci, 2 * ci + 1):
            if not 0 <= fi < n:
                continue
            j_start = max(0, 2 * cj)
            j_end = min(m - 1, 2 * cj + 1)
            if j_start <= j_end:
                lo[fi] = min(lo[fi], j_start)
                hi[fi] = max(hi[fi], j_end)
    # Ranges must be monotone and connected for the DP to stay reachable.
    for i in range(1, n):
        if hi[i] < lo[i]:
            lo[i], hi[i] = lo[i - 1], hi[i - 1]
    return {i: (lo[i], hi[i]) for i in range(n)}


def _windowed_dtw(a: np.ndarray, b: np.ndarray, window) -> tuple[float, list[tuple[int, int]]]:
    inf = math.inf
    acc: dict[tuple[int, int], float] = {}
    for i in range(a.shape[0]):
        j_lo, j_hi = window[i]
        ai = a[i]
        for j in range(j_lo, j_hi + 1):
            d = math.hypot(ai[0] - b[j, 0], ai[1] - b[j, 1])
            if i == 0 and j == 0:
                acc[(0, 0)] = d
                continue
            best = min(
                acc.get((i - 1, j), inf),
                acc.get((i, j - 1), inf),
                acc.get((i - 1, j - 1), inf),
            )
            acc[(i, j)] = d + best
    i, j = a.shape[0] - 1, b.shape[0] - 1
    dist = acc[(i, j)]
    path = [(i, j)]
    while i > 0 or j > 0:
        candidates = [
            (acc.get((i - 1, j - 1), inf), (i - 1, j - 1)),
            (acc.get((i - 1, j), inf), (i - 1, j)),
            (acc.get((i, j - 1), inf), (i, j - 1)),
        ]
        _, (i, j) = min(candidates, key=lambda c: c[0])
        path.append((i, j))
    path.reverse()
    return dist, path


def _fast_dtw(a: np.ndarray, b: np.ndarray, radius: int) -> tuple[float, list[tuple[int, int]]]:
    min_size = radius + 2
    if a.shape[0] <= min_size or b.shape[0] <= min_size:
        acc = _accumulated_cost(a, b)
        return float(acc[-1, -1]), _dtw_path(acc)
    coarse_dist, coarse_path = _fast_dtw(_halve(a), _halve(b), radius)
    window = _expand_window(coarse_path, a.shape[0], b.shape[0], radius)
    return _windowed_dtw(a, b, window)


def fast_dtw_distance(seq_a, seq_b, radius: int = 1) -> float:
    """Multi-resolution DTW approximation (coarsen, solve, refine in a band).

    Exact whenever radius >= max(len(seq_a), len(seq_b)), since the
    recursion then bottoms out in the full computation.
    """
    if radius < 1:
        raise InvalidInput(f"radius must be >= 1, got {radius}")
    a = _as_xy(seq_a)
    b = _as_xy(seq_b)
    return float(_fast_dtw(a, b, radius)[0])


def _blocks_to_arrays(block) -> dict[str, np.ndarray]:
    return {
        "t": np.array([p.timestamp_ms for p in block], dtype=np.float64),
        "x": np.array([p.x_mm for p in block]),
        "y": np.array([p.y_mm for p in block]),
        "v": np.array([p.velocity_mm_s for p in block]),
        "motion": np.array([p.motion_angle_rad for p in block]),
        "face": np.array([p.face_angle_rad for p in block]),
    }


def _circular_distance_arr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b) % (2.0 * math.pi)
    return np.minimum(d, 2.0 * math.pi - d)


def featurize_pair(block_a, block_b, dtw_mode: str = "full_broadcast") -> np.ndarray:
    """Compute the L x 6 feature matrix for two aligned blocks.

    dtw_mode "full_broadcast" repeats the whole-sequence DTW cost at every
    step; "prefix" puts the DTW of the two length-(k+1) prefixes at step k
    (the causal variant).
    """
    if dtw_mode not in DTW_MODES:
        raise InvalidInput(f"unknown dtw_mode {dtw_mode!r}")
    if len(block_a) != len(block_b):
        raise InvalidInput(f"block lengths differ: {len(block_a)} vs {len(block_b)}")
    if len(block_a) == 0:
        raise InvalidInput("blocks must be non-empty")
    a = _blocks_to_arrays(block_a)
    b = _blocks_to_arrays(block_b)
    L = a["t"].shape[0]
    feats = np.empty((L, N_FEATURES))
    feats[:, 0] = np.hypot(a["x"] - b["x"], a["y"] - b["y"])
    feats[:, 1] = np.abs(a["t"] - b["t"])
    feats[:, 2] = np.abs(a["v"] - b["v"])
    feats[:, 3] = _circular_distance_arr(a["motion"], b["motion"])
    feats[:, 4] = _circular_distance_arr(a["face"], b["face"])
    xy_a = np.stack([a["x"], a["y"]], axis=1)
    xy_b = np.stack([b["x"], b["y"]], axis=1)
    acc = _accumulated_cost(xy_a, xy_b)
    if dtw_mode == "full_broadcast":
        feats[:, 5] = acc[-1, -1]
    else:
        feats[:, 5] = np.diagonal(acc)
    return feats


def featurize_sample(raw, dtw_mode: str = "full_broadcast") -> PairSample:
    """RawPairSample -> PairSample with unscaled features."""
    return PairSample(
        agent_a=raw.agent_a,
        agent_b=raw.agent_b,
        features=featurize_pair(raw.block_a, raw.block_b, dtw_mode),
        label=raw.label,
    )


@dataclass(frozen=True)
class ScalerState:
    """Fitted per-column scaling parameters.

    centers/scales follow the column's scaler kind: (median, IQR) for
    robust, (min, max - min) for minmax, (mean, std) for standard. A
    degenerate column (zero scale) is mapped to all zeros on apply.
    """

    kinds: tuple[str, ...]
    centers: tuple[float, ...]
    scales: tuple[float, ...]
    degenerate: tuple[bool, ...]
    fit_count: int
    version: int = SCALER_STATE_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "kinds": list(self.kinds),
            "centers": [float(c).hex() for c in self.centers],
            "scales": [float(s).hex() for s in self.scales],
            "degenerate": [int(d) for d in self.degenerate],
            "fit_count": self.fit_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScalerState":
        return cls(
            kinds=tuple(data["kinds"]),
            centers=tuple(float.fromhex(c) for c in data["centers"]),
            scales=tuple(float.fromhex(s) for s in data["scales"]),
            degenerate=tuple(bool(d) for d in data["degenerate"]),
            fit_count=int(data["fit_count"]),
            version=int(data["version"]),
        )


def fit_scalers(train: list[PairSample]) -> ScalerState:
    """Fit the per-column scalers on pooled timesteps of the training split.

    Quantiles for the robust column use linear interpolation between order
    statistics (numpy default). Standard deviations are population (ddof=0).
    """
    if not train:
        raise CannotFit("cannot fit scalers on an empty training set")
    pooled = np.vstack([s.features for s in train])
    centers, scales, degenerate = [], [], []
    for col, kind in enumerate(COLUMN_SCALERS):
        values = pooled[:, col]
        if kind == "robust":
            center = float(np.median(values))
            q75, q25 = np.percentile(values, [75.0, 25.0])
            scale = float(q75 - q25)
        elif kind == "minmax":
            center = float(values.min())
            scale = float(values.max() - values.min())
        else:
            center = float(values.mean())
            scale = float(values.std(ddof=0))
        if scale == 0.0:
            warnings.warn(
                f"feature column {FEATURE_NAMES[col]} is degenerate "
                f"({kind} scale = 0); scaled values will be 0",
                RuntimeWarning,
                stacklevel=2,
            )
            degenerate.append(True)
        else:
            degenerate.append(False)
        centers.append(center)
        scales.append(scale)
    return ScalerState(
        kinds=COLUMN_SCALERS,
        centers=tuple(centers),
        scales=tuple(scales),
        degenerate=tuple(degenerate),
        fit_count=len(train),
    )


def scale_features(state: ScalerState, features: np.ndarray) -> np.ndarray:
    """Affine-transform a raw (L, 6) matrix with fitted parameters."""
    feats = np.asarray(features, dtype=np.float64)
    out = np.empty_like(feats)
    for col in range(N_FEATURES):
        if state.degenerate[col]:
            out[:, col] = 0.0
        else:
            out[:, col] = (feats[:, col] - state.centers[col]) / state.scales[col]
    return out


def unscale_features(state: ScalerState, features: np.ndarray) -> np.ndarray:
    """Inverse of scale_features on non-degenerate columns."""
    feats = np.asarray(features, dtype=np.float64)
    out = np.empty_like(feats)
    for col in range(N_FEATURES):
        if state.degenerate[col]:
            out[:, col] = state.centers[col]
        else:
            out[:, col] = feats[:, col] * state.scales[col] + state.centers[col]
    return out


def apply_scalers(state: ScalerState, sample: PairSample) -> PairSample:
    """Return a scaled copy of the sample."""
    return PairSample(
        agent_a=sample.agent_a,
        agent_b=sample.agent_b,
        features=scale_features(state, sample.features),
        label=sample.label,
        scaled=True,
    )
