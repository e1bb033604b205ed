"""Dataset generation and ingestion.

Covers the synthetic two-dimensional Gaussian-mixture benchmarks, IDX image
files (MNIST layout), pixel standardization with retained statistics, and
two plain interchange formats: a raw little-endian float64 tensor file with
a one-line ASCII header, and CSV for 2-D scatter data.
"""

from __future__ import annotations

import struct

from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

STD_FLOOR = 1e-6


@dataclass
class Dataset:
    """Visible vectors plus the statistics needed to undo standardization.

    ``samples`` are stored post-standardization; for raw data the mean is
    zero and the std is all ones, so destandardization is the identity.
    """

    samples: np.ndarray
    standardize_mean: np.ndarray | None = None
    standardize_std: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        n_features = self.samples.shape[1]
        if self.standardize_mean is None:
            self.standardize_mean = np.zeros(n_features)
        else:
            self.standardize_mean = np.asarray(self.standardize_mean, float).ravel()
        if self.standardize_std is None:
            self.standardize_std = np.ones(n_features)
        else:
            self.standardize_std = np.asarray(self.standardize_std, float).ravel()
        if self.standardize_mean.shape != (n_features,):
            raise ValueError("standardize_mean length must match feature count")
        if self.standardize_std.shape != (n_features,):
            raise ValueError("standardize_std length must match feature count")
        if not np.all(self.standardize_std > 0):
            raise ValueError("standardize_std entries must be strictly positive")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    def destandardize(self, x=None) -> np.ndarray:
        """Map standardized vectors back to the raw data space."""
        if x is None:
            x = self.samples
        return np.asarray(x, float) * self.standardize_std + self.standardize_mean


@dataclass
class GmmSpec:
    """A finite Gaussian mixture: weights, means, and SPD covariances."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covariances = np.asarray(self.covariances, dtype=np.float64)
        k, d = self.means.shape
        if self.weights.shape != (k,):
            raise ValueError("one weight per component required")
        if np.any(self.weights <= 0):
            raise ValueError("component weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("component weights must sum to 1")
        if self.covariances.shape != (k, d, d):
            raise ValueError("covariances must be (k, d, d)")
        for i, cov in enumerate(self.covariances):
            if not np.allclose(cov, cov.T):
                raise ValueError(f"covariance {i} is not symmetric")
        try:
            self._chol = np.linalg.cholesky(self.covariances)
        except np.linalg.LinAlgError as err:
            raise ValueError("covariances must be positive-definite") from err

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def gmm_sample(spec: GmmSpec, n: int, rng: np.random.Generator) -> Dataset:
    """Draw n points: pick a component by weight, then a Gaussian draw.

    No standardization is applied; 2-D mixture data is used raw.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    # rng.choice insists on probabilities summing to 1 exactly.
    p = spec.weights / spec.weights.sum()
    idx = rng.choice(spec.n_components, size=n, p=p)
    z = rng.standard_normal((n, spec.dim))
    out = np.empty((n, spec.dim))
    for comp in range(spec.n_components):
        mask = idx == comp
        out[mask] = spec.means[comp] + z[mask] @ spec._chol[comp].T
    return Dataset(out)


def default_gmm_specs() -> tuple[GmmSpec, GmmSpec]:
    """The built-in 3-mode benchmark mixtures (isotropic and anisotropic).

    Three equally weighted, well-separated modes on a triangle (pairwise
    mode distance 2*sqrt(3) >= 3).  The anisotropic variant stretches each
    component 4:1 along axes rotated 0/60/120 degrees.
    """
    weights = np.full(3, 1.0 / 3.0)
    r3 = np.sqrt(3.0)
    means = np.array([[0.0, 2.0], [-r3, -1.0], [r3, -1.0]])
    iso_cov = np.stack([0.09 * np.eye(2)] * 3)
    base = 0.09 * np.diag([4.0, 1.0])
    an_covs = []
    for deg in (0.0, 60.0, 120.0):
        th = np.deg2rad(deg)
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        an_covs.append(rot @ base @ rot.T)
    return (
        GmmSpec(weights, means, iso_cov),
        GmmSpec(weights, means, np.stack(an_covs)),
    )


def standardize(raw: Dataset, image_shape: tuple[int, ...] | None = None) -> Dataset:
    """Standardize per coordinate (or per channel for H x W x C layouts).

    The std is floored at 1e-6 so constant pixels map to 0 instead of NaN.
    The returned dataset keeps the statistics for destandardization.
    """
    x = raw.samples
    if x.shape[0] < 2:
        raise ValueError("standardization needs at least 2 samples")
    if image_shape is not None and len(image_shape) == 3:
        h, w, c = image_shape
        if h * w * c != x.shape[1]:
            raise ValueError(
                f"image shape {image_shape} does not match {x.shape[1]} features"
            )
        imgs = x.reshape(-1, h, w, c)
        mean_c = imgs.mean(axis=(0, 1, 2))
        std_c = imgs.std(axis=(0, 1, 2))
        mean = np.broadcast_to(mean_c, (h, w, c)).reshape(-1).copy()
        std = np.broadcast_to(std_c, (h, w, c)).reshape(-1).copy()
    else:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
    std = np.maximum(std, STD_FLOOR)
    return Dataset(
        (x - mean) / std,
        standardize_mean=mean,
        standardize_std=std,
        labels=raw.labels,
    )


def _read_idx_header(blob: bytes, path, expected_magic: int) -> tuple[tuple[int, ...], int]:
    if len(blob) < 4:
        raise FormatError(f"{path}: IDX file shorter than its magic", offset=len(blob))
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}",
            offset=0,
        )
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(blob) < header_len:
        raise FormatError(f"{path}: IDX header truncated", offset=len(blob))
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    expected = header_len + int(np.prod(dims))
    if len(blob) < expected:
        raise FormatError(
            f"{path}: IDX payload truncated, expected {expected} bytes",
            offset=len(blob),
        )
    return dims, header_len


def load_idx(images_path, labels_path=None) -> Dataset:
    """Parse IDX image (and optional label) files into a raw Dataset.

    Pixel values stay in [0, 255]; each image is flattened row-major.
    """
    with open(images_path, "rb") as f:
        blob = f.read()
    dims, header_len = _read_idx_header(blob, images_path, IDX_IMAGE_MAGIC)
    count = dims[0]
    vec_len = int(np.prod(dims[1:])) if len(dims) > 1 else 1
    pixels = np.frombuffer(
        blob, dtype=np.uint8, count=count * vec_len, offset=header_len
    )
    samples = pixels.reshape(count, vec_len).astype(np.float64)
    labels = None
    if labels_path is not None:
        with open(labels_path, "rb") as f:
            lblob = f.read()
        ldims, lheader = _read_idx_header(lblob, labels_path, IDX_LABEL_MAGIC)
        if ldims[0] != count:
            raise FormatError(
                f"{labels_path}: {ldims[0]} labels for {count} images", offset=4
            )
        labels = np.frombuffer(lblob, dtype=np.uint8, count=count, offset=lheader).copy()
    return Dataset(samples, labels=labels)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a (count, rows, cols) uint8 array in IDX image layout."""
    arr = np.asarray(images, dtype=np.uint8)
    if arr.ndim != 3:
        raise ValueError("images must have shape (count, rows, cols)")
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *arr.shape))
        f.write(arr.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    arr = np.asarray(labels, dtype=np.uint8).ravel()
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, arr.shape[0]))
        f.write(arr.tobytes())


def save_tensor(path, array: np.ndarray) -> None:
    """Raw tensor file: one ASCII header line "d0 d1 ... f64", then LE floats."""
    arr = np.asarray(array, dtype=np.float64)
    header = " ".join(str(d) for d in arr.shape) + " f64\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    newline = blob.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: missing tensor header line", offset=0)
    tokens = blob[:newline].decode("ascii", errors="replace").split()
    if len(tokens) < 2 or tokens[-1] != "f64":
        raise FormatError(f"{path}: tensor header must end with 'f64'", offset=0)
    try:
        shape = tuple(int(t) for t in tokens[:-1])
    except ValueError as err:
        raise FormatError(f"{path}: bad tensor dimensions {tokens[:-1]}") from err
    count = int(np.prod(shape))
    payload = blob[newline + 1 :]
    if len(payload) < 8 * count:
        raise FormatError(
            f"{path}: tensor payload truncated, expected {8 * count} bytes",
            offset=newline + 1 + len(payload),
        )
    return np.frombuffer(payload, dtype="<f8", count=count).reshape(shape).astype(float)


def save_csv(path, samples: np.ndarray) -> None:
    """Write 2-D scatter data as CSV with full float64 precision."""
    arr = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    np.savetxt(path, arr, delimiter=",", fmt="%.17g")


def load_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
