"""Patch pipeline around a trained model, plus synthetic data for tests.

Images are ``uint8`` arrays laid out ``(n, height, width, channels)``.
A patch is flattened channel-major, then row-major, so a 10x10 RGB patch
becomes a 300-vector ``[R rows..., G rows..., B rows...]``.  Learning and
encoding both see patches normalized for brightness and contrast; no
whitening is applied anywhere.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .assignment import max_weight_matching
from .errors import ConfigError, ShapeError
from .model import ModelParams, logistic

CV_LAMBDAS = np.logspace(-3, 3, 7)


@dataclass
class ImageSet:
    images: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        if self.images.ndim != 4 or self.images.shape[3] not in (1, 3):
            raise ShapeError(
                f"images must be (n, height, width, 1 or 3), got {self.images.shape}"
            )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if self.labels.shape[0] != self.images.shape[0]:
                raise ShapeError(
                    f"{self.labels.shape[0]} labels for {self.images.shape[0]} images"
                )

    def __len__(self):
        return self.images.shape[0]

    @property
    def channels(self) -> int:
        return self.images.shape[3]

    def subset(self, index) -> "ImageSet":
        labels = None if self.labels is None else self.labels[index]
        return ImageSet(self.images[index], labels)


@dataclass(frozen=True)
class PatchConfig:
    receptive_field: int = 10
    stride: int = 1
    patch_count: int = 100_000
    normalize_floor: float = 10.0

    def check(self, height: int, width: int) -> None:
        if self.stride < 1:
            raise ConfigError("stride must be at least 1")
        if self.receptive_field < 1 or self.receptive_field > min(height, width):
            raise ConfigError(
                f"receptive field {self.receptive_field} does not fit a {height}x{width} image"
            )

    def grid(self, height: int, width: int) -> tuple[int, int]:
        """Number of patch positions ``(rows, cols)``."""
        rf, s = self.receptive_field, self.stride
        return (height - rf) // s + 1, (width - rf) // s + 1


@dataclass(frozen=True)
class EncoderKind:
    """How a normalized patch is turned into a code.

    ``natural``: ``logistic(pW + b)``.  ``signsplit``: the natural code for
    ``W`` and for ``-W`` side by side (with ``split_linear`` the halves are
    instead ``max(0, pW)`` and ``max(0, -pW)``).  ``softthresh``:
    ``max(0, pW - alpha)``.
    """

    tag: str = "natural"
    alpha: float = 0.25
    split_linear: bool = False

    def __post_init__(self):
        if self.tag not in ("natural", "signsplit", "softthresh"):
            raise ConfigError(f"unknown encoder {self.tag!r}")
        if self.tag == "softthresh" and not self.alpha > 0:
            raise ConfigError("soft-threshold alpha must be positive")

    def code_width(self, n_outputs: int) -> int:
        return 2 * n_outputs if self.tag == "signsplit" else n_outputs


def _patch_width(cfg: PatchConfig, channels: int) -> int:
    return cfg.receptive_field ** 2 * channels


def extract_random_patches(images: ImageSet, cfg: PatchConfig, seed=0) -> np.ndarray:
    """``cfg.patch_count`` raw patches from uniformly random images and positions."""
    n, height, width, channels = images.images.shape
    cfg.check(height, width)
    count = int(cfg.patch_count)
    if count < 0:
        raise ConfigError("patch_count must be nonnegative")
    rf = cfg.receptive_field
    out = np.empty((count, _patch_width(cfg, channels)))
    if count == 0:
        return out
    if n == 0:
        raise ConfigError("no images to sample patches from")
    rng = np.random.default_rng(seed)
    which = rng.integers(0, n, count)
    ys = rng.integers(0, height - rf + 1, count)
    xs = rng.integers(0, width - rf + 1, count)
    for r, (i, y, x) in enumerate(zip(which, ys, xs)):
        out[r] = images.images[i, y:y + rf, x:x + rf, :].transpose(2, 0, 1).ravel()
    return out


def normalize_patch_rows(patches, floor: float = 10.0) -> np.ndarray:
    """Per row: subtract the mean and divide by ``sqrt(variance + floor)``."""
    P = np.array(patches, dtype=np.float64)
    if P.ndim != 2:
        raise ShapeError(f"patches must be 2-D, got shape {P.shape}")
    if P.shape[1] == 0:
        return P
    P -= P.mean(axis=1, keepdims=True)
    scale = np.sqrt(np.einsum("ij,ij->i", P, P) / P.shape[1] + floor)
    P /= scale[:, None]
    return P


def image_patches(image, cfg: PatchConfig) -> tuple[np.ndarray, int, int]:
    """Every patch of one ``(height, width, channels)`` image at the configured stride.

    Returns the raw patch matrix (positions in row-major order) and the
    grid size ``(rows, cols)``.
    """
    image = np.asarray(image)
    height, width, channels = image.shape
    cfg.check(height, width)
    rf, s = cfg.receptive_field, cfg.stride
    planes = image.transpose(2, 0, 1)
    win = sliding_window_view(planes, (rf, rf), axis=(1, 2))[:, ::s, ::s]
    rows, cols = win.shape[1], win.shape[2]
    P = win.transpose(1, 2, 0, 3, 4).reshape(rows * cols, channels * rf * rf)
    return P.astype(np.float64), rows, cols


def encode_patches(P, params: ModelParams, encoder: EncoderKind) -> np.ndarray:
    """Codes for already normalized patches."""
    if P.shape[1] != params.n_inputs:
        raise ShapeError(f"patches have {P.shape[1]} values, the model expects {params.n_inputs}")
    Z = P @ params.W
    if encoder.tag == "natural":
        Z += params.b
        return logistic(Z, out=Z)
    if encoder.tag == "softthresh":
        Z -= encoder.alpha
        return np.maximum(Z, 0.0, out=Z)
    if encoder.split_linear:
        return np.concatenate([np.maximum(Z, 0.0), np.maximum(-Z, 0.0)], axis=1)
    pos = logistic(Z + params.b)
    Z = np.negative(Z, out=Z)
    Z += params.b
    return np.concatenate([pos, logistic(Z, out=Z)], axis=1)


def encode_image(image, params: ModelParams, encoder: EncoderKind, cfg: PatchConfig):
    """Feature map of one image.

    Returns ``(codes, rows, cols)`` where ``codes`` has one row per patch
    position, in row-major order over the ``rows x cols`` grid.
    """
    P, rows, cols = image_patches(image, cfg)
    P = normalize_patch_rows(P, cfg.normalize_floor)
    return encode_patches(P, params, encoder), rows, cols


def pool_quadrants(feature_map, positions_w: int, positions_h: int) -> np.ndarray:
    """Sum codes over the four quadrants, ordered top-left, top-right, bottom-left, bottom-right.

    Rows and columns are split at ``ceil(dim / 2)``, so on odd grids the
    middle row and column belong to the top and left quadrants.
    """
    F = np.asarray(feature_map, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != positions_w * positions_h:
        raise ShapeError(
            f"feature map {F.shape} does not match a {positions_h}x{positions_w} grid"
        )
    G = F.reshape(positions_h, positions_w, F.shape[1])
    sh, sw = math.ceil(positions_h / 2), math.ceil(positions_w / 2)
    quads = (G[:sh, :sw], G[:sh, sw:], G[sh:, :sw], G[sh:, sw:])
    return np.concatenate([q.sum(axis=(0, 1)) for q in quads])


def encode_images(
    images: ImageSet,
    params: ModelParams,
    encoder: EncoderKind,
    cfg: PatchConfig,
    workers: int | None = None,
) -> np.ndarray:
    """Pooled features, one row of ``4 * code_width`` values per image.

    Images are encoded independently on a thread pool; the result does not
    depend on ``workers``.
    """
    width = 4 * encoder.code_width(params.n_outputs)
    out = np.empty((len(images), width))
    if len(images) == 0:
        return out

    def one(i):
        codes, rows, cols = encode_image(images.images[i], params, encoder, cfg)
        out[i] = pool_quadrants(codes, cols, rows)

    workers = workers or min(8, os.cpu_count() or 1)
    if workers == 1:
        for i in range(len(images)):
            one(i)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(one, range(len(images))))
    return out


@dataclass
class LinearClassifier:
    classes: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray
    intercept: np.ndarray
    lam: float

    def scores(self, features) -> np.ndarray:
        X = (np.asarray(features, dtype=np.float64) - self.mean) / self.scale
        return X @ self.weights + self.intercept


def _ridge_paths(X, Y, lambdas):
    """Ridge weights for every regularizer, via one eigendecomposition."""
    n, d = X.shape
    if n >= d:
        evals, V = np.linalg.eigh(X.T @ X)
        proj = V.T @ (X.T @ Y)
        return [V @ (proj / (evals + lam)[:, None]) for lam in lambdas]
    evals, U = np.linalg.eigh(X @ X.T)
    proj = U.T @ Y
    return [X.T @ (U @ (proj / (evals + lam)[:, None])) for lam in lambdas]


def _standardize(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def ridge_train(features, labels, lambdas=CV_LAMBDAS, folds: int = 5) -> LinearClassifier:
    """One-vs-all ridge regression on +-1 targets.

    Features are standardized per dimension.  The regularizer is the one
    with the best 5-fold cross-validated accuracy (ties broken by squared
    error).  Folds are assigned after sorting the rows, so shuffling the
    training set leaves the result unchanged.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"features {X.shape} and {y.shape[0]} labels disagree")
    classes, y_idx = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise ConfigError("ridge classifier needs at least two classes")
    Y = -np.ones((X.shape[0], classes.size))
    Y[np.arange(X.shape[0]), y_idx] = 1.0

    order = np.lexsort(np.column_stack([X, y_idx]).T[::-1])
    X, Y, y_idx = X[order], Y[order], y_idx[order]
    fold_of = np.arange(X.shape[0]) % folds

    lambdas = np.asarray(lambdas, dtype=np.float64)
    correct = np.zeros(lambdas.size)
    sq_err = np.zeros(lambdas.size)
    for f in range(min(folds, X.shape[0])):
        test = fold_of == f
        train = ~test
        if not test.any() or np.unique(y_idx[train]).size < 2:
            continue
        mean, scale = _standardize(X[train])
        Xtr, Xte = (X[train] - mean) / scale, (X[test] - mean) / scale
        Ymean = Y[train].mean(axis=0)
        for k, Wk in enumerate(_ridge_paths(Xtr, Y[train] - Ymean, lambdas)):
            S = Xte @ Wk + Ymean
            correct[k] += np.count_nonzero(S.argmax(axis=1) == y_idx[test])
            sq_err[k] += float(np.sum((S - Y[test]) ** 2))
    best = np.lexsort((sq_err, -correct))[0]

    mean, scale = _standardize(X)
    Xs = (X - mean) / scale
    Ymean = Y.mean(axis=0)
    (W,) = _ridge_paths(Xs, Y - Ymean, [lambdas[best]])
    return LinearClassifier(classes, mean, scale, W, Ymean, float(lambdas[best]))


def ridge_predict(clf: LinearClassifier, features) -> np.ndarray:
    return clf.classes[clf.scores(features).argmax(axis=1)]


def make_synthetic(K: int, N_d: int, N: int, noise_sigma: float, seed=0):
    """Samples drawn around ``K`` orthonormal ground-truth bases.

    Each sample is one basis (chosen uniformly) times a factor from
    ``U[0.5, 1.5]`` plus Gaussian noise.

    Returns
    -------
    D : (N, N_d) array
    bases : (N_d, K) array
        One unit-norm basis per column.
    """
    if not 1 <= K <= N_d:
        raise ConfigError(f"need 1 <= K <= N_d, got K={K}, N_d={N_d}")
    rng = np.random.default_rng(seed)
    bases, _ = np.linalg.qr(rng.standard_normal((N_d, K)))
    which = rng.integers(0, K, N)
    gain = rng.uniform(0.5, 1.5, N)
    D = (bases[:, which] * gain).T
    D += noise_sigma * rng.standard_normal((N, N_d))
    return D, bases


def _unit_columns(W):
    W = np.asarray(W, dtype=np.float64)
    norms = np.linalg.norm(W, axis=0)
    return np.divide(W, norms, out=np.zeros_like(W), where=norms > 0)


def match_bases(learned_W, true_bases) -> float:
    """Mean ``|cosine|`` over the best one-to-one pairing of true to learned bases."""
    L, T = _unit_columns(learned_W), _unit_columns(true_bases)
    if L.shape[0] != T.shape[0]:
        raise ShapeError(f"bases of length {L.shape[0]} and {T.shape[0]}")
    if L.shape[1] < T.shape[1]:
        raise ShapeError("fewer learned bases than true bases")
    C = np.abs(T.T @ L)
    pick = max_weight_matching(C)
    return float(C[np.arange(C.shape[0]), pick].mean())


def make_oriented_textures(n_per_class: int, size: int = 32, noise: float = 40.0, seed=0) -> ImageSet:
    """Two classes of grayscale gratings, diagonal one way or the other.

    Orientation jitters by up to 20 degrees around 45 (class 0) or 135
    (class 1); frequency and phase are random and Gaussian pixel noise is
    added.  Images are shuffled.
    """
    rng = np.random.default_rng(seed)
    n = 2 * n_per_class
    labels = np.repeat(np.arange(2), n_per_class)
    theta = np.deg2rad(45.0 + 90.0 * labels + rng.uniform(-20, 20, n))
    freq = rng.uniform(0.1, 0.25, n)
    phase = rng.uniform(0, 2 * np.pi, n)
    yy, xx = np.mgrid[0:size, 0:size]
    along = np.cos(theta)[:, None, None] * xx + np.sin(theta)[:, None, None] * yy
    img = 128.0 + 60.0 * np.sin(2 * np.pi * freq[:, None, None] * along + phase[:, None, None])
    img += noise * rng.standard_normal(img.shape)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)[..., None]
    order = rng.permutation(n)
    return ImageSet(img[order], labels[order])


@dataclass
class PipelineResult:
    params: ModelParams
    report: object
    train_features: np.ndarray
    test_features: np.ndarray
    classifier: LinearClassifier
    predictions: np.ndarray
    accuracy: float


def run_pipeline(
    train_set: ImageSet,
    test_set: ImageSet,
    train_config,
    patch_cfg: PatchConfig = PatchConfig(),
    encoder: EncoderKind = EncoderKind(),
    seed=42,
    workers: int | None = None,
) -> PipelineResult:
    """Patches, dictionary, pooled features and ridge evaluation in one go.

    The dictionary is learned from random patches of ``train_set`` only.
    ``train_config`` is a :class:`~epls.trainer.TrainConfig`.
    """
    from .trainer import train

    if train_set.labels is None or test_set.labels is None:
        raise ConfigError("both image sets need labels")
    patches = normalize_patch_rows(
        extract_random_patches(train_set, patch_cfg, seed), patch_cfg.normalize_floor
    )
    params, report = train(patches, train_config)
    del patches
    f_train = encode_images(train_set, params, encoder, patch_cfg, workers)
    f_test = encode_images(test_set, params, encoder, patch_cfg, workers)
    clf = ridge_train(f_train, train_set.labels)
    pred = ridge_predict(clf, f_test)
    acc = float(np.mean(pred == test_set.labels)) if len(test_set) else float("nan")
    return PipelineResult(params, report, f_train, f_test, clf, pred, acc)
