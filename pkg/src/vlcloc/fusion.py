"""Least-squares fusion of per-classifier position estimates.

The H classifiers' coordinate predictions for L queries form an L x H
prediction matrix per axis. Fusion weights solve min ||truth - X w||_2;
the SVD route truncates small singular values and returns the minimum-norm
solution, which stays stable when classifiers agree and X is rank
deficient. GI fits one global weight pair; GD fits one pair per grid point
and selects at query time by nearest mean fingerprint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PLAIN_LS = "plain-ls"
SVD_LS = "svd-ls"


class RankDeficientError(ValueError):
    """Raised by ls_weights when X'X is not safely invertible."""


@dataclass(frozen=True)
class LsFit:
    """Solved weight vector for one coordinate axis."""

    weights: np.ndarray  # (H,)
    rank_used: int
    mode: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a finite vector")
        if self.rank_used > w.size:
            raise ValueError("rank_used cannot exceed the number of classifiers")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class FusionWeights:
    """Grid-independent weight pair (one LsFit per coordinate axis)."""

    wx: LsFit
    wy: LsFit


@dataclass(frozen=True)
class GdWeightBank:
    """Grid-dependent weights: column g fuses queries matched to grid g."""

    wx: np.ndarray        # (H, G)
    wy: np.ndarray        # (H, G)
    mean_fps: np.ndarray  # (G, M) dB, used for grid selection


@dataclass(frozen=True)
class LocationEstimate:
    x: float
    y: float
    method: str
    warning: str | None = None

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class PredictionMatrix:
    """Per-axis L x H prediction matrices; column eta belongs to classifier eta."""

    x_hat: np.ndarray
    y_hat: np.ndarray
    classifier_order: tuple[str, ...]

    def __post_init__(self):
        xh = np.atleast_2d(np.asarray(self.x_hat, dtype=float))
        yh = np.atleast_2d(np.asarray(self.y_hat, dtype=float))
        if xh.shape != yh.shape:
            raise ValueError("x_hat and y_hat must have identical shapes")
        if xh.shape[1] != len(self.classifier_order):
            raise ValueError("one column per classifier required")
        object.__setattr__(self, "x_hat", xh)
        object.__setattr__(self, "y_hat", yh)
        object.__setattr__(self, "classifier_order", tuple(self.classifier_order))


def build_prediction_matrix(classifiers, queries) -> PredictionMatrix:
    """Run every classifier over the queries and stack the coordinates."""
    if not classifiers:
        raise ValueError("at least one classifier is required")
    cols_x, cols_y = [], []
    for clf in classifiers:
        coords = clf.predict_coords(queries)
        cols_x.append(coords[:, 0])
        cols_y.append(coords[:, 1])
    return PredictionMatrix(
        x_hat=np.column_stack(cols_x),
        y_hat=np.column_stack(cols_y),
        classifier_order=tuple(clf.name for clf in classifiers),
    )


def default_rank_tol(shape: tuple[int, int]) -> float:
    """Relative singular-value cutoff: sigma < tol * sigma_max counts as zero."""
    return 1e-10 * max(shape)


def ls_weights(pred: np.ndarray, truth: np.ndarray,
               rank_tol: float | None = None) -> np.ndarray:
    """Plain least-squares weights (X'X)^-1 X' truth.

    Requires more rows than columns and numerically full column rank;
    otherwise raises RankDeficientError pointing at ls_svd_weights.
    """
    x = np.atleast_2d(np.asarray(pred, dtype=float))
    t = np.asarray(truth, dtype=float)
    l, h = x.shape
    if t.shape != (l,):
        raise ValueError(f"truth must have length {l}")
    if l <= h:
        raise RankDeficientError(
            f"plain LS needs more samples than classifiers (L={l}, H={h}); "
            "use ls_svd_weights"
        )
    tol = default_rank_tol(x.shape) if rank_tol is None else rank_tol
    sv = np.linalg.svd(x, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < tol * sv[0]:
        raise RankDeficientError(
            "prediction matrix is rank deficient; use ls_svd_weights"
        )
    return np.linalg.solve(x.T @ x, x.T @ t)


def ls_svd_weights(pred: np.ndarray, truth: np.ndarray,
                   rank_tol: float | None = None) -> LsFit:
    """Minimum-norm least-squares weights through truncated SVD.

    With X = U diag(sigma) V', the solution keeps the K singular values
    above rank_tol * sigma_max and returns
    w = sum_k (u_k' truth / sigma_k) v_k. An all-zero matrix yields zero
    weights with rank 0 rather than an error.
    """
    x = np.atleast_2d(np.asarray(pred, dtype=float))
    t = np.asarray(truth, dtype=float)
    l, h = x.shape
    if t.shape != (l,):
        raise ValueError(f"truth must have length {l}")
    tol = default_rank_tol(x.shape) if rank_tol is None else rank_tol
    u, sv, vt = np.linalg.svd(x, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return LsFit(np.zeros(h), 0, SVD_LS)
    k = int(np.count_nonzero(sv >= tol * sv[0]))
    coeff = (u[:, :k].T @ t) / sv[:k]
    return LsFit(vt[:k].T @ coeff, k, SVD_LS)


def gi_ls_fit(pred: PredictionMatrix, truth_xy,
              rank_tol: float | None = None) -> FusionWeights:
    """Grid-independent fit: one weight vector per axis over all offline samples."""
    truth = np.asarray(truth_xy, dtype=float)
    if truth.ndim != 2 or truth.shape != (pred.x_hat.shape[0], 2):
        raise ValueError("truth_xy must have shape (L, 2)")
    return FusionWeights(
        wx=ls_svd_weights(pred.x_hat, truth[:, 0], rank_tol),
        wy=ls_svd_weights(pred.y_hat, truth[:, 1], rank_tol),
    )


def gi_ls_predict(weights: FusionWeights, online_pred: PredictionMatrix,
                  row: int = 0) -> LocationEstimate:
    """Fuse one online prediction row into a (generally off-grid) position."""
    x = float(online_pred.x_hat[row] @ weights.wx.weights)
    y = float(online_pred.y_hat[row] @ weights.wy.weights)
    return LocationEstimate(x, y, "gi-ls")


def gi_ls_predict_all(weights: FusionWeights, online_pred: PredictionMatrix) -> np.ndarray:
    """(L, 2) fused coordinates for every online row."""
    return np.column_stack([
        online_pred.x_hat @ weights.wx.weights,
        online_pred.y_hat @ weights.wy.weights,
    ])


def gd_ls_fit(per_grid_preds, grid_coords, mean_fps,
              rank_tol: float | None = None) -> GdWeightBank:
    """Grid-dependent fit: per grid point, regress its offline predictions
    onto the constant truth (x_g, y_g)."""
    coords = np.asarray(grid_coords, dtype=float)
    fps = np.asarray(mean_fps, dtype=float)
    g = coords.shape[0]
    if len(per_grid_preds) != g or fps.shape[0] != g:
        raise ValueError("per-grid predictions, coords and mean_fps must align")
    h = per_grid_preds[0].x_hat.shape[1]
    wx = np.empty((h, g))
    wy = np.empty((h, g))
    for gi, pred in enumerate(per_grid_preds):
        n = pred.x_hat.shape[0]
        wx[:, gi] = ls_svd_weights(pred.x_hat, np.full(n, coords[gi, 0]), rank_tol).weights
        wy[:, gi] = ls_svd_weights(pred.y_hat, np.full(n, coords[gi, 1]), rank_tol).weights
    return GdWeightBank(wx=wx, wy=wy, mean_fps=fps)


def gd_select_grid(query, mean_fps) -> int:
    """Index of the grid whose mean fingerprint is nearest in Euclidean
    distance; ties go to the lower index."""
    q = np.asarray(query, dtype=float)
    fps = np.asarray(mean_fps, dtype=float)
    if q.shape != (fps.shape[1],):
        raise ValueError("query dimension must match mean fingerprint columns")
    d2 = ((fps - q) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def gd_ls_predict(bank: GdWeightBank, query, online_pred: PredictionMatrix,
                  row: int = 0) -> LocationEstimate:
    """Select the nearest grid's weight column and fuse the online row with it."""
    g = gd_select_grid(query, bank.mean_fps)
    x = float(online_pred.x_hat[row] @ bank.wx[:, g])
    y = float(online_pred.y_hat[row] @ bank.wy[:, g])
    return LocationEstimate(x, y, "gd-ls")
