"""Comparison methods: classical RSS fingerprint matching and RSS-ratio
(RSSR) trilateration.

RSSR works in the linear received-power domain. Under the vertical
Lambertian geometry, power from LED i scales as h^(m+1) / d_i^(m+3), so
r_i / r_j = (d_j / d_i)^(m+3) whenever the LEDs share the same effective
drive level. Pairwise log-ratio residuals are minimized over candidate
positions by an exhaustive area scan followed by local quadratic
refinement (or Gauss-Newton iterations).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .fusion import LocationEstimate

GRID_SCAN = "grid-scan"
GAUSS_NEWTON = "gauss-newton"


@dataclass(frozen=True)
class RssrConfig:
    lambertian_order: float
    led_positions: np.ndarray              # (M, 3) meters
    bounds: tuple[tuple[float, float], tuple[float, float]]  # ((xmin,xmax),(ymin,ymax))
    solver: str = GRID_SCAN
    scan_resolution: float = 0.01          # meters

    def __post_init__(self):
        pos = np.asarray(self.led_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 3:
            raise ValueError("need at least 3 LED positions of shape (M, 3)")
        if len(np.unique(pos, axis=0)) != pos.shape[0]:
            raise ValueError("LED positions must be distinct")
        if self.lambertian_order <= 0.0:
            raise ValueError("lambertian_order must be positive")
        if self.solver not in (GRID_SCAN, GAUSS_NEWTON):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.scan_resolution <= 0.0:
            raise ValueError("scan_resolution must be positive")
        (x0, x1), (y0, y1) = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError("bounds must span a non-empty rectangle")
        object.__setattr__(self, "led_positions", pos)


def rss_match(query, mean_fps, grid_coords) -> LocationEstimate:
    """Nearest-mean-fingerprint matching; same metric and tie rule as the
    grid-dependent selector."""
    q = np.asarray(query, dtype=float)
    fps = np.asarray(mean_fps, dtype=float)
    coords = np.asarray(grid_coords, dtype=float)
    if fps.shape[0] != coords.shape[0]:
        raise ValueError("mean_fps rows must match grid_coords rows")
    if q.shape != (fps.shape[1],):
        raise ValueError("query dimension must match fingerprint columns")
    g = int(np.argmin(((fps - q) ** 2).sum(axis=1)))
    return LocationEstimate(float(coords[g, 0]), float(coords[g, 1]), "rss-match")


def _log_distances(cfg: RssrConfig, xy: np.ndarray) -> np.ndarray:
    """log d_i for candidate positions xy (..., 2) against every LED."""
    led = cfg.led_positions
    dx = xy[..., np.newaxis, 0] - led[:, 0]
    dy = xy[..., np.newaxis, 1] - led[:, 1]
    return 0.5 * np.log(dx**2 + dy**2 + led[:, 2] ** 2)


def _pair_indices(m: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.array(list(itertools.combinations(range(m), 2)))
    return pairs[:, 0], pairs[:, 1]


def _residuals(cfg: RssrConfig, log_ratios: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Per-pair residuals (m+3)(log d_j - log d_i) - log(r_i / r_j)."""
    i, j = _pair_indices(cfg.led_positions.shape[0])
    ld = _log_distances(cfg, xy)
    model = (cfg.lambertian_order + 3.0) * (ld[..., j] - ld[..., i])
    return model - log_ratios


def _objective(cfg: RssrConfig, log_ratios: np.ndarray, xy: np.ndarray) -> np.ndarray:
    return (_residuals(cfg, log_ratios, xy) ** 2).sum(axis=-1)


class RssrSolver:
    """Reusable RSSR solver; precomputes the scan grid's model terms so that
    locating many queries against one geometry stays cheap."""

    def __init__(self, cfg: RssrConfig):
        self.cfg = cfg
        (x0, x1), (y0, y1) = cfg.bounds
        res = cfg.scan_resolution
        xs = np.arange(x0, x1 + 0.5 * res, res)
        ys = np.arange(y0, y1 + 0.5 * res, res)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        self._cells = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        i, j = _pair_indices(cfg.led_positions.shape[0])
        ld = _log_distances(cfg, self._cells)
        self._model = (cfg.lambertian_order + 3.0) * (ld[:, j] - ld[:, i])
        self._model_sq = (self._model**2).sum(axis=1)

    def _scan(self, log_ratios: np.ndarray) -> np.ndarray:
        # argmin of sum_p (model - c)^2; the c^2 term is constant over cells
        f = self._model_sq - 2.0 * (self._model @ log_ratios)
        return self._cells[int(np.argmin(f))].copy()

    def locate(self, query) -> LocationEstimate:
        cfg = self.cfg
        r = np.asarray(query, dtype=float)
        if r.shape != (cfg.led_positions.shape[0],):
            raise ValueError("query length must match the number of LEDs")
        if np.any(r <= 0.0) or not np.all(np.isfinite(r)):
            raise ValueError("RSSR needs strictly positive finite linear powers")
        i, j = _pair_indices(r.size)
        log_ratios = np.log(r[i] / r[j])

        coarse = self._scan(log_ratios)
        warning = None
        if cfg.solver == GAUSS_NEWTON:
            p, converged = _gauss_newton(cfg, log_ratios, coarse)
            if not converged or not np.all(np.isfinite(p)):
                p = coarse
                warning = "gauss-newton did not converge; returning scan optimum"
        else:
            p = _quadratic_refine(cfg, log_ratios, coarse, cfg.scan_resolution)
        return LocationEstimate(float(p[0]), float(p[1]), "rssr", warning=warning)


def _quadratic_refine(cfg: RssrConfig, log_ratios: np.ndarray,
                      center: np.ndarray, h: float) -> np.ndarray:
    """Fit a 2-d quadratic on a 3x3 stencil and jump to its stationary point.

    Three rounds with a shrinking stencil pull the scan optimum well below
    millimeter error on smooth noiseless objectives. Steps are clamped to
    the stencil box so a non-convex fit cannot throw the estimate away.
    """
    c = center.astype(float).copy()
    for _ in range(3):
        dx = np.array([-h, 0.0, h])
        sx, sy = np.meshgrid(dx, dx, indexing="ij")
        pts = np.stack([c[0] + sx.ravel(), c[1] + sy.ravel()], axis=-1)
        f = _objective(cfg, log_ratios, pts)
        a = np.column_stack([
            np.ones(9), sx.ravel(), sy.ravel(),
            sx.ravel() ** 2, sy.ravel() ** 2, sx.ravel() * sy.ravel(),
        ])
        coef = np.linalg.lstsq(a, f, rcond=None)[0]
        _, cx, cy, cxx, cyy, cxy = coef
        hess = np.array([[2.0 * cxx, cxy], [cxy, 2.0 * cyy]])
        if np.linalg.det(hess) > 0.0 and hess[0, 0] > 0.0:
            step = np.linalg.solve(hess, -np.array([cx, cy]))
            step = np.clip(step, -1.5 * h, 1.5 * h)
            c = c + step
        h /= 10.0
    return c


def _gauss_newton(cfg: RssrConfig, log_ratios: np.ndarray,
                  start: np.ndarray) -> tuple[np.ndarray, bool]:
    m3 = cfg.lambertian_order + 3.0
    led = cfg.led_positions
    i, j = _pair_indices(led.shape[0])
    p = start.astype(float).copy()
    for _ in range(50):
        delta = p - led[:, :2]
        d2 = (delta**2).sum(axis=1) + led[:, 2] ** 2
        grad_logd = delta / d2[:, np.newaxis]        # gradient of log d_i
        jac = m3 * (grad_logd[j] - grad_logd[i])
        res = _residuals(cfg, log_ratios, p)
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        p = p + step
        if np.linalg.norm(step) < 1e-12:
            return p, True
    return p, False


def rssr_locate(query, cfg: RssrConfig) -> LocationEstimate:
    """Position from pairwise RSS ratios under the Lambertian model.

    query holds linear received powers (one per LED, > 0); ratios cancel
    any common scale factor, so only relative levels matter. For many
    queries against one geometry build an RssrSolver once instead.
    """
    return RssrSolver(cfg).locate(query)
