"""Periodogram PSD estimation and RSS fingerprint construction.

The periodogram of an N-sample block is S[k] = |DFT(y)[k]|^2 / N. Received
signal strengths are read off as the PSD peaks at the known tone
frequencies and stored in dB (10*log10 of the peak). A fingerprint database
collects Q such RSS vectors per grid point from non-overlapping blocks of
the site-survey recording.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

DB_FLOOR = -300.0  # dB value substituted for log10(0)


@dataclass(frozen=True)
class PsdEstimate:
    """Periodogram over all N DFT bins; bin k covers k * bin_hz."""

    bin_values: np.ndarray
    bin_hz: float
    fft_len: int

    def __post_init__(self):
        vals = np.asarray(self.bin_values, dtype=float)
        if vals.shape != (self.fft_len,):
            raise ValueError("bin_values length must equal fft_len")
        if np.any(vals < 0.0):
            raise ValueError("PSD bins must be non-negative")
        object.__setattr__(self, "bin_values", vals)


@dataclass(frozen=True)
class RssVector:
    """Per-tone received signal strengths in dB plus the tone frequencies."""

    values: np.ndarray       # (M,) dB
    frequencies: np.ndarray  # (M,) Hz, strictly increasing

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        freqs = np.asarray(self.frequencies, dtype=float)
        if vals.shape != freqs.shape or vals.ndim != 1:
            raise ValueError("values and frequencies must be 1-d and equally long")
        if np.any(np.diff(freqs) <= 0.0):
            raise ValueError("tone frequencies must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("RSS values must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "frequencies", freqs)


@dataclass(frozen=True)
class FingerprintDB:
    """Site-survey fingerprints: Q RSS vectors (dB) at each of G grid points."""

    grid_coords: np.ndarray  # (G, 2) meters
    rss: np.ndarray          # (G, Q, M) dB
    tones: np.ndarray        # (M,) Hz
    fft_len: int
    sample_rate: float

    def __post_init__(self):
        grid = np.asarray(self.grid_coords, dtype=float)
        rss = np.asarray(self.rss, dtype=float)
        tones = np.asarray(self.tones, dtype=float)
        if grid.ndim != 2 or grid.shape[1] != 2:
            raise ValueError("grid_coords must have shape (G, 2)")
        if rss.ndim != 3 or rss.shape[0] != grid.shape[0] or rss.shape[2] != tones.size:
            raise ValueError("rss must have shape (G, Q, M) matching grid and tones")
        if np.any(np.diff(tones) <= 0.0):
            raise ValueError("tones must be strictly increasing")
        object.__setattr__(self, "grid_coords", grid)
        object.__setattr__(self, "rss", rss)
        object.__setattr__(self, "tones", tones)

    @property
    def num_grid_points(self) -> int:
        return self.grid_coords.shape[0]

    @property
    def blocks_per_grid(self) -> int:
        return self.rss.shape[1]

    @property
    def num_tones(self) -> int:
        return self.tones.size

    def tone_alignment(self) -> list[tuple[float, int, bool]]:
        """Per tone: (frequency, nearest DFT bin, exactly on-bin?)."""
        out = []
        for f in self.tones:
            exact = f * self.fft_len / self.sample_rate
            nominal = int(round(exact))
            out.append((float(f), nominal, abs(exact - nominal) < 1e-9))
        return out


def _periodogram_blocks(blocks: np.ndarray) -> np.ndarray:
    """Periodogram of each row of a (B, N) block matrix."""
    n = blocks.shape[-1]
    spec = np.fft.fft(blocks, axis=-1)
    return (spec.real**2 + spec.imag**2) / n


def periodogram(samples, sample_rate: float | None = None) -> PsdEstimate:
    """Periodogram PSD estimate S[k] = |DFT[k]|^2 / N over all N bins.

    bin_hz is sample_rate / N when the rate is given, else 0 (unknown axis);
    extract_rss then needs the rate passed explicitly.
    """
    y = np.asarray(samples, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("periodogram needs a 1-d signal of at least 2 samples")
    vals = _periodogram_blocks(y[np.newaxis, :])[0]
    bin_hz = sample_rate / y.size if sample_rate else 0.0
    return PsdEstimate(bin_values=vals, bin_hz=bin_hz, fft_len=y.size)


def _peak_bins(psd_rows: np.ndarray, fft_len: int, sample_rate: float, tones: np.ndarray) -> np.ndarray:
    """Max PSD value within +-1 bin of each tone's nominal bin, per row."""
    half = fft_len // 2
    peaks = np.empty((psd_rows.shape[0], tones.size))
    for j, f in enumerate(tones):
        if f <= 0.0:
            raise ValueError(f"tone frequencies must be positive, got {f} Hz")
        if f > sample_rate / 2.0:
            raise ValueError(f"tone {f} Hz exceeds Nyquist ({sample_rate / 2.0} Hz)")
        nominal = int(round(f * fft_len / sample_rate))
        lo = max(nominal - 1, 0)
        hi = min(nominal + 1, half)
        peaks[:, j] = psd_rows[:, lo : hi + 1].max(axis=1)
    return peaks


def to_db(linear, floor_db: float = DB_FLOOR) -> np.ndarray:
    """10*log10 of linear power, with zeros clamped to floor_db."""
    lin = np.asarray(linear, dtype=float)
    out = np.full(lin.shape, floor_db)
    pos = lin > 0.0
    out[pos] = 10.0 * np.log10(lin[pos])
    return np.maximum(out, floor_db)


def from_db(db) -> np.ndarray:
    """Inverse of to_db: linear power 10^(dB/10)."""
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def extract_rss(psd: PsdEstimate, tones, sample_rate: float | None = None,
                floor_db: float = DB_FLOOR) -> RssVector:
    """RSS vector from a PSD: peak capture within +-1 bin of each tone, in dB."""
    tones = np.asarray(tones, dtype=float)
    rate = sample_rate if sample_rate is not None else psd.bin_hz * psd.fft_len
    if rate <= 0.0:
        raise ValueError("sample rate unknown; pass sample_rate or use psd_of_block")
    peaks = _peak_bins(psd.bin_values[np.newaxis, :], psd.fft_len, rate, tones)[0]
    return RssVector(values=to_db(peaks, floor_db), frequencies=tones)


def build_fingerprints(streams, grid_coords, fft_len: int, tones,
                       sample_rate: float) -> FingerprintDB:
    """Build the fingerprint database from per-grid sample streams.

    Each stream of T samples is cut into Q = floor(T / N) non-overlapping
    N-blocks; every block yields one periodogram and one RSS vector. All
    streams must supply the same Q. streams may be any iterable (including
    a generator, so site-survey recordings never need to coexist in memory).
    """
    tones = np.asarray(tones, dtype=float)
    grid = np.asarray(grid_coords, dtype=float)
    if fft_len < 2:
        raise ValueError("fft_len must be at least 2")

    per_grid = []
    q_common = None
    for g, stream in enumerate(streams):
        y = np.asarray(stream, dtype=float)
        q = y.size // fft_len
        if q < 1:
            raise ValueError(
                f"stream {g} has {y.size} samples, fewer than one {fft_len}-block"
            )
        if q_common is None:
            q_common = q
        elif q != q_common:
            raise ValueError(f"stream {g} yields {q} blocks, expected {q_common}")
        blocks = y[: q * fft_len].reshape(q, fft_len)
        psd_rows = _periodogram_blocks(blocks)
        peaks = _peak_bins(psd_rows, fft_len, sample_rate, tones)
        per_grid.append(to_db(peaks))

    if len(per_grid) != grid.shape[0]:
        raise ValueError(
            f"got {len(per_grid)} streams for {grid.shape[0]} grid points"
        )
    db = FingerprintDB(
        grid_coords=grid,
        rss=np.stack(per_grid),
        tones=tones,
        fft_len=fft_len,
        sample_rate=sample_rate,
    )
    for f, nominal, on_bin in db.tone_alignment():
        if not on_bin:
            log.warning("tone %.6g Hz is off-bin (nearest DFT bin %d)", f, nominal)
    return db


def mean_fingerprints(db: FingerprintDB) -> np.ndarray:
    """(G, M) matrix of per-grid mean RSS, averaged in the dB domain."""
    return db.rss.mean(axis=1)


def _fmt(x: float) -> str:
    return format(x, ".9g")


def save_fingerprints(db: FingerprintDB, path) -> None:
    """Write the database as text.

    Line 1: `G Q M N sample_rate`; line 2: the M tone frequencies; then per
    grid point one `x y` coordinate line followed by Q lines of M dB values.
    Values use 9 significant digits, so a load/save cycle reproduces the
    file byte for byte.
    """
    g, q, m = db.rss.shape
    lines = [
        f"{g} {q} {m} {db.fft_len} {_fmt(db.sample_rate)}",
        " ".join(_fmt(f) for f in db.tones),
    ]
    for gi in range(g):
        lines.append(" ".join(_fmt(c) for c in db.grid_coords[gi]))
        for qi in range(q):
            lines.append(" ".join(_fmt(v) for v in db.rss[gi, qi]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_fingerprints(path) -> FingerprintDB:
    """Read a database written by save_fingerprints."""
    with open(path) as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if len(lines) < 2:
        raise ValueError(f"{path}: truncated fingerprint file")
    head = lines[0].split()
    if len(head) != 5:
        raise ValueError(f"{path}: malformed header {lines[0]!r}")
    g, q, m, n = (int(v) for v in head[:4])
    sample_rate = float(head[4])
    tones = np.array([float(v) for v in lines[1].split()])
    if tones.size != m:
        raise ValueError(f"{path}: expected {m} tones, found {tones.size}")
    expected = 2 + g * (q + 1)
    if len(lines) != expected:
        raise ValueError(f"{path}: expected {expected} lines, found {len(lines)}")
    grid = np.empty((g, 2))
    rss = np.empty((g, q, m))
    pos = 2
    for gi in range(g):
        grid[gi] = [float(v) for v in lines[pos].split()]
        pos += 1
        for qi in range(q):
            row = [float(v) for v in lines[pos].split()]
            if len(row) != m:
                raise ValueError(f"{path}: line {pos + 1} has {len(row)} values, expected {m}")
            rss[gi, qi] = row
            pos += 1
    return FingerprintDB(grid, rss, tones, n, sample_rate)
