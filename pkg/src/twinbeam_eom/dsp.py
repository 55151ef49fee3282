"""Spectral estimation of homodyne photocurrents.

Power spectra are Welch averages normalized so unit-variance white noise reads
1 in every bin. Drive-locked analysis cuts the record into segments that start
at drive phase zero and demodulates each one at the bin frequencies.
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import signal as sp_signal

from .errors import ConfigurationError, DimensionError, DomainError
from .exact import COMPONENTS
from .timeseries import Photocurrent, TraceConfig, check_phase_locked, homodyne, synthesize_source

logger = logging.getLogger(__name__)

WINDOWS = ("rectangular", "hann")
_SCIPY_WINDOWS = {"rectangular": "boxcar", "hann": "hann"}


@dataclass(frozen=True)
class SegmentPlan:
    segment_len: int = 500
    overlap: float = 0.0
    window: str = "rectangular"
    drive_locked: bool = True
    f_drive: float = 2e5
    sample_rate: float = 1e8

    def __post_init__(self) -> None:
        if self.segment_len < 2:
            raise ConfigurationError("plan.segment_len: must be at least 2 samples")
        if not 0.0 <= self.overlap < 1.0:
            raise ConfigurationError(f"plan.overlap: must be in [0, 1), got {self.overlap}")
        if self.window not in WINDOWS:
            raise ConfigurationError(f"plan.window: {self.window} is not one of {list(WINDOWS)}")
        if not self.sample_rate > 0 or not self.f_drive > 0:
            raise ConfigurationError("plan.sample_rate: rates must be positive")
        if self.drive_locked:
            if self.window != "rectangular" or self.overlap != 0.0:
                raise ConfigurationError("plan.drive_locked: needs a rectangular window and no overlap")
            period = check_phase_locked(self.sample_rate, self.f_drive)
            if self.segment_len % period:
                raise ConfigurationError(
                    f"plan.segment_len: {self.segment_len} samples is not a whole number of "
                    f"{period}-sample drive periods"
                )

    @property
    def noverlap(self) -> int:
        return int(round(self.overlap * self.segment_len))

    @property
    def resolution(self) -> float:
        return self.sample_rate / self.segment_len

    def n_segments(self, n_samples: int) -> int:
        if n_samples < self.segment_len:
            return 0
        return (n_samples - self.segment_len) // (self.segment_len - self.noverlap) + 1

    def validate_for(self, n_samples: int) -> int:
        count = self.n_segments(n_samples)
        if count < 2:
            raise ConfigurationError(
                f"plan.segment_len: a {n_samples}-sample signal holds {count} segment(s) of "
                f"{self.segment_len}, need at least 2"
            )
        return count


def _error_floor(stderr: np.ndarray, value: np.ndarray, what: str) -> np.ndarray:
    """Standard errors floored at machine precision of the estimate they belong to."""
    if not np.all(np.isfinite(stderr)) or np.any(stderr < 0):
        raise DomainError(f"{what} standard errors must be finite and non-negative")
    return np.maximum(stderr, np.finfo(float).eps * np.maximum(np.abs(value), 1.0))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Per-bin power spectrum.

    ``stderr`` is the full error of ``psd``. When ``psd`` is relative to a
    shot-noise ``reference``, ``raw_stderr`` is the error of ``raw_psd``
    alone, which is what remains when two spectra share that reference.
    """

    freqs: np.ndarray
    psd: np.ndarray
    raw_psd: np.ndarray
    stderr: np.ndarray
    n_segments: int
    plan: SegmentPlan
    raw_stderr: Optional[np.ndarray] = None
    reference: Optional["Spectrum"] = None

    def __post_init__(self) -> None:
        if self.raw_stderr is None:
            object.__setattr__(self, "raw_stderr", self.stderr)
        for name in ("freqs", "psd", "raw_psd", "stderr", "raw_stderr"):
            data = np.array(getattr(self, name), dtype=float)
            if data.shape != np.shape(self.freqs):
                raise DimensionError(f"Spectrum {name} has shape {data.shape}, expected {np.shape(self.freqs)}")
            if name == "stderr":
                data = _error_floor(data, self.psd, "Spectrum")
            elif name == "raw_stderr":
                data = _error_floor(data, self.raw_psd, "Spectrum")
            data.flags.writeable = False
            object.__setattr__(self, name, data)
        if self.freqs.size > 1 and np.any(np.diff(self.freqs) <= 0):
            raise DomainError("Spectrum frequencies must be strictly increasing")

    @property
    def conditional_stderr(self) -> np.ndarray:
        """Error of ``psd`` with the shot-noise reference held fixed."""
        if self.reference is None:
            return self.stderr
        return self.raw_stderr * self.psd / self.raw_psd

    def band(self, f_lo: float, f_hi: float) -> "Spectrum":
        """Bins with f_lo <= f <= f_hi."""
        mask = (self.freqs >= f_lo * (1 - 1e-12)) & (self.freqs <= f_hi * (1 + 1e-12))
        if not np.any(mask):
            raise DomainError(f"No spectrum bins between {f_lo:g} and {f_hi:g} Hz")
        return replace(
            self,
            freqs=self.freqs[mask],
            psd=self.psd[mask],
            raw_psd=self.raw_psd[mask],
            stderr=self.stderr[mask],
            raw_stderr=self.raw_stderr[mask],
        )


@dataclass(frozen=True, eq=False)
class BinQuadratures:
    """Per-segment cosine and sine components, shape (n_segments, n_bins)."""

    freqs: np.ndarray
    cos: np.ndarray
    sin: np.ndarray
    segment_len: int

    @property
    def n_segments(self) -> int:
        return self.cos.shape[0]


@dataclass(frozen=True, eq=False)
class CovBlockEstimate:
    bin_freqs: np.ndarray
    matrix: np.ndarray
    stderr: np.ndarray
    component: str
    n_segments: int

    def __post_init__(self) -> None:
        stderr = np.asarray(self.stderr, dtype=float)
        if stderr.shape != np.shape(self.matrix):
            raise DimensionError(f"Block stderr has shape {stderr.shape}, expected {np.shape(self.matrix)}")
        object.__setattr__(self, "stderr", _error_floor(stderr, np.asarray(self.matrix, dtype=float), "Block"))

    @property
    def z_scores(self) -> np.ndarray:
        return self.matrix / self.stderr


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    stderr: float
    n_segments: int


def _check_signal(signal: np.ndarray) -> np.ndarray:
    data = np.asarray(signal, dtype=float)
    if data.ndim != 1:
        raise DimensionError(f"Expected a 1-D signal, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise DomainError("Signal contains non-finite samples")
    return data


def welch_psd(signal: np.ndarray, plan: SegmentPlan) -> Spectrum:
    """Welch power spectrum scaled so unit-variance white noise gives 1.

    The DC and Nyquist bins are dropped. ``stderr`` is the spread of the
    per-segment periodograms over the square root of the segment count.
    """
    data = _check_signal(signal)
    n_segments = plan.validate_for(data.size)
    freqs, _, sxx = sp_signal.spectrogram(
        data,
        fs=plan.sample_rate,
        window=_SCIPY_WINDOWS[plan.window],
        nperseg=plan.segment_len,
        noverlap=plan.noverlap,
        detrend=False,
        return_onesided=True,
        scaling="density",
        mode="psd",
    )
    # one-sided density of unit white noise is 2/fs
    periodograms = sxx[1 : (plan.segment_len + 1) // 2] * plan.sample_rate / 2.0
    raw = periodograms.mean(axis=1)
    stderr = periodograms.std(axis=1, ddof=1) / math.sqrt(n_segments)
    return Spectrum(
        freqs=freqs[1 : (plan.segment_len + 1) // 2],
        psd=raw,
        raw_psd=raw,
        stderr=stderr,
        n_segments=n_segments,
        plan=plan,
    )


def joint_noise_spectrum(
    photocurrent: Photocurrent,
    branch: str,
    plan: SegmentPlan,
    shot_reference: Spectrum,
) -> Spectrum:
    """Spectrum of (i_p -/+ i_c)/sqrt(2) relative to the shot-noise reference."""
    if shot_reference.plan != plan:
        raise ConfigurationError("plan: shot reference was measured with a different segment plan")
    if photocurrent.sample_rate != plan.sample_rate:
        raise ConfigurationError(
            f"plan.sample_rate: {plan.sample_rate:g} Hz does not match the {photocurrent.sample_rate:g} Hz trace"
        )
    if photocurrent.probe.shape != photocurrent.conjugate.shape:
        raise DimensionError("Probe and conjugate photocurrents differ in length")

    joint = welch_psd(photocurrent.joint(branch), plan)
    shot = shot_reference.raw_psd
    psd = joint.raw_psd / shot
    stderr = psd * np.hypot(joint.stderr / joint.raw_psd, shot_reference.stderr / shot)
    return replace(joint, psd=psd, stderr=stderr, raw_stderr=joint.stderr, reference=shot_reference)


def drive_locked_bins(signal: np.ndarray, plan: SegmentPlan, bin_freqs: Optional[np.ndarray] = None) -> BinQuadratures:
    """Demodulate each drive-locked segment at the bin frequencies.

    c_j = (2/M) sum x(t) cos(2 pi f_j t), s_j = (2/M) sum x(t) sin(2 pi f_j t),
    with t counted from the start of each segment.
    """
    if not plan.drive_locked:
        raise ConfigurationError("plan.drive_locked: bin extraction needs a drive-locked plan")
    data = _check_signal(signal)
    n_segments = plan.validate_for(data.size)
    M = plan.segment_len

    if bin_freqs is None:
        bin_freqs = plan.f_drive * np.arange(1, 51)
    bin_freqs = np.asarray(bin_freqs, dtype=float)
    ratio = bin_freqs / plan.resolution
    index = np.rint(ratio).astype(int)
    if np.any(np.abs(ratio - index) > 1e-9 * np.maximum(ratio, 1.0)) or np.any(index < 1) or np.any(index >= M / 2):
        raise ConfigurationError(
            f"grid.bin_spacing: bin frequencies must be interior multiples of the {plan.resolution:g} Hz resolution"
        )

    segments = data[: n_segments * M].reshape(n_segments, M)
    spectrum = np.fft.rfft(segments, axis=1)[:, index]
    return BinQuadratures(
        freqs=bin_freqs,
        cos=2.0 / M * spectrum.real,
        sin=-2.0 / M * spectrum.imag,
        segment_len=M,
    )


def cross_covariance(bins_p: BinQuadratures, bins_c: BinQuadratures, component: str = "cc") -> CovBlockEstimate:
    """Covariance over segments between probe bins (rows) and conjugate bins (columns).

    Entries are scaled by M/2 so vacuum inputs give a unit diagonal on the
    cc and ss components.
    """
    if component not in COMPONENTS:
        raise DomainError(f"Unknown component: {component}. Must be one of {list(COMPONENTS)}")
    if bins_p.n_segments != bins_c.n_segments or bins_p.segment_len != bins_c.segment_len:
        raise DimensionError(
            f"Segment counts differ: {bins_p.n_segments} probe vs {bins_c.n_segments} conjugate"
        )
    n = bins_p.n_segments
    if n < 2:
        raise DimensionError("Covariance estimates need at least 2 segments")

    a = bins_p.cos if component[0] == "c" else bins_p.sin
    b = bins_c.cos if component[1] == "c" else bins_c.sin
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    products = a[:, :, None] * b[:, None, :]
    scale = bins_p.segment_len / 2.0

    matrix = products.sum(axis=0) / (n - 1) * scale
    stderr = products.std(axis=0, ddof=1) / math.sqrt(n) * scale
    return CovBlockEstimate(
        bin_freqs=bins_p.freqs,
        matrix=matrix,
        stderr=stderr,
        component=component,
        n_segments=n,
    )


@lru_cache(maxsize=8)
def shot_reference(cfg: TraceConfig, plan: SegmentPlan, workers: int = 1) -> Spectrum:
    """Difference-current spectrum of a vacuum run, the shot-noise level."""
    if cfg.src.G != 1.0:
        raise DomainError(f"Shot reference needs a unit-gain source, got G={cfg.src.G}")
    logger.debug(f"Calibrating shot noise with {cfg.n_samples} vacuum samples")
    traces = synthesize_source(cfg, workers=workers)
    return welch_psd(homodyne(traces, 0.0, 0.0, cfg).joint("difference"), plan)


def segment_variance(signal: np.ndarray, segment_len: int, n_boot: int = 200, seed: int = 0) -> VarianceEstimate:
    """Mean-square of a zero-mean signal with a segment-bootstrap standard error."""
    data = _check_signal(signal)
    if segment_len < 1:
        raise DomainError("Segment length must be positive")
    n_segments = data.size // segment_len
    if n_segments < 2:
        raise DomainError(f"Need at least 2 segments of {segment_len} samples, got {n_segments}")
    if n_segments < 100:
        logger.warning(f"Bootstrap over only {n_segments} segments; standard errors are rough")

    per_segment = np.mean(data[: n_segments * segment_len].reshape(n_segments, segment_len) ** 2, axis=1)
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, n_segments, size=(n_boot, n_segments))
    boot = per_segment[draws].mean(axis=1)
    return VarianceEstimate(
        value=float(per_segment.mean()),
        stderr=float(boot.std(ddof=1)),
        n_segments=n_segments,
    )


def two_sample_z(a: Spectrum, b: Spectrum) -> np.ndarray:
    """Per-bin z-scores of a.psd - b.psd.

    Spectra normalized by the same shot-noise reference share its error, which
    cancels in the difference, so only their own errors enter.
    """
    if a.freqs.shape != b.freqs.shape or not np.allclose(a.freqs, b.freqs):
        raise DimensionError("Spectra are on different frequency bins")
    if a.reference is not None and a.reference is b.reference:
        return (a.psd - b.psd) / np.hypot(a.conditional_stderr, b.conditional_stderr)
    return (a.psd - b.psd) / np.hypot(a.stderr, b.stderr)


def band_average(spectrum: Spectrum, f_lo: float, f_hi: float) -> Tuple[float, float]:
    band = spectrum.band(f_lo, f_hi)
    n = band.psd.size
    return float(band.psd.mean()), float(math.sqrt(np.sum(band.stderr**2)) / n)
