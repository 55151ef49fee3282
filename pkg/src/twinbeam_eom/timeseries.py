"""Monte-Carlo homodyne time traces of twin beams.

Quadrature envelopes are sampled from the Wigner distribution of the twin-beam
state (jointly Gaussian), one unit-variance sample per time step for vacuum.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .analytic import BRANCHES, SourceSpec
from .eom_model import EomSpec, equivalent_beam_spec, instantaneous_phase
from .errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

CHANNELS = ("x_p", "p_p", "x_c", "p_c")
GAIN_PROFILES = ("flat", "lorentzian")

SOURCE_STREAM = 0
ELECTRONIC_STREAM = 1


@dataclass(frozen=True)
class TraceConfig:
    sample_rate: float = 1e8
    n_samples: int = 1_000_000
    seed: int = 0
    src: SourceSpec = field(default_factory=SourceSpec)
    gain_profile: str = "flat"
    half_width_hz: float = 7.5e6
    delay_samples: int = 1
    delay_compensation: Optional[int] = None
    electronic_noise_variance: float = 0.0
    chunk_samples: int = 250_000

    def __post_init__(self) -> None:
        if self.delay_compensation is None:
            object.__setattr__(self, "delay_compensation", self.delay_samples)
        if not self.sample_rate > 0:
            raise ConfigurationError("trace.sample_rate: must be positive")
        if self.n_samples < 2:
            raise ConfigurationError("trace.n_samples: must be at least 2")
        if self.seed < 0:
            raise ConfigurationError("trace.seed: must be a non-negative integer")
        if self.gain_profile not in GAIN_PROFILES:
            raise ConfigurationError(f"trace.gain_profile: {self.gain_profile} is not one of {list(GAIN_PROFILES)}")
        if not self.half_width_hz > 0:
            raise ConfigurationError("trace.half_width_hz: must be positive")
        if self.delay_samples < 0 or self.delay_compensation < 0:
            raise ConfigurationError("trace.delay_samples: delays must be non-negative sample counts")
        if self.electronic_noise_variance < 0:
            raise ConfigurationError("trace.electronic_noise_variance: must be non-negative")
        if self.chunk_samples < 1:
            raise ConfigurationError("trace.chunk_samples: must be positive")


@dataclass(frozen=True, eq=False)
class QuadratureTraces:
    x_p: np.ndarray
    p_p: np.ndarray
    x_c: np.ndarray
    p_c: np.ndarray
    sample_rate: float
    seed: int
    transforms: Tuple[str, ...] = ()

    @property
    def n_samples(self) -> int:
        return self.x_p.size

    def channels(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in CHANNELS}


@dataclass(frozen=True, eq=False)
class Photocurrent:
    probe: np.ndarray
    conjugate: np.ndarray
    theta_p: float
    theta_c: float
    sample_rate: float
    transforms: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.probe)) and np.all(np.isfinite(self.conjugate))):
            raise DomainError("Photocurrent contains non-finite samples")

    def joint(self, branch: str = "difference") -> np.ndarray:
        """(i_p - i_c)/sqrt(2) for the difference branch, (i_p + i_c)/sqrt(2) for the sum."""
        if branch not in BRANCHES:
            raise DomainError(f"Unknown branch: {branch}. Must be one of {list(BRANCHES)}")
        sign = -1.0 if branch == "difference" else 1.0
        return (self.probe + sign * self.conjugate) / math.sqrt(2.0)


def source_covariance(src: SourceSpec) -> np.ndarray:
    """Per-sample covariance of (X_p, P_p, X_c, P_c) for the twin-beam source."""
    G, g = src.G, src.g
    diag = G * G + g * g
    corr = 2.0 * G * g
    return np.array(
        [
            [diag, 0.0, corr, 0.0],
            [0.0, diag, 0.0, -corr],
            [corr, 0.0, diag, 0.0],
            [0.0, -corr, 0.0, diag],
        ]
    )


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _lorentzian_chunk(rng: np.random.Generator, length: int, cfg: TraceConfig) -> np.ndarray:
    """Squeeze white vacuum sideband by sideband with a Lorentzian squeezing parameter."""
    vacuum = rng.standard_normal((length, 4))
    alpha_p = np.fft.fft(vacuum[:, 0] + 1j * vacuum[:, 1], norm="ortho")
    alpha_c = np.fft.fft(vacuum[:, 2] + 1j * vacuum[:, 3], norm="ortho")

    freqs = np.abs(np.fft.fftfreq(length, d=1.0 / cfg.sample_rate))
    r = math.acosh(cfg.src.G) / (1.0 + (freqs / cfg.half_width_hz) ** 2)
    G, g = np.cosh(r), np.sinh(r)

    # probe sideband +k pairs with conjugate sideband -k
    neg = (-np.arange(length)) % length
    alpha_c_neg = alpha_c[neg]
    out_p = G * alpha_p + g * np.conj(alpha_c_neg)
    out_c = (G * alpha_c_neg + g * np.conj(alpha_p))[neg]

    a_p = np.fft.ifft(out_p, norm="ortho")
    a_c = np.fft.ifft(out_c, norm="ortho")
    return np.column_stack([a_p.real, a_p.imag, a_c.real, a_c.imag])


def synthesize_source(cfg: TraceConfig, workers: int = 1) -> QuadratureTraces:
    """Draw the twin-beam quadrature traces.

    The trace is built from fixed-size chunks with their own seed streams, so
    the result depends only on the config, never on ``workers``.
    """
    chol = np.linalg.cholesky(source_covariance(cfg.src))
    starts = list(range(0, cfg.n_samples, cfg.chunk_samples))

    def draw(index: int) -> np.ndarray:
        length = min(cfg.chunk_samples, cfg.n_samples - starts[index])
        rng = _rng(cfg.seed, SOURCE_STREAM, index)
        if cfg.gain_profile == "lorentzian":
            return _lorentzian_chunk(rng, length, cfg)
        return rng.standard_normal((length, 4)) @ chol.T

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        data = np.concatenate(list(pool.map(draw, range(len(starts)))), axis=0)
    logger.debug(f"Synthesized {cfg.n_samples} samples in {len(starts)} chunks (seed {cfg.seed})")

    return QuadratureTraces(
        x_p=data[:, 0].copy(),
        p_p=data[:, 1].copy(),
        x_c=data[:, 2].copy(),
        p_c=data[:, 3].copy(),
        sample_rate=cfg.sample_rate,
        seed=cfg.seed,
        transforms=(f"source G={cfg.src.G:.6g} profile={cfg.gain_profile}",),
    )


def check_phase_locked(sample_rate: float, f_drive: float) -> int:
    ratio = sample_rate / f_drive
    period = int(round(ratio))
    if period < 2 or abs(ratio - period) > 1e-9 * ratio:
        raise ConfigurationError(
            f"trace.sample_rate: {sample_rate:g} Hz is not an integer multiple of the {f_drive:g} Hz drive"
        )
    return period


def apply_eom(
    traces: QuadratureTraces,
    spec_p: Optional[EomSpec] = None,
    spec_c: Optional[EomSpec] = None,
) -> QuadratureTraces:
    """Rotate each beam's (X, P) by its modulator's instantaneous phase."""
    channels = traces.channels()
    transforms = list(traces.transforms)
    t = np.arange(traces.n_samples) / traces.sample_rate

    for spec, beam, (x_key, p_key) in (
        (spec_p, "probe", ("x_p", "p_p")),
        (spec_c, "conjugate", ("x_c", "p_c")),
    ):
        if spec is None or not spec.enabled:
            continue
        if spec.beam != beam:
            raise ConfigurationError(f"eom.beam: modulator for the {beam} slot is configured on {spec.beam}")
        check_phase_locked(traces.sample_rate, spec.f_drive)
        theta = instantaneous_phase(t, equivalent_beam_spec(spec))
        cos, sin = np.cos(theta), np.sin(theta)
        x, p = channels[x_key], channels[p_key]
        channels[x_key], channels[p_key] = x * cos + p * sin, -x * sin + p * cos
        transforms.append(f"eom[{spec.beam},{spec.placement}] m={spec.m:.6g} phi={spec.phi:.6g}")

    return replace(traces, **channels, transforms=tuple(transforms))


def apply_loss_traces(traces: QuadratureTraces, eta: float, noise_seed: int) -> QuadratureTraces:
    """Beamsplitter loss: every channel mixes with fresh unit-variance vacuum."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"Loss fraction must be in [0, 1], got {eta}")
    if eta == 0.0:
        return traces
    vacuum = np.random.default_rng(noise_seed).standard_normal((len(CHANNELS), traces.n_samples))
    keep, mix = math.sqrt(1.0 - eta), math.sqrt(eta)
    channels = {name: keep * data + mix * vacuum[i] for i, (name, data) in enumerate(traces.channels().items())}
    return replace(traces, **channels, transforms=traces.transforms + (f"loss eta={eta:.6g}",))


def homodyne(traces: QuadratureTraces, theta_p: float, theta_c: float, cfg: TraceConfig) -> Photocurrent:
    """Project each beam on X cos(theta) + P sin(theta) and add the detector noise floor."""
    probe = traces.x_p * math.cos(theta_p) + traces.p_p * math.sin(theta_p)
    conjugate = traces.x_c * math.cos(theta_c) + traces.p_c * math.sin(theta_c)
    transforms = list(traces.transforms)
    transforms.append(f"homodyne theta_p={theta_p:.6g} theta_c={theta_c:.6g}")

    if cfg.electronic_noise_variance > 0:
        noise = _rng(cfg.seed, ELECTRONIC_STREAM).standard_normal((2, traces.n_samples))
        noise *= math.sqrt(cfg.electronic_noise_variance)
        probe = probe + noise[0]
        conjugate = conjugate + noise[1]
        transforms.append(f"electronic noise var={cfg.electronic_noise_variance:.6g}")

    # conjugate path delay, then electronic re-alignment
    shift = cfg.delay_samples - cfg.delay_compensation
    if shift:
        conjugate = np.roll(conjugate, shift)
        transforms.append(f"misaligned by {shift} samples")

    return Photocurrent(
        probe=probe,
        conjugate=conjugate,
        theta_p=theta_p,
        theta_c=theta_c,
        sample_rate=traces.sample_rate,
        transforms=tuple(transforms),
    )


def expected_joint_noise(
    src: SourceSpec,
    eoms: Sequence[EomSpec] = (),
    theta_p: float = 0.0,
    theta_c: float = 0.0,
    branch: str = "difference",
    n_points: int = 4096,
) -> float:
    """Time average over one drive period of the instantaneous joint noise.

    At every instant the modulators add their phases to the homodyne phases,
    so the joint noise follows the unmodulated phase sweep evaluated at
    theta_p(t) + theta_c(t) + theta_p + theta_c.
    """
    if branch not in BRANCHES:
        raise DomainError(f"Unknown branch: {branch}. Must be one of {list(BRANCHES)}")
    active = [spec for spec in eoms if spec.enabled]
    drives = {spec.f_drive for spec in active}
    if len(drives) > 1:
        raise ConfigurationError("eom.f_drive: time averaging needs a common drive frequency")
    period = 1.0 / drives.pop() if drives else 1.0
    t = np.arange(n_points) * period / n_points

    phase = np.full(n_points, theta_p + theta_c)
    for spec in active:
        phase = phase + instantaneous_phase(t, spec)

    G, g, eta = src.G, src.g, src.eta
    sign = 1.0 if branch == "difference" else -1.0
    coherence = float(np.mean(np.cos(phase)))
    return (G * G + g * g) * (1.0 - eta) + eta - sign * 2.0 * G * g * (1.0 - eta) * coherence
