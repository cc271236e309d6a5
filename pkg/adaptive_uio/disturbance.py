"""Filtered disturbance f̄, its sine/cosine coefficients, and the phasor inversion back to f."""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .base import ConfigError, FloatArray, Record, StreamingStage
from .drem import (
    DEFAULT_EPSILON,
    DremEstimate,
    DremStream,
    KreisselmeierState,
    drem_extract,
    extract_stream,
)
from .numerics import frequency_response

logger = logging.getLogger(__name__)


def compute_fbar(
    q_r: ArrayLike, s_bar: ArrayLike, xi_hat: ArrayLike, b_bar: ArrayLike
) -> FloatArray | float:
    """f̄ = B̄ q_r - S̄ ξ̂(0); accepts single samples or stacked streams."""
    value = np.asarray(q_r, dtype=float) @ np.asarray(b_bar, dtype=float) - np.asarray(
        s_bar, dtype=float
    ) @ np.asarray(xi_hat, dtype=float)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(kw_only=True, frozen=True, eq=False)
class HarmonicEstimate(Record):
    """f̂(t) = c₁ sin ω̂t + c₂ cos ω̂t, the unfiltered counterpart of â."""

    a_hat: FloatArray
    omega: float
    lam: float
    r: int
    coefficients: FloatArray
    warming: bool = False

    @classmethod
    def warming_up(cls, lam: float, r: int) -> "HarmonicEstimate":
        return cls(
            a_hat=np.zeros(2), omega=0.0, lam=lam, r=r, coefficients=np.zeros(2), warming=True
        )

    @property
    def amplitude(self) -> float:
        return float(np.hypot(*self.coefficients))

    @property
    def phase(self) -> float:
        return float(np.arctan2(self.coefficients[1], self.coefficients[0]))

    def __call__(self, t: ArrayLike) -> FloatArray | float:
        times = np.asarray(t, dtype=float)
        c1, c2 = self.coefficients
        value = c1 * np.sin(self.omega * times) + c2 * np.cos(self.omega * times)
        return float(value) if value.ndim == 0 else value


class AmplitudeEstimator(StreamingStage):
    """Second DREM stage on ψ(t) = [sin ω̂t, cos ω̂t] with measurement f̄."""

    name = "amplitude"

    def __init__(self, omega: float, h: float, eps: float = DEFAULT_EPSILON):
        if not omega > 0:
            raise ConfigError(f"amplitude regression needs ω̂ > 0, got {omega}")
        self.omega = float(omega)
        self.eps = eps
        self.extension = KreisselmeierState(2, h)

    def reset(self) -> None:
        self.extension.reset()

    def regressor(self, t: float) -> FloatArray:
        return np.array([np.sin(self.omega * t), np.cos(self.omega * t)])

    def step(self, t: float, fbar: float, dt: float) -> DremEstimate:
        self.extension.step(self.regressor(t), fbar, dt)
        return drem_extract(self.extension, self.eps)

    def run(self, times: ArrayLike, fbar: ArrayLike, dt: float) -> DremStream:
        """Estimates for a whole f̄ stream, the first sample only latching."""
        t = np.asarray(times, dtype=float)
        psi = np.column_stack([np.sin(self.omega * t), np.cos(self.omega * t)])
        return extract_stream(*self.extension.run(psi, fbar, dt), self.eps)


def estimate_amplitudes(
    times: ArrayLike,
    fbar: ArrayLike,
    omega: float,
    h_a: float,
    eps_a: float,
    dt: float,
) -> DremEstimate:
    """Runs the amplitude stage over a sampled f̄ stream and returns the final estimate."""
    samples = np.asarray(fbar, dtype=float)
    if len(samples) == 0:
        raise ConfigError("amplitude estimation needs at least one sample")
    stream = AmplitudeEstimator(omega, h_a, eps_a).run(times, samples, dt)
    return stream.at(len(stream) - 1)


def harmonic_coefficients(a_hat: ArrayLike, omega: float, lam: float, r: int) -> FloatArray:
    """Undoes λʳ/(p+λ)ʳ on a₁ sin ω̂t + a₂ cos ω̂t by phasor division.

    With f̄ = Im(c e^{iω̂t}), c = a₁ + i a₂, the unfiltered phasor is
    c (iω̂ + λ)ʳ / λʳ. Accepts one coefficient pair or a stack of them.
    """
    if not omega > 0:
        raise ConfigError(f"reconstruction needs ω̂ > 0, got {omega}")
    if not lam > 0:
        raise ConfigError(f"filter bandwidth must be positive, got {lam}")
    a = np.asarray(a_hat, dtype=float)
    phasor = (a[..., 0] + 1j * a[..., 1]) / frequency_response(lam, r, 0, omega)
    return np.stack([phasor.real, phasor.imag], axis=-1)


def reconstruct_f(a_hat: ArrayLike, omega: float, lam: float, r: int) -> HarmonicEstimate:
    a = np.asarray(a_hat, dtype=float).ravel()
    return HarmonicEstimate(
        a_hat=a,
        omega=float(omega),
        lam=float(lam),
        r=r,
        coefficients=harmonic_coefficients(a, omega, lam, r),
    )
