"""Euclidean-projection initialization for l1-constrained channels.

Shrinking a float channel onto an l1 ball before quantization-aware training
keeps the large entries nearly intact and zeroes the small ones, rather than
scaling everything down uniformly.  The projection is the classic sort-based
soft-threshold: sort magnitudes, find the largest prefix whose running average
still leaves positive mass after paying for the radius, and subtract that
threshold from every magnitude, clipping at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import BitWidths, a2q_limit
from .errors import NonFiniteInputError, NonPositiveRadiusError
from .quantizers import ChannelWeights, Variant

# exponent used when a channel (or its norm) is identically zero; 2^-30 is far
# below any realistic scale but keeps every downstream log finite
ZERO_EXPONENT = -30.0


@dataclass(frozen=True)
class ProjectionResult:
    """v_star: the projected vector; theta: the soft threshold (0 when inactive)."""

    v_star: np.ndarray
    theta: float
    active: bool


def project_l1_ball(w, radius: float) -> ProjectionResult:
    """Euclidean projection of w onto {v : ||v||_1 <= radius}.

    Inactive (returns w unchanged, theta 0) when w is already inside the ball.
    Otherwise the result sits exactly on the boundary, preserves signs, and
    never grows any coordinate's magnitude.
    """
    if not (radius > 0.0 and math.isfinite(radius)):
        raise NonPositiveRadiusError(f"radius must be positive and finite, got {radius!r}")
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    if not np.all(np.isfinite(w_arr)):
        raise NonFiniteInputError("w must be finite")

    mags = np.abs(w_arr)
    if float(mags.sum()) <= radius:
        return ProjectionResult(w_arr.copy(), 0.0, False)

    mu = np.sort(mags)[::-1]
    csum = np.cumsum(mu)
    idx = np.arange(1, w_arr.size + 1)
    # rho: largest prefix length whose entries stay positive after the shift
    positive = mu - (csum - radius) / idx > 0
    rho = int(idx[positive][-1])
    theta = float((csum[rho - 1] - radius) / rho)
    v_star = np.sign(w_arr) * np.maximum(mags - theta, 0.0)
    return ProjectionResult(v_star, theta, True)


def init_scale(w, M: int) -> float:
    """Per-channel scale mapping the largest float magnitude onto the top M-bit code."""
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    if not np.all(np.isfinite(w_arr)):
        raise NonFiniteInputError("w must be finite")
    top = float(np.abs(w_arr).max())
    if top == 0.0:
        return 2.0 ** ZERO_EXPONENT
    return top / ((1 << (M - 1)) - 1)


def ep_init(w, bits: BitWidths, variant: Variant = Variant.A2Q) -> ChannelWeights:
    """Turn a float channel into an in-budget (v, t, d) starting point.

    The projection radius is the scale times the uncentered l1 budget for both
    constrained variants; the centered quantizer only tightens from there.  The
    norm exponent starts at log2 of the projected l1 mass so the quantizer's
    min gate is initially inactive.
    """
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    s = init_scale(w_arr, bits.M)
    radius = s * float(a2q_limit(bits.P, bits.N, bits.act_signed))
    proj = project_l1_ball(w_arr, radius)
    g = float(np.abs(proj.v_star).sum())
    t = math.log2(g) if g > 0.0 else ZERO_EXPONENT
    return ChannelWeights(v=proj.v_star, t=t, d=math.log2(s))


def weight_quant_error(qw, w_ref, normalized: bool = False) -> float:
    """Half squared error between quantized and reference weights.

    normalized divides by the reference's half squared norm; 0/0 is defined as 0
    (an all-zero channel quantized to zeros is a perfect match).
    """
    qw_arr = np.asarray(qw, dtype=float)
    w_arr = np.asarray(w_ref, dtype=float)
    if qw_arr.shape != w_arr.shape:
        raise ValueError(f"shape mismatch: {qw_arr.shape} vs {w_arr.shape}")
    if not (np.all(np.isfinite(qw_arr)) and np.all(np.isfinite(w_arr))):
        raise NonFiniteInputError("inputs must be finite")
    err = 0.5 * float(np.sum((qw_arr - w_arr) ** 2))
    if not normalized:
        return err
    ref = 0.5 * float(np.sum(w_arr**2))
    if ref == 0.0:
        return 0.0
    return err / ref
