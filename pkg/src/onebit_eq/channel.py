"""Multipath MIMO channel synthesis and the block-structured linear operators.

Conventions (fixed throughout the package):
  * a channel realization is the stack of L+1 tap matrices H_0..H_L, each
    M x K (receive antennas x users);
  * block vectors are column-major vectorizations of matrices whose columns
    run in *reversed* time order (newest sample first);
  * with that ordering the banded block-Toeplitz operator carries H_l on the
    l-th block superdiagonal, and its circulant wrap-around is diagonalized
    by the block DFT of :mod:`onebit_eq.numerics` with per-bin response
    H_f[i] = sum_l H_l exp(-2j*pi*l*i/N_b).

Operators are exposed matrix-free; `dense_toeplitz` exists for the normal-
matrix factorization of the time-domain equalizer and for test oracles.
"""

import json
from dataclasses import dataclass

import numpy as np

from .numerics import forward_block_dft_matrix, inverse_block_dft_matrix

# Extended Vehicular A power delay profile (3GPP TS 36.101 Annex B).
EVA_DELAYS_NS = np.array([0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0])
EVA_POWERS_DB = np.array([0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9])


@dataclass(frozen=True)
class ChannelTaps:
    """Immutable stack of tap matrices, shape (L+1, M, K)."""

    taps: np.ndarray

    def __post_init__(self):
        if self.taps.ndim != 3 or self.taps.shape[0] < 1:
            raise ValueError("taps must have shape (L+1, M, K) with L+1 >= 1")

    @property
    def order(self):
        """Channel memory L."""
        return self.taps.shape[0] - 1

    @property
    def n_antennas(self):
        return self.taps.shape[1]

    @property
    def n_users(self):
        return self.taps.shape[2]


@dataclass(frozen=True)
class FrequencyResponse:
    """Per-bin M x K channel matrices, shape (N_b, M, K)."""

    bins: np.ndarray

    @property
    def n_bins(self):
        return self.bins.shape[0]

    @property
    def n_antennas(self):
        return self.bins.shape[1]

    @property
    def n_users(self):
        return self.bins.shape[2]


def generate_eva_taps(n_antennas, n_users, order, rng, sample_period_ns=None):
    """Draw a Rayleigh-fading EVA channel realization.

    Each profile delay is rounded to the nearest tap index at the given
    sample period (delays colliding onto one index have their powers
    summed).  The default period stretches the profile so the last EVA
    delay lands exactly on tap index `order`.  Per (antenna, user) link the
    tap variances sum to one, so the average per-use channel gain is unity.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    if sample_period_ns is None:
        if order == 0:
            # Degenerate single-tap channel: all profile power on tap 0.
            sample_period_ns = float("inf")
        else:
            sample_period_ns = EVA_DELAYS_NS[-1] / order
    if sample_period_ns <= 0:
        raise ValueError("sample_period_ns must be positive")

    if np.isinf(sample_period_ns):
        indices = np.zeros(len(EVA_DELAYS_NS), dtype=int)
    else:
        indices = np.rint(EVA_DELAYS_NS / sample_period_ns).astype(int)
    if indices.max() > order:
        raise ValueError(
            f"sample period {sample_period_ns} ns maps delay "
            f"{EVA_DELAYS_NS[np.argmax(indices)]} ns to tap {indices.max()} > L={order}"
        )

    weights = np.zeros(order + 1)
    lin = 10.0 ** (EVA_POWERS_DB / 10.0)
    for idx, p in zip(indices, lin):
        weights[idx] += p
    weights /= weights.sum()

    taps = np.zeros((order + 1, n_antennas, n_users), dtype=complex)
    active = np.nonzero(weights)[0]
    for l in active:
        s = np.sqrt(weights[l] / 2.0)
        taps[l] = s * (rng.standard_normal((n_antennas, n_users))
                       + 1j * rng.standard_normal((n_antennas, n_users)))
    return ChannelTaps(taps=taps)


def apply_channel(taps, symbols, noise=None, prefix=None):
    """Linear convolution of the symbol stream with the tap matrices.

    symbols is K x T; prefix (K x L) supplies the symbols preceding time 0
    and defaults to zeros (cold start).  Returns the M x T receive matrix.
    """
    h = taps.taps
    order = taps.order
    k, t = symbols.shape
    if k != taps.n_users:
        raise ValueError(f"symbols have {k} rows, channel expects {taps.n_users}")
    if prefix is None:
        prefix = np.zeros((k, order), dtype=complex)
    elif prefix.shape != (k, order):
        raise ValueError(f"prefix must be K x L = ({k}, {order})")
    ext = np.concatenate([prefix, symbols], axis=1)
    out = np.zeros((taps.n_antennas, t), dtype=complex)
    for l in range(order + 1):
        out += h[l] @ ext[:, order - l : order - l + t]
    if noise is not None:
        if noise.shape != out.shape:
            raise ValueError(f"noise shape {noise.shape} != {out.shape}")
        out = out + noise
    return out


def toeplitz_apply(taps, xi):
    """Banded block-Toeplitz operator applied to a stacked K(N_b+L) vector.

    Tap-wise accumulation, O(M*K*(L+1)*N_b); no dense matrix is formed.
    """
    h = taps.taps
    order, k = taps.order, taps.n_users
    xi = np.asarray(xi)
    if xi.ndim != 1 or xi.size % k != 0 or xi.size // k <= order:
        raise ValueError(
            f"vector length {xi.size} incompatible with K={k}, L={order}"
        )
    n_bins = xi.size // k - order
    x = xi.reshape((k, n_bins + order), order="F")
    out = np.zeros((taps.n_antennas, n_bins), dtype=complex)
    for l in range(order + 1):
        out += h[l] @ x[:, l : l + n_bins]
    return out.reshape(-1, order="F")


def dense_toeplitz(taps, n_bins):
    """Materialize the M*N_b x K(N_b+L) block-Toeplitz matrix.

    Needed to form and factor the normal equations of the time-domain
    equalizer (the cubic static cost); the apply paths never call this.
    """
    h = taps.taps
    order, m, k = taps.order, taps.n_antennas, taps.n_users
    mat = np.zeros((m * n_bins, k * (n_bins + order)), dtype=complex)
    for i in range(n_bins):
        for l in range(order + 1):
            j = i + l
            mat[i * m : (i + 1) * m, j * k : (j + 1) * k] = h[l]
    return mat


def frequency_response(taps, n_bins):
    """Per-bin channel matrices H_f[i] = sum_l H_l exp(-2j*pi*l*i/N_b)."""
    if n_bins <= taps.order:
        raise ValueError(f"need N_b > L, got N_b={n_bins}, L={taps.order}")
    padded = np.zeros((n_bins, taps.n_antennas, taps.n_users), dtype=complex)
    padded[: taps.order + 1] = taps.taps
    return FrequencyResponse(bins=np.fft.fft(padded, axis=0))


def _as_bins(channel, n_bins=None):
    if isinstance(channel, FrequencyResponse):
        return channel.bins
    if n_bins is None:
        raise ValueError("n_bins is required when passing raw taps")
    return frequency_response(channel, n_bins).bins


def circulant_apply(channel, xi_c, n_bins=None):
    """Block-circulant operator applied to a stacked K*N_b vector.

    channel may be ChannelTaps (with n_bins) or a FrequencyResponse.
    Implemented as forward block DFT, per-bin multiply, inverse block DFT.
    """
    bins = _as_bins(channel, n_bins)
    nb, m, k = bins.shape
    xi_c = np.asarray(xi_c)
    if xi_c.size != k * nb:
        raise ValueError(f"expected length {k * nb}, got {xi_c.size}")
    xf = forward_block_dft_matrix(xi_c.reshape((k, nb), order="F"))
    zf = np.einsum("nmk,kn->mn", bins, xf)
    return inverse_block_dft_matrix(zf).reshape(-1, order="F")


def adjoint_circulant_apply(channel, v, n_bins=None):
    """Adjoint of :func:`circulant_apply` on a stacked M*N_b vector."""
    bins = _as_bins(channel, n_bins)
    nb, m, k = bins.shape
    v = np.asarray(v)
    if v.size != m * nb:
        raise ValueError(f"expected length {m * nb}, got {v.size}")
    vf = forward_block_dft_matrix(v.reshape((m, nb), order="F"))
    xf = np.einsum("nkm,mn->kn", bins.conj().transpose(0, 2, 1), vf)
    return inverse_block_dft_matrix(xf).reshape(-1, order="F")


def interference_term(taps, x_in, x_c):
    """Wrap-around interference of the circulant approximation.

    Returns the stacked M*N_b correction vector; only the last M*L entries
    can be nonzero.  When x_in equals the wrapped tail of x_c (a cyclic
    prefix), the correction vanishes identically.
    """
    h = taps.taps
    order, m, k = taps.order, taps.n_antennas, taps.n_users
    if x_in.shape != (k, order):
        raise ValueError(f"x_in must be K x L = ({k}, {order})")
    n_bins = x_c.shape[1]
    if x_c.shape != (k, n_bins) or n_bins <= order:
        raise ValueError("x_c must be K x N_b with N_b > L")
    # delta = [vec(x_in); 0] - vec(x_c); only its first L columns are read
    # because the interference operator has zero columns past block L.
    delta = x_in - x_c[:, :order]
    out = np.zeros((m, n_bins), dtype=complex)
    for j in range(order):
        for l in range(j + 1, order + 1):
            out[:, n_bins + j - l] += h[l] @ delta[:, j]
    return out.reshape(-1, order="F")


def taps_to_json(taps):
    """Serialize a channel realization as a JSON document."""
    return json.dumps(
        {
            "M": taps.n_antennas,
            "K": taps.n_users,
            "L": taps.order,
            "taps": [
                [[z.real, z.imag] for z in tap.reshape(-1)] for tap in taps.taps
            ],
        }
    )


def taps_from_json(doc):
    """Inverse of :func:`taps_to_json`."""
    data = json.loads(doc)
    m, k, order = data["M"], data["K"], data["L"]
    taps = np.empty((order + 1, m, k), dtype=complex)
    for l, flat in enumerate(data["taps"]):
        arr = np.array([re + 1j * im for re, im in flat]).reshape(m, k)
        taps[l] = arr
    return ChannelTaps(taps=taps)
