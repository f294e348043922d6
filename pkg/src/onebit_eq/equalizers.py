"""Detectors for 1-bit quantized block observations.

Two model families share one EM loop:

  * exact: banded block-Toeplitz operator, estimates K(N_b+L) symbols per
    block (the in-block symbols plus the L preceding ones);
  * mismatched: block-circulant approximation, estimates K*N_b symbols and
    runs entirely on FFT pipelines.

All static quantities (the regularized normal-matrix factorization, the
per-bin equalizer matrices, the Bussgang filter) are computed once per
channel realization and reused across blocks and EM iterations; the state
objects below own them and are safe to share read-only across workers.

Per-block inputs and outputs follow the package-wide reversed-time column
convention (column j of an M x N_b block holds time offset N_b-1-j).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .channel import (
    ChannelTaps,
    FrequencyResponse,
    dense_toeplitz,
    frequency_response,
    toeplitz_apply,
)
from .numerics import forward_block_dft_matrix, inverse_block_dft_matrix
from .signal_model import QuantizedBlock

INITIALIZERS = ("wf_quantized", "wf_unquantized", "zeros", "given")


@dataclass(frozen=True)
class EmPolicy:
    """Iteration budget and stopping rule of the EM loop."""

    max_iterations: int = 1000
    rel_tolerance: float = 1e-3
    initializer: str = "wf_quantized"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.rel_tolerance < 0:
            raise ValueError("rel_tolerance must be >= 0")
        if self.initializer not in INITIALIZERS:
            raise ValueError(f"initializer must be one of {INITIALIZERS}")


@dataclass
class EqualizerEstimate:
    """Symbol estimates plus per-block diagnostics.

    symbols is K x N with columns in the block's reversed-time order
    (N = N_b+L for the exact model, N_b for the mismatched one).
    multiply_count tallies only the EM dynamic work, using each path's
    documented accounting convention; initializer cost is excluded.
    """

    symbols: np.ndarray
    iterations_used: int
    residual_history: list
    multiply_count: int
    diagnostics: dict = field(default_factory=dict)


def em_e_step(r_vec, z_vec, noise_var):
    """Conditional mean of the unquantized signal given signs and a guess.

    Elementwise, per real/imaginary rail: the mean of a Gaussian with mean
    z and variance noise_var/2 truncated to the half-line selected by the
    observed sign.  Finite for every finite input by the Mills-ratio
    stability contract.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    r = np.asarray(r_vec)
    z = np.asarray(z_vec)
    s = np.sqrt(noise_var / 2.0)
    w_re = r.real * z.real / s
    w_im = r.imag * z.imag / s
    # module-level lookup keeps the fault-injection hook of the selftest alive
    corr = r.real * numerics.mills_ratio(w_re) + 1j * r.imag * numerics.mills_ratio(w_im)
    return s * corr + z


class ExactModelState:
    """Shared read-only workspace for the exact block-Toeplitz model."""

    model = "exact"

    def __init__(self, taps, n_bins, noise_var, symbol_energy):
        if not isinstance(taps, ChannelTaps):
            raise TypeError("exact model requires ChannelTaps")
        if n_bins <= taps.order:
            raise ValueError(f"need N_b > L, got N_b={n_bins}, L={taps.order}")
        self.taps = taps
        self.n_bins = int(n_bins)
        self.noise_var = float(noise_var)
        self.symbol_energy = float(symbol_energy)
        self.n_antennas = taps.n_antennas
        self.n_users = taps.n_users
        self.n_unknowns = taps.n_users * (n_bins + taps.order)

        # Static part: form and invert the regularized normal equations once;
        # the result is the dense space-time equalizer applied per M-step.
        h = dense_toeplitz(taps, n_bins)
        self._dense = h
        gram = h.conj().T @ h
        gram[np.diag_indices_from(gram)] += self.noise_var / self.symbol_energy
        self.equalizer_matrix = np.linalg.solve(gram, h.conj().T)
        self._wf_quantized = None

    # counter convention: one complex multiply per matrix entry touched,
    # plus one per observation for the E-step scaling
    @property
    def iteration_multiplies(self):
        mnb = self.n_antennas * self.n_bins
        return mnb * (self.n_unknowns + 1) + self.n_unknowns * mnb

    def project(self, xi):
        """z = A xi without materializing A."""
        return toeplitz_apply(self.taps, xi)

    def m_step(self, y_hat):
        return self.equalizer_matrix @ y_hat

    def wf_unquantized(self, r_vec):
        """Regularized LS treating the signs as if they were unquantized."""
        return self.equalizer_matrix @ r_vec

    def wf_quantized(self, r_vec):
        """Bussgang-linearized Wiener filter on the 1-bit observations."""
        if self._wf_quantized is None:
            self._wf_quantized, self.wf_diagnostics = _dense_bussgang_filter(
                self._dense, self.noise_var, self.symbol_energy
            )
        return self._wf_quantized @ (np.asarray(r_vec) / np.sqrt(2.0))


class CirculantModelState:
    """Shared read-only workspace for the mismatched block-circulant model."""

    model = "mismatched"

    def __init__(self, channel, n_bins, noise_var, symbol_energy):
        if isinstance(channel, FrequencyResponse):
            if channel.n_bins != n_bins:
                raise ValueError("frequency response has a different bin count")
            self.bins = channel.bins
        else:
            self.bins = frequency_response(channel, n_bins).bins
        self.n_bins = int(n_bins)
        self.noise_var = float(noise_var)
        self.symbol_energy = float(symbol_energy)
        self.n_antennas = self.bins.shape[1]
        self.n_users = self.bins.shape[2]
        self.n_unknowns = self.n_users * self.n_bins

        # Static part: per-bin regularized inverses, computed once.
        bins_h = self.bins.conj().transpose(0, 2, 1)
        gram = bins_h @ self.bins
        lam = self.noise_var / self.symbol_energy
        gram[:, np.arange(self.n_users), np.arange(self.n_users)] += lam
        self.m_step_bins = np.linalg.solve(gram, bins_h)  # (N_b, K, M)
        self._wf_bins = None

    @property
    def iteration_multiplies(self):
        # FFT/IFFT of the data blocks plus the per-bin products, for the
        # projection+E-step and again for the M-step.
        log2n = int(round(math.log2(self.n_bins)))
        m, k, nb = self.n_antennas, self.n_users, self.n_bins
        return 2 * ((m + k) * log2n + k * m) * nb

    def project(self, xi):
        xf = forward_block_dft_matrix(
            np.asarray(xi).reshape((self.n_users, self.n_bins), order="F")
        )
        zf = np.einsum("nmk,kn->mn", self.bins, xf)
        return inverse_block_dft_matrix(zf).reshape(-1, order="F")

    def m_step(self, y_hat):
        yf = forward_block_dft_matrix(
            np.asarray(y_hat).reshape((self.n_antennas, self.n_bins), order="F")
        )
        xf = np.einsum("nkm,mn->kn", self.m_step_bins, yf)
        return inverse_block_dft_matrix(xf).reshape(-1, order="F")

    def wf_unquantized(self, r_vec):
        return self.m_step(r_vec)

    def wf_quantized(self, r_vec):
        if self._wf_bins is None:
            self._wf_bins, self.wf_diagnostics = _circulant_bussgang_bins(
                self.bins, self.noise_var, self.symbol_energy
            )
        rf = forward_block_dft_matrix(
            (np.asarray(r_vec) / np.sqrt(2.0)).reshape(
                (self.n_antennas, self.n_bins), order="F"
            )
        )
        xf = np.einsum("nkm,mn->kn", self._wf_bins, rf)
        return inverse_block_dft_matrix(xf).reshape(-1, order="F")


def _loaded_solve(mats, rhs):
    """Batched/dense Hermitian solve with a diagonal-loading fallback.

    Returns (solution, loaded) where loaded reports whether the 1e-10
    trace/dim loading had to be applied.
    """
    try:
        sol = np.linalg.solve(mats, rhs)
        if np.all(np.isfinite(sol)):
            return sol, False
    except np.linalg.LinAlgError:
        pass
    mats = np.array(mats, copy=True)
    n = mats.shape[-1]
    tr = np.einsum("...ii->...", mats).real / n
    idx = np.arange(n)
    mats[..., idx, idx] += 1e-10 * tr[..., None]
    return np.linalg.solve(mats, rhs), True


def _arcsine_covariance(cy_blocks, d):
    """Arcsine law mapping normalized input covariance blocks to the
    covariance of the unit-energy quantizer output."""
    denom = np.sqrt(np.outer(d, d))
    rho = cy_blocks / denom
    return (2.0 / np.pi) * (
        np.arcsin(np.clip(rho.real, -1.0, 1.0))
        + 1j * np.arcsin(np.clip(rho.imag, -1.0, 1.0))
    )


def _dense_bussgang_filter(h, noise_var, symbol_energy):
    """Dense quantization-aware Wiener filter for an arbitrary operator.

    Models the unit-energy quantizer output as gain*y + distortion with the
    Bussgang gain sqrt(2/pi)*diag(C_y)^(-1/2) and the arcsine-law output
    covariance; returns the linear-MMSE matrix mapping the normalized signs
    to the symbol estimate.
    """
    cy = symbol_energy * (h @ h.conj().T)
    cy[np.diag_indices_from(cy)] += noise_var
    d = cy.diagonal().real
    cr = _arcsine_covariance(cy, d)
    gain = np.sqrt(2.0 / np.pi) / np.sqrt(d)
    sol, loaded = _loaded_solve(cr, gain[:, None] * h)
    return symbol_energy * sol.conj().T, {"diagonal_loading": loaded}


def _circulant_bussgang_bins(bins, noise_var, symbol_energy):
    """Per-bin quantization-aware Wiener filter under the block-circulant
    covariance approximation.

    The sign-output covariance is obtained by taking the per-bin input
    covariances to lag-domain blocks, applying the arcsine law elementwise
    (which preserves block-circulant structure), and transforming back.
    """
    nb, m, k = bins.shape
    cy_f = symbol_energy * (bins @ bins.conj().transpose(0, 2, 1))
    cy_f[:, np.arange(m), np.arange(m)] += noise_var
    cy_lag = np.fft.ifft(cy_f, axis=0)
    d = cy_lag[0].diagonal().real
    cr_lag = _arcsine_covariance(cy_lag, d)
    cr_f = np.fft.fft(cr_lag, axis=0)
    gain = np.sqrt(2.0 / np.pi) / np.sqrt(d)
    sol, loaded = _loaded_solve(cr_f, gain[:, None] * bins)
    wf_bins = symbol_energy * sol.conj().transpose(0, 2, 1)  # (N_b, K, M)
    return wf_bins, {"diagonal_loading": loaded}


def make_state(model, channel, n_bins, noise_var, symbol_energy):
    """Build the per-realization workspace for `model` in {exact, mismatched}."""
    if model == "exact":
        return ExactModelState(channel, n_bins, noise_var, symbol_energy)
    if model == "mismatched":
        return CirculantModelState(channel, n_bins, noise_var, symbol_energy)
    raise ValueError(f"unknown model {model!r}")


def _as_vec(block):
    if isinstance(block, QuantizedBlock):
        block = block.samples
    block = np.asarray(block)
    return block.reshape(-1, order="F") if block.ndim == 2 else block


def wf_unquantized(channel, r_block, noise_var, symbol_energy,
                   model="mismatched", n_bins=None):
    """One-shot quantization-blind Wiener filter; returns a K x N matrix."""
    vec = _as_vec(r_block)
    if n_bins is None:
        n_bins = _infer_bins(channel, r_block, vec)
    state = make_state(model, channel, n_bins, noise_var, symbol_energy)
    est = state.wf_unquantized(vec)
    return est.reshape((state.n_users, -1), order="F")


def wf_quantized(channel, r_block, noise_var, symbol_energy,
                 model="mismatched", n_bins=None):
    """One-shot quantization-aware (Bussgang) Wiener filter."""
    vec = _as_vec(r_block)
    if n_bins is None:
        n_bins = _infer_bins(channel, r_block, vec)
    state = make_state(model, channel, n_bins, noise_var, symbol_energy)
    est = state.wf_quantized(vec)
    return est.reshape((state.n_users, -1), order="F")


def _infer_bins(channel, r_block, vec):
    r_block = np.asarray(r_block)
    if r_block.ndim == 2:
        return r_block.shape[1]
    if isinstance(channel, FrequencyResponse):
        return channel.n_bins
    return vec.size // channel.n_antennas


def em_m_step_time(taps, y_hat, noise_var, symbol_energy):
    """One-shot regularized LS solve against the exact-model operator."""
    n_bins = np.asarray(y_hat).size // taps.n_antennas
    state = ExactModelState(taps, n_bins, noise_var, symbol_energy)
    return state.m_step(np.asarray(y_hat))


def em_m_step_freq(freq, y_hat, noise_var, symbol_energy):
    """One-shot FFT-domain M-step under the mismatched model."""
    state = CirculantModelState(freq, freq.n_bins, noise_var, symbol_energy)
    return state.m_step(np.asarray(y_hat))


def em_equalize(state, r_block, policy=None, init=None):
    """Iterate conditional-mean reconstruction and linear re-estimation.

    state is an ExactModelState or CirculantModelState; r_block is the
    M x N_b matrix (or stacked vector) of 1-bit observations.  Stops after
    max_iterations or once the relative change of the estimate drops to
    rel_tolerance.
    """
    policy = policy or EmPolicy()
    r_vec = _as_vec(r_block)
    if r_vec.size != state.n_antennas * state.n_bins:
        raise ValueError(
            f"observation length {r_vec.size} != M*N_b = "
            f"{state.n_antennas * state.n_bins}"
        )

    if policy.initializer == "given":
        if init is None:
            raise ValueError("initializer 'given' requires an init estimate")
        xi = _as_vec(init).astype(complex)
        if xi.size != state.n_unknowns:
            raise ValueError(
                f"init length {xi.size} != expected {state.n_unknowns}"
            )
    elif policy.initializer == "wf_quantized":
        xi = state.wf_quantized(r_vec)
    elif policy.initializer == "wf_unquantized":
        xi = state.wf_unquantized(r_vec)
    else:
        xi = np.zeros(state.n_unknowns, dtype=complex)

    history = []
    multiplies = 0
    iterations = 0
    for _ in range(policy.max_iterations):
        z = state.project(xi)
        y_hat = em_e_step(r_vec, z, state.noise_var)
        xi_new = state.m_step(y_hat)
        multiplies += state.iteration_multiplies
        iterations += 1
        diff = float(np.linalg.norm(xi_new - xi))
        scale = float(np.linalg.norm(xi_new))
        res = diff / scale if scale > 0 else (0.0 if diff == 0.0 else np.inf)
        history.append(res)
        xi = xi_new
        if res <= policy.rel_tolerance:
            break

    symbols = xi.reshape((state.n_users, -1), order="F")
    return EqualizerEstimate(
        symbols=symbols,
        iterations_used=iterations,
        residual_history=history,
        multiply_count=multiplies,
        diagnostics=getattr(state, "wf_diagnostics", {}),
    )


@dataclass(frozen=True)
class BlockSchedule:
    """One overlap-discard block: absolute start plus the kept index range
    relative to the block (half-open)."""

    start: int
    keep_from: int
    keep_to: int


def overlap_discard_schedule(total, block_length, overlap):
    """Partition [0, total) into overlapping blocks with edge-discarding.

    Consecutive blocks advance by block_length - overlap; interior blocks
    drop ceil(overlap/2) leading and floor(overlap/2) trailing estimates.
    The first block keeps its head, the last keeps through total-1 (shifted
    back if the stride overshoots), so every index is kept exactly once.
    """
    if not 0 <= overlap < block_length:
        raise ValueError(f"need 0 <= overlap < block length, got {overlap}")
    if total < block_length:
        raise ValueError(f"frame ({total}) shorter than one block ({block_length})")
    l_post = overlap // 2
    stride = block_length - overlap

    blocks = []
    pos = 0  # next absolute index to be kept
    start = 0
    while True:
        if start + block_length >= total:
            start = total - block_length
            blocks.append(BlockSchedule(start, pos - start, block_length))
            break
        keep_to = start + block_length - l_post
        blocks.append(BlockSchedule(start, pos - start, keep_to - start))
        pos = keep_to
        start += stride
    return blocks
