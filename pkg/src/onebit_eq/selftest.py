"""Independent numerical oracles and the runtime verification suite.

The oracles here deliberately avoid the code paths they check: the
conditional-mean oracle integrates the truncated Gaussian numerically, and
the dense operator oracles are built entry by entry from the block
definitions rather than through the FFT pipeline.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import equalizers, numerics
from .channel import ChannelTaps, circulant_apply, interference_term, toeplitz_apply
from .equalizers import em_m_step_freq, overlap_discard_schedule
from .channel import frequency_response


def truncated_gaussian_mean_quadrature(sign, z, noise_var):
    """Mean of N(z, noise_var/2) truncated to the half-line chosen by sign.

    Pure quadrature: the integrand is rescaled by its peak value so the
    ratio of the two integrals stays well-conditioned even when the
    observed sign is tens of standard deviations against the mean.
    """
    s = np.sqrt(noise_var / 2.0)
    if sign > 0:
        a, b = 0.0, max(10.0 * s, z + 45.0 * s)
    else:
        a, b = min(-10.0 * s, z - 45.0 * s), 0.0
    peak = min(max(z, a), b)
    c = ((peak - z) / s) ** 2 / 2.0

    def weight(y):
        return np.exp(-(((y - z) / s) ** 2) / 2.0 + c)

    den, _ = integrate.quad(weight, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
    num, _ = integrate.quad(
        lambda y: y * weight(y), a, b, epsabs=1e-14, epsrel=1e-12, limit=200
    )
    return num / den


def em_e_step_quadrature(r, z, noise_var):
    """Quadrature version of the elementwise conditional-mean step."""
    re = truncated_gaussian_mean_quadrature(np.real(r), np.real(z), noise_var)
    im = truncated_gaussian_mean_quadrature(np.imag(r), np.imag(z), noise_var)
    return re + 1j * im


def dense_circulant_oracle(taps, n_bins):
    """Block-circulant matrix built directly from its definition:
    block (i, j) = H_((j-i) mod N_b) whenever that offset is at most L."""
    h = taps.taps
    order, m, k = taps.order, taps.n_antennas, taps.n_users
    mat = np.zeros((m * n_bins, k * n_bins), dtype=complex)
    for i in range(n_bins):
        for j in range(n_bins):
            off = (j - i) % n_bins
            if off <= order:
                mat[i * m : (i + 1) * m, j * k : (j + 1) * k] = h[off]
    return mat


def dense_interference_oracle(taps, n_bins):
    """Wrap-around interference operator built from its definition:
    block (i, j) = H_(N_b + j - i) for j < L whenever the index is valid."""
    h = taps.taps
    order, m, k = taps.order, taps.n_antennas, taps.n_users
    mat = np.zeros((m * n_bins, k * n_bins), dtype=complex)
    for j in range(order):
        for i in range(n_bins):
            t = n_bins + j - i
            if 0 <= t <= order:
                mat[i * m : (i + 1) * m, j * k : (j + 1) * k] = h[t]
    return mat


def block_dft_dense(n_streams, n_bins, direction):
    """Materialize (F kron I_S) column by column through block_dft."""
    n = n_streams * n_bins
    mat = np.empty((n, n), dtype=complex)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        mat[:, j] = numerics.block_dft(e, n_streams, direction)
    return mat


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_taps(rng, m, k, order):
    scale = 1.0 / np.sqrt(2 * (order + 1))
    taps = scale * (
        rng.standard_normal((order + 1, m, k))
        + 1j * rng.standard_normal((order + 1, m, k))
    )
    return ChannelTaps(taps=taps)


def check_e_step_quadrature(seed=0, n_cases=200, tol=1e-8):
    """Closed-form conditional mean vs adaptive quadrature."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        noise_var = float(rng.uniform(0.25, 4.0))
        sigma = np.sqrt(noise_var)
        scale = rng.uniform(0.0, 30.0) * sigma
        z = scale * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
        r = (1.0 if rng.random() < 0.5 else -1.0) + 1j * (
            1.0 if rng.random() < 0.5 else -1.0
        )
        closed = equalizers.em_e_step(
            np.array([r]), np.array([z]), noise_var
        )[0]
        reference = em_e_step_quadrature(r, z, noise_var)
        worst = max(worst, abs(closed - reference))
    return CheckResult(
        "e_step_quadrature", worst <= tol, f"max |closed - quadrature| = {worst:.3e}"
    )


def check_circulant_diagonalization(seed=0, n_cases=10, tol=1e-10):
    """Dense circulant equals inverse-DFT * per-bin response * DFT."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        order = int(rng.integers(0, 4))
        n_bins = int(rng.integers(order + 1, 13))
        taps = _random_taps(rng, m, k, order)
        dense = dense_circulant_oracle(taps, n_bins)
        bins = frequency_response(taps, n_bins).bins
        blockdiag = np.zeros((m * n_bins, k * n_bins), dtype=complex)
        for i in range(n_bins):
            blockdiag[i * m : (i + 1) * m, i * k : (i + 1) * k] = bins[i]
        via_dft = (
            block_dft_dense(m, n_bins, "inverse")
            @ blockdiag
            @ block_dft_dense(k, n_bins, "forward")
        )
        worst = max(worst, float(np.max(np.abs(dense - via_dft))))
    return CheckResult(
        "circulant_diagonalization", worst <= tol, f"max deviation = {worst:.3e}"
    )


def check_decomposition_identity(seed=0, n_cases=20, tol=1e-12):
    """Toeplitz action equals circulant action plus the interference term."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        m = int(rng.integers(1, 5))
        k = int(rng.integers(1, 5))
        order = int(rng.integers(0, 4))
        n_bins = int(rng.integers(order + 1, 17))
        taps = _random_taps(rng, m, k, order)
        x = rng.standard_normal((k, n_bins + order)) + 1j * rng.standard_normal(
            (k, n_bins + order)
        )
        lhs = toeplitz_apply(taps, x.reshape(-1, order="F"))
        rhs = circulant_apply(
            taps, x[:, :n_bins].reshape(-1, order="F"), n_bins
        ) + interference_term(taps, x[:, n_bins:], x[:, :n_bins])
        scale = max(1.0, float(np.max(np.abs(lhs))))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return CheckResult(
        "decomposition_identity", worst <= tol, f"max relative deviation = {worst:.3e}"
    )


def check_schedule_coverage(seed=0, n_cases=200):
    """Every frame index is kept exactly once by the overlap-discard plan."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        n_bins = int(rng.integers(2, 64))
        overlap = int(rng.integers(0, n_bins))
        total = int(rng.integers(n_bins, 6 * n_bins))
        kept = np.zeros(total, dtype=int)
        for blk in overlap_discard_schedule(total, n_bins, overlap):
            kept[blk.start + blk.keep_from : blk.start + blk.keep_to] += 1
        if not np.all(kept == 1):
            bad += 1
    return CheckResult(
        "schedule_coverage", bad == 0, f"{bad} of {n_cases} schedules defective"
    )


def check_m_step_equivalence(seed=0, n_cases=10, tol=1e-8):
    """FFT-domain M-step equals the dense circulant-model solve."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        order = int(rng.integers(0, 4))
        n_bins = int(rng.integers(order + 1, 13))
        taps = _random_taps(rng, m, k, order)
        noise_var = float(rng.uniform(0.2, 2.0))
        symbol_energy = float(rng.uniform(0.5, 5.0))
        y = rng.standard_normal(m * n_bins) + 1j * rng.standard_normal(m * n_bins)
        dense = dense_circulant_oracle(taps, n_bins)
        gram = dense.conj().T @ dense + (noise_var / symbol_energy) * np.eye(
            k * n_bins
        )
        ref = np.linalg.solve(gram, dense.conj().T @ y)
        got = em_m_step_freq(
            frequency_response(taps, n_bins), y, noise_var, symbol_energy
        )
        scale = max(1.0, float(np.max(np.abs(ref))))
        worst = max(worst, float(np.max(np.abs(ref - got))) / scale)
    return CheckResult(
        "m_step_equivalence", worst <= tol, f"max relative deviation = {worst:.3e}"
    )


ALL_CHECKS = (
    check_e_step_quadrature,
    check_circulant_diagonalization,
    check_decomposition_identity,
    check_schedule_coverage,
    check_m_step_equivalence,
)


def run_selftest(seed=0):
    """Run all checks; returns (results, report_hash)."""
    results = [check(seed=seed) for check in ALL_CHECKS]
    digest = hashlib.sha256()
    for res in results:
        digest.update(f"{res.name}|{res.passed}|{res.detail}\n".encode())
    return results, digest.hexdigest()
