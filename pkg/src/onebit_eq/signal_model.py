"""Transmit-side signal model: Gray-mapped 16-QAM, AWGN, 1-bit quantizer.

All randomness flows through explicit counter-based generator streams so a
run is bit-reproducible regardless of how the work is split across workers.
"""

from dataclasses import dataclass

import numpy as np

BITS_PER_SYMBOL = 4

# 2-bit Gray code per rail on amplitude levels (-3, -1, +1, +3): adjacent
# levels differ in exactly one bit.
_GRAY2_TO_LEVEL = {(0, 0): -3, (0, 1): -1, (1, 1): +1, (1, 0): +3}

# Mean square of the unscaled 16-QAM grid {+-1, +-3}^2.
_GRID_ENERGY = 10.0


def rng_stream(seed, *key):
    """Named, splittable RNG stream (Philox counter-based generator).

    Streams derived from the same seed but different keys are independent;
    the same (seed, key) always yields the same sequence, so per-work-item
    streams make parallel runs deterministic.
    """
    seq = np.random.SeedSequence(entropy=int(seed),
                                 spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class Constellation16QAM:
    """Gray-mapped 16-QAM scaled to a given average symbol energy.

    points[label] is the constellation point whose 4-bit label is `label`
    (I rail from the two high bits, Q rail from the two low bits).
    """

    points: np.ndarray       # (16,) complex, indexed by label
    bit_labels: np.ndarray   # (16, 4) int
    symbol_energy: float

    @classmethod
    def from_energy(cls, symbol_energy):
        if symbol_energy <= 0:
            raise ValueError("symbol_energy must be positive")
        scale = np.sqrt(symbol_energy / _GRID_ENERGY)
        points = np.empty(16, dtype=complex)
        labels = np.empty((16, 4), dtype=int)
        for label in range(16):
            b = [(label >> (3 - i)) & 1 for i in range(4)]
            re = _GRAY2_TO_LEVEL[(b[0], b[1])]
            im = _GRAY2_TO_LEVEL[(b[2], b[3])]
            points[label] = scale * (re + 1j * im)
            labels[label] = b
        return cls(points=points, bit_labels=labels, symbol_energy=float(symbol_energy))


@dataclass(frozen=True)
class SymbolFrame:
    """A users-by-time symbol matrix together with the bits it encodes."""

    symbols: np.ndarray      # (K, T) complex
    source_bits: np.ndarray  # (K, 4*T) int


@dataclass(frozen=True)
class QuantizedBlock:
    """One M x N_b block of 1-bit observations, columns in reversed time
    order (column j holds the sample at start_index + N_b - 1 - j)."""

    samples: np.ndarray
    start_index: int

    def validate(self):
        if not np.all(np.abs(self.samples.real) == 1.0) or not np.all(
            np.abs(self.samples.imag) == 1.0
        ):
            raise ValueError("quantized samples must lie in {+-1 +-1j}")


def modulate(bits, symbol_energy):
    """Map a K x 4T bit matrix onto Gray-coded 16-QAM symbols."""
    bits = np.asarray(bits, dtype=int)
    if bits.ndim != 2 or bits.shape[1] % BITS_PER_SYMBOL != 0:
        raise ValueError(
            f"bit matrix must be K x 4T, got shape {getattr(bits, 'shape', None)}"
        )
    const = Constellation16QAM.from_energy(symbol_energy)
    k, nbits = bits.shape
    t = nbits // BITS_PER_SYMBOL
    groups = bits.reshape(k, t, BITS_PER_SYMBOL)
    labels = (groups << np.arange(3, -1, -1)).sum(axis=2)
    return SymbolFrame(symbols=const.points[labels], source_bits=bits)


def demodulate_hard(estimates, symbol_energy):
    """Nearest-point hard decisions; ties go to the smaller label."""
    est = np.asarray(estimates, dtype=complex)
    const = Constellation16QAM.from_energy(symbol_energy)
    # argmin returns the first (smallest-label) index among exact ties
    d2 = np.abs(est[..., None] - const.points) ** 2
    labels = np.argmin(d2, axis=-1)
    bits = const.bit_labels[labels]
    return bits.reshape(*est.shape[:-1], est.shape[-1] * BITS_PER_SYMBOL)


def quantize_1bit(y):
    """Elementwise 1-bit quantizer keeping only the two signs.

    sign(0) = -1, making the quantizer a total deterministic function with
    output alphabet exactly {+-1 +-1j}.
    """
    y = np.asarray(y)
    re = np.where(y.real > 0, 1.0, -1.0)
    im = np.where(y.imag > 0, 1.0, -1.0)
    return re + 1j * im


def draw_awgn(n_rows, n_cols, noise_var, rng):
    """Circularly-symmetric complex Gaussian matrix, variance noise_var per
    entry (noise_var/2 per real and imaginary part)."""
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    s = np.sqrt(noise_var / 2.0)
    return s * (rng.standard_normal((n_rows, n_cols))
                + 1j * rng.standard_normal((n_rows, n_cols)))
