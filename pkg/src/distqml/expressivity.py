"""Fourier structure of ladder circuits.

The Hadamard ladder ``A_L H ... A_1 H |0>`` with ``A_l = diag(exp(-2 pi i
lam_{l,j} x))`` has amplitudes that are sums over index paths, so its X_0
expectation is a finite cosine series. :func:`enumerate_spectrum` lists
that series by brute force over path pairs; :func:`spectrum_vs_grid`
checks it against the simulated circuit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .circuits import (
    loss,
    preset_hadamard_ladder,
    preset_universal_approx,
    two_variable_variables,
)
from .config import TOL, CapacityError, ValidationError

# largest number of ordered path pairs enumerate_spectrum will visit
MAX_PATH_PAIRS = 10**7


@dataclass(frozen=True)
class FrequencyTable:
    frequencies: np.ndarray
    coefficients: np.ndarray
    tol: float = TOL.coefficient_zero

    @property
    def entries(self) -> list:
        return list(zip(self.frequencies.tolist(), self.coefficients.tolist()))

    def __len__(self):
        return self.frequencies.size

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.cos(2 * np.pi * np.outer(x, self.frequencies)) @ self.coefficients


def closed_form_count(N: int, L: int) -> int:
    """Predicted number of distinct frequencies, (N(N-1)/2)^(L-1) N."""
    return (N * (N - 1) // 2) ** (L - 1) * N


def _paths(N, L, lam):
    """All index paths j_1..j_L with their amplitude weight and accumulated frequency."""
    n = int(round(math.log2(N)))
    idx = np.array(list(itertools.product(range(N), repeat=L)), dtype=int).reshape(-1, L)
    freq = np.zeros(len(idx))
    for ell in range(L):
        freq += lam[ell, idx[:, ell]]
    # H^{(x)n} entries are (-1)^{popcount(j & k)} / sqrt(N); H|0> is uniform
    sign = np.ones(len(idx))
    for ell in range(1, L):
        overlap = idx[:, ell] & idx[:, ell - 1]
        parity = np.zeros(len(idx), dtype=int)
        for b in range(n):
            parity ^= (overlap >> b) & 1
        sign *= 1 - 2 * parity
    return idx[:, -1], freq, sign / N ** (L / 2)


def merge_frequencies(freqs, coeffs, tol=TOL.frequency_merge, zero=TOL.coefficient_zero) -> FrequencyTable:
    """Fold cos(2 pi f x) terms onto f >= 0, merge frequencies within ``tol``, drop tiny coefficients."""
    f = np.abs(np.asarray(freqs, dtype=float))
    c = np.asarray(coeffs, dtype=float)
    order = np.argsort(f, kind="stable")
    f, c = f[order], c[order]
    out_f, out_c = [], []
    for fi, ci in zip(f, c):
        if out_f and fi - out_f[-1] <= tol:
            out_c[-1] += ci
        else:
            out_f.append(fi)
            out_c.append(ci)
    out_f, out_c = np.array(out_f), np.array(out_c)
    keep = np.abs(out_c) > zero
    return FrequencyTable(out_f[keep], out_c[keep], zero)


def enumerate_spectrum(lam, max_pairs: int = MAX_PATH_PAIRS) -> FrequencyTable:
    """Cosine series of the Hadamard-ladder loss with frequencies ``lam`` (shape (L, N)).

    <X_0> = sum over path pairs (j, k) with k_L = j_L xor (top bit) of
    w_j w_k exp(-2 pi i (F_j - F_k) x); pairing (j, k) with (k, j) makes each
    term a cosine.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 2:
        raise ValidationError("lambda must have shape (L, N)")
    L, N = lam.shape
    if N < 2 or 2 ** int(round(math.log2(N))) != N:
        raise ValidationError(f"N'={N} is not a power of two")
    pairs = N ** (2 * L - 1)
    if pairs > max_pairs:
        raise CapacityError(f"{pairs} path pairs exceed the enumeration budget {max_pairs}")
    end, freq, weight = _paths(N, L, lam)
    fs, cs = [], []
    for j_end in range(N):
        a = end == j_end
        b = end == (j_end ^ (N // 2))
        fs.append((freq[a][:, None] - freq[b][None, :]).ravel())
        cs.append((weight[a][:, None] * weight[b][None, :]).ravel())
    return merge_frequencies(np.concatenate(fs), np.concatenate(cs))


def spectrum_vs_grid(model, table: FrequencyTable, grid) -> float:
    """Largest gap between the cosine series and the simulated loss on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    direct = np.array([loss(model, np.zeros(model.n_params), x) for x in grid])
    return float(np.max(np.abs(direct - table.evaluate(grid)))) if grid.size else 0.0


def random_ladder_frequencies(N: int, L: int, rng, low=-3.0, high=3.0) -> np.ndarray:
    return np.random.default_rng(rng).uniform(low, high, size=(L, N))


# --------------------------------------------------------------------------
# Separation rank


@dataclass(frozen=True)
class SeparationRankReport:
    grid_shape: tuple
    singular_values: np.ndarray
    threshold: float
    rank: int


def numerical_rank(values: np.ndarray, threshold: float = TOL.svd_relative) -> SeparationRankReport:
    """Count singular values above ``threshold`` times the largest one."""
    values = np.asarray(values)
    s = np.linalg.svd(values, compute_uv=False)
    rank = int(np.sum(s > threshold * s[0])) if s.size and s[0] > 0 else 0
    return SeparationRankReport(values.shape, s, threshold, rank)


def two_variable_ladder(N: int, L: int, lam):
    """Hadamard ladder whose first N/2 basis phases read y and the rest read z."""
    return preset_hadamard_ladder(N, L, lam, two_variable_variables(N))


def separation_rank(model, grid_y, grid_z, svd_threshold: float = TOL.svd_relative) -> SeparationRankReport:
    """Numerical rank of the matrix [L(y_i, z_j)] sampled on the grid."""
    grid_y = np.asarray(grid_y, dtype=float)
    grid_z = np.asarray(grid_z, dtype=float)
    params = np.zeros(model.n_params)
    values = np.array([[loss(model, params, np.array([y, z])) for z in grid_z] for y in grid_y])
    return numerical_rank(values, svd_threshold)


def separation_rank_closed_form(N: int, L: int) -> int:
    return 2 * closed_form_count(N, L)


# --------------------------------------------------------------------------
# Universal approximation


def fourier_coefficients(f, M: int, n_points: int = 2**14):
    """Cosine and sine coefficients a_m, b_m (m < M) of a 1-periodic function.

    f(x) ~ a_0 + sum_{m>=1} a_m cos(2 pi m x) + b_m sin(2 pi m x), computed
    by the FFT of ``n_points`` equispaced samples.
    """
    if n_points < 2 * M:
        raise ValidationError("too few sample points for the requested frequencies")
    x = np.arange(n_points) / n_points
    c = np.fft.rfft(np.asarray(f(x), dtype=float)) / n_points
    a = 2 * c.real[:M]
    b = -2 * c.imag[:M]
    a[0] = c.real[0]
    b[0] = 0.0
    return a, b


def normalized_coefficients(a, b):
    """Split off the l1 norm so the circuit can carry unit-norm coefficients."""
    scale = float(np.abs(a).sum() + np.abs(b).sum())
    if scale <= TOL.coefficient_zero:
        raise ValidationError("coefficients vanish; nothing to normalize")
    return a / scale, b / scale, scale


def universal_model(f, M: int, n_points: int = 2**14):
    """(model, scale) with scale * loss(x) = truncated Fourier series of f."""
    a, b = fourier_coefficients(f, M, n_points)
    fp, fm, scale = normalized_coefficients(a, b)
    return preset_universal_approx(fp, fm), scale


def truncated_series(a, b, x) -> np.ndarray:
    m = np.arange(len(a))
    ph = 2 * np.pi * np.outer(np.atleast_1d(x), m)
    return np.cos(ph) @ a + np.sin(ph) @ b


def universal_error_curve(f, Ms, grid_points: int = 10_000, n_points: int = 2**14) -> list:
    """Sup-norm error of the rescaled circuit output against f, per M."""
    grid = np.arange(grid_points) / grid_points
    target = np.asarray(f(grid), dtype=float)
    errors = []
    for M in Ms:
        model, scale = universal_model(f, M, n_points)
        out = np.array([loss(model, [], x) for x in grid])
        errors.append(float(np.max(np.abs(scale * out - target))))
    return errors


def triangle_wave(x):
    """1-periodic triangle wave 1 - 4|x| on [-1/2, 1/2), range [-1, 1]."""
    x = np.asarray(x, dtype=float)
    r = x - np.floor(x + 0.5)
    return 1 - 4 * np.abs(r)


def loglog_slope(Ms, errors) -> float:
    return float(np.polyfit(np.log(Ms), np.log(errors), 1)[0])
