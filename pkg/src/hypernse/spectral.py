"""Divergence-free Fourier fields on the 2-torus and the operators acting on them.

A field u is stored by its Fourier coefficients u_hat[j] in C^2 for the modes
0 < |j|_inf <= M, in a dense array of shape (2, 2M+1, 2M+1) with centered
indexing [component, j1+M, j2+M].  All inner products and integrals carry the
measure dx/(2pi)^2, so pairings and norms are plain coefficient sums:
(u, v) = sum_j u_hat[j] . conj(v_hat[j]) and the H^s norm squared is
sum_j |j|^{2s} |u_hat[j]|^2.

Product evaluation routes (the `dealias` flag):

* "two-thirds"  transform-multiply-transform on the natural (2M+1)-point grid
                with modes |j|_inf > floor(2M/3) zeroed before and after the
                product.  Alias-free for every retained mode: with
                Kc = floor(2M/3) and N = 2M+1 grid points, an aliased image
                k +- N of a true product mode (|true| <= 2 Kc) can only land on
                a retained mode |k| <= Kc if N <= 3 Kc <= 2M < N, impossible.
* "padded"      transform-multiply-transform on a zero-padded grid of at least
                3M+2 points per direction; computes the exact truncated
                convolution of the full inputs.
* "direct"      exact convolution summed over all mode pairs, no transforms;
                the oracle route, intended for M <= 16.

"padded" and "direct" compute the same object through disjoint code paths and
agree to rounding; "two-thirds" computes the masked object, whose direct-route
counterpart is mask(direct(mask u, mask v)).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import SparseAnnulus, annulus_points, min_pairwise_distance

DEALIAS_MODES = ("two-thirds", "padded", "direct")


@dataclass(frozen=True)
class SpectralParams:
    """Analytic parameters of the hyperviscous problem.

    beta is the dissipation exponent (supercritical window 17/12 < beta < 3/2),
    nu the viscosity, M the truncation (modes 0 < |j|_inf <= M), s the sparse
    scale exponent, rho the cutoff radius of the amplitude truncation.
    epsilon = 2 beta - 17/6 > 0 is derived.
    """

    beta: float = 1.45
    nu: float = 1.0
    M: int = 16
    s: float = (3.0 - 2.0 * 1.45 + 1.0 / 6.0) / 2.0
    rho: float = 1.0

    def __post_init__(self) -> None:
        if not self.beta > 17.0 / 12.0:
            raise ValueError(f"beta must exceed 17/12, got {self.beta}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.M < 2:
            raise ValueError(f"M must be at least 2, got {self.M}")
        if not 0.0 < self.s < 1.0 / 6.0:
            raise ValueError(f"s must lie in (0, 1/6), got {self.s}")

    @property
    def epsilon(self) -> float:
        return 2.0 * self.beta - 17.0 / 6.0

    @property
    def supercritical(self) -> bool:
        return self.beta < 1.5

    def check_cone_exponent(self) -> None:
        """The cone/averaging analysis needs s strictly inside (3-2beta, 1/6)."""
        lo = 3.0 - 2.0 * self.beta
        if not lo < self.s < 1.0 / 6.0:
            raise ValueError(
                f"s={self.s} outside the admissible window ({lo}, {1/6}) for beta={self.beta}"
            )


@lru_cache(maxsize=32)
def wavenumbers(M: int):
    """Centered wavenumber grids (J1, J2, LAM) for truncation M, read-only."""
    r = np.arange(-M, M + 1)
    J1, J2 = np.meshgrid(r, r, indexing="ij")
    LAM = J1 * J1 + J2 * J2
    for a in (J1, J2, LAM):
        a.setflags(write=False)
    return J1, J2, LAM


@dataclass(frozen=True)
class FourierField:
    """Mean-zero field on the torus, coefficients for 0 < |j|_inf <= M.

    coeffs has shape (2, 2M+1, 2M+1), complex128, centered indexing
    [component, j1+M, j2+M]; the j=0 slot is identically zero.  Instances are
    immutable; operations return new fields.
    """

    M: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        K = 2 * self.M + 1
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != (2, K, K):
            raise ValueError(f"coeffs shape {c.shape} != (2, {K}, {K})")
        if c[0, self.M, self.M] != 0 or c[1, self.M, self.M] != 0:
            raise ValueError("the j=0 coefficient must be zero (mean-zero field)")
        if not c.flags.writeable and c is self.coeffs:
            pass
        else:
            c = c.copy()
            c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, M: int) -> "FourierField":
        return cls(M, np.zeros((2, 2 * M + 1, 2 * M + 1), dtype=np.complex128))

    @classmethod
    def from_modes(cls, M: int, modes: dict, conjugate: bool = True) -> "FourierField":
        """Build a field from {(j1, j2): (c1, c2)}; with conjugate=True the
        mirror coefficient at -j is set to the complex conjugate (real field)."""
        c = np.zeros((2, 2 * M + 1, 2 * M + 1), dtype=np.complex128)
        for (j1, j2), val in modes.items():
            if j1 == 0 and j2 == 0:
                raise ValueError("the j=0 mode is not storable")
            if max(abs(j1), abs(j2)) > M:
                raise ValueError(f"mode {(j1, j2)} outside truncation M={M}")
            c[0, j1 + M, j2 + M] = val[0]
            c[1, j1 + M, j2 + M] = val[1]
            if conjugate:
                c[0, -j1 + M, -j2 + M] = np.conj(val[0])
                c[1, -j1 + M, -j2 + M] = np.conj(val[1])
        return cls(M, c)

    def mode(self, j) -> np.ndarray:
        """Coefficient pair at lattice point j, zero outside the truncation."""
        j1, j2 = j
        if max(abs(j1), abs(j2)) > self.M:
            return np.zeros(2, dtype=np.complex128)
        return self.coeffs[:, j1 + self.M, j2 + self.M].copy()

    def with_coeffs(self, coeffs: np.ndarray) -> "FourierField":
        return FourierField(self.M, coeffs)

    def __add__(self, other: "FourierField") -> "FourierField":
        self._check_compatible(other)
        return FourierField(self.M, self.coeffs + other.coeffs)

    def __sub__(self, other: "FourierField") -> "FourierField":
        self._check_compatible(other)
        return FourierField(self.M, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "FourierField":
        return FourierField(self.M, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "FourierField":
        return FourierField(self.M, -self.coeffs)

    def _check_compatible(self, other: "FourierField") -> None:
        if self.M != other.M:
            raise ValueError(f"truncation mismatch: {self.M} != {other.M}")

    def reality_defect(self) -> float:
        """max |u_hat[-j] - conj(u_hat[j])|, zero for a real field."""
        flipped = self.coeffs[:, ::-1, ::-1]
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))

    def divergence_defect(self) -> float:
        """max_j |j . u_hat[j]|, zero for a divergence-free field."""
        J1, J2, _ = wavenumbers(self.M)
        return float(np.max(np.abs(J1 * self.coeffs[0] + J2 * self.coeffs[1])))


def inner_product(u: FourierField, v: FourierField) -> float:
    """Real L^2 pairing sum_j u_hat[j] . conj(v_hat[j]) (real part)."""
    u._check_compatible(v)
    return float(np.real(np.sum(u.coeffs * np.conj(v.coeffs))))


def sobolev_norm(u: FourierField, s: float) -> float:
    """H^s norm: sqrt(sum_j |j|^{2s} |u_hat[j]|^2); s=0 gives the L^2 norm."""
    _, _, LAM = wavenumbers(u.M)
    w = np.zeros(LAM.shape)
    nz = LAM > 0
    w[nz] = np.float64(LAM[nz]) ** s
    dens = np.sum(np.abs(u.coeffs) ** 2, axis=0)
    return float(math.sqrt(np.sum(w * dens)))


def leray_project(w: FourierField) -> FourierField:
    """Mode-wise projection onto divergence-free fields.

    P_j = Id - j j^T / |j|^2 applied to each coefficient pair; idempotent,
    annihilates gradients j * g_hat[j].
    """
    J1, J2, LAM = wavenumbers(w.M)
    denom = np.where(LAM > 0, LAM, 1).astype(np.float64)
    d = (J2 * w.coeffs[0] - J1 * w.coeffs[1]) / denom
    out = np.stack([J2 * d, -J1 * d])
    out[:, w.M, w.M] = 0.0
    return FourierField(w.M, out)


def apply_A_power(u: FourierField, p: float) -> FourierField:
    """Multiply each coefficient by (|j|^2)^p (spectral power of minus-Laplacian)."""
    _, _, LAM = wavenumbers(u.M)
    f = np.zeros(LAM.shape)
    nz = LAM > 0
    f[nz] = np.float64(LAM[nz]) ** p
    return FourierField(u.M, u.coeffs * f)


def random_field(
    M: int,
    rng: np.random.Generator,
    divergence_free: bool = True,
    decay: float = 0.0,
    band: tuple[float, float] | None = None,
) -> FourierField:
    """Random real (conjugate-symmetric) field, optionally divergence-free.

    decay > 0 multiplies coefficients by |j|^{-decay}; band = (lo, hi) keeps
    only modes with lo <= |j|^2 <= hi.
    """
    K = 2 * M + 1
    z = rng.standard_normal((2, K, K)) + 1j * rng.standard_normal((2, K, K))
    c = 0.5 * (z + np.conj(z[:, ::-1, ::-1]))
    _, _, LAM = wavenumbers(M)
    if decay > 0.0:
        w = np.zeros(LAM.shape)
        nz = LAM > 0
        w[nz] = np.float64(LAM[nz]) ** (-decay / 2.0)
        c = c * w
    if band is not None:
        lo, hi = band
        keep = (LAM >= lo) & (LAM <= hi)
        c = c * keep
    c[:, M, M] = 0.0
    out = FourierField(M, c)
    if divergence_free:
        out = leray_project(out)
    return out


# ---------------------------------------------------------------------------
# mode projectors


@dataclass(frozen=True)
class ModeProjector:
    """Sharp spectral projector selecting modes by their eigenvalue |j|^2.

    kind is one of "at_most" (lam_j <= lambda_N), "above" (lam_j > lambda_N),
    "below_band" (lam_j < lambda_N - k), "band" (lambda_N - k <= lam_j <=
    lambda_N + k), "above_band" (lam_j > lambda_N + k).
    """

    kind: str
    lambda_N: float
    k: float = 0.0

    _KINDS = ("at_most", "above", "below_band", "band", "above_band")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown projector kind {self.kind!r}")
        if self.k < 0:
            raise ValueError(f"k must be nonnegative, got {self.k}")

    def mask(self, M: int) -> np.ndarray:
        _, _, LAM = wavenumbers(M)
        if self.kind == "at_most":
            m = LAM <= self.lambda_N
        elif self.kind == "above":
            m = LAM > self.lambda_N
        elif self.kind == "below_band":
            m = LAM < self.lambda_N - self.k
        elif self.kind == "band":
            m = (LAM >= self.lambda_N - self.k) & (LAM <= self.lambda_N + self.k)
        else:  # above_band
            m = LAM > self.lambda_N + self.k
        m = m & (LAM > 0)
        return m


def project(u: FourierField, proj: ModeProjector) -> FourierField:
    """Zero every coefficient outside the projector's eigenvalue window."""
    return FourierField(u.M, u.coeffs * proj.mask(u.M))


# ---------------------------------------------------------------------------
# products


def two_thirds_limit(M: int) -> int:
    return (2 * M) // 3


def two_thirds_mask(u: FourierField) -> FourierField:
    """Zero all modes with |j|_inf > floor(2M/3) (the 2/3 dealiasing mask)."""
    Kc = two_thirds_limit(u.M)
    r = np.arange(-u.M, u.M + 1)
    keep1 = np.abs(r) <= Kc
    keep = np.outer(keep1, keep1)
    return FourierField(u.M, u.coeffs * keep)


def _grid_values(coeffs2d: np.ndarray, M: int, N: int) -> np.ndarray:
    """Physical values on an N x N grid of the mode sum with centered coeffs."""
    emb = np.zeros((N, N), dtype=np.complex128)
    r = np.arange(-M, M + 1)
    emb[np.ix_(r % N, r % N)] = coeffs2d
    return np.fft.ifft2(emb) * (N * N)


def _grid_coeffs(values: np.ndarray, M: int) -> np.ndarray:
    """Centered coefficients 0 <= |j|_inf <= M from N x N physical values."""
    N = values.shape[0]
    full = np.fft.fft2(values) / (N * N)
    r = np.arange(-M, M + 1)
    return full[np.ix_(r % N, r % N)]


def _advect_fft(u: FourierField, v: FourierField, N: int) -> np.ndarray:
    """(u . grad) v coefficients via transforms on an N-point grid (no masking)."""
    M = u.M
    J1, J2, _ = wavenumbers(M)
    u_phys = [_grid_values(u.coeffs[m], M, N) for m in range(2)]
    out = np.empty((2, 2 * M + 1, 2 * M + 1), dtype=np.complex128)
    for n in range(2):
        d1 = _grid_values(1j * J1 * v.coeffs[n], M, N)
        d2 = _grid_values(1j * J2 * v.coeffs[n], M, N)
        prod = u_phys[0] * d1 + u_phys[1] * d2
        out[n] = _grid_coeffs(prod, M)
    return out


def _convolve_direct(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact truncated convolution out[k] = sum_j a[j] b[k-j], centered K x K.

    Loops over the modes of a and accumulates shifted copies of b; no
    transforms anywhere.  Zero modes of a are skipped.
    """
    K = a.shape[0]
    M = (K - 1) // 2
    out = np.zeros((K, K), dtype=np.complex128)
    for q1 in range(K):
        row = a[q1]
        lo1, hi1 = max(0, q1 - M), min(K, q1 + M + 1)
        src1 = slice(lo1 - q1 + M, hi1 - q1 + M)
        for q2 in range(K):
            c = row[q2]
            if c == 0:
                continue
            lo2, hi2 = max(0, q2 - M), min(K, q2 + M + 1)
            out[lo1:hi1, lo2:hi2] += c * b[src1, lo2 - q2 + M : hi2 - q2 + M]
    return out


def _advect_direct(u: FourierField, v: FourierField) -> np.ndarray:
    """(u . grad) v coefficients by direct convolution over all mode pairs."""
    M = u.M
    J1, J2, _ = wavenumbers(M)
    out = np.empty((2, 2 * M + 1, 2 * M + 1), dtype=np.complex128)
    for n in range(2):
        g1 = 1j * J1 * v.coeffs[n]
        g2 = 1j * J2 * v.coeffs[n]
        out[n] = _convolve_direct(u.coeffs[0], g1) + _convolve_direct(u.coeffs[1], g2)
    return out


def _padded_size(M: int) -> int:
    # exact products need N >= 3M + 2; round up to an even size for fft speed
    N = 3 * M + 2
    return N + (N % 2)


def bilinear_B(u: FourierField, v: FourierField, dealias: str = "two-thirds") -> FourierField:
    """B(u, v) = Leray projection of (u . grad) v, truncated to M.

    dealias selects the product route; see the module docstring.  The
    "two-thirds" route zeroes modes |j|_inf > floor(2M/3) before and after
    the product.
    """
    u._check_compatible(v)
    if dealias not in DEALIAS_MODES:
        raise ValueError(f"unknown dealias mode {dealias!r}")
    M = u.M
    if dealias == "two-thirds":
        um, vm = two_thirds_mask(u), two_thirds_mask(v)
        raw = _advect_fft(um, vm, 2 * M + 1)
        raw[:, M, M] = 0.0
        res = two_thirds_mask(FourierField(M, raw))
        return leray_project(res)
    if dealias == "padded":
        raw = _advect_fft(u, v, _padded_size(M))
    else:
        raw = _advect_direct(u, v)
    raw[:, M, M] = 0.0
    return leray_project(FourierField(M, raw))


def trilinear_b(u: FourierField, v: FourierField, w: FourierField) -> float:
    """Exact trilinear form sum_{m,n} integral u_m (d v_n / d x_m) w_n dx/(2pi)^2.

    Evaluated as the exact triad sum over the stored trigonometric polynomials;
    equals (B(u, v), w) for real w when B uses an exact product route, because
    the pairing only sees modes inside the truncation.
    """
    u._check_compatible(v)
    u._check_compatible(w)
    M = u.M
    J1, J2, _ = wavenumbers(M)
    total = 0.0 + 0.0j
    for n in range(2):
        g1 = 1j * J1 * v.coeffs[n]
        g2 = 1j * J2 * v.coeffs[n]
        conv = _convolve_direct(u.coeffs[0], g1) + _convolve_direct(u.coeffs[1], g2)
        # pair against w with the real pairing: sum_k conv[k] w_hat[-k]
        total += np.sum(conv * w.coeffs[n, ::-1, ::-1])
    return float(np.real(total))


# ---------------------------------------------------------------------------
# snapshots


def save_field_csv(u: FourierField, path) -> None:
    """Write a field snapshot: header j1,j2,re_u1,im_u1,re_u2,im_u2, one row per
    lexicographically positive mode (j1 > 0, or j1 = 0 and j2 > 0), 17
    significant digits.  Conjugate modes are implied by reality."""
    M = u.M
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("j1,j2,re_u1,im_u1,re_u2,im_u2\n")
        for j1 in range(0, M + 1):
            j2_start = 1 if j1 == 0 else -M
            for j2 in range(j2_start, M + 1):
                c1 = u.coeffs[0, j1 + M, j2 + M]
                c2 = u.coeffs[1, j1 + M, j2 + M]
                fh.write(
                    f"{j1},{j2},{c1.real:.17g},{c1.imag:.17g},"
                    f"{c2.real:.17g},{c2.imag:.17g}\n"
                )


def load_field_csv(path, M: int | None = None) -> FourierField:
    """Read a snapshot written by save_field_csv, rebuilding conjugate modes.

    M defaults to the largest |j|_inf present in the file.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "j1,j2,re_u1,im_u1,re_u2,im_u2":
            raise ValueError(f"unrecognized snapshot header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ValueError(f"malformed snapshot row: {line!r}")
            j1, j2 = int(parts[0]), int(parts[1])
            vals = [float(x) for x in parts[2:]]
            rows.append((j1, j2, vals))
    if M is None:
        M = max((max(abs(j1), abs(j2)) for j1, j2, _ in rows), default=1)
    c = np.zeros((2, 2 * M + 1, 2 * M + 1), dtype=np.complex128)
    for j1, j2, vals in rows:
        if not (j1 > 0 or (j1 == 0 and j2 > 0)):
            raise ValueError(f"snapshot stores non-positive mode ({j1}, {j2})")
        if max(abs(j1), abs(j2)) > M:
            raise ValueError(f"mode ({j1}, {j2}) outside truncation M={M}")
        c1 = complex(vals[0], vals[1])
        c2 = complex(vals[2], vals[3])
        c[0, j1 + M, j2 + M] = c1
        c[1, j1 + M, j2 + M] = c2
        c[0, -j1 + M, -j2 + M] = np.conj(c1)
        c[1, -j1 + M, -j2 + M] = np.conj(c2)
    return FourierField(M, c)


# ---------------------------------------------------------------------------
# the elementary power-gap inequality


def power_gap_lower_bound(a: float, b: float, beta: float) -> tuple[float, float]:
    """Return (a^beta - b^beta, (a - b)(a^{beta-1} + b^{beta-1})/2) for a >= b >= 0.

    For beta >= 1 the first component dominates the second; at beta = 1 they
    coincide.
    """
    if not (a >= b >= 0.0):
        raise ValueError(f"need a >= b >= 0, got a={a}, b={b}")
    if beta < 1.0:
        raise ValueError(f"beta must be >= 1, got {beta}")
    lhs = a**beta - b**beta
    rhs = 0.5 * (a - b) * (a ** (beta - 1.0) + b ** (beta - 1.0))
    return lhs, rhs


# ---------------------------------------------------------------------------
# spectral cutoff selection


@dataclass(frozen=True)
class CutoffFamily:
    """Projector family at a spectral cutoff lambda_N with half-width k."""

    lambda_N: int
    lambda_next: int
    k: float

    @property
    def low(self) -> ModeProjector:
        return ModeProjector("at_most", self.lambda_N)

    @property
    def high(self) -> ModeProjector:
        return ModeProjector("above", self.lambda_N)

    @property
    def below_band(self) -> ModeProjector:
        return ModeProjector("below_band", self.lambda_N, self.k)

    @property
    def band(self) -> ModeProjector:
        return ModeProjector("band", self.lambda_N, self.k)

    @property
    def above_band(self) -> ModeProjector:
        return ModeProjector("above_band", self.lambda_N, self.k)


@dataclass(frozen=True)
class CutoffDecision:
    """Outcome of cutoff selection against an annulus certificate.

    accepted is the strict conjunction 1 <= lambda_next - lambda_N <= k/2 and
    k >= lambda_N^s.  window_certified holds when the projector window
    [lambda_N - k, lambda_N + k] has all lattice-point pairs separated by more
    than max(lambda^{s/2}, lambda_N^{s/2}) (the hypothesis the averaging
    mechanism needs); the window differs from the certified annulus by the
    shift lambda - lambda_N, so it is re-checked with the exhaustive oracle.
    reason explains the first failed strict hypothesis, None when accepted.
    """

    accepted: bool
    family: CutoffFamily
    reason: str | None
    window_certified: bool
    window_min_separation: float
    window_threshold: float
    gap: int
    k_over_lambda_s: float


def choose_cutoff(eigs, annulus: SparseAnnulus) -> CutoffDecision:
    """Select the projector cutoff for a certified annulus.

    eigs must be a sorted sequence of distinct eigenvalues covering
    [lambda - k - 1, lambda + k + 1].  lambda_N is the largest eigenvalue
    <= lambda; k is the annulus half-width.
    """
    lam = annulus.lam
    k = annulus.half_width
    values = sorted(set(int(e) for e in eigs))
    if not values:
        raise ValueError("empty eigenvalue list")
    if values[0] > lam - k - 1 and values[0] > 1:
        raise ValueError(
            f"eigenvalue list starts at {values[0]}, above the annulus floor {lam - k - 1}"
        )
    if values[-1] < lam + k + 1:
        raise ValueError(
            f"eigenvalue list ends at {values[-1]}, below the annulus ceiling {lam + k + 1}"
        )
    i = bisect.bisect_right(values, lam) - 1
    if i < 0:
        raise ValueError(f"no eigenvalue at or below lambda = {lam}")
    if i + 1 >= len(values):
        raise ValueError(f"no eigenvalue above lambda_N = {values[i]}")
    lam_N = values[i]
    lam_next = values[i + 1]
    gap = lam_next - lam_N
    family = CutoffFamily(lam_N, lam_next, k)

    reason = None
    if gap > k / 2.0:
        reason = f"eigenvalue gap {gap} exceeds k/2 = {k / 2.0}"
    elif k < lam_N**annulus.s:
        reason = f"k = {k} below lambda_N^s = {lam_N**annulus.s}"

    thr = max(lam ** (annulus.s / 2.0), lam_N ** (annulus.s / 2.0))
    wpts = annulus_points(float(lam_N), k)
    sep = min_pairwise_distance(wpts)
    win_sep = math.inf if sep is None else sep
    window_ok = win_sep > thr

    return CutoffDecision(
        accepted=reason is None,
        family=family,
        reason=reason,
        window_certified=window_ok,
        window_min_separation=win_sep,
        window_threshold=thr,
        gap=gap,
        k_over_lambda_s=k / lam_N**annulus.s,
    )
