"""Periodic grids and Fourier pseudospectral operators.

Fields are plain ``numpy`` arrays whose trailing ``dim`` axes are the
spatial axes of the grid.  Any leading axes are treated as batch or
component axes, so a vector field has shape ``(d, n, ..., n)`` and a
rank-2 tensor field ``(d, d, n, ..., n)``.  All transforms run over the
trailing spatial axes only, which lets the same operators act on stacks
of fields (used for finite-difference Jacobians in the implicit QDD
integrator).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

NORM_KINDS = ("L1", "L2", "Linf", "H1", "H2")


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Uniform tensor grid on ``[0, L)^dim`` with spectral wavenumbers.

    ``derivative_fault`` adds a symmetric (non-skew) part ``fault*|k|`` to
    the first-derivative symbol.  It exists only so the ``verify`` suite
    can show that its integration-by-parts check catches a broken
    derivative; leave it at zero for real work.
    """

    dim: int
    n: int
    length: float = 1.0
    derivative_fault: float = 0.0
    dx: float = field(init=False)
    _cache: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if int(self.n) != self.n or self.n % 2 != 0:
            raise ValueError(f"n must be an even integer, got {self.n}")
        if self.n < 8:
            raise ValueError(f"n must be >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "dx", self.length / self.n)
        object.__setattr__(self, "_cache", {})
        self._build_wavenumbers()

    def _build_wavenumbers(self):
        n, d = self.n, self.dim
        full = np.fft.fftfreq(n, 1.0 / n)
        full[n // 2] = n // 2  # Nyquist carried as +n/2
        half = np.arange(n // 2 + 1, dtype=float)
        modes = []
        for j in range(d):
            m = half if j == d - 1 else full
            shape = [1] * d
            shape[j] = m.size
            modes.append(m.reshape(shape))
        scale = 2.0 * np.pi / self.length
        self._cache["modes"] = tuple(modes)
        self._cache["k"] = tuple(scale * m for m in modes)
        k2 = sum(k * k for k in self._cache["k"])
        self._cache["k2"] = k2
        inv = np.zeros_like(k2)
        inv[k2 > 0] = 1.0 / k2[k2 > 0]
        self._cache["inv_k2"] = inv
        keep = np.ones(self.spectral_shape, dtype=bool)
        for m in modes:
            keep &= np.abs(m) <= n / 3.0
        self._cache["dealias"] = keep.astype(float)

    # ------------------------------------------------------------------
    # geometry
    def __eq__(self, other):
        if not isinstance(other, PeriodicGrid):
            return NotImplemented
        return (self.dim, self.n, self.length, self.derivative_fault) == (
            other.dim, other.n, other.length, other.derivative_fault)

    def __hash__(self):
        return hash((self.dim, self.n, self.length, self.derivative_fault))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def measure(self) -> float:
        return self.length ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    @property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Per-axis wavenumbers ``m * 2pi/L`` shaped for the rfft layout."""
        return self._cache["k"]

    @property
    def k2(self) -> np.ndarray:
        return self._cache["k2"]

    @property
    def inv_k2(self) -> np.ndarray:
        """``1/|k|^2`` with the zero mode set to 0."""
        return self._cache["inv_k2"]

    @property
    def k_max(self) -> float:
        return (self.n // 2) * 2.0 * np.pi / self.length

    @property
    def k_cut(self) -> float:
        """Largest wavenumber kept by the 2/3 rule."""
        return (self.n // 3) * 2.0 * np.pi / self.length

    @property
    def dealias_mask(self) -> np.ndarray:
        return self._cache["dealias"]

    def coords(self) -> tuple[np.ndarray, ...]:
        """Meshgrid of node coordinates, ``indexing='ij'``."""
        x = np.arange(self.n) * self.dx
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    # ------------------------------------------------------------------
    # transforms
    def fft(self, f):
        if self.dim == 1:
            return sfft.rfft(f, axis=-1)
        return sfft.rfftn(f, axes=self.axes)

    def ifft(self, fh):
        if self.dim == 1:
            return sfft.irfft(fh, n=self.n, axis=-1)
        return sfft.irfftn(fh, s=self.shape, axes=self.axes)

    def refined(self, factor: int) -> "PeriodicGrid":
        """The grid with ``factor`` times as many points per axis (cached)."""
        key = ("refined", int(factor))
        if key not in self._cache:
            self._cache[key] = PeriodicGrid(self.dim, self.n * int(factor), self.length,
                                            self.derivative_fault)
        return self._cache[key]

    def _transfer_index(self, fine: "PeriodicGrid"):
        key = ("transfer", fine.n)
        if key not in self._cache:
            n, N = self.n, fine.n
            if N % n or fine.dim != self.dim or fine.length != self.length:
                raise ValueError("fine grid must refine this grid")
            full = np.array([m for m in range(n) if m != n // 2])
            full_fine = np.where(full < n // 2, full, full - n + N)
            half = np.arange(n // 2)
            coarse = [full] * (self.dim - 1) + [half]
            fine_ix = [full_fine] * (self.dim - 1) + [half]
            self._cache[key] = ((Ellipsis,) + np.ix_(*coarse), (Ellipsis,) + np.ix_(*fine_ix))
        return self._cache[key]

    def prolong_hat(self, fh, fine: "PeriodicGrid"):
        """Coarse spectrum to the fine spectrum, so that ``fine.ifft`` interpolates.

        The Nyquist modes are dropped; everything else is carried exactly.
        """
        c, f = self._transfer_index(fine)
        fh = np.asarray(fh)
        out = np.zeros(fh.shape[: fh.ndim - self.dim] + fine.spectral_shape, dtype=complex)
        out[f] = fh[c] * (fine.n / self.n) ** self.dim
        return out

    def restrict_hat(self, Fh, fine: "PeriodicGrid"):
        """Fine spectrum truncated to this grid's modes (Nyquist dropped)."""
        c, f = self._transfer_index(fine)
        Fh = np.asarray(Fh)
        out = np.zeros(Fh.shape[: Fh.ndim - self.dim] + self.spectral_shape, dtype=complex)
        out[c] = Fh[f] * (self.n / fine.n) ** self.dim
        return out

    def symbol(self, multi_index) -> np.ndarray:
        """Fourier multiplier of the derivative ``d^alpha``.

        Odd-order factors have the Nyquist mode removed.
        """
        alpha = tuple(int(a) for a in multi_index)
        if len(alpha) != self.dim or any(a < 0 for a in alpha):
            raise ValueError(f"bad multi-index {multi_index!r} for dim={self.dim}")
        if sum(alpha) > 4:
            raise ValueError("derivative order above 4 is not supported")
        key = ("sym", alpha)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        out = np.ones(self.spectral_shape, dtype=complex)
        for j, a in enumerate(alpha):
            if a == 0:
                continue
            k = self.wavenumbers[j]
            m = self._cache["modes"][j]
            factor = (1j * k) ** a
            if a % 2 == 1:
                factor = np.where(np.abs(m) == self.n // 2, 0.0, factor)
                if a == 1 and self.derivative_fault:
                    factor = factor + self.derivative_fault * np.abs(k)
            out = out * factor
        self._cache[key] = out
        return out

    def _unit(self, j: int, order: int = 1) -> tuple[int, ...]:
        alpha = [0] * self.dim
        alpha[j] = order
        return tuple(alpha)

    # ------------------------------------------------------------------
    # differential operators
    def spectral_derivative(self, f, multi_index):
        return self.ifft(self.fft(f) * self.symbol(multi_index))

    @property
    def grad_symbols(self) -> np.ndarray:
        """Stacked first-derivative symbols, shape ``(d, *spectral_shape)``."""
        key = "grad_sym"
        if key not in self._cache:
            self._cache[key] = np.stack([self.symbol(self._unit(j)) for j in range(self.dim)])
        return self._cache[key]

    @property
    def hess_symbols(self) -> np.ndarray:
        """Stacked second-derivative symbols, shape ``(d, d, *spectral_shape)``."""
        key = "hess_sym"
        if key not in self._cache:
            d = self.dim
            out = np.empty((d, d) + self.spectral_shape, dtype=complex)
            for i in range(d):
                for j in range(d):
                    alpha = [0] * d
                    alpha[i] += 1
                    alpha[j] += 1
                    out[i, j] = self.symbol(alpha)
            self._cache[key] = out
        return self._cache[key]

    def gradient(self, f):
        """``grad f`` with the component axis placed before the spatial axes."""
        return self.gradient_hat(self.fft(f))

    def gradient_hat(self, fh):
        return self.ifft(np.expand_dims(fh, -self.dim - 1) * self.grad_symbols)

    def divergence(self, v):
        """``div v`` for ``v`` of shape ``(..., d, *grid.shape)``; on a tensor this is the row divergence."""
        return self.ifft(self.divergence_hat(v))

    def divergence_hat(self, v):
        return self.divergence_of_hat(self.fft(v))

    def divergence_of_hat(self, vh):
        return np.sum(vh * self.grad_symbols, axis=-self.dim - 1)

    def laplacian(self, f):
        return self.ifft(-self.k2 * self.fft(f))

    def hessian(self, f):
        """Symmetric Hessian, shape ``(..., d, d, *grid.shape)``."""
        return self.hessian_hat(self.fft(f))

    def hessian_hat(self, fh):
        return self.ifft(np.expand_dims(fh, (-self.dim - 2, -self.dim - 1)) * self.hess_symbols)

    def dealias(self, f):
        """Zero every mode with some ``|k_j| > (n/3) 2pi/L`` (2/3 rule)."""
        return self.ifft(self.fft(f) * self.dealias_mask)

    # ------------------------------------------------------------------
    # quadrature and norms
    def integrate(self, f):
        """Uniform (trapezoidal) quadrature over the torus."""
        return np.sum(f, axis=self.axes) * self.cell_volume

    def mean(self, f):
        return self.integrate(f) / self.measure

    def norm(self, f, kind: str = "L2") -> float:
        """Norms of scalar or vector fields (components are summed).

        ``H2`` is the Bessel-potential norm ``||(1 - Lap) f||_L2``, that is
        ``||f||^2 + 2||grad f||^2 + ||grad^2 f||^2``; with this choice
        ``||f||_H1^2 <= ||f||_L2 ||f||_H2`` holds exactly.
        """
        f = np.asarray(f, dtype=float)
        if kind == "L1":
            return float(np.sum(self.integrate(np.abs(f))))
        if kind == "Linf":
            return float(np.max(np.abs(f)))
        if kind == "L2":
            return float(np.sqrt(np.sum(self.integrate(f * f))))
        if kind == "H1":
            g = self.gradient(f)
            return float(np.sqrt(np.sum(self.integrate(f * f)) + np.sum(self.integrate(g * g))))
        if kind == "H2":
            w = f - self.laplacian(f)
            return float(np.sqrt(np.sum(self.integrate(w * w))))
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")

    def negative_norm(self, f) -> float:
        """Dual ``H^-1`` norm with Fourier weight ``(1 + |k|^2)^(-1/2)``."""
        w = self.ifft(self.fft(f) / np.sqrt(1.0 + self.k2))
        return float(np.sqrt(np.sum(self.integrate(w * w))))


def make_grid(dim: int, n: int, length: float = 1.0) -> PeriodicGrid:
    return PeriodicGrid(dim=dim, n=n, length=length)


def outer(a, b, dim):
    """Pointwise outer product of two vector fields."""
    return np.expand_dims(a, -dim - 1) * np.expand_dims(b, -dim - 2)


def contract(a, b, dim):
    """Full contraction ``A : B`` of two tensor fields (pointwise)."""
    return np.sum(a * b, axis=(-dim - 2, -dim - 1))


def dot(a, b, dim):
    return np.sum(a * b, axis=-dim - 1)


def random_band_limited(grid: PeriodicGrid, rng, max_mode: int = 4, decay: float = 2.0):
    """Zero-mean random trigonometric polynomial with modes ``|m_j| <= max_mode``.

    Coefficients are Gaussian with amplitude ``(1 + |m|)^-decay``; the
    result is normalised to unit sup norm.
    """
    spec = np.zeros(grid.spectral_shape, dtype=complex)
    modes = grid._cache["modes"]
    sel = np.ones(grid.spectral_shape, dtype=bool)
    mag2 = 0
    for m in modes:
        sel &= np.abs(m) <= max_mode
        mag2 = mag2 + m * m
    sel &= mag2 > 0
    count = int(sel.sum())
    coef = rng.normal(size=count) + 1j * rng.normal(size=count)
    spec[sel] = coef * (1.0 + np.sqrt(np.broadcast_to(mag2, sel.shape)[sel])) ** (-decay)
    f = grid.ifft(spec)
    return f / np.max(np.abs(f))


def random_density(grid: PeriodicGrid, rng, min_range=(0.1, 0.9), **kwargs):
    """Random positive band-limited density of unit mean with prescribed minimum."""
    p = random_band_limited(grid, rng, **kwargs)
    target = rng.uniform(*min_range)
    return 1.0 + (1.0 - target) * p / (-p.min())


def multi_indices(dim: int, order: int):
    """All multi-indices of a given total order."""
    for alpha in itertools.product(range(order + 1), repeat=dim):
        if sum(alpha) == order:
            yield alpha
