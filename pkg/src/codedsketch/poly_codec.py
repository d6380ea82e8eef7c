"""Block partitioning and the polynomial layers of the code.

Layers, innermost first:

* entangled layer: ``Ahat_i(x) = sum_k x^k A[i,k]`` and
  ``Bhat_j(x) = sum_k x^(p-1-k) B[k,j]`` so that ``x^(p-1)`` of
  ``Ahat_i(x) @ Bhat_j(x)`` is block ``C[i,j]``;
* sketch layer: ``F_l(x, a) = sum_i s_l(i) Ahat_i(x) a^h_l(i)`` (and ``G_l``
  over the block-columns of ``B``);
* Lagrange layer: ``F(x, a, w) = sum_l F_l(x, a) L_l(w)`` with cardinal
  polynomials on the nodes ``1..d``.

Substituting ``a = x^p`` and ``w = x^(2pb'-1)`` gives one univariate matrix
polynomial whose evaluations are what the workers receive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InsufficientSamplesError, ParameterError, PartitionError


@dataclass(frozen=True)
class BlockMatrix:
    """A ``u x v`` grid of equally shaped blocks, stored as ``(u, v, br, bc)``."""

    blocks: np.ndarray

    @property
    def grid(self) -> tuple[int, int]:
        return self.blocks.shape[:2]

    @property
    def block_shape(self) -> tuple[int, int]:
        return self.blocks.shape[2:]

    @property
    def shape(self) -> tuple[int, int]:
        u, v, br, bc = self.blocks.shape
        return u * br, v * bc

    def __getitem__(self, ij: tuple[int, int]) -> np.ndarray:
        return self.blocks[ij]

    def assemble(self) -> np.ndarray:
        u, v, br, bc = self.blocks.shape
        return self.blocks.transpose(0, 2, 1, 3).reshape(u * br, v * bc)


def partition(M, u: int, v: int) -> BlockMatrix:
    M = np.asarray(M)
    if M.ndim != 2:
        raise PartitionError(f"expected a matrix, got shape {M.shape}")
    r, c = M.shape
    if u < 1 or v < 1 or r % u or c % v:
        raise PartitionError(f"cannot split {r}x{c} into a {u}x{v} grid of equal blocks")
    blocks = M.reshape(u, r // u, v, c // v).transpose(0, 2, 1, 3)
    return BlockMatrix(np.ascontiguousarray(blocks))


@dataclass(frozen=True)
class EvaluationGrid:
    points: np.ndarray
    mode: str = "explicit"
    radius: float = 1.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        object.__setattr__(self, "points", pts)
        if self.mode not in ("roots-of-unity", "chebyshev", "explicit"):
            raise ParameterError(f"unknown grid mode {self.mode!r}")
        if pts.size and np.unique(pts).size != pts.size:
            raise ParameterError("evaluation points must be pairwise distinct")

    def __len__(self) -> int:
        return self.points.size

    @classmethod
    def roots_of_unity(cls, size: int, radius: float = 1.0) -> "EvaluationGrid":
        """``radius * exp(2 pi i j / size)``; a radius above 1 favours high powers."""
        if size < 1:
            raise ParameterError("grid size must be >= 1")
        if not radius > 0:
            raise ParameterError("radius must be positive")
        pts = radius * np.exp(2j * np.pi * np.arange(size) / size)
        return cls(pts, "roots-of-unity", float(radius))

    @classmethod
    def chebyshev(cls, size: int) -> "EvaluationGrid":
        """Chebyshev points of the first kind on [-1, 1]."""
        if size < 1:
            raise ParameterError("grid size must be >= 1")
        k = np.arange(size)
        return cls(np.cos((2 * k + 1) * np.pi / (2 * size)).astype(complex), "chebyshev")

    @classmethod
    def make(cls, mode: str, size: int, radius: float = 1.0) -> "EvaluationGrid":
        if mode == "roots-of-unity":
            return cls.roots_of_unity(size, radius)
        if mode == "chebyshev":
            return cls.chebyshev(size)
        raise ParameterError(f"grid mode {mode!r} needs explicit points")


@dataclass(frozen=True)
class MatrixPolynomial:
    """``sum_k coeffs[k] x^k`` with matrix coefficients, stored ``(D+1, r, c)``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim != 3 or c.shape[0] < 1:
            raise ParameterError(f"coefficients must be (D+1, r, c), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def block_shape(self) -> tuple[int, int]:
        return self.coeffs.shape[1:]

    def __call__(self, x) -> np.ndarray:
        acc = np.zeros(self.block_shape, dtype=np.result_type(self.coeffs, x))
        for c in self.coeffs[::-1]:
            acc = acc * x + c
        return acc

    def effective_degree(self, tol: float = 0.0) -> int:
        nz = np.flatnonzero(np.abs(self.coeffs).reshape(len(self.coeffs), -1).max(axis=1) > tol)
        return int(nz[-1]) if nz.size else -1


def layer_entangled(
    A_blocks: BlockMatrix, B_blocks: BlockMatrix
) -> tuple[list[MatrixPolynomial], list[MatrixPolynomial]]:
    """Row polynomials of ``A`` (an ``m x p`` grid) and column polynomials of ``B`` (``p x n``)."""
    m, p = A_blocks.grid
    p_b, n = B_blocks.grid
    if p != p_b:
        raise ParameterError(f"A has {p} block-columns but B has {p_b} block-rows")
    if A_blocks.block_shape[1] != B_blocks.block_shape[0]:
        raise ParameterError("inner block dimensions of A and B disagree")
    rows = [MatrixPolynomial(A_blocks.blocks[i]) for i in range(m)]
    cols = [MatrixPolynomial(B_blocks.blocks[::-1, j]) for j in range(n)]
    return rows, cols


@dataclass(frozen=True)
class SketchPolynomial:
    """Bivariate ``sum_{e,k} coeffs[e,k] x^e a^k``; ``coeffs`` is ``(p, b', r, c)``.

    ``terms`` lists ``(index, sign, bucket)`` for every block folded in.
    """

    coeffs: np.ndarray
    terms: tuple[tuple[int, int, int], ...] = field(default=())

    @property
    def x_degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def alpha_degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def block_shape(self) -> tuple[int, int]:
        return self.coeffs.shape[2:]

    def __call__(self, x, alpha) -> np.ndarray:
        xp = np.power(x, np.arange(self.coeffs.shape[0]))
        ap = np.power(alpha, np.arange(self.coeffs.shape[1]))
        return np.einsum("e,k,ekrc->rc", xp, ap, self.coeffs)


def _sketch_one(polys: Sequence[MatrixPolynomial], hash_, sign, width: int) -> SketchPolynomial:
    deg = polys[0].coeffs.shape[0]
    coeffs = np.zeros((deg, width, *polys[0].block_shape))
    terms = []
    for i, poly in enumerate(polys):
        bucket, s = int(hash_.table[i]), int(sign.table[i])
        coeffs[:, bucket] += s * poly.coeffs
        terms.append((i, s, bucket))
    return SketchPolynomial(coeffs, tuple(terms))


def sketch_polynomials(rows, cols, family) -> tuple[list[SketchPolynomial], list[SketchPolynomial]]:
    """``F_l`` from the row polynomials and ``G_l`` from the column polynomials."""
    if family.m != len(rows) or family.n != len(cols):
        raise ParameterError(
            f"family covers {family.m}x{family.n} blocks, operands have {len(rows)}x{len(cols)}"
        )
    F = [_sketch_one(rows, h, s, family.width) for h, s in zip(family.row_hashes, family.row_signs)]
    G = [_sketch_one(cols, h, s, family.width) for h, s in zip(family.col_hashes, family.col_signs)]
    return F, G


def lagrange_weights(d: int, omega) -> np.ndarray:
    """Values of the ``d`` cardinal polynomials on nodes ``1..d`` at ``omega``."""
    if d < 1:
        raise ParameterError("d must be >= 1")
    nodes = np.arange(1, d + 1)
    out = np.ones(d, dtype=np.result_type(float, omega))
    for l in range(d):
        for i in range(d):
            if i != l:
                out[l] *= (omega - nodes[i]) / (nodes[l] - nodes[i])
    return out


def lagrange_basis_coefficients(d: int) -> np.ndarray:
    """``(d, d)`` array: row ``l`` holds the monomial coefficients of ``L_{l+1}(w)``.

    Built with exact rationals, then rounded once.
    """
    if d < 1:
        raise ParameterError("d must be >= 1")
    out = np.zeros((d, d))
    for l in range(1, d + 1):
        poly = [Fraction(1)]
        for i in range(1, d + 1):
            if i == l:
                continue
            scale = Fraction(1, l - i)
            nxt = [Fraction(0)] * (len(poly) + 1)
            for q, c in enumerate(poly):
                nxt[q + 1] += c * scale
                nxt[q] -= c * i * scale
            poly = nxt
        out[l - 1, : len(poly)] = [float(c) for c in poly]
    return out


@dataclass(frozen=True)
class LagrangeCombined:
    """``sum_l parts[l](x, a) * L_{l+1}(w)``."""

    parts: tuple[SketchPolynomial, ...]

    @property
    def d(self) -> int:
        return len(self.parts)

    @property
    def block_shape(self) -> tuple[int, int]:
        return self.parts[0].block_shape

    def weights(self, omega) -> np.ndarray:
        return lagrange_weights(self.d, omega)

    def __call__(self, x, alpha, omega) -> np.ndarray:
        w = self.weights(omega)
        return sum(wl * part(x, alpha) for wl, part in zip(w, self.parts))

    def to_univariate(self, p: int, width: int) -> MatrixPolynomial:
        """Expand fully in ``x`` after ``a = x^p``, ``w = x^(2p*width - 1)``."""
        stride = 2 * p * width - 1
        basis = lagrange_basis_coefficients(self.d)
        ex, ea = self.parts[0].coeffs.shape[:2]
        deg = (ex - 1) + p * (ea - 1) + stride * (self.d - 1)
        out = np.zeros((deg + 1, *self.block_shape))
        for l, part in enumerate(self.parts):
            for q in range(self.d):
                if basis[l, q] == 0:
                    continue
                for e in range(ex):
                    for k in range(ea):
                        out[e + p * k + stride * q] += basis[l, q] * part.coeffs[e, k]
        return MatrixPolynomial(out)


def lagrange_combine(parts: Sequence[SketchPolynomial], d: int | None = None) -> LagrangeCombined:
    parts = tuple(parts)
    if not parts:
        raise ParameterError("need at least one sketch polynomial")
    if d is not None and d != len(parts):
        raise ParameterError(f"d={d} but {len(parts)} polynomials given")
    return LagrangeCombined(parts)


def substitute_and_eval(F: LagrangeCombined, theta, p: int, width: int) -> np.ndarray:
    """``F(theta, theta^p, theta^(2p*width - 1))``."""
    return F(theta, theta**p, theta ** (2 * p * width - 1))


@dataclass(frozen=True)
class Interpolant:
    polynomial: MatrixPolynomial
    used: int
    residual: float  # max abs misfit at samples beyond the first D+1 (0 if none)
    condition: float = float("nan")  # 2-norm condition number of the point set's Vandermonde


def _log_barycentric_weights(z: np.ndarray) -> np.ndarray:
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    logmag = -np.log(np.abs(diff)).sum(axis=1)
    phase = -np.angle(diff).sum(axis=1)
    return np.exp(logmag - logmag.max() + 1j * phase)


def barycentric_eval(nodes, values, targets) -> np.ndarray:
    """Evaluate the interpolant through ``(nodes, values)`` at ``targets``.

    ``values`` has shape ``(K, ...)``; the result has shape ``(len(targets), ...)``.
    """
    z = np.asarray(nodes, dtype=complex)
    v = np.asarray(values, dtype=complex)
    t = np.asarray(targets, dtype=complex)
    w = _log_barycentric_weights(z)
    diff = t[:, None] - z[None, :]
    hit = np.abs(diff) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(t))[:, None]
    diff[hit] = 1.0
    kern = w[None, :] / diff
    flat = v.reshape(len(z), -1)
    out = (kern @ flat) / kern.sum(axis=1)[:, None]
    rows, cols = np.nonzero(hit)
    out[rows] = flat[cols]
    return out.reshape((len(t),) + v.shape[1:])


def _roots_of_unity_order(z: np.ndarray) -> tuple[np.ndarray, float] | None:
    """``(perm, radius)`` with ``z[perm] == radius * exp(2 pi i k/K)``, or None."""
    K = len(z)
    radius = float(np.abs(z[0]))
    if radius == 0 or np.max(np.abs(np.abs(z) - radius)) > 1e-12 * radius:
        return None
    z = z / radius
    k = np.rint(np.angle(z) * K / (2 * np.pi)).astype(int) % K
    if np.unique(k).size != K:
        return None
    if np.max(np.abs(z - np.exp(2j * np.pi * k / K))) > 1e-12:
        return None
    order = np.empty(K, dtype=int)
    order[k] = np.arange(K)
    return order, radius


SOLVE_MAX_SIZE = 2048


def interpolate(samples: Sequence[tuple[complex, np.ndarray]], degree: int,
                method: str = "auto") -> Interpolant:
    """Monomial coefficients of the degree-``degree`` polynomial through ``samples``.

    Only the first ``degree + 1`` samples are used; any others feed the
    ``residual`` diagnostic. ``method``:

    * ``"auto"``: FFT if the points are exactly the ``(degree+1)``-th roots of
      unity, else ``"solve"`` up to ``SOLVE_MAX_SIZE`` points, else ``"barycentric"``;
    * ``"solve"``: LU on the Vandermonde matrix of the points;
    * ``"barycentric"``: evaluate the barycentric interpolant on the
      ``(degree+1)``-th roots of unity, then invert with an FFT.
    """
    K = degree + 1
    if degree < 0:
        raise ParameterError("degree must be >= 0")
    if method not in ("auto", "solve", "barycentric"):
        raise ParameterError(f"unknown interpolation method {method!r}")
    if len(samples) < K:
        raise InsufficientSamplesError(K, len(samples))
    points = np.array([complex(s[0]) for s in samples])
    if np.unique(points).size != points.size:
        raise ParameterError("duplicate interpolation points")
    z = points[:K]
    vals = np.stack([np.asarray(s[1]) for s in samples[:K]]).astype(complex)
    if vals.ndim == 1:
        vals = vals[:, None, None]
    circle = _roots_of_unity_order(z) if method == "auto" else None
    if circle is not None:
        order, radius = circle
        coeffs = np.fft.fft(vals[order], axis=0) / K
        if radius != 1.0:
            coeffs /= (radius ** np.arange(K))[:, None, None]
        # V = DFT * diag(radius^e): singular values sqrt(K) * radius^e
        condition = float(max(radius, 1 / radius) ** (K - 1))
    elif method == "solve" or (method == "auto" and K <= SOLVE_MAX_SIZE):
        V = np.vander(z, K, increasing=True)
        coeffs = np.linalg.solve(V, vals.reshape(K, -1)).reshape(vals.shape)
        condition = float(np.linalg.cond(V))
    else:
        grid = np.exp(2j * np.pi * np.arange(K) / K)
        coeffs = np.fft.fft(barycentric_eval(z, vals, grid), axis=0) / K
        condition = float("nan")
    poly = MatrixPolynomial(coeffs)
    residual = 0.0
    for theta, value in samples[K:]:
        value = np.asarray(value).reshape(poly.block_shape)
        residual = max(residual, float(np.max(np.abs(poly(complex(theta)) - value))))
    return Interpolant(poly, K, residual, condition)
