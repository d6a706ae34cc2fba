"""Sparse-MRI pipeline: Haar wavelets, undersampled unitary DFT, and operators.

Unknowns are Haar coefficients ``s`` of an ``H x W`` image (row-major
flattening of the Mallat layout).  The observation operator is
``A = S F Psi^T``: inverse Haar, orthonormal 2-D DFT, then the k-space mask.
With a smoothness weight ``gamma`` the Gram matrix becomes

    G = Re(A^H A) + gamma * Psi (Dv^T Dv + Dh^T Dh) Psi^T

where ``Dv``/``Dh`` are second differences along columns/rows with
reflective boundaries.  ``G`` is applied matrix-free; :meth:`MriOperators.explicit_gram`
materialises it for small images.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .model import CouplingForm

_SQRT_HALF = np.sqrt(0.5)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


# --- images ----------------------------------------------------------------

def bilinear_resize(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear interpolation on a pixel-centre grid (no antialiasing)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or out_h < 1 or out_w < 1:
        raise ValueError("need a 2-D image and positive output size")
    in_h, in_w = img.shape

    def axis(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis(in_h, out_h)
    c0, c1, fc = axis(in_w, out_w)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) graymap, scaled to [0, 1]."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        pix = np.frombuffer(data[pos + 1:], dtype=dtype, count=w * h)
    elif magic == b"P2":
        pix = np.array(data[pos:].split()[: w * h], dtype=np.int64)
    else:
        raise ValueError(f"{path}: unsupported graymap type {magic!r}")
    return pix.reshape(h, w).astype(np.float64) / maxval


def write_pgm(path, img) -> Path:
    """Write an 8-bit binary graymap; values are clipped to [0, 1]."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    h, w = img.shape
    pix = np.round(img * 255).astype(np.uint8)
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + pix.tobytes())
    return path


# --- Haar ------------------------------------------------------------------

def _check_dims(shape):
    h, w = shape[-2:]
    if not (_is_pow2(h) and _is_pow2(w)):
        raise ValueError(f"Haar transform needs power-of-two dimensions, got {h}x{w}")
    return h, w


def haar2_forward(img) -> np.ndarray:
    """Full-depth orthonormal 2-D Haar transform over the last two axes."""
    out = np.array(img, dtype=np.float64)
    h, w = _check_dims(out.shape)
    while h > 1 and w > 1:
        blk = out[..., :h, :w]
        a, b = blk[..., :, 0::2], blk[..., :, 1::2]
        blk = np.concatenate([(a + b) * _SQRT_HALF, (a - b) * _SQRT_HALF], axis=-1)
        a, b = blk[..., 0::2, :], blk[..., 1::2, :]
        out[..., :h, :w] = np.concatenate([(a + b) * _SQRT_HALF, (a - b) * _SQRT_HALF], axis=-2)
        h //= 2
        w //= 2
    return out


def haar2_inverse(coeffs) -> np.ndarray:
    out = np.array(coeffs, dtype=np.float64)
    H, W = _check_dims(out.shape)
    levels = int(min(np.log2(H), np.log2(W)))
    for lev in reversed(range(levels)):
        h, w = H >> lev, W >> lev
        blk = out[..., :h, :w]
        lo, hi = blk[..., : h // 2, :], blk[..., h // 2:, :]
        tmp = np.empty_like(blk)
        tmp[..., 0::2, :] = (lo + hi) * _SQRT_HALF
        tmp[..., 1::2, :] = (lo - hi) * _SQRT_HALF
        lo, hi = tmp[..., :, : w // 2], tmp[..., :, w // 2:]
        blk = np.empty_like(tmp)
        blk[..., :, 0::2] = (lo + hi) * _SQRT_HALF
        blk[..., :, 1::2] = (lo - hi) * _SQRT_HALF
        out[..., :h, :w] = blk
    return out


def sparsify_wavelet(img, target_sparseness: float) -> np.ndarray:
    """Keep the ``round(target * N)`` largest Haar coefficients; ties favour lower index."""
    if not 0 < target_sparseness <= 1:
        raise ValueError("target_sparseness must lie in (0, 1]")
    coeffs = haar2_forward(img)
    flat = coeffs.ravel()
    keep = int(np.floor(target_sparseness * flat.size + 0.5))
    order = np.argsort(-np.abs(flat), kind="stable")
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[:keep]] = True
    return haar2_inverse(np.where(mask, flat, 0.0).reshape(coeffs.shape))


# --- sampling and DFT ---------------------------------------------------------

@dataclass(frozen=True)
class SamplingMask:
    indices: np.ndarray
    shape: tuple

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        n = self.shape[0] * self.shape[1]
        if idx.ndim != 1 or np.unique(idx).size != idx.size:
            raise ValueError("mask indices must be unique")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("mask index out of range")
        object.__setattr__(self, "indices", idx)

    @property
    def M(self) -> int:
        return self.indices.size

    @property
    def compression(self) -> float:
        return self.M / (self.shape[0] * self.shape[1])

    def apply(self, kspace) -> np.ndarray:
        return np.asarray(kspace).reshape(*np.shape(kspace)[:-2], -1)[..., self.indices]

    def embed(self, samples) -> np.ndarray:
        samples = np.asarray(samples)
        out = np.zeros(samples.shape[:-1] + (self.shape[0] * self.shape[1],), dtype=np.complex128)
        out[..., self.indices] = samples
        return out.reshape(samples.shape[:-1] + tuple(self.shape))

    def to_csv(self, path) -> Path:
        path = Path(path)
        np.savetxt(path, self.indices, fmt="%d", header="index", comments="")
        return path


def make_mask(H: int, W: int, M: int, seed: int = 0, keep_dc: bool = True) -> SamplingMask:
    """``M`` distinct k-space indices drawn uniformly without replacement.

    With ``keep_dc`` the zero-frequency sample is always included and the
    other ``M - 1`` are drawn from the remaining points.  Without it the image
    mean lies in the null space of the observation operator and no sparse
    prior can recover it.
    """
    if not 0 <= M <= H * W:
        raise ValueError(f"cannot sample {M} of {H * W} k-space points")
    rng = np.random.default_rng(seed)
    if keep_dc and M > 0:
        rest = 1 + rng.choice(H * W - 1, size=M - 1, replace=False)
        idx = np.concatenate([[0], rest])
    else:
        idx = rng.choice(H * W, size=M, replace=False)
    return SamplingMask(np.sort(idx), (H, W))


def dft2(img) -> np.ndarray:
    return np.fft.fft2(img, norm="ortho")


def idft2(kspace) -> np.ndarray:
    return np.fft.ifft2(kspace, norm="ortho")


def _second_difference(n: int) -> np.ndarray:
    """``x[i-1] - 2x[i] + x[i+1]`` with half-sample reflection at both ends."""
    D = -2.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
    if n > 1:
        D[0, 0] += 1.0
        D[-1, -1] += 1.0
    else:
        D[0, 0] = 0.0
    return D


# --- operators ---------------------------------------------------------------

@dataclass
class MriOperators:
    """Observation operator, Gram form and Zeeman vector for one mask.

    ``J`` in the Ising sense is ``-(G - diag G)``; :attr:`coupling` packages
    ``G`` and ``hz`` for the solvers.
    """

    mask: SamplingMask
    gamma: float
    hz: np.ndarray
    gram_diag: np.ndarray
    lipschitz: float = 1.0

    def __post_init__(self):
        H, W = self.mask.shape
        self._pv = _second_difference(H).T @ _second_difference(H)
        self._ph = _second_difference(W).T @ _second_difference(W)

    @property
    def shape(self) -> tuple:
        return self.mask.shape

    @property
    def N(self) -> int:
        return self.shape[0] * self.shape[1]

    def forward(self, s) -> np.ndarray:
        """``S F Psi^T s`` for coefficient vectors (batched over leading axes)."""
        s = np.asarray(s, dtype=np.float64)
        img = haar2_inverse(s.reshape(s.shape[:-1] + self.shape))
        return self.mask.apply(dft2(img))

    def adjoint(self, z) -> np.ndarray:
        """``Psi F^H S^T z``; complex in general."""
        img = idft2(self.mask.embed(z))
        re = haar2_forward(img.real)
        im = haar2_forward(img.imag)
        return (re + 1j * im).reshape(img.shape[:-2] + (-1,))

    def smoothness(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        img = haar2_inverse(s.reshape(s.shape[:-1] + self.shape))
        lap = self._pv @ img + img @ self._ph
        return haar2_forward(lap).reshape(s.shape)

    def gram_matvec(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        img = haar2_inverse(s.reshape(s.shape[:-1] + self.shape))
        k = np.zeros(img.shape, dtype=np.complex128)
        kflat = k.reshape(img.shape[:-2] + (-1,))
        kflat[..., self.mask.indices] = dft2(img).reshape(img.shape[:-2] + (-1,))[..., self.mask.indices]
        back = idft2(k).real
        if self.gamma:
            back = back + self.gamma * (self._pv @ img + img @ self._ph)
        return haar2_forward(back).reshape(s.shape)

    @property
    def gram(self) -> LinearOperator:
        return LinearOperator((self.N, self.N), matvec=self.gram_matvec, dtype=np.float64)

    @property
    def coupling(self) -> CouplingForm:
        return CouplingForm(gram=self.gram, hz=self.hz, gram_diag=self.gram_diag)

    def explicit_gram(self, chunk: int = 512) -> np.ndarray:
        G = np.empty((self.N, self.N))
        eye = np.eye(self.N)
        for start in range(0, self.N, chunk):
            G[start:start + chunk] = self.gram_matvec(eye[start:start + chunk])
        return 0.5 * (G + G.T)

    @property
    def J(self) -> np.ndarray:
        """Dense Gram (the quadratic form's matrix, diagonal included)."""
        return self.explicit_gram()


def _gram_diagonal(ops: MriOperators, chunk: int = 512) -> np.ndarray:
    diag = np.empty(ops.N)
    for start in range(0, ops.N, chunk):
        stop = min(start + chunk, ops.N)
        basis = np.zeros((stop - start, ops.N))
        basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
        Av = ops.forward(basis)
        d = np.sum(np.abs(Av) ** 2, axis=-1)
        if ops.gamma:
            imgs = haar2_inverse(basis.reshape((-1,) + ops.shape))
            dv = np.einsum("ij,bjk->bik", _second_difference(ops.shape[0]), imgs)
            dh = imgs @ _second_difference(ops.shape[1]).T
            d = d + ops.gamma * (np.sum(dv**2, axis=(1, 2)) + np.sum(dh**2, axis=(1, 2)))
        diag[start:stop] = d
    return diag


def assemble_operators(mask: SamplingMask, gamma: float, H: int, W: int, y) -> MriOperators:
    """Build the Gram/Zeeman pair for masked k-space samples ``y``.

    ``hz = Re(A^H y)``, the gradient-consistent Zeeman term.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if tuple(mask.shape) != (H, W):
        raise ValueError("mask shape does not match image size")
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (mask.M,):
        raise ValueError(f"expected {mask.M} k-space samples")
    ops = MriOperators(mask=mask, gamma=float(gamma), hz=np.zeros(H * W), gram_diag=np.ones(H * W))
    ops.hz = ops.adjoint(y).real
    ops.gram_diag = _gram_diagonal(ops)
    return ops


# --- LASSO warm start --------------------------------------------------------

def lasso_init(A, y, lambda_l1: float, max_iters: int = 5000, rtol: float = 1e-8,
               x0=None) -> np.ndarray:
    """FISTA for ``0.5 ||y - A x||^2 + lambda_l1 ||x||_1`` over real ``x``.

    ``A`` is a real or complex matrix, or an object with ``forward``,
    ``adjoint`` and ``lipschitz`` (such as :class:`MriOperators`).
    """
    if lambda_l1 < 0:
        raise ValueError("lambda_l1 must be non-negative")
    if isinstance(A, np.ndarray):
        mat = A
        fwd = lambda x: mat @ x  # noqa: E731
        adj = lambda z: mat.conj().T @ z  # noqa: E731
        L = float(np.linalg.norm(mat, 2)) ** 2
        n = mat.shape[1]
    else:
        fwd, adj, L, n = A.forward, A.adjoint, float(A.lipschitz), A.N
    y = np.asarray(y)
    if L == 0:
        return np.zeros(n)
    step = 1.0 / L
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    z, t = x.copy(), 1.0

    def cost(v):
        r = fwd(v) - y
        return 0.5 * float(np.vdot(r, r).real) + lambda_l1 * float(np.abs(v).sum())

    prev = cost(x)
    for _ in range(max_iters):
        g = np.real(adj(fwd(z) - y))
        u = z - step * g
        x_new = np.sign(u) * np.maximum(np.abs(u) - step * lambda_l1, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        cur = cost(x)
        if abs(prev - cur) <= rtol * max(abs(prev), 1e-300):
            break
        prev = cur
    return x


# --- experiment setup --------------------------------------------------------

@dataclass
class MriProblem:
    target: np.ndarray
    coeffs: np.ndarray
    mask: SamplingMask
    y: np.ndarray
    ops: MriOperators

    @property
    def support(self) -> np.ndarray:
        return (self.coeffs != 0).astype(np.float64)

    def image_of(self, s) -> np.ndarray:
        return haar2_inverse(np.asarray(s).reshape(self.target.shape))

    def rmse(self, s) -> float:
        return float(np.sqrt(np.mean((self.image_of(s) - self.target) ** 2)))


def prepare_problem(img, size: int, sparseness: float, M: int, mask_seed: int,
                    gamma: float = 1e-4) -> MriProblem:
    """Resize, sparsify in Haar, sample ``M`` random k-space points."""
    small = img if np.shape(img) == (size, size) else bilinear_resize(img, size, size)
    target = sparsify_wavelet(small, sparseness)
    coeffs = haar2_forward(target).ravel()
    coeffs[np.abs(coeffs) < 1e-12] = 0.0
    mask = make_mask(size, size, M, mask_seed)
    y = mask.apply(dft2(target))
    return MriProblem(target=target, coeffs=coeffs, mask=mask, y=y,
                      ops=assemble_operators(mask, gamma, size, size, y))
