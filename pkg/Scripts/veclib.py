"""
Vectorization kernels for matrices acting on tensor-product spaces.

- Index fusion/splitting (0-based, row-major)
- vec/mat, Hilbert-Schmidt inner product, Kronecker products
- Left/right action matrices and the triple-product identity vec(AXB) = (A (x) B^T) vec(X)
- SWAP and reshuffling permutations, stored as index maps
- Partial trace over one factor of a bipartite operator

Conventions: a p x q matrix M is stored row-major, entry (a, b) at position a*q + b.
The 1-based formula alpha = q(a-1) + b becomes alpha = a*q + b here, so vec(M) is the
row-major storage itself. See docs/conventions.md for worked examples.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np


# -----------------------------
# Helpers
# -----------------------------

def as_matrix(M) -> np.ndarray:
    """Return M as a C-contiguous complex128 2-D array (no copy when already one)."""
    arr = np.ascontiguousarray(np.asarray(M, dtype=np.complex128))
    if arr.ndim != 2:
        raise ValueError(f"Expected a 2-D matrix, got an array with shape {arr.shape}")
    return arr


def _check_positive(name: str, value: int) -> int:
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


# -----------------------------
# Index conventions
# -----------------------------

def index_fuse(a: int, b: int, q: int) -> int:
    """Fuse a (row, col) pair of a matrix with q columns into one index: a*q + b."""
    q = _check_positive("q", q)
    if a < 0:
        raise ValueError(f"Row index must be non-negative, got {a}")
    if not 0 <= b < q:
        raise ValueError(f"Column index {b} out of range for {q} columns")
    return a * q + b


def index_split(alpha: int, q: int) -> Tuple[int, int]:
    """Inverse of index_fuse: (floor(alpha / q), alpha mod q)."""
    if q < 1:
        raise ValueError(f"Column count must be at least 1, got {q}")
    if alpha < 0:
        raise ValueError(f"Fused index must be non-negative, got {alpha}")
    return divmod(int(alpha), int(q))


# -----------------------------
# Vectorization
# -----------------------------

@dataclass(frozen=True, eq=False)
class VecOperator:
    """A vectorized matrix that remembers the shape it came from."""
    entries: np.ndarray
    src_rows: int
    src_cols: int

    def __post_init__(self):
        if self.entries.ndim != 1 or self.entries.size != self.src_rows * self.src_cols:
            raise ValueError(
                f"Vector of length {self.entries.size} does not match shape "
                f"({self.src_rows}, {self.src_cols})"
            )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.src_rows, self.src_cols

    def __len__(self) -> int:
        return self.entries.size


def vec(M) -> VecOperator:
    """Stack the rows of M. For a row-major array this is a view, not a copy."""
    m = as_matrix(M)
    flat = m.reshape(-1)
    flat.flags.writeable = False
    return VecOperator(entries=flat, src_rows=m.shape[0], src_cols=m.shape[1])


def mat(v: Union[VecOperator, np.ndarray], shape: Tuple[int, int] = None) -> np.ndarray:
    """Restore the matrix form of a vector; raw arrays need an explicit shape."""
    if isinstance(v, VecOperator):
        entries = v.entries
        rows, cols = shape if shape is not None else v.shape
    else:
        if shape is None:
            raise ValueError("mat() of a bare vector needs a (rows, cols) shape")
        entries = np.asarray(v, dtype=np.complex128).reshape(-1)
        rows, cols = shape
    if rows * cols != entries.size:
        raise ValueError(f"Cannot reshape a vector of length {entries.size} into ({rows}, {cols})")
    return entries.reshape(rows, cols).copy()


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt inner product tr(A^dagger B) = vec(A)^dagger vec(B)."""
    a, b = as_matrix(A), as_matrix(B)
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch in hs_inner: {a.shape} vs {b.shape}")
    return complex(np.vdot(a.reshape(-1), b.reshape(-1)))


def vec_transpose(M) -> VecOperator:
    """vec(M^T), obtained from vec(M) with the SWAP S(p, q)."""
    m = as_matrix(M)
    p, q = m.shape
    entries = apply_perm(swap_spec(p, q), vec(m).entries)
    return VecOperator(entries=entries, src_rows=q, src_cols=p)


def vec_adjoint(M) -> VecOperator:
    """vec(M^dagger): entry f(a, b) equals conj(M[b, a])."""
    vt = vec_transpose(M)
    return VecOperator(entries=vt.entries.conj(), src_rows=vt.src_rows, src_cols=vt.src_cols)


# -----------------------------
# Kronecker products and actions
# -----------------------------

def kron(A, B) -> np.ndarray:
    """Kronecker product with lexicographic index fusion (first factor is major)."""
    return np.kron(as_matrix(A), as_matrix(B))


def left_action(A, r: int) -> np.ndarray:
    """A (x) 1_r, so that (A (x) 1_r) vec(B) = vec(AB) for any q x r matrix B."""
    r = _check_positive("r", r)
    return np.kron(as_matrix(A), np.eye(r, dtype=np.complex128))


def right_action(B, p: int) -> np.ndarray:
    """1_p (x) B^T, so that (1_p (x) B^T) vec(A) = vec(AB) for any p x q matrix A."""
    p = _check_positive("p", p)
    return np.kron(np.eye(p, dtype=np.complex128), as_matrix(B).T)


def vec_triple(A, X, B) -> VecOperator:
    """vec(A X B) computed as (A (x) B^T) vec(X)."""
    a, x, b = as_matrix(A), as_matrix(X), as_matrix(B)
    if a.shape[1] != x.shape[0] or x.shape[1] != b.shape[0]:
        raise ValueError(
            f"Non-conformable triple product: {a.shape} x {x.shape} x {b.shape}"
        )
    entries = np.kron(a, b.T) @ vec(x).entries
    return VecOperator(entries=entries, src_rows=a.shape[0], src_cols=b.shape[1])


# -----------------------------
# Permutations
# -----------------------------

@dataclass(frozen=True, eq=False)
class _PermutationSpec:
    """Index map with the scatter convention out[perm[i]] = in[i]."""
    perm: np.ndarray

    @property
    def size(self) -> int:
        return self.perm.size

    def as_matrix(self) -> np.ndarray:
        """Explicit 0/1 matrix P with P[perm[i], i] = 1."""
        n = self.size
        P = np.zeros((n, n), dtype=np.int64)
        P[self.perm, np.arange(n)] = 1
        return P


@dataclass(frozen=True, eq=False)
class SwapSpec(_PermutationSpec):
    """S(r, p): maps phi (x) psi to psi (x) phi for phi of length r, psi of length p.

    S(2, 2) and S(2, 3) match the matrices usually displayed for a qubit SWAP and a
    2 x 3 SWAP; S(r, p)^T = S(r, p)^-1 = S(p, r).
    """
    r: int = 1
    p: int = 1

    def inverse(self) -> "SwapSpec":
        return swap_spec(self.p, self.r)


@dataclass(frozen=True, eq=False)
class ReshuffleSpec(_PermutationSpec):
    """R(p, q, r, s): vec(M (x) N) = R (vec(M) (x) vec(N)) for M p x q and N r x s."""
    p: int = 1
    q: int = 1
    r: int = 1
    s: int = 1

    def inverse(self) -> "ReshuffleSpec":
        return reshuffle_spec(self.p, self.r, self.q, self.s)


PermutationSpec = Union[SwapSpec, ReshuffleSpec]


def swap_spec(r: int, p: int) -> SwapSpec:
    """SWAP permutation taking an (r x p)-fused index to the (p x r)-fused one."""
    r = _check_positive("r", r)
    p = _check_positive("p", p)
    # input index p*a2 + a1 (a2 < r, a1 < p) lands on r*a1 + a2
    perm = np.arange(r * p).reshape(p, r).T.reshape(-1)
    perm.flags.writeable = False
    return SwapSpec(perm=perm, r=r, p=p)


def reshuffle_spec(p: int, q: int, r: int, s: int) -> ReshuffleSpec:
    """Reshuffle (a1, b1, a2, b2) -> (a1, a2, b1, b2), i.e. 1_p (x) S(q, r) (x) 1_s.

    In the SWAP orientation fixed by swap_spec the middle factor is S(q, r) = S(r, q)^T;
    the two coincide whenever q == r, in particular for all square-channel reshuffles.
    """
    p, q, r, s = (_check_positive(n, v) for n, v in zip("pqrs", (p, q, r, s)))
    perm = np.arange(p * q * r * s).reshape(p, r, q, s).transpose(0, 2, 1, 3).reshape(-1)
    perm.flags.writeable = False
    return ReshuffleSpec(perm=perm, p=p, q=q, r=r, s=s)


def apply_perm(spec: PermutationSpec, v) -> np.ndarray:
    """Apply a permutation spec to a vector without building its matrix."""
    arr = np.asarray(v)
    if arr.ndim != 1 or arr.size != spec.size:
        raise ValueError(f"Vector of shape {arr.shape} does not match permutation of size {spec.size}")
    out = np.empty_like(arr)
    out[spec.perm] = arr
    return out


def conjugate_by_perm(spec: PermutationSpec, A) -> np.ndarray:
    """P A P^T for the permutation matrix P of spec."""
    a = np.asarray(A)
    n = spec.size
    if a.shape != (n, n):
        raise ValueError(f"Matrix of shape {a.shape} does not match permutation of size {n}")
    out = np.empty_like(a)
    out[np.ix_(spec.perm, spec.perm)] = a
    return out


def swap_factors(T, p: int, r: int) -> np.ndarray:
    """Reorder the factors of an operator on C^p (x) C^r: M (x) N -> N (x) M."""
    t = as_matrix(T)
    if t.shape != (p * r, p * r):
        raise ValueError(f"Operator of shape {t.shape} is not on a {p} x {r} product space")
    return conjugate_by_perm(swap_spec(p, r), t)


# -----------------------------
# Partial trace
# -----------------------------

def partial_trace(tau, d1: int, d2: int, keep: int) -> np.ndarray:
    """Trace out one factor of an operator on C^d1 (x) C^d2.

    keep=1 sums the second index pair, (tr_2 tau)[a1, b1] = sum_a2 tau[(a1, a2), (b1, a2)];
    keep=2 sums the first.
    """
    t = as_matrix(tau)
    if t.shape != (d1 * d2, d1 * d2):
        raise ValueError(f"Operator of shape {t.shape} is not {d1 * d2} x {d1 * d2}")
    t4 = t.reshape(d1, d2, d1, d2)
    if keep == 1:
        return np.einsum('ijkj->ik', t4)
    if keep == 2:
        return np.einsum('ijik->jk', t4)
    raise ValueError(f"keep must be 1 or 2, got {keep!r}")
