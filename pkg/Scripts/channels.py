"""
Completely-positive maps and their matrix representations:
- Kraus sets, Choi (dynamical) matrices and superoperators acting on vec(rho)
- Every conversion between the three, plus evaluation in each form
- CP / TP / unital checks and a combined verification report
- Jamiolkowski state, Stinespring dilations and random channels
- Standard constructors used by the tests and the command line

Choi index convention: D[a*d + c, b*d + e] = T(E_ce)[a, b], so that
D = sum_n vec(K_n) vec(K_n)^dagger for a Kraus set {K_n}. The superoperator is
the reshuffle of D and equals sum_n K_n (x) conj(K_n).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, ClassVar, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

from veclib import apply_perm, as_matrix, kron, mat, partial_trace, reshuffle_spec, swap_spec, vec


# Tolerances (absolute unless the name says relative)
DEFAULT_TOL = 1e-10
CP_RELATIVE_TOL = 1e-10          # lambda_min >= -CP_RELATIVE_TOL * tr(D)
KRAUS_RELATIVE_CUTOFF = 1e-12    # eigenvalues above cutoff * tr(D) become Kraus operators
HERMITIAN_PRECHECK_TOL = 1e-8
UNITARY_TOL = 1e-10

logger = logging.getLogger('channel_explorer.channels')


class NotCompletelyPositive(ValueError):
    """Raised when a Choi matrix has an eigenvalue below the CP threshold."""

    def __init__(self, min_eigenvalue: float, message: Optional[str] = None):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            message or f"Map is not completely positive: Choi matrix eigenvalue {self.min_eigenvalue:.12g}"
        )


# -----------------------------
# Data models
# -----------------------------

def _square_root_dim(n: int, what: str) -> int:
    d = int(round(np.sqrt(n)))
    if d < 1 or d * d != n:
        raise ValueError(f"{what} of size {n} x {n} is not d^2 x d^2 for an integer d")
    return d


def _check_square(M, d: int, what: str) -> np.ndarray:
    m = as_matrix(M)
    if m.shape != (d, d):
        raise ValueError(f"{what} has shape {m.shape}, expected ({d}, {d})")
    return m


@dataclass(frozen=True, eq=False)
class KrausSet:
    dim: int
    operators: Tuple[np.ndarray, ...]
    representation: ClassVar[str] = "kraus"

    def __post_init__(self):
        ops = tuple(_check_square(K, self.dim, "Kraus operator") for K in self.operators)
        if not ops:
            raise ValueError("A Kraus set needs at least one operator")
        object.__setattr__(self, "operators", ops)

    @classmethod
    def from_operators(cls, operators: Iterable) -> "KrausSet":
        ops = [as_matrix(K) for K in operators]
        if not ops:
            raise ValueError("A Kraus set needs at least one operator")
        return cls(dim=ops[0].shape[0], operators=tuple(ops))


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    dim: int
    matrix: np.ndarray
    representation: ClassVar[str] = "choi"

    def __post_init__(self):
        object.__setattr__(self, "matrix", _check_square(self.matrix, self.dim ** 2, "Choi matrix"))

    @classmethod
    def from_matrix(cls, M) -> "ChoiMatrix":
        m = as_matrix(M)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"Choi matrix must be square, got shape {m.shape}")
        return cls(dim=_square_root_dim(m.shape[0], "Choi matrix"), matrix=m)


@dataclass(frozen=True, eq=False)
class Superoperator:
    dim: int
    matrix: np.ndarray
    representation: ClassVar[str] = "superop"

    def __post_init__(self):
        object.__setattr__(self, "matrix", _check_square(self.matrix, self.dim ** 2, "Superoperator"))

    @classmethod
    def from_matrix(cls, M) -> "Superoperator":
        m = as_matrix(M)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"Superoperator must be square, got shape {m.shape}")
        return cls(dim=_square_root_dim(m.shape[0], "Superoperator"), matrix=m)


ChannelSpec = Union[KrausSet, ChoiMatrix, Superoperator]


@dataclass(frozen=True)
class ChannelReport:
    dim: int
    representation: str
    cp: bool
    tp: bool
    unital: bool
    min_eigenvalue: float
    choi_trace: float
    hermiticity_error: float
    choi_rank: int

    @property
    def is_channel(self) -> bool:
        return self.cp and self.tp

    def as_dict(self) -> Dict[str, object]:
        return {
            "dim": self.dim,
            "representation": self.representation,
            "cp": self.cp,
            "tp": self.tp,
            "unital": self.unital,
            "min_eigenvalue": self.min_eigenvalue,
            "choi_trace": self.choi_trace,
            "hermiticity_error": self.hermiticity_error,
            "choi_rank": self.choi_rank,
        }


# -----------------------------
# Evaluation
# -----------------------------

def apply_kraus(K: KrausSet, rho) -> np.ndarray:
    """T(rho) = sum_n K_n rho K_n^dagger, summed in operator order."""
    r = _check_square(rho, K.dim, "Input state")
    out = np.zeros_like(r)
    for op in K.operators:
        out += op @ r @ op.conj().T
    return out


def apply_superop(Phi: Superoperator, rho) -> np.ndarray:
    r = _check_square(rho, Phi.dim, "Input state")
    return mat(Phi.matrix @ vec(r).entries, (Phi.dim, Phi.dim))


def apply_choi(D: ChoiMatrix, rho) -> np.ndarray:
    """T(rho) = tr_2[D (1 (x) rho^T)]."""
    d = D.dim
    r = _check_square(rho, d, "Input state")
    return partial_trace(D.matrix @ kron(np.eye(d), r.T), d, d, keep=1)


def apply_channel(C: ChannelSpec, rho) -> np.ndarray:
    if isinstance(C, KrausSet):
        return apply_kraus(C, rho)
    if isinstance(C, ChoiMatrix):
        return apply_choi(C, rho)
    if isinstance(C, Superoperator):
        return apply_superop(C, rho)
    raise TypeError(f"Not a channel representation: {type(C).__name__}")


# -----------------------------
# Conversions
# -----------------------------

def kraus_to_superop(K: KrausSet) -> Superoperator:
    Phi = np.zeros((K.dim ** 2, K.dim ** 2), dtype=np.complex128)
    for op in K.operators:
        Phi += np.kron(op, op.conj())
    return Superoperator(dim=K.dim, matrix=Phi)


def kraus_to_choi(K: KrausSet) -> ChoiMatrix:
    D = np.zeros((K.dim ** 2, K.dim ** 2), dtype=np.complex128)
    for op in K.operators:
        v = vec(op).entries
        D += np.outer(v, v.conj())
    return ChoiMatrix(dim=K.dim, matrix=D)


def _reshuffle_square(M: np.ndarray, d: int) -> np.ndarray:
    # R(d, d, d, d) is an involution, so the same map goes both ways
    R = reshuffle_spec(d, d, d, d)
    return mat(apply_perm(R, vec(M).entries), (d * d, d * d))


def choi_to_superop(D: ChoiMatrix) -> Superoperator:
    return Superoperator(dim=D.dim, matrix=_reshuffle_square(D.matrix, D.dim))


def superop_to_choi(Phi: Superoperator) -> ChoiMatrix:
    return ChoiMatrix(dim=Phi.dim, matrix=_reshuffle_square(Phi.matrix, Phi.dim))


def _hermitian_part(M: np.ndarray, precheck_tol: float = HERMITIAN_PRECHECK_TOL) -> np.ndarray:
    err = float(np.abs(M - M.conj().T).max())
    if err > precheck_tol:
        raise ValueError(f"Choi matrix is not Hermitian: max |D - D^dagger| = {err:.3g} > {precheck_tol:.3g}")
    return (M + M.conj().T) / 2


def _fix_phase(v: np.ndarray) -> np.ndarray:
    # largest-magnitude component made real and positive; argmax keeps the lowest index on ties
    k = int(np.argmax(np.abs(v)))
    if v[k] == 0:
        return v
    out = v * (np.abs(v[k]) / v[k])
    out[k] = np.abs(v[k])
    return out


def choi_to_kraus(D: ChoiMatrix, cutoff: Optional[float] = None) -> KrausSet:
    """Kraus operators sqrt(lambda_n) mat(v_n) from the eigendecomposition of D.

    Eigenvalues at or below `cutoff` (default KRAUS_RELATIVE_CUTOFF * tr(D)) are dropped;
    any eigenvalue below -cutoff * d raises NotCompletelyPositive. Operators come out in
    order of decreasing eigenvalue.
    """
    d = D.dim
    h = _hermitian_part(D.matrix)
    evals, evecs = linalg.eigh(h)
    if cutoff is None:
        cutoff = KRAUS_RELATIVE_CUTOFF * abs(float(np.real(np.trace(h))))
    lam_min = float(evals[0])
    if lam_min < -cutoff * d:
        logger.debug(f"Kraus extraction refused: lambda_min = {lam_min:.6g}")
        raise NotCompletelyPositive(lam_min)

    operators: List[np.ndarray] = []
    for idx in range(evals.size - 1, -1, -1):
        lam = float(evals[idx])
        if lam <= cutoff:
            break
        operators.append(np.sqrt(lam) * _fix_phase(evecs[:, idx]).reshape(d, d))
    if not operators:
        raise ValueError("Choi matrix has no eigenvalue above the Kraus cutoff (zero map)")
    logger.debug(f"Kraus extraction: lambda_min = {lam_min:.6g}, kept {len(operators)} of {evals.size}")
    return KrausSet(dim=d, operators=tuple(operators))


def to_kraus(C: ChannelSpec, cutoff: Optional[float] = None) -> KrausSet:
    if isinstance(C, KrausSet):
        return C
    if isinstance(C, Superoperator):
        C = superop_to_choi(C)
    if isinstance(C, ChoiMatrix):
        return choi_to_kraus(C, cutoff=cutoff)
    raise TypeError(f"Not a channel representation: {type(C).__name__}")


def to_choi(C: ChannelSpec) -> ChoiMatrix:
    if isinstance(C, ChoiMatrix):
        return C
    if isinstance(C, KrausSet):
        return kraus_to_choi(C)
    if isinstance(C, Superoperator):
        return superop_to_choi(C)
    raise TypeError(f"Not a channel representation: {type(C).__name__}")


def to_superop(C: ChannelSpec) -> Superoperator:
    if isinstance(C, Superoperator):
        return C
    if isinstance(C, KrausSet):
        return kraus_to_superop(C)
    if isinstance(C, ChoiMatrix):
        return choi_to_superop(C)
    raise TypeError(f"Not a channel representation: {type(C).__name__}")


def convert(C: ChannelSpec, representation: str, cutoff: Optional[float] = None) -> ChannelSpec:
    """Convert to the representation named "kraus", "choi" or "superop"."""
    if representation == "kraus":
        return to_kraus(C, cutoff=cutoff)
    if representation == "choi":
        return to_choi(C)
    if representation == "superop":
        return to_superop(C)
    raise ValueError(f"Unknown representation {representation!r}; expected kraus, choi or superop")


def superop_from_action(fn: Callable[[np.ndarray], np.ndarray], d: int) -> Superoperator:
    """Superoperator of a linear map given as a function on d x d matrices.

    Column a*d + b is vec(fn(E_ab)).
    """
    Phi = np.zeros((d * d, d * d), dtype=np.complex128)
    for alpha in range(d * d):
        E = np.zeros((d, d), dtype=np.complex128)
        E[divmod(alpha, d)] = 1.0
        Phi[:, alpha] = vec(_check_square(fn(E), d, "Map output")).entries
    return Superoperator(dim=d, matrix=Phi)


def choi_from_action(fn: Callable[[np.ndarray], np.ndarray], d: int) -> ChoiMatrix:
    return superop_to_choi(superop_from_action(fn, d))


# -----------------------------
# Verification
# -----------------------------

def is_cp(C: ChannelSpec, tol: Optional[float] = None) -> Tuple[bool, float]:
    """(lambda_min >= -tol, lambda_min) for the Choi matrix of C.

    tol defaults to CP_RELATIVE_TOL * tr(D).
    """
    h = _hermitian_part(to_choi(C).matrix)
    if tol is None:
        tol = CP_RELATIVE_TOL * abs(float(np.real(np.trace(h))))
    lam_min = float(linalg.eigvalsh(h)[0])
    return lam_min >= -tol, lam_min


def is_tp(C: ChannelSpec, tol: float = DEFAULT_TOL) -> bool:
    d = C.dim
    if isinstance(C, KrausSet):
        completeness = sum(op.conj().T @ op for op in C.operators)
    else:
        completeness = partial_trace(to_choi(C).matrix, d, d, keep=2)
    return float(np.abs(completeness - np.eye(d)).max()) <= tol


def is_unital(C: ChannelSpec, tol: float = DEFAULT_TOL) -> bool:
    d = C.dim
    if isinstance(C, KrausSet):
        image = sum(op @ op.conj().T for op in C.operators)
    else:
        image = partial_trace(to_choi(C).matrix, d, d, keep=1)
    return float(np.abs(image - np.eye(d)).max()) <= tol


def verify_channel(C: ChannelSpec, tol: float = DEFAULT_TOL, cp_tol: Optional[float] = None) -> ChannelReport:
    """Measure CP, TP and unitality of C; never raises on a non-channel."""
    D = to_choi(C).matrix
    herm_err = float(np.abs(D - D.conj().T).max())
    evals = linalg.eigvalsh((D + D.conj().T) / 2)
    trace = float(np.real(np.trace(D)))
    if cp_tol is None:
        cp_tol = CP_RELATIVE_TOL * abs(trace)
    lam_min = float(evals[0])
    rank_cut = max(KRAUS_RELATIVE_CUTOFF * abs(trace), np.finfo(float).eps)
    report = ChannelReport(
        dim=C.dim,
        representation=C.representation,
        cp=herm_err <= HERMITIAN_PRECHECK_TOL and lam_min >= -cp_tol,
        tp=is_tp(C, tol),
        unital=is_unital(C, tol),
        min_eigenvalue=lam_min,
        choi_trace=trace,
        hermiticity_error=herm_err,
        choi_rank=int(np.count_nonzero(evals > rank_cut)),
    )
    logger.info(f"Verified {C.representation} channel (d={C.dim}): cp={report.cp} tp={report.tp} unital={report.unital}")
    return report


def is_density_matrix(rho, herm_tol: float = DEFAULT_TOL, psd_tol: float = DEFAULT_TOL,
                      trace_tol: float = DEFAULT_TOL) -> bool:
    try:
        check_density_matrix(rho, herm_tol, psd_tol, trace_tol)
    except ValueError:
        return False
    return True


def check_density_matrix(rho, herm_tol: float = DEFAULT_TOL, psd_tol: float = DEFAULT_TOL,
                         trace_tol: float = DEFAULT_TOL) -> np.ndarray:
    """Return rho as a matrix, or raise ValueError naming the property it fails."""
    r = as_matrix(rho)
    if r.shape[0] != r.shape[1]:
        raise ValueError(f"Density matrix must be square, got shape {r.shape}")
    herm_err = float(np.abs(r - r.conj().T).max())
    if herm_err > herm_tol:
        raise ValueError(f"State is not Hermitian (max |rho - rho^dagger| = {herm_err:.3g})")
    lam_min = float(linalg.eigvalsh((r + r.conj().T) / 2)[0])
    if lam_min < -psd_tol:
        raise ValueError(f"State is not positive semidefinite (lambda_min = {lam_min:.3g})")
    trace = complex(np.trace(r))
    if abs(trace - 1) > trace_tol:
        raise ValueError(f"State does not have unit trace (tr = {trace.real:.12g})")
    return r


def channel_distance(C1: ChannelSpec, C2: ChannelSpec) -> float:
    """Max-abs entrywise difference of the two superoperator matrices."""
    if C1.dim != C2.dim:
        raise ValueError(f"Cannot compare channels of dimension {C1.dim} and {C2.dim}")
    return float(np.abs(to_superop(C1).matrix - to_superop(C2).matrix).max())


# -----------------------------
# Jamiolkowski state and dilations
# -----------------------------

def jamiolkowski_state(C: ChannelSpec, tol: float = DEFAULT_TOL) -> np.ndarray:
    """(T (x) I) tau_+ = D / d for a CPTP map T."""
    D = to_choi(C)
    cp, lam_min = is_cp(D)
    if not cp:
        raise NotCompletelyPositive(lam_min)
    if not is_tp(D, tol):
        raise ValueError("Jamiolkowski state needs a trace-preserving channel")
    return D.matrix / D.dim


def _check_unitary(U, tol: float = UNITARY_TOL) -> np.ndarray:
    u = as_matrix(U)
    if u.shape[0] != u.shape[1]:
        raise ValueError(f"Unitary must be square, got shape {u.shape}")
    err = float(np.abs(u @ u.conj().T - np.eye(u.shape[0])).max())
    if err > tol:
        raise ValueError(f"Matrix is not unitary (max |U U^dagger - 1| = {err:.3g})")
    return u


def stinespring_apply(U12, omega, rho, tol: float = UNITARY_TOL) -> np.ndarray:
    """tr_2[U12 (rho (x) omega) U12^dagger]."""
    r, w = as_matrix(rho), as_matrix(omega)
    d1, d2 = r.shape[0], w.shape[0]
    u = _check_unitary(U12, tol)
    if u.shape != (d1 * d2, d1 * d2):
        raise ValueError(f"Dilation unitary of shape {u.shape} does not act on {d1} x {d2}")
    return partial_trace(u @ np.kron(r, w) @ u.conj().T, d1, d2, keep=1)


def dilation_kraus(U12, d1: int, d2: int, tol: float = UNITARY_TOL) -> KrausSet:
    """Kraus operators (1 (x) <k|) U12 (1 (x) |0>) for an environment starting in |0>."""
    u = _check_unitary(U12, tol)
    if u.shape != (d1 * d2, d1 * d2):
        raise ValueError(f"Dilation unitary of shape {u.shape} does not act on {d1} x {d2}")
    u4 = u.reshape(d1, d2, d1, d2)
    return KrausSet(dim=d1, operators=tuple(u4[:, k, :, 0] for k in range(d2)))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random d x d unitary."""
    if d == 1:
        return np.array([[np.exp(2j * np.pi * rng.random())]])
    return unitary_group.rvs(d, random_state=rng).astype(np.complex128)


def random_density_matrix(d: int, rng: np.random.Generator, rank: Optional[int] = None) -> np.ndarray:
    rank = d if rank is None else rank
    G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_channel(d: int, rng: np.random.Generator, env_dim: Optional[int] = None) -> KrausSet:
    """CPTP channel from a Haar-random dilation with environment dimension d^2 by default."""
    env_dim = d * d if env_dim is None else env_dim
    return dilation_kraus(random_unitary(d * env_dim, rng), d, env_dim)


# -----------------------------
# Constructors
# -----------------------------

PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


def _check_probability(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return float(value)


def identity(d: int) -> KrausSet:
    return KrausSet(dim=d, operators=(np.eye(d, dtype=np.complex128),))


def unitary(U) -> KrausSet:
    u = _check_unitary(U)
    return KrausSet(dim=u.shape[0], operators=(u,))


def weyl_operators(d: int) -> List[np.ndarray]:
    """X^j Z^k for j, k < d, identity first."""
    omega = np.exp(2j * np.pi / d)
    X = np.roll(np.eye(d, dtype=np.complex128), 1, axis=0)
    Z = np.diag(omega ** np.arange(d))
    return [np.linalg.matrix_power(X, j) @ np.linalg.matrix_power(Z, k) for j in range(d) for k in range(d)]


def depolarizing(d: int, p: float) -> KrausSet:
    """rho -> (1 - p) rho + p tr(rho) 1/d, as a Weyl-operator Kraus set."""
    p = _check_probability("p", p)
    ops = []
    for n, W in enumerate(weyl_operators(d)):
        weight = 1 - p + p / d ** 2 if n == 0 else p / d ** 2
        if weight > 0:
            ops.append(np.sqrt(weight) * W)
    return KrausSet(dim=d, operators=tuple(ops))


def amplitude_damping(gamma: float) -> KrausSet:
    gamma = _check_probability("gamma", gamma)
    K0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=np.complex128)
    K1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=np.complex128)
    return KrausSet(dim=2, operators=(K0, K1))


def phase_damping(lam: float) -> KrausSet:
    lam = _check_probability("lambda", lam)
    K0 = np.array([[1, 0], [0, np.sqrt(1 - lam)]], dtype=np.complex128)
    K1 = np.array([[0, 0], [0, np.sqrt(lam)]], dtype=np.complex128)
    return KrausSet(dim=2, operators=(K0, K1))


def phase_flip(p: float) -> KrausSet:
    p = _check_probability("p", p)
    return KrausSet(dim=2, operators=(np.sqrt(1 - p) * np.eye(2, dtype=np.complex128), np.sqrt(p) * PAULI_Z))


def transpose_map(d: int) -> ChoiMatrix:
    """Matrix transposition; its Choi matrix is the SWAP S(d, d), so no Kraus form exists."""
    return ChoiMatrix(dim=d, matrix=swap_spec(d, d).as_matrix().astype(np.complex128))


CONSTRUCTORS: Dict[str, Callable[..., ChannelSpec]] = {
    "identity": identity,
    "depolarizing": depolarizing,
    "amplitude_damping": amplitude_damping,
    "phase_damping": phase_damping,
    "phase_flip": phase_flip,
    "transpose": transpose_map,
}


def standard_channel(name: str, *params: float) -> ChannelSpec:
    """Look up a constructor by name, e.g. standard_channel("depolarizing", 2, 0.3)."""
    try:
        ctor = CONSTRUCTORS[name]
    except KeyError:
        raise ValueError(f"Unknown channel {name!r}; choose from {', '.join(sorted(CONSTRUCTORS))}") from None
    return ctor(*params)


def eigenvalues(C: ChannelSpec) -> np.ndarray:
    """Ascending eigenvalues of the Choi matrix of C."""
    return linalg.eigvalsh(_hermitian_part(to_choi(C).matrix))


def sum_channels(weights: Sequence[float], channels: Sequence[ChannelSpec]) -> ChoiMatrix:
    """Convex (or any real) combination of channels, returned in Choi form."""
    if len(weights) != len(channels) or not channels:
        raise ValueError("weights and channels must be non-empty and of equal length")
    d = channels[0].dim
    if any(C.dim != d for C in channels):
        raise ValueError("All channels in a combination must share one dimension")
    return ChoiMatrix(dim=d, matrix=sum(w * to_choi(C).matrix for w, C in zip(weights, channels)))
