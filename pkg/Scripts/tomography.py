"""
Linear-inversion process tomography.

- Tomographically complete input sets and their Hilbert-Schmidt dual bases
- Standard process tomography from output states or from a probability table
- Ancilla-assisted (AAPT) and entanglement-assisted (EAPT) reconstruction
- Measurement simulation, noiseless or with multinomial shot noise
- Dimension of the probability domain reachable with a POVM
- Preset input sets and POVMs

Reconstructed superoperators are never projected onto the CP cone; callers attach
a channels.verify_channel report instead.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from channels import (ChannelSpec, Superoperator, apply_channel, check_density_matrix,
                      random_density_matrix, to_superop)
from veclib import apply_perm, as_matrix, conjugate_by_perm, mat, reshuffle_spec, vec


CONDITION_LIMIT = 1e8
PINV_RCOND = 1e-10
STATE_TOL = 1e-10
RANK_TOL = 1e-10

logger = logging.getLogger('channel_explorer.tomography')


class IllConditionedSet(ValueError):
    """Raised when a linear inversion would amplify errors beyond CONDITION_LIMIT."""

    def __init__(self, condition_number: float, message: Optional[str] = None):
        self.condition_number = float(condition_number)
        super().__init__(message or f"Input set is ill-conditioned (condition number {self.condition_number:.6g})")


class IllConditionedAncillaState(IllConditionedSet):
    def __init__(self, condition_number: float, message: Optional[str] = None):
        super().__init__(
            condition_number,
            message or f"Joint input state cannot be inverted (condition number {float(condition_number):.6g}); "
                       f"it needs full Schmidt rank on the system",
        )


# -----------------------------
# Data models
# -----------------------------

@dataclass(frozen=True, eq=False)
class TomographySet:
    dim: int
    states: Tuple[np.ndarray, ...]
    physical: bool = True

    def __post_init__(self):
        states = tuple(as_matrix(s) for s in self.states)
        if len(states) != self.dim ** 2:
            raise ValueError(f"A complete input set for d={self.dim} has {self.dim ** 2} states, got {len(states)}")
        for mu, s in enumerate(states):
            if s.shape != (self.dim, self.dim):
                raise ValueError(f"Input state {mu} has shape {s.shape}, expected ({self.dim}, {self.dim})")
            if self.physical:
                try:
                    check_density_matrix(s, STATE_TOL, STATE_TOL, STATE_TOL)
                except ValueError as e:
                    raise ValueError(f"Input state {mu}: {str(e)}") from None
        object.__setattr__(self, "states", states)

    def condition_number(self) -> float:
        return condition_number(state_matrix(self))


@dataclass(frozen=True, eq=False)
class DualBasis:
    dim: int
    duals: Tuple[np.ndarray, ...]

    def matrix(self) -> np.ndarray:
        """Columns vec(D_mu)."""
        return np.column_stack([vec(D).entries for D in self.duals])


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    dim: int
    outcomes: Tuple[np.ndarray, ...]

    def __post_init__(self):
        outcomes = tuple(as_matrix(M) for M in self.outcomes)
        if not outcomes:
            raise ValueError("A measurement needs at least one outcome")
        for mu, M in enumerate(outcomes):
            if M.shape != (self.dim, self.dim):
                raise ValueError(f"POVM element {mu} has shape {M.shape}, expected ({self.dim}, {self.dim})")
            if np.abs(M - M.conj().T).max() > STATE_TOL or linalg.eigvalsh(M)[0] < -STATE_TOL:
                raise ValueError(f"POVM element {mu} is not positive semidefinite")
        total_err = float(np.abs(sum(outcomes) - np.eye(self.dim)).max())
        if total_err > STATE_TOL:
            raise ValueError(f"POVM elements do not sum to the identity (max error {total_err:.3g})")
        object.__setattr__(self, "outcomes", outcomes)

    def matrix(self) -> np.ndarray:
        """Columns vec(M_mu), shape (d^2, N)."""
        return np.column_stack([vec(M).entries for M in self.outcomes])


@dataclass(frozen=True, eq=False)
class ProbabilityMatrix:
    """m[mu, nu] = tr(M_mu^dagger rho'_nu); rows are outcomes, columns are inputs."""
    entries: np.ndarray
    shots: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2:
            raise ValueError(f"Probability table must be 2-D, got shape {m.shape}")
        if m.min() < -STATE_TOL or m.max() > 1 + STATE_TOL:
            raise ValueError("Probability table has entries outside [0, 1]")
        col_err = float(np.abs(m.sum(axis=0) - 1).max())
        if col_err > STATE_TOL:
            raise ValueError(f"Probability table columns do not sum to 1 (max error {col_err:.3g})")
        if self.shots is not None and len(self.shots) != m.shape[1]:
            raise ValueError(f"Got {len(self.shots)} shot counts for {m.shape[1]} input columns")
        object.__setattr__(self, "entries", m)

    @property
    def kind(self) -> str:
        return "probabilities" if self.shots is None else "frequencies"

    def to_frame(self) -> pd.DataFrame:
        n_out, n_in = self.entries.shape
        return pd.DataFrame(
            self.entries,
            index=[f"M{mu}" for mu in range(n_out)],
            columns=[f"rho{nu}" for nu in range(n_in)],
        )


@dataclass(frozen=True, eq=False)
class JointState:
    d1: int
    d2: int
    matrix: np.ndarray

    def __post_init__(self):
        n = self.d1 * self.d2
        m = as_matrix(self.matrix)
        if m.shape != (n, n):
            raise ValueError(f"Joint state has shape {m.shape}, expected ({n}, {n}) for d1={self.d1}, d2={self.d2}")
        check_density_matrix(m, STATE_TOL, STATE_TOL, STATE_TOL)
        object.__setattr__(self, "matrix", m)


# -----------------------------
# Linear algebra helpers
# -----------------------------

def condition_number(M: np.ndarray, rank: Optional[int] = None) -> float:
    """sigma_max / sigma_rank (the smallest singular value by default); inf when singular."""
    s = linalg.svdvals(M)
    rank = min(M.shape) if rank is None else rank
    if rank > s.size or s[rank - 1] == 0:
        return float("inf")
    return float(s[0] / s[rank - 1])


def _pinv(M: np.ndarray) -> np.ndarray:
    return linalg.pinv(M, atol=0.0, rtol=PINV_RCOND)


def state_matrix(tset: TomographySet) -> np.ndarray:
    """[rho_in]: column mu is vec(rho_mu)."""
    return np.column_stack([vec(s).entries for s in tset.states])


def _duals_from_matrix(Dm: np.ndarray, d: int) -> DualBasis:
    return DualBasis(dim=d, duals=tuple(mat(Dm[:, mu], (d, d)) for mu in range(Dm.shape[1])))


# -----------------------------
# Dual bases
# -----------------------------

def dual_basis(tset: TomographySet, pinv: bool = False, cond_max: float = CONDITION_LIMIT) -> DualBasis:
    """[D] = ([rho_in]^dagger)^-1, so tr(D_nu^dagger rho_mu) = delta_nu_mu."""
    M = state_matrix(tset)
    cond = condition_number(M)
    if pinv:
        if cond > cond_max:
            logger.warning(f"Input set condition number {cond:.3g}; using pseudo-inverse duals")
        return _duals_from_matrix(_pinv(M.conj().T), tset.dim)
    if cond > cond_max:
        raise IllConditionedSet(cond)
    lu = linalg.lu_factor(M.conj().T)
    return _duals_from_matrix(linalg.lu_solve(lu, np.eye(M.shape[0], dtype=np.complex128)), tset.dim)


def dual_basis_from_gram(tset: TomographySet, cond_max: float = CONDITION_LIMIT) -> DualBasis:
    """D_nu = P^-1 vec(rho_nu) with P = sum_mu vec(rho_mu) vec(rho_mu)^dagger."""
    M = state_matrix(tset)
    cond = condition_number(M)
    if cond > cond_max:
        raise IllConditionedSet(cond)
    P = M @ M.conj().T
    return _duals_from_matrix(linalg.solve(P, M, assume_a='pos'), tset.dim)


def measurement_dual(meas: MeasurementSet, rank_tol: float = RANK_TOL,
                     cond_max: float = CONDITION_LIMIT, pinv: bool = False) -> DualBasis:
    """Dual operators E^mu with sum_mu E^mu tr(M_mu rho) = rho.

    With N = d^2 outcomes this is the exact inverse ([M]^dagger)^-1; with more outcomes
    the minimum-norm generalized dual pinv([M]^dagger). With pinv set, incomplete or
    ill-conditioned measurements get the pseudo-dual instead of an error; it only
    reconstructs the part of rho the measurement can see.
    """
    d = meas.dim
    A = meas.matrix()
    s = linalg.svdvals(A)
    rank = int(np.count_nonzero(s > rank_tol * s[0]))
    cond = float(s[0] / s[d * d - 1]) if rank == d * d else float("inf")
    if pinv:
        if rank < d * d:
            logger.warning(f"Measurement spans {rank} of {d * d} operator dimensions; using the pseudo-dual")
        elif cond > cond_max:
            logger.warning(f"Measurement condition number {cond:.3g}; using the pseudo-dual")
        return _duals_from_matrix(_pinv(A.conj().T), d)
    if rank < d * d:
        raise IllConditionedSet(
            cond,
            f"Measurement spans {rank} of {d * d} operator dimensions; it is not informationally complete",
        )
    if len(meas.outcomes) == d * d:
        if cond > cond_max:
            raise IllConditionedSet(cond)
        Em = linalg.solve(A.conj().T, np.eye(d * d, dtype=np.complex128))
    else:
        logger.info(f"{len(meas.outcomes)} outcomes for d^2 = {d * d}: using the generalized dual")
        Em = _pinv(A.conj().T)
    return _duals_from_matrix(Em, d)


def state_from_probabilities(meas_dual: DualBasis, probs: Sequence[float]) -> np.ndarray:
    """rho = sum_mu E^mu p_mu."""
    p = np.asarray(probs, dtype=float)
    Em = meas_dual.matrix()
    if p.shape != (Em.shape[1],):
        raise ValueError(f"Got {p.size} probabilities for {Em.shape[1]} dual operators")
    return mat(Em @ p, (meas_dual.dim, meas_dual.dim))


# -----------------------------
# Standard process tomography
# -----------------------------

def spt_from_outputs(tset: TomographySet, outputs: Sequence, pinv: bool = False,
                     cond_max: float = CONDITION_LIMIT) -> Superoperator:
    """Phi = [rho_out] [rho_in]^-1."""
    d = tset.dim
    if len(outputs) != len(tset.states):
        raise ValueError(f"Got {len(outputs)} output states for {len(tset.states)} inputs")
    outs = [as_matrix(o) for o in outputs]
    for mu, o in enumerate(outs):
        if o.shape != (d, d):
            raise ValueError(f"Output state {mu} has shape {o.shape}, expected ({d}, {d})")
    M_in = state_matrix(tset)
    M_out = np.column_stack([vec(o).entries for o in outs])
    cond = condition_number(M_in)
    if pinv:
        if cond > cond_max:
            logger.warning(f"Input set condition number {cond:.3g}; using pseudo-inverse")
        Phi = M_out @ _pinv(M_in)
    else:
        if cond > cond_max:
            raise IllConditionedSet(cond)
        Phi = linalg.solve(M_in.T, M_out.T).T
    logger.info(f"Reconstructed d={d} superoperator from {len(outs)} output states (cond {cond:.3g})")
    return Superoperator(dim=d, matrix=Phi)


def spt_from_probs(meas: MeasurementSet, m: ProbabilityMatrix, duals: DualBasis,
                   rank_tol: float = RANK_TOL, cond_max: float = CONDITION_LIMIT,
                   pinv: bool = False) -> Superoperator:
    """Phi = [E] m [D]^dagger; pinv selects the pseudo-dual for incomplete measurements."""
    d = meas.dim
    if duals.dim != d:
        raise ValueError(f"Dual basis is for d={duals.dim}, measurement for d={d}")
    n_out, n_in = m.entries.shape
    if n_out != len(meas.outcomes) or n_in != len(duals.duals):
        raise ValueError(
            f"Probability table of shape {m.entries.shape} does not match "
            f"{len(meas.outcomes)} outcomes x {len(duals.duals)} inputs"
        )
    if m.kind == "frequencies":
        logger.warning("Reconstructing from sampled frequencies; the result is a best-effort estimate")
    Em = measurement_dual(meas, rank_tol=rank_tol, cond_max=cond_max, pinv=pinv).matrix()
    Phi = Em @ m.entries @ duals.matrix().conj().T
    logger.info(f"Reconstructed d={d} superoperator from a {n_out} x {n_in} {m.kind} table")
    return Superoperator(dim=d, matrix=Phi)


# -----------------------------
# Simulation
# -----------------------------

def simulate_outputs(C: ChannelSpec, tset: TomographySet) -> List[np.ndarray]:
    if C.dim != tset.dim:
        raise ValueError(f"Channel dimension {C.dim} does not match input set dimension {tset.dim}")
    return [apply_channel(C, rho) for rho in tset.states]


def simulate_probs(C: ChannelSpec, tset: TomographySet, meas: MeasurementSet,
                   shots: Optional[int] = None, seed: int = 0) -> ProbabilityMatrix:
    """Outcome probabilities per input, or multinomial frequencies when shots is given."""
    if meas.dim != tset.dim:
        raise ValueError(f"Measurement dimension {meas.dim} does not match input set dimension {tset.dim}")
    outputs = np.column_stack([vec(o).entries for o in simulate_outputs(C, tset)])
    probs = np.real(meas.matrix().conj().T @ outputs)
    if shots is None:
        return ProbabilityMatrix(entries=probs)
    if shots < 1:
        raise ValueError(f"shots must be a positive integer, got {shots}")
    rng = np.random.default_rng(seed)
    freqs = np.empty_like(probs)
    for nu in range(probs.shape[1]):
        p = np.clip(probs[:, nu], 0.0, None)
        counts = rng.multinomial(shots, p / p.sum())
        freqs[:, nu] = counts / shots
    return ProbabilityMatrix(entries=freqs, shots=(int(shots),) * probs.shape[1])


# -----------------------------
# Ancilla- and entanglement-assisted tomography
# -----------------------------

def joint_superop(Phi: Superoperator, d2: int) -> Superoperator:
    """Superoperator of T (x) I on C^d1 (x) C^d2: R (Phi (x) 1) R^-1 with R = R(d1, d1, d2, d2)."""
    d1 = Phi.dim
    R = reshuffle_spec(d1, d1, d2, d2)
    big = np.kron(Phi.matrix, np.eye(d2 * d2, dtype=np.complex128))
    return Superoperator(dim=d1 * d2, matrix=conjugate_by_perm(R, big))


def simulate_joint_output(C: ChannelSpec, tau_in: JointState) -> JointState:
    """(T (x) I) tau_in."""
    if C.dim != tau_in.d1:
        raise ValueError(f"Channel dimension {C.dim} does not match system dimension {tau_in.d1}")
    Phi_joint = joint_superop(to_superop(C), tau_in.d2)
    n = tau_in.d1 * tau_in.d2
    out = mat(Phi_joint.matrix @ vec(tau_in.matrix).entries, (n, n))
    return JointState(d1=tau_in.d1, d2=tau_in.d2, matrix=(out + out.conj().T) / 2)


def maximally_entangled_state(d: int) -> JointState:
    """tau_+ = vec(1) vec(1)^dagger / d, normalized to unit trace."""
    v = vec(np.eye(d)).entries
    return JointState(d1=d, d2=d, matrix=np.outer(v, v.conj()) / d)


def product_joint_state(rho, omega) -> JointState:
    r, w = as_matrix(rho), as_matrix(omega)
    return JointState(d1=r.shape[0], d2=w.shape[0], matrix=np.kron(r, w))


def random_joint_pure_state(d1: int, d2: int, rng: np.random.Generator) -> JointState:
    psi = rng.normal(size=d1 * d2) + 1j * rng.normal(size=d1 * d2)
    psi /= np.linalg.norm(psi)
    return JointState(d1=d1, d2=d2, matrix=np.outer(psi, psi.conj()))


def ancilla_matrix(tau: JointState) -> np.ndarray:
    """Phi_tau = mat(R^-1 vec(tau)), a d1^2 x d2^2 matrix; rank 1 for product states."""
    d1, d2 = tau.d1, tau.d2
    R_inv = reshuffle_spec(d1, d1, d2, d2).inverse()
    return mat(apply_perm(R_inv, vec(tau.matrix).entries), (d1 * d1, d2 * d2))


def aapt_reconstruct(tau_in: JointState, tau_out: JointState, pinv: bool = False,
                     cond_max: float = CONDITION_LIMIT) -> Superoperator:
    """Solve Phi_T Phi_tau_in = Phi_tau_out for the system superoperator Phi_T.

    Needs d2 >= d1; with d2 > d1 the minimum-norm right inverse of Phi_tau_in is used.
    """
    if (tau_in.d1, tau_in.d2) != (tau_out.d1, tau_out.d2):
        raise ValueError(
            f"Input and output joint states disagree on dimensions: "
            f"{(tau_in.d1, tau_in.d2)} vs {(tau_out.d1, tau_out.d2)}"
        )
    d1, d2 = tau_in.d1, tau_in.d2
    A = ancilla_matrix(tau_in)
    Y = ancilla_matrix(tau_out)
    cond = condition_number(A, rank=d1 * d1)
    if pinv:
        if cond > cond_max:
            logger.warning(f"Ancilla state condition number {cond:.3g}; using pseudo-inverse")
        Phi = Y @ _pinv(A)
    else:
        if cond > cond_max:
            raise IllConditionedAncillaState(cond)
        if d1 == d2:
            Phi = linalg.solve(A.T, Y.T).T
        else:
            Phi = Y @ _pinv(A)
    logger.info(f"AAPT reconstruction d1={d1}, d2={d2} (cond {cond:.3g})")
    return Superoperator(dim=d1, matrix=Phi)


def eapt_reconstruct(tau_out) -> Superoperator:
    """Phi_T = d * mat(R^-1 vec(tau_out)) for an experiment fed with tau_+."""
    if isinstance(tau_out, JointState):
        joint = tau_out
    else:
        m = as_matrix(tau_out)
        d = int(round(np.sqrt(m.shape[0])))
        if m.shape[0] != m.shape[1] or d * d != m.shape[0]:
            raise ValueError(f"Joint output of shape {m.shape} is not d^2 x d^2")
        joint = JointState(d1=d, d2=d, matrix=m)
    if joint.d1 != joint.d2:
        raise ValueError(f"EAPT needs equal system and ancilla dimensions, got {joint.d1} and {joint.d2}")
    return Superoperator(dim=joint.d1, matrix=joint.d1 * ancilla_matrix(joint))


# -----------------------------
# Probability domain
# -----------------------------

def _hs_normalize(M: np.ndarray) -> np.ndarray:
    return M / np.sqrt(np.real(np.trace(M.conj().T @ M)))


def gell_mann_basis(d: int) -> List[np.ndarray]:
    """Orthonormal Hermitian basis: 1/sqrt(d) first, then d^2 - 1 traceless elements."""
    if d < 1:
        raise ValueError(f"Dimension must be positive, got {d}")
    basis = [_hs_normalize(np.eye(d, dtype=np.complex128))]
    for k in range(1, d):
        for j in range(k):
            G = np.zeros((d, d), dtype=np.complex128)
            G[j, k] = G[k, j] = 1.0
            basis.append(_hs_normalize(G))
    for k in range(1, d):
        for j in range(k):
            G = np.zeros((d, d), dtype=np.complex128)
            G[j, k] = -1.0j
            G[k, j] = 1.0j
            basis.append(_hs_normalize(G))
    for ell in range(1, d):
        G = np.zeros((d, d), dtype=np.complex128)
        G[np.arange(ell), np.arange(ell)] = 1.0
        G[ell, ell] = -float(ell)
        basis.append(_hs_normalize(G))
    return basis


def povm_domain_dimension(meas: MeasurementSet, rank_tol: float = RANK_TOL) -> int:
    """Dimension of the affine span of outcome-probability vectors over all states."""
    traceless = gell_mann_basis(meas.dim)[1:]
    if not traceless:
        return 0
    T = np.array([[np.real(np.trace(M @ G)) for G in traceless] for M in meas.outcomes])
    s = linalg.svdvals(T)
    return int(np.count_nonzero(s > rank_tol * max(1.0, float(s[0]))))


# -----------------------------
# Presets
# -----------------------------

def _projector(psi) -> np.ndarray:
    v = np.asarray(psi, dtype=np.complex128)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def qubit_input_set() -> TomographySet:
    """|0><0|, |1><1|, |+><+|, |+i><+i|."""
    kets = [(1, 0), (0, 1), (1, 1), (1, 1j)]
    return TomographySet(dim=2, states=tuple(_projector(k) for k in kets))


def tetrahedral_povm() -> MeasurementSet:
    """Qubit SIC POVM (1 + n.sigma)/4 with the Bloch vectors of a regular tetrahedron."""
    sigma = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.array([[1, 0], [0, -1]])]
    bloch = [
        (0.0, 0.0, 1.0),
        (2 * np.sqrt(2) / 3, 0.0, -1 / 3),
        (-np.sqrt(2) / 3, np.sqrt(2 / 3), -1 / 3),
        (-np.sqrt(2) / 3, -np.sqrt(2 / 3), -1 / 3),
    ]
    outcomes = [(np.eye(2) + sum(c * s for c, s in zip(n, sigma))) / 4 for n in bloch]
    return MeasurementSet(dim=2, outcomes=tuple(np.asarray(M, dtype=np.complex128) for M in outcomes))


def pauli_povm() -> MeasurementSet:
    """Six Pauli-eigenstate projectors, each weighted 1/3."""
    kets = [(1, 0), (0, 1), (1, 1), (1, -1), (1, 1j), (1, -1j)]
    return MeasurementSet(dim=2, outcomes=tuple(_projector(k) / 3 for k in kets))


def computational_povm(d: int) -> MeasurementSet:
    return MeasurementSet(dim=d, outcomes=tuple(_projector(np.eye(d)[k]) for k in range(d)))


def matrix_unit_set(d: int) -> TomographySet:
    """The matrix units E_ab in fused order; not physical states, useful as a self-dual basis."""
    units = []
    for alpha in range(d * d):
        E = np.zeros((d, d), dtype=np.complex128)
        E[divmod(alpha, d)] = 1.0
        units.append(E)
    return TomographySet(dim=d, states=tuple(units), physical=False)


def random_input_set(d: int, rng: np.random.Generator, rank: Optional[int] = 1, cond_max: float = 1e4,
                     max_tries: int = 100) -> TomographySet:
    """d^2 random states of the given rank (pure by default) with condition number below cond_max."""
    for _ in range(max_tries):
        states = tuple(random_density_matrix(d, rng, rank) for _ in range(d * d))
        tset = TomographySet(dim=d, states=states)
        if tset.condition_number() < cond_max:
            return tset
    raise IllConditionedSet(float("inf"), f"No input set with condition number < {cond_max:g} in {max_tries} tries")


def random_povm(d: int, n_outcomes: int, rng: np.random.Generator, rank: Optional[int] = None) -> MeasurementSet:
    """Normalize random PSD matrices A_mu to M_mu = S^-1/2 A_mu S^-1/2 with S = sum A_mu.

    rank sets the rank of each A_mu (full by default); n_outcomes * rank must reach d.
    """
    rank = d if rank is None else rank
    if n_outcomes * rank < d:
        raise ValueError(f"{n_outcomes} outcomes of rank {rank} cannot sum to the identity in d={d}")
    raw = []
    for _ in range(n_outcomes):
        G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
        raw.append(G @ G.conj().T)
    evals, evecs = linalg.eigh(sum(raw))
    S_inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.conj().T
    outcomes = []
    for A in raw:
        M = S_inv_sqrt @ A @ S_inv_sqrt
        outcomes.append((M + M.conj().T) / 2)
    return MeasurementSet(dim=d, outcomes=tuple(outcomes))
