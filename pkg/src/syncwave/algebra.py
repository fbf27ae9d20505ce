"""Group-synchronization algebra for coupled second-order systems.

Builds the block first-difference matrix whose kernel encodes agreement
within each group of components, checks the compatibility conditions a
coupling matrix must satisfy for that kernel to be invariant, and produces
the reduced and limit systems together with rank diagnostics.

Conventions:
    - A partition of N components into p groups is given by the group
      sizes (each at least 2).
    - The sync matrix has one block per group; each block holds rows
      (..., 1, -1, ...) so that the block kernel is the group indicator.
    - The reduced state is obtained with the row-orthonormalized version
      of the sync matrix, which keeps the reduced matrices symmetric.

All operations are pure functions over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Default relative tolerance for the compatibility / reconstruction checks.
COMPAT_RTOL = 1e-10
# Symmetry / PSD validation tolerances for coupling matrices.
SYM_RTOL = 1e-12
PSD_RTOL = 1e-10
# Eigenvalues below this (relative to the largest) are clamped for the
# matrix square root and rejected for the inverse square root.
EIG_FLOOR = 1e-13


class InvalidPartitionError(ValueError):
    """Group partition violates size constraints."""


class MatrixDomainError(ValueError):
    """Matrix outside the admissible class (asymmetric or indefinite)."""


class SingularMatrixError(MatrixDomainError):
    """Inverse square root requested for a singular matrix."""


class CompatibilityError(ValueError):
    """Coupling matrix fails a required compatibility condition."""


@dataclass(frozen=True)
class GroupPartition:
    """Partition of N components into p contiguous groups.

    ``sizes[r]`` is the number of components in group r; every group must
    contain at least two components.
    """

    sizes: tuple[int, ...]

    def __init__(self, sizes: Sequence[int]):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 1:
            raise InvalidPartitionError("partition needs at least one group")
        for r, s in enumerate(sizes):
            if s < 2:
                raise InvalidPartitionError(
                    f"group {r + 1} has size {s}; every group needs at least 2 components"
                )
        object.__setattr__(self, "sizes", sizes)

    @property
    def p(self) -> int:
        return len(self.sizes)

    @property
    def n_components(self) -> int:
        return sum(self.sizes)

    @property
    def boundaries(self) -> tuple[int, ...]:
        """Cumulative boundaries 0 = n_0 < n_1 < ... < n_p = N."""
        out = [0]
        for s in self.sizes:
            out.append(out[-1] + s)
        return tuple(out)

    def group_slices(self) -> list[slice]:
        b = self.boundaries
        return [slice(b[r], b[r + 1]) for r in range(self.p)]


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric positive semi-definite coupling matrix with a role tag.

    ``role`` is "A" for the stiffness-type coupling and "D" for the
    damping-type coupling; validation is identical for both.
    """

    entries: np.ndarray
    role: str = "A"

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise MatrixDomainError(f"coupling matrix must be square, got shape {m.shape}")
        scale = np.abs(m).max() if m.size else 0.0
        skew = np.abs(m - m.T).max()
        if skew > SYM_RTOL * max(scale, 1.0):
            raise MatrixDomainError(
                f"coupling matrix {self.role} is not symmetric (max |m_ij - m_ji| = {skew:.3e})"
            )
        w = np.linalg.eigvalsh(0.5 * (m + m.T))
        if w[0] < -PSD_RTOL * max(w[-1], 1.0):
            raise MatrixDomainError(
                f"coupling matrix {self.role} is not positive semi-definite "
                f"(min eigenvalue {w[0]:.3e})"
            )
        object.__setattr__(self, "entries", m)

    @property
    def order(self) -> int:
        return self.entries.shape[0]


def as_coupling(m, role: str = "A") -> np.ndarray:
    """Validate ``m`` as a coupling matrix and return its dense array."""
    if isinstance(m, CouplingMatrix):
        return m.entries
    return CouplingMatrix(np.asarray(m, dtype=float), role).entries


@dataclass(frozen=True)
class SyncReduction:
    """Sync matrix, kernel basis and (optionally) the reduced system.

    ``cp`` is the (N-p) x N block first-difference matrix, ``kernel`` holds
    the p group indicator vectors as rows, and ``normalizer`` is the
    row-orthonormalized map used to form the reduced state.  The remaining
    fields are filled by :func:`reduce_system`.
    """

    partition: GroupPartition
    cp: np.ndarray
    kernel: np.ndarray
    normalizer: np.ndarray
    a_reduced: np.ndarray | None = None
    d_reduced: np.ndarray | None = None
    r_factor: np.ndarray | None = None
    beta: np.ndarray | None = None

    @property
    def reduced_order(self) -> int:
        return self.cp.shape[0]


@dataclass(frozen=True)
class CompatibilityReport:
    """Result of the kernel-invariance check for a stiffness-type coupling."""

    compatible: bool
    residual: float
    alpha: np.ndarray       # p x p block row sums
    row_sum_spread: float   # max deviation of row sums within any block
    tolerance: float


@dataclass(frozen=True)
class StrongCompatibilityReport:
    """Result of the kernel-annihilation check for a damping-type coupling."""

    strong: bool
    residual: float
    tolerance: float
    r_factor: np.ndarray | None = None
    reconstruction_residual: float | None = None


@dataclass(frozen=True)
class RankReport:
    """Rank diagnostics tied to the necessity results for uniform decay."""

    rank_d: int
    rank_cpd: int
    minimal_rank_ok: bool
    biorthogonal: bool
    kalman_rank: int
    kernel_dim_d: int = field(default=0)


def build_sync_matrix(partition: GroupPartition) -> SyncReduction:
    """Construct the sync matrix, its kernel basis and the normalizer.

    The matrix is block diagonal with one (size-1) x size block per group
    whose rows are consecutive first differences; the kernel is spanned by
    the group indicator vectors.
    """
    if not isinstance(partition, GroupPartition):
        partition = GroupPartition(partition)
    n = partition.n_components
    p = partition.p
    cp = np.zeros((n - p, n))
    kernel = np.zeros((p, n))
    row = 0
    for r, sl in enumerate(partition.group_slices()):
        size = sl.stop - sl.start
        for j in range(size - 1):
            cp[row, sl.start + j] = 1.0
            cp[row, sl.start + j + 1] = -1.0
            row += 1
        kernel[r, sl] = 1.0
    gram = cp @ cp.T
    normalizer = invsqrt_spd(gram) @ cp
    return SyncReduction(partition=partition, cp=cp, kernel=kernel, normalizer=normalizer)


def _eigh_checked(s: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise MatrixDomainError(f"{what}: matrix must be square, got shape {s.shape}")
    scale = np.abs(s).max() if s.size else 0.0
    if np.abs(s - s.T).max() > SYM_RTOL * max(scale, 1.0):
        raise MatrixDomainError(f"{what}: matrix is not symmetric")
    w, q = np.linalg.eigh(s)
    if w.size and w[0] < -PSD_RTOL * max(w[-1], 1.0):
        raise MatrixDomainError(f"{what}: matrix has negative eigenvalue {w[0]:.3e}")
    return w, q


def sqrt_spd(s: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues below the relative floor are clamped to zero.
    """
    w, q = _eigh_checked(s, "sqrt_spd")
    w = np.where(w < EIG_FLOOR * max(w[-1], 0.0), 0.0, w)
    root = (q * np.sqrt(w)) @ q.T
    return 0.5 * (root + root.T)


def invsqrt_spd(s: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root; rejects near-singular input."""
    w, q = _eigh_checked(s, "invsqrt_spd")
    if w.size == 0:
        return np.zeros_like(np.asarray(s, dtype=float))
    if w[0] <= EIG_FLOOR * max(w[-1], 0.0) or w[-1] <= 0.0:
        raise SingularMatrixError(
            f"invsqrt_spd: eigenvalue {w[0]:.3e} below floor, matrix is singular"
        )
    root = (q / np.sqrt(w)) @ q.T
    return 0.5 * (root + root.T)


def check_cp_compatibility(a, partition: GroupPartition, rtol: float = COMPAT_RTOL
                           ) -> CompatibilityReport:
    """Check that the coupling maps the agreement kernel into itself.

    Equivalently, row sums of each group-by-group block must be constant;
    the report carries both the kernel residual and the block row sums so
    the two criteria can be compared.
    """
    a = as_coupling(a, "A")
    sr = build_sync_matrix(partition)
    partition = sr.partition
    _require_order(a, partition)
    tol = rtol * (1.0 + np.linalg.norm(a, 2))
    residual = max(
        float(np.linalg.norm(sr.cp @ (a @ e))) for e in sr.kernel
    )
    p = partition.p
    slices = partition.group_slices()
    alpha = np.zeros((p, p))
    spread = 0.0
    for r in range(p):
        for s in range(p):
            sums = a[slices[r], slices[s]].sum(axis=1)
            alpha[r, s] = sums.mean()
            spread = max(spread, float(np.abs(sums - alpha[r, s]).max()))
    return CompatibilityReport(
        compatible=bool(residual <= tol),
        residual=residual,
        alpha=alpha,
        row_sum_spread=spread,
        tolerance=tol,
    )


def check_strong_compatibility(d, partition: GroupPartition, rtol: float = COMPAT_RTOL
                               ) -> StrongCompatibilityReport:
    """Check that the coupling annihilates the agreement kernel.

    When it does, the coupling factors through the sync matrix as
    ``cp.T @ R @ cp`` with R symmetric PSD; the factor and the
    reconstruction residual are reported.
    """
    d = as_coupling(d, "D")
    sr = build_sync_matrix(partition)
    partition = sr.partition
    _require_order(d, partition)
    tol = rtol * (1.0 + np.linalg.norm(d, 2))
    residual = max(float(np.linalg.norm(d @ e)) for e in sr.kernel)
    if residual > tol:
        return StrongCompatibilityReport(strong=False, residual=residual, tolerance=tol)
    gram_inv = np.linalg.inv(sr.cp @ sr.cp.T)
    r_factor = gram_inv @ sr.cp @ d @ sr.cp.T @ gram_inv
    r_factor = 0.5 * (r_factor + r_factor.T)
    recon = float(np.linalg.norm(d - sr.cp.T @ r_factor @ sr.cp, 2))
    return StrongCompatibilityReport(
        strong=True,
        residual=residual,
        tolerance=tol,
        r_factor=r_factor,
        reconstruction_residual=recon,
    )


def reduce_system(a, d, partition: GroupPartition, rtol: float = COMPAT_RTOL) -> SyncReduction:
    """Form the self-closed reduced system for a compatible pair.

    Conjugates both couplings with the orthonormal-row normalizer; refuses
    with a diagnostic naming the violated condition and the offending
    kernel vector when a compatibility check fails.
    """
    a = as_coupling(a, "A")
    d = as_coupling(d, "D")
    sr = build_sync_matrix(partition)
    partition = sr.partition
    rep_a = check_cp_compatibility(a, partition, rtol)
    if not rep_a.compatible:
        raise CompatibilityError(
            "matrix A violates the compatibility condition: "
            f"{_worst_kernel(sr, a)} (residual {rep_a.residual:.3e} > {rep_a.tolerance:.3e})"
        )
    rep_d = check_strong_compatibility(d, partition, rtol)
    if not rep_d.strong:
        raise CompatibilityError(
            "matrix D violates the strong compatibility condition: "
            f"{_worst_kernel(sr, d, annihilate=True)} "
            f"(residual {rep_d.residual:.3e} > {rep_d.tolerance:.3e})"
        )
    m = sr.normalizer
    a_red = m @ a @ m.T
    d_red = m @ d @ m.T
    a_red = 0.5 * (a_red + a_red.T)
    d_red = 0.5 * (d_red + d_red.T)
    beta = beta_matrix(a, partition, rtol)
    return SyncReduction(
        partition=partition,
        cp=sr.cp,
        kernel=sr.kernel,
        normalizer=m,
        a_reduced=a_red,
        d_reduced=d_red,
        r_factor=rep_d.r_factor,
        beta=beta,
    )


def _worst_kernel(sr: SyncReduction, m: np.ndarray, annihilate: bool = False) -> str:
    if annihilate:
        norms = [float(np.linalg.norm(m @ e)) for e in sr.kernel]
        r = int(np.argmax(norms))
        return f"D e_{r + 1} != 0"
    norms = [float(np.linalg.norm(sr.cp @ (m @ e))) for e in sr.kernel]
    r = int(np.argmax(norms))
    return f"A e_{r + 1} leaves the agreement kernel"


def beta_matrix(a, partition: GroupPartition, rtol: float = COMPAT_RTOL) -> np.ndarray:
    """Limit coupling between the group-averaged fields.

    Entry (r, s) is the coupling inner product of the normalized group
    indicators; requires the compatibility condition, without which the
    kernel expansion of the coupling does not close.
    """
    a = as_coupling(a, "A")
    sr = build_sync_matrix(partition)
    partition = sr.partition
    rep = check_cp_compatibility(a, partition, rtol)
    if not rep.compatible:
        raise CompatibilityError(
            "limit coupling undefined: matrix A violates the compatibility condition "
            f"(residual {rep.residual:.3e} > {rep.tolerance:.3e})"
        )
    norms = np.sqrt(np.asarray(partition.sizes, dtype=float))
    beta = (sr.kernel @ a @ sr.kernel.T) / np.outer(norms, norms)
    return 0.5 * (beta + beta.T)


def _svd_rank(m: np.ndarray) -> int:
    if m.size == 0:
        return 0
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    tol = max(m.shape) * np.finfo(float).eps * sv[0]
    return int(np.count_nonzero(sv > tol))


def _null_space(m: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the kernel, columns."""
    u, sv, vt = np.linalg.svd(m)
    tol = max(m.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.count_nonzero(sv > tol))
    return vt[rank:].T


def rank_diagnostics(a, d, partition: GroupPartition) -> RankReport:
    """Rank facts that decide whether uniform group decay is possible.

    ``minimal_rank_ok`` holds when both the damping matrix and its image
    under the sync matrix have rank N - p; this is equivalent to the
    kernel of the damping matrix pairing invertibly with the agreement
    kernel (``biorthogonal``).  ``kalman_rank`` is the rank of the
    controllability-style block matrix built from both couplings.
    """
    a = as_coupling(a, "A")
    d = as_coupling(d, "D")
    sr = build_sync_matrix(partition)
    partition = sr.partition
    _require_order(a, partition)
    _require_order(d, partition)
    n = partition.n_components
    p = partition.p
    rank_d = _svd_rank(d)
    rank_cpd = _svd_rank(sr.cp @ d)
    minimal = rank_d == n - p and rank_cpd == n - p

    ker_d = _null_space(d)
    kernel_unit = sr.kernel / np.sqrt(np.asarray(partition.sizes, dtype=float))[:, None]
    biorth = False
    if ker_d.shape[1] == p:
        pairing = ker_d.T @ kernel_unit.T
        biorth = _svd_rank(pairing) == p

    # Per-block scaling leaves the column span unchanged; it keeps the
    # singular-value threshold meaningful for large powers.
    a_scale = max(np.linalg.norm(a, 2), 1.0)
    d_scaled = d / max(np.linalg.norm(d, 2), 1.0)
    blocks = []
    block = d_scaled
    for _ in range(n):
        blocks.append(block)
        block = (a / a_scale) @ block
    kalman = _svd_rank(np.hstack(blocks))

    return RankReport(
        rank_d=rank_d,
        rank_cpd=rank_cpd,
        minimal_rank_ok=minimal,
        biorthogonal=biorth,
        kalman_rank=kalman,
        kernel_dim_d=ker_d.shape[1],
    )


def _require_order(m: np.ndarray, partition: GroupPartition) -> None:
    n = partition.n_components
    if m.shape != (n, n):
        raise MatrixDomainError(
            f"coupling matrix of order {m.shape[0]} does not match partition with {n} components"
        )
