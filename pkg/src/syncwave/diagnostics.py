"""Observables for the coupled runs: group-agreement errors, extracted
limit fields, energies, decay-rate fits and generator spectra.

All functions are pure over immutable trajectories and systems.  The
group-agreement error uses the orthonormal-row normalizer, so it equals
the energy norm of the deviation from the synchronized state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .algebra import GroupPartition, SyncReduction, build_sync_matrix
from .integrator import Trajectory
from .models import CoupledSystem, DiscreteModel

NEAR_IMAG_TOL = 1e-8
FIT_FLOOR_RATIO = 1e-13
SPECTRUM_CAP = 2000


class InsufficientDataError(ValueError):
    """Too few usable samples for a decay fit."""


class SizeCapError(ValueError):
    """System too large for a dense spectrum computation."""


@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit of an exponentially decaying series."""

    omega: float          # decay rate per unit time
    m_const: float        # prefactor normalized by the initial value
    r_squared: float
    window: tuple[float, float]
    samples: int


@dataclass(frozen=True)
class EnergyReport:
    """Energy series along a trajectory."""

    times: np.ndarray
    full_energy: np.ndarray
    limit_energy: np.ndarray
    sync_energy: np.ndarray


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of the first-order generator of the coupled system."""

    eigenvalues: np.ndarray
    abscissa: float
    near_imaginary_count: int


def _structure(partition) -> SyncReduction:
    if isinstance(partition, SyncReduction):
        return partition
    return build_sync_matrix(partition)


def _per_node(u: np.ndarray, n: int) -> np.ndarray:
    if u.shape[0] % n:
        raise ValueError(f"state length {u.shape[0]} is not a multiple of {n} components")
    return u.reshape(-1, n)


def sync_error(
    u: np.ndarray,
    v: np.ndarray,
    partition,
    model: DiscreteModel,
) -> tuple[float, np.ndarray]:
    """Energy-norm distance from groupwise agreement.

    Applies the normalized difference map per mesh DOF to displacement and
    velocity and measures the result in the stiffness / mass energy norm.
    Returns the total and the per-group contributions.
    """
    sr = _structure(partition)
    part = sr.partition
    n = part.n_components
    w = _per_node(u, n) @ sr.normalizer.T       # (dof, N-p)
    wdot = _per_node(v, n) @ sr.normalizer.T
    if w.shape[0] != model.dof:
        raise ValueError(f"state has {w.shape[0]} mesh DOFs, model has {model.dof}")
    kw = model.stiffness @ w
    mwdot = model.mass @ wdot
    per_group = np.empty(part.p)
    offset = 0
    for r, size in enumerate(part.sizes):
        cols = slice(offset, offset + size - 1)
        per_group[r] = np.sqrt(
            np.sum(w[:, cols] * kw[:, cols]) + np.sum(wdot[:, cols] * mwdot[:, cols])
        )
        offset += size - 1
    total = float(np.sqrt(np.sum(w * kw) + np.sum(wdot * mwdot)))
    return total, per_group


def synchronized_state(u: np.ndarray, partition) -> tuple[np.ndarray, np.ndarray]:
    """Group-averaged scalar fields and their lift back to N components.

    Returns ``fields`` of shape (dof, p), the normalized projection of each
    mesh DOF onto the group indicators, and the assembled synchronized
    state of shape (dof * N,).  The deviation ``u - assembled`` lies in the
    row space of the sync matrix exactly.
    """
    sr = _structure(partition)
    part = sr.partition
    n = part.n_components
    u2 = _per_node(u, n)
    norms = np.sqrt(np.asarray(part.sizes, dtype=float))
    unit_kernel = sr.kernel / norms[:, None]    # rows e_r / |e_r|
    fields = u2 @ unit_kernel.T                 # (dof, p)
    assembled = fields @ unit_kernel
    return fields, assembled.reshape(-1)


def pinning_residual(u: np.ndarray, partition) -> float:
    """Residual of the exact splitting into synchronized and difference parts."""
    sr = _structure(partition)
    n = sr.partition.n_components
    u2 = _per_node(u, n)
    _, assembled = synchronized_state(u, sr)
    proj = sr.cp.T @ np.linalg.inv(sr.cp @ sr.cp.T) @ sr.cp
    return float(np.linalg.norm(u2 - assembled.reshape(-1, n) - u2 @ proj.T))


def limit_energy(
    fields: np.ndarray,
    fields_dot: np.ndarray,
    beta: np.ndarray,
    model: DiscreteModel,
) -> float:
    """Conserved energy of the limit fields: stiffness + coupling + kinetic."""
    beta = np.asarray(beta, dtype=float)
    if np.abs(beta - beta.T).max() > 1e-12 * max(1.0, np.abs(beta).max()):
        raise ValueError("limit coupling matrix must be symmetric")
    stiff = float(np.sum(fields * (model.stiffness @ fields)))
    kin = float(np.sum(fields_dot * (model.mass @ fields_dot)))
    cross = float(np.sum((model.mass @ fields) * (fields @ beta.T)))
    return stiff + cross + kin


def limit_residual(
    u: np.ndarray,
    v: np.ndarray,
    partition,
    system: CoupledSystem,
    beta: np.ndarray,
) -> float:
    """Residual of the limit dynamics evaluated on the extracted fields.

    The acceleration is eliminated with the full governing equation, which
    leaves only the coupling applied to the deviation from the
    synchronized state; the residual therefore decays with the agreement
    error.
    """
    sr = _structure(partition)
    n = sr.partition.n_components
    model = system.model
    _, u_sync = synchronized_state(u, sr)
    _, v_sync = synchronized_state(v, sr)
    du = _per_node(u - u_sync, n)
    dv = _per_node(v - v_sync, n)
    res = model.mass @ (du @ system.a_coupling.T) + model.damping_form @ (
        dv @ system.d_coupling.T
    )
    return float(np.linalg.norm(res))


def fit_decay(
    times: np.ndarray,
    values: np.ndarray,
    window: tuple[float, float] | None = None,
    floor_ratio: float = FIT_FLOOR_RATIO,
) -> DecayFit:
    """Least-squares exponential rate of a positive decaying series.

    Fits a line to (t, log value) on the window, excluding samples that
    have fallen to the round-off floor relative to the initial value.
    Raises :class:`InsufficientDataError` with fewer than 10 usable
    samples.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("times and values must be 1-D arrays of equal length")
    if times.size == 0:
        raise InsufficientDataError("empty series")
    if window is None:
        window = (times[-1] / 4.0, times[-1])
    t0, t1 = window
    initial = values[0]
    floor = floor_ratio * abs(initial)
    mask = (times >= t0) & (times <= t1) & (values > floor)
    if int(mask.sum()) < 10:
        raise InsufficientDataError(
            f"only {int(mask.sum())} usable samples in window ({t0:g}, {t1:g}); need 10"
        )
    t = times[mask]
    y = np.log(values[mask])
    slope, intercept = np.polyfit(t, y, 1)
    fit = slope * t + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else max(0.0, 1.0 - ss_res / ss_tot)
    m_const = float(np.exp(intercept) / initial) if initial != 0.0 else float("inf")
    return DecayFit(
        omega=float(-slope),
        m_const=m_const,
        r_squared=float(min(r2, 1.0)),
        window=(float(t0), float(t1)),
        samples=int(mask.sum()),
    )


def spectrum(system: CoupledSystem, cap: int = SPECTRUM_CAP) -> SpectrumReport:
    """Eigenvalues of the first-order generator of the coupled system.

    Assembles [[0, I], [-M^{-1} K_eff, -M^{-1} G]] densely; refuses when
    the second-order unknown count exceeds the cap.
    """
    n = system.size
    if n > cap:
        raise SizeCapError(
            f"system has {n} unknowns, cap is {cap}; reduce the mesh or raise the cap"
        )
    minv_k = np.linalg.solve(system.mass_block, system.energy_matrix)
    minv_g = np.linalg.solve(system.mass_block, system.damping_block)
    gen = np.block([
        [np.zeros((n, n)), np.eye(n)],
        [-minv_k, -minv_g],
    ])
    eig = scipy.linalg.eigvals(gen)
    eig = np.sort_complex(eig)
    return SpectrumReport(
        eigenvalues=eig,
        abscissa=float(np.max(eig.real)),
        near_imaginary_count=int(np.count_nonzero(np.abs(eig.real) <= NEAR_IMAG_TOL)),
    )


def energy_report(
    trajectory: Trajectory,
    system: CoupledSystem,
    partition,
    beta: np.ndarray,
) -> EnergyReport:
    """Full, limit and agreement energies along a recorded trajectory."""
    sr = _structure(partition)
    model = system.model
    n_rec = trajectory.times.size
    limit = np.empty(n_rec)
    sync = np.empty(n_rec)
    for i in range(n_rec):
        fields, _ = synchronized_state(trajectory.u[i], sr)
        fields_dot, _ = synchronized_state(trajectory.v[i], sr)
        limit[i] = limit_energy(fields, fields_dot, beta, model)
        err, _ = sync_error(trajectory.u[i], trajectory.v[i], sr, model)
        sync[i] = 0.5 * err**2
    return EnergyReport(
        times=trajectory.times,
        full_energy=trajectory.full_energy,
        limit_energy=limit,
        sync_energy=sync,
    )
