"""Semi-discrete realizations of the scalar model problems on (0, 1).

Three desk-scale models are assembled: a wave equation with boundary
velocity feedback at x = 1, a wave equation with locally distributed
damping, and a clamped fourth-order beam (the 1-D analog of a thin plate)
with distributed damping.  Each assembly produces the mass, stiffness and
damping-form matrices of the scalar problem; :func:`couple` lifts a scalar
model to an N-component system with constant coupling matrices.

DOF ordering of coupled systems is node-major, component-minor: the flat
index of component k at mesh DOF i is ``i * N + k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import as_coupling

MODEL_KINDS = ("wave_boundary", "wave_distributed", "beam_distributed", "oscillator")

# 4-point Gauss-Legendre on [0, 1]: exact through degree 7, enough for a
# mesh-linear weight against cubic Hermite basis products.
_GAUSS4_X = 0.5 + 0.5 * np.array([
    -0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526,
])
_GAUSS4_W = 0.5 * np.array([
    0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538,
])


class AssemblyError(ValueError):
    """Model specification invalid or assembly produced a singular system."""


@dataclass(frozen=True)
class ModelSpec:
    """Scalar model selection and mesh/damping parameters.

    ``damping_region`` gives the widths of the damped neighbourhoods of the
    left and right boundary (distributed kinds only); ``damping_floor`` is
    the plateau value of the damping coefficient there.  The ``oscillator``
    kind is a single-DOF desk check with unit mass, stiffness and damping
    form.
    """

    kind: str
    elements: int = 2
    damping_region: tuple[float, float] = (0.25, 0.25)
    damping_floor: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise AssemblyError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.kind == "oscillator":
            return
        if self.elements < 2:
            raise AssemblyError("mesh needs at least 2 elements")
        if self.kind in ("wave_distributed", "beam_distributed"):
            dl, dr = self.damping_region
            if not (0.0 <= dl <= 0.5 and 0.0 <= dr <= 0.5):
                raise AssemblyError("damping region widths must lie in [0, 1/2]")
            if dl + dr >= 1.0:
                raise AssemblyError("damping regions may not cover the whole interval")
            if self.damping_floor <= 0.0:
                raise AssemblyError("damping floor must be positive")


@dataclass(frozen=True)
class DiscreteModel:
    """Mass, stiffness and damping-form matrices of one scalar model."""

    spec: ModelSpec
    mass: np.ndarray
    stiffness: np.ndarray
    damping_form: np.ndarray
    coords: np.ndarray            # mesh coordinate of each retained DOF
    labels: tuple[str, ...]       # "u@x" or, for the beam, "ux@x"

    @property
    def dof(self) -> int:
        return self.mass.shape[0]


@dataclass(frozen=True)
class CoupledSystem:
    """N-component second-order system assembled from a scalar model.

    The governing blocks are ``mass_block u'' + (stiffness_block +
    coupling_block) u + damping_block u' = 0`` in node-major ordering.
    """

    model: DiscreteModel
    a_coupling: np.ndarray
    d_coupling: np.ndarray
    mass_block: np.ndarray       # M_h (x) I_N
    stiffness_block: np.ndarray  # K_h (x) I_N
    coupling_block: np.ndarray   # M_h (x) A
    damping_block: np.ndarray    # G_h (x) D

    @property
    def n_components(self) -> int:
        return self.a_coupling.shape[0]

    @property
    def size(self) -> int:
        return self.mass_block.shape[0]

    @property
    def energy_matrix(self) -> np.ndarray:
        """Displacement part of the energy form, K_h (x) I + M_h (x) A."""
        return self.stiffness_block + self.coupling_block


def damping_profile(spec: ModelSpec) -> np.ndarray:
    """Nodal values of the damping coefficient on the full mesh.

    The profile equals the floor value on a neighbourhood of each boundary
    and ramps linearly to zero over one element toward the interior, so it
    is linear within every element and exactly integrable.
    """
    n_e = spec.elements
    h = 1.0 / n_e
    dl, dr = spec.damping_region
    m_left = int(round(dl / h))
    m_right = int(round(dr / h))
    a = np.zeros(n_e + 1)
    if m_left > 0:
        a[: m_left] = 1.0          # plateau up to node m_left - 1, ramp hits 0 at node m_left
    if m_right > 0:
        a[n_e - m_right + 1:] = 1.0
    return spec.damping_floor * a


def _p1_matrices(n_e: int) -> tuple[np.ndarray, np.ndarray]:
    """Full P1 mass and stiffness matrices on the uniform mesh, no BCs."""
    h = 1.0 / n_e
    n = n_e + 1
    mass = np.zeros((n, n))
    stiff = np.zeros((n, n))
    m_e = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
    k_e = (1.0 / h) * np.array([[1.0, -1.0], [-1.0, 1.0]])
    for e in range(n_e):
        idx = (e, e + 1)
        mass[np.ix_(idx, idx)] += m_e
        stiff[np.ix_(idx, idx)] += k_e
    return mass, stiff


def _p1_weighted_mass(n_e: int, nodal_weight: np.ndarray) -> np.ndarray:
    """P1 mass matrix weighted by a mesh-linear coefficient (exact)."""
    h = 1.0 / n_e
    n = n_e + 1
    out = np.zeros((n, n))
    # 2-point Gauss is exact for the cubic integrand a * phi_i * phi_j.
    gx = 0.5 + 0.5 * np.array([-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)])
    gw = np.array([0.5, 0.5])
    shapes = np.stack([1.0 - gx, gx])          # (2 basis, 2 points)
    for e in range(n_e):
        a_q = nodal_weight[e] * (1.0 - gx) + nodal_weight[e + 1] * gx
        el = h * np.einsum("q,iq,jq,q->ij", gw, shapes, shapes, a_q)
        idx = (e, e + 1)
        out[np.ix_(idx, idx)] += el
    return out


def _hermite_shapes(x: np.ndarray, h: float) -> np.ndarray:
    """Cubic Hermite basis on [0, 1] reference coordinate, scaled for h."""
    return np.stack([
        1.0 - 3.0 * x**2 + 2.0 * x**3,
        h * (x - 2.0 * x**2 + x**3),
        3.0 * x**2 - 2.0 * x**3,
        h * (-(x**2) + x**3),
    ])


def _beam_matrices(n_e: int) -> tuple[np.ndarray, np.ndarray]:
    """Full Hermite mass and bending stiffness matrices, no BCs."""
    h = 1.0 / n_e
    n = 2 * (n_e + 1)
    mass = np.zeros((n, n))
    stiff = np.zeros((n, n))
    m_e = (h / 420.0) * np.array([
        [156.0, 22.0 * h, 54.0, -13.0 * h],
        [22.0 * h, 4.0 * h**2, 13.0 * h, -3.0 * h**2],
        [54.0, 13.0 * h, 156.0, -22.0 * h],
        [-13.0 * h, -3.0 * h**2, -22.0 * h, 4.0 * h**2],
    ])
    k_e = (1.0 / h**3) * np.array([
        [12.0, 6.0 * h, -12.0, 6.0 * h],
        [6.0 * h, 4.0 * h**2, -6.0 * h, 2.0 * h**2],
        [-12.0, -6.0 * h, 12.0, -6.0 * h],
        [6.0 * h, 2.0 * h**2, -6.0 * h, 4.0 * h**2],
    ])
    for e in range(n_e):
        idx = (2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3)
        mass[np.ix_(idx, idx)] += m_e
        stiff[np.ix_(idx, idx)] += k_e
    return mass, stiff


def _beam_weighted_mass(n_e: int, nodal_weight: np.ndarray) -> np.ndarray:
    """Hermite mass matrix weighted by a mesh-linear coefficient (exact)."""
    h = 1.0 / n_e
    n = 2 * (n_e + 1)
    out = np.zeros((n, n))
    shapes = _hermite_shapes(_GAUSS4_X, h)     # (4 basis, 4 points)
    for e in range(n_e):
        a_q = nodal_weight[e] * (1.0 - _GAUSS4_X) + nodal_weight[e + 1] * _GAUSS4_X
        el = h * np.einsum("q,iq,jq,q->ij", _GAUSS4_W, shapes, shapes, a_q)
        idx = (2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3)
        out[np.ix_(idx, idx)] += el
    return out


def assemble(spec: ModelSpec) -> DiscreteModel:
    """Assemble the scalar model matrices with boundary conditions applied."""
    if not isinstance(spec, ModelSpec):
        raise AssemblyError(f"expected a ModelSpec, got {type(spec).__name__}")
    if spec.kind == "oscillator":
        one = np.array([[1.0]])
        return DiscreteModel(
            spec=spec, mass=one.copy(), stiffness=one.copy(), damping_form=one.copy(),
            coords=np.array([1.0]), labels=("u@1",),
        )

    n_e = spec.elements
    nodes = np.linspace(0.0, 1.0, n_e + 1)
    if spec.kind == "wave_boundary":
        mass, stiff = _p1_matrices(n_e)
        damp = np.zeros_like(mass)
        damp[n_e, n_e] = 1.0                   # boundary trace at x = 1
        keep = np.arange(1, n_e + 1)
        labels = tuple(f"u@{nodes[i]:.8g}" for i in keep)
        coords = nodes[keep]
    elif spec.kind == "wave_distributed":
        mass, stiff = _p1_matrices(n_e)
        damp = _p1_weighted_mass(n_e, damping_profile(spec))
        keep = np.arange(1, n_e)
        labels = tuple(f"u@{nodes[i]:.8g}" for i in keep)
        coords = nodes[keep]
    elif spec.kind == "beam_distributed":
        mass, stiff = _beam_matrices(n_e)
        damp = _beam_weighted_mass(n_e, damping_profile(spec))
        keep = np.arange(2, 2 * n_e)           # clamp u and u_x at both ends
        labels = tuple(
            f"{'u' if j % 2 == 0 else 'ux'}@{nodes[j // 2]:.8g}" for j in keep
        )
        coords = nodes[keep // 2]
    else:  # pragma: no cover - guarded by ModelSpec validation
        raise AssemblyError(f"unknown model kind {spec.kind!r}")

    sub = np.ix_(keep, keep)
    mass, stiff, damp = mass[sub], stiff[sub], damp[sub]
    for name, m in (("mass", mass), ("stiffness", stiff)):
        w = np.linalg.eigvalsh(0.5 * (m + m.T))
        if w[0] <= 0.0:
            raise AssemblyError(f"{name} matrix singular after boundary elimination")
    return DiscreteModel(
        spec=spec, mass=mass, stiffness=stiff, damping_form=damp,
        coords=coords, labels=labels,
    )


def couple(model: DiscreteModel, a, d) -> CoupledSystem:
    """Lift a scalar model to the N-component system with couplings (A, D)."""
    a = as_coupling(a, "A")
    d = as_coupling(d, "D")
    if a.shape != d.shape:
        raise AssemblyError(
            f"coupling matrices must share one order, got {a.shape[0]} and {d.shape[0]}"
        )
    n = a.shape[0]
    eye = np.eye(n)
    return CoupledSystem(
        model=model,
        a_coupling=a,
        d_coupling=d,
        mass_block=np.kron(model.mass, eye),
        stiffness_block=np.kron(model.stiffness, eye),
        coupling_block=np.kron(model.mass, a),
        damping_block=np.kron(model.damping_form, d),
    )
