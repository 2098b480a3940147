"""Explicit-dynamics plane-stress FE solver for transient ground truth.

Bilinear quadrilateral elements with full 2x2 Gauss quadrature, St. Venant-
Kirchhoff material under total-Lagrangian kinematics (paper-range strains get
large enough that small-strain theory would be wrong), lumped mass,
mass-proportional damping, and central-difference time integration. A direct
linear static solver doubles as an independent verification oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (InvalidLoadError, ShapeError, SimulationFailureError,
                     SolveError)
from .meshes import LoadSpec, MeshTopology

DEFAULT_THICKNESS = 16.0  # m; sets the force->deformation scale of the 2D sheet
                          # (smallest round value that keeps every catalogued
                          # load case clear of element inversion)
DEFAULT_DAMPING = 5.0     # 1/s mass-proportional coefficient
DEFAULT_SAFETY = 0.9

# 2x2 Gauss points on [-1,1]^2, unit weights
_GP = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) / np.sqrt(3.0)
_CENTROID = np.zeros((1, 2))


@dataclass(frozen=True)
class MaterialLEM:
    """Linear-elastic material record (Pa, dimensionless, kg/m^3)."""

    young_modulus: float = 5.0e6
    poisson_ratio: float = 0.495
    density: float = 1200.0

    def __post_init__(self):
        if self.young_modulus <= 0:
            raise SolveError("Young's modulus must be positive")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise SolveError("Poisson ratio must lie in [0, 0.5)")
        if self.density <= 0:
            raise SolveError("density must be positive")

    def dilatational_wave_speed(self) -> float:
        e, nu, rho = self.young_modulus, self.poisson_ratio, self.density
        return np.sqrt(e * (1 - nu) / ((1 + nu) * (1 - 2 * nu) * rho))


@dataclass
class Frame:
    time: float
    coords: np.ndarray          # (ndim, *node_dims)
    displacements: np.ndarray   # (ndim, *node_dims)
    sigma_eff: np.ndarray       # (*element_dims)
    eps_eff: np.ndarray         # (*element_dims)


@dataclass
class SimulationRecord:
    topology: MeshTopology
    material: MaterialLEM
    load: LoadSpec
    record_dt: float
    frames: list[Frame] = field(default_factory=list)
    seed: int = 0

    @property
    def T(self) -> int:
        return len(self.frames)


@dataclass
class SolverState:
    coords: np.ndarray     # (N, 2) current positions
    vel_half: np.ndarray   # (N, 2) mid-step velocities
    accel: np.ndarray      # (N, 2) last accelerations
    time: float
    masses: np.ndarray     # (N,)
    started: bool = False  # half-step velocity bootstrap done


def effective_stress(sxx, syy, szz, sxy, syz, szx):
    """Scalar von Mises stress; accepts scalars or arrays."""
    return np.sqrt(((sxx - syy) ** 2 + (syy - szz) ** 2 + (szz - sxx) ** 2
                    + 6.0 * (sxy ** 2 + syz ** 2 + szx ** 2)) / 2.0)


def effective_strain(exx, eyy, ezz, exy, eyz, ezx):
    """Scalar von Mises strain (tensor shear components, not engineering)."""
    return (2.0 / 3.0) * np.sqrt(
        ((exx - eyy) ** 2 + (eyy - ezz) ** 2 + (ezz - exx) ** 2
         + 6.0 * (exy ** 2 + eyz ** 2 + ezx ** 2)) / 2.0)


def _shape_gradients(points: np.ndarray) -> np.ndarray:
    """dN/dxi for the bilinear quad at each (xi, eta) point: (P, 4, 2)."""
    xi, eta = points[:, 0], points[:, 1]
    out = np.empty((len(points), 4, 2))
    out[:, 0, 0] = -(1 - eta) / 4
    out[:, 0, 1] = -(1 - xi) / 4
    out[:, 1, 0] = (1 - eta) / 4
    out[:, 1, 1] = -(1 + xi) / 4
    out[:, 2, 0] = (1 + eta) / 4
    out[:, 2, 1] = (1 + xi) / 4
    out[:, 3, 0] = -(1 + eta) / 4
    out[:, 3, 1] = (1 - xi) / 4
    return out


def _connectivity(topology: MeshTopology) -> np.ndarray:
    """Element -> 4 flat node ids, counterclockwise in the x-y plane."""
    h, w = topology.node_dims
    i, j = np.meshgrid(np.arange(h - 1), np.arange(w - 1), indexing="ij")
    n0 = i * w + j
    return np.stack([n0, n0 + 1, n0 + w + 1, n0 + w], axis=-1).reshape(-1, 4)


def stable_dt(topology: MeshTopology, material: MaterialLEM,
              safety: float = DEFAULT_SAFETY) -> float:
    """CFL-style bound: safety * (shortest element edge) / dilatational speed."""
    if not 0 < safety <= 1:
        raise SolveError(f"safety factor must be in (0, 1], got {safety}")
    conn = _connectivity(topology)
    xc = topology.rest_coordinates.reshape(topology.ndim, -1).T[conn]  # (E,4,2)
    edges = xc - np.roll(xc, -1, axis=1)
    min_edge = np.sqrt((edges ** 2).sum(-1)).min()
    return safety * min_edge / material.dilatational_wave_speed()


class ExplicitSolver:
    """Owns the precomputed element data for one (topology, material) pair."""

    def __init__(self, topology: MeshTopology, material: MaterialLEM,
                 thickness: float = DEFAULT_THICKNESS,
                 damping: float = DEFAULT_DAMPING,
                 safety: float = DEFAULT_SAFETY):
        if topology.ndim != 2:
            raise ShapeError("explicit solver supports 2D grids only")
        self.topology = topology
        self.material = material
        self.thickness = float(thickness)
        self.damping = float(damping)
        self.rest = np.ascontiguousarray(
            topology.rest_coordinates.reshape(2, -1).T)  # (N, 2)
        self.conn = _connectivity(topology)
        self.free = ~topology.constrained_mask.reshape(-1)
        self.dt = stable_dt(topology, material, safety)

        e, nu = material.young_modulus, material.poisson_ratio
        c = e / (1 - nu * nu)
        self._d11, self._d12 = c, c * nu
        self._mu = e / (2 * (1 + nu))

        xc = self.rest[self.conn]                        # (E, 4, 2)
        dndxi = _shape_gradients(_GP)                    # (G, 4, 2)
        jac = np.einsum("eam,gan->egmn", xc, dndxi)      # (E, G, 2, 2)
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise ShapeError("element with non-positive rest Jacobian")
        inv = np.linalg.inv(jac)
        self.dndx = np.einsum("gan,egnm->egam", dndxi, inv)   # (E, G, 4, 2)
        self.wdetj = det * self.thickness                      # unit GP weights

        dndxi_c = _shape_gradients(_CENTROID)
        jac_c = np.einsum("eam,gan->egmn", xc, dndxi_c)
        self.dndx_c = np.einsum("gan,egnm->egam", dndxi_c, np.linalg.inv(jac_c))

        rho = material.density
        masses = np.zeros(len(self.rest))
        elem_mass = rho * self.wdetj.sum(axis=1) / 4.0   # thickness included
        np.add.at(masses, self.conn, elem_mass[:, None])
        self.masses = masses

    # -- kinematics ---------------------------------------------------------

    def _pk2(self, green):
        """Plane-stress St. Venant-Kirchhoff: 2nd Piola-Kirchhoff from Green
        strain, both (..., 2, 2)."""
        exx, eyy, exy = green[..., 0, 0], green[..., 1, 1], green[..., 0, 1]
        s = np.empty_like(green)
        s[..., 0, 0] = self._d11 * exx + self._d12 * eyy
        s[..., 1, 1] = self._d11 * eyy + self._d12 * exx
        s[..., 0, 1] = s[..., 1, 0] = 2.0 * self._mu * exy
        return s

    def _deformation(self, coords, dndx):
        xc = coords[self.conn]                                  # (E, 4, 2)
        f = np.einsum("eam,egan->egmn", xc, dndx)
        green = 0.5 * (np.einsum("egkm,egkn->egmn", f, f) - np.eye(2))
        return f, green

    def internal_forces(self, coords: np.ndarray) -> np.ndarray:
        """Total-Lagrangian internal nodal forces at current positions (N, 2)."""
        f, green = self._deformation(coords, self.dndx)
        if np.any(np.linalg.det(f) <= 0):
            raise SimulationFailureError("element inversion (det F <= 0)")
        piola = np.einsum("egmk,egkn->egmn", f, self._pk2(green))
        floc = np.einsum("eg,egmn,egan->eam", self.wdetj, piola, self.dndx)
        out = np.zeros_like(coords)
        np.add.at(out, self.conn, floc)
        return out

    def strain_energy(self, coords: np.ndarray) -> float:
        _, green = self._deformation(coords, self.dndx)
        s = self._pk2(green)
        dens = np.einsum("egmn,egmn->eg", s, green)
        return 0.5 * float((self.wdetj * dens).sum())

    def centroid_fields(self, coords: np.ndarray):
        """Element-centroid effective Cauchy stress and Green strain."""
        f, green = self._deformation(coords, self.dndx_c)
        s = self._pk2(green)
        detf = np.linalg.det(f)
        cauchy = np.einsum("egmk,egkl,egnl->egmn", f, s, f) / detf[..., None, None]
        g, c = green[:, 0], cauchy[:, 0]
        sig = effective_stress(c[:, 0, 0], c[:, 1, 1], 0.0, c[:, 0, 1], 0.0, 0.0)
        eps = effective_strain(g[:, 0, 0], g[:, 1, 1], 0.0, g[:, 0, 1], 0.0, 0.0)
        return sig, eps

    # -- time integration ---------------------------------------------------

    def initial_state(self) -> SolverState:
        n = len(self.rest)
        return SolverState(self.rest.copy(), np.zeros((n, 2)), np.zeros((n, 2)),
                           0.0, self.masses.copy())

    def step(self, state: SolverState, f_ext: np.ndarray, dt: float) -> SolverState:
        """One central-difference step under the given external nodal loads."""
        if dt > self.dt * (1 + 1e-12):
            raise SolveError(f"dt {dt} exceeds stable bound {self.dt}")
        a = (f_ext - self.internal_forces(state.coords)) / state.masses[:, None]
        a -= self.damping * state.vel_half
        a[~self.free] = 0.0
        if not state.started:
            # bootstrap: v at +dt/2 from v(0)=0 and a(0)
            state.vel_half = 0.5 * dt * a
            state.started = True
        else:
            state.vel_half = state.vel_half + dt * a
        state.vel_half[~self.free] = 0.0
        state.accel = a
        state.coords = state.coords + dt * state.vel_half
        state.time += dt
        return state

    def integrate(self, state: SolverState, force_fn, duration: float,
                  n_steps: int) -> SolverState:
        dt = duration / n_steps
        for _ in range(n_steps):
            self.step(state, force_fn(state.time), dt)
        return state


def explicit_step(solver: ExplicitSolver, state: SolverState,
                  f_ext: np.ndarray, dt: float) -> SolverState:
    return solver.step(state, f_ext, dt)


def _point_load_fn(solver: ExplicitSolver, load: LoadSpec, duration: float,
                   record_dt: float):
    node = load.node_index
    direction = load.direction(2)
    mmax = load.max_magnitude

    def force(t: float) -> np.ndarray:
        f = np.zeros_like(solver.rest)
        if load.ramp:
            mag = mmax * min((t + record_dt) / duration, 1.0)
        else:
            mag = mmax
        f[node] = mag * direction
        return f

    return force


def run_simulation(topology: MeshTopology, material: MaterialLEM, load: LoadSpec,
                   duration: float = 1.0, record_dt: float = 0.005,
                   thickness: float = DEFAULT_THICKNESS,
                   damping: float = DEFAULT_DAMPING,
                   safety: float = DEFAULT_SAFETY,
                   seed: int = 0) -> SimulationRecord:
    """Ramped point-load transient: T = duration/record_dt frames, frame 0
    being the rest state; the force attached to frame t is max*(t+1)/T."""
    load.validate(topology)
    solver = ExplicitSolver(topology, material, thickness, damping, safety)
    t_frames = int(round(duration / record_dt))
    if t_frames < 2:
        raise SolveError("need at least two recorded frames")
    n_sub = max(1, int(np.ceil(record_dt / solver.dt)))
    force_fn = _point_load_fn(solver, load, duration, record_dt)

    record = SimulationRecord(topology, material, load, record_dt, seed=seed)
    state = solver.initial_state()
    rest2d = topology.rest_coordinates

    def snapshot(time):
        coords = np.ascontiguousarray(
            state.coords.T.reshape(2, *topology.node_dims))
        if not np.all(np.isfinite(coords)):
            raise SimulationFailureError(f"non-finite state at t={time:.4f}s")
        sig, eps = solver.centroid_fields(state.coords)
        record.frames.append(Frame(
            time, coords, coords - rest2d,
            sig.reshape(topology.element_dims), eps.reshape(topology.element_dims)))

    snapshot(0.0)
    for frame in range(1, t_frames):
        solver.integrate(state, force_fn, record_dt, n_sub)
        snapshot(frame * record_dt)
    return record


# ---------------------------------------------------------------------------
# linear static verification oracle
# ---------------------------------------------------------------------------

def _linear_stiffness(solver: ExplicitSolver) -> np.ndarray:
    """Dense small-strain plane-stress stiffness (2N x 2N)."""
    n = len(solver.rest)
    k = np.zeros((2 * n, 2 * n))
    d = np.array([[solver._d11, solver._d12, 0.0],
                  [solver._d12, solver._d11, 0.0],
                  [0.0, 0.0, solver._mu]])
    for e, nodes in enumerate(solver.conn):
        ke = np.zeros((8, 8))
        for g in range(4):
            dn = solver.dndx[e, g]          # (4, 2)
            b = np.zeros((3, 8))
            b[0, 0::2] = dn[:, 0]
            b[1, 1::2] = dn[:, 1]
            b[2, 0::2] = dn[:, 1]
            b[2, 1::2] = dn[:, 0]
            ke += solver.wdetj[e, g] * (b.T @ d @ b)
        dof = np.repeat(nodes * 2, 2) + np.tile([0, 1], 4)
        k[np.ix_(dof, dof)] += ke
    return k


def static_displacements(topology: MeshTopology, material: MaterialLEM,
                         f_ext: np.ndarray, fixed_dofs: np.ndarray | None = None,
                         thickness: float = DEFAULT_THICKNESS) -> np.ndarray:
    """Direct solve K u = f with Dirichlet rows eliminated; f_ext is (N, 2).
    fixed_dofs defaults to both components of every constrained node."""
    solver = ExplicitSolver(topology, material, thickness, damping=0.0)
    k = _linear_stiffness(solver)
    f = np.asarray(f_ext, dtype=np.float64).reshape(-1).copy()
    if fixed_dofs is None:
        fixed = np.repeat(topology.constrained_mask.reshape(-1), 2)
    else:
        fixed = np.zeros(k.shape[0], dtype=bool)
        fixed[np.asarray(fixed_dofs)] = True
    k = k.copy()
    k[fixed, :] = 0.0
    k[:, fixed] = 0.0
    k[fixed, fixed] = 1.0
    f[fixed] = 0.0
    try:
        u = np.linalg.solve(k, f)
    except np.linalg.LinAlgError as exc:
        raise SolveError(f"static system singular: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise SolveError("static solve produced non-finite displacements")
    residual = np.abs(k @ u - f).max()
    scale = max(np.abs(f).max(), 1e-30)
    if residual > 1e-6 * scale:
        raise SolveError("static system ill-conditioned (under-constrained?)")
    return u.reshape(-1, 2)


def static_solve(topology: MeshTopology, material: MaterialLEM, load: LoadSpec,
                 thickness: float = DEFAULT_THICKNESS) -> np.ndarray:
    """Small-strain displacement field for the full (end-of-ramp) point load,
    shaped (ndim, *node_dims)."""
    load.validate(topology)
    f = np.zeros((topology.n_nodes, 2))
    f[load.node_index] = load.max_magnitude * load.direction(2)
    u = static_displacements(topology, material, f, thickness=thickness)
    return np.ascontiguousarray(u.T.reshape(2, *topology.node_dims))
