import numpy as np
import pytest

from deepfea import fem
from deepfea.meshes import LoadSpec, grid_topology


@pytest.fixture(scope="session")
def small_topology():
    return grid_topology((5, 5), 0.25)


@pytest.fixture(scope="session")
def material():
    return fem.MaterialLEM()


@pytest.fixture(scope="session")
def tiny_records(small_topology, material):
    """Six real solver runs on a 5x5 mesh, T = 8 frames."""
    free = small_topology.free_boundary_nodes()
    nodes = (free[0], free[len(free) // 2], free[-1])
    records = []
    for node in nodes:
        for angle in (45.0, 90.0):
            records.append(fem.run_simulation(
                small_topology, material, LoadSpec(node, angle, 1.0e6),
                duration=1.0, record_dt=0.125))
    return records


def synthetic_record(topology, load, t_frames, rng, record_dt=0.02):
    """Hand-built record with smooth random fields (no solver run)."""
    rest = topology.rest_coordinates
    rec = fem.SimulationRecord(topology, fem.MaterialLEM(), load, record_dt)
    for t in range(t_frames):
        amp = t / max(t_frames - 1, 1)
        disp = amp * 0.05 * rng.standard_normal(rest.shape)
        disp[:, topology.constrained_mask] = 0.0
        sig = amp * np.abs(rng.standard_normal(topology.element_dims)) * 1e6
        eps = amp * np.abs(rng.standard_normal(topology.element_dims)) * 0.1
        rec.frames.append(fem.Frame(t * record_dt, rest + disp, disp, sig, eps))
    return rec
