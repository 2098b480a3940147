import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepfea.errors import ContractError, InvalidLoadError, InvalidTopologyError
from deepfea.meshes import (LoadSpec, build_input_tensor, element_dims,
                            grid_topology)


class TestGridTopology:
    def test_paper_2d_grid(self):
        topo = grid_topology((9, 9), 0.125)
        assert topo.n_nodes == 81
        assert topo.n_elements == 64

    def test_minimal_grid(self):
        topo = grid_topology((2, 2), 1.0)
        assert topo.n_nodes == 4
        assert topo.n_elements == 1

    def test_paper_3d_grid(self):
        topo = grid_topology((9, 9, 3), 0.125)
        assert topo.n_nodes == 243
        assert topo.n_elements == 128

    def test_rejects_small_dims(self):
        with pytest.raises(InvalidTopologyError):
            grid_topology((1, 9), 0.125)
        with pytest.raises(InvalidTopologyError):
            grid_topology((9, 9), 0.0)

    def test_regular_coordinates_and_bottom_constraint(self):
        topo = grid_topology((4, 3), 0.5)
        assert topo.rest_coordinates[0, 2, 1] == pytest.approx(0.5)   # x = j*s
        assert topo.rest_coordinates[1, 2, 1] == pytest.approx(1.0)   # y = i*s
        assert topo.constrained_mask[0].all()
        assert not topo.constrained_mask[1:].any()

    def test_row_major_node_ids(self):
        topo = grid_topology((4, 3), 0.5)
        assert topo.node_grid_index(1 * 3 + 2) == (1, 2)

    def test_boundary_detection(self):
        topo = grid_topology((4, 4), 1.0)
        interior = 1 * 4 + 1
        assert not topo.is_boundary(interior)
        assert len(topo.boundary_nodes()) == 12


class TestElementDims:
    def test_examples(self):
        assert element_dims((9, 9)) == (8, 8)
        assert element_dims((2, 2)) == (1, 1)
        assert element_dims((9, 9, 3)) == (8, 8, 2)

    @given(st.lists(st.integers(min_value=2, max_value=16), min_size=2, max_size=3))
    @settings(max_examples=60, deadline=None)
    def test_minus_one_per_axis(self, dims):
        dims = tuple(dims)
        topo = grid_topology(dims, 0.1)
        assert topo.element_dims == tuple(d - 1 for d in dims)
        assert topo.n_elements == int(np.prod([d - 1 for d in dims]))

    def test_rejects_degenerate(self):
        with pytest.raises(InvalidTopologyError):
            element_dims((1, 5))


class TestLoadSpec:
    def test_angle_whitelist(self):
        with pytest.raises(InvalidLoadError):
            LoadSpec(8, 30.0, 1.0)

    def test_validation_against_topology(self):
        topo = grid_topology((5, 5), 0.25)
        LoadSpec(24, 0.0, 1.0).validate(topo)
        with pytest.raises(InvalidLoadError):
            LoadSpec(2, 0.0, 1.0).validate(topo)      # bottom row: constrained
        with pytest.raises(InvalidLoadError):
            LoadSpec(12, 0.0, 1.0).validate(topo)     # interior node

    def test_ramp_reaches_full_load_on_last_frame(self):
        load = LoadSpec(24, 0.0, 2.0e6)
        assert load.magnitude_at(199, 200) == 2.0e6
        assert load.magnitude_at(0, 200) == pytest.approx(1.0e4)


class TestBuildInputTensor:
    def setup_method(self):
        self.topo = grid_topology((9, 9), 0.125)
        self.load = LoadSpec(80, 0.0, 1.0e6)

    def test_initial_condition_copies_rest_coordinates(self):
        x = build_input_tensor(self.topo.rest_coordinates, self.load,
                               self.topo, 0, 50)
        assert x.n_channels == 5
        np.testing.assert_array_equal(x.channels[:2], self.topo.rest_coordinates)

    def test_full_load_at_last_step(self):
        x = build_input_tensor(self.topo.rest_coordinates, self.load,
                               self.topo, 49, 50)
        idx = self.topo.node_grid_index(80)
        assert x.channels[2][idx] == pytest.approx(1.0e6)
        assert x.channels[3][idx] == 0.0

    def test_linear_ramp_ratio(self):
        t, big_t = 3, 50
        x1 = build_input_tensor(self.topo.rest_coordinates, self.load,
                                self.topo, t, big_t)
        x2 = build_input_tensor(self.topo.rest_coordinates, self.load,
                                self.topo, 2 * t, big_t)
        idx = self.topo.node_grid_index(80)
        ratio = x2.channels[2][idx] / x1.channels[2][idx]
        assert ratio == pytest.approx((2 * t + 1) / (t + 1), rel=1e-12)

    def test_force_channels_zero_off_load_node(self):
        x = build_input_tensor(self.topo.rest_coordinates, self.load,
                               self.topo, 10, 50)
        force = x.channels[2:4].copy()
        force[(slice(None), *self.topo.node_grid_index(80))] = 0.0
        assert not force.any()

    def test_only_force_channels_change_between_steps(self):
        a = build_input_tensor(self.topo.rest_coordinates, self.load,
                               self.topo, 3, 50)
        b = build_input_tensor(self.topo.rest_coordinates, self.load,
                               self.topo, 4, 50)
        np.testing.assert_array_equal(a.channels[:2], b.channels[:2])
        np.testing.assert_array_equal(a.channels[4], b.channels[4])
        assert np.abs(a.channels[2:4] - b.channels[2:4]).max() > 0

    def test_constraint_channel_is_binary_and_static(self):
        stacks = [build_input_tensor(self.topo.rest_coordinates, self.load,
                                     self.topo, t, 50).channels[4]
                  for t in (0, 20, 49)]
        for b in stacks:
            assert set(np.unique(b)) == {0.0, 1.0}
            np.testing.assert_array_equal(b, stacks[0])

    def test_rejects_constrained_load_node(self):
        with pytest.raises(InvalidLoadError):
            build_input_tensor(self.topo.rest_coordinates,
                               LoadSpec(0, 0.0, 1.0), self.topo, 0, 50)

    def test_rejects_bad_timestep(self):
        with pytest.raises(ContractError):
            build_input_tensor(self.topo.rest_coordinates, self.load,
                               self.topo, 50, 50)

    def test_3d_channel_count(self):
        topo = grid_topology((4, 4, 3), 0.25)
        free = topo.free_boundary_nodes()
        x = build_input_tensor(topo.rest_coordinates,
                               LoadSpec(free[-1], 90.0, 5.0), topo, 0, 10)
        assert x.n_channels == 7
