import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrisk.grid import (
    GridParseError,
    GridValidationError,
    build_dc_matrices,
    grid_from_dict,
    grid_to_dict,
    load_grid,
    save_grid,
    zone_membership_matrix,
)

from conftest import make_grid


def test_bundled_fixture_shape(case118):
    assert case118.n_buses == 118
    assert len({g.bus_id for g in case118.generators}) == 54
    assert len(case118.wind) == 16
    assert case118.n_zones == 3


def test_minimal_two_bus_file(tmp_path):
    doc = {
        "buses": [{"id": 0, "zone": 0, "base_load": 0.0}, {"id": 1, "zone": 0, "base_load": 5.0}],
        "branches": [{"from": 0, "to": 1, "susceptance": 2.0, "flow_limit": 10.0}],
        "generators": [
            {"id": 0, "bus": 0, "kind": "thermal", "p_min": 0, "p_max": 10, "cost": 5,
             "ramp": 10, "min_up": 1, "min_down": 1}
        ],
        "zones": [0],
        "reference_bus": 0,
    }
    path = tmp_path / "g.json"
    path.write_text(json.dumps(doc))
    assert load_grid(path).n_buses == 2


def test_self_loop_rejected():
    with pytest.raises(GridValidationError, match="self-loop"):
        make_grid(2, edges=[(0, 1), (1, 1)])


@pytest.mark.parametrize(
    "kwargs, message",
    [
        (dict(loads=[-1.0, 1.0, 1.0]), "base_load"),
        (dict(edges=[(0, 1)]), "not connected"),
        (dict(zones=[0, 0, 1]), "no thermal"),
        (dict(gens=[(0, "thermal", 5.0, 1.0, 1.0)]), "p_min"),
        (dict(susceptance=0.0), "susceptance"),
        (dict(limit=-1.0), "flow_limit"),
    ],
)
def test_validation_names_the_invariant(kwargs, message):
    with pytest.raises(GridValidationError, match=message):
        make_grid(3, **kwargs)


def test_parse_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(GridParseError):
        load_grid(path)
    doc = grid_to_dict(make_grid(2))
    doc["buses"][0]["colour"] = "red"
    with pytest.raises(GridParseError, match="unknown keys"):
        grid_from_dict(doc)
    doc = grid_to_dict(make_grid(2))
    del doc["branches"][0]["flow_limit"]
    with pytest.raises(GridParseError, match="missing keys"):
        grid_from_dict(doc)


def test_two_bus_matrices():
    g = make_grid(2, susceptance=3.0)
    b_red, f = build_dc_matrices(g)
    np.testing.assert_array_equal(b_red, [[3.0]])
    theta = np.array([0.0, -0.2])
    assert f @ theta == pytest.approx([3.0 * (0.0 - -0.2)])


def test_triangle_reduced_b():
    g = make_grid(3, edges=[(0, 1), (1, 2), (0, 2)])
    b_red, _ = build_dc_matrices(g)
    np.testing.assert_array_equal(b_red, [[2.0, -1.0], [-1.0, 2.0]])


def test_case118_b_invertible(case118):
    b_red, f = build_dc_matrices(case118)
    assert b_red.shape == (117, 117)
    np.linalg.cholesky(b_red)  # positive definite
    assert np.linalg.matrix_rank(b_red) == 117


def test_b_is_reduced_weighted_laplacian(case118):
    b_red, _ = build_dc_matrices(case118)
    lap = np.zeros((118, 118))
    for br in case118.branches:
        i, j, b = br.from_bus, br.to_bus, br.susceptance
        lap[i, i] += b
        lap[j, j] += b
        lap[i, j] -= b
        lap[j, i] -= b
    np.testing.assert_allclose(b_red, lap[1:, 1:], rtol=0, atol=1e-9)
    np.testing.assert_array_equal(b_red, b_red.T)


def test_zone_membership_examples(case118):
    g = make_grid(3, zones=[0, 0, 1], gens=[(0, "thermal", 0, 10, 1), (2, "thermal", 0, 10, 1)])
    np.testing.assert_array_equal(zone_membership_matrix(g), [[1, 1, 0], [0, 0, 1]])
    z = zone_membership_matrix(case118)
    assert z.sum() == 118
    assert np.all(z.sum(axis=0) == 1)
    np.testing.assert_array_equal(zone_membership_matrix(make_grid(4)), np.ones((1, 4)))


def test_ptdf_reproduces_dc_flows(case118, rng):
    inj = rng.normal(size=118)
    inj -= inj.mean()
    b_red, f = build_dc_matrices(case118)
    theta = np.zeros(118)
    theta[1:] = np.linalg.solve(b_red, inj[1:])
    np.testing.assert_allclose(case118.ptdf @ inj, f @ theta, atol=1e-8)


def test_round_trip_bundled(case118, tmp_path):
    path = tmp_path / "c.json"
    save_grid(case118, path)
    again = load_grid(path)
    assert again == case118
    assert again.content_hash == case118.content_hash


@st.composite
def random_grids(draw):
    n = draw(st.integers(1, 7))
    # random spanning tree plus a few chords keeps the graph connected
    edges = [(draw(st.integers(0, i - 1)), i) for i in range(1, n)]
    for _ in range(draw(st.integers(0, 3))):
        a, b = draw(st.integers(0, n - 1)), draw(st.integers(0, n - 1))
        if a != b:
            edges.append((a, b))
    loads = draw(st.lists(st.floats(0, 200, allow_nan=False), min_size=n, max_size=n))
    sus = [draw(st.floats(0.1, 50)) for _ in edges]
    lim = [draw(st.floats(1, 500)) for _ in edges]
    gens = [(draw(st.integers(0, n - 1)), "thermal", 0.0, draw(st.floats(1, 300)), draw(st.floats(0, 100)))
            for _ in range(draw(st.integers(1, 4)))]
    gens.append((draw(st.integers(0, n - 1)), "wind", 0.0, 5.0, 0.0))
    return make_grid(n, edges=edges, loads=loads, gens=gens, limit=lim, susceptance=sus)


@settings(max_examples=60, deadline=None)
@given(random_grids())
def test_save_load_is_identity(tmp_path_factory, grid):
    path = tmp_path_factory.mktemp("g") / "grid.json"
    save_grid(grid, path)
    assert load_grid(path) == grid


def test_permuted_file_is_isomorphic(case118, rng):
    doc = grid_to_dict(case118)
    perm = rng.permutation(118)  # new id of old bus k is perm[k]
    for b in doc["buses"]:
        b["id"] = int(perm[b["id"]])
    for br in doc["branches"]:
        br["from"], br["to"] = int(perm[br["from"]]), int(perm[br["to"]])
    for g in doc["generators"]:
        g["bus"] = int(perm[g["bus"]])
    doc["reference_bus"] = int(perm[doc["reference_bus"]])
    rng.shuffle(doc["buses"])
    other = grid_from_dict(doc)
    np.testing.assert_array_equal(other.base_load[perm], case118.base_load)
    np.testing.assert_array_equal(other.bus_zone[perm], case118.bus_zone)
    np.testing.assert_allclose(other.zonal_thermal_capacity, case118.zonal_thermal_capacity)
