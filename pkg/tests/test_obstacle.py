import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.sparse import diags, identity, kron
from scipy.sparse.linalg import spsolve

from cmaplab import obstacle as ob
from cmaplab.errors import EmptySet, NegativeSource, NonConvergence, NotFreeBoundaryPoint
from cmaplab.fields import Grid, ScalarField, laplacian_array, sample
from cmaplab.regularity import solution_from_field

SQUARE = ((-1.0, 1.0), (-1.0, 1.0))


def _radial_ode_value(r0, r_end):
    """Integrate w'' + w'/r = 1 outward from the free boundary (w = w' = 0)."""
    sol = solve_ivp(lambda r, y: [y[1], 1 - y[1] / r], (r0, r_end), [0.0, 0.0],
                    rtol=1e-12, atol=1e-14)
    return sol.y[0, -1]


def test_radial_closed_form_matches_ode():
    exact = ob.radial_solution(0.5)
    assert exact(1.0, 0.0) == pytest.approx(0.1875 - 0.125 * np.log(2), abs=1e-12)
    assert exact(1.0, 0.0) == pytest.approx(_radial_ode_value(0.5, 1.0), abs=1e-10)
    assert exact(0.2, 0.1) == 0.0


@pytest.fixture(scope="module")
def radial_128():
    exact = ob.radial_solution(0.5)
    grid = Grid(SQUARE, (129, 129))
    return grid, exact, ob.solve_obstacle(1.0, exact, grid, tol=1e-6)


def test_radial_solution_error_is_second_order(radial_128):
    grid, exact, sol = radial_128
    err = np.abs(sol.w.values - exact(*grid.coords())).max()
    assert sol.converged
    assert err <= 10 * grid.h ** 2


def test_radial_free_boundary_within_two_cells(radial_128):
    grid, _, sol = radial_128
    fb = sol.fb_coords()
    assert len(fb) > 0
    assert np.abs(np.hypot(fb[:, 0], fb[:, 1]) - 0.5).max() <= 2 * grid.h


def test_radial_quadratic_growth(radial_128):
    grid, _, sol = radial_128
    x0 = ob.snap_to_free_boundary(sol, [0.5, 0.0])
    for r in (0.25, 0.125, 0.0625):
        ratio = sol.w.values[grid.ball(x0, r)].max() / r ** 2
        assert 1 / 20 <= ratio <= 20


def test_solution_invariants(radial_128):
    _, _, sol = radial_128
    assert sol.w.values.min() >= 0.0
    assert sol.residual <= 1e-6


def test_quadratic_dirichlet_is_reproduced():
    grid = Grid(SQUARE, (33, 33))
    w0 = lambda x, y: x ** 2 / 2
    sol = ob.solve_obstacle(1.0, w0, grid, tol=1e-12, max_iter=200000)
    np.testing.assert_allclose(sol.w.values, w0(*grid.coords()), atol=1e-9)


def test_large_dirichlet_gives_poisson_solution():
    grid = Grid(((0.0, 1.0), (0.0, 1.0)), (33, 33))
    sol = ob.solve_obstacle(1.0, 10.0, grid, tol=1e-10, max_iter=200000)
    # unconstrained Poisson oracle: sparse 5-point solve
    n = 31
    h = grid.h
    t = diags([1, -2, 1], [-1, 0, 1], shape=(n, n))
    lap = (kron(t, identity(n)) + kron(identity(n), t)) / h ** 2
    rhs = np.ones(n * n)
    bc = np.zeros((n, n))
    bc[0, :] += 10
    bc[-1, :] += 10
    bc[:, 0] += 10
    bc[:, -1] += 10
    inner = spsolve(lap.tocsc(), rhs - bc.ravel() / h ** 2).reshape(n, n)
    assert not sol.contact_mask.any()
    np.testing.assert_allclose(sol.w.values[1:-1, 1:-1], inner, atol=1e-7)


def test_negative_source_rejected():
    grid = Grid(SQUARE, (9, 9))
    with pytest.raises(NegativeSource):
        ob.solve_obstacle(-1.0, 1.0, grid)


def test_non_convergence_flagged():
    grid = Grid(SQUARE, (65, 65))
    sol = ob.solve_obstacle(1.0, ob.radial_solution(0.5), grid, max_iter=3, multilevel=False)
    assert not sol.converged and sol.iterations == 3
    with pytest.raises(NonConvergence) as info:
        ob.solve_obstacle(1.0, ob.radial_solution(0.5), grid, max_iter=3, multilevel=False, strict=True)
    assert info.value.best is not None


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_comparison_principle(seed):
    rng = np.random.default_rng(seed)
    grid = Grid(SQUARE, (17, 17))
    low = ScalarField(grid, rng.uniform(0, 0.3, grid.shape))
    high = ScalarField(grid, low.values + rng.uniform(0, 0.3, grid.shape))
    a = ob.solve_obstacle(1.0, low, grid, tol=1e-10, max_iter=100000)
    b = ob.solve_obstacle(1.0, high, grid, tol=1e-10, max_iter=100000)
    assert np.all(b.w.values >= a.w.values - 1e-9)


def test_contact_set_examples():
    grid = Grid(SQUARE, (41, 41))
    h = grid.h
    w = sample(grid, lambda x, y: x ** 2 / 2)
    mask, fb = ob.contact_set(w, h ** 2)
    x = grid.coords()[0]
    assert np.all(mask[np.abs(x) <= h * (1 + 1e-9)])
    mask, fb = ob.contact_set(sample(grid, lambda x, y: 1 + x * x), h ** 2)
    assert not mask.any() and len(fb) == 0


def test_min_diameter_examples():
    h = 0.01
    rad, ang = np.meshgrid(np.linspace(0, 0.6, 61), np.linspace(0, 2 * np.pi, 720), indexing="ij")
    disk = np.stack([(rad * np.cos(ang)).ravel(), (rad * np.sin(ang)).ravel()], axis=1)
    assert abs(ob.min_diameter(disk) - 1.2) <= h
    line = np.stack([np.linspace(0, 1, 50), 2 * np.linspace(0, 1, 50)], axis=1)
    assert ob.min_diameter(line) <= h
    t = np.linspace(0, 2 * np.pi, 2000)
    ellipse = np.stack([2 * np.cos(t), np.sin(t)], axis=1)
    assert abs(ob.min_diameter(ellipse) - 2.0) <= h
    assert ob.min_diameter([[0.3, 0.2]]) == 0.0
    with pytest.raises(EmptySet):
        ob.min_diameter(np.zeros((0, 2)))


def test_classify_point_examples():
    # the h² contact threshold makes the line contact 2h wide, so scales must exceed 20h
    grid = Grid(SQUARE, (513, 513))
    scales = [0.5, 0.25, 0.125]
    line = solution_from_field(sample(grid, lambda x, y: x ** 2 / 2))
    verdict, r0, prof = ob.classify_point(line, 1.0, [0.0, 0.0], scales)
    assert verdict == ob.SINGULAR and r0 is None
    half = solution_from_field(sample(grid, lambda x, y: np.maximum(x, 0) ** 2 / 2))
    verdict, r0, prof = ob.classify_point(half, 1.0, [0.0, 0.0], scales)
    assert verdict == ob.REGULAR
    assert all(abs(ratio - 1.0) <= 0.05 for _, ratio in prof)
    verdict, _, _ = ob.classify_point(half, 0.0, [0.0, 0.0], scales)
    assert verdict == ob.SINGULAR
    with pytest.raises(NotFreeBoundaryPoint):
        ob.classify_point(half, 1.0, [-0.5, 0.0], scales)


def test_red_black_masks_partition_interior():
    a, b = ob.red_black_masks((7, 9))
    assert not (a & b).any()
    assert (a | b).sum() == 5 * 7
