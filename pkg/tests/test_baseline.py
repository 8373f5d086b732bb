import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellseer.baseline import ParametricConstants, ParametricFit, fit_cycle, parametric_fit, parametric_predict, \
    read_fit_table, write_fit_table
from cellseer.errors import IdentifiabilityError
from cellseer.simkit import CellGroundTruth, steady_cell_voltage

C = ParametricConstants()


def noise_free(rng, u0, k, n=30):
    I, T, X = rng.uniform(1, 16, n), rng.uniform(70, 90, n), rng.uniform(30, 33, n)
    V = parametric_predict(ParametricFit(u0, k), C, I, T, X)
    return np.column_stack([I, T, X, V])


def test_predict_reference_conditions():
    assert parametric_predict(ParametricFit(2.3, 0.12), C, 13.605, 90, 32) == pytest.approx(2.9, abs=1e-12)


def test_predict_table_row():
    # 0.12 + 1.294*0.0016 + 0.675*0.0031 = 0.1241629; 16.309/2.721 = 5.9937523
    v = parametric_predict(ParametricFit(2.3, 0.12), C, 16.309, 88.706, 32.675)
    assert v == pytest.approx(2.3 + 0.1241629 * 16.309 / 2.721, abs=1e-12)
    assert v == pytest.approx(3.0442, abs=5e-5)


def test_predict_matches_simulator_without_quadratic_term(rng):
    cell = CellGroundTruth("c", 2.31, 0.118, 0.0, 0.0)
    I, T, X = rng.uniform(1, 16, 20), rng.uniform(70, 90, 20), rng.uniform(30, 33, 20)
    np.testing.assert_allclose(parametric_predict(ParametricFit(2.31, 0.118), C, I, T, X),
                               steady_cell_voltage(cell, I, T, X), rtol=0, atol=1e-14)


def test_fit_recovers_noise_free_parameters(rng):
    fit = parametric_fit(noise_free(rng, 2.25, 0.10))
    assert abs(fit.u0 - 2.25) < 1e-9 and abs(fit.k - 0.10) < 1e-9


def test_two_points_interpolate_exactly(rng):
    obs = np.array([[5.0, 80, 32, 2.7], [12.0, 85, 31, 2.95]])
    fit = parametric_fit(obs)
    assert fit.residual_rms < 1e-12
    np.testing.assert_allclose(parametric_predict(fit, C, *obs[:, :3].T), obs[:, 3], atol=1e-12)


def test_singular_designs_raise():
    with pytest.raises(IdentifiabilityError):
        parametric_fit([[0, 80, 32, 2.3], [0, 81, 32, 2.3], [0, 82, 32, 2.3]])
    with pytest.raises(IdentifiabilityError):
        parametric_fit([[5, 80, 32, 2.3]])
    with pytest.raises(IdentifiabilityError):
        parametric_fit([[5, 80, 32, 2.3], [6, 80, np.nan, 2.4]])


def test_constants_reject_bad_area():
    with pytest.raises(ValueError):
        ParametricConstants(A=0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.5, 3.0), st.floats(0.01, 0.5), st.integers(0, 2**32 - 1))
def test_recovery_and_orthogonality(u0, k, seed):
    rng = np.random.default_rng(seed)
    obs = noise_free(rng, u0, k)
    fit = parametric_fit(obs)
    assert abs(fit.u0 - u0) < 1e-9 and abs(fit.k - k) < 1e-9
    noisy = obs.copy()
    noisy[:, 3] += rng.normal(0, 0.01, len(obs))
    fit = parametric_fit(noisy)
    z = noisy[:, 0] / C.A
    resid = noisy[:, 3] - parametric_predict(fit, C, *noisy[:, :3].T)
    assert abs(resid.sum()) < 1e-9 and abs(resid @ z) < 1e-9
    # points on the fitted plane do not move the fit
    extra = noise_free(rng, fit.u0, fit.k, 5)
    refit = parametric_fit(np.vstack([noisy, extra]))
    assert abs(refit.u0 - fit.u0) < 1e-9 and abs(refit.k - fit.k) < 1e-9


def test_fit_cycle_and_table(tmp_path, rng):
    from helpers import synthetic_cycle
    c = synthetic_cycle(rng, n_cells=2, scaled=False)
    fits = fit_cycle(c)
    assert [f.cell_id for f in fits] == c.cell_ids
    write_fit_table(fits, tmp_path / "fits.csv")
    assert (tmp_path / "fits.csv").read_text().splitlines()[0] == "electrolyzer,cycle,cell,u0,k,residual_rms"
    back = read_fit_table(tmp_path / "fits.csv")
    assert [(f.u0, f.k) for f in back] == [(f.u0, f.k) for f in fits]
    with pytest.raises(ValueError):
        fit_cycle(synthetic_cycle(rng))
