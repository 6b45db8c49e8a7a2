import math

import numpy as np
import pytest
from scipy import sparse
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import spsolve

from ldprate import UnknownModelError, builtin_model, check_lipschitz
from ldprate.model import BUILTIN_NAMES

ALL_MODELS = [
    ("brownian", {}),
    ("brownian", {"d": 3}),
    ("ou-additive", {"a": -1.0}),
    ("ou-additive", {"a": 0.5, "d": 2}),
    ("mult-sine", {}),
]


def _ids(p):
    return f"{p[0]}{p[1]}"


@pytest.fixture(params=ALL_MODELS, ids=_ids)
def entry(request):
    name, kw = request.param
    return builtin_model(name, **kw)


def test_builtin_names():
    assert set(BUILTIN_NAMES) == {"brownian", "ou-additive", "mult-sine"}


def test_unknown_model():
    with pytest.raises(UnknownModelError, match="unknown model"):
        builtin_model("double-well")


def test_unknown_parameter():
    with pytest.raises(UnknownModelError):
        builtin_model("brownian", a=1.0)


def test_call_form_matches_keyword_form():
    a = builtin_model("ou-additive(-1)")
    b = builtin_model("ou-additive", a=-1)
    assert a.model.lipschitz_L == b.model.lipschitz_L == 1.0
    assert a.exact_rate(0.3, 0.1, 2.0) == b.exact_rate(0.3, 0.1, 2.0)


def test_brownian_exact_rate():
    e = builtin_model("brownian")
    assert e.exact_rate(1.0, 0.0, 1.0) == 0.5
    assert e.exact_rate(2.0, 0.0, 1.0) == 2.0
    assert e.exact_rate(1.0, 0.0, 2.0) == 0.25


def test_mult_sine_has_no_closed_form(mult_sine):
    assert mult_sine.exact_rate is None
    assert mult_sine.model.lipschitz_L == 2.0
    assert not mult_sine.model.is_additive


def _ou_rate_by_linear_solve(a, x0, x, T, N):
    """Independent oracle: midpoint-rule quadratic action minimized by sparse least squares."""
    h = T / N
    lo, hi = -1 / h - a / 2, 1 / h - a / 2
    # residual_k = lo*phi_k + hi*phi_{k+1} over interior unknowns phi_1..phi_{N-1}
    D = sparse.diags([np.full(N - 1, hi), np.full(N - 1, lo)], [0, -1], shape=(N, N - 1)).tocsr()
    rhs = np.zeros(N)
    rhs[0] -= lo * x0
    rhs[-1] -= hi * x
    sol = spsolve((D.T @ D).tocsc(), D.T @ rhs)
    res = D @ sol - rhs
    return 0.5 * h * float(res @ res)


@pytest.mark.parametrize("a,x0,x,T", [(-1.0, 0.0, 1.0, 1.0), (0.7, 0.3, -1.2, 1.5), (-2.0, 1.0, 0.0, 0.5)])
def test_ou_exact_rate_against_fine_grid_minimizer(a, x0, x, T):
    exact = builtin_model("ou-additive", a=a).exact_rate(x, x0, T)
    assert exact == pytest.approx(_ou_rate_by_linear_solve(a, x0, x, T, 4096), rel=1e-6)


def test_ou_reference_value(ou):
    assert ou.exact_rate(1.0, 0.0, 1.0) == pytest.approx(math.e**2 / (math.e**2 - 1), abs=1e-12)
    assert ou.exact_rate(1.0, 0.0, 1.0) == pytest.approx(1.156518, abs=1e-6)


def test_exact_rate_zero_only_at_skeleton(entry):
    if entry.exact_rate is None:
        pytest.skip("no closed form")
    d = entry.model.d
    x0 = np.linspace(0.2, 1.0, d)
    T = 1.3
    a = entry.model.params.get("a", 0.0)
    skeleton = x0 * math.exp(a * T)
    assert entry.exact_rate(skeleton, x0, T) == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = skeleton + rng.normal(size=d)
        assert entry.exact_rate(x, x0, T) > 0


def test_lipschitz_ratio_never_exceeds_declared(entry):
    est = check_lipschitz(entry.model, samples=5000, radius=10.0, rng_seed=3)
    assert est <= entry.model.lipschitz_L * (1 + 1e-9)


def test_check_lipschitz_examples(brownian, mult_sine):
    assert check_lipschitz(brownian.model, 100, 10.0, 0) == 0.0
    assert check_lipschitz(builtin_model("ou-additive", a=1.0).model, 100, 10.0, 5) <= 1 + 1e-12
    assert check_lipschitz(mult_sine.model, 10000, 10.0, 7) <= 2 + 1e-12


def test_mult_sine_constant_by_dense_sampling(mult_sine):
    # the sup of |b'| + |sigma'| = 1 + |cos| is 2, approached near x = k pi
    x = np.linspace(-10, 10, 200001)
    deriv = 1 + np.abs(np.cos(x))
    assert deriv.max() <= 2.0
    assert deriv.max() > 2 - 1e-8
    res = minimize_scalar(lambda t: -(1 + abs(math.cos(t))), bounds=(-0.5, 0.5), method="bounded")
    assert -res.fun == pytest.approx(2.0, abs=1e-9)


def test_check_lipschitz_needs_two_samples(brownian):
    with pytest.raises(ValueError):
        check_lipschitz(brownian.model, 1, 1.0, 0)


def test_inverse_times_diffusion_is_identity(entry):
    m = entry.model
    rng = np.random.default_rng(11)
    x = rng.normal(size=(10_000, m.d))
    x *= (10 * rng.uniform(size=(10_000, 1)) ** (1 / m.d)) / np.linalg.norm(x, axis=1, keepdims=True)
    prod = m.diffusion_inverse(x) @ m.diffusion(x)
    assert np.max(np.abs(prod - np.eye(m.d))) <= 1e-12


def test_additive_flag_matches_constant_diffusion(entry):
    m = entry.model
    x = np.random.default_rng(2).uniform(-5, 5, size=(100, m.d))
    distinct = {m.diffusion(x[i:i + 1])[0].tobytes() for i in range(100)}
    assert (len(distinct) == 1) == m.is_additive


def test_jacobians_match_finite_differences(entry):
    m = entry.model
    x = np.random.default_rng(4).normal(size=(7, m.d))
    step = 1e-6
    for k in range(m.d):
        e = np.zeros(m.d)
        e[k] = step
        fd_b = (m.drift(x + e) - m.drift(x - e)) / (2 * step)
        fd_s = (m.diffusion(x + e) - m.diffusion(x - e)) / (2 * step)
        np.testing.assert_allclose(m.drift_jacobian(x)[..., k], fd_b, atol=1e-8)
        np.testing.assert_allclose(m.diffusion_derivative(x)[..., k], fd_s, atol=1e-8)


def test_without_drift(mult_sine):
    z = mult_sine.model.without_drift()
    x = np.linspace(-3, 3, 11)[:, None]
    assert np.all(z.drift(x) == 0)
    np.testing.assert_array_equal(z.diffusion(x), mult_sine.model.diffusion(x))
    assert z.lipschitz_L == 1.0


def test_model_is_immutable(brownian):
    with pytest.raises(AttributeError):
        brownian.model.lipschitz_L = 3.0
