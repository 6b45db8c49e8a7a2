"""Acceptance criteria, each at its stated tolerance.

Every test reports one PASS/FAIL line through ``acceptance_record``; the
session summary groups them per criterion.  Two checks are known to be
out of reach for the stated parameters and are marked as strict expected
failures with the reason attached; they still run in full.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.stats import binom, norm

from ldprate import (
    ActionSpec,
    GridPath,
    RateQuery,
    SimConfig,
    builtin_model,
    rate_continuous,
    rate_discrete,
    small_time_rate,
    solve_skeleton,
)
from ldprate.action import action_gradient, action_value, discrete_action
from ldprate.harness import CLOSED_FORM, FINE_GRID, run_convergence_study, run_tail_study
from ldprate.montecarlo import legendre_transform, lmgf_curve, sample_terminal
from ldprate.path import refine

X_GRID = [-2.0, -1.0, 0.5, 1.0, 2.0]
DYADIC = [1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128]
BUILTINS = ["brownian", "ou-additive", "mult-sine"]

MIDPOINT_THETA = (
    "theta = 1/2 is second order on linear models: R = (1 - h/2)/(1 + h/2) and the "
    "discrete variance (R^(2N) - 1)/(2a) differ from the exact ones by O(h^2), so the "
    "observed order is 2.00 and cannot lie in [0.9, 1.1]"
)
LEGENDRE_SAMPLING = (
    "at eps = 0.05 the supremiser lambda = 1 needs weights exp(X/eps) with log-variance "
    "lambda^2/eps = 20, about e^20 samples; with 1e5 samples the empirical LMGF is linear "
    "with slope max(X) < 1 and the supremum runs to the grid edge"
)


@pytest.mark.acceptance(1)
@pytest.mark.parametrize(
    "theta",
    [0.0, pytest.param(0.5, marks=pytest.mark.xfail(strict=True, reason=MIDPOINT_THETA)), 1.0],
)
def test_additive_order_one(ou, theta, acceptance_record):
    start = time.perf_counter()
    report = run_convergence_study(ou, theta, X_GRID, DYADIC, CLOSED_FORM, x0=0.0, T=1.0)
    elapsed = time.perf_counter() - start
    order = report.fitted_order
    ok = order is not None and 0.9 <= order <= 1.1 and elapsed <= 60
    acceptance_record(ok, f"theta={theta}: fitted order {order:.4f} in [0.9, 1.1], {elapsed:.1f}s <= 60s")
    assert ok


@pytest.mark.acceptance(2)
def test_multiplicative_order_half(mult_sine, acceptance_record):
    start = time.perf_counter()
    report = run_convergence_study(mult_sine, 0.5, X_GRID, DYADIC, FINE_GRID, h_ref=1 / 1024, x0=0.0, T=1.0)
    elapsed = time.perf_counter() - start
    decreasing = all(b < a for a, b in zip(report.errors, report.errors[1:]))
    order = report.fitted_order
    ok = decreasing and order is not None and order >= 0.45 and elapsed <= 300
    acceptance_record(ok, f"errors {['%.3g' % e for e in report.errors]} strictly decreasing={decreasing}, "
                          f"order {order:.4f} >= 0.45, {elapsed:.1f}s <= 300s")
    assert ok


@pytest.mark.acceptance(3)
def test_small_time_exactness(brownian, acceptance_record):
    worst = 0.0
    for h in (1 / 4, 1 / 16, 1 / 64):
        for y in range(-3, 4):
            worst = max(worst, abs(small_time_rate(brownian.model, 0.0, float(y), h) - 0.5 * y * y))
    ok = worst <= 1e-8
    acceptance_record(ok, f"max |I^h(y) - y^2/2| = {worst:.2e} <= 1e-8")
    assert ok


@pytest.mark.acceptance(4)
@pytest.mark.parametrize("name", BUILTINS)
def test_zero_at_skeleton(name, acceptance_record):
    model = builtin_model(name).model
    x0, T = 1.0, 1.0
    centre = solve_skeleton(model, x0, T, 1000).terminal
    # the GL2 quadrature error on the skeleton itself is O(dt^2); 2048
    # intervals put it well below 1e-8
    query = RateQuery(model, x0, T, centre, path_N=2048)
    at_zero, _ = rate_continuous(query)
    off = [rate_continuous(query.at(centre + s))[0] for s in (-0.5, 0.5)]
    ok = at_zero <= 1e-8 and min(off) >= 1e-3
    acceptance_record(ok, f"{name}: I(X0(T)) = {at_zero:.2e} <= 1e-8, min I(X0(T)+-0.5) = {min(off):.4f} >= 1e-3")
    assert ok


def _fd_gradient(spec, model, path, step=1e-6):
    nodes = np.array(path.nodes)
    out = np.zeros((path.N - 1, path.d))
    for n in range(1, path.N):
        for k in range(path.d):
            up, down = nodes.copy(), nodes.copy()
            up[n, k] += step
            down[n, k] -= step
            out[n - 1, k] = (action_value(spec, model, path.with_nodes(up))
                             - action_value(spec, model, path.with_nodes(down))) / (2 * step)
    return out


@pytest.mark.acceptance(5)
@pytest.mark.parametrize("kind", ["continuous", "discrete"])
@pytest.mark.parametrize("name", BUILTINS)
def test_gradient_correctness(name, kind, acceptance_record):
    model = builtin_model(name).model
    rng = np.random.default_rng(1000 + BUILTINS.index(name) * 2 + (kind == "discrete"))
    worst = 0.0
    for _ in range(50):
        N = 8
        nodes = rng.normal(size=(N + 1, model.d)).cumsum(axis=0) * 0.5
        path = GridPath(1.0, nodes)
        spec = ActionSpec.continuous() if kind == "continuous" else ActionSpec.discrete(rng.uniform(), N)
        g = action_gradient(spec, model, path)
        fd = _fd_gradient(spec, model, path)
        worst = max(worst, float(np.max(np.abs(g - fd)) / np.max(np.abs(fd))))
    ok = worst <= 1e-6
    acceptance_record(ok, f"{name}/{kind}: max relative error {worst:.2e} <= 1e-6")
    assert ok


@pytest.mark.acceptance(6)
@pytest.mark.parametrize("name", BUILTINS)
def test_jensen_reduction(name, acceptance_record):
    model = builtin_model(name).model
    rng = np.random.default_rng(2000 + BUILTINS.index(name))
    worst_margin = math.inf
    for _ in range(100):
        N, sub = 4, 4
        theta = rng.uniform()
        coarse = GridPath(1.0, rng.normal(size=(N + 1, model.d)).cumsum(axis=0) * 0.5)
        linear = refine(coarse, sub)
        nodes = np.array(linear.nodes)
        interior = np.ones(len(nodes), dtype=bool)
        interior[::sub] = False
        nodes[interior] += rng.uniform(-0.1, 0.1, size=(interior.sum(), model.d))
        margin = discrete_action(model, linear.with_nodes(nodes), theta, N) - discrete_action(model, linear, theta, N)
        worst_margin = min(worst_margin, margin)
    ok = worst_margin > 1e-12
    acceptance_record(ok, f"{name}: min B_h(perturbed) - B_h(linear) = {worst_margin:.3e} > 0")
    assert ok


def _log_band(p, n, eps):
    """95% band for -eps ln p_hat when the count is Binomial(n, p)."""
    lo, hi = binom.ppf(0.025, n, p), binom.ppf(0.975, n, p)
    upper = -eps * math.log(max(lo, 1) / n)
    return -eps * math.log(hi / n), upper


@pytest.mark.acceptance(7)
def test_tail_decay(brownian, acceptance_record):
    start = time.perf_counter()
    epsilons = [0.2, 0.1, 0.05]
    study = run_tail_study(brownian, 0.0, 1.0, epsilons, N=64, samples=1_000_000, seed=1, x0=0.0, T=1.0)
    elapsed = time.perf_counter() - start
    logs = [r.log_estimate for r in study.rows]
    monotone = all(b < a for a, b in zip(logs, logs[1:])) and all(v > study.C_delta for v in logs)
    in_band = []
    for r in study.rows:
        lo, hi = _log_band(2 * norm.sf(1 / math.sqrt(r.epsilon)), r.samples, r.epsilon)
        in_band.append(lo <= r.log_estimate <= hi)
    ok = monotone and all(in_band) and abs(study.C_delta - 0.5) <= 1e-8 and elapsed <= 60
    acceptance_record(ok, f"-eps ln p = {['%.4f' % v for v in logs]} decreasing to C={study.C_delta:.4f}, "
                          f"in 95% band {in_band}, {elapsed:.1f}s <= 60s")
    assert ok


@pytest.mark.acceptance(8)
@pytest.mark.xfail(strict=True, reason=LEGENDRE_SAMPLING)
def test_legendre_route(brownian, acceptance_record):
    cfg = SimConfig(brownian.model, 0.05, 0.0, 64, 1.0, 0.0, 100_000, seed=1)
    lambdas = np.round(np.arange(-400, 401) * 0.01, 10)
    values = lmgf_curve(cfg, lambdas, sample_terminal(cfg))
    res = legendre_transform(lambdas, values, 1.0)
    discrete, _ = rate_discrete(RateQuery(brownian.model, 0.0, 1.0, 1.0, N=64))
    gap = abs(res.value - discrete)
    ok = gap <= 0.02
    acceptance_record(ok, f"Legendre {res.value:.4f} vs I^h {discrete:.4f}, gap {gap:.4f} <= 0.02 "
                          f"(argmax {res.argmax[0]:g}, boundary={res.on_boundary})")
    assert ok


CLI_RUNS = {
    "rate": ["--model", "mult-sine", "--x", "-1,0.5,2", "--path-N", "64"],
    "rate-discrete": ["--model", "ou-additive", "--a", "-1", "--theta", "0.5", "--N", "16", "--x", "-2,1,2"],
    "small-time": ["--model", "mult-sine", "--h", "1/16", "--y", "-1,1"],
    "simulate": ["--model", "mult-sine", "--theta", "1", "--N", "16", "--epsilon", "0.1",
                 "--samples", "20000", "--seed", "11"],
    "tail": ["--model", "brownian", "--N", "8", "--samples", "20000", "--epsilon-values", "0.5,0.2",
             "--delta", "1", "--seed", "5"],
    "lmgf": ["--model", "ou-additive", "--a", "-1", "--N", "8", "--samples", "20000", "--epsilon", "0.2",
             "--lambda-min", "-2", "--lambda-max", "2", "--lambda-step", "0.1", "--x", "0.5", "--seed", "9"],
    "converge": ["--model", "mult-sine", "--theta", "0.5", "--h-values", "1/8,1/16,1/32",
                 "--reference", "fine-grid", "--x", "-1,1"],
}


@pytest.mark.acceptance(9)
@pytest.mark.parametrize("subcommand", sorted(CLI_RUNS))
def test_cli_determinism(subcommand, tmp_path, acceptance_record):
    digests = []
    for threads in ("1", "8", "1", "8"):
        out = tmp_path / f"{subcommand}-{threads}-{len(digests)}.csv"
        env = {**os.environ, "LDP_RATE_THREADS": threads}
        subprocess.run([sys.executable, "-m", "ldprate.cli", subcommand, *CLI_RUNS[subcommand],
                        "--output", str(out)], env=env, check=True, capture_output=True)
        digests.append(out.read_bytes())
    ok = all(d == digests[0] for d in digests) and len(digests[0]) > 0
    acceptance_record(ok, f"{subcommand}: byte-identical at 1 and 8 workers")
    assert ok
