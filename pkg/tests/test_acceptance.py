"""Acceptance gate: every criterion at its stated tolerance.

Each criterion prints one [PASS]/[FAIL] line (visible with pytest -s). The
heavy d = 2 growth-constant run is shared between criteria 2 and 3.
"""

import math
import time

import numpy as np
import pytest

from paretolab.core import Box, PointCloud, filter_points
from paretolab.experiments import (
    ExperimentConfig,
    run_cd_estimate,
    run_consistency,
    run_continuum_limit,
    run_simplex,
    run_stability,
)
from paretolab.hjsolver import (
    GridSpec,
    cd_bounds,
    exact_solution_uniform,
    residual_max,
    resweep_drift,
    solve_hj,
    sup_norm_diff,
)
from paretolab.ppp import IntensityFunction, derive_seed, grow_coupled, sample_poisson, thin
from paretolab.sorting import chain_length, depth_at, longest_chain, nondominated_sort

from oracles import recursive_depths

UNIFORM2 = {"kind": "uniform", "value": 1.0, "box": [[0, 0], [1, 1]]}
UNIT2 = Box(np.zeros(2), np.ones(2))


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def cd2_report():
    cfg = ExperimentConfig("cd_estimate", 2, [1e6], 5, 20260809, UNIFORM2)
    return run_cd_estimate(cfg)


def test_criterion_1_oracle_equivalence():
    started = time.monotonic()
    for d in (2, 3, 4):
        for instance in range(100):
            rng = np.random.default_rng(derive_seed(10_000 + d, instance))
            cloud = PointCloud(rng.uniform(size=(200, d)))
            oracle = recursive_depths(cloud.points)
            length, cert = longest_chain(cloud)
            assert length == oracle.max()
            field = nondominated_sort(cloud)
            assert np.array_equal(field.depths, oracle)
            for i in range(len(cloud)):
                assert field.depths[i] == depth_at(cloud, cloud.points[i])
    elapsed = time.monotonic() - started
    _verdict("criterion 1 (oracle equivalence)", elapsed < 60.0,
             f"300 instances exact, {elapsed:.1f}s < 60s")


def test_criterion_2_d2_constant(cd2_report):
    est = cd2_report.estimate
    ok = 1.95 <= est <= 2.01
    _verdict("criterion 2 (d=2 constant)", ok, f"estimate {est:.5f} in [1.95, 2.01]")


def test_criterion_3_proven_bounds(cd2_report):
    started = time.monotonic()
    results = {2: cd2_report.estimate}
    for d in (3, 4):
        cfg = ExperimentConfig("cd_estimate", d, [3e4], 3, 20260800 + d,
                               {"kind": "uniform", "value": 1.0,
                                "box": [[0.0] * d, [1.0] * d]})
        results[d] = run_cd_estimate(cfg).estimate
    elapsed = time.monotonic() - started
    checks = []
    for d, est in results.items():
        lower, upper = cd_bounds(d)
        checks.append(0.95 * lower <= est <= upper)
    _verdict("criterion 3 (proven bounds)", all(checks) and elapsed < 600.0,
             " ".join(f"d={d}:{est:.4f}" for d, est in results.items()) + f", {elapsed:.0f}s")


def test_criterion_4_simplex_lemma():
    cfg = ExperimentConfig("simplex", 2, [1e6], 5, 20260810, UNIFORM2,
                           {"weights": [1, 1], "ratio_weights": [2, 2],
                            "ratio_tol": 0.05, "acceptance_band": [0.96, 1.01]})
    report = run_simplex(cfg)
    ok = report.passed and 0.96 <= report.estimate <= 1.01 and report.details["ratio_ok"]
    _verdict("criterion 4 (simplex lemma)", ok,
             f"estimate {report.estimate:.5f} in [0.96, 1.01], "
             f"weight ratio {report.details['ratio']:.4f} = 2 +/- 0.05")


def test_criterion_5_pde_solver():
    started = time.monotonic()
    f = IntensityFunction.uniform(1.0, UNIT2)
    errors = {}
    fields = {}
    for nodes in (65, 129, 257):
        spec = GridSpec(UNIT2, (nodes, nodes))
        fields[nodes] = solve_hj(f, 2.0, spec)
        errors[nodes] = sup_norm_diff(fields[nodes], exact_solution_uniform(spec, 2.0))
    resid = residual_max(fields[257], f, 2.0)
    drift = resweep_drift(fields[257], f, 2.0)
    elapsed = time.monotonic() - started
    ok = (errors[257] <= 0.06
          and errors[257] < errors[129] < errors[65]
          and resid <= 1e-10
          and drift <= 1e-12
          and elapsed < 5.0)
    _verdict("criterion 5 (PDE solver)", ok,
             f"sup errors 65/129/257 = {errors[65]:.4f}/{errors[129]:.4f}/{errors[257]:.4f}, "
             f"residual {resid:.2e} <= 1e-10, drift {drift:.2e} <= 1e-12, {elapsed:.1f}s < 5s")


def test_criterion_6_continuum_limit():
    started = time.monotonic()
    cfg = ExperimentConfig("continuum_limit", 2, [1e4, 1e6], 3, 20260811, UNIFORM2,
                           {"grid_nodes": 129, "subbox": [[0.1, 0.1], [1, 1]],
                            "reference": "exact-uniform", "cd": 2.0, "sup_band": 0.05})
    report = run_continuum_limit(cfg)
    elapsed = time.monotonic() - started
    per_seed = report.per_scale[-1].values
    ok = (report.passed
          and all(v <= 0.05 for v in per_seed)
          and report.per_scale[-1].mean < report.per_scale[0].mean
          and elapsed < 600.0)
    _verdict("criterion 6 (continuum limit)", ok,
             f"per-seed sup at n=1e6 {['%.4f' % v for v in per_seed]} <= 0.05, "
             f"mean {report.per_scale[-1].mean:.4f} < {report.per_scale[0].mean:.4f} at n=1e4, "
             f"{elapsed:.0f}s")


def test_criterion_7_stability_bound():
    cfg = ExperimentConfig("stability", 2, [1e6], 1, 20260812, UNIFORM2,
                           {"pairs": 200, "slack": 1.0, "region_size": 1.0})
    report = run_stability(cfg)
    ok = report.passed and report.details["violations"] == 0
    _verdict("criterion 7 (stability bound)", ok,
             f"0 violations over 200 pairs, worst ratio {report.estimate:.4f} <= 1.0")


def test_criterion_8_consistency():
    cfg = ExperimentConfig("consistency", 2, [1e7], 3, 20260813, UNIFORM2,
                           {"testfn": "linear:1,1", "anchor": [1, 1], "epsilons": [0.05],
                            "ratio_testfn": "linear:2,2", "ratio_tol": 0.1,
                            "acceptance_band": [0.9, 1.05]})
    report = run_consistency(cfg)
    ok = report.passed and 0.9 <= report.estimate <= 1.05 and report.details["ratio_ok"]
    _verdict("criterion 8 (consistency)", ok,
             f"estimate {report.estimate:.5f} in [0.9, 1.05], "
             f"gradient ratio {report.details['ratio']:.4f} = 2 +/- 0.1")


def test_criterion_9_property_suites():
    f1 = IntensityFunction.uniform(1.0, UNIT2)

    # monotonicity of chain length under subsets, 10^3 trials
    rng = np.random.default_rng(20260814)
    for _ in range(1000):
        full = rng.uniform(size=(40, 2))
        sub = full[rng.uniform(size=40) < 0.6]
        if len(sub):
            assert chain_length(PointCloud(sub)) <= chain_length(PointCloud(full))

    # positive-diagonal-affine invariance, 100 trials
    for _ in range(100):
        d = int(rng.integers(2, 5))
        pts = rng.uniform(size=(60, d))
        a = rng.uniform(0.1, 4.0, size=d)
        b = rng.uniform(0.0, 2.0, size=d)
        assert chain_length(PointCloud(pts)) == chain_length(PointCloud(pts * a + b))

    # void probabilities, 3 sigma over 10^4 seeds
    region = Box(np.zeros(2), np.array([0.5, 0.5]))
    scale, seeds = 5.0, 10_000
    voids = sum(0 if region.mask(sample_poisson(f1, scale, seed=s).cloud.points).any() else 1
                for s in range(seeds))
    p = math.exp(-scale * region.volume())
    sigma = math.sqrt(p * (1 - p) / seeds)
    void_ok = abs(voids / seeds - p) <= 3 * sigma

    # thinning statistics, 3 sigma two-sample over 300 seeds
    f2 = IntensityFunction.uniform(2.0, UNIT2)
    thinned, direct = [], []
    for s in range(300):
        thinned.append(len(thin(sample_poisson(f2, 2000.0, seed=derive_seed(s, 0)),
                                0.5, seed=derive_seed(s, 1))))
        direct.append(len(sample_poisson(f1, 2000.0, seed=derive_seed(s, 2))))
    se = math.sqrt(2 * 2000.0 / 300)
    thin_ok = abs(np.mean(thinned) - np.mean(direct)) <= 3 * se

    # nested coupling exactness
    for s in range(3):
        reals = grow_coupled(f1, [100.0, 400.0, 900.0], seed=s)
        for small, big in zip(reals, reals[1:]):
            assert np.array_equal(big.cloud.points[:len(small)], small.cloud.points)

    # seed determinism, bit for bit
    det_ok = (sample_poisson(f1, 500.0, seed=5).cloud == sample_poisson(f1, 500.0, seed=5).cloud
              and thin(sample_poisson(f1, 500.0, seed=5), 0.5, seed=6).cloud
              == thin(sample_poisson(f1, 500.0, seed=5), 0.5, seed=6).cloud)

    ok = void_ok and thin_ok and det_ok
    _verdict("criterion 9 (property suites)", ok,
             "subset monotonicity(1000), affine invariance(100), "
             f"void prob |{voids / seeds:.4f}-{p:.4f}|<=3sig, thinning two-sample, "
             "nested coupling, seed determinism")
