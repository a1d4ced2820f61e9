import math

import numpy as np
import pytest

from paretolab.core import Box, DimensionMismatchError, PointCloud
from paretolab.ppp import (
    IntensityFunction,
    derive_seed,
    grow_coupled,
    intensity_from_spec,
    philox_stream,
    sample_poisson,
    superpose,
    thin,
)
from paretolab.sorting import chain_length, depth_at

UNIT2 = Box(np.zeros(2), np.ones(2))


def unit_uniform(value=1.0):
    return IntensityFunction.uniform(value, UNIT2)


class TestIntensityFunction:
    def test_zero_outside_support(self):
        f = unit_uniform(2.0)
        assert f.evaluate((0.5, 0.5)) == 2.0
        assert f.evaluate((1.5, 0.5)) == 0.0
        assert f.evaluate_many(np.array([[0.5, 0.5], [1.5, 0.5]])).tolist() == [2.0, 0.0]

    @pytest.mark.parametrize("maker", [
        lambda: unit_uniform(3.0),
        lambda: IntensityFunction.ramp_product(UNIT2),
        lambda: IntensityFunction.two_bump(),
    ])
    def test_bounded_on_probes(self, maker):
        f = maker()
        rng = np.random.default_rng(21)
        probes = rng.uniform(f.support.lo, f.support.hi, size=(10_000, f.dimension))
        vals = f.evaluate_many(probes)
        assert np.all(vals >= 0)
        assert np.all(vals <= f.local_bound)

    def test_restrict(self):
        f = IntensityFunction.ramp_product(UNIT2)
        sub = Box(np.array([0.5, 0.5]), np.array([2.0, 2.0]))
        g = f.restrict(sub)
        assert g.support == Box(np.array([0.5, 0.5]), np.ones(2))
        assert g.evaluate((0.75, 0.75)) == f.evaluate((0.75, 0.75))
        assert g.evaluate((0.25, 0.25)) == 0.0

    def test_grid_intensity_piecewise_lookup(self):
        f = IntensityFunction.from_grid(np.array([[1.0, 2.0], [3.0, 4.0]]), cell_size=0.5)
        assert f.support == UNIT2
        assert f.evaluate((0.25, 0.25)) == 1.0
        assert f.evaluate((0.25, 0.75)) == 2.0
        assert f.evaluate((0.75, 0.25)) == 3.0
        assert f.evaluate((0.9, 0.9)) == 4.0
        assert f.evaluate((1.0, 1.0)) == 4.0  # closed upper face uses the last cell
        assert f.local_bound == 4.0
        many = f.evaluate_many(np.array([[0.25, 0.75], [2.0, 2.0]]))
        assert many.tolist() == [2.0, 0.0]

    def test_validation(self):
        with pytest.raises(ValueError):
            IntensityFunction.uniform(-1.0, UNIT2)
        with pytest.raises(ValueError):
            IntensityFunction.from_grid(np.array([[1.0, -2.0]]), 0.5)
        with pytest.raises(ValueError):
            IntensityFunction.from_grid(np.ones((2, 2)), 0.0)


class TestIntensitySpecs:
    def test_uniform_string(self):
        f = intensity_from_spec("uniform", dimension=3)
        assert f.support == Box(np.zeros(3), np.ones(3))
        assert f.evaluate((0.5, 0.5, 0.5)) == 1.0

    def test_uniform_dict_with_box(self):
        f = intensity_from_spec({"kind": "uniform", "value": 2.5, "box": [[0, 0], [2, 3]]})
        assert f.local_bound == 2.5
        assert f.support == Box(np.zeros(2), np.array([2.0, 3.0]))

    def test_analytic_names(self):
        assert intensity_from_spec("analytic:two-bump").name == "analytic:two-bump"
        f = intensity_from_spec({"kind": "analytic", "name": "ramp-product", "dimension": 3})
        assert f.dimension == 3

    def test_unknown_specs(self):
        with pytest.raises(ValueError, match="ramp-product"):
            intensity_from_spec("analytic:nope")
        with pytest.raises(ValueError):
            intensity_from_spec("gaussian")
        with pytest.raises(ValueError):
            intensity_from_spec({"kind": "mystery"})
        with pytest.raises(ValueError):
            intensity_from_spec("uniform")  # no dimension to build a default box

    def test_grid_spec_inline(self):
        f = intensity_from_spec({"kind": "grid", "values": [[1.0, 0.0]], "cell_size": 1.0})
        assert f.evaluate((0.5, 0.5)) == 1.0
        assert f.evaluate((0.5, 1.5)) == 0.0


class TestSamplePoisson:
    def test_zero_intensity_empty(self):
        real = sample_poisson(unit_uniform(0.0), 1000.0, seed=1)
        assert len(real) == 0

    def test_zero_volume_support_empty(self):
        f = IntensityFunction.uniform(5.0, Box(np.array([0.5, 0.5]), np.array([0.5, 1.0])))
        assert len(sample_poisson(f, 1000.0, seed=1)) == 0

    def test_nonfinite_bound_rejected(self):
        with pytest.raises(ValueError):
            IntensityFunction(lambda x: 1.0, UNIT2, math.inf)
        with pytest.raises(ValueError):
            sample_poisson(unit_uniform(), 0.0, seed=1)

    def test_mean_count_3se(self):
        # mean count over 500 seeds within 3 standard errors of scale * mass
        scale, seeds = 1000.0, 500
        counts = [len(sample_poisson(unit_uniform(), scale, seed=s)) for s in range(seeds)]
        se = math.sqrt(scale / seeds)
        assert abs(np.mean(counts) - scale) <= 3 * se

    def test_disjoint_boxes_uncorrelated(self):
        left = Box(np.zeros(2), np.array([0.5, 1.0]))
        right = Box(np.array([0.5, 0.0]), np.ones(2))
        a, b = [], []
        for s in range(1000):
            pts = sample_poisson(unit_uniform(), 200.0, seed=s).cloud.points
            a.append(int(np.sum(left.mask(pts))))
            b.append(int(np.sum(right.mask(pts))))
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) <= 0.1

    def test_void_probabilities(self):
        # P(no points in A) = exp(-scale * integral of f over A), 3 sigma band
        scale, seeds = 5.0, 10_000
        region = Box(np.zeros(2), np.array([0.5, 0.5]))
        f = unit_uniform()
        voids = 0
        for s in range(seeds):
            pts = sample_poisson(f, scale, seed=s).cloud.points
            voids += 0 if region.mask(pts).any() else 1
        p = math.exp(-scale * region.volume())
        sigma = math.sqrt(p * (1 - p) / seeds)
        assert abs(voids / seeds - p) <= 3 * sigma

    def test_restriction_property(self):
        # counts of the full process inside a sub-box match direct sampling on it
        sub = Box(np.array([0.2, 0.1]), np.array([0.7, 0.9]))
        f = unit_uniform(2.0)
        f_sub = f.restrict(sub)
        seeds = 300
        inside = [int(np.sum(sub.mask(sample_poisson(f, 100.0, seed=s).cloud.points)))
                  for s in range(seeds)]
        direct = [len(sample_poisson(f_sub, 100.0, seed=10_000 + s)) for s in range(seeds)]
        mean_target = 100.0 * 2.0 * sub.volume()
        se = math.sqrt(2 * mean_target / seeds)
        assert abs(np.mean(inside) - np.mean(direct)) <= 3 * se

    def test_seed_determinism(self):
        f = IntensityFunction.two_bump()
        r1 = sample_poisson(f, 500.0, seed=99)
        r2 = sample_poisson(f, 500.0, seed=99)
        assert r1.cloud == r2.cloud
        r3 = sample_poisson(f, 500.0, seed=100)
        assert r3.cloud != r1.cloud

    def test_nonuniform_thinning_density(self):
        # ramp-product mass on the unit square is 1, so counts average the scale
        f = IntensityFunction.ramp_product(UNIT2)
        scale, seeds = 200.0, 300
        counts = [len(sample_poisson(f, scale, seed=s)) for s in range(seeds)]
        se = math.sqrt(scale / seeds)
        assert abs(np.mean(counts) - scale) <= 3 * se


class TestSuperpose:
    def test_union_with_empty(self):
        a = sample_poisson(unit_uniform(), 100.0, seed=5)
        empty = sample_poisson(unit_uniform(0.0), 100.0, seed=6)
        merged = superpose(a, empty)
        assert merged.cloud == a.cloud
        assert merged.intensity_scale == a.intensity_scale + empty.intensity_scale

    def test_intensities_add(self):
        seeds = 300
        counts = []
        for s in range(seeds):
            a = sample_poisson(unit_uniform(0.4), 1000.0, seed=derive_seed(s, 0))
            b = sample_poisson(unit_uniform(0.6), 1000.0, seed=derive_seed(s, 1))
            counts.append(len(superpose(a, b)))
        se = math.sqrt(1000.0 / seeds)
        assert abs(np.mean(counts) - 1000.0) <= 3 * se

    def test_chain_length_monotone_under_union(self):
        for s in range(5):
            a = sample_poisson(unit_uniform(), 400.0, seed=derive_seed(s, 0))
            b = sample_poisson(unit_uniform(), 400.0, seed=derive_seed(s, 1))
            assert chain_length(a.cloud) <= chain_length(superpose(a, b).cloud)

    def test_dimension_mismatch(self):
        a = sample_poisson(unit_uniform(), 10.0, seed=1)
        f3 = IntensityFunction.uniform(1.0, Box(np.zeros(3), np.ones(3)))
        b = sample_poisson(f3, 10.0, seed=2)
        with pytest.raises(DimensionMismatchError):
            superpose(a, b)


class TestThin:
    def test_keep_all(self):
        p = sample_poisson(unit_uniform(), 300.0, seed=3)
        assert thin(p, 1.0, seed=4).cloud == p.cloud

    def test_keep_none(self):
        p = sample_poisson(unit_uniform(), 300.0, seed=3)
        assert len(thin(p, 0.0, seed=4)) == 0

    def test_invalid_probability(self):
        p = sample_poisson(unit_uniform(), 50.0, seed=3)
        with pytest.raises(ValueError, match="occupied point"):
            thin(p, lambda x: 1.5, seed=4)
        with pytest.raises(ValueError):
            thin(p, -0.1, seed=4)

    def test_thinning_theorem_two_sample(self):
        # intensity 2 thinned by 1/2 matches direct unit-intensity sampling
        seeds, scale = 300, 2000.0
        thinned = []
        direct = []
        for s in range(seeds):
            p = sample_poisson(unit_uniform(2.0), scale, seed=derive_seed(s, 0))
            thinned.append(len(thin(p, 0.5, seed=derive_seed(s, 1))))
            direct.append(len(sample_poisson(unit_uniform(1.0), scale, seed=derive_seed(s, 2))))
        se = math.sqrt(2 * scale / seeds)
        assert abs(np.mean(thinned) - np.mean(direct)) <= 3 * se

    def test_location_dependent_thinning_mean(self):
        # keep probability x1 over intensity 2 has mean scale * integral(2 x1) = scale
        seeds, scale = 300, 500.0
        counts = [len(thin(sample_poisson(unit_uniform(2.0), scale, seed=derive_seed(s, 0)),
                           lambda x: float(x[0]), seed=derive_seed(s, 1)))
                  for s in range(seeds)]
        se = math.sqrt(scale / seeds)
        assert abs(np.mean(counts) - scale) <= 3 * se

    def test_determinism(self):
        p = sample_poisson(unit_uniform(), 500.0, seed=8)
        assert thin(p, 0.3, seed=9).cloud == thin(p, 0.3, seed=9).cloud


class TestGrowCoupled:
    def test_nestedness_exact(self):
        scales = [100.0, 250.0, 700.0]
        reals = grow_coupled(unit_uniform(), scales, seed=12)
        assert [r.intensity_scale for r in reals] == scales
        for smaller, bigger in zip(reals, reals[1:]):
            n = len(smaller)
            assert np.array_equal(bigger.cloud.points[:n], smaller.cloud.points)

    def test_monotone_chain_counts_along_scales(self):
        reals = grow_coupled(unit_uniform(), [50.0, 150.0, 400.0, 900.0], seed=13)
        for x in ([0.4, 0.9], [1.0, 1.0], [0.2, 0.3]):
            counts = [depth_at(r.cloud, x) for r in reals]
            assert all(b >= a for a, b in zip(counts, counts[1:]))

    def test_single_scale_marginal_mean(self):
        seeds, scale = 300, 400.0
        grown = [len(grow_coupled(unit_uniform(), [scale], seed=s)[0]) for s in range(seeds)]
        direct = [len(sample_poisson(unit_uniform(), scale, seed=derive_seed(s, 99)))
                  for s in range(seeds)]
        se = math.sqrt(2 * scale / seeds)
        assert abs(np.mean(grown) - np.mean(direct)) <= 3 * se

    def test_marginal_mean_at_each_scale(self):
        seeds = 200
        scales = [50.0, 300.0]
        last = [len(grow_coupled(unit_uniform(), scales, seed=s)[-1]) for s in range(seeds)]
        se = math.sqrt(scales[-1] / seeds)
        assert abs(np.mean(last) - scales[-1]) <= 3 * se

    def test_non_monotone_scales_rejected(self):
        with pytest.raises(ValueError):
            grow_coupled(unit_uniform(), [100.0, 100.0], seed=1)
        with pytest.raises(ValueError):
            grow_coupled(unit_uniform(), [100.0, 50.0], seed=1)
        with pytest.raises(ValueError):
            grow_coupled(unit_uniform(), [], seed=1)

    def test_determinism(self):
        a = grow_coupled(unit_uniform(), [100.0, 200.0], seed=77)
        b = grow_coupled(unit_uniform(), [100.0, 200.0], seed=77)
        assert all(x.cloud == y.cloud for x, y in zip(a, b))


class TestRngPlumbing:
    def test_streams_differ(self):
        s1 = philox_stream(1, 1).uniform(size=4)
        s2 = philox_stream(1, 2).uniform(size=4)
        assert not np.allclose(s1, s2)

    def test_derive_seed_stable(self):
        assert derive_seed(42, 1, 2) == derive_seed(42, 1, 2)
        assert derive_seed(42, 1, 2) != derive_seed(42, 2, 1)
        assert derive_seed(-1, 0) == derive_seed(-1, 0)  # negative seeds are masked
