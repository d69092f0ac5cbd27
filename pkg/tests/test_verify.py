import math

import numpy as np
import pytest
from scipy import stats

from tokenbind.attention import ProjectionWeights, cross_attention_maps, kl_divergence
from tokenbind.numerics import make_rng
from tokenbind.pipeline import make_instance
from tokenbind import verify


def test_quadratic_form_matches_small_step_kl():
    r = make_rng(11)
    n, l, d = 12, 4, 6
    h, t = r.normal(size=(n, d)), r.normal(size=(l, d))
    w = ProjectionWeights(*(r.normal(size=(d, d)) / math.sqrt(d) for _ in range(3)))
    delta = r.normal(size=d)
    s = 1e-3
    tt = t.copy()
    tt[1] = tt[0] + s * delta
    a = cross_attention_maps(h, tt, w).a
    # KL(s) = s^2 * curvature + O(s^3)
    curvature = kl_divergence(a[:, 0], a[:, 1]) / s**2
    assert verify.kl_quadratic_form(h, tt, w, 0, delta) == pytest.approx(curvature, rel=1e-2)


def test_kl_growth_small_run():
    v = verify.verify_kl_growth(trials=10, seed=3)
    assert v["passed"]
    assert v["zero_at_origin"] == v["monotone"] == 10
    assert all(r["dims"][0] <= 32 and r["dims"][1] <= 8 and r["dims"][2] <= 16 for r in v["records"])


def test_kl_growth_trials_are_order_independent():
    full = verify.verify_kl_growth(trials=4, seed=9)["records"]
    again = verify.verify_kl_growth(trials=2, seed=9)["records"]
    assert full[:2] == again


def test_scale_separation_small_run():
    v = verify.verify_scale_separation(trials=2000, seed=1)
    assert v["passed"] and v["strict_inequality"] == v["unit_scale_equal"] == 2000
    assert v["min_gap"] > 0


def test_chi_mean_oracle():
    for dim in (1, 8, 64):
        assert verify.chi_mean(dim) == pytest.approx(stats.chi(dim).mean(), rel=1e-12)


def test_norm_sum_degenerate_equality():
    t = make_rng(0).normal(size=(100, 8))
    s = verify.norm_sum_stats(t, np.zeros_like(t))
    assert s["mean_norm_sum"] == pytest.approx(s["mean_norm_i"], rel=1e-15)


def test_norm_sum_small_run():
    v = verify.verify_norm_sum(dim=16, samples=20_000, seed=2)
    assert v["passed"] and v["ratio_in_band"]


def test_norm_sum_with_small_mean():
    assert verify.verify_norm_sum(dim=16, samples=20_000, seed=2, mu_norm=0.5)["margins_ok"]


def test_norm_ratio():
    assert verify.norm_ratio([3.0, 4.0], [6.0, 8.0]) == pytest.approx(2 / 3)
    assert verify.norm_ratio([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_assumption_statistics_fields():
    inst = make_instance(0)
    s = verify.assumption_statistics(inst.tokens, inst.annotation)
    (pair,) = s["pairs"]
    i, j = pair["pair"]
    a, b = inst.tokens[i], inst.tokens[j]
    assert pair["cosine"] == pytest.approx(a @ b / np.linalg.norm(a) / np.linalg.norm(b))
    assert len(s["token_norms"]) == inst.annotation.token_count


def test_assumptions_small_run():
    assert verify.verify_assumptions(prompts=50, seed=1, dim=32)["passed"]


def test_gradients_small_run():
    v = verify.verify_gradients(instances=5, seed=4)
    assert v["passed"] and v["coordinates"] > 0


def test_rel_error_floor():
    assert verify.rel_error(1e-9, 2e-9, 1e-4) == pytest.approx(1e-5)
    assert verify.rel_error(2.0, 1.0, 1e-4) == 0.5


def test_reweight_checks():
    inst = make_instance(1)
    unit = verify.reweight_equivalence_check(inst.latents, inst.tokens, inst.weights, 1.0, 2)
    assert unit["max_abs_divergence"] == 0.0
    single = verify.reweight_equivalence_check(inst.latents, inst.tokens[2:3], inst.weights, 1.7, 0)
    assert single["max_abs_divergence"] == 0.0
    scaled = verify.reweight_equivalence_check(inst.latents, inst.tokens, inst.weights, 1.7, 2)
    assert scaled["finite"] and scaled["max_abs_divergence"] > 0
    assert verify.verify_reweight(0)["passed"]


def test_sign_test_oracle():
    assert verify.sign_test_pvalue(20, 20) == pytest.approx(2.0**-20, rel=1e-12)
    exact = sum(math.comb(20, k) for k in range(15, 21)) / 2**20
    assert verify.sign_test_pvalue(15, 20) == pytest.approx(exact, rel=1e-12)
    assert verify.sign_test_pvalue(10, 20) > 0.05
