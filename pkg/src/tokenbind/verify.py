"""Numerical verification suites.

Each ``verify_*`` function returns a JSON-ready verdict dict with a boolean
``passed`` plus the statistics behind it. Failures are recorded in the
verdict, never raised.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import binomtest

from .atm import MixingSet
from .attention import ProjectionWeights, cross_attention_maps, kl_divergence
from .numerics import make_rng, softmax_rows, trial_seed
from .optim import BindingConfig, evaluate, grad_total_loss
from .pipeline import make_instance, run_pipeline
from .prompt import NounPhrase, PromptAnnotation, inter_np_pairs

KL_GRID = tuple(round(0.01 * k, 2) for k in range(1, 21))


def _random_weights(rng, d_latent: int, d_text: int, d: int) -> ProjectionWeights:
    return ProjectionWeights(
        rng.normal(size=(d_latent, d)) / math.sqrt(d_latent),
        rng.normal(size=(d_text, d)) / math.sqrt(d_text),
        rng.normal(size=(d_text, d)) / math.sqrt(d_text),
    )


def kl_quadratic_form(h, t, w: ProjectionWeights, i: int, delta) -> float:
    """Second-order prediction of ``KL(A_i || A_j)`` for ``t_j = t_i + delta``.

    ``0.5 * (delta W_K) Sigma (delta W_K)^T / d`` where ``Sigma`` is the
    covariance of the query rows under ``A_i``. The ``1/d`` comes from the
    ``1/sqrt(d)`` logit scaling.
    """
    a = cross_attention_maps(h, t, w).a[:, i]
    q = h @ w.w_q
    centered = q - a @ q
    sigma = (centered * a[:, None]).T @ centered
    v = np.asarray(delta) @ w.w_k
    return float(0.5 * v @ sigma @ v / w.d)


def verify_kl_growth(
    trials: int = 100,
    seed: int = 0,
    *,
    max_n: int = 32,
    max_l: int = 8,
    max_d: int = 16,
    grid=KL_GRID,
    rel_tol: float = 0.05,
    min_quadratic_rate: float = 0.95,
) -> dict:
    """KL between two token maps grows as the tokens move apart.

    Per trial: random latents, projections and tokens, a unit direction
    ``delta``, and ``t_j = t_i + s * delta`` over the increasing ``grid``.
    Checks that KL is exactly 0 at ``s = 0``, non-decreasing along the grid,
    and within ``rel_tol`` of the quadratic form at the smallest ``s``.
    """
    grid = sorted(grid)
    records = []
    for trial in range(trials):
        rng = make_rng(trial_seed(seed, trial))
        n = int(rng.integers(4, max_n + 1))
        l_tok = int(rng.integers(2, max_l + 1))
        d = int(rng.integers(2, max_d + 1))
        h = rng.normal(size=(n, d))
        t = rng.normal(size=(l_tok, d))
        w = _random_weights(rng, d, d, d)
        delta = rng.normal(size=d)
        delta /= np.linalg.norm(delta)
        i, j = 0, 1

        def kl_at(s):
            tt = t.copy()
            tt[j] = tt[i] + s * delta
            a = cross_attention_maps(h, tt, w).a
            return kl_divergence(a[:, i], a[:, j]), tt

        kl0, base = kl_at(0.0)
        kls = [kl_at(s)[0] for s in grid]
        monotone = all(b >= a for a, b in zip(kls, kls[1:]))
        predicted = kl_quadratic_form(h, base, w, i, grid[0] * delta)
        rel = abs(predicted - kls[0]) / kls[0] if kls[0] > 0 else math.inf
        records.append(
            {
                "trial": trial,
                "dims": [n, l_tok, d],
                "kl_at_zero": kl0,
                "monotone": monotone,
                "kl_smallest": kls[0],
                "quadratic_form": predicted,
                "rel_error": rel,
            }
        )
    mono = sum(r["monotone"] for r in records)
    zero = sum(r["kl_at_zero"] == 0.0 for r in records)
    quad = sum(r["rel_error"] < rel_tol for r in records)
    return {
        "suite": "kl-growth",
        "trials": trials,
        "seed": seed,
        "zero_at_origin": zero,
        "monotone": mono,
        "quadratic_match": quad,
        "max_rel_error": max((r["rel_error"] for r in records), default=0.0),
        "passed": mono == trials and zero == trials and quad >= math.ceil(min_quadratic_rate * trials),
        "records": records,
    }


def _scaled_gap(t_i, t_j, lam_i, lam_j):
    """``||lam_i t_i - lam_j t_j||^2 - ||t_i - t_j||^2`` row-wise."""
    scaled = lam_i[:, None] * t_i - lam_j[:, None] * t_j
    plain = t_i - t_j
    return np.einsum("ij,ij->i", scaled, scaled) - np.einsum("ij,ij->i", plain, plain)


def _separation_pairs(rng, trials: int, dim: int, cos_low: float, cos_high: float, norm_slack: float):
    g = rng.normal(size=(trials, 2, dim))
    u1 = g[:, 0] / np.linalg.norm(g[:, 0], axis=1, keepdims=True)
    u2 = g[:, 1] - np.einsum("ij,ij->i", g[:, 1], u1)[:, None] * u1
    u2 /= np.linalg.norm(u2, axis=1, keepdims=True)
    r = rng.uniform(0.1, 10.0, size=trials)
    ratio = 1.0 + rng.uniform(-norm_slack, norm_slack, size=trials)
    cos = rng.uniform(cos_low, cos_high, size=trials)
    sin = np.sqrt(1.0 - cos**2)
    t_i = r[:, None] * u1
    t_j = (r * ratio)[:, None] * (cos[:, None] * u1 + sin[:, None] * u2)
    return t_i, t_j, cos


def verify_scale_separation(trials: int = 100_000, seed: int = 0, *, dim: int = 8, norm_slack: float = 0.01) -> dict:
    """Scaling two tokens by factors > 1 pushes them apart.

    Samples pairs with norms within ``norm_slack`` of each other and
    ``cos < 0.5``, scale factors in ``(1, 3]``. Also checks exact equality
    for unit factors and, without asserting, counts violations outside the
    assumptions (``cos >= 0.5`` with factors close to 1).
    """
    rng = make_rng(seed)
    t_i, t_j, _ = _separation_pairs(rng, trials, dim, -1.0, 0.5, norm_slack)
    lam_i = 1.0 + 2.0 * (1.0 - rng.random(trials))
    lam_j = 1.0 + 2.0 * (1.0 - rng.random(trials))
    gap = _scaled_gap(t_i, t_j, lam_i, lam_j)
    ones = np.ones(trials)
    unit_gap = _scaled_gap(t_i, t_j, ones, ones)

    b_i, b_j, b_cos = _separation_pairs(rng, trials, dim, 0.5, 1.0, norm_slack)
    b_lam_i = 1.0 + 0.1 * (1.0 - rng.random(trials))
    b_lam_j = 1.0 + 0.1 * (1.0 - rng.random(trials))
    b_gap = _scaled_gap(b_i, b_j, b_lam_i, b_lam_j)
    bad = np.flatnonzero(b_gap <= 0.0)

    holds = int(np.sum(gap > 0.0))
    equal = int(np.sum(unit_gap == 0.0))
    return {
        "suite": "scale-separation",
        "trials": trials,
        "seed": seed,
        "strict_inequality": holds,
        "min_gap": float(gap.min()) if trials else 0.0,
        "unit_scale_equal": equal,
        "boundary_counterexamples": int(bad.size),
        "boundary_examples": [
            {"cos": float(b_cos[k]), "lambda_i": float(b_lam_i[k]), "lambda_j": float(b_lam_j[k]), "gap": float(b_gap[k])}
            for k in bad[:5]
        ],
        "passed": holds == trials and equal == trials,
    }


def chi_mean(dim: int) -> float:
    """Mean of the chi distribution with ``dim`` degrees of freedom."""
    return math.sqrt(2.0) * math.exp(math.lgamma((dim + 1) / 2.0) - math.lgamma(dim / 2.0))


def norm_sum_stats(t_i, t_j) -> dict:
    """Sample means of ``||t_i||``, ``||t_j||``, ``||t_i + t_j||``, ``||t_i - t_j||``
    and the paired margins of the sum/difference norms over each single norm,
    in units of their standard error."""
    n_i = np.linalg.norm(t_i, axis=1)
    n_j = np.linalg.norm(t_j, axis=1)
    n_sum = np.linalg.norm(t_i + t_j, axis=1)
    n_diff = np.linalg.norm(t_i - t_j, axis=1)
    count = n_i.size

    def z(x, y):
        diff = x - y
        se = diff.std(ddof=1) / math.sqrt(count) if count > 1 else 0.0
        m = float(diff.mean())
        if se == 0.0:
            return math.inf if m > 0 else (0.0 if m == 0 else -math.inf)
        return float(m / se)

    return {
        "mean_norm_i": float(n_i.mean()),
        "mean_norm_j": float(n_j.mean()),
        "mean_norm_sum": float(n_sum.mean()),
        "mean_norm_diff": float(n_diff.mean()),
        "z_sum_over_i": z(n_sum, n_i),
        "z_sum_over_j": z(n_sum, n_j),
        "z_diff_over_i": z(n_diff, n_i),
        "z_diff_over_j": z(n_diff, n_j),
    }


def verify_norm_sum(dim: int = 64, samples: int = 100_000, seed: int = 0, *, mu_norm: float = 0.0) -> dict:
    """Adding or subtracting two Gaussian tokens gives a longer vector on average.

    Draws ``t_i, t_j ~ N(mu, I)`` with ``||mu|| = mu_norm``. Passes when all
    four margins exceed 3 standard errors and, for ``mu_norm == 0``, the
    ratio ``E||t_i + t_j|| / E||t_i||`` lies in ``[1.40, 1.43]`` (within 1%
    of sqrt 2) and ``E||t_i||`` is within 0.5% of the chi mean.
    """
    rng = make_rng(seed)
    mu = rng.normal(size=dim)
    mu *= mu_norm / np.linalg.norm(mu)
    t_i = mu + rng.normal(size=(samples, dim))
    t_j = mu + rng.normal(size=(samples, dim))
    stats = norm_sum_stats(t_i, t_j)
    margins_ok = all(stats[k] > 3.0 for k in ("z_sum_over_i", "z_sum_over_j", "z_diff_over_i", "z_diff_over_j"))
    out = {"suite": "norm-sum", "dim": dim, "samples": samples, "seed": seed, "mu_norm": mu_norm, **stats}
    out["margins_ok"] = margins_ok
    passed = margins_ok
    if mu_norm == 0.0:
        ratio = stats["mean_norm_sum"] / stats["mean_norm_i"]
        target = chi_mean(dim)
        chi_err = max(abs(stats["mean_norm_i"] - target), abs(stats["mean_norm_j"] - target)) / target
        out.update(
            ratio=ratio,
            ratio_in_band=1.40 <= ratio <= 1.43,
            sqrt2_rel_error=abs(ratio - math.sqrt(2.0)) / math.sqrt(2.0),
            chi_mean=target,
            chi_rel_error=chi_err,
        )
        passed = passed and out["ratio_in_band"] and out["sqrt2_rel_error"] < 0.01 and chi_err < 0.005
    out["passed"] = bool(passed)
    return out


def norm_ratio(a, b) -> float:
    """``2 | ||a|| - ||b|| | / (||a|| + ||b||)``."""
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    return 2.0 * abs(na - nb) / (na + nb)


def assumption_statistics(t, annotation: PromptAnnotation) -> dict:
    """Norm ratio and cosine per inter-NP object pair, plus the token mean's norm."""
    t = np.asarray(t, dtype=np.float64)
    pairs = []
    for i, j in inter_np_pairs(annotation):
        pairs.append(
            {
                "pair": [i, j],
                "norm_ratio": norm_ratio(t[i], t[j]),
                "cosine": float(np.dot(t[i], t[j]) / (np.linalg.norm(t[i]) * np.linalg.norm(t[j]))),
            }
        )
    norms = np.linalg.norm(t, axis=1)
    return {
        "pairs": pairs,
        "fraction_cos_below_half": (sum(p["cosine"] < 0.5 for p in pairs) / len(pairs)) if pairs else None,
        "mean_vector_norm": float(np.linalg.norm(t.mean(axis=0))),
        "token_norms": [float(x) for x in norms],
        "min_token_norm": float(norms.min()),
    }


def verify_assumptions(prompts: int = 600, seed: int = 0, *, dim: int = 64) -> dict:
    """Synthetic analog of the real-encoder assumption histograms.

    Builds ``prompts`` zero-mean Gaussian instances of dimension ``dim`` and
    checks that the mean inter-NP cosine is within 3 standard errors of 0.
    """
    cosines, ratios = [], []
    for k in range(prompts):
        inst = make_instance(trial_seed(seed, k), d_text=dim, mean_norm=0.0)
        stats = assumption_statistics(inst.tokens, inst.annotation)
        cosines += [p["cosine"] for p in stats["pairs"]]
        ratios += [p["norm_ratio"] for p in stats["pairs"]]
    c = np.asarray(cosines)
    se = float(c.std(ddof=1) / math.sqrt(c.size))
    mean = float(c.mean())
    return {
        "suite": "assumptions",
        "prompts": prompts,
        "dim": dim,
        "seed": seed,
        "mean_cosine": mean,
        "cosine_se": se,
        "fraction_cos_below_half": float(np.mean(c < 0.5)),
        "median_norm_ratio": float(np.median(ratios)),
        "passed": bool(abs(mean) < 3.0 * se),
    }


def random_gradient_problem(rng):
    """A small random problem exercising every gradient path.

    Two or three noun phrases of one to three tokens separated by single
    function words, an EOT slot, zero to two PAD slots, and mixing matrices
    perturbed away from identity.
    """
    n_np = int(rng.integers(2, 4))
    nps, pos = [], 1
    for _ in range(n_np):
        size = int(rng.integers(1, 4))
        nps.append(NounPhrase(pos, pos + size, pos + size - 1, tuple(range(pos, pos + size - 1))))
        pos += size + 1
    n_pad = int(rng.integers(0, 3))
    annotation = PromptAnnotation(pos + n_pad, tuple(nps), pos - 1, tuple(range(pos, pos + n_pad)))
    n = int(rng.integers(4, 9))
    d_text, d_latent, d = (int(rng.integers(3, 9)) for _ in range(3))
    t = rng.normal(size=(annotation.token_count, d_text))
    h = rng.normal(size=(n, d_latent))
    w = _random_weights(rng, d_latent, d_text, d)
    m = MixingSet([np.eye(np_.size) + 0.3 * rng.normal(size=(np_.size, np_.size)) for np_ in nps], 10.0)
    lam = float(rng.uniform(0.0, 1.0))
    config = BindingConfig(lambda_=lam, optimize_latents=True, optimize_aux_tokens=True)
    return t, h, w, annotation, m, config


def rel_error(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(t, h, w, annotation, m, config, step: float = 1e-5, floor: float = 1e-4) -> dict:
    """Compare analytic gradients with central differences on every coordinate.

    Relative error uses ``max(|analytic|, |numeric|, floor)`` as the
    denominator; below ``floor`` the comparison is effectively absolute
    (central differences carry about 1e-10 of round-off at this step).
    """
    grads = grad_total_loss(t, h, w, annotation, m, config)
    lam = config.lambda_

    def f(tt, hh, mm):
        return evaluate(tt, hh, w, annotation, mm, lam).total

    worst = 0.0
    count = 0
    for k, g in enumerate(grads.d_mixing):
        for idx in np.ndindex(g.shape):
            mp, mm = m.copy(), m.copy()
            mp.matrices[k][idx] += step
            mm.matrices[k][idx] -= step
            fd = (f(t, h, mp) - f(t, h, mm)) / (2 * step)
            worst = max(worst, rel_error(g[idx], fd, floor))
            count += 1
    if grads.d_latents is not None:
        for idx in np.ndindex(h.shape):
            hp, hm = h.copy(), h.copy()
            hp[idx] += step
            hm[idx] -= step
            fd = (f(t, hp, m) - f(t, hm, m)) / (2 * step)
            worst = max(worst, rel_error(grads.d_latents[idx], fd, floor))
            count += 1
    if grads.d_aux is not None:
        for r, row in enumerate(annotation.aux_indices):
            for c in range(t.shape[1]):
                tp, tm = t.copy(), t.copy()
                tp[row, c] += step
                tm[row, c] -= step
                fd = (f(tp, h, m) - f(tm, h, m)) / (2 * step)
                worst = max(worst, rel_error(grads.d_aux[r, c], fd, floor))
                count += 1
    return {"max_rel_error": float(worst), "coordinates": count}


def verify_gradients(instances: int = 50, seed: int = 0, *, step: float = 1e-5, tol: float = 1e-5) -> dict:
    records = []
    for k in range(instances):
        rng = make_rng(trial_seed(seed, k))
        res = gradient_check(*random_gradient_problem(rng), step=step)
        records.append({"instance": k, **res})
    worst = max((r["max_rel_error"] for r in records), default=0.0)
    return {
        "suite": "gradients",
        "instances": instances,
        "seed": seed,
        "step": step,
        "tolerance": tol,
        "coordinates": sum(r["coordinates"] for r in records),
        "max_rel_error": float(worst),
        "passed": bool(worst < tol),
        "records": records,
    }


def reweight_equivalence_check(h, t, w: ProjectionWeights, alpha: float, token_index: int) -> dict:
    """Compare attention re-weighting with scaling the token's key and value.

    Left side: ``softmax(Q K^T / sqrt d)`` with column ``token_index``
    multiplied by ``alpha``, times ``V``. Right side: the same token's key
    and value rows multiplied by ``alpha`` before attention. The two agree
    only approximately; the report gives their elementwise divergence.
    """
    h = np.asarray(h, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    scale = np.ones(t.shape[0])
    scale[token_index] = alpha
    q = h @ w.w_q
    k = t @ w.w_k
    v = t @ w.w_v
    root_d = math.sqrt(w.d)
    left = (softmax_rows(q @ k.T / root_d) * scale) @ v
    right = softmax_rows(q @ (scale[:, None] * k).T / root_d) @ (scale[:, None] * v)
    diff = np.abs(left - right)
    denom = np.abs(left) + np.abs(right)
    rel = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    return {
        "alpha": alpha,
        "token_index": token_index,
        "max_abs_divergence": float(diff.max()),
        "max_rel_divergence": float(rel.max()),
        "mean_rel_divergence": float(rel.mean()),
        "finite": bool(np.all(np.isfinite(left)) and np.all(np.isfinite(right))),
    }


def verify_reweight(seed: int = 0, alpha: float = 1.5) -> dict:
    """Unit weight gives zero divergence; a single token gives exact equality."""
    inst = make_instance(seed)
    obj = inst.annotation.object_indices[0]
    unit = reweight_equivalence_check(inst.latents, inst.tokens, inst.weights, 1.0, obj)
    single = reweight_equivalence_check(inst.latents, inst.tokens[obj : obj + 1], inst.weights, alpha, 0)
    scaled = reweight_equivalence_check(inst.latents, inst.tokens, inst.weights, alpha, obj)
    return {
        "suite": "reweight",
        "seed": seed,
        "unit_alpha": unit,
        "single_token": single,
        "scaled": scaled,
        "passed": unit["max_abs_divergence"] == 0.0 and single["max_abs_divergence"] == 0.0 and scaled["finite"],
    }


def sign_test_pvalue(successes: int, trials: int) -> float:
    """One-sided binomial sign test against a fair coin."""
    return float(binomtest(successes, trials, 0.5, alternative="greater").pvalue)


def verify_pipeline_geometry(seeds: int = 20, seed: int = 0, alpha: float = 0.05, config: BindingConfig | None = None) -> dict:
    """Directional geometry claims of the full pipeline across seeds.

    For every instance seed the median deltas of inter-NP MSE, object-token
    norm and inter-NP angle are recorded; each direction must pass a
    one-sided sign test at level ``alpha``.
    """
    wins = {"mse": 0, "norm": 0, "angle": 0}
    medians = []
    for k in range(seeds):
        s = trial_seed(seed, k)
        inst = make_instance(s)
        cfg = config or BindingConfig(seed=s)
        report = run_pipeline(inst.tokens, inst.latents, inst.weights, inst.annotation, cfg).report
        medians.append(report.deltas["medians"])
        for key in wins:
            wins[key] += report.deltas["median_increased"][key]
    pvalues = {key: sign_test_pvalue(v, seeds) for key, v in wins.items()}
    return {
        "suite": "pipeline_geometry",
        "seeds": seeds,
        "increases": wins,
        "pvalues": pvalues,
        "medians": medians,
        "passed": all(p < alpha for p in pvalues.values()),
    }

