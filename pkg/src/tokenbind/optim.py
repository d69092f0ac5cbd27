"""Entropy + Bhattacharyya objective, its exact gradient, and gradient descent.

The forward chain is::

    T --(mixing M)--> T* --W_K--> K
    H --W_Q--> Q
    logits = Q K^T / sqrt(d) --row softmax--> P --column normalize--> A
    loss = sum_k H(A_k) + lambda * sum_(m,n) BC(A_m, A_n)

Gradients are written out as vector-Jacobian products for each link so
every step can be checked against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .atm import DEFAULT_CLAMP, MixingSet, apply_mixing, clamp_mixing, init_mixing
from .attention import (
    AttentionState,
    ProjectionWeights,
    bhattacharyya_coeff,
    cross_attention_maps,
    shannon_entropy,
)
from .capo import CausalityMode, TokenSet
from .errors import ConfigError, DegenerateColumn, EmptyObjectSet, NonFiniteLoss
from .numerics import as_matrix
from .prompt import PromptAnnotation, inter_np_pairs

GRAD_EPS = 1e-12
MAX_HALVINGS = 40


@dataclass(frozen=True)
class BindingConfig:
    """Run settings. ``lambda_`` is serialized under the key ``"lambda"``."""

    lambda_: float = 0.01
    eta: float = 0.05
    steps: int = 200
    clamp_bound: float = DEFAULT_CLAMP
    causality: CausalityMode = CausalityMode.CAUSAL
    optimize_latents: bool = True
    optimize_aux_tokens: bool | None = None  # None: on for causal, off for non-causal
    seed: int = 0
    capo: bool = True
    capo_tokens: TokenSet = TokenSet.OBJECTS
    strict_complement: bool = False
    backtracking: bool = False

    def __post_init__(self):
        object.__setattr__(self, "causality", CausalityMode(self.causality))
        object.__setattr__(self, "capo_tokens", TokenSet(self.capo_tokens))
        if not (isinstance(self.steps, int) and self.steps >= 0):
            raise ConfigError("steps must be an integer >= 0")
        if not (math.isfinite(self.lambda_) and self.lambda_ >= 0):
            raise ConfigError("lambda must be >= 0")
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ConfigError("eta must be > 0")
        if not (math.isfinite(self.clamp_bound) and self.clamp_bound > 0):
            raise ConfigError("clamp_bound must be > 0")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def aux_enabled(self) -> bool:
        if self.optimize_aux_tokens is None:
            return self.causality is CausalityMode.CAUSAL
        return self.optimize_aux_tokens

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        d["causality"] = self.causality.value
        d["capo_tokens"] = self.capo_tokens.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BindingConfig":
        names = {f.name for f in fields(cls)} - {"lambda_"} | {"lambda"}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs = dict(d)
        if "lambda" in kwargs:
            kwargs["lambda_"] = kwargs.pop("lambda")
        for key in ("lambda_", "eta", "clamp_bound"):
            if key in kwargs:
                if isinstance(kwargs[key], bool) or not isinstance(kwargs[key], (int, float)):
                    raise ConfigError(f"{key.rstrip('_')} must be a number")
                kwargs[key] = float(kwargs[key])
        for key in ("optimize_latents", "capo", "strict_complement", "backtracking"):
            if key in kwargs and not isinstance(kwargs[key], bool):
                raise ConfigError(f"{key} must be a boolean")
        if "optimize_aux_tokens" in kwargs and not isinstance(kwargs["optimize_aux_tokens"], (bool, type(None))):
            raise ConfigError("optimize_aux_tokens must be a boolean or null")
        for key in ("steps", "seed"):
            if key in kwargs and (isinstance(kwargs[key], bool) or not isinstance(kwargs[key], int)):
                raise ConfigError(f"{key} must be an integer")
        try:
            return cls(**kwargs)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class LossBreakdown:
    ent: float
    bhat: float
    total: float

    def to_dict(self) -> dict:
        return {"ent": self.ent, "bhat": self.bhat, "total": self.total}


def total_loss(state: AttentionState, annotation: PromptAnnotation, lam: float) -> LossBreakdown:
    objects = annotation.object_indices
    if not objects:
        raise EmptyObjectSet("annotation has no object tokens")
    ent = sum(shannon_entropy(state.a[:, k]) for k in objects)
    bhat = sum(bhattacharyya_coeff(state.a[:, m], state.a[:, n]) for m, n in inter_np_pairs(annotation))
    ent, bhat = float(ent), float(bhat)
    return LossBreakdown(ent, bhat, ent + lam * bhat)


@dataclass
class GradientBundle:
    d_mixing: list[np.ndarray]
    d_latents: np.ndarray | None = None
    d_aux: np.ndarray | None = None  # rows for annotation.aux_indices


def evaluate(t, h, w: ProjectionWeights, annotation: PromptAnnotation, m: MixingSet, lam: float) -> LossBreakdown:
    """Loss of the full forward pass for the given parameters."""
    return total_loss(cross_attention_maps(h, apply_mixing(t, annotation, m), w), annotation, lam)


def _grad_wrt_a(a: np.ndarray, annotation: PromptAnnotation, lam: float) -> np.ndarray:
    g = np.zeros_like(a)
    for k in annotation.object_indices:
        g[:, k] -= np.log(np.maximum(a[:, k], GRAD_EPS)) + 1.0
    for m, n in inter_np_pairs(annotation):
        sm = np.sqrt(np.maximum(a[:, m], GRAD_EPS))
        sn = np.sqrt(np.maximum(a[:, n], GRAD_EPS))
        g[:, m] += lam * 0.5 * sn / sm
        g[:, n] += lam * 0.5 * sm / sn
    return g


def grad_total_loss(
    t,
    h,
    w: ProjectionWeights,
    annotation: PromptAnnotation,
    m: MixingSet,
    config: BindingConfig,
) -> GradientBundle:
    """Analytic gradient of the total loss w.r.t. mixing matrices, latents and EOT/PAD rows."""
    t = as_matrix(t, "t")
    h = as_matrix(h, "h")
    t_mix = apply_mixing(t, annotation, m)
    q = h @ w.w_q
    k = t_mix @ w.w_k
    scale = 1.0 / math.sqrt(w.d)
    state = cross_attention_maps(h, t_mix, w)
    p, a = state.p, state.a

    g_a = _grad_wrt_a(a, annotation, config.lambda_)
    # column normalization a = p / colsum(p)
    col = p.sum(axis=0)
    g_p = (g_a - np.sum(g_a * a, axis=0)) / col
    # row softmax
    g_logits = p * (g_p - np.sum(g_p * p, axis=1, keepdims=True))
    g_q = (g_logits @ k) * scale
    g_k = (g_logits.T @ q) * scale
    g_tmix = g_k @ w.w_k.T

    d_mixing = [g_tmix[np_.start:np_.end] @ t[np_.start:np_.end].T for np_ in annotation.nps]
    d_latents = g_q @ w.w_q.T if config.optimize_latents else None
    aux = annotation.aux_indices
    d_aux = g_tmix[aux].copy() if (config.aux_enabled and aux) else None
    return GradientBundle(d_mixing, d_latents, d_aux)


@dataclass
class BindingResult:
    embeddings: np.ndarray  # apply_mixing(tokens, annotation, mixing)
    tokens: np.ndarray  # input tokens with optimized EOT/PAD rows
    mixing: MixingSet
    latents: np.ndarray
    trace: list[LossBreakdown]
    events: list[dict] = field(default_factory=list)


def _trial_loss(t, h, w, annotation, m, lam) -> LossBreakdown:
    """Loss at a candidate point; a column that underflows to zero counts as non-finite."""
    try:
        return evaluate(t, h, w, annotation, m, lam)
    except DegenerateColumn:
        return LossBreakdown(math.nan, math.nan, math.nan)


def _step(t, h, m, grads: GradientBundle, eta: float, annotation: PromptAnnotation):
    m_new = clamp_mixing(MixingSet([mat - eta * g for mat, g in zip(m.matrices, grads.d_mixing)], m.clamp_bound))
    h_new = h - eta * grads.d_latents if grads.d_latents is not None else h
    t_new = t
    if grads.d_aux is not None:
        t_new = t.copy()
        t_new[annotation.aux_indices] -= eta * grads.d_aux
    return t_new, h_new, m_new


def optimize_binding(
    t,
    h,
    w: ProjectionWeights,
    annotation: PromptAnnotation,
    config: BindingConfig,
    mixing: MixingSet | None = None,
) -> BindingResult:
    """Projected gradient descent on the mixing matrices (plus latents and EOT/PAD rows if enabled).

    Mixing entries are clamped to ``[-clamp_bound, clamp_bound]`` after
    every step. With ``config.backtracking`` a step that raises the loss is
    retried with a halved step size (the halving persists), and rejected if
    no halving helps, so the trace never increases.

    Raises:
        NonFiniteLoss: carrying the index of the offending step (without
            backtracking; with it, such a step is halved or rejected).
    """
    t = as_matrix(t, "t").copy()
    h = as_matrix(h, "h").copy()
    m = mixing.copy() if mixing is not None else init_mixing(annotation, config.clamp_bound)
    lam = config.lambda_

    cur = evaluate(t, h, w, annotation, m, lam)
    if not math.isfinite(cur.total):
        raise NonFiniteLoss(0, cur.total)
    trace = [cur]
    events: list[dict] = []
    eta = config.eta

    for step in range(1, config.steps + 1):
        grads = grad_total_loss(t, h, w, annotation, m, config)
        cand = _step(t, h, m, grads, eta, annotation)
        new = _trial_loss(*cand[:2], w, annotation, cand[2], lam)
        if config.backtracking:
            halvings = 0
            while not (math.isfinite(new.total) and new.total <= cur.total) and halvings < MAX_HALVINGS:
                eta *= 0.5
                halvings += 1
                cand = _step(t, h, m, grads, eta, annotation)
                new = _trial_loss(*cand[:2], w, annotation, cand[2], lam)
            if halvings:
                events.append({"event": "step_halved", "step": step, "eta": eta, "halvings": halvings})
            if not (math.isfinite(new.total) and new.total <= cur.total):
                events.append({"event": "step_rejected", "step": step})
                trace.append(cur)
                continue
        if not math.isfinite(new.total):
            raise NonFiniteLoss(step, new.total)
        t, h, m = cand
        cur = new
        trace.append(cur)

    return BindingResult(apply_mixing(t, annotation, m), t, m, h, trace, events)
