"""End-to-end binding pipeline, synthetic instances, and JSON reports."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import embx
from .atm import init_mixing
from .attention import ProjectionWeights, bhattacharyya_coeff, cross_attention_maps, shannon_entropy
from .capo import apply_capo
from .errors import SchemaError, ShapeMismatch, StageError, TokenBindError
from .geometry import snapshot
from .numerics import as_matrix, make_rng
from .optim import BindingConfig, evaluate, optimize_binding, total_loss
from .prompt import PromptAnnotation, inter_np_pairs, load_annotation, parse_template_prompt

DEFAULT_PROMPT = "a red apple and a blue bowl"
REPORT_KEYS = ("config", "geometry_before", "geometry_after", "deltas", "loss_trace", "attention_summary", "events")


@dataclass
class Instance:
    tokens: np.ndarray
    latents: np.ndarray
    weights: ProjectionWeights
    annotation: PromptAnnotation


def make_instance(
    seed: int = 0,
    prompt: str = DEFAULT_PROMPT,
    *,
    n_latent: int = 16,
    d_text: int = 16,
    d_latent: int = 16,
    d: int = 8,
    mean_norm: float = 1.5,
    eot: bool = True,
    pad: int = 2,
) -> Instance:
    """Synthetic cross-attention problem.

    Token rows are ``mu + N(0, I)`` with a shared mean of norm ``mean_norm``
    (small next to the typical row norm ``sqrt(d_text)``), latents are
    standard normal and projections are Gaussian with ``1/sqrt(fan_in)``
    scaling.
    """
    annotation = parse_template_prompt(prompt, eot=eot, pad=pad)
    rng = make_rng(seed)
    mu = rng.normal(size=d_text)
    mu *= mean_norm / np.linalg.norm(mu)
    tokens = mu + rng.normal(size=(annotation.token_count, d_text))
    latents = rng.normal(size=(n_latent, d_latent))
    weights = ProjectionWeights(
        rng.normal(size=(d_latent, d)) / math.sqrt(d_latent),
        rng.normal(size=(d_text, d)) / math.sqrt(d_text),
        rng.normal(size=(d_text, d)) / math.sqrt(d_text),
    )
    return Instance(tokens, latents, weights, annotation)


def _median(xs) -> float:
    return float(np.median(xs)) if len(xs) else 0.0


def geometry_report(before, after, annotation: PromptAnnotation) -> dict:
    """Before/after geometry of the object tokens and the per-pair deltas."""
    before = as_matrix(before, "before")
    after = as_matrix(after, "after")
    if before.shape != after.shape:
        raise ShapeMismatch(f"before {before.shape} vs after {after.shape}")
    pairs = inter_np_pairs(annotation)
    snap_b = snapshot(before, pairs)
    snap_a = snapshot(after, pairs)
    objects = annotation.object_indices
    mse = [{"pair": list(p), "value": va - vb} for (p, vb), (_, va) in zip(snap_b.mse, snap_a.mse)]
    angle = [{"pair": list(p), "value": va - vb} for (p, vb), (_, va) in zip(snap_b.angles, snap_a.angles)]
    norm = [{"token": k, "value": snap_a.norms[k] - snap_b.norms[k]} for k in objects]
    medians = {
        "mse": _median([e["value"] for e in mse]),
        "norm": _median([e["value"] for e in norm]),
        "angle": _median([e["value"] for e in angle]),
    }
    increased = {k: v > 0.0 for k, v in medians.items()}
    return {
        "geometry_before": snap_b.to_dict(),
        "geometry_after": snap_a.to_dict(),
        "deltas": {
            "mse": mse,
            "angle": angle,
            "norm": norm,
            "medians": medians,
            "median_increased": increased,
            "all_increased": all(increased.values()),
        },
    }


def attention_summary(t, h, w: ProjectionWeights, annotation: PromptAnnotation, lam: float) -> dict:
    state = cross_attention_maps(h, t, w)
    loss = total_loss(state, annotation, lam)
    return {
        "entropy": [{"token": k, "value": shannon_entropy(state.a[:, k])} for k in annotation.object_indices],
        "bhattacharyya": [
            {"pair": [m, n], "value": bhattacharyya_coeff(state.a[:, m], state.a[:, n])}
            for m, n in inter_np_pairs(annotation)
        ],
        "loss": loss.to_dict(),
    }


@dataclass
class BindingReport:
    config: dict
    geometry_before: dict
    geometry_after: dict
    deltas: dict
    loss_trace: list[dict]
    attention_summary: dict
    events: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "BindingReport":
        if set(d) != set(REPORT_KEYS):
            raise SchemaError(f"report keys {sorted(d)} != {sorted(REPORT_KEYS)}")
        return cls(**{k: d[k] for k in REPORT_KEYS})

    @classmethod
    def from_json(cls, text: str) -> "BindingReport":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid report JSON: {exc}") from None

    def consistent(self, tol: float = 1e-12) -> bool:
        """Every recorded loss satisfies ``total == ent + lambda * bhat``."""
        lam = self.config["lambda"]
        records = list(self.loss_trace)
        records += [self.attention_summary[k]["loss"] for k in ("before", "after")]
        return all(abs(r["total"] - (r["ent"] + lam * r["bhat"])) <= tol for r in records)


@dataclass
class PipelineResult:
    embeddings: np.ndarray
    tokens: np.ndarray
    latents: np.ndarray
    report: BindingReport


def run_pipeline(t, h, w: ProjectionWeights, annotation: PromptAnnotation, config: BindingConfig) -> PipelineResult:
    """CAPO (if enabled), then mixing optimization (if ``steps > 0``), then the report.

    Errors from a stage are re-raised as ``StageError`` labelled with it.
    """
    stage = "input"
    try:
        t = as_matrix(t, "tokens")
        h = as_matrix(h, "latents")
        if t.shape[0] != annotation.token_count:
            raise ShapeMismatch(f"{t.shape[0]} token rows, annotation has {annotation.token_count}")
        events: list[dict] = []
        stage = "capo"
        t_capo = t
        if config.capo:
            capo = apply_capo(
                t,
                annotation,
                config.causality,
                token_set=config.capo_tokens,
                strict_complement=config.strict_complement,
            )
            t_capo = capo.embeddings
            events += capo.events
        stage = "optimize"
        if config.steps > 0:
            result = optimize_binding(t_capo, h, w, annotation, config)
            out, tokens, latents = result.embeddings, result.tokens, result.latents
            trace = result.trace
            events += result.events
        else:
            out, tokens, latents = t_capo, t_capo, h
            trace = [evaluate(t_capo, h, w, annotation, init_mixing(annotation, config.clamp_bound), config.lambda_)]
        stage = "report"
        geo = geometry_report(t, out, annotation)
        report = BindingReport(
            config=config.to_dict(),
            geometry_before=geo["geometry_before"],
            geometry_after=geo["geometry_after"],
            deltas=geo["deltas"],
            loss_trace=[x.to_dict() for x in trace],
            attention_summary={
                "before": attention_summary(t, h, w, annotation, config.lambda_),
                "after": attention_summary(out, latents, w, annotation, config.lambda_),
            },
            events=events,
        )
    except TokenBindError as exc:
        raise StageError(stage, exc) from exc
    return PipelineResult(out, tokens, latents, report)


# file-level entry points used by the CLI

INSTANCE_FILES = {
    "tokens": "tokens.embx",
    "latents": "latents.embx",
    "w_q": "w_q.embx",
    "w_k": "w_k.embx",
    "w_v": "w_v.embx",
    "annotation": "annotation.json",
}


def save_instance(inst: Instance, out_dir, dtype: int = embx.F64) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in INSTANCE_FILES.items()}
    embx.save_embx(paths["tokens"], inst.tokens, dtype)
    embx.save_embx(paths["latents"], inst.latents, dtype)
    embx.save_embx(paths["w_q"], inst.weights.w_q, dtype)
    embx.save_embx(paths["w_k"], inst.weights.w_k, dtype)
    embx.save_embx(paths["w_v"], inst.weights.w_v, dtype)
    paths["annotation"].write_text(json.dumps(inst.annotation.to_dict(), sort_keys=True, indent=2) + "\n")
    return paths


def load_weights(w_q, w_k, w_v) -> ProjectionWeights:
    return ProjectionWeights(embx.load_embx(w_q).matrix, embx.load_embx(w_k).matrix, embx.load_embx(w_v).matrix)


def resolve_annotation(annotation_path=None, prompt: str | None = None, token_count: int | None = None) -> PromptAnnotation:
    """Annotation from a JSON file, or parsed from a template prompt.

    A parsed prompt is padded with one EOT slot and as many PAD slots as
    needed to reach ``token_count``.
    """
    if annotation_path is not None:
        return load_annotation(Path(annotation_path).read_bytes())
    if prompt is None:
        raise SchemaError("need an annotation file or a template prompt")
    base = parse_template_prompt(prompt)
    if token_count is None or token_count == base.token_count:
        return base
    extra = token_count - base.token_count
    if extra < 0:
        raise ShapeMismatch(f"prompt has {base.token_count} words but only {token_count} token rows")
    return parse_template_prompt(prompt, eot=True, pad=extra - 1)


def run_pipeline_files(
    tokens_path,
    latents_path,
    weight_paths,
    config: BindingConfig,
    out_dir,
    annotation_path=None,
    prompt: str | None = None,
) -> PipelineResult:
    """Run from EMBX/JSON inputs; writes tokens, latents and ``report.json``.

    Output matrices keep the dtype of the corresponding input file.
    """
    tok_file = embx.load_embx(tokens_path)
    lat_file = embx.load_embx(latents_path)
    w = load_weights(*weight_paths)
    annotation = resolve_annotation(annotation_path, prompt, tok_file.matrix.shape[0])
    result = run_pipeline(tok_file.matrix, lat_file.matrix, w, annotation, config)
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    embx.save_embx(out / "tokens.embx", result.embeddings, tok_file.dtype)
    embx.save_embx(out / "latents.embx", result.latents, lat_file.dtype)
    (out / "report.json").write_text(result.report.to_json())
    return result

