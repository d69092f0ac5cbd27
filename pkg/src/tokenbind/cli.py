"""Command-line interface: ``tokenbind <command> ...``.

Exit codes: 0 success, 1 input/validation error, 2 numerical failure,
3 a verification suite failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import embx
from .attention import ProjectionWeights
from .capo import CausalityMode, TokenSet, apply_capo
from .errors import ConfigError, TokenBindError
from .optim import BindingConfig
from .pipeline import (
    INSTANCE_FILES,
    attention_summary,
    geometry_report,
    load_weights,
    make_instance,
    resolve_annotation,
    run_pipeline_files,
    save_instance,
)
from .prompt import DEFAULT_LEXICON, Lexicon, dump_annotation, parse_template_prompt
from . import verify

EXIT_VERIFY_FAILED = 3


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _load_config(args) -> BindingConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    config = BindingConfig.from_dict(data)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        overrides["causality"] = CausalityMode(args.mode)
    return dataclasses.replace(config, **overrides) if overrides else config


def _inputs(args) -> dict:
    """Input paths, defaulting to the files of ``--instance DIR``."""
    base = Path(args.instance) if getattr(args, "instance", None) else None
    paths = {}
    for key in ("tokens", "latents", "w_q", "w_k", "w_v", "annotation"):
        given = getattr(args, key, None)
        if given is None and base is not None:
            given = base / INSTANCE_FILES[key]
            if key == "annotation" and getattr(args, "prompt", None):
                given = None
        paths[key] = given
    return paths


def _need(paths: dict, *keys) -> None:
    missing = [k for k in keys if paths.get(k) is None]
    if missing:
        raise ConfigError(f"missing inputs: {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _weights(paths) -> ProjectionWeights:
    _need(paths, "w_q", "w_k", "w_v")
    return load_weights(paths["w_q"], paths["w_k"], paths["w_v"])


def cmd_gen(args) -> int:
    inst = make_instance(args.seed if args.seed is not None else 0, args.prompt, n_latent=args.latents_n)
    dtype = embx.F32 if args.dtype == "f32" else embx.F64
    paths = save_instance(inst, args.out, dtype)
    sys.stdout.write(_dumps({k: str(v) for k, v in paths.items()}))
    return 0


def cmd_parse(args) -> int:
    lexicon = DEFAULT_LEXICON
    if args.lexicon:
        lexicon = Lexicon.from_dict(json.loads(Path(args.lexicon).read_text()))
    annotation = parse_template_prompt(args.prompt, lexicon, eot=args.eot, pad=args.pad)
    _emit(dump_annotation(annotation), args.out)
    return 0


def cmd_orthogonalize(args) -> int:
    paths = _inputs(args)
    _need(paths, "tokens")
    tok = embx.load_embx(paths["tokens"])
    annotation = resolve_annotation(paths["annotation"], args.prompt, tok.matrix.shape[0])
    config = _load_config(args)
    result = apply_capo(
        tok.matrix,
        annotation,
        config.causality,
        token_set=TokenSet(args.token_set) if args.token_set else config.capo_tokens,
        strict_complement=args.strict or config.strict_complement,
    )
    if args.out is None:
        raise ConfigError("--out is required")
    embx.save_embx(args.out, result.embeddings, tok.dtype)
    report = geometry_report(tok.matrix, result.embeddings, annotation)
    report["events"] = result.events
    sys.stdout.write(_dumps(report))
    return 0


def cmd_optimize(args) -> int:
    paths = _inputs(args)
    _need(paths, "tokens", "latents", "w_q", "w_k", "w_v")
    if args.out is None:
        raise ConfigError("--out is required")
    config = _load_config(args)
    result = run_pipeline_files(
        paths["tokens"],
        paths["latents"],
        (paths["w_q"], paths["w_k"], paths["w_v"]),
        config,
        args.out,
        annotation_path=paths["annotation"],
        prompt=args.prompt,
    )
    final = result.report.loss_trace[-1]
    sys.stdout.write(_dumps({"out": str(args.out), "final_loss": final, "steps": len(result.report.loss_trace) - 1}))
    return 0


def cmd_attention(args) -> int:
    paths = _inputs(args)
    _need(paths, "tokens", "latents")
    tokens = embx.load_embx(paths["tokens"]).matrix
    latents = embx.load_embx(paths["latents"]).matrix
    annotation = resolve_annotation(paths["annotation"], args.prompt, tokens.shape[0])
    config = _load_config(args)
    summary = attention_summary(tokens, latents, _weights(paths), annotation, config.lambda_)
    _emit(_dumps(summary), args.out)
    return 0


def cmd_report(args) -> int:
    before = embx.load_embx(args.before).matrix
    after = embx.load_embx(args.after).matrix
    annotation = resolve_annotation(args.annotation, args.prompt, before.shape[0])
    _emit(_dumps(geometry_report(before, after, annotation)), args.out)
    return 0


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    suite = args.suite
    trials = args.trials
    if suite == "kl-growth":
        verdict = verify.verify_kl_growth(trials or 100, seed)
    elif suite == "scale-separation":
        verdict = verify.verify_scale_separation(trials or 100_000, seed)
    elif suite == "norm-sum":
        verdict = verify.verify_norm_sum(args.dim or 64, trials or 100_000, seed, mu_norm=args.mu_norm)
    elif suite == "assumptions":
        paths = _inputs(args)
        if paths["tokens"] is not None:
            tokens = embx.load_embx(paths["tokens"]).matrix
            annotation = resolve_annotation(paths["annotation"], args.prompt, tokens.shape[0])
            verdict = {"suite": "assumptions", **verify.assumption_statistics(tokens, annotation), "passed": True}
        else:
            verdict = verify.verify_assumptions(trials or 600, seed, dim=args.dim or 64)
    elif suite == "gradients":
        verdict = verify.verify_gradients(trials or 50, seed)
    elif suite == "reweight":
        verdict = verify.verify_reweight(seed, args.alpha)
    else:  # geometry
        verdict = verify.verify_pipeline_geometry(trials or 20, seed)
    _emit(_dumps(verdict), args.out)
    status = "PASS" if verdict["passed"] else "FAIL"
    print(f"{suite}: {status}", file=sys.stderr)
    return 0 if verdict["passed"] else EXIT_VERIFY_FAILED


def _add_common(p, *, inputs: bool = True) -> None:
    p.add_argument("--config", help="JSON config with BindingConfig keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--mode", choices=[m.value for m in CausalityMode])
    if inputs:
        p.add_argument("--instance", help="directory written by 'gen'")
        p.add_argument("--tokens", "--embeddings", dest="tokens")
        p.add_argument("--latents")
        p.add_argument("--w-q", dest="w_q")
        p.add_argument("--w-k", dest="w_k")
        p.add_argument("--w-v", dest="w_v")
        p.add_argument("--annotation")
        p.add_argument("--prompt", help="template prompt used instead of an annotation file")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tokenbind", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic instance")
    _add_common(p, inputs=False)
    p.add_argument("--prompt", default="a red apple and a blue bowl")
    p.add_argument("--latents-n", type=int, default=16)
    p.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("parse", help="parse a template prompt into an annotation")
    p.add_argument("prompt")
    p.add_argument("--lexicon", help='JSON {"adjectives": [...], "nouns": [...]}')
    p.add_argument("--eot", action="store_true")
    p.add_argument("--pad", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("orthogonalize", help="apply CAPO to token embeddings")
    _add_common(p)
    p.add_argument("--token-set", dest="token_set", choices=[t.value for t in TokenSet], default=None)
    p.add_argument("--strict", action="store_true", help="project onto the exact orthogonal complement")
    p.set_defaults(func=cmd_orthogonalize)

    p = sub.add_parser("optimize", help="run CAPO + mixing optimization and write a report")
    _add_common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("attention", help="entropy / Bhattacharyya summary of the attention maps")
    _add_common(p)
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("report", help="geometry deltas between two embedding files")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--annotation")
    p.add_argument("--prompt")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=["kl-growth", "scale-separation", "norm-sum", "assumptions", "gradients", "reweight", "geometry"])
    _add_common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--mu-norm", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=1.5)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TokenBindError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
