"""Cross-attention semantic binding through token-embedding geometry.

Orthogonalize token embeddings across noun phrases, mix tokens inside each
phrase with learnable matrices, and optimize the mixing (and latents) so
that object attention maps become condensed and mutually distinct.
"""

from .atm import MixingSet, apply_mixing, clamp_mixing, init_mixing, tome_merge_matrix, tome_mixing_set
from .attention import (
    AttentionState,
    ProjectionWeights,
    bhattacharyya_coeff,
    cross_attention_maps,
    kl_divergence,
    shannon_entropy,
)
from .capo import CausalityMode, TokenSet, apply_capo, lowdin_orthogonalize, schmidt_project_out
from .geometry import GeometrySnapshot, cosine_angle, pairwise_mse, scale_embeddings, snapshot
from .numerics import inv_sqrt_psd, make_rng, softmax_rows, sym_eig
from .optim import BindingConfig, LossBreakdown, grad_total_loss, optimize_binding, total_loss
from .pipeline import BindingReport, geometry_report, make_instance, run_pipeline
from .prompt import NounPhrase, PromptAnnotation, inter_np_pairs, load_annotation, parse_template_prompt

__version__ = "0.1.0"
