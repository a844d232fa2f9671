from .core import Adam, Dense, Dropout, Elu, Gelu, LayerNorm, Mlp, ParameterStore, Tanh, clip_grad_norm
from .attention import CausalSelfAttention, TransformerBlock, TransformerStack, positional_encoding
from .checkpoint import checkpoint_sha256, load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "Dense",
    "Dropout",
    "Elu",
    "Gelu",
    "LayerNorm",
    "Mlp",
    "ParameterStore",
    "Tanh",
    "clip_grad_norm",
    "CausalSelfAttention",
    "TransformerBlock",
    "TransformerStack",
    "positional_encoding",
    "checkpoint_sha256",
    "load_checkpoint",
    "save_checkpoint",
]
