"""Per-token KV-cache size and training FLOPs for MLA/GQA and MoE/dense models."""

from __future__ import annotations

import enum
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, UnknownPresetError, UnsupportedAttentionError
from .tomlio import load_toml


class AttentionKind(enum.Enum):
    MLA = "MLA"
    GQA = "GQA"
    MQA = "MQA"
    MHA = "MHA"


class FfnKind(enum.Enum):
    DENSE = "DENSE"
    MOE = "MOE"


@dataclass(frozen=True)
class AttentionConfig:
    kind: AttentionKind
    heads: int
    head_dim: int
    kv_heads: int = 0
    latent_dim: int = 0
    rope_dim: int = 0
    # MLA only: low-rank query compression (0 = full-rank query projection)
    q_latent_dim: int = 0
    # defaults to head_dim
    v_head_dim: int = 0

    def __post_init__(self):
        kind = AttentionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is AttentionKind.MQA and self.kv_heads == 0:
            object.__setattr__(self, "kv_heads", 1)
        if kind is AttentionKind.MHA and self.kv_heads == 0:
            object.__setattr__(self, "kv_heads", self.heads)
        if self.v_head_dim == 0:
            object.__setattr__(self, "v_head_dim", self.head_dim)
        _positive(self, "heads", "head_dim", "v_head_dim", prefix="attention")
        if kind is AttentionKind.MQA and self.kv_heads != 1:
            raise ConfigError("MQA requires kv_heads = 1", "attention.kv_heads")
        if kind is AttentionKind.MHA and self.kv_heads != self.heads:
            raise ConfigError("MHA requires kv_heads = heads", "attention.kv_heads")
        if kind is AttentionKind.GQA and self.kv_heads < 1:
            raise ConfigError("GQA requires kv_heads >= 1", "attention.kv_heads")
        if kind is AttentionKind.MLA and self.latent_dim <= 0:
            raise ConfigError("MLA requires latent_dim > 0", "attention.latent_dim")
        for name in ("kv_heads", "latent_dim", "rope_dim", "q_latent_dim"):
            if getattr(self, name) < 0:
                raise ConfigError("must be >= 0", f"attention.{name}")


@dataclass(frozen=True)
class FfnConfig:
    kind: FfnKind
    inter_dim: int
    n_routed_experts: int = 0
    n_shared_experts: int = 0
    top_k: int = 0
    expert_inter_dim: int = 0
    n_dense_layers: int = 0
    # SwiGLU-style gate: three projection matrices instead of two
    gated: bool = True

    def __post_init__(self):
        kind = FfnKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is FfnKind.MOE:
            _positive(self, "n_routed_experts", "top_k", "expert_inter_dim", prefix="ffn")
            if self.top_k > self.n_routed_experts:
                raise ConfigError("top_k exceeds n_routed_experts", "ffn.top_k")
            if self.n_dense_layers > 0:
                _positive(self, "inter_dim", prefix="ffn")
        else:
            _positive(self, "inter_dim", prefix="ffn")
        for name in ("n_shared_experts", "n_dense_layers"):
            if getattr(self, name) < 0:
                raise ConfigError("must be >= 0", f"ffn.{name}")


@dataclass(frozen=True)
class ModelConfig:
    name: str
    layers: int
    hidden_dim: int
    attention: AttentionConfig
    ffn: FfnConfig
    vocab: int = 0

    def __post_init__(self):
        _positive(self, "layers", "hidden_dim")
        if self.ffn.kind is FfnKind.MOE and self.ffn.n_dense_layers > self.layers:
            raise ConfigError("n_dense_layers exceeds layers", "ffn.n_dense_layers")

    @classmethod
    def from_dict(cls, name: str, d: dict) -> ModelConfig:
        d = dict(d)
        d.pop("base", None)
        try:
            att = AttentionConfig(**d.pop("attention"))
            ffn = FfnConfig(**d.pop("ffn"))
            return cls(name=d.pop("name", name), attention=att, ffn=ffn, **d)
        except KeyError as exc:
            raise ConfigError("missing section", f"models.{name}.{exc.args[0]}") from None
        except TypeError as exc:
            raise ConfigError(str(exc), f"models.{name}") from None
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise type(exc)(exc.message, f"models.{name}.{exc.field}") from None
            raise ConfigError(str(exc), f"models.{name}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attention"]["kind"] = self.attention.kind.value
        d["ffn"]["kind"] = self.ffn.kind.value
        return d


def _positive(obj, *names: str, prefix: str = "") -> None:
    for name in names:
        v = getattr(obj, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"must be a positive integer, got {v!r}", f"{prefix}.{name}" if prefix else name)


# ---------------------------------------------------------------- KV cache


def kv_bytes_per_token(cfg: ModelConfig, bytes_per_element: int = 2) -> int:
    """Cached bytes per token over all layers (BF16 => 2 bytes/element).

    MLA caches one compressed latent plus the decoupled RoPE key per layer;
    GQA/MQA/MHA cache K and V for every KV head.
    """
    att = cfg.attention
    if att.kind is AttentionKind.MLA:
        per_layer = att.latent_dim + att.rope_dim
    elif att.kind in (AttentionKind.GQA, AttentionKind.MQA, AttentionKind.MHA):
        per_layer = 2 * att.kv_heads * att.head_dim
    else:
        raise UnsupportedAttentionError(f"unsupported attention kind {att.kind}")
    return cfg.layers * per_layer * bytes_per_element


def kv_multiplier(cfg_a: ModelConfig, cfg_b: ModelConfig, bytes_per_element: int = 2) -> float:
    return kv_bytes_per_token(cfg_a, bytes_per_element) / kv_bytes_per_token(cfg_b, bytes_per_element)


# ------------------------------------------------------------------- FLOPs


@dataclass(frozen=True)
class FlopsBreakdown:
    """Training FLOPs per token (forward + backward), split by component."""

    model: str
    seq_len: int
    attention_proj: float
    attention_core: float
    dense_ffn: float
    moe_ffn: float
    components: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.attention_proj + self.attention_core + self.dense_ffn + self.moe_ffn

    @property
    def gflops(self) -> float:
        return self.total / 1e9


def _attention_macs(cfg: ModelConfig, ctx: float) -> tuple[float, float]:
    att, h = cfg.attention, cfg.hidden_dim
    if att.kind is AttentionKind.MLA:
        qk_dim = att.head_dim + att.rope_dim
        if att.q_latent_dim:
            q = h * att.q_latent_dim + att.q_latent_dim * att.heads * qk_dim
        else:
            q = h * att.heads * qk_dim
        kv_down = h * (att.latent_dim + att.rope_dim)
        kv_up = att.latent_dim * att.heads * (att.head_dim + att.v_head_dim)
        out = att.heads * att.v_head_dim * h
        proj = q + kv_down + kv_up + out
        core = att.heads * (qk_dim + att.v_head_dim) * ctx
    elif att.kind in (AttentionKind.GQA, AttentionKind.MQA, AttentionKind.MHA):
        q = h * att.heads * att.head_dim
        kv = h * att.kv_heads * (att.head_dim + att.v_head_dim)
        out = att.heads * att.v_head_dim * h
        proj = q + kv + out
        core = att.heads * (att.head_dim + att.v_head_dim) * ctx
    else:
        raise UnsupportedAttentionError(f"unsupported attention kind {att.kind}")
    return float(proj), float(core)


def train_flops_per_token(cfg: ModelConfig, seq_len: int = 4096) -> FlopsBreakdown:
    """Training FLOPs per token.

    Forward matmul FLOPs are 2 per MAC, backward is twice the forward. Only the
    routed top-k and shared experts count for MoE layers. Attention scores and
    value mixing use the causal average context ``seq_len / 2``. Embedding,
    LM head and router FLOPs are left out.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    train = 3 * 2  # (fwd + 2x bwd) * FLOPs per MAC
    proj, core = _attention_macs(cfg, seq_len / 2)
    ffn = cfg.ffn
    mats = 3 if ffn.gated else 2
    if ffn.kind is FfnKind.DENSE:
        dense_layers, moe_layers = cfg.layers, 0
    else:
        dense_layers, moe_layers = ffn.n_dense_layers, cfg.layers - ffn.n_dense_layers
    dense = dense_layers * mats * cfg.hidden_dim * ffn.inter_dim
    moe = moe_layers * (ffn.top_k + ffn.n_shared_experts) * mats * cfg.hidden_dim * ffn.expert_inter_dim
    comps = {
        "attention_proj_per_layer_macs": proj,
        "attention_core_per_layer_macs": core,
        "dense_layers": dense_layers,
        "moe_layers": moe_layers,
    }
    return FlopsBreakdown(
        model=cfg.name,
        seq_len=seq_len,
        attention_proj=train * cfg.layers * proj,
        attention_core=train * cfg.layers * core,
        dense_ffn=float(train * dense),
        moe_ffn=float(train * moe),
        components=comps,
    )


# ----------------------------------------------------------------- presets

PRESET_ENV = "CODESIGN_LAB_PRESETS"


def _read_preset_file(text_or_path) -> dict[str, dict]:
    data = load_toml(text_or_path)
    models = data.get("models", {})
    if not isinstance(models, dict):
        raise ConfigError("expected a table of models", "models")
    return models


def preset_dicts(extra_dir: str | os.PathLike | None = None) -> dict[str, dict]:
    """Raw preset tables: built-ins, then any ``*.toml`` under ``extra_dir``
    (default: ``$CODESIGN_LAB_PRESETS``). Later files override earlier names."""
    table = dict(_read_preset_file(resources.files("codesign_lab.data").joinpath("presets.toml").read_text()))
    extra = extra_dir if extra_dir is not None else os.environ.get(PRESET_ENV)
    if extra:
        for path in sorted(Path(extra).glob("*.toml")):
            table.update(_read_preset_file(path))
    return table


def _expand(name: str, table: dict, presets: dict[str, dict], seen: tuple[str, ...]) -> dict:
    """Follow ``base`` links (presets may build on other presets)."""
    base_name = table.get("base")
    if base_name is None:
        return table
    if base_name in seen:
        raise ConfigError(f"preset base cycle through {base_name!r}", f"models.{name}.base")
    if base_name not in presets:
        raise UnknownPresetError(f"no preset named {base_name!r}", f"models.{name}.base")
    parent = _expand(base_name, presets[base_name], presets, seen + (base_name,))
    merged = deep_merge(parent, table)
    merged.pop("base")
    return merged


def resolve_model(name: str, overrides: dict | None, presets: dict[str, dict]) -> ModelConfig:
    """Build a model from a preset, deep-merging ``overrides`` (which may name a ``base``)."""
    overrides = overrides or {}
    if "base" in overrides:
        merged = _expand(name, overrides, presets, (name,))
    elif name in presets:
        merged = deep_merge(_expand(name, presets[name], presets, (name,)), overrides)
    else:
        raise UnknownPresetError(f"no preset named {name!r}", "models")
    merged.pop("name", None)
    return ModelConfig.from_dict(name, merged)


def deep_merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def builtin_models() -> dict[str, ModelConfig]:
    presets = preset_dicts(extra_dir="")
    return {name: resolve_model(name, None, presets) for name in presets}
