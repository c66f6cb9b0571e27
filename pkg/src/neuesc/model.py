"""Encoder trunk and task heads for multitask fine-tuning.

The forward path is: encoder -> per-token linear projection -> layer norm ->
task heads. Classification heads read the trunk state at the sequence-start
token; the masked-token head reads all trunk states. A self-contained tiny
encoder (2 layers, hidden 32, vocabulary 1,000) ships here so the whole test
suite runs without downloading checkpoints; production encoders are loaded
through `transformers` when installed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import TASK_NUM_CLASSES


class ModelBuildError(Exception):
    """Model could not be constructed; message names the offending layer."""


@dataclass(frozen=True)
class EncoderHandle:
    name: str
    hidden_size: int
    vocab_size: int
    max_length: int
    mask_token_id: int
    special_token_ids: frozenset[int]

    def __post_init__(self):
        if not 0 <= self.mask_token_id < self.vocab_size:
            raise ValueError("mask_token_id outside the vocabulary")


@dataclass(frozen=True)
class HeadSpec:
    task_name: str
    kind: str  # linear | cnn | mlm
    num_classes: int
    cnn_window_sizes: tuple[int, ...] = (2, 3, 4)
    cnn_filters_per_window: int = 128

    def __post_init__(self):
        if self.kind not in ("linear", "cnn", "mlm"):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.num_classes <= 0:
            raise ValueError("num_classes must be positive")


@dataclass
class MultitaskModelConfig:
    encoder: EncoderHandle
    heads: list[HeadSpec]
    trunk_hidden: int | None = None  # defaults to encoder hidden size
    trunk_dropout: float = 0.1

    def resolved_trunk_hidden(self) -> int:
        return self.trunk_hidden or self.encoder.hidden_size

    def to_dict(self) -> dict:
        return {
            "encoder": {
                "name": self.encoder.name,
                "hidden_size": self.encoder.hidden_size,
                "vocab_size": self.encoder.vocab_size,
                "max_length": self.encoder.max_length,
                "mask_token_id": self.encoder.mask_token_id,
                "special_token_ids": sorted(self.encoder.special_token_ids),
            },
            "trunk_hidden": self.trunk_hidden,
            "trunk_dropout": self.trunk_dropout,
            "heads": [
                {
                    "task_name": h.task_name,
                    "kind": h.kind,
                    "num_classes": h.num_classes,
                    "cnn_window_sizes": list(h.cnn_window_sizes),
                    "cnn_filters_per_window": h.cnn_filters_per_window,
                }
                for h in self.heads
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MultitaskModelConfig":
        enc = payload["encoder"]
        return cls(
            encoder=EncoderHandle(
                name=enc["name"],
                hidden_size=enc["hidden_size"],
                vocab_size=enc["vocab_size"],
                max_length=enc["max_length"],
                mask_token_id=enc["mask_token_id"],
                special_token_ids=frozenset(enc["special_token_ids"]),
            ),
            trunk_hidden=payload.get("trunk_hidden"),
            trunk_dropout=payload.get("trunk_dropout", 0.1),
            heads=[
                HeadSpec(
                    task_name=h["task_name"],
                    kind=h["kind"],
                    num_classes=h["num_classes"],
                    cnn_window_sizes=tuple(h.get("cnn_window_sizes", (2, 3, 4))),
                    cnn_filters_per_window=h.get("cnn_filters_per_window", 128),
                )
                for h in payload["heads"]
            ],
        )


# ---------------------------------------------------------------------------
# Tiny test encoder
# ---------------------------------------------------------------------------

TINY_PAD, TINY_CLS, TINY_SEP, TINY_MASK, TINY_UNK = 0, 1, 2, 3, 4
_TINY_SPECIALS = frozenset({TINY_PAD, TINY_CLS, TINY_SEP, TINY_MASK, TINY_UNK})


class TinyTokenizer:
    """Deterministic hash-bucket word tokenizer (no vocabulary files)."""

    def __init__(self, vocab_size: int = 1000):
        self.vocab_size = vocab_size
        self._n_buckets = vocab_size - len(_TINY_SPECIALS)

    def token_id(self, word: str) -> int:
        digest = hashlib.md5(word.lower().encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "big") % self._n_buckets
        return len(_TINY_SPECIALS) + bucket

    def encode_batch(
        self, texts: Sequence[str], max_length: int
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (token ids, attention mask), both batch x L."""
        rows = []
        for text in texts:
            ids = [TINY_CLS]
            for word in text.split()[: max_length - 2]:
                ids.append(self.token_id(word))
            ids.append(TINY_SEP)
            rows.append(ids)
        length = max(len(r) for r in rows) if rows else 2
        ids = torch.full((len(rows), length), TINY_PAD, dtype=torch.long)
        mask = torch.zeros((len(rows), length), dtype=torch.bool)
        for i, row in enumerate(rows):
            ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
            mask[i, : len(row)] = True
        return ids, mask


class _SelfAttention(nn.Module):
    def __init__(self, hidden: int, n_heads: int):
        super().__init__()
        assert hidden % n_heads == 0
        self.n_heads = n_heads
        self.head_dim = hidden // n_heads
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.out = nn.Linear(hidden, hidden)

    def forward(self, x: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        b, L, h = x.shape
        qkv = self.qkv(x).view(b, L, 3, self.n_heads, self.head_dim)
        q, k, v = qkv.unbind(dim=2)
        q = q.transpose(1, 2)  # b, heads, L, d
        k = k.transpose(1, 2)
        v = v.transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        bias = torch.where(attention_mask[:, None, None, :], 0.0, -1e9).to(x.dtype)
        probs = torch.softmax(scores + bias, dim=-1)
        ctx = (probs @ v).transpose(1, 2).reshape(b, L, h)
        return self.out(ctx)


class _EncoderLayer(nn.Module):
    def __init__(self, hidden: int, n_heads: int, ffn_hidden: int, dropout: float):
        super().__init__()
        self.attn = _SelfAttention(hidden, n_heads)
        self.norm1 = nn.LayerNorm(hidden)
        self.ffn = nn.Sequential(
            nn.Linear(hidden, ffn_hidden), nn.GELU(), nn.Linear(ffn_hidden, hidden)
        )
        self.norm2 = nn.LayerNorm(hidden)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, attention_mask):
        x = self.norm1(x + self.dropout(self.attn(x, attention_mask)))
        return self.norm2(x + self.dropout(self.ffn(x)))


class TinyEncoder(nn.Module):
    """Small bidirectional transformer used for desk-scale verification."""

    def __init__(
        self,
        vocab_size: int = 1000,
        hidden_size: int = 32,
        num_layers: int = 2,
        n_heads: int = 4,
        max_length: int = 128,
        dropout: float = 0.1,
    ):
        super().__init__()
        self.hidden_size = hidden_size
        self.word_embeddings = nn.Embedding(vocab_size, hidden_size)
        self.position_embeddings = nn.Embedding(max_length, hidden_size)
        self.input_norm = nn.LayerNorm(hidden_size)
        self.input_dropout = nn.Dropout(dropout)
        self.layers = nn.ModuleList(
            _EncoderLayer(hidden_size, n_heads, 2 * hidden_size, dropout)
            for _ in range(num_layers)
        )

    def embed(self, input_ids: torch.Tensor) -> torch.Tensor:
        """Output of the initial embedding layer (the surface SMART perturbs)."""
        return self.word_embeddings(input_ids)

    def forward_from_embeddings(
        self, embeddings: torch.Tensor, attention_mask: torch.Tensor
    ) -> torch.Tensor:
        positions = torch.arange(embeddings.shape[1], device=embeddings.device)
        x = embeddings + self.position_embeddings(positions)[None]
        x = self.input_dropout(self.input_norm(x))
        for layer in self.layers:
            x = layer(x, attention_mask)
        return x

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor):
        return self.forward_from_embeddings(self.embed(input_ids), attention_mask)


class HFEncoderAdapter(nn.Module):
    """Wraps a `transformers` encoder behind the same three-method surface."""

    def __init__(self, model):
        super().__init__()
        self.model = model
        self.hidden_size = model.config.hidden_size

    def embed(self, input_ids):
        return self.model.get_input_embeddings()(input_ids)

    def forward_from_embeddings(self, embeddings, attention_mask):
        out = self.model(
            inputs_embeds=embeddings, attention_mask=attention_mask.to(torch.long)
        )
        return out.last_hidden_state

    def forward(self, input_ids, attention_mask):
        out = self.model(
            input_ids=input_ids, attention_mask=attention_mask.to(torch.long)
        )
        return out.last_hidden_state


class HFTokenizerAdapter:
    def __init__(self, tokenizer):
        self.tokenizer = tokenizer

    def encode_batch(self, texts, max_length):
        enc = self.tokenizer(
            list(texts),
            padding=True,
            truncation=True,
            max_length=max_length,
            return_tensors="pt",
        )
        return enc["input_ids"], enc["attention_mask"].to(torch.bool)


@dataclass
class EncoderBundle:
    handle: EncoderHandle
    module: nn.Module
    tokenizer: object


def load_encoder(name: str, max_length: int = 256) -> EncoderBundle:
    """Resolve an encoder by name: 'tiny' or a `transformers` checkpoint id."""
    if name == "tiny":
        vocab_size, hidden, layers = 1000, 32, 2
        tiny_max = min(max_length, 128)
        handle = EncoderHandle(
            name="tiny",
            hidden_size=hidden,
            vocab_size=vocab_size,
            max_length=tiny_max,
            mask_token_id=TINY_MASK,
            special_token_ids=_TINY_SPECIALS,
        )
        module = TinyEncoder(
            vocab_size=vocab_size, hidden_size=hidden, num_layers=layers,
            max_length=tiny_max,
        )
        return EncoderBundle(handle, module, TinyTokenizer(vocab_size))

    try:
        from transformers import AutoModel, AutoTokenizer
    except ImportError:
        raise ModelBuildError(
            f"encoder {name!r} requires the 'transformers' package "
            "(pip install neuesc[hub])"
        ) from None
    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModel.from_pretrained(name)
    except Exception as exc:
        raise ModelBuildError(f"failed to load encoder checkpoint {name!r}: {exc}")
    handle = EncoderHandle(
        name=name,
        hidden_size=model.config.hidden_size,
        vocab_size=model.config.vocab_size,
        max_length=min(max_length, getattr(model.config, "max_position_embeddings", max_length)),
        mask_token_id=tokenizer.mask_token_id,
        special_token_ids=frozenset(tokenizer.all_special_ids),
    )
    return EncoderBundle(handle, HFEncoderAdapter(model), HFTokenizerAdapter(tokenizer))


# ---------------------------------------------------------------------------
# Heads and the multitask model
# ---------------------------------------------------------------------------


class LinearHead(nn.Module):
    def __init__(self, trunk_hidden: int, num_classes: int):
        super().__init__()
        self.out = nn.Linear(trunk_hidden, num_classes)

    def forward(self, trunk_states, attention_mask):
        return self.out(trunk_states[:, 0])


class CnnHead(nn.Module):
    """Parallel convolutions over token states with masked max-over-time."""

    def __init__(self, trunk_hidden, num_classes, window_sizes, filters_per_window):
        super().__init__()
        self.window_sizes = tuple(window_sizes)
        self.convs = nn.ModuleList(
            nn.Conv1d(trunk_hidden, filters_per_window, w) for w in self.window_sizes
        )
        self.out = nn.Linear(filters_per_window * len(self.window_sizes), num_classes)

    def forward(self, trunk_states, attention_mask):
        max_w = max(self.window_sizes)
        b, L, h = trunk_states.shape
        if L < max_w:  # zero-pad short sequences to the largest window
            pad = trunk_states.new_zeros(b, max_w - L, h)
            trunk_states = torch.cat([trunk_states, pad], dim=1)
            attention_mask = torch.cat(
                [attention_mask, attention_mask.new_zeros(b, max_w - L)], dim=1
            )
            L = max_w
        lengths = attention_mask.sum(dim=1)  # b
        x = trunk_states.transpose(1, 2)  # b, h, L
        pooled = []
        for w, conv in zip(self.window_sizes, self.convs):
            feats = torch.relu(conv(x))  # b, f, L - w + 1
            n_pos = feats.shape[-1]
            pos = torch.arange(n_pos, device=feats.device)
            valid = pos[None, :] + w <= lengths[:, None]  # window inside real span
            valid[~valid.any(dim=1), 0] = True  # degenerate rows: first window
            feats = feats.masked_fill(~valid[:, None, :], float("-inf"))
            pooled.append(feats.max(dim=-1).values)
        return self.out(torch.cat(pooled, dim=1))


class MlmHead(nn.Module):
    def __init__(self, trunk_hidden: int, vocab_size: int):
        super().__init__()
        self.transform = nn.Linear(trunk_hidden, trunk_hidden)
        self.norm = nn.LayerNorm(trunk_hidden)
        self.decoder = nn.Linear(trunk_hidden, vocab_size)

    def forward(self, selected_states):
        return self.decoder(self.norm(F.gelu(self.transform(selected_states))))


class MultitaskModel(nn.Module):
    def __init__(self, config: MultitaskModelConfig, encoder_module: nn.Module):
        super().__init__()
        self.config = config
        self.encoder = encoder_module
        trunk_hidden = config.resolved_trunk_hidden()
        self.trunk = nn.Linear(config.encoder.hidden_size, trunk_hidden)
        self.trunk_norm = nn.LayerNorm(trunk_hidden)
        self.trunk_dropout = nn.Dropout(config.trunk_dropout)
        self.heads = nn.ModuleDict()
        self.head_specs: dict[str, HeadSpec] = {}
        for spec in config.heads:
            self.heads[spec.task_name] = self._build_head(spec, trunk_hidden)
            self.head_specs[spec.task_name] = spec

    def _build_head(self, spec: HeadSpec, trunk_hidden: int) -> nn.Module:
        if spec.kind == "linear":
            return LinearHead(trunk_hidden, spec.num_classes)
        if spec.kind == "cnn":
            return CnnHead(
                trunk_hidden, spec.num_classes,
                spec.cnn_window_sizes, spec.cnn_filters_per_window,
            )
        return MlmHead(trunk_hidden, spec.num_classes)

    @property
    def classification_tasks(self) -> list[str]:
        return [n for n, s in self.head_specs.items() if s.kind != "mlm"]

    @property
    def mlm_task(self) -> str | None:
        return next((n for n, s in self.head_specs.items() if s.kind == "mlm"), None)

    def _check_task(self, task_name: str, mlm: bool):
        spec = self.head_specs.get(task_name)
        if spec is None:
            raise KeyError(f"model has no head named {task_name!r}")
        if mlm != (spec.kind == "mlm"):
            raise KeyError(f"head {task_name!r} is of kind {spec.kind!r}")

    def embed_inputs(self, input_ids: torch.Tensor) -> torch.Tensor:
        return self.encoder.embed(input_ids)

    def encode(
        self,
        input_ids: torch.Tensor | None,
        attention_mask: torch.Tensor,
        embeddings: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Shared trunk states (batch x L x trunk_hidden)."""
        if embeddings is None:
            embeddings = self.encoder.embed(input_ids)
        hidden = self.encoder.forward_from_embeddings(embeddings, attention_mask)
        return self.trunk_dropout(self.trunk_norm(self.trunk(hidden)))

    def forward_all(
        self,
        input_ids: torch.Tensor | None,
        attention_mask: torch.Tensor,
        tasks: Sequence[str],
        embeddings: torch.Tensor | None = None,
    ) -> dict[str, torch.Tensor]:
        """Logits for several classification heads from one encoder pass."""
        for task in tasks:
            self._check_task(task, mlm=False)
        states = self.encode(input_ids, attention_mask, embeddings)
        return {t: self.heads[t](states, attention_mask) for t in tasks}

    def forward_classification(
        self, input_ids, attention_mask, task_name: str, embeddings=None
    ) -> torch.Tensor:
        return self.forward_all(input_ids, attention_mask, [task_name], embeddings)[
            task_name
        ]

    def forward_mlm(
        self, input_ids, attention_mask, selected: torch.Tensor
    ) -> torch.Tensor:
        """Token logits at plan-selected positions (n_selected x vocab)."""
        task = self.mlm_task
        if task is None:
            raise KeyError("model has no masked-token head")
        if selected is None:
            raise ValueError("a masking plan must accompany a masked-token batch")
        states = self.encode(input_ids, attention_mask)
        return self.heads[task](states[selected])

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_multitask_model(
    config: MultitaskModelConfig,
    encoder_module: nn.Module | None = None,
    seed: int | None = None,
) -> MultitaskModel:
    """Validate the config and assemble the model.

    The encoder module is loaded from the handle's name unless one is passed
    in. With a seed, parameter initialization is reproducible.
    """
    names = [h.task_name for h in config.heads]
    if len(set(names)) != len(names):
        raise ModelBuildError(f"duplicate head task names in {names}")
    mlm_heads = [h for h in config.heads if h.kind == "mlm"]
    if len(mlm_heads) > 1:
        raise ModelBuildError("at most one masked-token head is allowed")
    for h in mlm_heads:
        if h.num_classes != config.encoder.vocab_size:
            raise ModelBuildError(
                f"head {h.task_name!r}: masked-token head must have "
                f"num_classes == vocab_size ({config.encoder.vocab_size}), "
                f"got {h.num_classes}"
            )
    for h in config.heads:
        expected = TASK_NUM_CLASSES.get(h.task_name)
        if expected is not None and h.num_classes != expected:
            raise ModelBuildError(
                f"head {h.task_name!r} must have {expected} classes, got {h.num_classes}"
            )
    if seed is not None:
        torch.manual_seed(seed)
    if encoder_module is None:
        bundle = load_encoder(config.encoder.name, config.encoder.max_length)
        if bundle.handle.hidden_size != config.encoder.hidden_size:
            raise ModelBuildError(
                f"encoder {config.encoder.name!r}: hidden size mismatch "
                f"({bundle.handle.hidden_size} != {config.encoder.hidden_size})"
            )
        encoder_module = bundle.module
    return MultitaskModel(config, encoder_module)
