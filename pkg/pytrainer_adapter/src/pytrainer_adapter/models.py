"""Small CPU-friendly models.

No model hub is assumed reachable: the classifier uses a deterministic
frozen text encoder (hashed character trigrams through a fixed random
projection) with a trainable linear head, and the generator is a compact
character-level GRU sequence-to-sequence model trained from scratch.
"""

from __future__ import annotations

import zlib

import torch
from torch import nn

# fixed backbone seed: the frozen encoder is identical across runs and hosts
_ENCODER_SEED = 0x5EED

PAD, BOS, EOS, UNK = 0, 1, 2, 3
MAX_CHARS = 128


def featurize(text: str, dim: int) -> torch.Tensor:
    """L2-normalized hashed character-trigram counts."""
    padded = f"^{text.lower()}$"
    vec = torch.zeros(dim)
    for i in range(len(padded) - 2):
        bucket = zlib.crc32(padded[i : i + 3].encode("utf-8")) % dim
        vec[bucket] += 1.0
    norm = vec.norm()
    return vec / norm if norm > 0 else vec


class FrozenEncoder(nn.Module):
    """Fixed random projection with tanh; never updated during fine-tuning."""

    def __init__(self, feature_dim: int, hidden_dim: int):
        super().__init__()
        gen = torch.Generator().manual_seed(_ENCODER_SEED)
        weight = torch.randn(feature_dim, hidden_dim, generator=gen) / feature_dim**0.5
        self.register_buffer("weight", weight)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.tanh(x @ self.weight)


class ClassifierHead(nn.Module):
    def __init__(self, hidden_dim: int, n_labels: int):
        super().__init__()
        self.linear = nn.Linear(hidden_dim, n_labels)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return self.linear(h)


class CharVocab:
    def __init__(self, texts):
        chars = sorted({c for t in texts for c in t})
        self.index = {c: i + 4 for i, c in enumerate(chars)}
        self.chars = {i + 4: c for i, c in enumerate(chars)}
        self.size = len(chars) + 4

    def encode(self, text: str) -> list[int]:
        return [self.index.get(c, UNK) for c in text[:MAX_CHARS]]

    def decode(self, ids) -> str:
        return "".join(self.chars.get(i, "") for i in ids)


class CharSeq2Seq(nn.Module):
    def __init__(self, vocab_size: int, hidden_dim: int, embed_dim: int = 32):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, embed_dim, padding_idx=PAD)
        self.encoder = nn.GRU(embed_dim, hidden_dim, batch_first=True)
        self.decoder = nn.GRU(embed_dim, hidden_dim, batch_first=True)
        self.out = nn.Linear(hidden_dim, vocab_size)

    def encode(self, src: torch.Tensor) -> torch.Tensor:
        _, state = self.encoder(self.embed(src))
        return state

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        state = self.encode(src)
        output, _ = self.decoder(self.embed(tgt_in), state)
        return self.out(output)

    @torch.no_grad()
    def greedy_decode(self, src: torch.Tensor, max_len: int = MAX_CHARS) -> list[int]:
        state = self.encode(src.unsqueeze(0))
        token = torch.tensor([[BOS]])
        ids = []
        for _ in range(max_len):
            output, state = self.decoder(self.embed(token), state)
            token = self.out(output[:, -1]).argmax(dim=-1, keepdim=True)
            if token.item() == EOS:
                break
            ids.append(token.item())
        return ids
