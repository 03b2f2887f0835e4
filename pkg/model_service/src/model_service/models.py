"""Tiny transformer models: a seq2seq generator for template infilling and a
span scorer for extractive QA.

The span scorer realizes the null-answer convention structurally: logit
position 0 comes from the BOS encoder state, positions 1..N from the
document-region token states, and everything else (question tokens,
separator) is excluded. Softmaxing over that restricted set yields start/end
distributions that sum to 1 by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .vocab import Vocab


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 96
    nhead: int = 4
    num_layers: int = 2
    dim_feedforward: int = 192
    dropout: float = 0.0
    max_len: int = 512

    def to_dict(self) -> dict:
        return self.__dict__.copy()


class PositionalEncoding(nn.Module):
    def __init__(self, d_model: int, max_len: int):
        super().__init__()
        pe = torch.zeros(max_len, d_model)
        pos = torch.arange(max_len).unsqueeze(1).float()
        div = torch.exp(torch.arange(0, d_model, 2).float() * (-math.log(10000.0) / d_model))
        pe[:, 0::2] = torch.sin(pos * div)
        pe[:, 1::2] = torch.cos(pos * div)
        self.register_buffer("pe", pe)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B, T, D)
        return x + self.pe[: x.size(1)]


class Seq2SeqModel(nn.Module):
    """Encoder-decoder over whitespace tokens; greedy decoding."""

    def __init__(self, vocab: Vocab, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.embed = nn.Embedding(len(vocab), config.d_model, padding_idx=vocab.pad_id)
        self.pos = PositionalEncoding(config.d_model, config.max_len)
        self.transformer = nn.Transformer(
            d_model=config.d_model,
            nhead=config.nhead,
            num_encoder_layers=config.num_layers,
            num_decoder_layers=config.num_layers,
            dim_feedforward=config.dim_feedforward,
            dropout=config.dropout,
            batch_first=True,
        )
        self.out = nn.Linear(config.d_model, len(vocab))

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        src_pad = src.eq(self.vocab.pad_id)
        tgt_pad = tgt_in.eq(self.vocab.pad_id)
        causal = nn.Transformer.generate_square_subsequent_mask(tgt_in.size(1), device=src.device)
        hidden = self.transformer(
            self.pos(self.embed(src)),
            self.pos(self.embed(tgt_in)),
            tgt_mask=causal,
            src_key_padding_mask=src_pad,
            tgt_key_padding_mask=tgt_pad,
            memory_key_padding_mask=src_pad,
        )
        return self.out(hidden)

    @torch.no_grad()
    def greedy_decode(self, src_ids: list[int], max_new_tokens: int = 128) -> list[int]:
        self.eval()
        src = torch.tensor([src_ids], dtype=torch.long)
        out = [self.vocab.bos_id]
        for _ in range(max_new_tokens):
            tgt = torch.tensor([out], dtype=torch.long)
            logits = self.forward(src, tgt)
            nxt = int(logits[0, -1].argmax())
            out.append(nxt)
            if nxt == self.vocab.eos_id:
                break
        return out[1:]


class SpanScorerModel(nn.Module):
    """Encoder with linear start/end heads over BOS + selected positions."""

    def __init__(self, vocab: Vocab, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.embed = nn.Embedding(len(vocab), config.d_model, padding_idx=vocab.pad_id)
        self.pos = PositionalEncoding(config.d_model, config.max_len)
        layer = nn.TransformerEncoderLayer(
            d_model=config.d_model,
            nhead=config.nhead,
            dim_feedforward=config.dim_feedforward,
            dropout=config.dropout,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.num_layers)
        self.start_head = nn.Linear(config.d_model, 1)
        self.end_head = nn.Linear(config.d_model, 1)

    def forward(self, ids: torch.Tensor, keep_mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """ids: (B, T) with BOS at position 0. keep_mask: (B, T) True at BOS
        and document-region tokens. Returns start/end logits (B, T) with
        excluded positions set to -inf."""
        pad = ids.eq(self.vocab.pad_id)
        hidden = self.encoder(self.pos(self.embed(ids)), src_key_padding_mask=pad)
        start = self.start_head(hidden).squeeze(-1)
        end = self.end_head(hidden).squeeze(-1)
        neg = torch.finfo(start.dtype).min
        start = start.masked_fill(~keep_mask, neg)
        end = end.masked_fill(~keep_mask, neg)
        return start, end
