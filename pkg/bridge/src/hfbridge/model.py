"""Teacher-forced scoring, greedy decoding, and pooled cross-attention for a
Hugging Face encoder-decoder checkpoint.

The engine works with whitespace-level tokens; the model has its own subword
tokenizer. Alignment is by character offsets: engine tokens are joined with
single spaces and each subword is assigned to the engine token whose span
contains its first character. Output-side subword log-probabilities are summed
per engine token; attention is head-averaged at the last decoder cross-attention
layer, pooled to feature granularity, and row-renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


class TokenizationError(ValueError):
    pass


def _char_spans(tokens: list[str]) -> tuple[str, list[tuple[int, int]]]:
    """Join tokens with single spaces; return the text and each token's span."""
    spans = []
    pos = 0
    parts = []
    for tok in tokens:
        spans.append((pos, pos + len(tok)))
        parts.append(tok)
        pos += len(tok) + 1
    return " ".join(parts), spans


@dataclass
class _Encoding:
    ids: list[int]
    # index of the engine-level token owning each subword (-1 when outside)
    owner: list[int]


class Seq2SeqScorer:
    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(model_id)
        self.model.eval()
        self.device = torch.device(device)
        self.model.to(self.device)

    @property
    def mask_token(self) -> str:
        """The sentinel the engine should substitute for masked features."""
        vocab = self.tokenizer.get_vocab()
        for candidate in ("<extra_id_0>", self.tokenizer.mask_token, self.tokenizer.unk_token):
            if candidate and candidate in vocab:
                return candidate
        return "<unk>"

    def _encode(self, tokens: list[str]) -> _Encoding:
        text, spans = _char_spans(tokens)
        enc = self.tokenizer(
            text, return_offsets_mapping=True, add_special_tokens=False
        )
        owner = []
        for start, end in enc["offset_mapping"]:
            idx = -1
            for token_idx, (s, e) in enumerate(spans):
                if s <= start < e:
                    idx = token_idx
                    break
            owner.append(idx)
        return _Encoding(ids=list(enc["input_ids"]), owner=owner)

    def _decoder_inputs(self, label_ids: list[int]) -> torch.Tensor:
        start = self.model.config.decoder_start_token_id
        if start is None:
            start = self.model.config.pad_token_id or 0
        return torch.tensor([[start] + label_ids[:-1]], device=self.device)

    @torch.no_grad()
    def _forward(self, input_ids: list[int], label_ids: list[int], attentions: bool = False):
        return self.model(
            input_ids=torch.tensor([input_ids], device=self.device),
            decoder_input_ids=self._decoder_inputs(label_ids),
            output_attentions=attentions,
        )

    def score(self, input_tokens: list[str], output_tokens: list[str]) -> list[float]:
        """Log-probability of each output token (subword logprobs summed per
        token), teacher-forced on the preceding output tokens."""
        if not output_tokens:
            return []
        enc_in = self._encode(input_tokens)
        enc_out = self._encode(output_tokens)
        if not enc_out.ids:
            raise TokenizationError(f"output tokens not representable: {output_tokens!r}")
        for sub_idx, owner in enumerate(enc_out.owner):
            if owner < 0:
                raise TokenizationError(
                    f"output subword {sub_idx} aligns to no output token"
                )
        out = self._forward(enc_in.ids, enc_out.ids)
        logprobs = torch.log_softmax(out.logits[0], dim=-1)
        per_word = np.zeros(len(output_tokens))
        for pos, (token_id, owner) in enumerate(zip(enc_out.ids, enc_out.owner)):
            per_word[owner] += float(logprobs[pos, token_id])
        return per_word.tolist()

    def sequence_logprob(self, input_tokens: list[str], output_tokens: list[str]) -> float:
        """Whole-sequence log-probability, for consistency checks."""
        return float(np.sum(self.score(input_tokens, output_tokens)))

    def attention(
        self,
        input_tokens: list[str],
        output_tokens: list[str],
        features: list[dict],
    ) -> np.ndarray:
        """(T, d) matrix: last-layer head-averaged cross-attention, pooled to
        feature groups by summation and row-renormalized."""
        enc_in = self._encode(input_tokens)
        enc_out = self._encode(output_tokens)
        out = self._forward(enc_in.ids, enc_out.ids, attentions=True)
        cross = out.cross_attentions[-1][0]  # (heads, tgt_subwords, src_subwords)
        averaged = cross.mean(dim=0).cpu().numpy()

        # pool decoder subwords into engine output tokens (mean keeps rows
        # stochastic), encoder subwords into features (attention mass sums)
        T, d = len(output_tokens), len(features)
        token_of_input = {}
        for f_idx, feature in enumerate(features):
            for start, end in feature["spans"]:
                for tok_idx in range(start, end):
                    token_of_input[tok_idx] = f_idx

        pooled = np.zeros((T, d))
        row_counts = np.zeros(T)
        for sub_t, owner_t in enumerate(enc_out.owner):
            if owner_t < 0:
                continue
            row_counts[owner_t] += 1
            for sub_s, owner_s in enumerate(enc_in.owner):
                f_idx = token_of_input.get(owner_s)
                if f_idx is not None:
                    pooled[owner_t, f_idx] += averaged[sub_t, sub_s]
        if np.any(row_counts == 0):
            raise TokenizationError("an output token produced no subwords")
        pooled /= row_counts[:, None]

        sums = pooled.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise TokenizationError("attention mass entirely outside features")
        return pooled / sums

    @torch.no_grad()
    def generate(self, input_tokens: list[str], max_new_tokens: int = 128) -> list[str]:
        """Greedy decode, returned as whitespace tokens."""
        enc_in = self._encode(input_tokens)
        ids = self.model.generate(
            input_ids=torch.tensor([enc_in.ids], device=self.device),
            do_sample=False,
            num_beams=1,
            max_new_tokens=max_new_tokens,
        )
        text = self.tokenizer.decode(ids[0], skip_special_tokens=True)
        return text.split()
