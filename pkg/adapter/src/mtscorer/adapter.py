"""Forced-decoding scorer around a seq2seq translation model.

Scoring never generates: the target text is fixed, the model runs one
teacher-forced decoder pass, and the adapter reads off the log of the
softmax mass each realized target token received (Eq.: the sequence
probability is the product of these terms). The end-of-sequence token
is part of that product and is included by default; language-forcing
control tokens are model plumbing and are always excluded from the
returned list and from the token count. include_eos=False drops the
end-of-sequence term too, for sensitivity analysis.

Determinism: the model runs in eval mode under no_grad in float32; no
sampling or beam search exists anywhere in this code path, so identical
requests produce identical log-probabilities within a process and
across processes on the same hardware and model version.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .models import UnsupportedLanguage, detect_family, known_codes, map_code


class ModelLoadError(RuntimeError):
    """The model or tokenizer could not be loaded; fatal for the process."""


class RequestError(ValueError):
    """A single request cannot be scored; answered with an error response."""


class OverLengthInput(RequestError):
    pass


class TokenizationError(RequestError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    """What to load and how to score.

    model_id is a hub identifier or a local directory; it doubles as the
    scorer_id announced in the protocol handshake.
    """

    model_id: str
    device: str = "cpu"
    max_length: int = 512
    include_eos: bool = True

    def __post_init__(self):
        if self.max_length < 2:
            raise ValueError(f"max_length must be >= 2, got {self.max_length}")


@dataclass(frozen=True)
class ScoredTarget:
    token_logprobs: tuple[float, ...]
    tokens: tuple[str, ...]


class ModelAdapter:
    def __init__(self, config: AdapterConfig):
        # imported lazily so protocol-only tools don't pay the torch tax
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self.config = config
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(config.model_id)
            self._model = AutoModelForSeq2SeqLM.from_pretrained(config.model_id)
        except Exception as exc:
            raise ModelLoadError(f"cannot load model {config.model_id!r}: {exc}") from exc
        self._device = torch.device(config.device)
        self._model.to(self._device).eval()
        self.family = detect_family(self._tokenizer)
        self._known = known_codes(self.family, self._tokenizer)
        self._control_ids = self._language_token_ids()
        self._eos_id = self._tokenizer.eos_token_id

    @property
    def scorer_id(self) -> str:
        return self.config.model_id

    def _language_token_ids(self) -> frozenset[int]:
        lang_token_to_id = getattr(self._tokenizer, "lang_token_to_id", None)
        if lang_token_to_id:
            return frozenset(lang_token_to_id.values())
        # nllb-style: language codes are ordinary vocabulary entries
        unk = self._tokenizer.unk_token_id
        ids = {self._tokenizer.convert_tokens_to_ids(code) for code in self._known}
        return frozenset(i for i in ids if i is not None and i != unk)

    def _map(self, code: str) -> str:
        try:
            mapped = map_code(self.family, code)
        except UnsupportedLanguage as exc:
            raise RequestError(str(exc)) from exc
        if self._known and mapped not in self._known:
            raise RequestError(
                f"language code {code!r} (mapped to {mapped!r}) is not supported "
                f"by this {self.family} model"
            )
        return mapped

    def _encode(self, src_lang: str, tgt_lang: str, source: str, target: str):
        self._tokenizer.src_lang = self._map(src_lang)
        self._tokenizer.tgt_lang = self._map(tgt_lang)
        try:
            enc = self._tokenizer(source, return_tensors="pt")
            labels = self._tokenizer(text_target=target, return_tensors="pt")["input_ids"][0]
        except Exception as exc:
            raise TokenizationError(f"tokenizer failed: {exc}") from exc
        n_src = enc["input_ids"].shape[1]
        if n_src > self.config.max_length or len(labels) > self.config.max_length:
            raise OverLengthInput(
                f"input of {max(n_src, len(labels))} tokens exceeds the configured "
                f"limit of {self.config.max_length}"
            )
        return enc, labels

    def _position_logprobs(self, enc, labels: torch.Tensor) -> torch.Tensor:
        start = torch.tensor([self._model.config.decoder_start_token_id])
        decoder_input = torch.cat([start, labels[:-1]]).unsqueeze(0).to(self._device)
        with torch.no_grad():
            logits = self._model(
                input_ids=enc["input_ids"].to(self._device),
                attention_mask=enc["attention_mask"].to(self._device),
                decoder_input_ids=decoder_input,
            ).logits[0].float()
        return logits

    def _included(self, labels: torch.Tensor) -> torch.Tensor:
        mask = torch.tensor(
            [int(t) not in self._control_ids for t in labels], dtype=torch.bool
        )
        if not self.config.include_eos:
            mask &= labels != self._eos_id
        if not bool(mask.any()):
            raise RequestError("target has no scoreable tokens")
        return mask

    def score(self, src_lang: str, tgt_lang: str, source: str, target: str) -> ScoredTarget:
        """One log-probability per target token, control tokens excluded."""
        enc, labels = self._encode(src_lang, tgt_lang, source, target)
        logits = self._position_logprobs(enc, labels)
        per_pos = torch.log_softmax(logits, dim=-1)[
            torch.arange(len(labels)), labels.to(self._device)
        ]
        mask = self._included(labels)
        kept = labels[mask]
        return ScoredTarget(
            token_logprobs=tuple(per_pos[mask].tolist()),
            tokens=tuple(self._tokenizer.convert_ids_to_tokens(kept.tolist())),
        )

    def sequence_logprob(self, src_lang: str, tgt_lang: str, source: str, target: str) -> float:
        """Full-sequence score in one pass, for cross-checking.

        Deliberately a different numeric path than score(): fused
        cross-entropy over the kept positions instead of log_softmax
        plus gather, so agreement between the two is a real check.
        """
        enc, labels = self._encode(src_lang, tgt_lang, source, target)
        logits = self._position_logprobs(enc, labels)
        mask = self._included(labels)
        return float(-F.cross_entropy(logits[mask], labels[mask].to(self._device),
                                      reduction="sum"))

    def token_count(self, tgt_lang: str, target: str) -> int:
        """Number of scoreable target tokens under the current config."""
        self._tokenizer.tgt_lang = self._map(tgt_lang)
        try:
            labels = self._tokenizer(text_target=target, return_tensors="pt")["input_ids"][0]
        except Exception as exc:
            raise TokenizationError(f"tokenizer failed: {exc}") from exc
        return int(self._included(labels).sum())
