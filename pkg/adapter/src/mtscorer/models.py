"""Language-code conventions for the supported model families.

The engine sends short ISO 639-1 style codes ("de", "en"). Each model
family expects its own convention, so the adapter maps the request code
to the model's code before tokenization:

- m2m100 and small100 tokenizers take the two-letter code directly and
  know internally which __code__ control token to emit.
- nllb tokenizers want FLORES-200 codes ("deu_Latn"); a request may also
  carry a FLORES code already, which passes through untouched.
"""

from __future__ import annotations


class UnsupportedLanguage(ValueError):
    """The request's language code has no mapping for the loaded model."""


# ISO 639-1 -> FLORES-200, for the languages the engine's corpora use
# most; FLORES codes sent directly always pass through.
_NLLB_CODES = {
    "af": "afr_Latn", "ar": "arb_Arab", "bg": "bul_Cyrl", "bn": "ben_Beng",
    "cs": "ces_Latn", "da": "dan_Latn", "de": "deu_Latn", "el": "ell_Grek",
    "en": "eng_Latn", "es": "spa_Latn", "et": "est_Latn", "fa": "pes_Arab",
    "fi": "fin_Latn", "fr": "fra_Latn", "gu": "guj_Gujr", "ha": "hau_Latn",
    "he": "heb_Hebr", "hi": "hin_Deva", "hr": "hrv_Latn", "hu": "hun_Latn",
    "id": "ind_Latn", "is": "isl_Latn", "it": "ita_Latn", "ja": "jpn_Jpan",
    "kk": "kaz_Cyrl", "km": "khm_Khmr", "ko": "kor_Hang", "lt": "lit_Latn",
    "lv": "lvs_Latn", "nl": "nld_Latn", "no": "nob_Latn", "pl": "pol_Latn",
    "ps": "pbt_Arab", "pt": "por_Latn", "ro": "ron_Latn", "ru": "rus_Cyrl",
    "sv": "swe_Latn", "ta": "tam_Taml", "tr": "tur_Latn", "uk": "ukr_Cyrl",
    "vi": "vie_Latn", "zh": "zho_Hans",
}


def detect_family(tokenizer) -> str:
    """Family from the tokenizer class: the class fixes the convention."""
    name = type(tokenizer).__name__.lower()
    if "nllb" in name:
        return "nllb"
    if "small100" in name:
        return "small100"
    return "m2m100"


def map_code(family: str, code: str) -> str:
    if family == "nllb":
        if "_" in code:  # already a FLORES-200 code
            return code
        mapped = _NLLB_CODES.get(code)
        if mapped is None:
            raise UnsupportedLanguage(f"no FLORES-200 mapping for language code {code!r}")
        return mapped
    return code


def known_codes(family: str, tokenizer) -> frozenset[str]:
    """Codes (in the model's own convention) the tokenizer can force."""
    if family == "nllb":
        # nllb lang codes are plain vocabulary entries like "deu_Latn"
        return frozenset(
            t for t in getattr(tokenizer, "lang_code_to_id", {})
        ) or frozenset(_NLLB_CODES.values())
    return frozenset(getattr(tokenizer, "lang_code_to_id", {}))
