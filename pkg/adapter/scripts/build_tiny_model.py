"""Build a tiny randomly initialized M2M100-style model for offline tests.

Trains a ~100-piece sentencepiece tokenizer on a built-in multilingual
snippet corpus, wires it into an M2M100 tokenizer (which appends the 100
language control tokens after the text vocabulary), and saves a 2-layer
random-weight model next to it. The result speaks the full m2m100
interface at under 100 kB of weights: useless for translation quality,
ideal for deterministic plumbing tests.

Usage: python3 build_tiny_model.py --out DIR [--seed 0]
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

SENTENCES = [
    "Der Zug kommt pünktlich an.", "The train arrives on time.",
    "Sie liest jeden Abend ein Buch.", "She reads a book every evening.",
    "Das Wetter ist heute schön.", "The weather is nice today.",
    "Ich suche meine Schlüssel.", "I am looking for my keys.",
    "Wir fahren morgen in die Stadt.", "We are driving to the city tomorrow.",
    "Morgen regnet es vielleicht.", "It might rain tomorrow.",
    "Le chat dort sur la chaise.", "Il fait beau aujourd'hui.",
    "El gato duerme en la silla.", "Das Haus steht am Fluss.",
    "The house stands by the river.", "Der Hund schläft im Garten.",
]


def build(out_dir: Path, seed: int = 0) -> Path:
    import sentencepiece as spm
    import torch
    from transformers import M2M100Config, M2M100ForConditionalGeneration, M2M100Tokenizer

    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as scratch:
        corpus = Path(scratch) / "corpus.txt"
        corpus.write_text("\n".join(SENTENCES) + "\n", encoding="utf-8")
        spm.SentencePieceTrainer.train(
            input=str(corpus), model_prefix=str(Path(scratch) / "spm"),
            vocab_size=96, model_type="bpe", character_coverage=1.0,
            bos_id=-1, eos_id=-1, unk_id=0, pad_id=-1,
        )
        sp = spm.SentencePieceProcessor(model_file=str(Path(scratch) / "spm.model"))
        # fairseq id layout: the four specials first, then the pieces
        vocab = {"<s>": 0, "<pad>": 1, "</s>": 2, "<unk>": 3}
        for i in range(sp.get_piece_size()):
            piece = sp.id_to_piece(i)
            if piece not in vocab:
                vocab[piece] = len(vocab)
        vocab_path = Path(scratch) / "vocab.json"
        vocab_path.write_text(json.dumps(vocab, ensure_ascii=False), encoding="utf-8")

        tokenizer = M2M100Tokenizer(
            str(vocab_path), str(Path(scratch) / "spm.model"), language_codes="m2m100"
        )
        total_vocab = (
            len(vocab) + len(tokenizer.lang_code_to_id) + tokenizer.num_madeup_words
        )

        torch.manual_seed(seed)
        config = M2M100Config(
            vocab_size=total_vocab, d_model=32,
            encoder_layers=2, decoder_layers=2,
            encoder_attention_heads=2, decoder_attention_heads=2,
            encoder_ffn_dim=64, decoder_ffn_dim=64,
            max_position_embeddings=256,
            pad_token_id=1, bos_token_id=0, eos_token_id=2,
            decoder_start_token_id=2,
        )
        model = M2M100ForConditionalGeneration(config)
        model.save_pretrained(out_dir)
        tokenizer.save_pretrained(out_dir)
    return out_dir


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="directory to write the model into")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    path = build(Path(args.out), seed=args.seed)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
