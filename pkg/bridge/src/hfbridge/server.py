"""JSON-lines bridge server: announces capabilities on startup, then answers
score / attention / generate messages on stdio. Every protocol violation is
answered with a typed error message, never a silent drop."""

from __future__ import annotations

import argparse
import json
import sys

from .model import Seq2SeqScorer, TokenizationError

MAX_BATCH = 16


def announcement(scorer: Seq2SeqScorer) -> dict:
    return {
        "type": "hello",
        "mask_token": scorer.mask_token,
        "supports_attention": True,
        "max_batch": MAX_BATCH,
    }


def handle_message(scorer: Seq2SeqScorer, msg: dict) -> dict:
    msg_id = msg.get("id")

    def error(message: str) -> dict:
        return {"type": "error", "id": msg_id, "message": message}

    kind = msg.get("type")
    if kind == "hello":
        return announcement(scorer)
    if kind not in ("score", "attention", "generate"):
        return error(f"unknown message type {kind!r}")

    input_tokens = msg.get("input_tokens")
    if not isinstance(input_tokens, list) or not input_tokens:
        return error("input_tokens must be a non-empty list")

    try:
        if kind == "generate":
            return {
                "type": "generate_result",
                "id": msg_id,
                "output_tokens": scorer.generate(input_tokens),
            }
        output_tokens = msg.get("output_tokens")
        if not isinstance(output_tokens, list):
            return error("output_tokens must be a list")
        if kind == "score":
            return {
                "type": "score_result",
                "id": msg_id,
                "logprobs": scorer.score(input_tokens, output_tokens),
            }
        features = msg.get("features")
        if not isinstance(features, list) or not features:
            return error("attention request needs features")
        matrix = scorer.attention(input_tokens, output_tokens, features)
        return {"type": "attention_result", "id": msg_id, "matrix": matrix.tolist()}
    except TokenizationError as exc:
        return error(f"tokenization: {exc}")
    except Exception as exc:
        return error(f"{type(exc).__name__}: {exc}")


def serve(scorer: Seq2SeqScorer, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stdout.write(json.dumps(announcement(scorer)) + "\n")
    stdout.flush()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            response = {"type": "error", "id": None, "message": "malformed JSON"}
        else:
            response = handle_message(scorer, msg)
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="encoder-decoder bridge server")
    parser.add_argument("--model", required=True, help="checkpoint id or local path")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    import torch

    torch.manual_seed(0)  # eval mode is deterministic; seed defensively
    scorer = Seq2SeqScorer(args.model, device=args.device)
    serve(scorer)
    return 0


if __name__ == "__main__":
    sys.exit(main())
