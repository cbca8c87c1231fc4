"""Standalone toy bridge: serves the JSON-lines protocol over stdio.

Run as ``python -m seqattrib.toy_bridge --spec spec.json`` or with
``--seed/--d/--T/--V`` to generate the spec on the fly. Instances must follow
the one-token-per-feature convention (input token i carries feature i), so the
present coalition is recovered from which tokens equal the mask token.

This doubles as the reference implementation for bridge conformance checks.
"""

from __future__ import annotations

import argparse
import json
import sys


from .toymodel import TOY_MASK_TOKEN, ToyModelSpec, toy_attention, toy_generate, toy_score


def _error(msg_id, message: str) -> dict:
    return {"type": "error", "id": msg_id, "message": message}


def handle_message(spec: ToyModelSpec, msg: dict, mask_token: str) -> dict:
    msg_id = msg.get("id")
    kind = msg.get("type")
    if kind == "hello":
        return announcement(mask_token)
    if kind not in ("score", "attention"):
        return _error(msg_id, f"unknown message type {kind!r}")
    input_tokens = msg.get("input_tokens")
    output_tokens = msg.get("output_tokens")
    if not isinstance(input_tokens, list) or not isinstance(output_tokens, list):
        return _error(msg_id, "input_tokens and output_tokens must be lists")
    if len(input_tokens) != spec.num_features:
        return _error(
            msg_id,
            f"toy bridge expects {spec.num_features} input tokens (one per "
            f"feature), got {len(input_tokens)}",
        )
    try:
        if kind == "score":
            present = [i for i, tok in enumerate(input_tokens) if tok != mask_token]
            logprobs = toy_score(spec, present, output_tokens)
            return {"type": "score_result", "id": msg_id, "logprobs": logprobs.tolist()}
        matrix = toy_attention(spec, output_tokens)
        return {"type": "attention_result", "id": msg_id, "matrix": matrix.tolist()}
    except Exception as exc:  # typed errors over silent drops
        return _error(msg_id, str(exc))


def announcement(mask_token: str) -> dict:
    return {
        "type": "hello",
        "mask_token": mask_token,
        "supports_attention": True,
        "max_batch": 32,
    }


def serve(spec: ToyModelSpec, stdin=None, stdout=None, mask_token: str = TOY_MASK_TOKEN):
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stdout.write(json.dumps(announcement(mask_token)) + "\n")
    stdout.flush()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            stdout.write(json.dumps(_error(None, "malformed JSON")) + "\n")
            stdout.flush()
            continue
        stdout.write(json.dumps(handle_message(spec, msg, mask_token)) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="toy model bridge server")
    parser.add_argument("--spec", help="path to a toy spec JSON file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--d", type=int, default=4)
    parser.add_argument("--T", type=int, default=2)
    parser.add_argument("--V", type=int, default=4)
    parser.add_argument("--mask-token", default=TOY_MASK_TOKEN)
    args = parser.parse_args(argv)
    if args.spec:
        spec = ToyModelSpec.load(args.spec)
    else:
        spec = toy_generate(args.seed, args.d, args.T, args.V)
    serve(spec, mask_token=args.mask_token)
    return 0


if __name__ == "__main__":
    sys.exit(main())
