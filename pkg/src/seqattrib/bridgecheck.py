"""Bridge conformance checks, run against the raw transport so the engine
cache cannot hide misbehavior."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Instance, Mask, apply_mask
from .errors import ProtocolError
from .oracle import BridgeCapabilities, Transport


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _score_raw(transport: Transport, input_tokens, output_tokens, req_id):
    resp = transport.request_many(
        [
            {
                "type": "score",
                "id": req_id,
                "input_tokens": list(input_tokens),
                "output_tokens": list(output_tokens),
            }
        ]
    )[0]
    if resp.get("type") != "score_result":
        raise ProtocolError(f"expected score_result, got {resp}")
    return resp.get("logprobs")


def run_bridge_checks(transport: Transport, probe: Instance) -> list[CheckResult]:
    """Exercise handshake, scoring stability, response shapes, value sanity
    and (when declared) attention row-stochasticity."""
    results: list[CheckResult] = []

    announcement = transport.handshake()
    try:
        caps = BridgeCapabilities.from_announcement(announcement)
        results.append(CheckResult("handshake", True, f"mask_token={caps.mask_token!r}"))
    except ProtocolError as exc:
        results.append(CheckResult("handshake", False, str(exc)))
        return results

    T = probe.num_output_tokens
    full_tokens = list(probe.input_tokens)

    def check(name: str, fn) -> None:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, do not abort remaining checks
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, ok, detail))

    def shape_check():
        lp = _score_raw(transport, full_tokens, probe.output_tokens, "check-shape")
        if not isinstance(lp, list) or len(lp) != T:
            return False, f"logprob vector length {len(lp) if isinstance(lp, list) else 'n/a'}, expected {T}"
        return True, f"T={T}"

    def value_check():
        lp = np.asarray(
            _score_raw(transport, full_tokens, probe.output_tokens, "check-values"),
            dtype=float,
        )
        if not np.all(np.isfinite(lp)):
            return False, "NaN or infinite logprob"
        if np.any(lp > 0):
            return False, f"positive logprob {lp.max():.4g}"
        return True, "all finite and <= 0"

    def stability_check():
        a = _score_raw(transport, full_tokens, probe.output_tokens, "check-stable-a")
        b = _score_raw(transport, full_tokens, probe.output_tokens, "check-stable-b")
        if a != b:
            return False, "identity-mask scoring not reproducible"
        return True, "two identical responses"

    def masked_check():
        masked = apply_mask(probe, Mask.zeros(probe.num_features), caps.mask_token)
        lp = np.asarray(
            _score_raw(transport, masked, probe.output_tokens, "check-masked"),
            dtype=float,
        )
        if len(lp) != T or not np.all(np.isfinite(lp)) or np.any(lp > 0):
            return False, "masked-input scoring invalid"
        return True, "fully masked input scored"

    check("score_shape", shape_check)
    check("score_values", value_check)
    check("score_stability", stability_check)
    check("masked_scoring", masked_check)

    if caps.supports_attention:

        def attention_check():
            resp = transport.request_many(
                [
                    {
                        "type": "attention",
                        "id": "check-attn",
                        "input_tokens": full_tokens,
                        "output_tokens": list(probe.output_tokens),
                        "features": [
                            {"name": g.name, "spans": [list(s) for s in g.spans]}
                            for g in probe.features
                        ],
                    }
                ]
            )[0]
            if resp.get("type") != "attention_result":
                return False, f"expected attention_result, got {resp.get('type')!r}"
            matrix = np.asarray(resp.get("matrix"), dtype=float)
            if matrix.shape != (T, probe.num_features):
                return False, f"attention shape {matrix.shape}"
            if np.any(matrix < 0):
                return False, "negative attention mass"
            dev = float(np.max(np.abs(matrix.sum(axis=1) - 1.0)))
            if dev > 1e-6 or not math.isfinite(dev):
                return False, f"rows not stochastic (max deviation {dev:.3g})"
            return True, f"rows stochastic within {dev:.2g}"

        check("attention_rows", attention_check)

    return results
