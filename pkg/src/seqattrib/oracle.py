"""Bridge protocol: handshake, batched teacher-forced scoring, attention.

The engine talks to whatever model is being explained through a "bridge":
a process (or HTTP endpoint) that answers newline-delimited JSON messages.
The bridge never sees feature masks; the engine materializes masked token
lists before sending them. All scoring goes through an in-memory cache keyed
by (instance digest, mask bits) because coalition-based explainers revisit
the same perturbation constantly.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import uuid
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Instance, Mask, apply_mask
from .errors import (
    CapabilityError,
    DataError,
    DimensionError,
    ProtocolError,
    TransportError,
)

ATTENTION_ROW_TOL = 1e-6
BRIDGE_CMD_ENV = "SEQATTRIB_BRIDGE_CMD"


@dataclass(frozen=True)
class BridgeCapabilities:
    mask_token: str
    supports_attention: bool
    max_batch: int

    @classmethod
    def from_announcement(cls, msg: dict) -> "BridgeCapabilities":
        if msg.get("type") != "hello":
            raise ProtocolError(f"expected hello announcement, got {msg.get('type')!r}")
        mask_token = msg.get("mask_token")
        if not isinstance(mask_token, str) or not mask_token:
            raise ProtocolError("announcement missing non-empty mask_token")
        max_batch = msg.get("max_batch")
        if not isinstance(max_batch, int) or max_batch < 1:
            raise ProtocolError(f"announcement max_batch invalid: {max_batch!r}")
        return cls(
            mask_token=mask_token,
            supports_attention=bool(msg.get("supports_attention", False)),
            max_batch=max_batch,
        )


class Oracle(ABC):
    """Cached access to a model's value function and attention.

    Subclasses implement the raw scoring of a list of masks; this base class
    owns deduplication, the cache, and response validation so that cached and
    cache-free executions are indistinguishable.
    """

    def __init__(self, cache_path: str | os.PathLike | None = None):
        self._cache: dict[tuple[str, tuple[int, ...]], np.ndarray] = {}
        self._attn_cache: dict[str, np.ndarray] = {}
        self.cache_hits = 0
        self.cache_misses = 0
        self.score_calls = 0  # masks actually scored by the backend
        self.attention_calls = 0
        self._cache_path = Path(cache_path) if cache_path else None
        if self._cache_path and self._cache_path.exists():
            self._load_spill()

    @property
    @abstractmethod
    def capabilities(self) -> BridgeCapabilities: ...

    @abstractmethod
    def _score_masks(self, instance: Instance, masks: list[Mask]) -> np.ndarray:
        """Score each mask; returns (len(masks), T). No caching here."""

    @abstractmethod
    def _attention_matrix(self, instance: Instance) -> np.ndarray: ...

    def score_batch(self, instance: Instance, masks: Sequence[Mask]) -> np.ndarray:
        """Teacher-forced logprob rows for each mask, shape (n_masks, T)."""
        d = instance.num_features
        T = instance.num_output_tokens
        for m in masks:
            if len(m) != d:
                raise DimensionError(f"mask length {len(m)} != feature count {d}")
        if not masks:
            return np.empty((0, T), dtype=float)

        digest = instance.digest()
        todo: list[Mask] = []
        todo_keys: list[tuple[str, tuple[int, ...]]] = []
        seen_in_batch: set[tuple[int, ...]] = set()
        for m in masks:
            key = (digest, m.bits)
            if key in self._cache:
                self.cache_hits += 1
            elif m.bits in seen_in_batch:
                self.cache_hits += 1
            else:
                self.cache_misses += 1
                seen_in_batch.add(m.bits)
                todo.append(m)
                todo_keys.append(key)

        if todo:
            rows = self._score_masks(instance, todo)
            rows = np.asarray(rows, dtype=float)
            if rows.shape != (len(todo), T):
                raise ProtocolError(
                    f"backend returned shape {rows.shape}, expected {(len(todo), T)}"
                )
            self._validate_logprobs(rows)
            self.score_calls += len(todo)
            for key, row in zip(todo_keys, rows):
                self._cache[key] = row
                self._spill(key, row)

        return np.stack([self._cache[(digest, m.bits)] for m in masks])

    def score_one(self, instance: Instance, mask: Mask) -> np.ndarray:
        return self.score_batch(instance, [mask])[0]

    def attention(self, instance: Instance) -> np.ndarray:
        """Row-stochastic (T, d) attention for the unmasked input."""
        if not self.capabilities.supports_attention:
            raise CapabilityError("bridge does not support attention")
        digest = instance.digest()
        if digest not in self._attn_cache:
            matrix = np.asarray(self._attention_matrix(instance), dtype=float)
            self.attention_calls += 1
            expected = (instance.num_output_tokens, instance.num_features)
            if matrix.shape != expected:
                raise ProtocolError(
                    f"attention shape {matrix.shape}, expected {expected}"
                )
            if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
                raise DataError("attention matrix has negative or non-finite entries")
            sums = matrix.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > ATTENTION_ROW_TOL):
                worst = float(np.max(np.abs(sums - 1.0)))
                raise DataError(f"attention rows not stochastic (max dev {worst:.3g})")
            self._attn_cache[digest] = matrix
        return self._attn_cache[digest]

    @staticmethod
    def _validate_logprobs(rows: np.ndarray) -> None:
        if not np.all(np.isfinite(rows)):
            raise DataError("logprob response contains NaN or infinity")
        if np.any(rows > 0):
            raise DataError(f"positive logprob in response (max {rows.max():.3g})")

    def _spill(self, key, row) -> None:
        if self._cache_path is None:
            return
        record = {"digest": key[0], "bits": list(key[1]), "logprobs": row.tolist()}
        with self._cache_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    def _load_spill(self) -> None:
        for line in self._cache_path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            key = (record["digest"], tuple(record["bits"]))
            self._cache[key] = np.asarray(record["logprobs"], dtype=float)

    def generate(self, instance: Instance) -> list[str]:
        """Greedy decode for the unmasked input, when the bridge offers it."""
        raise CapabilityError("bridge does not support generation")

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ToyOracle(Oracle):
    """In-process oracle backed by the analytic toy model.

    With a fixed spec it serves exactly one instance shape; without one it
    reconstructs the generating spec from each instance's metadata, which is
    how the bundled toy corpus is evaluated.
    """

    def __init__(self, spec=None, cache_path=None, mask_token: str | None = None):
        from .toymodel import TOY_MASK_TOKEN

        super().__init__(cache_path=cache_path)
        self._spec = spec
        self._caps = BridgeCapabilities(
            mask_token=mask_token or TOY_MASK_TOKEN,
            supports_attention=True,
            max_batch=64,
        )

    @property
    def capabilities(self) -> BridgeCapabilities:
        return self._caps

    def _resolve_spec(self, instance: Instance):
        from .toymodel import spec_for_instance

        spec = self._spec if self._spec is not None else spec_for_instance(instance)
        if spec.num_features != instance.num_features:
            raise DimensionError(
                f"toy spec has {spec.num_features} features, "
                f"instance has {instance.num_features}"
            )
        return spec

    def _score_masks(self, instance: Instance, masks: list[Mask]) -> np.ndarray:
        from .toymodel import toy_score

        spec = self._resolve_spec(instance)
        return np.stack(
            [toy_score(spec, m.kept(), instance.output_tokens) for m in masks]
        )

    def _attention_matrix(self, instance: Instance) -> np.ndarray:
        from .toymodel import toy_attention

        return toy_attention(self._resolve_spec(instance), instance.output_tokens)

    def generate(self, instance: Instance) -> list[str]:
        from .toymodel import toy_greedy_decode

        return toy_greedy_decode(self._resolve_spec(instance))


class BridgeOracle(Oracle):
    """Oracle speaking the JSON-lines protocol to an external bridge."""

    def __init__(self, transport: "Transport", cache_path=None):
        super().__init__(cache_path=cache_path)
        self._transport = transport
        self._caps = BridgeCapabilities.from_announcement(transport.handshake())

    @property
    def capabilities(self) -> BridgeCapabilities:
        return self._caps

    @property
    def transport(self) -> "Transport":
        return self._transport

    def _score_masks(self, instance: Instance, masks: list[Mask]) -> np.ndarray:
        rows: list[np.ndarray] = []
        T = instance.num_output_tokens
        batch = self._caps.max_batch
        for start in range(0, len(masks), batch):
            chunk = masks[start : start + batch]
            requests = []
            for m in chunk:
                requests.append(
                    {
                        "type": "score",
                        "id": uuid.uuid4().hex,
                        "input_tokens": apply_mask(instance, m, self._caps.mask_token),
                        "output_tokens": list(instance.output_tokens),
                    }
                )
            responses = self._transport.request_many(requests)
            by_id = {}
            for resp in responses:
                if resp.get("type") == "error":
                    raise ProtocolError(
                        f"bridge error for request {resp.get('id')}: {resp.get('message')}"
                    )
                if resp.get("type") != "score_result":
                    raise ProtocolError(f"unexpected message type {resp.get('type')!r}")
                by_id[resp.get("id")] = resp
            for req in requests:
                resp = by_id.get(req["id"])
                if resp is None:
                    raise ProtocolError(f"missing response for request {req['id']}")
                logprobs = resp.get("logprobs")
                if not isinstance(logprobs, list) or len(logprobs) != T:
                    raise ProtocolError(
                        f"request {req['id']}: logprob vector length "
                        f"{len(logprobs) if isinstance(logprobs, list) else 'n/a'}, expected {T}"
                    )
                arr = np.asarray(logprobs, dtype=float)
                if not np.all(np.isfinite(arr)) or np.any(arr > 0):
                    raise DataError(f"request {req['id']}: invalid logprobs")
                rows.append(arr)
        return np.stack(rows)

    def _attention_matrix(self, instance: Instance) -> np.ndarray:
        msg = {
            "type": "attention",
            "id": uuid.uuid4().hex,
            "input_tokens": list(instance.input_tokens),
            "output_tokens": list(instance.output_tokens),
            "features": [
                {"name": g.name, "spans": [list(s) for s in g.spans]}
                for g in instance.features
            ],
        }
        resp = self._transport.request_many([msg])[0]
        if resp.get("type") == "error":
            message = str(resp.get("message", ""))
            if "attention" in message.lower() and "support" in message.lower():
                raise CapabilityError(message)
            raise ProtocolError(f"bridge error: {message}")
        if resp.get("type") != "attention_result":
            raise ProtocolError(f"unexpected message type {resp.get('type')!r}")
        return np.asarray(resp.get("matrix"), dtype=float)

    def generate(self, instance: Instance) -> list[str]:
        msg = {
            "type": "generate",
            "id": uuid.uuid4().hex,
            "input_tokens": list(instance.input_tokens),
        }
        resp = self._transport.request_many([msg])[0]
        if resp.get("type") == "error":
            raise CapabilityError(f"bridge cannot generate: {resp.get('message')}")
        if resp.get("type") != "generate_result":
            raise ProtocolError(f"unexpected message type {resp.get('type')!r}")
        tokens = resp.get("output_tokens")
        if not isinstance(tokens, list) or not tokens:
            raise ProtocolError("generate_result lacks output_tokens")
        return [str(t) for t in tokens]

    def close(self) -> None:
        self._transport.close()


class Transport(ABC):
    @abstractmethod
    def handshake(self) -> dict: ...

    @abstractmethod
    def request_many(self, messages: list[dict]) -> list[dict]: ...

    def close(self) -> None:
        pass


class SubprocessTransport(Transport):
    """Spawns the bridge as a subprocess and pipelines JSON lines over its
    standard streams. The bridge announces itself with a hello line at
    startup."""

    def __init__(self, command: str | Sequence[str], timeout: float = 120.0):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise TransportError(f"cannot spawn bridge {argv!r}: {exc}") from exc
        self._timeout = timeout
        self._announcement: dict | None = None
        self._buffer = b""

    def _read_line(self) -> str:
        # reads the raw fd with explicit buffering: select on a buffered file
        # object would block even when whole lines are already buffered
        assert self._proc.stdout is not None
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            ready, _, _ = select.select([fd], [], [], self._timeout)
            if not ready:
                raise TransportError(f"bridge read timed out after {self._timeout}s")
            chunk = os.read(fd, 65536)
            if not chunk:
                code = self._proc.poll()
                raise TransportError(f"bridge closed its stdout (exit code {code})")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8")

    def handshake(self) -> dict:
        if self._announcement is None:
            line = self._read_line()
            try:
                self._announcement = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"malformed announcement: {line!r}") from exc
        return self._announcement

    def request_many(self, messages: list[dict]) -> list[dict]:
        self.handshake()
        assert self._proc.stdin is not None
        try:
            for msg in messages:
                self._proc.stdin.write((json.dumps(msg) + "\n").encode("utf-8"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"bridge stdin closed: {exc}") from exc
        responses = []
        for _ in messages:
            line = self._read_line()
            try:
                responses.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"malformed bridge response: {line!r}") from exc
        return responses

    def close(self) -> None:
        if self._proc.poll() is None:
            if self._proc.stdin is not None:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()


class HTTPTransport(Transport):
    """POSTs the same message bodies to a single endpoint URL."""

    def __init__(self, url: str, timeout: float = 120.0):
        self._url = url
        self._timeout = timeout

    def _post(self, message: dict) -> dict:
        import urllib.error
        import urllib.request

        data = json.dumps(message).encode("utf-8")
        req = urllib.request.Request(
            self._url, data=data, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self._timeout) as resp:
                body = resp.read().decode("utf-8")
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"bridge endpoint unreachable: {exc}") from exc
        try:
            return json.loads(body)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed bridge response: {body!r}") from exc

    def handshake(self) -> dict:
        return self._post({"type": "hello"})

    def request_many(self, messages: list[dict]) -> list[dict]:
        return [self._post(msg) for msg in messages]


def open_bridge_oracle(
    bridge_cmd: str | None = None,
    bridge_url: str | None = None,
    cache_path=None,
) -> BridgeOracle:
    """Resolve the bridge from explicit arguments or SEQATTRIB_BRIDGE_CMD."""
    if bridge_url:
        return BridgeOracle(HTTPTransport(bridge_url), cache_path=cache_path)
    cmd = bridge_cmd or os.environ.get(BRIDGE_CMD_ENV)
    if not cmd:
        raise TransportError(
            f"no bridge configured: pass a command or set {BRIDGE_CMD_ENV}"
        )
    return BridgeOracle(SubprocessTransport(cmd), cache_path=cache_path)
