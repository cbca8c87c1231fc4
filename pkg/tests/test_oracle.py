import sys

import numpy as np
import pytest

from seqattrib import BridgeCapabilities, Mask, ToyOracle, make_toy_instance, toy_generate
from seqattrib.errors import (
    CapabilityError,
    DataError,
    DimensionError,
    ProtocolError,
)
from seqattrib.oracle import BridgeOracle, SubprocessTransport

from conftest import make_instance  # noqa: E402  (pytest puts tests/ on sys.path)


class TestHandshakeParsing:
    def test_echo_of_announcement(self):
        caps = BridgeCapabilities.from_announcement(
            {
                "type": "hello",
                "mask_token": "<extra_id_0>",
                "supports_attention": True,
                "max_batch": 32,
            }
        )
        assert caps.mask_token == "<extra_id_0>"
        assert caps.supports_attention is True
        assert caps.max_batch == 32

    def test_missing_mask_token(self):
        with pytest.raises(ProtocolError):
            BridgeCapabilities.from_announcement(
                {"type": "hello", "supports_attention": False, "max_batch": 4}
            )

    def test_zero_max_batch(self):
        with pytest.raises(ProtocolError):
            BridgeCapabilities.from_announcement(
                {"type": "hello", "mask_token": "<m>", "max_batch": 0}
            )


class TestScoreBatch:
    def test_identity_mask_is_baseline(self, worked_instance, worked_oracle, worked_spec):
        from seqattrib import toy_score

        rows = worked_oracle.score_batch(worked_instance, [Mask.ones(2)])
        np.testing.assert_array_equal(
            rows[0], toy_score(worked_spec, [0, 1], worked_instance.output_tokens)
        )

    def test_empty_batch(self, worked_instance, worked_oracle):
        rows = worked_oracle.score_batch(worked_instance, [])
        assert rows.shape == (0, 1)

    def test_duplicate_masks_one_backend_call(self, worked_instance, worked_oracle):
        m = Mask((1, 0))
        rows = worked_oracle.score_batch(worked_instance, [m, m])
        np.testing.assert_array_equal(rows[0], rows[1])
        assert worked_oracle.score_calls == 1
        assert worked_oracle.cache_hits == 1

    def test_mask_length_checked(self, worked_instance, worked_oracle):
        with pytest.raises(DimensionError):
            worked_oracle.score_batch(worked_instance, [Mask((1, 0, 1))])

    def test_baseline_stability_bitwise(self, worked_instance, worked_oracle):
        a = worked_oracle.score_batch(worked_instance, [Mask.ones(2)])
        b = worked_oracle.score_batch(worked_instance, [Mask.ones(2)])
        assert a.tobytes() == b.tobytes()

    def test_cache_transparency(self, worked_instance, worked_spec):
        masks = [Mask((1, 0)), Mask((0, 0)), Mask((1, 0)), Mask((1, 1))]
        cached = ToyOracle(spec=worked_spec).score_batch(worked_instance, masks)
        fresh_rows = [
            ToyOracle(spec=worked_spec).score_batch(worked_instance, [m])[0]
            for m in masks
        ]
        np.testing.assert_array_equal(cached, np.stack(fresh_rows))

    def test_disk_spill_roundtrip(self, worked_instance, worked_spec, tmp_path):
        path = tmp_path / "cache.jsonl"
        first = ToyOracle(spec=worked_spec, cache_path=path)
        rows = first.score_batch(worked_instance, [Mask((1, 0))])
        second = ToyOracle(spec=worked_spec, cache_path=path)
        again = second.score_batch(worked_instance, [Mask((1, 0))])
        np.testing.assert_array_equal(rows, again)
        assert second.score_calls == 0  # served from the spilled cache


class TestAttention:
    def test_uniform_rows(self):
        spec_weights = np.zeros((2, 3, 2))
        from seqattrib import ToyModelSpec

        spec = ToyModelSpec(("A", "B"), spec_weights, np.zeros((2, 2)))
        inst = make_instance(3, ("A", "B"))
        oracle = ToyOracle(spec=spec)
        A = oracle.attention(inst)
        np.testing.assert_allclose(A, np.full((2, 3), 1 / 3), atol=1e-12)

    def test_capability_error(self, worked_instance, worked_spec):
        oracle = ToyOracle(spec=worked_spec)
        oracle._caps = BridgeCapabilities("<mask>", False, 64)
        with pytest.raises(CapabilityError):
            oracle.attention(worked_instance)

    def test_non_stochastic_rejected(self, worked_instance, worked_spec):
        class BadOracle(ToyOracle):
            def _attention_matrix(self, instance):
                return np.array([[0.5, 0.3]])  # sums to 0.8

        with pytest.raises(DataError):
            BadOracle(spec=worked_spec).attention(worked_instance)


BRIDGE_CMD = [sys.executable, "-m", "seqattrib.toy_bridge", "--seed", "0", "--d", "4", "--T", "2", "--V", "4"]


def toy_probe():
    return make_toy_instance(toy_generate(0, 4, 2, 4), seed=0, name="probe")


class TestSubprocessBridge:
    def test_roundtrip_matches_in_process(self):
        probe = toy_probe()
        spec = toy_generate(0, 4, 2, 4)
        masks = [Mask.ones(4), Mask.zeros(4), Mask((1, 0, 1, 0))]
        with BridgeOracle(SubprocessTransport(BRIDGE_CMD)) as remote:
            remote_rows = remote.score_batch(probe, masks)
            remote_attn = remote.attention(probe)
        local = ToyOracle(spec=spec)
        np.testing.assert_allclose(remote_rows, local.score_batch(probe, masks), atol=1e-12)
        np.testing.assert_allclose(remote_attn, local.attention(probe), atol=1e-12)

    def test_batch_splitting_invariance(self):
        probe = toy_probe()
        masks = [Mask(tuple(int(b) for b in f"{s:04b}")) for s in range(16)]
        with BridgeOracle(SubprocessTransport(BRIDGE_CMD)) as oracle:
            # shrink max_batch below the request count
            oracle._caps = BridgeCapabilities(
                oracle.capabilities.mask_token, True, 3
            )
            small = oracle.score_batch(probe, masks)
        with BridgeOracle(SubprocessTransport(BRIDGE_CMD)) as oracle:
            big = oracle.score_batch(probe, masks)
        np.testing.assert_array_equal(small, big)

    def test_positive_logprob_rejected(self, tmp_path):
        script = tmp_path / "bad_bridge.py"
        script.write_text(
            "import json,sys\n"
            'print(json.dumps({"type":"hello","mask_token":"<m>","supports_attention":False,"max_batch":8}),flush=True)\n'
            "for line in sys.stdin:\n"
            "    m=json.loads(line)\n"
            '    print(json.dumps({"type":"score_result","id":m["id"],"logprobs":[0.5]*len(m["output_tokens"])}),flush=True)\n'
        )
        probe = toy_probe()
        with BridgeOracle(SubprocessTransport([sys.executable, str(script)])) as oracle:
            with pytest.raises(DataError):
                oracle.score_batch(probe, [Mask.ones(4)])

    def test_truncated_vector_rejected(self, tmp_path):
        script = tmp_path / "short_bridge.py"
        script.write_text(
            "import json,sys\n"
            'print(json.dumps({"type":"hello","mask_token":"<m>","supports_attention":False,"max_batch":8}),flush=True)\n'
            "for line in sys.stdin:\n"
            "    m=json.loads(line)\n"
            '    print(json.dumps({"type":"score_result","id":m["id"],"logprobs":[-1.0]}),flush=True)\n'
        )
        probe = toy_probe()  # T == 2, bridge returns length 1
        with BridgeOracle(SubprocessTransport([sys.executable, str(script)])) as oracle:
            with pytest.raises(ProtocolError):
                oracle.score_batch(probe, [Mask.ones(4)])

    def test_malformed_announcement(self, tmp_path):
        script = tmp_path / "mute_bridge.py"
        script.write_text("print('not json', flush=True)\nimport time\ntime.sleep(5)\n")
        with pytest.raises(ProtocolError):
            BridgeOracle(SubprocessTransport([sys.executable, str(script)]))
