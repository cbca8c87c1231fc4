"""Talk to a model over the subprocess wire protocol.

Starts the toy bridge server as a child process, runs the conformance
checks against it, then explains an instance through the same transport.
Any model wrapped in a process that speaks the JSON-lines protocol
(hello/score/attention) can be swapped in via --bridge-cmd or the
SEQATTRIB_BRIDGE_CMD environment variable.
"""

import sys

from seqattrib import ExplainerConfig, aggregate_attribution, explain, open_bridge_oracle
from seqattrib.bridgecheck import run_bridge_checks
from seqattrib.toymodel import make_toy_instance, toy_generate

bridge_cmd = f"{sys.executable} -m seqattrib.toy_bridge --seed 11 --d 5 --T 2 --V 4"
instance = make_toy_instance(toy_generate(seed=11, d=5, T=2, V=4), seed=11)

with open_bridge_oracle(bridge_cmd=bridge_cmd) as oracle:
    for check in run_bridge_checks(oracle.transport, instance):
        mark = "ok " if check.passed else "FAIL"
        print(f"[{mark}] {check.name}: {check.detail}")

    matrix = explain(instance, oracle, ExplainerConfig(method="lerg_s", n_samples=200, seed=0))
    saliency = aggregate_attribution(matrix, mode="sum")
    for feature, score in zip(instance.features, saliency.scores):
        print(f"  {feature.name}: {score:+.4f}")

    print("score calls over the wire:", oracle.score_calls)
