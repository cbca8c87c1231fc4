"""Command-line entry points: explain, evaluate, bridge-check, make-corpus.

Exit codes: 0 success, 1 conformance-check failure, 2 usage error,
3 bridge/environment failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .core import Instance, load_instances
from .errors import (
    CapabilityError,
    EvaluationError,
    SeqAttribError,
    TransportError,
)
from .explain import METHODS, ExplainerConfig, explain
from .faithfulness import (
    DEFAULT_K_GRID,
    MetricConfig,
    audit_to_csv,
    curves_to_csv,
    evaluate_methods,
)
from .oracle import BRIDGE_CMD_ENV, Oracle, SubprocessTransport, ToyOracle, open_bridge_oracle
from .report import render_report

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_ENVIRONMENT = 3


@dataclasses.dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    bridge: str
    engine_version: str
    wall_clock_s: float
    cache_hits: int
    cache_misses: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    tmp.replace(path)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--samples", type=int, default=1000, help="perturbations or permutations")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--kernel-width", type=float, default=0.75)
    parser.add_argument("--ridge", type=float, default=1e-6)
    parser.add_argument("--aggregation", choices=["sum", "mean", "sum_positive"], default="sum")
    parser.add_argument("--target", choices=["prediction", "gold"], default="gold",
                        help="explain the bridge's greedy prediction or the provided outputs")
    parser.add_argument("--bridge-cmd", help=f"bridge command (or set {BRIDGE_CMD_ENV})")
    parser.add_argument("--bridge-url", help="HTTP bridge endpoint")
    parser.add_argument("--toy", action="store_true", help="use the in-process toy model")
    parser.add_argument("--toy-spec", help="toy model spec JSON (with --toy)")
    parser.add_argument("--cache", help="on-disk score cache (JSON lines)")


def _make_config(args, method: str) -> ExplainerConfig:
    return ExplainerConfig(
        method=method,
        n_samples=args.samples,
        kernel_width=args.kernel_width,
        ridge_lambda=args.ridge,
        seed=args.seed,
    )


def _open_oracle(args) -> tuple[Oracle, str]:
    if args.toy:
        spec = None
        if args.toy_spec:
            from .toymodel import ToyModelSpec

            spec = ToyModelSpec.load(args.toy_spec)
        return ToyOracle(spec=spec, cache_path=args.cache), "toy"
    oracle = open_bridge_oracle(
        bridge_cmd=args.bridge_cmd, bridge_url=args.bridge_url, cache_path=args.cache
    )
    identity = args.bridge_url or args.bridge_cmd or os.environ.get(BRIDGE_CMD_ENV, "")
    return oracle, identity


def _manifest(args, command: str, oracle: Oracle, bridge: str, started: float) -> RunManifest:
    config = {
        k: v
        for k, v in vars(args).items()
        if k not in ("func",) and not k.startswith("_")
    }
    return RunManifest(
        command=command,
        config=config,
        seed=args.seed,
        bridge=bridge,
        engine_version=__version__,
        wall_clock_s=round(time.monotonic() - started, 3),
        cache_hits=oracle.cache_hits,
        cache_misses=oracle.cache_misses,
    )


def cmd_explain(args) -> int:
    started = time.monotonic()
    try:
        instances = load_instances(args.instance)
        if len(instances) != 1:
            print(f"error: {args.instance} must contain exactly one instance", file=sys.stderr)
            return EXIT_USAGE
        instance = instances[0]
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: invalid instance file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.method not in METHODS:
        print(f"error: unknown method {args.method!r}; valid: {', '.join(METHODS)}", file=sys.stderr)
        return EXIT_USAGE

    try:
        oracle, bridge = _open_oracle(args)
    except (TransportError, SeqAttribError) as exc:
        print(f"error: bridge failure: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT

    try:
        with oracle:
            if args.target == "prediction":
                predicted = oracle.generate(instance)
                instance = Instance(
                    input_tokens=instance.input_tokens,
                    features=instance.features,
                    output_tokens=tuple(predicted),
                    metadata=dict(instance.metadata),
                )
            matrix = explain(instance, oracle, _make_config(args, args.method))
            manifest = _manifest(args, "explain", oracle, bridge, started)
    except (CapabilityError, TransportError) as exc:
        print(f"error: bridge failure: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except SeqAttribError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT

    payload = matrix.to_dict(instance)
    payload["manifest"] = manifest.to_dict()
    if args.out:
        _atomic_write(Path(args.out), json.dumps(payload, indent=2) + "\n")
        print(f"wrote {args.out}")
    if args.html:
        html_doc = render_report(
            instance,
            matrix,
            aggregation=args.aggregation,
            manifest=manifest.to_dict(),
            title=f"Attribution: {instance.metadata.get('id', Path(args.instance).stem)}",
        )
        _atomic_write(Path(args.html), html_doc)
        print(f"wrote {args.html}")
    if not args.out and not args.html:
        print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.monotonic()
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        print(
            f"error: unknown methods {', '.join(unknown)}; valid: {', '.join(METHODS)}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    k_grid = tuple(int(k) for k in args.k.split(","))

    corpus_path = Path(args.corpus)
    corpus: list[Instance] = []
    try:
        if corpus_path.is_dir():
            for path in sorted(corpus_path.iterdir()):
                if path.suffix in (".json", ".jsonl"):
                    corpus.extend(load_instances(path))
        else:
            corpus = load_instances(corpus_path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: invalid corpus: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not corpus:
        print(f"error: no instances found under {args.corpus}", file=sys.stderr)
        return EXIT_USAGE

    metric_config = MetricConfig(
        k_grid=k_grid,
        aggregation=args.aggregation,
        explain_target="model_prediction" if args.target == "prediction" else "gold",
    )
    explainer_config = _make_config(args, methods[0])

    try:
        oracle, bridge = _open_oracle(args)
    except (TransportError, SeqAttribError) as exc:
        print(f"error: bridge failure: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT

    try:
        with oracle:
            result = evaluate_methods(
                corpus, methods, explainer_config, metric_config, oracle
            )
            manifest = _manifest(args, "evaluate", oracle, bridge, started)
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except (TransportError, SeqAttribError) as exc:
        print(f"error: bridge failure: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_name = "run_manifest.json"
    header = f"# manifest: {manifest_name}\n"
    _atomic_write(out_dir / "curves.csv", header + curves_to_csv(result.curves))
    _atomic_write(out_dir / "audit.csv", header + audit_to_csv(result.audit))
    _atomic_write(out_dir / manifest_name, json.dumps(manifest.to_dict(), indent=2) + "\n")
    print(f"wrote {out_dir / 'curves.csv'} ({len(result.curves)} curves)")
    print(f"wrote {out_dir / 'audit.csv'} ({len(result.audit)} rows)")
    if result.skipped:
        for inst_id, method, reason in result.skipped:
            print(f"warning: skipped {inst_id} / {method}: {reason}", file=sys.stderr)
        print(f"{len(result.skipped)} instance/method pairs skipped", file=sys.stderr)
    return EXIT_OK


def cmd_bridge_check(args) -> int:
    from .bridgecheck import run_bridge_checks

    if args.instance:
        try:
            probe = load_instances(args.instance)[0]
        except (OSError, ValueError, KeyError, IndexError, json.JSONDecodeError) as exc:
            print(f"error: invalid probe instance: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        # matches the defaults of `python -m seqattrib.toy_bridge`
        from .toymodel import make_toy_instance, toy_generate

        probe = make_toy_instance(toy_generate(0, 4, 2, 4), seed=0, name="probe")

    cmd = args.bridge_cmd or os.environ.get(BRIDGE_CMD_ENV)
    if not cmd:
        print(f"error: pass --bridge-cmd or set {BRIDGE_CMD_ENV}", file=sys.stderr)
        return EXIT_USAGE
    try:
        transport = SubprocessTransport(cmd)
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT

    try:
        results = run_bridge_checks(transport, probe)
    except TransportError as exc:
        print(f"error: transport failure: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    finally:
        transport.close()

    all_ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        all_ok = all_ok and res.passed
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def cmd_make_corpus(args) -> int:
    from .toymodel import make_toy_corpus

    corpus = make_toy_corpus(seed=args.seed, n=args.n)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(inst.to_dict()) for inst in corpus]
    _atomic_write(out, "\n".join(lines) + "\n")
    print(f"wrote {out} ({len(corpus)} instances)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqattrib",
        description="Per-output-token feature attribution and faithfulness evaluation",
    )
    parser.add_argument("--version", action="version", version=f"seqattrib {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("explain", help="explain one instance, write JSON/HTML")
    p.add_argument("--instance", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--out", help="attribution JSON output path")
    p.add_argument("--html", help="HTML saliency report output path")
    _add_common_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="faithfulness curves over a corpus")
    p.add_argument("--corpus", required=True, help="directory or JSON-lines file")
    p.add_argument("--methods", required=True, help="comma-separated method names")
    p.add_argument("--k", default=",".join(str(k) for k in DEFAULT_K_GRID))
    p.add_argument("--out-dir", default="eval_out")
    _add_common_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bridge-check", help="bridge protocol conformance checks")
    p.add_argument("--bridge-cmd")
    p.add_argument("--instance", help="probe instance (defaults to the toy probe)")
    p.set_defaults(func=cmd_bridge_check)

    p = sub.add_parser("make-corpus", help="write the bundled toy corpus")
    p.add_argument("--out", default="toy_corpus.jsonl")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n", type=int, default=20)
    p.set_defaults(func=cmd_make_corpus)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
