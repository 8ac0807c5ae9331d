"""Command-line pipeline: discover, refine, synthesize, train weights, evaluate.

Exit codes: 0 success, 2 usage, 3 input/output, 4 numeric failure,
5 LLM client failure. Every command writes a key=value config snapshot to
its output directory and can be rerun from it via --config.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

from . import data as data_io
from . import graphs as graph_io
from . import hybrid, lingam, metrics, notears, pc, refiner
from .errors import ClientError, DataError, GraphError, NumericError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_CLIENT = 5

API_KEY_ENV = "ALCM_LLM_API_KEY"

# keys coerced when reading config snapshots
_INT_KEYS = {"seed", "d", "n", "max_cond", "max_iter", "corpus", "epochs", "max_additions", "max_outer"}
_FLOAT_KEYS = {
    "alpha", "prune_threshold", "lambda1", "w_threshold", "h_tol", "tau",
    "edge_probability", "lr", "llm_temperature",
}
_BOOL_KEYS = {"standardize", "no_additions", "allow_new_nodes"}


def _seed_for(seed: int, name: str) -> int:
    """Named substream: derive a child seed deterministically from the root."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def _load_config(path: str) -> dict:
    if not os.path.isfile(path):
        raise data_io.MissingFile(f"no such config file: {path}")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if value == "":
                out[key] = None
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key in _BOOL_KEYS:
                out[key] = value.lower() == "true"
            else:
                out[key] = value
    out.pop("command", None)
    return out


def _write_snapshot(outdir: str, command: str, args: argparse.Namespace) -> None:
    skip = {"func", "config", "out"}
    lines = [f"command={command}"]
    for key in sorted(vars(args)):
        if key in skip:
            continue
        value = getattr(args, key)
        if value is None:
            value = ""
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    with open(os.path.join(outdir, "run.cfg"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write(outdir: str, name: str, text: str) -> str:
    path = os.path.join(outdir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _load_dataset(args) -> data_io.Dataset:
    ds = data_io.load_csv(args.data)
    return data_io.preprocess(ds, impute=args.impute, standardize=args.standardize)


def _load_truth(path: str, ds: data_io.Dataset) -> graph_io.CausalGraph:
    return data_io.load_ground_truth(path, ds.variables)


def _make_tester(args, ds, truth):
    if args.ci_tester == "oracle":
        if truth is None:
            raise ValueError("--ci-tester oracle requires --truth")
        return pc.DSeparationOracle(truth)
    return pc.AutoTester(ds, alpha=args.alpha)


def _make_client(args, truth):
    backend = args.llm
    if backend == "oracle":
        if truth is None:
            raise ValueError("--llm oracle requires --truth")
        return refiner.TruthOracle(truth)
    if backend.startswith("mock:"):
        path = backend[len("mock:"):]
        if not os.path.isfile(path):
            raise data_io.MissingFile(f"no such mock script: {path}")
        with open(path, encoding="utf-8") as fh:
            responses = json.load(fh)
        if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
            raise data_io.MalformedDocument("mock script must be a JSON array of strings")
        return refiner.ScriptedMock(responses)
    if backend == "http":
        cfg = refiner.LlmConfig(
            base_url=args.llm_base_url or "https://api.openai.com/v1",
            model=args.llm_model or "gpt-4",
            api_key=os.environ.get(API_KEY_ENV, ""),
            temperature=args.llm_temperature,
        )
        return refiner.HttpChatClient(cfg)
    raise ValueError(f"unknown llm backend: {backend!r}")


def _discover_graph(args, ds, truth):
    """Run the selected engine; returns (graph, trace dict)."""
    method = args.method
    if method == "pc":
        tester = _make_tester(args, ds, truth)
        g = pc.run_pc(tester=tester, max_cond=args.max_cond)
        return g, {"method": "pc", "alpha": args.alpha, "ci_tester": args.ci_tester}
    if method == "lingam":
        g = lingam.run_lingam(
            ds, prune_threshold=args.prune_threshold,
            seed=_seed_for(args.seed, "lingam"), max_iter=args.max_iter,
        )
        return g, {"method": "lingam", "prune_threshold": args.prune_threshold}
    if method == "notears":
        g = notears.run_notears(
            ds, w_threshold=args.w_threshold, lambda1=args.lambda1, h_tol=args.h_tol
        )
        return g, {"method": "notears", "w_threshold": args.w_threshold,
                   "lambda1": args.lambda1, "h_tol": args.h_tol}
    # hybrid
    engine_graphs = {
        "pc": pc.run_pc(tester=_make_tester(args, ds, truth), max_cond=args.max_cond),
        "lingam": lingam.run_lingam(
            ds, prune_threshold=args.prune_threshold, seed=_seed_for(args.seed, "lingam")
        ),
        "notears": notears.run_notears(
            ds, w_threshold=args.w_threshold, lambda1=args.lambda1, h_tol=args.h_tol
        ),
    }
    reference = truth if truth is not None else hybrid.union_graph(list(engine_graphs.values()))
    outputs = hybrid.method_outputs(engine_graphs, reference)
    if args.net:
        net = hybrid.WeightNet.load(args.net)
        features = hybrid.build_features(outputs, ds.n)
        weights = hybrid.net_forward(net, features)
        weight_source = "net"
    else:
        weights = hybrid.normalize_weights([o.report.composite for o in outputs])
        weight_source = "normalized_composites"
    g = hybrid.combine(outputs, weights, tau=args.tau)
    trace = {
        "method": "hybrid",
        "tau": args.tau,
        "weight_source": weight_source,
        "weights": {
            "pc": weights.w_pc, "lingam": weights.w_lingam, "notears": weights.w_notears
        },
        "reference": "truth" if truth is not None else "union_proxy",
        "per_method_composite": {o.method: o.report.composite for o in outputs},
    }
    return g, trace


def cmd_discover(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    _write_snapshot(args.out, "discover", args)
    ds = _load_dataset(args)
    truth = _load_truth(args.truth, ds) if args.truth else None
    g, trace = _discover_graph(args, ds, truth)
    _write(args.out, "initial_graph.json", graph_io.to_json(g))
    _write(args.out, "initial_graph.dot", graph_io.to_dot(g))
    _write(args.out, "trace.json", json.dumps(trace, indent=2, sort_keys=True) + "\n")
    if truth is not None:
        report = metrics.evaluate(g, truth)
        _write(args.out, "report.json", report.to_json())
        print(metrics.format_report_table({args.method: report}))
    else:
        print(f"{args.method}: wrote graph with {g.edge_count()} edges (no ground truth given)")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    _write_snapshot(args.out, "pipeline", args)
    ds = _load_dataset(args)
    truth = _load_truth(args.truth, ds) if args.truth else None
    g, trace = _discover_graph(args, ds, truth)
    _write(args.out, "initial_graph.json", graph_io.to_json(g))
    _write(args.out, "initial_graph.dot", graph_io.to_dot(g))
    _write(args.out, "trace.json", json.dumps(trace, indent=2, sort_keys=True) + "\n")

    report_before = metrics.evaluate(g, truth) if truth is not None else None
    if report_before is not None:
        _write(args.out, "report_before.json", report_before.to_json())

    if args.refine == "off":
        _write(args.out, "refined_graph.json", graph_io.to_json(g))
        _write(args.out, "refined_graph.dot", graph_io.to_dot(g))
        if report_before is not None:
            _write(args.out, "report_after.json", report_before.to_json())
            print(metrics.format_report_table({"before": report_before, "after": report_before}))
        return EXIT_OK

    client = _make_client(args, truth)
    policy = refiner.RefinePolicy(
        min_add_confidence=refiner.Confidence[args.min_add_confidence.upper()],
        on_unparseable=args.on_unparseable,
        additions_enabled=not args.no_additions,
        max_additions=args.max_additions,
        allow_new_nodes=args.allow_new_nodes,
    )
    try:
        refined, logbook = refiner.refine(
            g, list(ds.variables), args.domain, client, policy,
            algorithm_name=args.method,
        )
    except refiner.ClientFailure as exc:
        if exc.log is not None:
            _write(args.out, "refinement_log.jsonl", exc.log.to_jsonl())
        raise
    _write(args.out, "refinement_log.jsonl", logbook.to_jsonl())
    _write(args.out, "refined_graph.json", graph_io.to_json(refined))
    _write(args.out, "refined_graph.dot", graph_io.to_dot(refined))

    delta = {
        "edges_before": g.edge_count(),
        "edges_after": refined.edge_count(),
        "counters": logbook.counters(),
    }
    if truth is not None:
        report_after = metrics.evaluate(refined, truth)
        _write(args.out, "report_after.json", report_after.to_json())
        delta["before"] = json.loads(report_before.to_json())
        delta["after"] = json.loads(report_after.to_json())
        delta["improvement"] = {
            key: delta["after"][key] - delta["before"][key] for key in delta["after"]
        }
        print(metrics.format_report_table({"before": report_before, "after": report_after}))
    else:
        print(f"refined: {g.edge_count()} -> {refined.edge_count()} edges; "
              f"counters {logbook.counters()}")
    _write(args.out, "delta.json", json.dumps(delta, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _write_csv(ds: data_io.Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(ds.names) + "\n")
        for row in ds.rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def cmd_synth(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    _write_snapshot(args.out, "synth", args)
    spec = data_io.ScmSpec(
        d=args.d,
        edge_probability=args.edge_probability,
        noise_kind=args.noise,
        seed=_seed_for(args.seed, "scm"),
    )
    ds, truth = data_io.sample_scm(spec, args.n)
    _write_csv(ds, os.path.join(args.out, "data.csv"))
    data_io.save_ground_truth(truth, os.path.join(args.out, "truth.edges"))
    print(f"wrote {args.n} samples over {args.d} variables "
          f"({len(truth.directed_edges())} true edges) to {args.out}")
    return EXIT_OK


def cmd_train_weights(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    _write_snapshot(args.out, "train-weights", args)
    corpus = hybrid.generate_corpus(args.corpus, seed=_seed_for(args.seed, "corpus"))
    net, mse = hybrid.train_net(
        corpus, lr=args.lr, epochs=args.epochs, seed=_seed_for(args.seed, "train")
    )
    net.save(os.path.join(args.out, "weight_net.json"))
    summary = {"corpus_size": args.corpus, "final_mse": mse, "epochs": args.epochs, "lr": args.lr}
    _write(args.out, "train_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"trained weight net on {args.corpus} instances; final MSE {mse:.3e}")
    return EXIT_OK


def _load_graph_file(path: str) -> graph_io.CausalGraph:
    if not os.path.isfile(path):
        raise data_io.MissingFile(f"no such file: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        return graph_io.from_json(text)
    # edge list: infer the node set from the edges themselves
    names: list[str] = []
    for line in text.splitlines():
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "->" not in stripped:
            raise data_io.MalformedDocument(f"bad edge line: {stripped!r}")
        for part in stripped.split("->", 1):
            name = part.strip()
            if name not in names:
                names.append(name)
    variables = [data_io.VariableMeta(n) for n in names]
    return data_io.load_ground_truth(path, variables)


def cmd_evaluate(args) -> int:
    pred = _load_graph_file(args.pred)
    truth = _load_graph_file(args.truth_file)
    if set(pred.nodes) != set(truth.nodes):
        # edge lists only mention connected nodes; pad each side with the union
        union = sorted(set(pred.nodes) | set(truth.nodes))
        pred = pred.with_nodes_added([n for n in union if n not in pred.nodes])
        truth = truth.with_nodes_added([n for n in union if n not in truth.nodes])
    report = metrics.evaluate(pred, truth)
    print(metrics.format_report_table({"prediction": report}))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_snapshot(args.out, "evaluate", args)
        _write(args.out, "report.json", report.to_json())
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file supplying defaults")
    p.add_argument("--seed", type=int, default=0, help="root seed for all substreams")
    p.add_argument("--out", default="out", help="output directory")


def _add_data_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=False, help="CSV dataset path")
    p.add_argument("--truth", help="ground-truth edge list path")
    p.add_argument("--impute", choices=["drop", "mean"], default="mean")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--domain", default="", help="dataset domain for prompt metadata")


def _add_engine_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["pc", "lingam", "notears", "hybrid"], default="pc")
    p.add_argument("--ci-tester", dest="ci_tester", choices=["auto", "oracle"], default="auto")
    p.add_argument("--alpha", type=float, default=0.05, help="CI test significance level")
    p.add_argument("--max-cond", dest="max_cond", type=int, default=None)
    p.add_argument("--prune-threshold", dest="prune_threshold", type=float, default=0.1)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=500)
    p.add_argument("--lambda1", type=float, default=0.1)
    p.add_argument("--w-threshold", dest="w_threshold", type=float, default=0.3)
    p.add_argument("--h-tol", dest="h_tol", type=float, default=1e-8)
    p.add_argument("--tau", type=float, default=0.5, help="hybrid vote threshold")
    p.add_argument("--net", help="trained weight-net JSON path (hybrid)")


def _add_llm_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--llm", default="http",
                   help="llm backend: http, oracle, or mock:<script path>")
    p.add_argument("--llm-base-url", dest="llm_base_url", default=None)
    p.add_argument("--llm-model", dest="llm_model", default=None)
    p.add_argument("--llm-temperature", dest="llm_temperature", type=float, default=0.0)
    p.add_argument("--refine", choices=["on", "off"], default="on")
    p.add_argument("--no-additions", dest="no_additions", action="store_true")
    p.add_argument("--max-additions", dest="max_additions", type=int, default=5)
    p.add_argument("--min-add-confidence", dest="min_add_confidence",
                   choices=["low", "moderate", "high", "very_high"], default="high")
    p.add_argument("--on-unparseable", dest="on_unparseable",
                   choices=["keep_unchanged", "fail"], default="keep_unchanged")
    p.add_argument("--allow-new-nodes", dest="allow_new_nodes", action="store_true")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="alcm",
        description="Causal discovery with hybrid voting and LLM-driven refinement",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    p = commands["discover"] = sub.add_parser(
        "discover", help="run one discovery engine on a dataset"
    )
    _add_common(p)
    _add_data_options(p)
    _add_engine_options(p)
    p.set_defaults(func=cmd_discover)

    p = commands["pipeline"] = sub.add_parser(
        "pipeline", help="discover, wrap, refine, evaluate"
    )
    _add_common(p)
    _add_data_options(p)
    _add_engine_options(p)
    _add_llm_options(p)
    p.set_defaults(func=cmd_pipeline)

    p = commands["synth"] = sub.add_parser("synth", help="sample a synthetic SCM dataset")
    _add_common(p)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--edge-probability", dest="edge_probability", type=float, default=0.3)
    p.add_argument("--noise", choices=["gaussian", "uniform"], default="gaussian")
    p.set_defaults(func=cmd_synth)

    p = commands["train-weights"] = sub.add_parser(
        "train-weights", help="train the hybrid weight network"
    )
    _add_common(p)
    p.add_argument("--corpus", type=int, default=200)
    p.add_argument("--epochs", type=int, default=3000)
    p.add_argument("--lr", type=float, default=0.05)
    p.set_defaults(func=cmd_train_weights)

    p = commands["evaluate"] = sub.add_parser(
        "evaluate", help="compare a predicted graph against a reference"
    )
    p.add_argument("pred", help="graph JSON or edge-list file")
    p.add_argument("truth_file", help="graph JSON or edge-list file")
    p.add_argument("--config", help="key=value config file supplying defaults")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    return parser, commands


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()

    # pre-pass: apply config-file values as defaults on the subcommand parser
    # (top-level set_defaults would be clobbered by subparser defaults)
    if "--config" in argv and argv and argv[0] in commands:
        cfg_path = argv[argv.index("--config") + 1]
        overrides = _load_config(cfg_path)
        sub = commands[argv[0]]
        known = {action.dest for action in sub._actions}
        sub.set_defaults(**{k: v for k, v in overrides.items() if k in known})

    args = parser.parse_args(argv)
    try:
        if getattr(args, "data", None) is None and args.command in ("discover", "pipeline"):
            parser.error(f"{args.command} requires --data")
        return args.func(args)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ClientError as exc:
        print(f"llm client error: {exc}", file=sys.stderr)
        return EXIT_CLIENT
    except (NumericError, GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
