"""Command-line surface for reproducible influence-structure runs.

Five subcommands tie the library together:

* ``simulate`` draws a spike panel from a TOML-described network and
  writes the panel, the ground-truth graph, and a run manifest;
* ``infer`` recovers an influence graph from a panel (estimated rates)
  or from a small model file (exact values) with any of the three
  structure algorithms, writing graph JSON, DOT, the full table of
  computed values, and per-node recovery details where applicable;
* ``query`` answers blocking queries (``csep``) on a graph file and
  variable-level separation queries (``dsep``) on a model file;
* ``exact`` prints one directed-information value for a model file;
* ``export-dot`` renders graph or model files for graphviz.

Every run that writes files also writes a ``manifest`` recording the
inputs, outputs (with content hashes), seed, thresholds, tool version,
and wall time.  Reruns with identical inputs produce byte-identical
output files.  Exit codes: 0 success, 2 usage or configuration error,
3 estimation failure, 4 enumeration capacity exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .estimate import EstimatedDIOracle, EstimationError, make_estimated_oracle
from .exactinfo import EPS_BITS, ProcessSelector, cc_directed_information
from .graphquery import d_separates, explain_c_separation, unroll_dbn, unrolled_to_dot
from .model import (
    CapacityError,
    enumerate_joint,
    load_model,
    panel_from_csv,
    panel_to_csv,
)
from .sim import SimConfig, simulate_glm_network
from .structure import (
    BoundedRecoveryResult,
    DIOracle,
    DirectedGraph,
    ExactDIOracle,
    bounded_recovery,
    di_construct,
    graph_from_json,
    graph_to_dot,
    graph_to_json,
    mgm_construct,
)

__all__ = ["RunManifest", "main"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ESTIMATION = 3
EXIT_CAPACITY = 4


# == 1. manifests ==


@dataclass
class RunManifest:
    """Reproducibility record written beside every run's outputs."""

    subcommand: str
    config: str | None
    inputs: dict[str, str]
    outputs: dict[str, dict[str, str]]
    seed: int | None
    thresholds: dict[str, float]
    version: str
    wall_time_s: float

    def to_json(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {k: dict(v) for k, v in sorted(self.outputs.items())},
            "seed": self.seed,
            "thresholds": dict(sorted(self.thresholds.items())),
            "version": self.version,
            "wall_time_s": self.wall_time_s,
        }


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    manifest_path: Path,
    *,
    subcommand: str,
    started: float,
    outputs: Mapping[str, Path],
    config: str | None = None,
    inputs: Mapping[str, str] | None = None,
    seed: int | None = None,
    thresholds: Mapping[str, float] | None = None,
) -> None:
    manifest = RunManifest(
        subcommand=subcommand,
        config=config,
        inputs=dict(inputs or {}),
        outputs={
            name: {"path": str(path), "sha256": _sha256(path)}
            for name, path in outputs.items()
        },
        seed=seed,
        thresholds=dict(thresholds or {}),
        version=__version__,
        wall_time_s=round(time.monotonic() - started, 3),
    )
    manifest_path.write_text(json.dumps(manifest.to_json(), indent=2) + "\n")


# == 2. name and query parsing ==


def _parse_index(token: str) -> int:
    token = token.strip()
    if not token:
        raise ValueError("empty process name in query")
    if token.lstrip("-").isdigit():
        value = int(token)
        if value < 0:
            raise ValueError(f"process index {value} is negative")
        return value
    if len(token) == 1 and "A" <= token <= "Z":
        return ord(token) - ord("A")
    raise ValueError(
        f"unknown node name {token!r}: use indices (0, 1, ...) or letters (A=0, B=1, ...)"
    )


def _parse_index_set(text: str) -> frozenset[int]:
    return frozenset(_parse_index(t) for t in text.split(",") if t.strip())


def _parse_node(token: str) -> tuple[int, int]:
    left, sep, right = token.strip().partition(":")
    if not sep:
        raise ValueError(
            f"node {token!r} must look like process:time, for example 0:3 or B:1"
        )
    try:
        t = int(right)
    except ValueError:
        raise ValueError(f"node {token!r} has a non-integer time {right!r}") from None
    return (_parse_index(left), t)


def _parse_node_set(text: str) -> frozenset[tuple[int, int]]:
    return frozenset(_parse_node(t) for t in text.split(",") if t.strip())


def _split_three(body: str) -> tuple[str, str, str]:
    parts = body.split("|")
    if len(parts) != 3:
        raise ValueError(
            'separation queries take three |-separated sets: "U | Z | W" '
            "(a set may be empty)"
        )
    return parts[0], parts[1], parts[2]


def _parse_selector(text: str) -> ProcessSelector:
    head, sep, cond = text.partition("||")
    left, arrow, right = head.partition("->")
    if not arrow:
        raise ValueError(
            'value queries look like "SOURCES -> TARGET" or '
            '"SOURCES -> TARGET || CONDITIONING"'
        )
    sources = _parse_index_set(left)
    if not sources:
        raise ValueError("the source set is empty")
    target_tokens = [t for t in right.split(",") if t.strip()]
    if len(target_tokens) != 1:
        raise ValueError(f"expected exactly one target, got {right.strip()!r}")
    conditioning = _parse_index_set(cond) if sep else frozenset()
    return ProcessSelector(
        sources=sources,
        target=_parse_index(target_tokens[0]),
        conditioning=conditioning,
    )


def _name(i: int) -> str:
    return chr(ord("A") + i) if i < 26 else str(i)


# == 3. simulate ==


_SIM_KEYS = {
    "m",
    "n",
    "window",
    "seed",
    "bin_width",
    "baseline_rate",
    "coeff_mean",
    "coeff_sd",
    "parents",
    "coefficients",
}


def _load_sim_config(path: str, seed_override: int | None) -> SimConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise ValueError(f"config {path} is not valid TOML: {err}") from None
    unknown = sorted(set(raw) - _SIM_KEYS)
    if unknown:
        raise ValueError(f"config {path} has unknown keys {unknown}")
    for key in ("m", "n"):
        if key not in raw:
            raise ValueError(f"config {path} must set {key}")
    parents = {
        int(k): frozenset(int(p) for p in v)
        for k, v in raw.get("parents", {}).items()
    }
    coefficients = None
    if "coefficients" in raw:
        coefficients = {}
        for k, spec in raw["coefficients"].items():
            if "intercept" not in spec or "history" not in spec:
                raise ValueError(
                    f"coefficients entry {k!r} needs both intercept and history"
                )
            coefficients[int(k)] = (float(spec["intercept"]), spec["history"])
    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ValueError("a seed is required: set it in the config or pass --seed")
    options = {
        key: raw[key]
        for key in ("window", "bin_width", "baseline_rate", "coeff_mean", "coeff_sd")
        if key in raw
    }
    return SimConfig(
        m=int(raw["m"]),
        n=int(raw["n"]),
        parents=parents,
        seed=int(seed),
        coefficients=coefficients,
        **options,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    cfg = _load_sim_config(args.config, args.seed)
    panel, _ = simulate_glm_network(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    panel_path = out_dir / "panel.csv"
    panel_to_csv(panel, panel_path)
    graph = DirectedGraph.from_parent_map(cfg.m, cfg.parents)
    graph_path = out_dir / "truth_graph.json"
    graph_path.write_text(json.dumps(graph_to_json(graph), indent=2, sort_keys=True) + "\n")

    _write_manifest(
        out_dir / "manifest.json",
        subcommand="simulate",
        started=started,
        outputs={"panel": panel_path, "truth_graph": graph_path},
        config=str(args.config),
        seed=cfg.seed,
    )
    print(f"wrote {panel_path} ({cfg.m} processes x {cfg.n} bins)")
    print(f"wrote {graph_path}")
    print(f"wrote {out_dir / 'manifest.json'}")
    return EXIT_OK


# == 4. infer ==


def _estimates_rows(oracle: DIOracle) -> list[dict[str, str]]:
    rate_log = getattr(oracle, "rate_log", {})
    rows = []
    for record in oracle.query_log:
        key = (record.sources, record.target, record.conditioning)
        rate = rate_log.get(key)
        rows.append(
            {
                "target": str(record.target),
                "sources": ";".join(str(s) for s in sorted(record.sources)),
                "conditioning": ";".join(str(c) for c in sorted(record.conditioning)),
                "h1": f"{rate.h_base:.9f}" if rate is not None else "",
                "h2": f"{rate.h_full:.9f}" if rate is not None else "",
                "value": f"{record.value:.9f}",
            }
        )
    return rows


def _write_estimates_csv(path: Path, oracle: DIOracle) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["target", "sources", "conditioning", "h1", "h2", "value"]
        )
        writer.writeheader()
        writer.writerows(_estimates_rows(oracle))


def _edge_labels(oracle: DIOracle, graph: DirectedGraph) -> dict[tuple[int, int], float]:
    labels: dict[tuple[int, int], float] = {}
    for record in oracle.query_log:
        if len(record.sources) == 1:
            (k,) = tuple(record.sources)
            if graph.has_edge(k, record.target):
                labels[(k, record.target)] = record.value
    return labels


def _details_json(result: BoundedRecoveryResult) -> list[dict]:
    out = []
    for detail in result.details:
        out.append(
            {
                "target": detail.target,
                "bound": detail.bound,
                "values": [
                    {"block": sorted(block), "value": value}
                    for block, value in sorted(
                        detail.values, key=lambda kv: sorted(kv[0])
                    )
                ],
                "maximal": [sorted(block) for block in sorted(detail.maximal, key=sorted)],
                "parents": sorted(detail.parents),
                "empty_intersection": detail.empty_intersection,
            }
        )
    return out


def cmd_infer(args: argparse.Namespace) -> int:
    started = time.monotonic()
    if args.method == "alg3" and args.k is None:
        print("error: alg3 needs an in-degree bound: pass --k", file=sys.stderr)
        return EXIT_USAGE
    if (args.panel is None) == (args.model is None):
        print(
            "error: pass exactly one input: --panel PANEL.csv or --model MODEL.json",
            file=sys.stderr,
        )
        return EXIT_USAGE
    if args.exact and args.model is None:
        print("error: --exact needs --model MODEL.json", file=sys.stderr)
        return EXIT_USAGE

    inputs: dict[str, str] = {}
    if args.model is not None:
        model = load_model(args.model)
        joint = enumerate_joint(model)
        oracle: DIOracle = ExactDIOracle(joint)
        m = model.m
        eps = args.threshold if args.threshold is not None else EPS_BITS
        inputs["model"] = str(args.model)
    else:
        panel = panel_from_csv(args.panel)
        oracle = make_estimated_oracle(panel, window=args.window)
        m = panel.m
        eps = args.threshold if args.threshold is not None else oracle.threshold
        inputs["panel"] = str(args.panel)

    jobs = args.jobs if args.jobs else (os.cpu_count() or 1)
    thresholds: dict[str, float] = {"threshold": eps}
    result: BoundedRecoveryResult | None = None
    try:
        if args.method == "alg1":
            graph = mgm_construct(oracle, m, eps=eps, jobs=jobs)
        elif args.method == "alg2":
            graph = di_construct(oracle, m, eps=eps, jobs=jobs)
        else:
            thresholds["delta"] = args.delta
            result = bounded_recovery(
                oracle, m, args.k, delta=args.delta, eps=eps, jobs=jobs
            )
            graph = result.graph
    except EstimationError as err:
        print(f"error: {err}", file=sys.stderr)
        if err.report is not None:
            print(json.dumps(err.report.to_json(), indent=2), file=sys.stderr)
        return EXIT_ESTIMATION

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, Path] = {}

    graph_path = out_dir / "graph.json"
    graph_path.write_text(json.dumps(graph_to_json(graph), indent=2, sort_keys=True) + "\n")
    outputs["graph"] = graph_path

    dot_path = out_dir / "graph.dot"
    dot_path.write_text(graph_to_dot(graph, edge_labels=_edge_labels(oracle, graph)))
    outputs["dot"] = dot_path

    estimates_path = out_dir / "estimates.csv"
    _write_estimates_csv(estimates_path, oracle)
    outputs["estimates"] = estimates_path

    if result is not None:
        details_path = out_dir / "details.json"
        details_path.write_text(json.dumps(_details_json(result), indent=2) + "\n")
        outputs["details"] = details_path

    _write_manifest(
        out_dir / "manifest.json",
        subcommand=f"infer:{args.method}",
        started=started,
        outputs=outputs,
        inputs=inputs,
        seed=None,
        thresholds=thresholds,
    )
    edges = graph.edges()
    print(f"recovered {len(edges)} edges with {args.method} "
          f"({oracle.query_count} oracle queries)")
    for k, i in edges:
        print(f"  {_name(k)} -> {_name(i)}")
    for name, path in outputs.items():
        print(f"wrote {path}")
    print(f"wrote {out_dir / 'manifest.json'}")
    return EXIT_OK


# == 5. query ==


def _render_walk(walk: Sequence[tuple[int, bool]]) -> str:
    parts = [_name(walk[0][0])]
    for node, arrived_inward in walk[1:]:
        parts.append("->" if arrived_inward else "<-")
        parts.append(_name(node))
    return " ".join(parts)


def cmd_query(args: argparse.Namespace) -> int:
    text = args.query.strip()
    kind, _, body = text.partition(" ")
    if kind == "csep":
        if args.graph is None:
            print("error: csep queries need --graph GRAPH.json", file=sys.stderr)
            return EXIT_USAGE
        payload = json.loads(Path(args.graph).read_text())
        graph = graph_from_json(payload)
        u, z, w = (_parse_index_set(part) for part in _split_three(body))
        verdict = explain_c_separation(graph, u, z, w)
        if verdict.separated:
            where = ", ".join(_name(i) for i in verdict.blocked_at) or "no connecting path"
            print(f"true: every influence walk is blocked (at {where})")
        else:
            print(f"false: unblocked walk {_render_walk(verdict.walk)}")
        return EXIT_OK
    if kind == "dsep":
        if args.model is None:
            print(
                "error: dsep queries run on the variable level; pass --model MODEL.json",
                file=sys.stderr,
            )
            return EXIT_USAGE
        model = load_model(args.model)
        dag = unroll_dbn(model)
        u, z, w = (_parse_node_set(part) for part in _split_three(body))
        verdict = d_separates(dag, u, z, w)
        print("true" if verdict else "false")
        return EXIT_OK
    print(
        f"error: unknown query kind {kind!r}: use csep or dsep",
        file=sys.stderr,
    )
    return EXIT_USAGE


# == 6. exact ==


def cmd_exact(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    joint = enumerate_joint(model)
    selector = _parse_selector(args.query)
    value = cc_directed_information(joint, selector)
    print(f"{value.value:.9f}")
    return EXIT_OK


# == 7. export-dot ==


def _labels_from_csv(path: str) -> dict[tuple[int, int], float]:
    labels: dict[tuple[int, int], float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sources = [s for s in row["sources"].split(";") if s]
            if len(sources) == 1:
                labels[(int(sources[0]), int(row["target"]))] = float(row["value"])
    return labels


def cmd_export_dot(args: argparse.Namespace) -> int:
    started = time.monotonic()
    if (args.graph is None) == (args.model is None):
        print(
            "error: pass exactly one input: --graph GRAPH.json or --model MODEL.json",
            file=sys.stderr,
        )
        return EXIT_USAGE
    inputs: dict[str, str] = {}
    if args.graph is not None:
        graph = graph_from_json(json.loads(Path(args.graph).read_text()))
        labels = _labels_from_csv(args.labels) if args.labels else None
        rendering = graph_to_dot(graph, edge_labels=labels)
        inputs["graph"] = str(args.graph)
        if args.labels:
            inputs["labels"] = str(args.labels)
    else:
        model = load_model(args.model)
        rendering = unrolled_to_dot(unroll_dbn(model))
        inputs["model"] = str(args.model)

    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(rendering)
    _write_manifest(
        out_path.with_name(out_path.name + ".manifest.json"),
        subcommand="export-dot",
        started=started,
        outputs={"dot": out_path},
        inputs=inputs,
    )
    print(f"wrote {out_path}")
    return EXIT_OK


# == 8. argument wiring ==


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dirinfo",
        description="Recover and query causal influence structure in process networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="draw a spike panel from a TOML network config")
    sp.add_argument("--config", required=True, help="TOML simulation config")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, help="seed (overrides the config)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("infer", help="recover an influence graph from data or a model")
    sp.add_argument("--method", required=True, choices=("alg1", "alg2", "alg3"))
    sp.add_argument("--panel", help="panel CSV (estimated rates)")
    sp.add_argument("--model", help="model JSON (exact values)")
    sp.add_argument(
        "--exact",
        action="store_true",
        help="use exact enumeration (requires --model; implied by it)",
    )
    sp.add_argument("--window", type=int, default=10, help="estimation window (bins)")
    sp.add_argument("--k", type=int, help="in-degree bound (alg3)")
    sp.add_argument("--delta", type=float, default=0.05, help="alg3 maximality band")
    sp.add_argument(
        "--threshold",
        type=float,
        help="edge-decision cut (default: 5%% of entropy rate estimated, "
        "numeric tolerance exact)",
    )
    sp.add_argument("--jobs", type=int, help="parallel fits (default: all cores)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("query", help="answer csep/dsep queries")
    sp.add_argument("--graph", help="graph JSON (csep)")
    sp.add_argument("--model", help="model JSON (dsep)")
    sp.add_argument("query", help='e.g. \'csep D | A | B\' or \'dsep 0:1 | 1:1 | 2:2\'')
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("exact", help="print one directed-information value in bits")
    sp.add_argument("--model", required=True, help="model JSON")
    sp.add_argument("query", help='e.g. "X -> Y" or "X -> Z || W,Y"')
    sp.set_defaults(func=cmd_exact)

    sp = sub.add_parser("export-dot", help="render a graph or model for graphviz")
    sp.add_argument("--graph", help="graph JSON")
    sp.add_argument("--model", help="model JSON (renders the variable-level DAG)")
    sp.add_argument("--labels", help="estimates CSV for edge labels")
    sp.add_argument("--out", required=True, help="output DOT file")
    sp.set_defaults(func=cmd_export_dot)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as err:
        print(
            f"error: {err}\nthis model is too large for exact enumeration; "
            f"sample it and use the estimation path (infer --panel)",
            file=sys.stderr,
        )
        return EXIT_CAPACITY
    except EstimationError as err:
        print(f"error: {err}", file=sys.stderr)
        if err.report is not None:
            print(json.dumps(err.report.to_json(), indent=2), file=sys.stderr)
        return EXIT_ESTIMATION
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
