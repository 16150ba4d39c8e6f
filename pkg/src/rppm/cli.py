"""Command-line entry point.

Exit status: 0 success, 1 denied (``eval`` only), 2 usage or parse error,
3 validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import tempfile
from pathlib import Path

from .cache import ObjectFocused, SubjectFocused
from .constraints import SodMode, SodSpec, chinese_wall_rules, generate_chinese_wall, generate_sod, sod_rules
from .engine import Engine
from .errors import ConfigurationError, NameCollisionError, ParseError, RPPMError, UnknownNodeError, WellFormednessError
from .formats import (
    PolicyDocument,
    format_auth_rule,
    format_pm_rule,
    load_documents,
    parse_policy,
    serialize_graph,
    serialize_policy,
)
from .graph import EdgeKind, validate_graph
from .paths import parse_path
from .policy import EvalOutcome, Request

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_DENY, EXIT_USAGE, EXIT_INVALID = 0, 1, 2, 3

CACHE_KEY = "cache-policy"


class UsageError(Exception):
    pass


def policy_fingerprint(engine: Engine) -> str:
    """Digest of everything a caching edge depends on besides the graph."""
    doc = PolicyDocument(list(engine.pm_policy.rules), [])
    text = engine.pm_policy.strategy.value + "\n" + serialize_policy(doc)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def format_outcome(outcome: EvalOutcome, metrics: bool = False, numeric: bool = False) -> str:
    word = "ALLOW" if outcome.allowed else "DENY"
    if numeric:
        cached = "1" if outcome.cache_hit else "0"
    else:
        cached = "true" if outcome.cache_hit else "false"
    line = f"{word} mp=[{','.join(outcome.matched_principals)}] cached={cached}"
    if metrics:
        line += f" n={outcome.metrics.nodes_visited} e={outcome.metrics.edges_considered}"
    return line


def explain(engine: Engine, outcome: EvalOutcome) -> list[str]:
    lines = []
    if outcome.matched_rules is None:
        lines.append("  pm (from caching edge)")
    else:
        lines += [f"  {format_pm_rule(engine.pm_policy.rules[i])}" for i in outcome.matched_rules]
    lines += [f"  {format_auth_rule(engine.auth_policy.rules[i])}" for i in outcome.applicable_rules]
    return lines


# -- documents ---------------------------------------------------------------


def _paths(args) -> dict[str, Path | None]:
    base = Path(args.docs) if args.docs else None
    out = {}
    for kind in ("model", "graph", "policy", "config"):
        explicit = getattr(args, kind)
        if explicit:
            out[kind] = Path(explicit)
        elif base is not None and (base / f"{kind}.txt").exists():
            out[kind] = base / f"{kind}.txt"
        else:
            out[kind] = None
    for kind in ("model", "graph", "policy"):
        if out[kind] is None:
            raise UsageError(f"no {kind} document given (use --{kind} or --docs)")
    return out


def _read(path: Path | None) -> str:
    if path is None:
        return ""
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def load_engine(args):
    paths = _paths(args)
    docs = load_documents(*(_read(paths[k]) for k in ("model", "graph", "policy", "config")))
    engine = docs.engine()
    if getattr(args, "no_cache", False):
        engine.cache.config.enabled = False
    key = policy_fingerprint(engine)
    stored = engine.graph.meta.get(CACHE_KEY)
    if engine.graph.edges(EdgeKind.CACHING) and stored != key:
        purged = engine.cache.flush()
        logger.info("policy changed since caching edges were written; purged %d", purged)
    engine.graph.meta[CACHE_KEY] = key
    # decision-audit sources stand in for recent activity across runs
    for edge in engine.graph.edges(EdgeKind.DECISION_AUDIT):
        engine.touch_subject(edge.src)
    return engine, paths


def atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_back(engine: Engine, paths, args) -> None:
    if args.dry_run:
        return
    atomic_write(paths["graph"], serialize_graph(engine.graph))


# -- subcommands -------------------------------------------------------------


def cmd_check(args, out) -> int:
    paths = _paths(args)
    docs = load_documents(*(_read(paths[k]) for k in ("model", "graph", "policy", "config")))
    problems = validate_graph(docs.model, docs.graph)
    for problem in problems:
        print(problem, file=sys.stderr)
    if problems:
        return EXIT_INVALID
    docs.engine()  # configuration cross-checks
    return EXIT_OK


def _request_from_args(args) -> Request:
    triple = list(args.triple or [])
    s = args.subject or (triple.pop(0) if triple else None)
    o = args.object or (triple.pop(0) if triple else None)
    a = args.action or (triple.pop(0) if triple else None)
    if triple or not (s and o and a):
        raise UsageError("eval needs a subject, an object and an action")
    return Request(s, o, a)


def cmd_eval(args, out) -> int:
    request = _request_from_args(args)
    engine, paths = load_engine(args)
    outcome = engine.evaluate(request)
    print(format_outcome(outcome, metrics=args.metrics), file=out)
    if args.explain:
        for line in explain(engine, outcome):
            print(line, file=out)
    write_back(engine, paths, args)
    return EXIT_OK if outcome.allowed else EXIT_DENY


def cmd_batch(args, out) -> int:
    engine, paths = load_engine(args)
    source = sys.stdin if args.requests in (None, "-") else open(args.requests, encoding="utf-8")
    try:
        for raw in source:
            words = raw.split()
            if len(words) != 3:
                print(f"ERR PARSE expected 'S O A', got {raw.strip()!r}", file=out)
                continue
            try:
                outcome = engine.evaluate(Request(*words))
            except UnknownNodeError as exc:
                print(f"{' '.join(words)} ERR UNKNOWN-NODE {exc.node}", file=out)
                continue
            print(f"{' '.join(words)} {format_outcome(outcome, metrics=args.metrics)}", file=out)
            out.flush()
    finally:
        if source is not sys.stdin:
            source.close()
    write_back(engine, paths, args)
    return EXIT_OK


def _csv(value: str | None) -> tuple[str, ...]:
    return tuple(v for v in (value or "").split(",") if v)


def cmd_precache(args, out) -> int:
    engine, paths = load_engine(args)
    if args.mode == "subject":
        if args.subjects:
            for s in reversed(_csv(args.subjects)):
                engine.touch_subject(s)
        strategy = SubjectFocused(args.recent_k, _csv(args.targets))
    else:
        strategy = ObjectFocused(_csv(args.objects), _csv(args.subjects))
    for node in _csv(args.subjects) + _csv(args.targets) + _csv(args.objects):
        if not engine.graph.has_node(node):
            raise UnknownNodeError(node)
    inserted = engine.precache(strategy, args.budget)
    print(f"inserted={inserted}", file=out)
    write_back(engine, paths, args)
    return EXIT_OK


def cmd_purge(args, out) -> int:
    engine, paths = load_engine(args)
    if args.subject:
        if not engine.graph.has_node(args.subject):
            raise UnknownNodeError(args.subject)
        purged = engine.cache.purge_subject(args.subject)
    else:
        purged = engine.cache.flush()
    print(f"purged={purged}", file=out)
    write_back(engine, paths, args)
    return EXIT_OK


def _base_policy(args) -> PolicyDocument:
    if not args.policy:
        return PolicyDocument()
    return parse_policy(_read(Path(args.policy)))


def cmd_gen(args, out) -> int:
    base = _base_policy(args)
    if args.kind == "sod":
        actions = _csv(args.actions)
        try:
            spec = SodSpec(
                args.object,
                actions,
                _csv(args.principals),
                SodMode.BASIC if args.basic else SodMode.GENERAL,
                args.seen_principal,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if args.policy:
            pm, auth = generate_sod(base.pm_rules, base.auth_rules, spec)
        else:
            pm, auth = sod_rules(spec)
    else:
        if not args.paths:
            raise UsageError("gen cw needs at least one --path")
        paths = [parse_path(p) for p in args.paths]
        if args.policy:
            pm, auth = generate_chinese_wall(base.pm_rules, base.auth_rules, paths, args.principal)
        else:
            pm, auth = chinese_wall_rules(paths, args.principal)
    out.write(serialize_policy(PolicyDocument(list(pm), list(auth))))
    return EXIT_OK


def cmd_dump(args, out) -> int:
    engine, _ = load_engine(args)
    out.write(serialize_graph(engine.graph, include_overlay=not args.no_overlay))
    return EXIT_OK


def audit_lines(graph) -> list[str]:
    """``<seq> <subject> <object> <action> <allow|deny>`` in graph order."""
    lines = []
    for seq, edge in enumerate(graph.edges(EdgeKind.DECISION_AUDIT), start=1):
        verdict, action = edge.label.split("!", 1)
        lines.append(f"{seq} {edge.src} {edge.dst} {action} {verdict}")
    return lines


def cmd_audit_log(args, out) -> int:
    engine, _ = load_engine(args)
    for line in audit_lines(engine.graph):
        print(line, file=out)
    return EXIT_OK


def cmd_serve(args, out) -> int:
    from .service import PDPService, serve

    engine, paths = load_engine(args)
    service = PDPService(engine)
    serve(service, args.host, args.port, ready=lambda addr: print(f"listening on {addr[0]}:{addr[1]}", file=out, flush=True))
    if args.save:
        write_back(engine, paths, args)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _doc_args(p: argparse.ArgumentParser, state: bool = True) -> None:
    p.add_argument("-d", "--docs", help="directory holding model.txt, graph.txt, policy.txt, config.txt")
    p.add_argument("--model")
    p.add_argument("--graph")
    p.add_argument("--policy")
    p.add_argument("--config")
    if state:
        p.add_argument("--dry-run", action="store_true", help="do not write state back to the graph file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rppm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="validate documents")
    _doc_args(p, state=False)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("eval", help="evaluate one request")
    _doc_args(p)
    p.add_argument("triple", nargs="*", metavar="S O A")
    p.add_argument("--subject")
    p.add_argument("--object")
    p.add_argument("--action")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--metrics", action="store_true")
    p.add_argument("--explain", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("batch", help="evaluate 'S O A' lines")
    _doc_args(p)
    p.add_argument("requests", nargs="?", help="request file, '-' for stdin")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--metrics", action="store_true")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("precache", help="populate caching edges ahead of requests")
    _doc_args(p)
    p.add_argument("mode", choices=["subject", "object"])
    p.add_argument("--recent-k", type=int, default=16)
    p.add_argument("--targets", help="comma-separated target objects (subject mode)")
    p.add_argument("--objects", help="comma-separated objects (object mode)")
    p.add_argument("--subjects", help="comma-separated subjects")
    p.add_argument("--budget", type=int, default=1000)
    p.set_defaults(func=cmd_precache)

    p = sub.add_parser("purge", help="remove caching edges")
    _doc_args(p)
    p.add_argument("--subject", help="only caching edges leaving this node")
    p.set_defaults(func=cmd_purge)

    p = sub.add_parser("gen", help="generate constraint policy rules")
    p.add_argument("kind", choices=["sod", "cw"])
    p.add_argument("--policy", help="base policy to extend (prints the combined policy)")
    p.add_argument("--object", help="constrained object (sod)")
    p.add_argument("--actions", help="comma-separated constrained actions (sod)")
    p.add_argument("--principals", help="comma-separated fresh principals (sod)")
    p.add_argument("--basic", action="store_true", help="single p_seen principal (sod)")
    p.add_argument("--seen-principal", default="p_seen")
    p.add_argument("--path", dest="paths", action="append", help="data-to-company path (cw, repeatable)")
    p.add_argument("--principal", default="p_cw", help="blocking principal (cw)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("dump", help="print the graph")
    _doc_args(p, state=False)
    p.add_argument("--no-overlay", action="store_true")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("audit-log", help="print decision-audit edges")
    _doc_args(p, state=False)
    p.set_defaults(func=cmd_audit_log)

    p = sub.add_parser("serve", help="run the line-protocol decision point")
    _doc_args(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7411)
    p.add_argument("--save", action="store_true", help="write the graph back on shutdown")
    p.set_defaults(func=cmd_serve)
    return parser


def run(argv: list[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "gen" and args.kind == "sod" and not (args.object and args.actions):
        print("rppm: gen sod needs --object and --actions", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, out)
    except (UsageError, ParseError, UnknownNodeError, NameCollisionError) as exc:
        print(f"rppm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WellFormednessError, ConfigurationError) as exc:
        print(f"rppm: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RPPMError as exc:
        print(f"rppm: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
