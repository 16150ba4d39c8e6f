"""Line-protocol policy decision point.

One request per line, one response per request::

    EVAL <s> <o> <a>              OK ALLOW|DENY mp=[...] cached=0|1 n=<int> e=<int>
    ADD-EDGE <src> <label> <dst>  OK
    DEL-EDGE <src> <label> <dst>  OK
    PRECACHE subject <k> <targets> [budget]
    PRECACHE object <objects> [subjects|*] [budget]
                                  OK inserted=<k>
    STATS                         OK size=.. hits=.. misses=.. inserts=.. evictions=.. purged=.. retired=..
    RELOAD-POLICY <path>          OK
    SHUTDOWN                      OK

Failures answer ``ERR <code> <message>`` with code UNKNOWN-NODE, PARSE,
WELLFORMED or UNSUPPORTED. Verbs from all connections run one at a time.
"""

from __future__ import annotations

import logging
import socketserver
import threading
from pathlib import Path

from .cache import ObjectFocused, SubjectFocused
from .cli import format_outcome
from .engine import Engine
from .errors import ConfigurationError, ParseError, RPPMError, UnknownNodeError, WellFormednessError
from .formats import parse_policy, resolve_policy
from .graph import EdgeKind, kind_of_label
from .policy import Request

logger = logging.getLogger(__name__)

UNLIMITED = 1 << 30


class ProtocolError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _usage(shape: str) -> ProtocolError:
    return ProtocolError("PARSE", f"usage: {shape}")


def _csv(word: str) -> tuple[str, ...]:
    return tuple(v for v in word.split(",") if v)


def _budget(word: str) -> int:
    try:
        value = int(word)
    except ValueError:
        raise ProtocolError("PARSE", f"budget must be an integer, got {word!r}") from None
    if value < 0:
        raise ProtocolError("PARSE", "budget must be >= 0")
    return value


class PDPService:
    """Protocol state machine around one engine; transport-independent."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.lock = threading.Lock()
        self.closed = False

    def handle(self, line: str) -> str:
        with self.lock:
            try:
                return self._dispatch(line.strip())
            except ProtocolError as exc:
                return f"ERR {exc.code} {exc}"
            except UnknownNodeError as exc:
                return f"ERR UNKNOWN-NODE {exc.node}"
            except WellFormednessError as exc:
                return f"ERR WELLFORMED {exc}"
            except ParseError as exc:
                return f"ERR PARSE {exc}"
            except ConfigurationError as exc:
                return f"ERR UNSUPPORTED {exc}"
            except RPPMError as exc:
                return f"ERR {exc.code} {exc}"

    def _dispatch(self, line: str) -> str:
        if not line:
            raise ProtocolError("PARSE", "empty request")
        verb, *args = line.split()
        handler = {
            "EVAL": self._eval,
            "ADD-EDGE": self._add_edge,
            "DEL-EDGE": self._del_edge,
            "PRECACHE": self._precache,
            "STATS": self._stats,
            "RELOAD-POLICY": self._reload,
            "SHUTDOWN": self._shutdown,
        }.get(verb)
        if handler is None:
            raise ProtocolError("UNSUPPORTED", f"unknown verb {verb}")
        return handler(args)

    def _eval(self, args) -> str:
        if len(args) != 3:
            raise _usage("EVAL <subject> <object> <action>")
        outcome = self.engine.evaluate(Request(*args))
        return "OK " + format_outcome(outcome, metrics=True, numeric=True)

    def _edge_args(self, verb: str, args) -> tuple[str, str, str]:
        if len(args) != 3:
            raise _usage(f"{verb} <src> <label> <dst>")
        src, label, dst = args
        if kind_of_label(label) is not EdgeKind.RELATIONSHIP:
            raise ProtocolError("UNSUPPORTED", f"only relationship edges may be changed, not {label}")
        graph = self.engine.graph
        for node in (src, dst):
            if not graph.has_node(node):
                raise UnknownNodeError(node)
        return src, label, dst

    def _add_edge(self, args) -> str:
        src, label, dst = self._edge_args("ADD-EDGE", args)
        self.engine.graph.add_edge(src, dst, EdgeKind.RELATIONSHIP, label)
        return "OK"

    def _del_edge(self, args) -> str:
        src, label, dst = self._edge_args("DEL-EDGE", args)
        self.engine.graph.remove_edge(src, dst, EdgeKind.RELATIONSHIP, label)
        return "OK"

    def _precache(self, args) -> str:
        if not args or args[0] not in ("subject", "object"):
            raise _usage("PRECACHE subject|object ...")
        mode, rest = args[0], args[1:]
        graph = self.engine.graph
        if mode == "subject":
            if len(rest) not in (2, 3):
                raise _usage("PRECACHE subject <k> <target,...> [budget]")
            try:
                k = int(rest[0])
            except ValueError:
                raise ProtocolError("PARSE", f"k must be an integer, got {rest[0]!r}") from None
            if k < 1:
                raise ProtocolError("PARSE", "k must be >= 1")
            targets = _csv(rest[1])
            names = targets
            strategy = SubjectFocused(k, targets)
        else:
            if len(rest) not in (1, 2, 3):
                raise _usage("PRECACHE object <object,...> [subject,...|*] [budget]")
            objects = _csv(rest[0])
            subjects = () if len(rest) < 2 or rest[1] == "*" else _csv(rest[1])
            names = objects + subjects
            strategy = ObjectFocused(objects, subjects)
        budget = _budget(rest[2]) if len(rest) == 3 else UNLIMITED
        for node in names:
            if not graph.has_node(node):
                raise UnknownNodeError(node)
        return f"OK inserted={self.engine.precache(strategy, budget)}"

    def _stats(self, args) -> str:
        if args:
            raise _usage("STATS")
        cache = self.engine.cache
        s = cache.stats
        return (
            f"OK size={len(cache)} hits={s.hits} misses={s.misses} inserts={s.inserts} "
            f"evictions={s.evictions} purged={s.purged} retired={s.retired}"
        )

    def _reload(self, args) -> str:
        if len(args) != 1:
            raise _usage("RELOAD-POLICY <path>")
        try:
            text = Path(args[0]).read_text(encoding="utf-8")
        except OSError as exc:
            raise ProtocolError("PARSE", f"cannot read {args[0]}: {exc.strerror}") from None
        doc = parse_policy(text)
        resolve_policy(doc, self.engine.graph.model)
        self.engine.reload_policy(doc.pm_rules, doc.auth_rules)
        return "OK"

    def _shutdown(self, args) -> str:
        if args:
            raise _usage("SHUTDOWN")
        self.closed = True
        return "OK"


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service: PDPService = self.server.service
        for raw in self.rfile:
            response = service.handle(raw.decode("utf-8", errors="replace"))
            self.wfile.write((response + "\n").encode("utf-8"))
            self.wfile.flush()
            if service.closed:
                threading.Thread(target=self.server.shutdown, daemon=True).start()
                return


class PDPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, service: PDPService, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.service = service


def serve(service: PDPService, host: str = "127.0.0.1", port: int = 0, ready=None) -> None:
    """Serve until a client sends SHUTDOWN. ``ready`` receives the bound address."""
    with PDPServer(service, host, port) as server:
        if ready is not None:
            ready(server.server_address)
        logger.info("pdp listening on %s:%s", *server.server_address)
        server.serve_forever()
