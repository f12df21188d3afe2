"""Text format for models and queries, and the JSON result document.

Model files are sequences of declarations::

    logvar E {alice, bob, charlie}
    prv Comp(E) range {low, medium, high}
    prv Rev range {low, medium, high}
    parfactor g1(Comp(E), Rev) uniform
    parfactor g3(Comp(E), ->Sal(E)) where (E) in {alice, bob} table {
      (low, low) = 0.5
      ...
    }
    isolate Comp(E) {alice}

``->`` marks the CHILD argument.  ``#`` starts a comment.  ``isolate``
records a split-off group of instances (written by the serializer for split
models).
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .causal import DoAnswer, DoQuery
from .grounding import GroundAtom
from .inference import Distribution
from .model import PPCFG, PRV, Atom, Constraint, LogVar, ModelError, Node, Parfactor


@dataclass(frozen=True)
class ModelSource:
    text: str
    origin: str = "<stdin>"

    @classmethod
    def from_path(cls, path: str) -> "ModelSource":
        with open(path, encoding="utf-8") as fh:
            return cls(fh.read(), path)


class ParseError(ValueError):
    def __init__(self, line: int, column: int, message: str, snippet: str = "", origin: str = "<stdin>"):
        self.line = line
        self.column = column
        self.message = message
        self.snippet = snippet
        self.origin = origin
        super().__init__(f"{origin}:{line}:{column}: {message}")

    def render(self) -> str:
        caret = " " * (self.column - 1) + "^"
        return f"{self}\n  {self.snippet}\n  {caret}"


# -- tokens ---------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<arrow>->)
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(?![A-Za-z_']))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*|\d[A-Za-z0-9_']*)
  | (?P<punct>[(){},=;|])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, num, punct, arrow, eof
    text: str
    line: int
    col: int


def tokenize(text: str, origin: str = "<stdin>") -> list[Token]:
    out: list[Token] = []
    lines = text.split("\n")
    pos, line, start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            col = pos - start + 1
            raise ParseError(line, col, f"unexpected character {text[pos]!r}", lines[line - 1], origin)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind != "ws":
            out.append(Token(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


class _Cursor:
    def __init__(self, text: str, origin: str):
        self.lines = text.split("\n")
        self.origin = origin
        self.toks = tokenize(text, origin)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        t = tok or self.tok
        snippet = self.lines[t.line - 1] if t.line - 1 < len(self.lines) else ""
        return ParseError(t.line, t.col, message, snippet, self.origin)

    def peek(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "eof"

    def accept(self, text: str) -> Optional[Token]:
        if self.peek(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            raise self.error(f"expected {text!r}, found {self._shown()}")
        return t

    def name(self, what: str = "identifier") -> Token:
        """An identifier or a bare number used as a name (constants, range values)."""
        t = self.tok
        if t.kind not in ("ident", "num"):
            raise self.error(f"expected {what}, found {self._shown()}")
        self.i += 1
        return t

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "ident" or not (t.text[0].isalpha() or t.text[0] == "_"):
            raise self.error(f"expected {what}, found {self._shown()}")
        self.i += 1
        return t

    def number(self) -> float:
        t = self.tok
        if t.kind != "num":
            raise self.error(f"expected number, found {self._shown()}")
        self.i += 1
        return float(t.text)

    def _shown(self) -> str:
        return "end of input" if self.tok.kind == "eof" else repr(self.tok.text)

    def name_list(self, what: str) -> list[Token]:
        self.expect("{")
        items = [self.name(what)]
        while self.accept(","):
            items.append(self.name(what))
        self.expect("}")
        return items

    def tuple_(self, arity: Optional[int] = None) -> list[Token]:
        """``(a, b)`` or, for a single component, a bare ``a``."""
        if self.accept("("):
            items = []
            if not self.peek(")"):
                items.append(self.name("constant"))
                while self.accept(","):
                    items.append(self.name("constant"))
            self.expect(")")
            return items
        return [self.name("constant")]


# -- model parsing ----------------------------------------------------------------


def parse_model(src: Union[ModelSource, str]) -> PPCFG:
    """Parse a model; structural validation is left to :func:`model.validate`."""
    if isinstance(src, str):
        src = ModelSource(src)
    cur = _Cursor(src.text, src.origin)
    if cur.tok.kind == "eof":
        raise cur.error("expected declaration")
    logvars: dict[str, LogVar] = {}
    prvs: dict[str, PRV] = {}
    pfs: dict[str, Parfactor] = {}
    isolated: list[Node] = []
    while cur.tok.kind != "eof":
        kw = cur.tok
        if cur.accept("logvar"):
            lv = _logvar(cur, logvars, prvs, pfs)
            logvars[lv.name] = lv
        elif cur.accept("prv"):
            p = _prv(cur, logvars, prvs, pfs)
            prvs[p.name] = p
        elif cur.accept("parfactor"):
            g = _parfactor(cur, logvars, prvs, pfs)
            pfs[g.name] = g
        elif cur.accept("isolate"):
            isolated.append(_isolate(cur, logvars, prvs))
        else:
            raise cur.error(f"expected declaration, found {cur._shown()}", kw)
    return PPCFG(tuple(logvars.values()), tuple(prvs.values()), tuple(pfs.values()), tuple(isolated))


def _taken(cur: _Cursor, tok: Token, *spaces: dict) -> None:
    if any(tok.text in s for s in spaces):
        raise cur.error(f"duplicate declaration of {tok.text!r}", tok)


def _logvar(cur, logvars, prvs, pfs) -> LogVar:
    name = cur.ident("logvar name")
    _taken(cur, name, logvars, prvs, pfs)
    items = cur.name_list("constant")
    consts = [t.text for t in items]
    for t, k in zip(items, range(len(items))):
        if t.text in consts[:k]:
            raise cur.error(f"duplicate constant {t.text!r}", t)
    return LogVar(name.text, tuple(consts))


def _prv(cur, logvars, prvs, pfs) -> PRV:
    name = cur.ident("PRV name")
    _taken(cur, name, logvars, prvs, pfs)
    params: list[str] = []
    if cur.accept("("):
        if not cur.peek(")"):
            params.append(_known_logvar(cur, logvars))
            while cur.accept(","):
                params.append(_known_logvar(cur, logvars))
        cur.expect(")")
    cur.expect("range")
    items = cur.name_list("range value")
    values = [t.text for t in items]
    for k, t in enumerate(items):
        if t.text in values[:k]:
            raise cur.error(f"duplicate range value {t.text!r}", t)
    return PRV(name.text, tuple(params), tuple(values))


def _known_logvar(cur, logvars) -> str:
    t = cur.ident("logvar")
    if t.text not in logvars:
        raise cur.error(f"undeclared logvar {t.text!r}", t)
    return t.text


def _atom(cur, logvars, prvs) -> Atom:
    t = cur.ident("PRV name")
    if t.text not in prvs:
        raise cur.error(f"undeclared PRV {t.text!r}", t)
    lvs: list[str] = []
    if cur.accept("("):
        if not cur.peek(")"):
            lvs.append(_known_logvar(cur, logvars))
            while cur.accept(","):
                lvs.append(_known_logvar(cur, logvars))
        cur.expect(")")
    return Atom(t.text, tuple(lvs))


def _parfactor(cur, logvars, prvs, pfs) -> Parfactor:
    name = cur.ident("parfactor name")
    _taken(cur, name, logvars, prvs, pfs)
    cur.expect("(")
    args: list[Atom] = []
    directed: list[bool] = []
    while True:
        directed.append(cur.accept("->") is not None)
        args.append(_atom(cur, logvars, prvs))
        if not cur.accept(","):
            break
    cur.expect(")")
    lv_order: dict[str, None] = {}
    for a in args:
        for lv in a.logvars:
            lv_order.setdefault(lv, None)
    constraint = Constraint(tuple(lv_order), None)
    if cur.accept("where"):
        constraint = _constraint(cur, logvars)
    ranges = [prvs[a.prv].range for a in args]
    if cur.accept("uniform"):
        size = 1
        for r in ranges:
            size *= len(r)
        potentials = (1.0,) * size
    elif cur.accept("table"):
        potentials = _table(cur, ranges)
    else:
        raise cur.error(f"expected 'uniform' or 'table', found {cur._shown()}")
    return Parfactor(name.text, tuple(args), potentials, constraint, tuple(directed))


def _constraint(cur, logvars) -> Constraint:
    head = cur.tuple_()
    lvs = []
    for t in head:
        if t.text not in logvars:
            raise cur.error(f"undeclared logvar {t.text!r}", t)
        lvs.append(t.text)
    cur.expect("in")
    cur.expect("{")
    tuples: list[tuple[str, ...]] = []
    seen: set = set()
    while True:
        start = cur.tok
        items = cur.tuple_()
        tup = tuple(t.text for t in items)
        if len(tup) != len(lvs):
            raise cur.error(f"tuple of arity {len(tup)}, expected {len(lvs)}", start)
        if tup in seen:
            raise cur.error(f"duplicate tuple {tup}", start)
        seen.add(tup)
        tuples.append(tup)
        if not cur.accept(","):
            break
    cur.expect("}")
    domains = [logvars[lv].domain for lv in lvs]

    def key(t):
        return tuple(d.index(c) if c in d else len(d) for d, c in zip(domains, t))

    return Constraint(tuple(lvs), tuple(sorted(tuples, key=key)))


def _table(cur, ranges) -> tuple[float, ...]:
    cur.expect("{")
    index = {vals: k for k, vals in enumerate(itertools.product(*ranges))}
    values: list[Optional[float]] = [None] * len(index)
    while not cur.peek("}"):
        start = cur.tok
        if cur.tok.kind == "eof":
            raise cur.error("expected '}'")
        row = tuple(t.text for t in cur.tuple_())
        if row not in index:
            raise cur.error(f"row {row} does not match the argument ranges", start)
        cur.expect("=")
        v = cur.number()
        k = index[row]
        if values[k] is not None:
            raise cur.error(f"duplicate row {row}", start)
        values[k] = v
    end = cur.expect("}")
    missing = [row for row, k in index.items() if values[k] is None]
    if missing:
        raise cur.error(f"table misses row {missing[0]}", end)
    return tuple(values)  # type: ignore[arg-type]


def _isolate(cur, logvars, prvs) -> Node:
    a = _atom(cur, logvars, prvs)
    p = prvs[a.prv]
    if a.logvars != p.params:
        raise cur.error(f"isolate must name {p} with its own logvars")
    cur.expect("{")
    members = []
    while True:
        start = cur.tok
        tup = tuple(t.text for t in cur.tuple_())
        if len(tup) != len(p.params):
            raise cur.error(f"tuple of arity {len(tup)}, expected {len(p.params)}", start)
        members.append(tup)
        if not cur.accept(","):
            break
    cur.expect("}")
    domains = [logvars[lv].domain for lv in p.params]

    def key(t):
        return tuple(d.index(c) if c in d else len(d) for d, c in zip(domains, t))

    return Node(p.name, tuple(sorted(set(members), key=key)), p.params)


# -- serialisation ------------------------------------------------------------------


def _num(x: float) -> str:
    return format(x, ".17g")


def _tuple_text(t) -> str:
    return "(" + ", ".join(t) + ")"


def serialize_model(m: PPCFG) -> str:
    """Canonical text: declaration order kept, potentials at 17 significant digits."""
    out: list[str] = []
    for lv in m.logvars:
        out.append(f"logvar {lv.name} {{{', '.join(lv.domain)}}}")
    for p in m.prvs:
        out.append(f"prv {p} range {{{', '.join(p.range)}}}")
    for g in m.parfactors:
        args = ", ".join(("->" if d else "") + str(a) for a, d in zip(g.args, g.directed))
        head = f"parfactor {g.name}({args})"
        c = g.constraint
        if c.tuples is not None:
            domains = [m.logvar(lv).domain for lv in c.logvars]
            tuples = sorted(c.tuples, key=lambda t: tuple(d.index(x) for d, x in zip(domains, t)))
            body = ", ".join(_tuple_text(t) for t in tuples)
            head += f" where {_tuple_text(c.logvars)} in {{{body}}}"
        if all(v == 1.0 for v in g.potentials):
            out.append(head + " uniform")
            continue
        ranges = [m.prv(a.prv).range for a in g.args]
        rows = [
            f"  {_tuple_text(vals)} = {_num(v)}"
            for vals, v in zip(itertools.product(*ranges), g.potentials)
        ]
        out.append(head + " table {\n" + "\n".join(rows) + "\n}")
    for n in m.isolated:
        p = m.prv(n.prv)
        members = ", ".join(_tuple_text(t) for t in n.members)
        out.append(f"isolate {p} {{{members}}}")
    return "\n".join(out) + "\n"


# -- queries -------------------------------------------------------------------------


class QuerySyntaxError(ValueError):
    pass


@dataclass
class ParsedQuery:
    query: list[GroundAtom]
    evidence: dict[GroundAtom, str] = field(default_factory=dict)
    targets: list[tuple[Union[GroundAtom, Node], str]] = field(default_factory=list)
    interventional: bool = False

    def do_query(self) -> DoQuery:
        return DoQuery(tuple(self.query), tuple(self.targets))


def _q_error(cur: _Cursor, message: str) -> QuerySyntaxError:
    return QuerySyntaxError(f"column {cur.tok.col}: {message}")


def _q_term(cur: _Cursor, m: PPCFG, allow_prv: bool) -> Union[GroundAtom, Node]:
    t = cur.tok
    if t.kind != "ident":
        raise _q_error(cur, f"expected atom, found {cur._shown()}")
    cur.i += 1
    try:
        p = m.prv(t.text)
    except ModelError:
        raise QuerySyntaxError(f"column {t.col}: unknown PRV {t.text!r}") from None
    args: list[str] = []
    if cur.accept("("):
        if not cur.peek(")"):
            args.append(cur.name("constant").text)
            while cur.accept(","):
                args.append(cur.name("constant").text)
        cur.expect(")")
    if len(args) != len(p.params):
        raise QuerySyntaxError(f"column {t.col}: {p.name} takes {len(p.params)} arguments")
    if args and tuple(args) == p.params:
        if not allow_prv:
            raise QuerySyntaxError(f"column {t.col}: {p} is not a ground atom")
        return Node(p.name, None, p.params)
    if any(a in p.params for a in args):
        raise QuerySyntaxError(f"column {t.col}: mix of logvars and constants in {t.text}")
    return GroundAtom(p.name, tuple(args))


def _q_event(cur: _Cursor, m: PPCFG, allow_prv: bool):
    atom = _q_term(cur, m, allow_prv)
    cur.expect("=")
    v = cur.name("value").text
    return atom, v


def parse_query(text: str, m: PPCFG) -> ParsedQuery:
    """``P(Q, ... | e=v, ...)`` or ``P(Q, ... | do(t=v, ...))``."""
    try:
        cur = _Cursor(text, "<query>")
        cur.expect("P")
        cur.expect("(")
        query = [_q_term(cur, m, False)]
        while cur.accept(","):
            query.append(_q_term(cur, m, False))
        pq = ParsedQuery(query)
        if cur.accept("|"):
            if cur.accept("do"):
                pq.interventional = True
                cur.expect("(")
                pq.targets.append(_q_event(cur, m, True))
                while cur.accept(","):
                    pq.targets.append(_q_event(cur, m, True))
                cur.expect(")")
            elif not cur.peek(")"):
                ev = [_q_event(cur, m, False)]
                while cur.accept(","):
                    ev.append(_q_event(cur, m, False))
                for a, v in ev:
                    if a in pq.evidence:
                        raise QuerySyntaxError(f"{a} observed twice")
                    pq.evidence[a] = v
        cur.expect(")")
        if cur.tok.kind != "eof":
            raise _q_error(cur, f"unexpected {cur._shown()}")
    except ParseError as exc:
        raise QuerySyntaxError(f"column {exc.column}: {exc.message}") from None
    return pq


def parse_sep(text: str, m: PPCFG, lifted: bool = False) -> tuple[list, list, list]:
    """``X1, X2 ; Y1 | Z1, Z2`` with ground atoms, or PRV names when ``lifted``."""
    try:
        cur = _Cursor(text, "<dsep>")

        def items(stop: tuple[str, ...]) -> list:
            out: list = []
            if cur.tok.kind == "eof" or any(cur.peek(s) for s in stop):
                return out
            while True:
                a = _q_term(cur, m, lifted)
                if lifted:
                    if not isinstance(a, Node) and m.prv(a.prv).params:
                        raise QuerySyntaxError(f"{a} is not a whole PRV")
                    a = a.prv
                elif isinstance(a, Node):
                    raise QuerySyntaxError(f"{a} is not a ground atom")
                out.append(a)
                if not cur.accept(","):
                    return out

        x = items((";",))
        cur.expect(";")
        y = items(("|",))
        z: list = []
        if cur.accept("|"):
            z = items(())
        if cur.tok.kind != "eof":
            raise _q_error(cur, f"unexpected {cur._shown()}")
    except ParseError as exc:
        raise QuerySyntaxError(f"column {exc.column}: {exc.message}") from None
    if not x or not y:
        raise QuerySyntaxError("X and Y must be non-empty")
    return x, y, z


# -- result documents -------------------------------------------------------------------


def _probs(d: Distribution) -> dict:
    out = {}
    for k, p in d.probs.items():
        key = ", ".join(k) if isinstance(k, tuple) else k
        out[key] = p
    return out


def emit_result(result: Union[DoAnswer, Distribution], query: Optional[str] = None) -> str:
    """JSON document with one entry per distinct distribution and its provenance."""
    if isinstance(result, Distribution):
        doc = {
            "query": query if query is not None else str(result),
            "unique": True,
            "distributions": [{"parent_choice": {}, "probabilities": _probs(result)}],
        }
    else:
        doc = {
            "query": query if query is not None else str(result.query),
            "unique": result.unique,
            "distributions": [
                {
                    "parent_choice": chs[0].as_dict(),
                    "all_parent_choices": [c.as_dict() for c in chs],
                    "probabilities": _probs(d),
                }
                for chs, d in result.results
            ],
            "infeasible_parent_choices": [c.as_dict() for c in result.infeasible],
        }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
