"""Command-line interface: ``liftdo {validate,query,dsep,bench,ground}``."""

from __future__ import annotations

import argparse
import sys
import time
from typing import Optional, Sequence

from .causal import (
    DoQuery,
    QueryTargetOverlap,
    UnknownAtom,
    enumerate_parent_choices,
    lifted_do_query,
    prepare,
)
from .dsep import UnsupportedLiftedQuery, d_separated, d_separated_lifted
from .fixtures import fill_uniform, resize_domain
from .grounding import GroundAtom, ground
from .inference import ZeroEvidenceProbability, marginal
from .model import ModelError, Node, validate
from .modelio import (
    ModelSource,
    ParseError,
    QuerySyntaxError,
    emit_result,
    parse_model,
    parse_query,
    parse_sep,
    serialize_model,
)
from .oracle import StateSpaceTooLarge, TooManyAmbiguousFactors, brute_force_do
from .shattering import ground_as_model

EXIT_INVALID = 1
EXIT_PARSE = 2
EXIT_QUERY = 3
EXIT_OVERLAP = 4
EXIT_GUARD = 5


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load(path: str, seed: Optional[int] = None, check: bool = True):
    try:
        src = ModelSource.from_path(path) if path != "-" else ModelSource(sys.stdin.read())
    except OSError as exc:
        raise _Exit(EXIT_PARSE, f"cannot read {path}: {exc.strerror}")
    try:
        m = parse_model(src)
    except ParseError as exc:
        raise _Exit(EXIT_PARSE, exc.render())
    if check:
        rep = validate(m)
        if not rep.ok:
            raise _Exit(EXIT_INVALID, str(rep))
    if seed is not None:
        m = fill_uniform(m, seed)
    return m


def cmd_validate(args) -> int:
    m = _load(args.model, check=False)
    rep = validate(m)
    print(str(rep) if str(rep) else "ok")
    return 0 if rep.ok else EXIT_INVALID


def cmd_query(args) -> int:
    m = _load(args.model, args.seed)
    try:
        pq = parse_query(args.query, m)
    except QuerySyntaxError as exc:
        raise _Exit(EXIT_QUERY, f"malformed query: {exc}")
    try:
        if pq.interventional:
            dq = pq.do_query()
            if args.oracle:
                ans = brute_force_do(ground(m), dq)
            else:
                ans = lifted_do_query(m, dq)
            doc = emit_result(ans, args.query)
        else:
            gm = ground(m)
            for a in list(pq.query) + list(pq.evidence):
                gm.atom_index(a)
            if set(pq.query) & set(pq.evidence):
                raise QueryTargetOverlap("query atom is also observed")
            doc = emit_result(marginal(gm, pq.query, pq.evidence), args.query)
    except QueryTargetOverlap as exc:
        raise _Exit(EXIT_OVERLAP, str(exc))
    except (StateSpaceTooLarge, TooManyAmbiguousFactors) as exc:
        raise _Exit(EXIT_GUARD, str(exc))
    except (UnknownAtom, ModelError, ValueError, ZeroEvidenceProbability) as exc:
        raise _Exit(EXIT_QUERY, f"malformed query: {exc}")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(doc)
    else:
        sys.stdout.write(doc)
    return 0


def cmd_dsep(args) -> int:
    m = _load(args.model)
    try:
        x, y, z = parse_sep(args.expr, m, lifted=args.lifted)
        if args.lifted:
            try:
                res = d_separated_lifted(m, x, y, z)
            except UnsupportedLiftedQuery:
                gm = ground(m)

                def gr(names):
                    return [a for a in gm.atoms if a.prv in set(names)]

                res = d_separated(gm, gr(x), gr(y), gr(z))
        else:
            res = d_separated(ground(m), x, y, z)
    except (QuerySyntaxError, ValueError, ModelError) as exc:
        raise _Exit(EXIT_QUERY, f"malformed separation query: {exc}")
    print("true" if res else "false")
    return 0


def bench_rows(m, target: str, sizes: Sequence[int]):
    """(domain size, lifted choice count, ground subset bound, wall time ms) per size."""
    prv = m.prv(target)
    rows = []
    for n in sizes:
        mm = m
        for lv in dict.fromkeys(prv.params):
            mm = resize_domain(mm, lv, n)
        dq_target = Node(prv.name, None, prv.params) if prv.params else GroundAtom(prv.name)
        query = next(
            (GroundAtom(p.name, mm.all_groundings(p.name)[0]) for p in mm.prvs if p.name != prv.name),
            None,
        )
        if query is None:
            raise _Exit(EXIT_QUERY, "model needs a PRV besides the target")
        dq = DoQuery((query,), ((dq_target, prv.range[0]),))
        t0 = time.perf_counter()
        p = prepare(mm, dq)
        choices = enumerate_parent_choices(p.model, [t for t, _ in p.targets], p.gm)
        lifted_do_query(mm, dq)
        ms = (time.perf_counter() - t0) * 1000.0
        # ground bound: subsets of the undirected neighbours of every target instance
        gm = ground(mm)
        total_ne = sum(
            len(gm.neighbours(GroundAtom(prv.name, a))) for a in mm.all_groundings(prv.name)
        )
        rows.append((n, len(choices), 2**total_ne, ms))
    return rows


def cmd_bench(args) -> int:
    m = _load(args.model, args.seed)
    try:
        sizes = [int(s) for s in args.domain_sizes.split(",") if s.strip()]
        if not sizes or min(sizes) < 1:
            raise ValueError
    except ValueError:
        raise _Exit(EXIT_QUERY, f"bad --domain-sizes {args.domain_sizes!r}")
    name = args.target.split("(")[0].strip()
    try:
        m.prv(name)
    except ModelError as exc:
        raise _Exit(EXIT_QUERY, str(exc))
    print("domain_size,lifted_choice_count,ground_neighbor_subset_bound,wall_time_ms")
    for n, count, bound, ms in bench_rows(m, name, sizes):
        print(f"{n},{count},{bound},{ms:.3f}")
    return 0


def cmd_ground(args) -> int:
    m = _load(args.model, args.seed)
    text = serialize_model(ground_as_model(m))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="liftdo", description="Lifted causal inference in partially directed parfactor models.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("query", help="observational or interventional query")
    p.add_argument("model")
    p.add_argument("query", help='e.g. "P(Rev | do(Comp(alice)=high))"')
    p.add_argument("--oracle", action="store_true", help="use the brute-force ground oracle")
    p.add_argument("--seed", type=int, help="fill uniform tables with seeded random potentials")
    p.add_argument("--output", help="write the result document here")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("dsep", help="d-separation test")
    p.add_argument("model")
    p.add_argument("expr", help='"X ; Y | Z"')
    p.add_argument("--lifted", action="store_true", help="sets name whole PRVs")
    p.set_defaults(func=cmd_dsep)

    p = sub.add_parser("bench", help="parent-choice counts as the target domain grows")
    p.add_argument("model")
    p.add_argument("target")
    p.add_argument("--domain-sizes", default="3,5,10")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ground", help="print the ground model as a model file")
    p.add_argument("model")
    p.add_argument("--seed", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_ground)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Exit as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
