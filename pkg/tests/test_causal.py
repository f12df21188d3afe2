import itertools

import numpy as np
import pytest

from liftdo.causal import (
    DoQuery,
    QueryTargetOverlap,
    UnknownAtom,
    enumerate_parent_choices,
    lifted_do_query,
    orient_and_extend,
    post_intervention_distribution,
    prepare,
    uniquely_identifiable,
)
from liftdo.dsep import d_separated
from liftdo.fixtures import employee_model, random_fixture
from liftdo.grounding import GroundAtom, ground
from liftdo.inference import marginal
from liftdo.model import Node
from liftdo.modelio import parse_model
from liftdo.oracle import brute_force_do, enumerate_extensions, literal_do, sets_match

REV = GroundAtom("Rev")
ALICE = GroundAtom("Comp", ("alice",))
SAL_ALICE = GroundAtom("Sal", ("alice",))
COMP_E = Node("Comp", None, ("E",))


def dq(target, value="high", query=REV):
    return DoQuery.of(query, [(target, value)])


def choice_sets(choices):
    return [tuple(sorted(str(p) for p in ps) for _, ps in c.selected) for c in choices]


def test_identifiability(employees):
    assert uniquely_identifiable(employees, dq(SAL_ALICE))
    assert not uniquely_identifiable(employees, dq(ALICE))
    assert uniquely_identifiable(employees, DoQuery.of(REV))


def test_parent_choices_of_comp_alice(employees):
    p = prepare(employees, dq(ALICE))
    cs = enumerate_parent_choices(p.model, [t for t, _ in p.targets])
    assert choice_sets(cs) == [([],), (["Rev"],)]
    assert [c.as_dict() for c in cs] == [{"Comp(alice)": "{}"}, {"Comp(alice)": "{Rev}"}]


def test_parent_choices_without_neighbours(employees):
    p = prepare(employees, dq(SAL_ALICE))
    assert choice_sets(enumerate_parent_choices(p.model, [t for t, _ in p.targets])) == [([],)]


def test_two_targets_sharing_a_neighbour():
    m = parse_model("prv A range {t, f}\nprv B range {t, f}\nprv C range {t, f}\n"
                    "parfactor g(A, B) uniform\nparfactor h(A, C) uniform\n")
    p = prepare(m, DoQuery.of(GroundAtom("A"), [(GroundAtom("B"), "t"), (GroundAtom("C"), "t")]))
    cs = enumerate_parent_choices(p.model, [t for t, _ in p.targets])
    assert choice_sets(cs) == [([], []), ([], ["A"]), (["A"], []), (["A"], ["A"])]


def test_clique_filter():
    # B and C are both undirected neighbours of A but share no factor
    m = parse_model("prv A range {t, f}\nprv B range {t, f}\nprv C range {t, f}\n"
                    "parfactor g(A, B) uniform\nparfactor h(A, C) uniform\n")
    p = prepare(m, dq(GroundAtom("A"), "t", GroundAtom("B")))
    cs = enumerate_parent_choices(p.model, [t for t, _ in p.targets])
    assert choice_sets(cs) == [([],), (["B"],), (["C"],)]


def test_orient_with_rev_as_parent(seeded):
    p = prepare(seeded, dq(ALICE))
    cs = enumerate_parent_choices(p.model, [t for t, _ in p.targets])
    full = orient_and_extend(p.model, cs[1])
    assert full is not None
    assert full.parfactor("g1'").child == 0  # Rev -> Comp(alice)
    assert full.parfactor("g1").child == 0  # Rev -> Comp(E) on {bob, charlie}
    gm = ground(full)
    assert gm.fully_directed
    exts = enumerate_extensions(ground(seeded))
    children = {(tuple(f.atoms), f.child_atom) for f in gm.factors}
    assert any(children == {(tuple(f.atoms), f.child_atom) for f in e.factors} for e in exts)


def test_fully_directed_model_is_its_own_extension():
    m = parse_model("prv A range {t, f}\nprv B range {t, f}\nparfactor g(A, ->B) uniform\n")
    p = prepare(m, dq(GroundAtom("A"), "t", GroundAtom("B")))
    cs = enumerate_parent_choices(p.model, [t for t, _ in p.targets])
    assert len(cs) == 1
    assert orient_and_extend(p.model, cs[0]) == p.model


def test_choice_without_completion_is_none():
    # A -> B directed, B - C and C - A undirected: C <- B with C -> A closes A -> B -> C -> A
    m = parse_model("prv A range {t, f}\nprv B range {t, f}\nprv C range {t, f}\n"
                    "parfactor g(A, ->B) uniform\nparfactor h(B, C) uniform\nparfactor k(C, A) uniform\n")
    p = prepare(m, dq(GroundAtom("C"), "t", GroundAtom("A")))
    cs = enumerate_parent_choices(p.model, [t for t, _ in p.targets])
    by = {tuple(choice_sets([c])[0][0]): orient_and_extend(p.model, c) for c in cs}
    assert by[("B",)] is None
    assert all(by[k] is not None for k in [(), ("A",), ("A", "B")])
    gm = ground(m)
    ext_choices = {tuple(str(a) for a in e.parents(GroundAtom("C"))) for e in enumerate_extensions(gm)}
    assert ("B",) not in ext_choices


def test_post_intervention_on_isolated_root():
    m = parse_model("prv A range {t, f}\nprv B range {t, f}\nprv C range {t, f}\n"
                    "parfactor g(A, ->B) table {(t,t)=1 (t,f)=3 (f,t)=2 (f,f)=2}\n"
                    "parfactor h(->C) table {t = 1 f = 4}\n")
    d = post_intervention_distribution(m, {GroundAtom("C"): "t"}, [GroundAtom("B")])
    e = marginal(ground(m), GroundAtom("B"))
    assert d.distance(e) <= 1e-12


def test_post_intervention_matches_literal_sum(seeded):
    gm = ground(seeded)
    for ext in enumerate_extensions(gm):
        full = ext_to_model(seeded, ext)
        d = post_intervention_distribution(full, {ALICE: "high"}, [REV])
        assert d.distance(literal_do(ext, {ALICE: "high"}, [REV])) <= 1e-9
        if GroundAtom("Rev") in ext.parents(ALICE):
            assert d.distance(marginal(gm, REV)) <= 1e-9


def ext_to_model(m, ext):
    from dataclasses import replace

    from liftdo.shattering import ground_as_model

    g = ground_as_model(m)
    gm = ground(g)
    child = {tuple(f.atoms): f.child for f in ext.factors}
    pfs = []
    for pf, f in zip(g.parfactors, gm.factors):
        pfs.append(pf.with_child(child[tuple(f.atoms)]))
    return replace(g, parfactors=tuple(pfs))


def test_two_answers_for_competence_intervention(seeded, seeded_gm):
    ans = lifted_do_query(seeded, dq(ALICE))
    assert not ans.unique and len(ans.results) == 2
    assert [chs[0].as_dict()["Comp(alice)"] for chs, _ in ans.results] == ["{}", "{Rev}"]
    assert sets_match(ans.distributions, brute_force_do(seeded_gm, dq(ALICE)).distributions)
    for d in ans.distributions:
        assert abs(sum(d.probs.values()) - 1) <= 1e-12


def test_no_neighbours_gives_one_result(seeded, seeded_gm):
    ans = lifted_do_query(seeded, dq(SAL_ALICE))
    assert ans.unique
    assert sets_match(ans.distributions, brute_force_do(seeded_gm, dq(SAL_ALICE)).distributions)


@pytest.mark.parametrize("size", [3, 5, 10])
def test_prv_target_choice_count_is_constant(size):
    m = employee_model(seed=42, size=size)
    ans = lifted_do_query(m, dq(COMP_E))
    assert len(ans.choices) == 2
    assert len(ans.results) + len(ans.infeasible) == 2


def test_prv_target_answers_are_oracle_answers(seeded, seeded_gm):
    lifted = lifted_do_query(seeded, dq(COMP_E)).distributions
    oracle = brute_force_do(seeded_gm, dq(COMP_E)).distributions
    assert lifted and all(any(d.distance(e) <= 1e-9 for e in oracle) for d in lifted)


def test_irregular_prv_target_falls_back_per_instance():
    src = ("logvar E {a, b}\nprv A(E) range {t, f}\nprv B range {t, f}\n"
           "parfactor g(A(E), B) where (E) in {(a)} uniform\nparfactor h(A(E)) uniform\n")
    m = parse_model(src)
    p = prepare(m, dq(Node("A", None, ("E",)), "t", GroundAtom("B")))
    assert [p.model.groundings_of(t) for t, _ in p.targets] == [(("a",),), (("b",),)]


def test_errors(seeded):
    with pytest.raises(QueryTargetOverlap):
        lifted_do_query(seeded, dq(REV, "low"))
    with pytest.raises(QueryTargetOverlap):
        lifted_do_query(seeded, dq(COMP_E, "low", ALICE))
    with pytest.raises(QueryTargetOverlap):
        lifted_do_query(seeded, DoQuery.of(REV, [(ALICE, "low"), (COMP_E, "low")]))
    with pytest.raises(UnknownAtom):
        lifted_do_query(seeded, dq(GroundAtom("Comp", ("dave",))))
    with pytest.raises(UnknownAtom):
        lifted_do_query(seeded, dq(ALICE, query=GroundAtom("Foo")))
    with pytest.raises(ValueError):
        lifted_do_query(seeded, dq(ALICE, "huge"))


def test_multiple_query_atoms(seeded, seeded_gm):
    q = DoQuery((REV, SAL_ALICE), ((ALICE, "high"),))
    ans = lifted_do_query(seeded, q)
    assert sets_match(ans.distributions, brute_force_do(seeded_gm, q).distributions)
    assert all(len(d.probs) == 9 for d in ans.distributions)


def test_threads_keep_order(seeded, monkeypatch):
    base = lifted_do_query(seeded, dq(ALICE))
    monkeypatch.setenv("LIFTDO_THREADS", "4")
    par = lifted_do_query(seeded, dq(ALICE))
    assert [c for c in par.choices] == [c for c in base.choices]
    assert [d.probs for d in par.distributions] == [d.probs for d in base.distributions]


def fixtures(n, seed, **kw):
    rng = np.random.default_rng(seed)
    return [random_fixture(rng, **kw) for _ in range(n)]


def test_feasible_choices_match_oracle_extensions():
    for m in fixtures(25, 21):
        gm = ground(m)
        exts = enumerate_extensions(gm)
        for t in gm.atoms:
            q = next(a for a in gm.atoms if a != t)
            ans = lifted_do_query(m, dq(t, gm.range_of(t)[0], q))
            pm = prepare(m, dq(t, gm.range_of(t)[0], q)).model
            feasible = {
                frozenset(GroundAtom(n.prv, a) for _, ps in c.selected for n in ps for a in pm.groundings_of(n))
                & set(gm.neighbours(t))
                for chs, _ in ans.results for c in chs
            }
            oracle = {frozenset(a for a in gm.neighbours(t) if a in e.parents(t)) for e in exts}
            assert feasible == oracle, (t, feasible, oracle)


def test_extensions_preserve_separations():
    for m in fixtures(15, 31, max_atoms=8):
        gm = ground(m)
        for t in gm.atoms[:3]:
            p = prepare(m, dq(t, gm.range_of(t)[0], next(a for a in gm.atoms if a != t)))
            for c in enumerate_parent_choices(p.model, [x for x, _ in p.targets]):
                full = orient_and_extend(p.model, c)
                if full is None:
                    continue
                fg = ground(full)
                for a, b in itertools.combinations(gm.atoms, 2):
                    rest = [x for x in gm.atoms if x not in (a, b)]
                    for k in range(3):
                        for z in itertools.combinations(rest, k):
                            assert d_separated(fg, [a], [b], z) == d_separated(gm, [a], [b], z)
