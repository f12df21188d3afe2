import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftdo.fixtures import employee_model, random_fixture
from liftdo.grounding import GroundAtom, assignments, ground, joint_probability
from liftdo.inference import (
    ZeroEvidenceProbability,
    conditional_given_parents,
    joint_marginal,
    marginal,
)
from liftdo.modelio import parse_model
from liftdo.oracle import enumerate_extensions, exhaustive_marginal, full_joint

REV = GroundAtom("Rev")
ALICE = GroundAtom("Comp", ("alice",))


def close(d, e, tol):
    return d.probs.keys() == e.probs.keys() and all(abs(d.probs[k] - e.probs[k]) <= tol for k in d.probs)


def test_uniform_marginal(employees):
    d = marginal(ground(employees), REV)
    assert list(d.probs) == ["low", "medium", "high"]
    assert np.allclose(d.values(), 1 / 3, atol=1e-15)


def test_seeded_marginal_with_evidence(seeded_gm):
    d = marginal(seeded_gm, REV, {ALICE: "high"})
    e = exhaustive_marginal(seeded_gm, [REV], {ALICE: "high"})
    assert close(d, e, 1e-10)


def test_query_in_evidence_rejected(seeded_gm):
    with pytest.raises(ValueError):
        marginal(seeded_gm, REV, {REV: "low"})


def test_zero_evidence_probability():
    m = parse_model("prv A range {t, f}\nprv B range {t, f}\nparfactor g(A, B) table {(t,t)=1 (t,f)=1 (f,t)=0 (f,f)=0}\n")
    with pytest.raises(ZeroEvidenceProbability):
        marginal(ground(m), GroundAtom("B"), {GroundAtom("A"): "f"})


def test_root_conditional_is_uniform(employees):
    gm = ground(employees)
    ext = enumerate_extensions(gm)[0]
    root = next(a for a in ext.atoms if not ext.parents(a))
    d = conditional_given_parents(ext, root, {})
    assert np.allclose(d.values(), 1 / 3)


def test_chain_conditional_is_normalised_row():
    m = parse_model("prv A range {a0, a1}\nprv B range {b0, b1, b2}\n"
                    "parfactor g(A, ->B) table {(a0,b0)=1 (a0,b1)=2 (a0,b2)=5 (a1,b0)=3 (a1,b1)=3 (a1,b2)=4}\n")
    gm = ground(m)
    d = conditional_given_parents(gm, GroundAtom("B"), {GroundAtom("A"): "a1"})
    assert np.allclose(d.values(), [0.3, 0.3, 0.4], atol=1e-15)


def test_conditional_needs_exact_parents(seeded_gm):
    ext = enumerate_extensions(seeded_gm)[0]
    sal = GroundAtom("Sal", ("alice",))
    with pytest.raises(ValueError):
        conditional_given_parents(ext, sal, {REV: "low"})
    with pytest.raises(ValueError):
        conditional_given_parents(seeded_gm, sal, {REV: "low", ALICE: "high"})


def test_conditional_against_exhaustive(seeded_gm):
    ext = enumerate_extensions(seeded_gm)[0]
    sal = GroundAtom("Sal", ("alice",))
    d = conditional_given_parents(ext, sal, {REV: "low", ALICE: "high"})
    e = exhaustive_marginal(seeded_gm, [sal], {REV: "low", ALICE: "high"})
    assert close(d, e, 1e-10)


def fixtures(n, seed):
    rng = np.random.default_rng(seed)
    return [random_fixture(rng) for _ in range(n)] + [employee_model(seed=42)]


def test_elimination_equals_enumeration():
    for m in fixtures(25, 3):
        gm = ground(m)
        joint = full_joint(gm)
        for a in gm.atoms:
            d = marginal(gm, a)
            e = exhaustive_marginal(gm, [a])
            assert all(abs(d.probs[k] - e.probs[k]) <= 1e-10 * max(1.0, e.probs[k]) for k in d.probs)
            assert abs(sum(d.probs.values()) - 1) <= 1e-12
        a, b = gm.atoms[0], gm.atoms[-1]
        t = joint_marginal(gm, [a, b])
        i, j = gm.index[a], gm.index[b]
        ref = joint.sum(axis=tuple(k for k in range(joint.ndim) if k not in (i, j)))
        assert np.allclose(t, ref if i < j else ref.T, rtol=1e-10, atol=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.randoms(use_true_random=False))
def test_elimination_order_independence(seed, rnd):
    m = random_fixture(np.random.default_rng(seed))
    gm = ground(m)
    q = gm.atoms[0]
    others = [i for i in range(len(gm.atoms)) if gm.atoms[i] != q]
    order = list(others)
    rnd.shuffle(order)
    d1 = marginal(gm, q)
    d2 = marginal(gm, q, order=order)
    assert close(d1, d2, 1e-10)


def test_chain_rule_on_extensions():
    for m in fixtures(6, 8):
        gm = ground(m)
        for ext in enumerate_extensions(gm)[:2]:
            cond = {}
            for r in ext.atoms:
                pa = ext.parents(r)
                for vals in itertools.product(*(ext.range_of(p) for p in pa)):
                    cond[r, vals] = conditional_given_parents(ext, r, dict(zip(pa, vals)))
            for a in itertools.islice(assignments(ext), 0, None, 7):
                p = 1.0
                for r in ext.atoms:
                    vals = tuple(a[x] for x in ext.parents(r))
                    p *= cond[r, vals].probs[a[r]]
                assert p == pytest.approx(joint_probability(gm, a), abs=1e-9)
