from dataclasses import replace

import pytest

from liftdo.model import ModelError, Node, children, neighbours, parents, validate
from liftdo.modelio import parse_model


def labels(nodes):
    return {str(n) for n in nodes}


def test_employee_model_is_valid(employees):
    rep = validate(employees)
    assert rep.ok and not rep.issues


def test_adjacency_of_employee_model(employees):
    assert labels(parents("Sal", employees)) == {"Rev", "Comp(E)"}
    assert labels(neighbours("Comp", employees)) == {"Rev"}
    assert neighbours("Sal", employees) == set()
    assert labels(children("Rev", employees)) == {"Sal(E)"}
    assert parents("Comp", employees) == set()


def test_unknown_node_raises(employees):
    with pytest.raises(ModelError):
        parents("Foo", employees)


def test_duality_and_symmetry(employees):
    for a in employees.nodes:
        for b in parents(a, employees):
            assert a in children(b, employees)
        for b in neighbours(a, employees):
            assert a in neighbours(b, employees)


def test_directed_cycle_reported(data_dir):
    m = parse_model((data_dir / "cyclic.ppcfg").read_text())
    rep = validate(m)
    assert not rep.ok
    assert any("directed cycle" in i.message for i in rep.issues)


def test_two_children_reported(employees):
    g = employees.parfactors[0]
    bad = replace(employees, parfactors=(replace(g, directed=(True, True)),) + employees.parfactors[1:])
    rep = validate(bad)
    assert not rep.ok
    assert any("CHILD" in i.message for i in rep.issues)


@pytest.mark.parametrize(
    "text, needle",
    [
        ("logvar E {a}\nprv A(E) range {t}\nprv B range {t, f}\nparfactor g(A(E)) uniform\n", "B"),
        ("logvar E {a}\nprv A(E) range {t, f}\nparfactor g(A(E)) table { t = 1 f = 0 }\n", "potential"),
        ("logvar E {a, b}\nprv A(E) range {t, f}\nparfactor g(A(E)) where E in {a} uniform\n"
         "parfactor h(A(E)) where E in {b} uniform\nisolate A(E) {(c)}\n", "isolate"),
    ],
)
def test_validation_issues(text, needle):
    rep = validate(parse_model(text))
    assert not rep.ok
    assert any(needle in str(i) for i in rep.issues), str(rep)


def test_validate_is_total_on_broken_models(employees):
    g = employees.parfactors[0]
    broken = [
        replace(g, potentials=()),
        replace(g, args=()),
        replace(g, directed=(True,)),
        replace(g, potentials=(float("nan"),) * 9),
    ]
    for b in broken:
        rep = validate(replace(employees, parfactors=(b,) + employees.parfactors[1:]))
        assert not rep.ok


def test_node_labels():
    assert str(Node("Comp", None, ("E",))) == "Comp(E)"
    assert str(Node("Comp", (("alice",),), ("E",))) == "Comp(alice)"
    assert str(Node("Comp", (("alice",), ("bob",)), ("E",))) == "Comp(E)|{alice, bob}"
