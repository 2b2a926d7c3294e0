import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gogbench.config import parse_config, parse_config_text
from gogbench.errors import BackendMismatch, ValidationFailed
from gogbench.gog import FAIL
from gogbench.groupcore import FreeWord

PAIR = """
[graph]
base = A

[vertex A]
free = x y
center = z

[vertex B]
free = x y
center = z

[edge 1]
source = A
target = B
reverse = 1b
basis = {basis}
image = {image}

[edge 1b]
source = B
target = A
reverse = 1
basis = {rbasis}
image = {rimage}
"""


def pair(basis="x, z", image="x, z", rbasis=None, rimage=None, validate=False):
    text = PAIR.format(basis=basis, image=image, rbasis=rbasis or image, rimage=rimage or basis)
    return parse_config_text(text, validate=validate).gog


@pytest.fixture(scope="module")
def torus():
    return parse_config("torus-complex-3.cfg").gog


def test_torus_complex_validates(torus):
    assert torus.validate().ok
    assert torus.edge_groups["1"].c == 1


def test_involution_violation_has_witness():
    g = pair(basis="x, z", image="x, z", rbasis="x, z", rimage="x, z^-1")
    rep = g.validate()
    assert not rep.ok
    v = [x for x in rep.violations if x.code == "involution"]
    assert v and v[0].witness["coords"] == (0, 1)
    with pytest.raises(ValidationFailed):
        g.require_valid()


def test_zero_edge_config_fails():
    text = "[graph]\nbase = v\n\n[vertex v]\nfree = x y\ncenter = z\n"
    g = parse_config_text(text, validate=False).gog
    assert [v.code for v in g.validate().violations] == ["no-edge"]


def test_non_commuting_basis_fails():
    g = pair(basis="x, y", image="x, y")
    assert g.validate().violations[0].code == "non-commuting"


def test_rank_one_basis_fails():
    g = pair(basis="x, x^2", image="x, x^2")
    assert g.validate().violations[0].code == "rank"


def test_membership_examples(torus):
    g = pair(validate=True)
    b = g.backend("A")
    assert g.edge_membership(b.parse("x x x z^5"), "1") == (3, 5)
    assert g.edge_membership(b.parse("y"), "1") is None
    with pytest.raises(BackendMismatch):
        g.edge_membership(FreeWord((1,)), "1")


def test_membership_with_c_two():
    g = pair(basis="x, z^2", image="x, z^2", validate=True)
    b = g.backend("A")
    assert g.edge_groups["1"].c == 2
    assert g.edge_membership(b.parse("z^3"), "1") is None
    assert g.edge_membership(b.parse("x z^4"), "1") == (1, 2)
    grid = {(k1, k2) for k1 in range(-3, 4) for k2 in range(-3, 4)}
    hits = {g.edge_membership(g.element_from_coords("1", k), "1") for k in grid}
    assert hits == grid


def test_coset_rep_examples():
    g = pair(validate=True)
    b = g.backend("A")
    assert g.coset_rep(b.parse("x x x y z^7"), "1") == b.parse("x x x y")
    assert g.coset_rep(b.parse("x^4 z^-2"), "1") == b.identity()
    assert g.coset_rep(b.parse("x x"), "1") == b.identity()


def test_coset_rep_is_shortlex_least_in_ball():
    g = pair(validate=True)
    b = g.backend("A")
    ball = b.ball(6)
    for x in ball[:200]:
        rep = g.coset_rep(x, "1")
        coset = [y for y in ball if g.edge_membership(b.multiply(b.invert(x), y), "1") is not None]
        assert rep == min(coset, key=b.shortlex_key)


def test_conjugate_edge_subgroup_examples():
    g = pair(validate=True)
    b = g.backend("A")
    assert g.conjugate_edge_subgroup(b.parse("y"), "1").free_generator == b.parse("y x y^-1").free
    assert g.conjugate_edge_subgroup(b.parse("x^3 z"), "1").same_as(g.edge_subgroup("1"))
    assert g.conjugate_edge_subgroup(b.parse("x"), "1").same_as(g.edge_subgroup("1"))


grid = st.tuples(st.integers(-3, 3), st.integers(-3, 3))
words = st.lists(st.sampled_from([1, -1, 2, -2]), max_size=6)


@given(words, st.integers(-3, 3), grid)
def test_coset_rep_constant_on_cosets(w, z, k):
    g = pair(basis="x y, z^2", image="x y, z^2", validate=True)
    b = g.backend("A")
    x = b.element(w, z)
    h = g.element_from_coords("1", k)
    assert g.coset_rep(b.multiply(x, h), "1") == g.coset_rep(x, "1")
    rep, coords = g.coset_decompose(x, "1")
    assert b.multiply(rep, g.element_from_coords("1", coords)) == x


@given(grid, grid)
def test_membership_is_a_homomorphism(j, k):
    g = parse_config("hnn-f2xz.cfg").gog
    for e in g.edges:
        b = g.backend(g.edges[e].source)
        prod = b.multiply(g.element_from_coords(e, j), g.element_from_coords(e, k))
        assert g.edge_membership(prod, e) == (j[0] + k[0], j[1] + k[1])


@pytest.mark.parametrize("name", ["torus-complex-3.cfg", "torus-complex-4.cfg", "hnn-f2xz.cfg", "double-f2xz.cfg"])
def test_tau_round_trip(name):
    g = parse_config(name).gog
    for e in g.edges:
        for k in itertools.product(range(-5, 6), repeat=2):
            assert g.tau_coords(g.rev(e), g.tau_coords(e, k)) == k
            x = g.element_from_coords(e, k)
            assert g.tau(g.rev(e), g.tau(e, x)) == x


def test_admissibility_torus(torus):
    reports = [torus.check_admissibility(r) for r in (2, 3, 4)]
    assert all(r.passed for r in reports)
    assert reports[-1].conditions["4-kernel-index"].detail == {"1": 1}


def test_admissibility_hnn():
    g = parse_config("hnn-f2xz.cfg").gog
    assert g.check_admissibility(3).passed


def test_shared_root_fails_condition_three():
    text = PAIR.format(basis="x, z", image="x, z", rbasis="x, z", rimage="x, z") + """
[vertex C]
free = x y
center = z

[edge 2]
source = A
target = C
reverse = 2b
basis = x^-1, z
image = y, z

[edge 2b]
source = C
target = A
reverse = 2
basis = y, z
image = x^-1, z
"""
    g = parse_config_text(text).gog
    cond = g.check_admissibility(2).conditions["3-commensurability"]
    assert cond.status == FAIL
    assert cond.witnesses[0]["g"] == ""
    assert cond.witnesses[0]["edges"] == ["1", "2"]


def test_rank_one_kernel_lattice_fails_condition_four():
    g = parse_config("double-f2xz.cfg").gog
    rep = g.check_admissibility(2)
    assert rep.conditions["4-kernel-index"].status == FAIL
    assert rep.conditions["4-kernel-index"].detail == {"1": "inf"}
    assert not rep.passed


def test_free_vertex_is_not_type_s():
    text = PAIR.format(basis="x, z", image="x, z", rbasis="x, z", rimage="x, z").replace(
        "[vertex B]\nfree = x y", "[vertex B]\nfree = x"
    )
    g = parse_config_text(text).gog
    cond = g.check_admissibility(1).conditions["2a-vertex-type-S"]
    assert cond.status == FAIL and cond.witnesses[0]["vertex"] == "B"


def test_spanning_tree_and_lk(torus):
    assert torus.tree_edges == {"1", "1b"}
    assert torus.lk("v1") == ["1"]
    assert torus.tree_path("v1", "v2") == ["1"]
    hnn = parse_config("hnn-f2xz.cfg").gog
    assert not hnn.tree_edges
    assert hnn.lk("v") == ["1", "1b"]


def test_proper_power_basis_is_not_split():
    g = pair(basis="x^2, z", image="x^2, z")
    assert [v.code for v in g.validate().violations] == ["edge-shape", "edge-shape"]


def test_check_admissibility_needs_valid_graph():
    g = pair(basis="x, y", image="x, y")
    with pytest.raises(ValidationFailed):
        g.check_admissibility(1)


def test_tau_commutes_with_group_law(torus):
    b = torus.backend("v1")
    for j, k in itertools.product(itertools.product(range(-2, 3), repeat=2), repeat=2):
        x, y = torus.element_from_coords("1", j), torus.element_from_coords("1", k)
        c = torus.backend("v2")
        assert torus.tau("1", b.multiply(x, y)) == c.multiply(torus.tau("1", x), torus.tau("1", y))
