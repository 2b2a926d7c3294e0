import json

import pytest

from gogbench.config import parse_config, parse_config_text, shipped_configs
from gogbench.errors import ParseError, SchemaError, ValidationFailed

GOOD = """
[graph]
name = tiny
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
basis = x, z
image = x, z

[edge 1b]
source = B
target = A
reverse = 1
basis = x, z
image = x, z

[experiment sides]
edge = 1
radius = 2
"""


def test_shipped_configs_parse_and_validate():
    assert shipped_configs() == ["double-f2xz.cfg", "hnn-f2xz.cfg", "torus-complex-3.cfg", "torus-complex-4.cfg"]
    for name in shipped_configs():
        cfg = parse_config(name)
        assert cfg.gog.validate().ok
        assert len(cfg.sha256) == 64


def test_torus_config_contents():
    cfg = parse_config("torus-complex-3.cfg")
    assert sorted(cfg.gog.vertices) == ["v1", "v2"]
    assert cfg.experiment("distortion")["radii"] == "4 5 6"
    assert cfg.experiment("missing") == {}


def test_missing_reverse_entry_names_edge():
    text = GOOD.replace("reverse = 1b", "reverse = 7")
    with pytest.raises(SchemaError, match="edge '1'.*'7'"):
        parse_config_text(text)


def test_schema_errors_carry_line_numbers():
    text = GOOD.replace("center = z\n\n[vertex B]", "center = z\ncolour = red\n\n[vertex B]")
    with pytest.raises(SchemaError, match=r"line 9: \[vertex A\] unknown key 'colour'"):
        parse_config_text(text)


def test_unknown_section():
    with pytest.raises(SchemaError, match="unknown section"):
        parse_config_text(GOOD + "\n[graphs]\nname = x\n")


def test_unknown_generator_in_basis():
    with pytest.raises(SchemaError, match="basis"):
        parse_config_text(GOOD.replace("basis = x, z\nimage = x, z\n\n[edge 1b]", "basis = q, z\nimage = x, z\n\n[edge 1b]"))


def test_non_commuting_basis_is_validation_failure():
    text = GOOD.replace("basis = x, z", "basis = x, y").replace("image = x, z", "image = x, y")
    with pytest.raises(ValidationFailed) as err:
        parse_config_text(text)
    assert err.value.violations[0].code == "non-commuting"
    assert parse_config_text(text, validate=False).gog is not None


def test_malformed_ini_is_parse_error():
    with pytest.raises(ParseError):
        parse_config_text("[graph\nbase = A\n")
    with pytest.raises(ParseError):
        parse_config("no-such-config.cfg")


def test_json_variant_matches_ini():
    doc = {
        "graph": {"name": "tiny", "base": "A"},
        "vertices": [{"id": "A", "free": ["x", "y"], "center": "z"}, {"id": "B", "free": "x y", "center": "z"}],
        "edges": [
            {"id": "1", "source": "A", "target": "B", "reverse": "1b", "basis": ["x", "z"], "image": ["x", "z"]},
            {"id": "1b", "source": "B", "target": "A", "reverse": "1", "basis": "x, z", "image": "x, z"},
        ],
        "experiments": {"sides": {"edge": "1", "radius": "2"}},
    }
    a = parse_config_text(json.dumps(doc))
    b = parse_config_text(GOOD)
    assert a.gog.edges == b.gog.edges
    assert a.experiments == b.experiments
    with pytest.raises(ParseError, match="line 1"):
        parse_config_text("{oops")


def test_spanning_tree_override():
    text = GOOD.replace("base = A", "base = A\nspanning_tree = 1")
    assert parse_config_text(text).gog.tree_edges == {"1", "1b"}
    with pytest.raises(ValidationFailed):
        parse_config_text(GOOD.replace("base = A", "base = A\nspanning_tree = 9"))
