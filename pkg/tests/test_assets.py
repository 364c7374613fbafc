import json
import math

import pytest

from kubgen.assets import build_object, parse_manifest, serialize_manifest
from kubgen.errors import DuplicateAsset, MissingField, ParseError, UnknownProperty
from kubgen.mesh import mass_properties, make_primitive

MANIFEST = """
{
  "assets": [
    {"id": "ball", "source": {"primitive": "sphere", "size": 1.0}},
    {"id": "crate", "source": {"primitive": "cube", "size": 1.0},
     "friction": 0.9, "restitution": 0.1, "mass": 2.5},
    {"id": "mesh_thing", "source": "meshes/thing.geo", "density": 500.0,
     "tags": ["clutter"]}
  ]
}
"""


def test_parse_defaults():
    m = parse_manifest(MANIFEST)
    ball = m["ball"]
    assert ball.friction == 0.5
    assert ball.restitution == 0.5
    assert ball.density == 1000.0
    assert ball.mass is None  # resolved only at materialization


def test_parse_explicit_values():
    m = parse_manifest(MANIFEST)
    crate = m["crate"]
    assert crate.friction == 0.9
    assert crate.restitution == 0.1
    assert crate.mass == 2.5
    assert m["mesh_thing"].density == 500.0
    assert m["mesh_thing"].tags == ("clutter",)


def test_parse_bad_json():
    with pytest.raises(ParseError):
        parse_manifest("{not json")


def test_parse_missing_fields():
    with pytest.raises(MissingField):
        parse_manifest('{"assets": [{"source": "x.geo"}]}')
    with pytest.raises(MissingField):
        parse_manifest('{"assets": [{"id": "a"}]}')
    with pytest.raises(MissingField):
        parse_manifest('{"items": []}')


def test_parse_unknown_keys_rejected():
    with pytest.raises(UnknownProperty):
        parse_manifest('{"assets": [{"id": "a", "source": "x.geo", "frictoin": 0.5}]}')
    with pytest.raises(UnknownProperty):
        parse_manifest('{"assets": [], "extras": 1}')


def test_parse_duplicate_ids():
    text = json.dumps(
        {"assets": [{"id": "a", "source": "x.geo"}, {"id": "a", "source": "y.geo"}]}
    )
    with pytest.raises(DuplicateAsset):
        parse_manifest(text)


def test_serialize_parse_roundtrip():
    m = parse_manifest(MANIFEST)
    text = serialize_manifest(m)
    m2 = parse_manifest(text)
    assert serialize_manifest(m2) == text  # canonical form is a fixed point
    assert [s.id for s in m2] == [s.id for s in m]
    assert m2["crate"].mass == 2.5 and m2["ball"].mass is None


def test_serialized_form_is_sorted_and_newline_terminated():
    text = serialize_manifest(parse_manifest(MANIFEST))
    assert text.endswith("\n")
    parsed = json.loads(text)
    keys = list(parsed["assets"][0].keys())
    assert keys == sorted(keys)


def test_build_object_mass_from_density():
    m = parse_manifest(MANIFEST)
    obj = build_object(m["ball"], uid="b1")
    vol = mass_properties(make_primitive("sphere", 1.0)).volume
    assert math.isclose(obj.mass, 1000.0 * vol, rel_tol=1e-12)
    assert obj.collision_shape.kind_name == "sphere"
    assert obj.asset_ref == "ball"


def test_build_object_explicit_mass_wins():
    m = parse_manifest(MANIFEST)
    obj = build_object(m["crate"], uid="c1")
    assert obj.mass == 2.5
    assert obj.friction == 0.9
    assert obj.collision_shape.kind_name == "box"


def test_build_object_from_mesh_file(tmp_path):
    geo = tmp_path / "meshes" / "thing.geo"
    geo.parent.mkdir()
    from kubgen.mesh import dump_mesh

    geo.write_text(dump_mesh(make_primitive("cube", 2.0)))
    m = parse_manifest(MANIFEST)
    obj = build_object(m["mesh_thing"], uid="t1", base_dir=tmp_path)
    assert math.isclose(obj.mass, 500.0 * 8.0, rel_tol=1e-9)
    # generic mesh, not tagged a primitive after the text roundtrip
    assert obj.collision_shape.kind_name == "hull"
