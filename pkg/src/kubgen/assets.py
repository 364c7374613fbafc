"""Asset manifests: a JSON catalog of reusable bodies.

A manifest maps asset ids to geometry (a mesh file in the text dialect or
a primitive spec) plus physical surface properties.  Parsing is strict:
unknown keys raise UnknownProperty so typos fail loudly instead of being
silently defaulted.  Mass resolution is deferred: entries without an
explicit mass carry mass=None until materialization, when the mesh volume
is known and the density default (1000 kg/m^3, water) applies.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateAsset, MissingField, ParseError, UnknownProperty
from .mesh import load_mesh, make_primitive, mass_properties
from .scene import Material, RigidObject
from .shapes import make_collision_shape

DEFAULT_FRICTION = 0.5
DEFAULT_RESTITUTION = 0.5
DEFAULT_DENSITY = 1000.0

_ENTRY_KEYS = {"id", "source", "friction", "restitution", "density", "mass", "tags"}


@dataclass
class AssetSpec:
    id: str
    source: object  # path string or {"primitive": kind, "size": s}
    friction: float = DEFAULT_FRICTION
    restitution: float = DEFAULT_RESTITUTION
    density: float = DEFAULT_DENSITY
    mass: object = None  # None -> derive from density at materialization
    tags: tuple = ()


class AssetManifest:
    def __init__(self, specs):
        self.specs = {}
        for spec in specs:
            if spec.id in self.specs:
                raise DuplicateAsset(f"manifest lists id {spec.id!r} twice")
            self.specs[spec.id] = spec

    def __getitem__(self, asset_id):
        return self.specs[asset_id]

    def __iter__(self):
        return iter(self.specs.values())

    def __len__(self):
        return len(self.specs)


def parse_manifest(text):
    """Parse manifest JSON text.  ParseError / MissingField / UnknownProperty / DuplicateAsset."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"manifest is not valid JSON: {e}") from None
    if not isinstance(data, dict) or "assets" not in data:
        raise MissingField("manifest needs a top-level 'assets' list")
    extra = set(data) - {"assets"}
    if extra:
        raise UnknownProperty(f"unknown manifest keys: {sorted(extra)}")
    specs = []
    for i, entry in enumerate(data["assets"]):
        if not isinstance(entry, dict):
            raise ParseError(f"assets[{i}] is not an object")
        unknown = set(entry) - _ENTRY_KEYS
        if unknown:
            raise UnknownProperty(f"assets[{i}] has unknown keys: {sorted(unknown)}")
        for req in ("id", "source"):
            if req not in entry:
                raise MissingField(f"assets[{i}] is missing {req!r}")
        specs.append(
            AssetSpec(
                id=str(entry["id"]),
                source=entry["source"],
                friction=float(entry.get("friction", DEFAULT_FRICTION)),
                restitution=float(entry.get("restitution", DEFAULT_RESTITUTION)),
                density=float(entry.get("density", DEFAULT_DENSITY)),
                mass=None if entry.get("mass") is None else float(entry["mass"]),
                tags=tuple(entry.get("tags", ())),
            )
        )
    return AssetManifest(specs)


def serialize_manifest(manifest):
    """Canonical JSON text: sorted keys, defaults written out, trailing newline."""
    entries = []
    for spec in manifest:
        entries.append(
            {
                "id": spec.id,
                "source": spec.source,
                "friction": spec.friction,
                "restitution": spec.restitution,
                "density": spec.density,
                "mass": spec.mass,
                "tags": list(spec.tags),
            }
        )
    return json.dumps({"assets": entries}, sort_keys=True, indent=2) + "\n"


def load_spec_mesh(spec, base_dir=None):
    if isinstance(spec.source, dict):
        for req in ("primitive", "size"):
            if req not in spec.source:
                raise MissingField(f"primitive source needs {req!r}")
        return make_primitive(spec.source["primitive"], spec.source["size"])
    path = Path(spec.source)
    if base_dir is not None:
        path = Path(base_dir) / path
    return load_mesh(path.read_text())


def build_object(spec, uid, base_dir=None, **overrides):
    """Materialize a manifest entry into a RigidObject.

    Mass: explicit mass wins, else density * mesh volume.  The collision
    shape comes from make_collision_shape on the loaded mesh.
    """
    msh = load_spec_mesh(spec, base_dir)
    if spec.mass is not None:
        mass = spec.mass
    else:
        mass = spec.density * mass_properties(msh).volume
    kwargs = dict(
        mesh=msh,
        collision_shape=make_collision_shape(msh),
        mass=mass,
        friction=spec.friction,
        restitution=spec.restitution,
        material=Material(),
        asset_ref=spec.id,
    )
    kwargs.update(overrides)
    return RigidObject(uid, **kwargs)
