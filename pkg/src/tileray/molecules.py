"""Molecule ingestion: PDB parsing, per-molecule metrics, and atom BVHs.

A molecule is a set of spheres in its own object space. The parser is
deliberately narrow: fixed-column ATOM/HETATM records from the first
model, element-based van der Waals radii, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

from .bvh import Bvh, build_bvh
from .geometry import Aabb, Vec3

# Van der Waals radii in scene units (angstroms). Standard values; the
# unknown fallback keeps parsing total.
VDW_RADII = {
    "H": 1.20,
    "C": 1.70,
    "N": 1.55,
    "O": 1.52,
    "S": 1.80,
    "P": 1.80,
}
VDW_DEFAULT = 1.60

RADIUS_MIN = 0.2
RADIUS_MAX = 5.0


class PdbError(ValueError):
    """Malformed or empty PDB input."""


@dataclass(frozen=True)
class Atom:
    center: Vec3
    radius: float
    element: str


@dataclass
class MoleculeType:
    """Atoms in object space plus the metrics shell construction needs.

    height is the extent along +-y, width the larger of the x and z
    extents; both include sphere radii. up_vector orients instances when
    smooth-normal placement is enabled (object space is assumed to be
    authored with +y up).
    """

    id: int
    name: str
    atoms: list[Atom]
    aabb: Aabb = field(init=False)
    height: float = field(init=False)
    width: float = field(init=False)
    up_vector: Vec3 = (0.0, 1.0, 0.0)
    color: Tuple[float, float, float] = (0.8, 0.8, 0.8)

    def __post_init__(self):
        if not self.atoms:
            raise PdbError(f"molecule {self.name!r} has no atoms")
        aabb, height, width = molecule_metrics(self.atoms)
        self.aabb = aabb
        self.height = height
        self.width = width

    @property
    def atom_count(self) -> int:
        return len(self.atoms)


def molecule_metrics(atoms: list[Atom]) -> Tuple[Aabb, float, float]:
    """AABB of the sphere union, height (y extent), width (max of x/z)."""
    if not atoms:
        raise PdbError("no atoms")
    a = atoms[0]
    lo = [a.center[i] - a.radius for i in range(3)]
    hi = [a.center[i] + a.radius for i in range(3)]
    for a in atoms[1:]:
        for i in range(3):
            lo[i] = min(lo[i], a.center[i] - a.radius)
            hi[i] = max(hi[i], a.center[i] + a.radius)
    aabb = Aabb(tuple(lo), tuple(hi))
    height = hi[1] - lo[1]
    width = max(hi[0] - lo[0], hi[2] - lo[2])
    return aabb, height, width


def element_radius(element: str) -> float:
    return VDW_RADII.get(element.upper(), VDW_DEFAULT)


def _record_element(line: str, lineno: int) -> str:
    # columns 77-78, falling back to the first letter of the atom name
    if len(line) >= 78:
        sym = line[76:78].strip()
        if sym and sym.isalpha():
            return sym.upper()
    name = line[12:16] if len(line) >= 16 else line[12:]
    for ch in name:
        if ch.isalpha():
            return ch.upper()
    raise PdbError(f"line {lineno}: cannot determine element from record")


def parse_pdb(text: str, mol_id: int = 0, name: str = "") -> MoleculeType:
    """One Atom per ATOM/HETATM record of the first model, recentered so
    the centroid sits at the object-space origin.

    Coordinates come from fixed columns 31-54; elements from columns
    77-78 with an atom-name fallback. Raises PdbError on empty input or
    a malformed record (with its line number).
    """
    centers: list[Vec3] = []
    elements: list[str] = []
    in_first_model = True
    for lineno, line in enumerate(text.splitlines(), start=1):
        rec = line[:6].strip()
        if rec == "ENDMDL":
            # first model wins; ignore the rest
            in_first_model = False
            continue
        if not in_first_model or rec not in ("ATOM", "HETATM"):
            continue
        if len(line) < 54:
            raise PdbError(f"line {lineno}: record too short for coordinates")
        try:
            x = float(line[30:38])
            y = float(line[38:46])
            z = float(line[46:54])
        except ValueError as exc:
            raise PdbError(f"line {lineno}: bad coordinate field ({exc})") from None
        centers.append((x, y, z))
        elements.append(_record_element(line, lineno))

    if not centers:
        raise PdbError("no ATOM/HETATM records found")

    n = len(centers)
    cx = sum(c[0] for c in centers) / n
    cy = sum(c[1] for c in centers) / n
    cz = sum(c[2] for c in centers) / n
    atoms = []
    for (x, y, z), el in zip(centers, elements):
        r = min(max(element_radius(el), RADIUS_MIN), RADIUS_MAX)
        atoms.append(Atom((x - cx, y - cy, z - cz), r, el))
    return MoleculeType(id=mol_id, name=name, atoms=atoms)


def atom_bounds(atom: Atom) -> Aabb:
    c, r = atom.center, atom.radius
    return Aabb((c[0] - r, c[1] - r, c[2] - r), (c[0] + r, c[1] + r, c[2] + r))


def build_atom_bvh(molecule: MoleculeType) -> Bvh:
    """BVH whose leaves reference atom indices (the lowest primitive)."""
    return build_bvh([atom_bounds(a) for a in molecule.atoms])
