"""Molecular structure I/O, rigid transforms and geometric descriptors.

Supported file formats:

* XYZ    -- atom count line, comment line, then ``SYM x y z`` records.
           Concatenated frames with the same element sequence become
           conformers.
* PDB    -- ATOM/HETATM records; MODEL/ENDMDL blocks become conformers.
           The element comes from columns 77-78, falling back to the
           atom-name field.
* SDF    -- V2000 coordinate blocks; multiple records ($$$$-separated)
           with the same element sequence become conformers.  Bond blocks
           are ignored.

Atomic masses come from a frozen versioned table (``data/elements.csv``)
with H = 1.0078, C = 12.0107 and O = 15.999.
"""

from __future__ import annotations

import csv
import importlib.resources
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptyMolecule, NotARotation, ParseError, UnknownElement


class StructureFormat(Enum):
    XYZ = "xyz"
    PDB = "pdb"
    SDF = "sdf"


@dataclass(frozen=True)
class Element:
    symbol: str
    atomic_number: int
    mass: float


@dataclass(frozen=True)
class Atom:
    element: Element
    position: np.ndarray  # (3,) Angstrom

    def moved_to(self, position: np.ndarray) -> "Atom":
        return Atom(self.element, np.asarray(position, dtype=np.float64))


@dataclass
class Molecule:
    """Atoms with one or more conformers sharing the element sequence."""

    mol_id: str
    conformers: list[list[Atom]]
    source_format: StructureFormat

    def __post_init__(self):
        if not self.mol_id:
            raise ValueError("mol_id must be non-empty")
        if not self.conformers or not self.conformers[0]:
            raise EmptyMolecule(f"molecule {self.mol_id!r} has no atoms")
        symbols = self.element_symbols
        for i, conf in enumerate(self.conformers[1:], start=1):
            if [a.element.symbol for a in conf] != symbols:
                raise ValueError(
                    f"conformer {i} does not share the element sequence")

    @property
    def n_atoms(self) -> int:
        return len(self.conformers[0])

    @property
    def element_symbols(self) -> list[str]:
        return [a.element.symbol for a in self.conformers[0]]

    @property
    def masses(self) -> np.ndarray:
        return np.array([a.element.mass for a in self.conformers[0]])

    def positions(self, conformer_idx: int = 0) -> np.ndarray:
        return np.stack([a.position for a in self.conformers[conformer_idx]])


def _load_mass_table() -> dict[str, Element]:
    table: dict[str, Element] = {}
    path = importlib.resources.files("icochem").joinpath("data/elements.csv")
    with path.open() as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            symbol, number, mass = row[0], int(row[1]), float(row[2])
            if symbol in table:
                raise ValueError(f"duplicate element symbol {symbol!r}")
            if mass <= 0:
                raise ValueError(f"non-positive mass for {symbol!r}")
            table[symbol] = Element(symbol, number, mass)
    return table


MASS_TABLE: dict[str, Element] = _load_mass_table()


def element(symbol: str, line: int | None = None) -> Element:
    """Look up a (case-normalized) element symbol in the frozen table."""
    normalized = symbol.strip().capitalize()
    try:
        return MASS_TABLE[normalized]
    except KeyError:
        raise UnknownElement(f"unknown element symbol {symbol!r}",
                             line=line) from None


# --- parsing ----------------------------------------------------------------

def parse_structure(data: bytes | str, fmt: StructureFormat | str,
                    mol_id: str | None = None) -> Molecule:
    """Parse XYZ/PDB/SDF bytes into a Molecule (multi-frame = conformers)."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"file is not valid UTF-8: {exc}") from None
    else:
        text = data
    fmt = StructureFormat(fmt.lower()) if isinstance(fmt, str) else fmt

    if fmt is StructureFormat.XYZ:
        conformers, title = _parse_xyz(text)
    elif fmt is StructureFormat.PDB:
        conformers, title = _parse_pdb(text)
    else:
        conformers, title = _parse_sdf(text)

    if not conformers or not conformers[0]:
        raise EmptyMolecule("structure contains no atoms")
    return Molecule(mol_id or title or "unnamed", conformers, fmt)


def _parse_float(token: str, what: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"bad {what} {token!r}", line=line) from None


def _parse_xyz(text: str) -> tuple[list[list[Atom]], str]:
    lines = text.splitlines()
    conformers: list[list[Atom]] = []
    title = ""
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            count = int(lines[i].strip())
        except ValueError:
            raise ParseError(f"expected atom count, got {lines[i]!r}",
                             line=i + 1) from None
        if count < 0:
            raise ParseError("negative atom count", line=i + 1)
        if i + 1 < len(lines) and not title:
            title = lines[i + 1].strip()
        atoms: list[Atom] = []
        for j in range(count):
            ln = i + 2 + j
            if ln >= len(lines):
                raise ParseError("file truncated inside atom block", line=ln + 1)
            fields = lines[ln].split()
            if len(fields) < 4:
                raise ParseError(f"expected 'SYM x y z', got {lines[ln]!r}",
                                 line=ln + 1)
            pos = np.array([_parse_float(fields[k], "coordinate", ln + 1)
                            for k in (1, 2, 3)])
            atoms.append(Atom(element(fields[0], line=ln + 1), pos))
        conformers.append(atoms)
        i += 2 + count
    return conformers, title


def _parse_pdb(text: str) -> tuple[list[list[Atom]], str]:
    conformers: list[list[Atom]] = []
    current: list[Atom] = []
    in_model = False
    title = ""
    for ln, line in enumerate(text.splitlines(), start=1):
        rec = line[:6].strip()
        if rec == "HEADER" and not title:
            title = line[62:66].strip() or line[10:50].strip()
        elif rec == "MODEL":
            in_model = True
            current = []
        elif rec == "ENDMDL":
            if current:
                conformers.append(current)
            in_model = False
            current = []
        elif rec in ("ATOM", "HETATM"):
            if len(line) < 54:
                raise ParseError("ATOM record too short", line=ln)
            x = _parse_float(line[30:38], "x coordinate", ln)
            y = _parse_float(line[38:46], "y coordinate", ln)
            z = _parse_float(line[46:54], "z coordinate", ln)
            symbol = line[76:78].strip()
            if not symbol:
                name = line[12:16].strip().lstrip("0123456789")
                symbol = name[:2].capitalize()
                if symbol not in MASS_TABLE:
                    symbol = name[:1]
            current.append(Atom(element(symbol, line=ln), np.array([x, y, z])))
    if current and not in_model:
        conformers.append(current)
    return conformers, title


def _parse_sdf(text: str) -> tuple[list[list[Atom]], str]:
    records = text.split("$$$$")
    conformers: list[list[Atom]] = []
    title = ""
    offset = 0
    for record in records:
        lines = record.splitlines()
        body = [ln for ln in lines if ln.strip()]
        if not body:
            offset += len(lines)
            continue
        # locate the V2000 counts line (line 4 of a well-formed record)
        counts_idx = None
        for idx, ln in enumerate(lines[:8]):
            if ln[34:39].strip().upper() == "V2000" or ln.rstrip().endswith("V2000"):
                counts_idx = idx
                break
        if counts_idx is None:
            raise ParseError("no V2000 counts line found",
                             line=offset + 1)
        if not title:
            title = lines[0].strip() if counts_idx >= 1 else ""
        counts_line = lines[counts_idx]
        try:
            n_atoms = int(counts_line[0:3])
        except ValueError:
            raise ParseError(f"bad counts line {counts_line!r}",
                             line=offset + counts_idx + 1) from None
        atoms: list[Atom] = []
        for j in range(n_atoms):
            ln_no = offset + counts_idx + 2 + j
            idx = counts_idx + 1 + j
            if idx >= len(lines):
                raise ParseError("file truncated inside atom block", line=ln_no)
            row = lines[idx]
            if len(row) >= 34:
                x = _parse_float(row[0:10], "x coordinate", ln_no)
                y = _parse_float(row[10:20], "y coordinate", ln_no)
                z = _parse_float(row[20:30], "z coordinate", ln_no)
                symbol = row[31:34].strip()
            else:
                fields = row.split()
                if len(fields) < 4:
                    raise ParseError(f"bad atom line {row!r}", line=ln_no)
                x, y, z = (_parse_float(f, "coordinate", ln_no)
                           for f in fields[:3])
                symbol = fields[3]
            atoms.append(Atom(element(symbol, line=ln_no), np.array([x, y, z])))
        conformers.append(atoms)
        offset += len(lines)
    return conformers, title


def to_xyz(molecule: Molecule) -> str:
    """Serialize all conformers as concatenated XYZ frames."""
    frames = []
    for conf in molecule.conformers:
        lines = [str(len(conf)), molecule.mol_id]
        for atom in conf:
            x, y, z = atom.position
            lines.append(f"{atom.element.symbol} {x:.10f} {y:.10f} {z:.10f}")
        frames.append("\n".join(lines))
    return "\n".join(frames) + "\n"


# --- geometry ---------------------------------------------------------------

def center(molecule: Molecule, conformer_idx: int = 0,
           use_mass: bool = False) -> list[Atom]:
    """Conformer translated so its centroid (or center of mass) is at origin."""
    positions = molecule.positions(conformer_idx)
    if use_mass:
        w = molecule.masses
        origin = (positions * w[:, None]).sum(axis=0) / w.sum()
    else:
        origin = positions.mean(axis=0)
    shifted = positions - origin
    return [a.moved_to(p)
            for a, p in zip(molecule.conformers[conformer_idx], shifted)]


def transform(atoms: list[Atom], rotation: np.ndarray,
              offset: np.ndarray | None = None) -> list[Atom]:
    """Apply p' = R @ p + offset to every atom; R must be a proper rotation."""
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3) or \
            not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-9) or \
            not np.isclose(np.linalg.det(rotation), 1.0, atol=1e-9):
        raise NotARotation("matrix is not orthonormal with determinant +1")
    offset = np.zeros(3) if offset is None else np.asarray(offset, dtype=np.float64)
    positions = np.stack([a.position for a in atoms]) @ rotation.T + offset
    return [a.moved_to(p) for a, p in zip(atoms, positions)]


# --- descriptors ------------------------------------------------------------

@dataclass(frozen=True)
class GeometricDescriptors:
    """Mass/coordinate descriptors of one conformer.

    Principal moments of inertia (``pmi1 <= pmi2 <= pmi3``) are eigenvalues
    of the mass-weighted inertia tensor about the center of mass.  Derived
    shape factors use the standard PMI forms:

    * asphericity          = 0.5 * ((p3-p2)^2 + (p3-p1)^2 + (p2-p1)^2)
                                 / (p1^2 + p2^2 + p3^2)
    * eccentricity         = sqrt(p3^2 - p1^2) / p3
    * spherocity_proxy     = 3 * p1 / (p1 + p2 + p3)
    * inertial_shape_factor = p2 / (p1 * p3)

    Degenerate denominators (single atoms, perfectly linear molecules)
    yield 0 for the affected factor.
    """

    n_atoms: int
    n_heavy: int
    exact_mol_weight: float
    pmi1: float
    pmi2: float
    pmi3: float
    radius_of_gyration: float
    asphericity: float
    eccentricity: float
    spherocity_proxy: float
    inertial_shape_factor: float

    def as_dict(self) -> dict[str, float]:
        return {
            "n_atoms": float(self.n_atoms),
            "n_heavy": float(self.n_heavy),
            "exact_mol_weight": self.exact_mol_weight,
            "pmi1": self.pmi1,
            "pmi2": self.pmi2,
            "pmi3": self.pmi3,
            "radius_of_gyration": self.radius_of_gyration,
            "asphericity": self.asphericity,
            "eccentricity": self.eccentricity,
            "spherocity_proxy": self.spherocity_proxy,
            "inertial_shape_factor": self.inertial_shape_factor,
        }


def descriptors(molecule: Molecule,
                conformer_idx: int = 0) -> GeometricDescriptors:
    masses = molecule.masses
    positions = molecule.positions(conformer_idx)
    total = masses.sum()
    com = (positions * masses[:, None]).sum(axis=0) / total
    rel = positions - com

    r2 = (rel ** 2).sum(axis=1)
    inertia = (np.eye(3) * (masses * r2).sum()
               - np.einsum("a,ai,aj->ij", masses, rel, rel))
    p1, p2, p3 = np.linalg.eigvalsh(inertia)
    p1, p2, p3 = (max(0.0, float(v)) for v in (p1, p2, p3))

    rog = math.sqrt((masses * r2).sum() / total) if total > 0 else 0.0
    sq = p1 * p1 + p2 * p2 + p3 * p3
    asphericity = (0.5 * ((p3 - p2) ** 2 + (p3 - p1) ** 2 + (p2 - p1) ** 2) / sq
                   if sq > 0 else 0.0)
    eccentricity = math.sqrt(max(0.0, p3 * p3 - p1 * p1)) / p3 if p3 > 0 else 0.0
    spherocity = 3.0 * p1 / (p1 + p2 + p3) if (p1 + p2 + p3) > 0 else 0.0
    isf = p2 / (p1 * p3) if p1 * p3 > 0 else 0.0

    return GeometricDescriptors(
        n_atoms=molecule.n_atoms,
        n_heavy=sum(1 for s in molecule.element_symbols if s != "H"),
        exact_mol_weight=float(total),
        pmi1=p1, pmi2=p2, pmi3=p3,
        radius_of_gyration=rog,
        asphericity=asphericity,
        eccentricity=eccentricity,
        spherocity_proxy=spherocity,
        inertial_shape_factor=isf,
    )
