"""Augmented net generation: 60 unfoldings x jitter x offset x conformers.

The canonical sequence for one molecule is

* nets 0-59   -- the 60 unfoldings of conformer 0, each with a fresh jitter
                 rotation (uniform per axis in [0, jitter_deg]) and an offset
                 drawn uniformly from a ball scaled to the molecule,
* nets 60..   -- conformers 1.. at uniformly random orientations, one net
                 each, cycling through the conformers.

Unfolding k is realized by rotating the molecule with group element k and
extracting the canonical net, which is the same thing as relabelling the
faces for atoms away from face boundaries.

All randomness comes from a counter-based generator keyed on
(seed, mol_id, net index, stream), so records are bitwise reproducible and
independent of generation order or thread schedule.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CadenceTooLarge, NotEnoughConformers
from .icogeom import IcosphereMesh, NetLayout, RotationGroup, canonical_net
from .molio import Molecule, center
from .projector import project


class Selection(Enum):
    ORDERED = "ordered"
    RANDOM = "random"


@dataclass
class AugmentationPlan:
    level: int
    jitter_deg: float = 5.0
    offset_fraction: float = 0.05
    n_conformers: int = 1
    selection: Selection = Selection.ORDERED
    cadence: int = 60
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.selection, str):
            self.selection = Selection(self.selection.lower())
        if self.level < 0:
            raise ValueError("level must be non-negative")
        if not 0.0 <= self.jitter_deg < 360.0:
            raise ValueError("jitter_deg must lie in [0, 360)")
        if not 0.0 <= self.offset_fraction <= 0.5:
            raise ValueError("offset_fraction must lie in [0, 0.5]")
        if self.n_conformers < 1:
            raise ValueError("n_conformers must be >= 1")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "jitter_deg": self.jitter_deg,
            "offset_fraction": self.offset_fraction,
            "n_conformers": self.n_conformers,
            "selection": self.selection.value,
            "cadence": self.cadence,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentationPlan":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class NetRecord:
    """One augmented net: channel values stored in canonical net order."""

    mol_id: str
    conformer_idx: int
    unfolding_idx: int
    jitter_applied: np.ndarray   # (3,) degrees, intrinsic XYZ
    offset_applied: np.ndarray   # (3,) Angstrom
    map: np.ndarray              # (F, 3) float32
    level: int


# --- counter-based randomness -------------------------------------------------

def _uniforms(seed: int, mol_id: str, index: int, stream: str,
              n: int) -> np.ndarray:
    """n floats in [0, 1) from a keyed hash; independent of call order."""
    out: list[float] = []
    block = 0
    while len(out) < n:
        key = f"{seed}|{mol_id}|{index}|{stream}|{block}".encode()
        digest = hashlib.blake2b(key, digest_size=64).digest()
        ints = np.frombuffer(digest, dtype="<u8")
        out.extend(((ints >> np.uint64(11)).astype(np.float64) * 2.0 ** -53))
        block += 1
    return np.array(out[:n])


def _ball_point(u: np.ndarray, radius: float) -> np.ndarray:
    """Uniform point in the ball of the given radius from 3 uniforms."""
    z = 2.0 * u[0] - 1.0
    phi = 2.0 * math.pi * u[1]
    s = math.sqrt(max(0.0, 1.0 - z * z))
    r = radius * u[2] ** (1.0 / 3.0)
    return r * np.array([s * math.cos(phi), s * math.sin(phi), z])


# --- rotations ----------------------------------------------------------------

def euler_to_matrix(angles_deg: np.ndarray) -> np.ndarray:
    """Intrinsic XYZ Euler rotation: R = Rx(a) @ Ry(b) @ Rz(c), degrees."""
    a, b, c = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cc, sc = math.cos(c), math.sin(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rx @ ry @ rz


def matrix_to_euler(rotation: np.ndarray) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix`, angles in degrees."""
    r = np.asarray(rotation, dtype=np.float64)
    b = math.asin(min(1.0, max(-1.0, r[0, 2])))
    if abs(r[0, 2]) < 1.0 - 1e-12:
        a = math.atan2(-r[1, 2], r[2, 2])
        c = math.atan2(-r[0, 1], r[0, 0])
    else:  # gimbal lock: fold the z rotation into x
        a = math.atan2(r[2, 1], r[1, 1])
        c = 0.0
    return np.rad2deg(np.array([a, b, c]))


def _uniform_rotation(u: np.ndarray) -> np.ndarray:
    """Haar-uniform rotation matrix from 3 uniforms (Shoemake quaternion)."""
    u1, u2, u3 = u
    x = math.sqrt(1.0 - u1) * math.sin(2.0 * math.pi * u2)
    y = math.sqrt(1.0 - u1) * math.cos(2.0 * math.pi * u2)
    z = math.sqrt(u1) * math.sin(2.0 * math.pi * u3)
    w = math.sqrt(u1) * math.cos(2.0 * math.pi * u3)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


# --- net generation -----------------------------------------------------------

def sequence_length(plan: AugmentationPlan) -> int:
    """Canonical full-sequence length for a plan."""
    if plan.n_conformers == 1:
        return 60
    return max(120, plan.cadence)


def generate_nets(molecule: Molecule, plan: AugmentationPlan,
                  mesh: IcosphereMesh, group: RotationGroup,
                  n_nets: int | None = None,
                  layout: NetLayout | None = None) -> list[NetRecord]:
    """The canonical augmented sequence (or its first ``n_nets`` entries)."""
    if mesh.level != plan.level:
        raise ValueError(f"mesh level {mesh.level} != plan level {plan.level}")
    if len(molecule.conformers) < plan.n_conformers:
        raise NotEnoughConformers(
            f"{molecule.mol_id!r} has {len(molecule.conformers)} conformers, "
            f"plan needs {plan.n_conformers}")
    total = sequence_length(plan) if n_nets is None else n_nets
    if total > sequence_length(plan):
        raise CadenceTooLarge(
            f"{total} nets requested but the plan's sequence holds "
            f"{sequence_length(plan)}")
    layout = layout if layout is not None else canonical_net(mesh)

    centered = [np.stack([a.position for a in center(molecule, c)])
                for c in range(plan.n_conformers)]
    masses = molecule.masses
    radius0 = float(np.linalg.norm(centered[0], axis=1).max())

    records: list[NetRecord] = []
    for i in range(total):
        if i < 60:
            conf = 0
            angles = (_uniforms(plan.seed, molecule.mol_id, i, "jitter", 3)
                      * plan.jitter_deg)
            rot = group.matrices[i] @ euler_to_matrix(angles)
            offset = _ball_point(
                _uniforms(plan.seed, molecule.mol_id, i, "offset", 3),
                plan.offset_fraction * radius0)
            positions = centered[0] @ rot.T + group.matrices[i] @ offset
            unfolding = i
        else:
            conf = 1 + (i - 60) % (plan.n_conformers - 1)
            rot = _uniform_rotation(
                _uniforms(plan.seed, molecule.mol_id, i, "rotation", 3))
            angles = matrix_to_euler(rot)
            offset = np.zeros(3)
            positions = centered[conf] @ rot.T
            unfolding = 0

        ico = project(positions, mesh, masses=masses)
        records.append(NetRecord(
            mol_id=molecule.mol_id,
            conformer_idx=conf,
            unfolding_idx=unfolding,
            jitter_applied=np.asarray(angles, dtype=np.float64),
            offset_applied=offset,
            map=layout.extract(ico.values).astype("<f4"),
            level=plan.level,
        ))
    return records


def select_nets(records: list[NetRecord], plan: AugmentationPlan,
                replace: bool = False) -> list[NetRecord]:
    """Pick ``plan.cadence`` nets from the full sequence.

    Ordered mode keeps the leading run; random mode samples without
    replacement, weighting the rotamer block (positions 0-59) and the
    conformer block (60..) at 50 % each, uniform within a block.  With
    ``replace=True`` the draws are independent (diagnostic use).
    """
    if plan.cadence > len(records) and not replace:
        raise CadenceTooLarge(
            f"cadence {plan.cadence} exceeds sequence length {len(records)}")
    if plan.selection is Selection.ORDERED:
        return records[:plan.cadence]

    mol_id = records[0].mol_id if records else ""
    pools = [list(range(min(60, len(records)))),
             list(range(60, len(records)))]
    chosen: list[NetRecord] = []
    for draw in range(plan.cadence):
        u = _uniforms(plan.seed, mol_id, draw, "select", 2)
        live = [p for p in pools if p]
        if len(live) == 2:
            pool = pools[0] if u[0] < 0.5 else pools[1]
        else:
            pool = live[0]
        at = min(int(u[1] * len(pool)), len(pool) - 1)
        idx = pool[at] if replace else pool.pop(at)
        chosen.append(records[idx])
    return chosen
