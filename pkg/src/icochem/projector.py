"""Ray-cast projection of centered molecules onto icosphere faces.

Each atom casts a ray from the origin through its position; the hit face
receives the atom.  A face's three channels are

* R -- mass of the incident atom nearest the origin,
* G -- mass of the incident atom farthest from the origin,
* B -- sum of all incident atom masses,

so a lone oxygen pixel reads (15.999, 15.999, 15.999) and a carbonyl group
projected along its bond (carbon inner) reads (12.0107, 15.999, 28.0097).
Only ray directions matter; the projection is scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AtomAtCenter, EmptyMolecule, ZeroDirection
from .icogeom import IcosphereMesh, locate_faces
from .molio import Atom

# Atoms closer to the origin than this have no usable ray direction.
CENTER_EPSILON = 1e-9


@dataclass
class IcoMap:
    """Per-face (R, G, B) channel values for one projected conformer."""

    level: int
    values: np.ndarray  # (F, 3) float64

    @property
    def n_faces(self) -> int:
        return len(self.values)

    def to_bytes(self) -> bytes:
        """Flat little-endian float32, face-major, channels interleaved."""
        return np.ascontiguousarray(self.values, dtype="<f4").tobytes()

    @classmethod
    def from_bytes(cls, level: int, data: bytes) -> "IcoMap":
        values = np.frombuffer(data, dtype="<f4").reshape(-1, 3).astype(np.float64)
        expected = 20 * 4 ** level
        if len(values) != expected:
            raise ValueError(
                f"payload holds {len(values)} faces, level {level} needs {expected}")
        return cls(level, values)


def assign_face(direction: np.ndarray, mesh: IcosphereMesh) -> int:
    """Face whose spherical triangle contains ``direction``.

    Located by hierarchical descent (20 base faces, then 4 children per
    level).  Directions on a shared edge or vertex resolve to the lowest
    face index.
    """
    direction = np.asarray(direction, dtype=np.float64).reshape(3)
    if not np.linalg.norm(direction) > 0.0:
        raise ZeroDirection("direction has zero length")
    return int(locate_faces(direction[None, :], mesh)[0])


def project(atoms: list[Atom] | np.ndarray, mesh: IcosphereMesh,
            masses: np.ndarray | None = None) -> IcoMap:
    """Project a centered conformer onto the mesh.

    ``atoms`` is either a list of Atom or an (N, 3) position array with
    ``masses`` given separately.  Equidistant atoms on one ray resolve by
    input order (first wins for both inner and outer).
    """
    if masses is None:
        positions = np.stack([a.position for a in atoms]) if atoms else \
            np.empty((0, 3))
        masses = np.array([a.element.mass for a in atoms])
    else:
        positions = np.asarray(atoms, dtype=np.float64)
        masses = np.asarray(masses, dtype=np.float64)
    if len(positions) == 0:
        raise EmptyMolecule("cannot project an empty molecule")

    distances = np.linalg.norm(positions, axis=1)
    if (distances < CENTER_EPSILON).any():
        worst = int(distances.argmin())
        raise AtomAtCenter(
            f"atom {worst} is {distances[worst]:.3e} A from the origin; "
            "its ray is undefined")

    faces = locate_faces(positions, mesh)
    values = np.zeros((mesh.n_faces, 3))
    for f in np.unique(faces):
        hit = np.flatnonzero(faces == f)
        d = distances[hit]
        values[f, 0] = masses[hit[d.argmin()]]
        values[f, 1] = masses[hit[d.argmax()]]
        values[f, 2] = masses[hit].sum()
    return IcoMap(mesh.level, values)


def mirror_image(atoms: list[Atom]) -> list[Atom]:
    """The enantiomer: every position reflected through the origin."""
    return [a.moved_to(-a.position) for a in atoms]
