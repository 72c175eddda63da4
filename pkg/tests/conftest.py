import math

import numpy as np
import pytest

from icochem import icogeom, molio


@pytest.fixture(scope="session")
def group():
    return icogeom.rotation_group()


@pytest.fixture(scope="session")
def meshes():
    return {lvl: icogeom.build_icosphere(lvl) for lvl in range(4)}


@pytest.fixture(scope="session")
def composition_table(group):
    """comp[a, b] = index of matrices[a] @ matrices[b] in the group."""
    m = group.matrices
    products = np.einsum("aij,bjk->abik", m, m)
    diffs = np.abs(products[:, :, None] - m[None, None]).max(axis=(3, 4))
    comp = diffs.argmin(axis=2)
    assert (diffs.min(axis=2) < 1e-9).all()
    return comp


def random_positions(rng, n, spread=2.0, min_radius=0.2):
    """Centered positions bounded away from the origin and face edges."""
    while True:
        pos = rng.normal(scale=spread, size=(n, 3))
        pos -= pos.mean(axis=0)
        if np.linalg.norm(pos, axis=1).min() > min_radius:
            return pos


def random_molecule(rng, n, mol_id="mol"):
    symbols = rng.choice(["H", "C", "N", "O", "S"], size=n)
    pos = random_positions(rng, n)
    atoms = [molio.Atom(molio.MASS_TABLE[s], p) for s, p in zip(symbols, pos)]
    return molio.Molecule(mol_id, [atoms], molio.StructureFormat.XYZ)


def rotation_about(axis, degrees):
    axis = np.asarray(axis, dtype=float)
    return icogeom._axis_angle_matrix(axis / np.linalg.norm(axis),
                                      math.radians(degrees))


def aligned_tetrahedron(theta_deg=17.0):
    """Regular tetrahedron oriented so its mirror image is a 180-degree
    z rotation of itself (z is a two-fold axis of the canonical mesh)."""
    a = rotation_about([1.0, -1.0, 0.0], 90.0)
    b = rotation_about([0.0, 0.0, 1.0], theta_deg) @ a
    corners = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]],
        dtype=float) / math.sqrt(3.0)
    return corners @ b.T
