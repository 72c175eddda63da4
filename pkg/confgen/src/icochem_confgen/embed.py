"""3-D embedding of molecular graphs with a deliberately simple force field.

Initial coordinates come from a breadth-first walk that places each atom at
its ideal bond length, pointing away from the parent's existing neighbors.
A gradient-descent minimisation then relaxes harmonic bond and angle terms,
a soft nonbonded repulsion, and a signed-volume penalty that pins every
tetrahedral stereocenter to its requested parity.  Conformers differ by the
seeded substream that drives the initial walk.
"""

from __future__ import annotations

import numpy as np

from .errors import EmbeddingFailure
from .smiles import MolGraph, stereocenters

COVALENT_RADIUS = {"H": 0.31, "B": 0.84, "C": 0.76, "N": 0.71, "O": 0.66,
                   "F": 0.57, "Si": 1.11, "P": 1.07, "S": 1.05, "Cl": 1.02,
                   "Br": 1.20, "I": 1.39}

BOND_ORDER_FACTOR = {1.0: 1.0, 1.5: 0.93, 2.0: 0.87, 3.0: 0.78}

K_BOND = 100.0
K_ANGLE = 25.0
K_REPULSION = 0.4
K_CHIRAL = 60.0
CHIRAL_MARGIN = 0.4
MAX_ITERATIONS = 800
MAX_ATTEMPTS = 8


def _radius(symbol: str) -> float:
    return COVALENT_RADIUS.get(symbol, 1.2)


def ideal_bond_length(graph: MolGraph, i: int, j: int) -> float:
    key = (i, j) if i < j else (j, i)
    order = graph.bonds[key]
    factor = BOND_ORDER_FACTOR.get(order, 1.0)
    return factor * (_radius(graph.atoms[i].symbol)
                     + _radius(graph.atoms[j].symbol))


def _ideal_cos(graph: MolGraph, center: int) -> float:
    atom = graph.atoms[center]
    orders = [graph.bonds[(min(center, n), max(center, n))]
              for n in atom.neighbors]
    degree = len(atom.neighbors)
    if degree == 2 and (max(orders) >= 3.0
                        or sum(1 for o in orders if o >= 2.0) == 2):
        return -1.0                      # sp: linear
    if atom.aromatic or (degree == 3 and max(orders) >= 1.5):
        return -0.5                      # sp2: 120 degrees
    return -1.0 / 3.0                    # sp3-ish: 109.47 degrees


def _force_field_terms(graph: MolGraph):
    n = len(graph.atoms)
    bonds = [(i, j, ideal_bond_length(graph, i, j))
             for (i, j) in graph.bonds]
    angles = []
    for center, atom in enumerate(graph.atoms):
        cos0 = _ideal_cos(graph, center)
        nbrs = atom.neighbors
        for a in range(len(nbrs)):
            for b in range(a + 1, len(nbrs)):
                angles.append((nbrs[a], center, nbrs[b], cos0))
    bonded = {frozenset((i, j)) for (i, j) in graph.bonds}
    one_three = {frozenset((i, k)) for i, _, k, _ in angles}
    nonbonded = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if frozenset((i, j)) not in bonded
                 and frozenset((i, j)) not in one_three]
    return bonds, angles, nonbonded, stereocenters(graph)


def _energy_gradient(pos, bonds, angles, nonbonded, stereo):
    energy = 0.0
    grad = np.zeros_like(pos)

    for i, j, r0 in bonds:
        d = pos[i] - pos[j]
        dist = np.linalg.norm(d)
        diff = dist - r0
        energy += K_BOND * diff * diff
        g = (2.0 * K_BOND * diff / max(dist, 1e-9)) * d
        grad[i] += g
        grad[j] -= g

    for i, c, k, cos0 in angles:
        u = pos[i] - pos[c]
        v = pos[k] - pos[c]
        lu = max(np.linalg.norm(u), 1e-9)
        lv = max(np.linalg.norm(v), 1e-9)
        cos_theta = float(u @ v) / (lu * lv)
        diff = cos_theta - cos0
        energy += K_ANGLE * diff * diff
        coeff = 2.0 * K_ANGLE * diff
        du = v / (lu * lv) - cos_theta * u / (lu * lu)
        dv = u / (lu * lv) - cos_theta * v / (lv * lv)
        grad[i] += coeff * du
        grad[k] += coeff * dv
        grad[c] -= coeff * (du + dv)

    for i, j in nonbonded:
        d = pos[i] - pos[j]
        sq = float(d @ d) + 0.05
        energy += K_REPULSION / sq
        g = (-2.0 * K_REPULSION / (sq * sq)) * d
        grad[i] += g
        grad[j] -= g

    for center, (n1, n2, n3, n4), sign in stereo:
        e1 = pos[n2] - pos[n1]
        e2 = pos[n3] - pos[n1]
        e3 = pos[n4] - pos[n1]
        volume = float(e1 @ np.cross(e2, e3))
        short = CHIRAL_MARGIN - sign * volume
        if short > 0.0:
            energy += K_CHIRAL * short * short
            coeff = -2.0 * K_CHIRAL * short * sign
            d2 = np.cross(e2, e3)
            d3 = np.cross(e3, e1)
            d4 = np.cross(e1, e2)
            grad[n2] += coeff * d2
            grad[n3] += coeff * d3
            grad[n4] += coeff * d4
            grad[n1] -= coeff * (d2 + d3 + d4)

    return energy, grad


def _initial_positions(graph: MolGraph, rng) -> np.ndarray:
    n = len(graph.atoms)
    pos = np.zeros((n, 3))
    placed = np.zeros(n, dtype=bool)

    order = [0]
    placed[0] = True
    queue = [0]
    while queue:
        current = queue.pop(0)
        for nb in graph.atoms[current].neighbors:
            if not placed[nb]:
                placed[nb] = True
                order.append(nb)
                queue.append(nb)
    if not placed.all():
        raise EmbeddingFailure("molecular graph is disconnected")

    placed[:] = False
    placed[order[0]] = True
    for idx in order[1:]:
        parents = [nb for nb in graph.atoms[idx].neighbors if placed[nb]]
        parent = parents[0]
        away = np.zeros(3)
        for other in graph.atoms[parent].neighbors:
            if placed[other] and other != idx:
                delta = pos[other] - pos[parent]
                norm = np.linalg.norm(delta)
                if norm > 1e-9:
                    away -= delta / norm
        direction = away + rng.normal(scale=0.45, size=3)
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 1e-9 else np.array([1.0, 0, 0])
        pos[idx] = pos[parent] + ideal_bond_length(graph, parent, idx) \
            * direction
        placed[idx] = True
    return pos


def _minimize(pos, terms):
    step = 0.02
    energy, grad = _energy_gradient(pos, *terms)
    for _ in range(MAX_ITERATIONS):
        candidate = pos - step * grad
        new_energy, new_grad = _energy_gradient(candidate, *terms)
        if new_energy < energy:
            pos, energy, grad = candidate, new_energy, new_grad
            step = min(step * 1.2, 0.1)
        else:
            step *= 0.5
            if step < 1e-10:
                break
        if np.abs(grad).max() < 1e-5:
            break
    return pos


def _parities_ok(pos, stereo) -> bool:
    for _, (n1, n2, n3, n4), sign in stereo:
        volume = float((pos[n2] - pos[n1])
                       @ np.cross(pos[n3] - pos[n1], pos[n4] - pos[n1]))
        if sign * volume <= 0.0:
            return False
    return True


def embed_conformer(graph: MolGraph, seed: int, conformer_idx: int,
                    minimise: bool = True) -> np.ndarray:
    """Embed one conformer; deterministic in (seed, conformer_idx)."""
    terms = _force_field_terms(graph)
    stereo = terms[3]
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, conformer_idx, attempt]))
        pos = _initial_positions(graph, rng)
        if minimise:
            pos = _minimize(pos, terms)
        if _parities_ok(pos, stereo):
            return pos - pos.mean(axis=0)
    raise EmbeddingFailure(
        f"could not satisfy stereo parity after {MAX_ATTEMPTS} attempts")
