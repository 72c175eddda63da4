"""Icosphere meshes, the icosahedral rotation group, and net unfoldings.

The base icosahedron uses the golden-ratio vertex set (0, +-1, +-phi) and its
cyclic permutations, normalized to the unit sphere; it is deliberately not
re-oriented to put a vertex at a pole.  Subdividing a face yields four
children in the fixed order (corner0, corner1, corner2, center), so the
children of face ``i`` occupy indices ``4i..4i+3`` and the parent of face
``f`` is ``f // 4``.

A level-L mesh has ``F = 20 * 4**L`` faces, ``E = 30 * 4**L`` edges and
``V = 10 * 4**L + 2`` vertices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousMatch, LengthMismatch, LevelTooLarge, ZeroDirection

MAX_LEVEL = 8

# Inside-test tolerance for point-in-spherical-triangle queries, in radians
# off an edge plane.  Directions within this band of an edge count as inside
# every face sharing the edge; the lowest face index then wins.
EDGE_TOLERANCE = 1e-12

_PHI = (1.0 + math.sqrt(5.0)) / 2.0

_BASE_VERTICES = np.array(
    [
        (-1.0, _PHI, 0.0),
        (1.0, _PHI, 0.0),
        (-1.0, -_PHI, 0.0),
        (1.0, -_PHI, 0.0),
        (0.0, -1.0, _PHI),
        (0.0, 1.0, _PHI),
        (0.0, -1.0, -_PHI),
        (0.0, 1.0, -_PHI),
        (_PHI, 0.0, -1.0),
        (_PHI, 0.0, 1.0),
        (-_PHI, 0.0, -1.0),
        (-_PHI, 0.0, 1.0),
    ]
)

# Counter-clockwise seen from outside (positive triple product).
_BASE_FACES = np.array(
    [
        (0, 11, 5),
        (0, 5, 1),
        (0, 1, 7),
        (0, 7, 10),
        (0, 10, 11),
        (1, 5, 9),
        (5, 11, 4),
        (11, 10, 2),
        (10, 7, 6),
        (7, 1, 8),
        (3, 9, 4),
        (3, 4, 2),
        (3, 2, 6),
        (3, 6, 8),
        (3, 8, 9),
        (4, 9, 5),
        (2, 4, 11),
        (6, 2, 10),
        (8, 6, 7),
        (9, 8, 1),
    ],
    dtype=np.int64,
)


def _unit_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


@dataclass
class IcosphereMesh:
    """Triangulated sphere with face adjacency ("connection matrix").

    ``adjacency[f, e]`` is the face across edge ``e`` of face ``f``, where
    edge 0 joins vertices (0, 1), edge 1 joins (1, 2) and edge 2 joins (2, 0)
    of ``faces[f]``.  All arrays are read-only after construction.
    """

    level: int
    vertices: np.ndarray          # (V, 3) unit vectors
    faces: np.ndarray             # (F, 3) vertex indices
    face_centers: np.ndarray      # (F, 3) unit vectors
    adjacency: np.ndarray         # (F, 3) face indices
    parent: "IcosphereMesh | None" = field(default=None, repr=False)
    _edge_normals: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def ancestry(self) -> list["IcosphereMesh"]:
        """Meshes from level 0 up to and including this one."""
        chain: list[IcosphereMesh] = []
        mesh: IcosphereMesh | None = self
        while mesh is not None:
            chain.append(mesh)
            mesh = mesh.parent
        chain.reverse()
        return chain

    def edge_normals(self) -> np.ndarray:
        """Unit inward edge-plane normals, shape (F, 3 edges, 3)."""
        if self._edge_normals is None:
            corners = self.vertices[self.faces]          # (F, 3, 3)
            rolled = np.roll(corners, -1, axis=1)
            normals = _unit_rows(np.cross(corners, rolled))
            normals.setflags(write=False)
            object.__setattr__(self, "_edge_normals", normals)
        return self._edge_normals

    def min_center_separation(self) -> float:
        """Smallest angular distance between adjacent face centers (radians)."""
        c = self.face_centers
        dots = np.einsum("fi,fei->fe", c, c[self.adjacency])
        return float(np.arccos(np.clip(dots.max(), -1.0, 1.0)))


def _build_adjacency(faces: np.ndarray) -> np.ndarray:
    edge_owner: dict[tuple[int, int], tuple[int, int]] = {}
    adjacency = np.full((len(faces), 3), -1, dtype=np.int64)
    for f, (a, b, c) in enumerate(faces):
        for e, (u, v) in enumerate(((a, b), (b, c), (c, a))):
            key = (u, v) if u < v else (v, u)
            other = edge_owner.pop(key, None)
            if other is None:
                edge_owner[key] = (f, e)
            else:
                g, ge = other
                adjacency[f, e] = g
                adjacency[g, ge] = f
    if edge_owner or (adjacency < 0).any():
        raise ValueError("mesh is not a closed surface")
    return adjacency


def _finalize(level: int, vertices: np.ndarray, faces: np.ndarray,
              parent: IcosphereMesh | None) -> IcosphereMesh:
    centers = _unit_rows(vertices[faces].mean(axis=1))
    adjacency = _build_adjacency(faces)
    for arr in (vertices, faces, centers, adjacency):
        arr.setflags(write=False)
    return IcosphereMesh(level, vertices, faces, centers, adjacency, parent)


def build_icosphere(level: int) -> IcosphereMesh:
    """Construct the level-``level`` icosphere (20 * 4**level faces)."""
    if level < 0:
        raise ValueError("level must be non-negative")
    if level > MAX_LEVEL:
        raise LevelTooLarge(f"level {level} exceeds maximum {MAX_LEVEL}")

    vertices = _unit_rows(_BASE_VERTICES.copy())
    faces = _BASE_FACES.copy()
    mesh = _finalize(0, vertices, faces, None)

    for lvl in range(1, level + 1):
        verts = [v for v in mesh.vertices]
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            idx = midpoint_cache.get(key)
            if idx is None:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                idx = len(verts) - 1
                midpoint_cache[key] = idx
            return idx

        children = np.empty((4 * len(mesh.faces), 3), dtype=np.int64)
        for f, (a, b, c) in enumerate(mesh.faces):
            mab = midpoint(a, b)
            mbc = midpoint(b, c)
            mca = midpoint(c, a)
            children[4 * f + 0] = (a, mab, mca)
            children[4 * f + 1] = (b, mbc, mab)
            children[4 * f + 2] = (c, mca, mbc)
            children[4 * f + 3] = (mab, mbc, mca)
        mesh = _finalize(lvl, np.array(verts), children, mesh)

    return mesh


# --- point location ---------------------------------------------------------

def locate_faces(directions: np.ndarray, mesh: IcosphereMesh) -> np.ndarray:
    """Containing face index for each direction, shape (N,).

    Hierarchical descent: the containing base face is found among the 20
    level-0 triangles, then refined through the four children per level.
    Directions on a shared edge or vertex resolve to the lowest face index.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    norms = np.linalg.norm(dirs, axis=1)
    if (norms == 0.0).any():
        raise ZeroDirection("cannot locate a zero-length direction")
    dirs = dirs / norms[:, None]

    chain = mesh.ancestry()
    base = chain[0]
    # margins[n, f] = smallest signed distance of dirs[n] to face f's planes
    margins = np.einsum("nd,fed->nfe", dirs, base.edge_normals()).min(axis=2)
    inside = margins >= -EDGE_TOLERANCE
    current = np.where(inside.any(axis=1), inside.argmax(axis=1),
                       margins.argmax(axis=1))

    for finer in chain[1:]:
        candidates = current[:, None] * 4 + np.arange(4)          # (N, 4)
        normals = finer.edge_normals()[candidates]                # (N, 4, 3, 3)
        margins = np.einsum("nd,nced->nce", dirs, normals).min(axis=2)
        inside = margins >= -EDGE_TOLERANCE
        child = np.where(inside.any(axis=1), inside.argmax(axis=1),
                         margins.argmax(axis=1))
        current = current * 4 + child

    return current


# --- rotation group ---------------------------------------------------------

@dataclass
class RotationGroup:
    """The 60 proper rotations of the icosahedron.

    ``matrices[0]`` is the identity; the rest are sorted by (canonical axis,
    angle).  ``face_permutations`` caches, per icosphere level, a (60, F)
    table where row g sends face f to ``perm[g, f]`` (the face containing the
    rotated center of f).
    """

    matrices: np.ndarray                                  # (60, 3, 3)
    face_permutations: dict[int, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.matrices)

    def permutations_for(self, mesh: IcosphereMesh) -> np.ndarray:
        table = self.face_permutations.get(mesh.level)
        if table is None:
            table = np.stack([face_permutation(self, mesh, g)
                              for g in range(len(self))])
            table.setflags(write=False)
            self.face_permutations[mesh.level] = table
        return table


def _axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    k = 1.0 - c
    return np.array(
        [
            [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
            [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
            [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
        ]
    )


def _canonical_axes(directions: np.ndarray) -> list[np.ndarray]:
    """Collapse +-u pairs to one representative, deduped and sorted."""
    seen: dict[tuple[float, ...], np.ndarray] = {}
    for u in _unit_rows(directions):
        u = u.copy()
        u[np.abs(u) < 1e-12] = 0.0
        key = tuple(np.round(u, 10))
        neg = tuple(np.round(-u, 10))
        if key < neg:
            u, key = -u, neg
        seen.setdefault(key, u)
    return [seen[k] for k in sorted(seen)]


def rotation_group() -> RotationGroup:
    """Build the order-60 icosahedral rotation group for the canonical mesh.

    Axes: 6 five-fold (vertex pairs), 10 three-fold (face-center pairs) and
    15 two-fold (edge midpoints), plus the identity.
    """
    base = build_icosphere(0)
    edges = {tuple(sorted(e)) for f in base.faces
             for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0]))}
    midpoints = np.array([base.vertices[a] + base.vertices[b]
                          for a, b in sorted(edges)])

    entries: list[tuple[tuple, np.ndarray]] = []
    for axes, steps in (
        (_canonical_axes(base.vertices), 5),
        (_canonical_axes(base.face_centers), 3),
        (_canonical_axes(midpoints), 2),
    ):
        for axis in axes:
            for k in range(1, steps):
                angle = 2.0 * math.pi * k / steps
                key = (tuple(np.round(axis, 10)), round(angle, 10))
                entries.append((key, _axis_angle_matrix(axis, angle)))

    entries.sort(key=lambda item: item[0])
    matrices = np.stack([np.eye(3)] + [m for _, m in entries])
    matrices.setflags(write=False)
    if len(matrices) != 60:
        raise AssertionError(f"expected 60 rotations, built {len(matrices)}")
    return RotationGroup(matrices)


def face_permutation(group: RotationGroup, mesh: IcosphereMesh,
                     g: int) -> np.ndarray:
    """Permutation sending face f to the face containing R_g @ center(f)."""
    if not 0 <= g < len(group):
        raise IndexError(f"group element {g} out of range [0, {len(group)})")
    rotated = mesh.face_centers @ group.matrices[g].T
    perm = locate_faces(rotated, mesh)

    matched = mesh.face_centers[perm]
    dots = np.clip(np.einsum("fi,fi->f", rotated, matched), -1.0, 1.0)
    limit = 0.5 * mesh.min_center_separation()
    if np.arccos(dots).max() >= limit or np.bincount(
            perm, minlength=mesh.n_faces).max() != 1:
        raise AmbiguousMatch(
            f"rotated centers do not match faces uniquely for element {g}")
    return perm


def apply_face_permutation(perm: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Move per-face values with a rotation: output[perm[f]] = values[f]."""
    values = np.asarray(values)
    if len(perm) != len(values):
        raise LengthMismatch(
            f"permutation length {len(perm)} != signal length {len(values)}")
    out = np.empty_like(values)
    out[perm] = values
    return out


# --- reference convolution --------------------------------------------------

def conv_reference(mesh: IcosphereMesh, signal: np.ndarray,
                   w_center: float, w_neighbor: float) -> np.ndarray:
    """Isotropic one-ring convolution on the face graph.

    out[f] = w_center * signal[f] + w_neighbor * sum of the 3 edge neighbors.
    Rotating the input permutes the output identically (equivariance).
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape[0] != mesh.n_faces:
        raise LengthMismatch(
            f"signal length {signal.shape[0]} != face count {mesh.n_faces}")
    adj = mesh.adjacency
    return (w_center * signal
            + w_neighbor * (signal[adj[:, 0]] + signal[adj[:, 1]]
                            + signal[adj[:, 2]]))


# --- net layouts ------------------------------------------------------------

@dataclass
class NetLayout:
    """Planar unfolding: face_order[p] is the mesh face drawn at net slot p.

    ``placements[p]`` is the slot's 2-D triangle (3 corner points).  All 60
    unfoldings share the canonical placement geometry; they differ only in
    ``face_order``.
    """

    unfolding_id: int
    face_order: np.ndarray       # (F,) mesh face index per net position
    placements: np.ndarray       # (F, 3, 2)

    def extract(self, values: np.ndarray) -> np.ndarray:
        """Reorder per-face values into net-position order."""
        return np.asarray(values)[self.face_order]


def _cap_faces_in_ring_order(base: IcosphereMesh, vertex: int) -> list[int]:
    cap = [f for f in range(base.n_faces) if vertex in base.faces[f]]
    v = base.vertices[vertex]
    first = base.face_centers[cap[0]]
    t = first - np.dot(first, v) * v
    t /= np.linalg.norm(t)
    b = np.cross(v, t)
    angles = {f: math.atan2(np.dot(base.face_centers[f], b),
                            np.dot(base.face_centers[f], t)) % (2 * math.pi)
              for f in cap}
    return sorted(cap, key=lambda f: angles[f])


def _base_net_assignment(base: IcosphereMesh) -> list[tuple[int, dict[int, tuple[float, float]]]]:
    """(base face, mesh-vertex -> 2-D point) per net slot, in net order."""
    h = math.sqrt(3.0) / 2.0
    v_top = 0
    cap = _cap_faces_in_ring_order(base, v_top)

    # a[i] = ring vertex shared by cap faces i-1 and i (so C_i = {top, a_i, a_i+1})
    ring = []
    for i in range(5):
        shared = set(base.faces[cap[i - 1]]) & set(base.faces[cap[i]])
        shared.discard(v_top)
        ring.append(shared.pop())

    band_down, bottom_ring = [], []
    for i in range(5):
        opposite = [n for n in base.adjacency[cap[i]]
                    if v_top not in base.faces[n]]
        band_down.append(opposite[0])
        third = set(base.faces[opposite[0]]) - {ring[i], ring[(i + 1) % 5]}
        bottom_ring.append(third.pop())

    band_up, bottom_cap = [], []
    for i in range(5):
        common = (set(base.adjacency[band_down[i]])
                  & set(base.adjacency[band_down[(i + 1) % 5]]))
        band_up.append(common.pop())
        down = [n for n in base.adjacency[band_up[i]]
                if n not in (band_down[i], band_down[(i + 1) % 5])]
        bottom_cap.append(down[0])

    slots: list[tuple[int, dict[int, tuple[float, float]]]] = []
    for i in range(5):    # top row, upward triangles
        slots.append((cap[i], {ring[i]: (i, h),
                               ring[(i + 1) % 5]: (i + 1.0, h),
                               v_top: (i + 0.5, 2 * h)}))
    for i in range(5):    # middle band, alternating down/up
        slots.append((band_down[i], {ring[i]: (i, h),
                                     ring[(i + 1) % 5]: (i + 1.0, h),
                                     bottom_ring[i]: (i + 0.5, 0.0)}))
        slots.append((band_up[i], {ring[(i + 1) % 5]: (i + 1.0, h),
                                   bottom_ring[i]: (i + 0.5, 0.0),
                                   bottom_ring[(i + 1) % 5]: (i + 1.5, 0.0)}))
    for i in range(5):    # bottom row, downward triangles
        v_bot = (set(base.faces[bottom_cap[i]])
                 - {bottom_ring[i], bottom_ring[(i + 1) % 5]}).pop()
        slots.append((bottom_cap[i], {bottom_ring[i]: (i + 0.5, 0.0),
                                      bottom_ring[(i + 1) % 5]: (i + 1.5, 0.0),
                                      v_bot: (i + 1.0, -h)}))
    return slots


def _subdivide_placement(tri: np.ndarray, depth: int, out: list[np.ndarray]) -> None:
    if depth == 0:
        out.append(tri)
        return
    p0, p1, p2 = tri
    m01, m12, m20 = (p0 + p1) / 2, (p1 + p2) / 2, (p2 + p0) / 2
    _subdivide_placement(np.array([p0, m01, m20]), depth - 1, out)
    _subdivide_placement(np.array([p1, m12, m01]), depth - 1, out)
    _subdivide_placement(np.array([p2, m20, m12]), depth - 1, out)
    _subdivide_placement(np.array([m01, m12, m20]), depth - 1, out)


def canonical_net(mesh: IcosphereMesh) -> NetLayout:
    """The canonical 5-column strip unfolding (unfolding id 0)."""
    base = mesh.ancestry()[0]
    level = mesh.level
    per_base = 4 ** level

    face_order = np.empty(mesh.n_faces, dtype=np.int64)
    placements = np.empty((mesh.n_faces, 3, 2))
    pos = 0
    for base_face, vmap in _base_net_assignment(base):
        corners = np.array([vmap[v] for v in base.faces[base_face]])
        tris: list[np.ndarray] = []
        _subdivide_placement(corners, level, tris)
        start = base_face * per_base
        face_order[pos:pos + per_base] = np.arange(start, start + per_base)
        placements[pos:pos + per_base] = np.stack(tris)
        pos += per_base
    face_order.setflags(write=False)
    placements.setflags(write=False)
    return NetLayout(0, face_order, placements)


def enumerate_unfoldings(mesh: IcosphereMesh,
                         group: RotationGroup) -> list[NetLayout]:
    """All 60 unfoldings: unfolding k = canonical net after rotation k."""
    net0 = canonical_net(mesh)
    perms = group.permutations_for(mesh)
    layouts = [net0]
    for k in range(1, len(group)):
        inverse = np.argsort(perms[k])
        order = inverse[net0.face_order]
        order.setflags(write=False)
        layouts.append(NetLayout(k, order, net0.placements))
    return layouts


# --- export -----------------------------------------------------------------

def net_to_svg(layout: NetLayout, fill_colors, stroke: str = "#00000022",
               scale: float = 60.0) -> str:
    """Render a net layout as an SVG document.

    ``fill_colors`` supplies one CSS color per net position.
    """
    pts = layout.placements * scale
    pts[..., 1] *= -1.0  # SVG y grows downward
    margin = 0.05 * scale
    lo = pts.reshape(-1, 2).min(axis=0) - margin
    hi = pts.reshape(-1, 2).max(axis=0) + margin
    size = hi - lo
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{lo[0]:.3f} {lo[1]:.3f} {size[0]:.3f} {size[1]:.3f}" '
        f'width="{size[0]:.0f}" height="{size[1]:.0f}">',
    ]
    for p, tri in enumerate(pts):
        coords = " ".join(f"{x:.3f},{y:.3f}" for x, y in tri)
        parts.append(f'<polygon points="{coords}" fill="{fill_colors[p]}" '
                     f'stroke="{stroke}" stroke-width="0.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def mesh_to_json(mesh: IcosphereMesh) -> str:
    """Mesh as JSON: {level, vertices[[x,y,z]], faces[[i,j,k]], adjacency[[a,b,c]]}."""
    return json.dumps(
        {
            "level": mesh.level,
            "vertices": mesh.vertices.tolist(),
            "faces": mesh.faces.tolist(),
            "adjacency": mesh.adjacency.tolist(),
        }
    )
