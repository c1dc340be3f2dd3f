"""Combinatorial triangulated closed surfaces (Delta-complexes).

A face ``f`` stores three vertex slots ``faces[f] = (v0, v1, v2)`` in
counter-clockwise order.  Every face has three *sides*; side ``k`` is the
side opposite slot ``k`` and is traversed from ``v[k+1]`` to ``v[k+2]``.
A side is addressed by the halfedge handle ``h = 3*f + k`` and a corner by
the same integer (corner ``k`` of face ``f``).  Edges are built by pairing
sides, never by vertex pairs, so loop edges and parallel edges are
representable.
"""
from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateFlip, Disconnected, NonManifold, NonOrientable, ParseError

__all__ = [
    "TriangulatedSurface",
    "build_mesh",
    "euler_characteristic",
    "flip_edge",
    "corners_at_vertex",
    "canonical_form",
    "preset",
    "PRESET_NAMES",
    "read_mesh",
    "write_mesh",
    "format_mesh",
    "parse_mesh",
]


@dataclass(frozen=True, eq=False)
class TriangulatedSurface:
    """A validated, closed, connected, orientable Delta-complex.

    Attributes
    ----------
    num_vertices : int
    faces : ndarray, shape (F, 3)
        Vertex index per face slot.
    twin : ndarray, shape (3F,)
        Halfedge glued to each halfedge.
    edge_of : ndarray, shape (3F,)
        Edge handle of each halfedge.
    edges : ndarray, shape (E, 2)
        The two halfedges of each edge; ``edges[e, 0]`` fixes the edge's
        reference direction.
    """

    num_vertices: int
    faces: np.ndarray
    twin: np.ndarray
    edge_of: np.ndarray
    edges: np.ndarray
    _corner_index: dict = field(default=None, repr=False, compare=False)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def halfedge_start(self, h: int) -> int:
        f, k = divmod(int(h), 3)
        return int(self.faces[f, (k + 1) % 3])

    def halfedge_end(self, h: int) -> int:
        f, k = divmod(int(h), 3)
        return int(self.faces[f, (k + 2) % 3])

    def edge_vertices(self, e: int) -> tuple[int, int]:
        h = self.edges[e, 0]
        return self.halfedge_start(h), self.halfedge_end(h)

    @property
    def edge_endpoints(self) -> np.ndarray:
        """(E, 2) array of edge endpoints in reference direction."""
        h = self.edges[:, 0]
        f, k = np.divmod(h, 3)
        return np.stack([self.faces[f, (k + 1) % 3], self.faces[f, (k + 2) % 3]], axis=1)

    @property
    def face_edges(self) -> np.ndarray:
        """(F, 3) edge handle of the side opposite each slot."""
        return self.edge_of.reshape(-1, 3)

    @property
    def face_side_reversed(self) -> np.ndarray:
        """(F, 3) bool; True where the side runs against its edge's reference direction."""
        h = np.arange(3 * self.num_faces)
        return (self.edges[self.edge_of, 0] != h).reshape(-1, 3)

    def corner_index(self) -> dict:
        if self._corner_index is None:
            idx = defaultdict(list)
            for c, v in enumerate(self.faces.ravel()):
                idx[int(v)].append(c)
            object.__setattr__(self, "_corner_index", dict(idx))
        return self._corner_index

    def face_list(self) -> list[tuple[int, int, int]]:
        return [tuple(int(v) for v in f) for f in self.faces]

    def gluing(self) -> list[tuple[int, int]]:
        """Halfedge pairs, one per edge, in edge order."""
        return [(int(a), int(b)) for a, b in self.edges]

    def __repr__(self):
        return (f"TriangulatedSurface(V={self.num_vertices}, E={self.num_edges}, "
                f"F={self.num_faces}, chi={euler_characteristic(self)})")


def _auto_gluing(faces):
    sides = defaultdict(list)
    for f, tri in enumerate(faces):
        for k in range(3):
            sides[(tri[(k + 1) % 3], tri[(k + 2) % 3])].append(3 * f + k)
    pairs = []
    seen = set()
    for (a, b), hs in sides.items():
        if (a, b) in seen:
            continue
        seen.add((a, b))
        seen.add((b, a))
        if a == b:
            if len(hs) != 2:
                raise NonManifold(
                    f"loop sides at vertex {a} cannot be paired from vertex labels "
                    f"({len(hs)} candidates); pass an explicit gluing")
            pairs.append((hs[0], hs[1]))
            continue
        partners = sides.get((b, a), [])
        if len(hs) != len(partners):
            if len(hs) > 1 and not partners:
                raise NonOrientable(f"sides {a}->{b} can only be glued with equal orientation")
            raise NonManifold(f"side {a}->{b} has {len(hs)} copies but {b}->{a} has {len(partners)}")
        if len(hs) > 1:
            raise NonManifold(
                f"{len(hs)} parallel sides between {a} and {b}; pass an explicit gluing")
        pairs.append((hs[0], partners[0]))
    return pairs


def build_mesh(face_list, gluing=None, num_vertices=None) -> TriangulatedSurface:
    """Validate faces (and optionally an explicit side gluing) into a surface.

    Parameters
    ----------
    face_list : sequence of vertex triples
    gluing : sequence of (h, h') halfedge pairs, optional
        Required when sides cannot be paired from vertex labels alone (loop
        edges, parallel edges).  ``h = 3*face + slot`` addresses the side
        opposite ``slot``.
    num_vertices : int, optional
        Defaults to ``max index + 1``.

    Raises
    ------
    NonManifold, Disconnected, NonOrientable
    """
    faces = np.asarray(face_list, dtype=np.int64)
    if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) == 0:
        raise NonManifold("face list must be a nonempty sequence of vertex triples")
    if (faces < 0).any():
        raise NonManifold("negative vertex index")
    n = int(faces.max()) + 1 if num_vertices is None else int(num_vertices)
    if faces.max() >= n:
        raise NonManifold("vertex index out of range")
    tri = [tuple(int(v) for v in f) for f in faces]
    pairs = _auto_gluing(tri) if gluing is None else [(int(a), int(b)) for a, b in gluing]

    nh = 3 * len(faces)
    twin = np.full(nh, -1, dtype=np.int64)
    for a, b in pairs:
        for h in (a, b):
            if not 0 <= h < nh:
                raise NonManifold(f"halfedge {h} out of range")
            if twin[h] != -1:
                raise NonManifold(f"halfedge {h} glued more than once")
        if a == b:
            raise NonManifold(f"halfedge {a} glued to itself")
        twin[a], twin[b] = b, a
    if (twin < 0).any():
        h = int(np.flatnonzero(twin < 0)[0])
        raise NonManifold(f"side {h} (face {h // 3}, slot {h % 3}) has no partner")
    return _assemble(n, faces, twin)


def _halfedge_ends(faces, h):
    f, k = divmod(int(h), 3)
    return int(faces[f, (k + 1) % 3]), int(faces[f, (k + 2) % 3])


def _assemble(n, faces, twin):
    nh = len(twin)
    for h in range(nh):
        a, b = _halfedge_ends(faces, h)
        c, d = _halfedge_ends(faces, twin[h])
        if (a, b) != (d, c):
            raise NonOrientable(
                f"halfedge {h} ({a}->{b}) glued to {int(twin[h])} ({c}->{d}) without reversing")

    edge_of = np.full(nh, -1, dtype=np.int64)
    edges = []
    for h in range(nh):
        if edge_of[h] == -1:
            edge_of[h] = edge_of[twin[h]] = len(edges)
            edges.append((h, int(twin[h])))
    edges = np.asarray(edges, dtype=np.int64)

    # face adjacency connectivity
    nf = len(faces)
    seen = np.zeros(nf, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        f = queue.popleft()
        for k in range(3):
            g = int(twin[3 * f + k]) // 3
            if not seen[g]:
                seen[g] = True
                queue.append(g)
    if not seen.all():
        raise Disconnected(f"{int((~seen).sum())} faces unreachable from face 0")
    used = np.zeros(n, dtype=bool)
    used[faces.ravel()] = True
    if not used.all():
        raise Disconnected(f"vertices {np.flatnonzero(~used).tolist()} belong to no face")

    return TriangulatedSurface(n, faces, twin, edge_of, edges)


def euler_characteristic(mesh: TriangulatedSurface) -> int:
    return mesh.num_vertices - mesh.num_edges + mesh.num_faces


def corners_at_vertex(mesh: TriangulatedSurface, v: int) -> list[int]:
    """Corner handles ``3*f + k`` whose slot carries ``v``, with multiplicity."""
    return list(mesh.corner_index().get(int(v), []))


def flip_edge(mesh: TriangulatedSurface, e: int) -> tuple[TriangulatedSurface, int]:
    """Replace edge ``e`` by the other diagonal of its quadrilateral.

    Faces ``(k, a, b)`` and ``(l, b, a)`` become ``(k, a, l)`` and
    ``(l, b, k)``, keeping their face records.  The returned handle is the
    replacement for ``e``; every other edge handle is unchanged.
    """
    h0, h1 = (int(x) for x in mesh.edges[e])
    f0, k0 = divmod(h0, 3)
    f1, k1 = divmod(h1, 3)
    if f0 == f1:
        raise DegenerateFlip(f"both sides of edge {e} lie on face {f0}")
    faces = mesh.faces.copy()
    kv, a, b = (int(mesh.faces[f0, (k0 + i) % 3]) for i in range(3))
    lv = int(mesh.faces[f1, k1])

    a_l = 3 * f1 + (k1 + 1) % 3
    l_b = 3 * f1 + (k1 + 2) % 3
    b_k = 3 * f0 + (k0 + 1) % 3
    k_a = 3 * f0 + (k0 + 2) % 3
    remap = {a_l: 3 * f0, k_a: 3 * f0 + 2, b_k: 3 * f1, l_b: 3 * f1 + 2}

    faces[f0] = (kv, a, lv)
    faces[f1] = (lv, b, kv)
    twin = mesh.twin.copy()
    edge_of = mesh.edge_of.copy()
    for old, new in remap.items():
        t = int(mesh.twin[old])
        t = remap.get(t, t)
        twin[new] = t
        twin[t] = new
        edge_of[new] = mesh.edge_of[old]
    twin[3 * f0 + 1], twin[3 * f1 + 1] = 3 * f1 + 1, 3 * f0 + 1
    edge_of[3 * f0 + 1] = edge_of[3 * f1 + 1] = e

    edges = mesh.edges.copy()
    for eid in {int(mesh.edge_of[h]) for h in remap}:
        edges[eid] = [remap.get(int(h), int(h)) for h in mesh.edges[eid]]
    edges[e] = (3 * f0 + 1, 3 * f1 + 1)
    return TriangulatedSurface(mesh.num_vertices, faces, twin, edge_of, edges), e


def canonical_form(mesh: TriangulatedSurface) -> tuple:
    """Handle-independent code of the incidence structure (vertex labels kept).

    Two meshes have equal codes iff they are the same Delta-complex up to a
    renumbering of faces, rotation of face slots and edge handles.
    """
    best = None
    nh = 3 * mesh.num_faces
    for start in range(nh):
        order = {}
        rot = {}
        f0, k0 = divmod(start, 3)
        order[f0], rot[f0] = 0, k0
        queue = deque([f0])
        code = []
        while queue:
            f = queue.popleft()
            r = rot[f]
            verts = tuple(int(mesh.faces[f, (r + i) % 3]) for i in range(3))
            sides = []
            for i in range(3):
                t = int(mesh.twin[3 * f + (r + i) % 3])
                g, kg = divmod(t, 3)
                if g not in order:
                    order[g], rot[g] = len(order), kg
                    queue.append(g)
                sides.append((order[g], (kg - rot[g]) % 3))
            code.append((verts, tuple(sides)))
        code = tuple(code)
        if best is None or code < best:
            best = code
    return best


# ---------------------------------------------------------------- presets

def _icosahedron_faces():
    return [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]


def _grid_torus_faces(n):
    def vid(i, j):
        return (i % n) * n + (j % n)
    faces = []
    for i in range(n):
        for j in range(n):
            faces.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            faces.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return faces


def _one_vertex_torus():
    # square a b a^-1 b^-1 cut along one diagonal
    faces = [(0, 0, 0), (0, 0, 0)]
    gluing = [(2, 3), (0, 4), (1, 5)]
    return build_mesh(faces, gluing)


def _genus2_one_vertex():
    # octagon a b a^-1 b^-1 c d c^-1 d^-1, fan-triangulated from one corner;
    # face m-1 is (P0, P_m, P_{m+1}) for m = 1..6
    faces = [(0, 0, 0)] * 6

    def side(m):
        # octagon side P_m -> P_{m+1}
        if m == 0:
            return 3 * 0 + 2
        if m == 7:
            return 3 * 5 + 1
        return 3 * (m - 1)

    gluing = [(side(0), side(2)), (side(1), side(3)), (side(4), side(6)), (side(5), side(7))]
    for m in range(2, 7):  # diagonal P0 - P_m
        gluing.append((3 * (m - 2) + 1, 3 * (m - 1) + 2))
    return build_mesh(faces, gluing)


_PRESETS = {
    "tetra_sphere": lambda: build_mesh([(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]),
    "icosahedron": lambda: build_mesh(_icosahedron_faces()),
    "one_vertex_torus": _one_vertex_torus,
    "genus2_one_vertex": _genus2_one_vertex,
    "flat_torus_16": lambda: build_mesh(_grid_torus_faces(4)),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str) -> TriangulatedSurface:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None


# ------------------------------------------------------------- text format

def format_mesh(mesh: TriangulatedSurface, explicit_gluing: bool | None = None) -> str:
    """Serialize as ``format=1`` text.

    The gluing section is written when sides cannot be re-paired from
    vertex labels (or always, if ``explicit_gluing`` is True).
    """
    lines = ["format=1", f"{mesh.num_vertices} {mesh.num_faces}"]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.face_list()]
    if explicit_gluing is None:
        try:
            rebuilt = build_mesh(mesh.face_list(), num_vertices=mesh.num_vertices)
            explicit_gluing = canonical_form(rebuilt) != canonical_form(mesh)
        except (NonManifold, NonOrientable, Disconnected):
            explicit_gluing = True
    if explicit_gluing:
        lines.append(f"gluing {mesh.num_edges}")
        for h0, h1 in mesh.gluing():
            lines.append(f"{h0 // 3} {h0 % 3} {h1 // 3} {h1 % 3}")
    return "\n".join(lines) + "\n"


def _ints(tokens, lineno, expected):
    if len(tokens) != expected:
        raise ParseError(f"expected {expected} integers, got {len(tokens)}", lineno, 1)
    out = []
    col = 1
    for tok in tokens:
        try:
            out.append(int(tok))
        except ValueError:
            raise ParseError(f"not an integer: {tok!r}", lineno, col) from None
        col += len(tok) + 1
    return out


def parse_mesh(text: str) -> TriangulatedSurface:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line))
    if rows and rows[0][1].startswith("format="):
        lineno, line = rows.pop(0)
        if line != "format=1":
            raise ParseError(f"unsupported {line}", lineno, 1)
    if not rows:
        raise ParseError("empty mesh file")
    lineno, line = rows.pop(0)
    n, nf = _ints(line.split(), lineno, 2)
    if len(rows) < nf:
        raise ParseError(f"header announces {nf} faces, found {len(rows)} lines", lineno, 1)
    faces = [_ints(line.split(), ln, 3) for ln, line in rows[:nf]]
    rest = rows[nf:]
    gluing = None
    if rest:
        ln, line = rest.pop(0)
        tok = line.split()
        if tok[0] != "gluing" or len(tok) != 2:
            raise ParseError(f"unexpected content {line!r}", ln, 1)
        (m,) = _ints(tok[1:], ln, 1)
        if len(rest) != m:
            raise ParseError(f"gluing announces {m} pairs, found {len(rest)}", ln, 1)
        gluing = []
        for ln, line in rest:
            f0, k0, f1, k1 = _ints(line.split(), ln, 4)
            gluing.append((3 * f0 + k0, 3 * f1 + k1))
    return build_mesh(faces, gluing, num_vertices=n)


def read_mesh(path) -> TriangulatedSurface:
    return parse_mesh(Path(path).read_text())


def write_mesh(mesh: TriangulatedSurface, path) -> None:
    Path(path).write_text(format_mesh(mesh))
