"""Triangle meshes, Delaunay fallback triangulation, and graph geodesics.

Geodesic distances are shortest paths over the mesh edge graph with
Euclidean edge weights -- adequate for thresholded geodesic comparisons on
reasonably dense meshes. Point clouds without connectivity get a symmetric
k-nearest-neighbour graph instead (k=8).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import (
    DegenerateInput,
    DisconnectedMesh,
    InvalidArgument,
    MalformedInput,
)

KNN_FALLBACK_K = 8


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (n, 3)
    triangles: np.ndarray  # (t, 3)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidArgument("vertices must be (n, 3)")
        if t.size:
            if t.min() < 0 or t.max() >= len(v):
                raise InvalidArgument("triangle index out of range")
            if (
                (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
            ).any():
                raise InvalidArgument("degenerate triangle with repeated vertex")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def num_vertices(self) -> int:
        return int(len(self.vertices))

    @cached_property
    def edge_graph(self):
        """Symmetric CSR (indptr, indices, weights) over mesh edges."""
        pairs = set()
        for a, b, c in self.triangles.tolist():
            pairs.add((min(a, b), max(a, b)))
            pairs.add((min(b, c), max(b, c)))
            pairs.add((min(a, c), max(a, c)))
        return _build_csr(self.vertices, sorted(pairs))


def _build_csr(vertices, pairs):
    n = len(vertices)
    if not pairs:
        return (
            np.zeros(n + 1, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.float64),
        )
    arr = np.asarray(pairs, dtype=np.int64)
    src = np.concatenate([arr[:, 0], arr[:, 1]])
    dst = np.concatenate([arr[:, 1], arr[:, 0]])
    w = np.linalg.norm(vertices[arr[:, 0]] - vertices[arr[:, 1]], axis=1)
    w = np.concatenate([w, w])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst, w


def knn_graph(points, k: int = KNN_FALLBACK_K):
    """Symmetric k-nearest-neighbour CSR graph for raw point clouds."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 2:
        raise InvalidArgument("need at least two points")
    k = min(k, n - 1)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    pairs = set()
    for i in range(n):
        for j in np.argsort(d2[i], kind="stable")[:k]:
            pairs.add((min(i, int(j)), max(i, int(j))))
    return _build_csr(pts, sorted(pairs))


@dataclass(frozen=True)
class GeodesicTable:
    point_ids: np.ndarray
    distances: np.ndarray  # symmetric, zero diagonal, +inf across components

    def __post_init__(self):
        ids = np.asarray(self.point_ids, dtype=np.int64)
        d = np.asarray(self.distances, dtype=np.float64)
        if d.shape != (len(ids), len(ids)):
            raise InvalidArgument("distance matrix shape mismatch")
        ids.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "point_ids", ids)
        object.__setattr__(self, "distances", d)

    @cached_property
    def _row_of(self):
        return {int(pid): i for i, pid in enumerate(self.point_ids)}

    def lookup(self, ids) -> np.ndarray:
        """Sub-matrix of distances for the requested vertex ids."""
        rows = np.array([self._row_of[int(i)] for i in ids], dtype=np.int64)
        return self.distances[np.ix_(rows, rows)]


def geodesic_distances(mesh_or_graph, query_ids) -> GeodesicTable:
    """Pairwise edge-graph shortest-path distances between query vertices.

    Accepts a TriMesh, a raw (n,3) point cloud (k-NN graph fallback), or a
    prebuilt CSR triple.
    """
    if isinstance(mesh_or_graph, TriMesh):
        indptr, indices, weights = mesh_or_graph.edge_graph
        n = mesh_or_graph.num_vertices
    elif isinstance(mesh_or_graph, tuple) and len(mesh_or_graph) == 3:
        indptr, indices, weights = mesh_or_graph
        n = len(indptr) - 1
    else:
        pts = np.asarray(mesh_or_graph, dtype=np.float64)
        indptr, indices, weights = knn_graph(pts)
        n = len(pts)
    ids = np.asarray(query_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise InvalidArgument("query id out of range")
    table = _kernels.dijkstra_table(indptr, indices, weights, ids, n)
    sub = table[:, ids]
    sub = np.minimum(sub, sub.T)  # paths are symmetric; pick one rounding
    np.fill_diagonal(sub, 0.0)
    return GeodesicTable(point_ids=ids, distances=sub)


def connected_components(indptr, indices, n) -> np.ndarray:
    comp = np.full(n, -1, dtype=np.int64)
    cid = 0
    for start in range(n):
        if comp[start] != -1:
            continue
        stack = [start]
        comp[start] = cid
        while stack:
            u = stack.pop()
            for k in range(indptr[u], indptr[u + 1]):
                v = int(indices[k])
                if comp[v] == -1:
                    comp[v] = cid
                    stack.append(v)
        cid += 1
    return comp


def mesh_diameter(mesh: TriMesh, sample_count: int, seed: int) -> float:
    """Maximum pairwise geodesic distance over a seeded vertex sample
    (exact when the sample covers all vertices). Requires a connected mesh."""
    if sample_count < 2:
        raise InvalidArgument("sample_count must be >= 2")
    indptr, indices, _w = mesh.edge_graph
    n = mesh.num_vertices
    comp = connected_components(indptr, indices, n)
    if comp.max() != 0:
        raise DisconnectedMesh(f"mesh has {comp.max() + 1} components")
    if sample_count >= n:
        ids = np.arange(n, dtype=np.int64)
    else:
        rng = np.random.default_rng(seed)
        ids = np.sort(rng.choice(n, size=sample_count, replace=False))
    table = geodesic_distances(mesh, ids)
    return float(table.distances.max())


# ---------------------------------------------------------------------------
# 2-D Delaunay triangulation (Bowyer-Watson)
# ---------------------------------------------------------------------------

def _circumcircle_det(ax, ay, bx, by, cx, cy, px, py):
    """Positive when (px,py) lies strictly inside the circumcircle of the
    CCW triangle (a,b,c)."""
    adx, ady = ax - px, ay - py
    bdx, bdy = bx - px, by - py
    cdx, cdy = cx - px, cy - py
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    return (
        adx * (bdy * cd - bd * cdy)
        - ady * (bdx * cd - bd * cdx)
        + ad * (bdx * cdy - bdy * cdx)
    )


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def delaunay_triangulate_2d(points, heights=None) -> TriMesh:
    """Delaunay triangulation of 2-D points via incremental Bowyer-Watson.

    Insertion follows input order with a super-triangle 10x the bounding
    box; cocircular quadruples are settled in favour of the lowest-index
    diagonal. The third output coordinate is 0 unless ``heights`` is given.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidArgument("points must be (n, 2)")
    n = len(pts)
    if n < 3:
        raise DegenerateInput("need at least 3 points")
    if len(np.unique(pts, axis=0)) != n:
        raise DegenerateInput("duplicate points")
    span = pts.max(axis=0) - pts.min(axis=0)
    scale = float(max(span.max(), 1e-12))
    area2 = np.abs(
        _orient(pts[0, 0], pts[0, 1], pts[1, 0], pts[1, 1], pts[:, 0], pts[:, 1])
    )
    if area2.max() <= 1e-12 * scale * scale:
        raise DegenerateInput("all points collinear")

    cx, cy = pts.mean(axis=0)
    m = 10.0 * scale
    sup = np.array(
        [[cx - 3.0 * m, cy - m], [cx + 3.0 * m, cy - m], [cx, cy + 3.0 * m]]
    )
    allp = np.vstack([pts, sup])
    s0, s1, s2 = n, n + 1, n + 2
    eps = 1e-12 * scale ** 4

    def ccw(tri):
        a, b, c = tri
        if (
            _orient(allp[a, 0], allp[a, 1], allp[b, 0], allp[b, 1], allp[c, 0], allp[c, 1])
            < 0
        ):
            return (a, c, b)
        return (a, b, c)

    triangles = {ccw((s0, s1, s2))}
    for pi in range(n):
        px, py = allp[pi]
        bad = []
        for tri in triangles:
            a, b, c = tri
            if (
                _circumcircle_det(
                    allp[a, 0], allp[a, 1], allp[b, 0], allp[b, 1],
                    allp[c, 0], allp[c, 1], px, py,
                )
                > eps
            ):
                bad.append(tri)
        boundary = {}
        for tri in bad:
            a, b, c = tri
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                if key in boundary:
                    del boundary[key]
                else:
                    boundary[key] = e
        for tri in bad:
            triangles.discard(tri)
        for e in boundary.values():
            a, b = e
            if (
                abs(_orient(allp[a, 0], allp[a, 1], allp[b, 0], allp[b, 1], px, py))
                <= 1e-14 * scale * scale
            ):
                continue  # point on the edge: skip the sliver
            triangles.add(ccw((a, b, pi)))

    triangles = {t for t in triangles if s0 not in t and s1 not in t and s2 not in t}
    _flip_cocircular(triangles, allp, eps, scale)

    tri_arr = np.array(sorted(tuple(sorted(t)) for t in triangles), dtype=np.int64)
    if tri_arr.size == 0:
        raise DegenerateInput("triangulation produced no triangles")
    if heights is None:
        z = np.zeros(n)
    else:
        z = np.asarray(heights, dtype=np.float64)
        if z.shape != (n,):
            raise InvalidArgument("heights length mismatch")
    verts = np.column_stack([pts, z])
    return TriMesh(vertices=verts, triangles=tri_arr)


def _flip_cocircular(triangles, allp, eps, scale):
    """Settle cocircular quadruples on the lowest-index diagonal.

    For each interior edge whose opposite vertices are cocircular with it,
    flip when the alternative diagonal has the lexicographically smaller
    index pair. Each flip strictly decreases that pair, so this terminates.
    """
    changed = True
    while changed:
        changed = False
        edge_tris = {}
        for tri in triangles:
            a, b, c = sorted(tri)
            for e in ((a, b), (b, c), (a, c)):
                edge_tris.setdefault(e, []).append(tri)
        for e, tris in edge_tris.items():
            if len(tris) != 2:
                continue
            t1, t2 = tris
            opp1 = next(v for v in t1 if v not in e)
            opp2 = next(v for v in t2 if v not in e)
            alt = (min(opp1, opp2), max(opp1, opp2))
            if alt >= e:
                continue
            a, b = e
            det = _circumcircle_det(
                allp[a, 0], allp[a, 1], allp[b, 0], allp[b, 1],
                allp[opp1, 0], allp[opp1, 1], allp[opp2, 0], allp[opp2, 1],
            )
            # only cocircular quadruples may be re-diagonalised
            if abs(det) > eps:
                continue
            # the quad must be strictly convex for the flip to be valid
            o1 = _orient(allp[opp1, 0], allp[opp1, 1], allp[opp2, 0], allp[opp2, 1], allp[a, 0], allp[a, 1])
            o2 = _orient(allp[opp1, 0], allp[opp1, 1], allp[opp2, 0], allp[opp2, 1], allp[b, 0], allp[b, 1])
            if o1 * o2 >= -(1e-14 * scale * scale) ** 2:
                continue
            triangles.discard(t1)
            triangles.discard(t2)
            triangles.add(tuple(sorted((alt[0], alt[1], a))))
            triangles.add(tuple(sorted((alt[0], alt[1], b))))
            changed = True
            break


# ---------------------------------------------------------------------------
# OBJ / PLY I/O (ASCII subsets)
# ---------------------------------------------------------------------------

def load_mesh(path) -> TriMesh:
    text = open(path, "r", encoding="ascii").read()
    head = text.lstrip()[:3]
    if head == "ply":
        return _parse_ply(text, str(path))
    return _parse_obj(text, str(path))


def _parse_obj(text: str, path: str) -> TriMesh:
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MalformedInput("vertex needs 3 coordinates", path, lineno)
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise MalformedInput("bad vertex coordinate", path, lineno) from None
        elif parts[0] == "f":
            if len(parts) != 4:
                raise MalformedInput("only triangular faces supported", path, lineno)
            idx = []
            for tok in parts[1:]:
                tok = tok.split("/")[0]
                try:
                    i = int(tok)
                except ValueError:
                    raise MalformedInput("bad face index", path, lineno) from None
                if i < 1:
                    raise MalformedInput("face indices must be positive (1-based)", path, lineno)
                idx.append(i - 1)
            faces.append(idx)
        # other records (vn, vt, o, g, s, usemtl ...) are ignored
    if not verts:
        raise MalformedInput("no vertices", path, 1)
    if faces and max(max(f) for f in faces) >= len(verts):
        raise MalformedInput("face index out of range", path, 1)
    return TriMesh(
        vertices=np.asarray(verts, dtype=np.float64),
        triangles=np.asarray(faces, dtype=np.int64).reshape(-1, 3),
    )


def _parse_ply(text: str, path: str) -> TriMesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MalformedInput("missing ply magic", path, 1)
    n_vert = n_face = None
    vert_props: list[str] = []
    in_vertex_element = False
    body_start = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if line == "end_header":
            body_start = lineno
            break
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise MalformedInput("only ascii PLY supported", path, lineno)
        elif parts[0] == "element":
            in_vertex_element = parts[1] == "vertex"
            if parts[1] == "vertex":
                n_vert = int(parts[2])
            elif parts[1] == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and in_vertex_element and parts[1] != "list":
            vert_props.append(parts[-1])
    if body_start is None or n_vert is None:
        raise MalformedInput("incomplete PLY header", path, 1)
    try:
        ix, iy, iz = (vert_props.index(k) for k in ("x", "y", "z"))
    except ValueError:
        raise MalformedInput("vertex element must carry x y z", path, 1) from None
    body = [
        (lineno, ln.strip())
        for lineno, ln in enumerate(lines[body_start:], start=body_start + 1)
        if ln.strip()
    ]
    if len(body) < n_vert + (n_face or 0):
        raise MalformedInput("truncated PLY body", path, body_start)
    verts = np.empty((n_vert, 3))
    for k in range(n_vert):
        lineno, ln = body[k]
        parts = ln.split()
        try:
            verts[k] = [float(parts[ix]), float(parts[iy]), float(parts[iz])]
        except (ValueError, IndexError):
            raise MalformedInput("bad vertex line", path, lineno) from None
    faces = []
    for k in range(n_face or 0):
        lineno, ln = body[n_vert + k]
        parts = ln.split()
        try:
            cnt = int(parts[0])
            idx = [int(t) for t in parts[1:1 + cnt]]
        except (ValueError, IndexError):
            raise MalformedInput("bad face line", path, lineno) from None
        if cnt != 3:
            raise MalformedInput("only triangular faces supported", path, lineno)
        if min(idx) < 0 or max(idx) >= n_vert:
            raise MalformedInput("face index out of range", path, lineno)
        faces.append(idx)
    return TriMesh(
        vertices=verts, triangles=np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    )


def save_mesh(mesh: TriMesh, path) -> None:
    """Write OBJ or PLY depending on the path suffix (ASCII, round-trip safe)."""
    p = str(path)
    if p.endswith(".ply"):
        out = ["ply", "format ascii 1.0", f"element vertex {mesh.num_vertices}"]
        out += [f"property double {ax}" for ax in "xyz"]
        out += [
            f"element face {len(mesh.triangles)}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        for v in mesh.vertices:
            out.append(" ".join(f"{x:.17g}" for x in v))
        for f in mesh.triangles:
            out.append("3 " + " ".join(str(int(i)) for i in f))
    else:
        out = []
        for v in mesh.vertices:
            out.append("v " + " ".join(f"{x:.17g}" for x in v))
        for f in mesh.triangles:
            out.append("f " + " ".join(str(int(i) + 1) for i in f))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")
