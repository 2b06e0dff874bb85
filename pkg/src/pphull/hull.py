"""Categories, keypoints and piecewise planar hulls.

A hull is a per-category list of keypoint cliques; each clique is a planar
polygon whose vertex order gives its boundary. A :class:`Registry` stacks
several categories into one global keypoint vector and one global set of
segmentation classes, with class 0 shared as background.
"""
from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

INTERSECT_TOL = 1e-9


class HullError(ValueError):
    """Raised for malformed hull files or hull definitions."""


@dataclass(frozen=True)
class Plane:
    name: str
    vertices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
        if len(self.vertices) < 3:
            raise HullError(f"plane {self.name!r} has fewer than 3 vertices")
        if len(set(self.vertices)) != len(self.vertices):
            raise HullError(f"plane {self.name!r} repeats a vertex")

    def edges(self):
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]


@dataclass(frozen=True)
class Category:
    id: str
    keypoint_names: tuple[str, ...]
    planes: tuple[Plane, ...]
    class_offset: int = 1
    keypoint_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "keypoint_names", tuple(self.keypoint_names))
        object.__setattr__(self, "planes", tuple(self.planes))
        k = len(self.keypoint_names)
        if k < 3:
            raise HullError(f"category {self.id!r} needs at least 3 keypoints")
        if not self.planes:
            raise HullError(f"category {self.id!r} has no planes")
        if self.class_offset < 1:
            raise HullError("class_offset must be >= 1 (class 0 is background)")
        seen = set()
        for plane in self.planes:
            for v in plane.vertices:
                if not 0 <= v < k:
                    raise HullError(
                        f"vertex index {v} out of range in plane {plane.name!r} "
                        f"of category {self.id!r}")
            seen.update(plane.vertices)
        orphans = sorted(set(range(k)) - seen)
        if orphans:
            raise HullError(
                f"orphan keypoint: {orphans} of category {self.id!r} "
                "appear in no plane")

    @property
    def n_keypoints(self) -> int:
        return len(self.keypoint_names)

    @property
    def n_planes(self) -> int:
        return len(self.planes)

    @property
    def class_ids(self) -> range:
        return range(self.class_offset, self.class_offset + self.n_planes)

    def plane_class(self, plane_index: int) -> int:
        return self.class_offset + plane_index

    def planes_containing(self, keypoint: int) -> list[int]:
        return [j for j, p in enumerate(self.planes) if keypoint in p.vertices]


@dataclass(frozen=True)
class Registry:
    """All categories with their global keypoint and class layout.

    Offsets are assigned in category order, so constructing a registry
    from bare categories overwrites whatever offsets they carried.
    """
    categories: tuple[Category, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cats = []
        kp_off, cls_off = 0, 1
        index = {}
        for c in self.categories:
            if c.id in index:
                raise HullError(f"duplicate category id {c.id!r}")
            c = Category(c.id, c.keypoint_names, c.planes,
                         class_offset=cls_off, keypoint_offset=kp_off)
            index[c.id] = len(cats)
            cats.append(c)
            kp_off += c.n_keypoints
            cls_off += c.n_planes
        if not cats:
            raise HullError("registry has no categories")
        object.__setattr__(self, "categories", tuple(cats))
        object.__setattr__(self, "_index", index)

    @property
    def total_keypoints(self) -> int:
        return sum(c.n_keypoints for c in self.categories)

    @property
    def total_classes(self) -> int:
        return sum(c.n_planes for c in self.categories) + 1

    # short aliases matching the usual k / s notation
    k = total_keypoints
    s = total_classes

    def category(self, category_id: str) -> Category:
        try:
            return self.categories[self._index[category_id]]
        except KeyError:
            raise KeyError(f"unknown category {category_id!r}") from None

    def category_of_class(self, class_id: int) -> Category | None:
        for c in self.categories:
            if class_id in c.class_ids:
                return c
        return None

    def __contains__(self, category_id) -> bool:
        return category_id in self._index

    def __iter__(self):
        return iter(self.categories)

    def __len__(self):
        return len(self.categories)


def selection_mask(registry: Registry, category_id: str) -> np.ndarray:
    """Boolean vector over all ``k`` keypoints selecting one category's block."""
    cat = registry.category(category_id)
    zeta = np.zeros(registry.total_keypoints, dtype=bool)
    zeta[cat.keypoint_offset:cat.keypoint_offset + cat.n_keypoints] = True
    return zeta


# ---------------------------------------------------------------- file I/O

def registry_from_dict(data: dict) -> Registry:
    try:
        cats = []
        for c in data["categories"]:
            planes = [Plane(p["name"], p["vertices"]) for p in c["planes"]]
            cats.append(Category(c["id"], c["keypoints"], planes))
    except (KeyError, TypeError) as exc:
        raise HullError(f"hull schema error: {exc!r}") from exc
    return Registry(tuple(cats))


def registry_to_dict(registry: Registry) -> dict:
    return {
        "categories": [
            {
                "id": c.id,
                "keypoints": list(c.keypoint_names),
                "planes": [{"name": p.name, "vertices": list(p.vertices)}
                           for p in c.planes],
            }
            for c in registry.categories
        ]
    }


def loads_registry(text: str) -> Registry:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise HullError(f"parse error: {exc}") from exc
    return registry_from_dict(data)


def dumps_registry(registry: Registry) -> str:
    """Canonical serialization: schema key order, 2-space indent, LF, final newline."""
    return json.dumps(registry_to_dict(registry), indent=2, ensure_ascii=False) + "\n"


def load_registry(path: str | os.PathLike) -> Registry:
    with open(path, encoding="utf-8") as fh:
        return loads_registry(fh.read())


def save_registry(registry: Registry, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_registry(registry))


def builtin_hull_path(name: str) -> str:
    """Path of a hull file shipped with the package (``box``, ``wedge``, ``toy_car``, ``shapes``)."""
    return str(resources.files("pphull") / "data" / "hulls" / f"{name}.json")


def builtin_template_path(category_id: str) -> str:
    return str(resources.files("pphull") / "data" / "templates" / f"{category_id}.json")


def load_builtin_registry(name: str = "shapes") -> Registry:
    return load_registry(builtin_hull_path(name))


# ---------------------------------------------------------------- validation

@dataclass
class ValidationReport:
    category_id: str
    intersecting: list[tuple[str, str]] = field(default_factory=list)
    degenerate: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.intersecting

    def to_dict(self) -> dict:
        return {
            "category": self.category_id,
            "valid": self.valid,
            "intersecting": [list(p) for p in self.intersecting],
            "degenerate": list(self.degenerate),
        }


def fan_triangles(n: int) -> list[tuple[int, int, int]]:
    """Local vertex indices of the fan from vertex 0 of an n-gon."""
    return [(0, i, i + 1) for i in range(1, n - 1)]


def _plane_basis(normal):
    # two axes spanning the plane orthogonal to `normal`
    axis = np.argmin(np.abs(normal))
    e = np.zeros(3)
    e[axis] = 1.0
    u = np.cross(normal, e)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    return u, v


def _clip_convex(subject, clipper):
    """Sutherland-Hodgman clip of 2D polygon `subject` by convex `clipper` (inclusive)."""
    area = 0.0
    for i in range(len(clipper)):
        a, b = clipper[i], clipper[(i + 1) % len(clipper)]
        area += a[0] * b[1] - a[1] * b[0]
    sign = 1.0 if area >= 0 else -1.0

    def side(a, b, p):
        return sign * ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]))

    out = list(subject)
    for i in range(len(clipper)):
        if not out:
            break
        a, b = clipper[i], clipper[(i + 1) % len(clipper)]
        inp, out = out, []
        for j in range(len(inp)):
            p, q = inp[j], inp[(j + 1) % len(inp)]
            sp, sq = side(a, b, p), side(a, b, q)
            if sp >= -INTERSECT_TOL:
                out.append(p)
            if (sp > INTERSECT_TOL and sq < -INTERSECT_TOL) or (sp < -INTERSECT_TOL and sq > INTERSECT_TOL):
                t = sp / (sp - sq)
                out.append(p + t * (q - p))
    return out


def _segment_with_plane(tri, n, d0):
    """Points of triangle `tri` lying on the plane n.x = d0 (n unit)."""
    dist = tri @ n - d0
    pts = [tri[i] for i in range(3) if abs(dist[i]) <= INTERSECT_TOL]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        di, dj = dist[i], dist[j]
        if (di > INTERSECT_TOL and dj < -INTERSECT_TOL) or (di < -INTERSECT_TOL and dj > INTERSECT_TOL):
            t = di / (di - dj)
            pts.append(tri[i] + t * (tri[j] - tri[i]))
    return pts, dist


def triangle_intersection(t1, t2):
    """Intersection of two non-degenerate 3D triangles.

    Returns ``None`` when disjoint, otherwise a list of points whose convex
    hull is the intersection (a point, a segment or, for coplanar input, a
    polygon).
    """
    t1 = np.asarray(t1, float)
    t2 = np.asarray(t2, float)
    n1 = np.cross(t1[1] - t1[0], t1[2] - t1[0])
    n2 = np.cross(t2[1] - t2[0], t2[2] - t2[0])
    n1 /= np.linalg.norm(n1)
    n2 /= np.linalg.norm(n2)

    pts1, dist1 = _segment_with_plane(t1, n2, n2 @ t2[0])
    if not pts1:
        return None
    if np.all(np.abs(dist1) <= INTERSECT_TOL):
        u, v = _plane_basis(n2)
        p2d = [np.array([p @ u, p @ v]) for p in t1]
        q2d = [np.array([p @ u, p @ v]) for p in t2]
        clipped = _clip_convex(p2d, q2d)
        if not clipped:
            return None
        # lift back: offset along the normal from t2's plane
        off = (n2 @ t2[0]) * n2
        return [off + c[0] * u + c[1] * v for c in clipped]
    pts2, _ = _segment_with_plane(t2, n1, n1 @ t1[0])
    if not pts2:
        return None
    direction = np.cross(n1, n2)
    if np.linalg.norm(direction) < INTERSECT_TOL:
        return None
    s1 = [p @ direction for p in pts1]
    s2 = [p @ direction for p in pts2]
    lo = max(min(s1), min(s2))
    hi = min(max(s1), max(s2))
    if lo > hi + INTERSECT_TOL:
        return None
    # endpoints taken from whichever segment bounds the overlap
    def at(s):
        for pts, ss in ((pts1, s1), (pts2, s2)):
            i0, i1 = int(np.argmin(ss)), int(np.argmax(ss))
            if ss[i0] - INTERSECT_TOL <= s <= ss[i1] + INTERSECT_TOL:
                if ss[i1] - ss[i0] <= INTERSECT_TOL:
                    return pts[i0]
                t = (s - ss[i0]) / (ss[i1] - ss[i0])
                return pts[i0] + t * (pts[i1] - pts[i0])
        return pts1[0]
    return [at(lo), at(hi)]


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = ab @ ab
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _contact_allowed(points, allowed_segments):
    pts = np.asarray(points)
    if len(pts) >= 3:
        # any area means the interiors overlap
        centered = pts - pts.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=INTERSECT_TOL) >= 2:
            return False
    if len(pts) == 0:
        return True
    # extremes of a (near) collinear point set
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    i, j = np.unravel_index(np.argmax(d), d.shape)
    p, q = pts[i], pts[j]
    for a, b in allowed_segments:
        if (_point_segment_distance(p, a, b) <= INTERSECT_TOL
                and _point_segment_distance(q, a, b) <= INTERSECT_TOL):
            return True
    return False


def _triangle_area(tri):
    return 0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))


def validate_hull(category: Category, template) -> ValidationReport:
    """Check that no two planes of `category` cross on the 3D `template` shape.

    Each polygon is fan-triangulated from its first vertex. Contacts lying on
    a shared vertex, or on an edge that both planes share, are permitted.
    """
    X = np.asarray(getattr(template, "coords", template), dtype=float)
    if X.shape != (category.n_keypoints, 3):
        raise HullError(
            f"template has shape {X.shape}, expected ({category.n_keypoints}, 3)")
    report = ValidationReport(category.id)

    tris = []
    for plane in category.planes:
        verts = X[list(plane.vertices)]
        good = []
        for a, b, c in fan_triangles(len(plane.vertices)):
            tri = verts[[a, b, c]]
            if _triangle_area(tri) > INTERSECT_TOL:
                good.append(tri)
        # collinear vertices leave nothing or a sliver behind
        if not good:
            report.degenerate.append(plane.name)
        else:
            span = verts - verts.mean(axis=0)
            if np.linalg.matrix_rank(span, tol=INTERSECT_TOL) < 2:
                report.degenerate.append(plane.name)
        tris.append(good)

    for i, j in itertools.combinations(range(category.n_planes), 2):
        pi, pj = category.planes[i], category.planes[j]
        shared = set(pi.vertices) & set(pj.vertices)
        allowed = [(X[v], X[v]) for v in shared]
        edges_i = {frozenset(e) for e in pi.edges()}
        edges_j = {frozenset(e) for e in pj.edges()}
        for e in edges_i & edges_j:
            a, b = tuple(e)
            allowed.append((X[a], X[b]))
        clash = False
        for t1 in tris[i]:
            for t2 in tris[j]:
                contact = triangle_intersection(t1, t2)
                if contact is not None and not _contact_allowed(contact, allowed):
                    clash = True
                    break
            if clash:
                break
        if clash:
            report.intersecting.append((pi.name, pj.name))
    return report
