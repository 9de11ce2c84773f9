"""Relay network-coding maps.

Covers the exclusive-law check, the bitwise-XOR map, enumeration of singular
fade states (single-antenna multiple access) and singular fade subspaces
(stacked-codeword multiple access), adaptive map construction by greedy
Latin-square completion over the singularity-removal graph, and runtime map
selection from a catalog.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .constellation import (
    CIOD_ROTATION,
    Constellation,
    bc_constellation,
    from_name,
    make_constellation,
)
from .stbc import interleaved_pair_coords

_KEY_DECIMALS = 9  # dedup grid for fade-state keys; far below the min key gap


class MapConstructionError(Exception):
    """A map could not be completed; carries the colors needed or the conflict."""

    def __init__(self, message, required_colors: Optional[int] = None, conflict=None):
        super().__init__(message)
        self.required_colors = required_colors
        self.conflict = conflict


class IncompleteMapError(ValueError):
    """The map table has unassigned cells."""


class CatalogFormatError(ValueError):
    """A catalog file could not be parsed."""


@dataclass(frozen=True)
class NetworkCodeMap:
    """A clustering of sender-symbol tuples into relay output symbols.

    arity 2: table[i_a, i_b] indexes a point of output_set.
    arity 4: table[t_a, t_b] over symbol-pair indices t = M*i1 + i2 gives a
    color c encoding the output pair (output_set[c // K], output_set[c % K]).
    """

    arity: int
    table: np.ndarray
    input_set: Constellation
    output_set: Constellation
    colors_used: int

    def output_pair(self, color: int) -> Tuple[complex, complex]:
        if self.arity != 4:
            raise ValueError("output_pair applies to arity-4 maps")
        k = self.output_set.size
        return self.output_set.points[color // k], self.output_set.points[color % k]


@dataclass(frozen=True)
class SingularFadeState:
    """A ratio -dx_A/dx_B at which the single-antenna effective constellation
    loses minimum distance, with the symbol-index pairs that collide there."""

    ratio: complex  # complex(inf, 0) encodes the ratio-infinity state
    witnesses: tuple  # of ((i_a, i_b), (i_a2, i_b2))

    @property
    def removable(self) -> bool:
        # Merging the ratio-0 / ratio-inf collisions would break the exclusive
        # law (the colliding cells share a row or a column), so only finite
        # non-zero states admit a removing map.
        return self.ratio != 0 and not cmath_isinf(self.ratio)


def cmath_isinf(z: complex) -> bool:
    return math.isinf(z.real) or math.isinf(z.imag)


@dataclass(frozen=True)
class SingularFadeSubspace:
    """Fade row vectors annihilating a stacked codeword difference.

    basis rows are orthonormal and span {h : h . stack(dX_A, dX_B) = 0}; key is
    the deduplicated ratio pair (-a1/b1, -a2/b2) of the per-slot interleaved
    coordinate differences; witnesses are symbol-pair-index tuple pairs
    ((t_a, t_b), (t_a2, t_b2)).
    """

    key: Tuple[complex, complex]
    basis: np.ndarray
    witnesses: tuple


@dataclass(frozen=True)
class RemovalGraph:
    """Merge clusters of the map grid plus their exclusive-law conflicts."""

    n_rows: int
    n_cols: int
    cluster_of: np.ndarray  # cell index (row-major) -> cluster id
    adjacency: tuple  # tuple of frozensets, one per cluster
    coloring: Optional[np.ndarray] = None  # cluster id -> color

    @property
    def n_clusters(self) -> int:
        return len(self.adjacency)


# ---------------------------------------------------------------------------
# exclusive law and the XOR map


def check_exclusive_law(m: NetworkCodeMap) -> bool:
    """True iff fixing either sender's (tuple of) symbols leaves the map
    injective in the other sender's."""
    table = np.asarray(m.table)
    if (table < 0).any():
        raise IncompleteMapError("map table has unassigned cells")
    for axis_view in (table, table.T):
        srt = np.sort(axis_view, axis=1)
        if (srt[:, 1:] == srt[:, :-1]).any():
            return False
    return True


def xor_map(c: Constellation) -> NetworkCodeMap:
    """Fixed network coding: XOR the bit labels and map back to a point of c."""
    if c.labels is None:
        raise ValueError(f"{c.name} has no bit labels; XOR map undefined")
    ints = [int(lab, 2) for lab in c.labels]
    idx_of = {v: i for i, v in enumerate(ints)}
    m = c.size
    table = np.empty((m, m), dtype=np.int64)
    for ia in range(m):
        for ib in range(m):
            table[ia, ib] = idx_of[ints[ia] ^ ints[ib]]
    return NetworkCodeMap(
        arity=2, table=table, input_set=c, output_set=c, colors_used=m
    )


# ---------------------------------------------------------------------------
# enumeration


def _round_key(z: complex) -> Tuple[float, float]:
    # round() may produce -0.0; normalize so keys hash consistently
    re = round(z.real, _KEY_DECIMALS) + 0.0
    im = round(z.imag, _KEY_DECIMALS) + 0.0
    return (re, im)


def enumerate_siso_singular_states(c: Constellation) -> List[SingularFadeState]:
    """All ratios -dx_A/dx_B over symbol pairs, including the 0 and inf states.

    Deduplicated on a 1e-9 grid; finite states sorted by (re, im) with the
    infinity state last.
    """
    pts = c.point_array()
    m = c.size
    groups: dict = {}
    for ia in range(m):
        for ja in range(m):
            for ib in range(m):
                for jb in range(m):
                    # keep each unordered collision pair once
                    if ia * m + ib >= ja * m + jb:
                        continue
                    wit = ((ia, ib), (ja, jb))
                    if ib == jb:
                        key = (math.inf, 0.0)
                    elif ia == ja:
                        key = (0.0, 0.0)
                    else:
                        key = _round_key(-(pts[ia] - pts[ja]) / (pts[ib] - pts[jb]))
                    groups.setdefault(key, []).append(wit)
    ordered = sorted(groups, key=lambda k: (math.isinf(k[0]), k))
    return [
        SingularFadeState(ratio=complex(*key), witnesses=tuple(groups[key]))
        for key in ordered
    ]


def enumerate_scheme2_subspaces(c: Constellation) -> List[SingularFadeSubspace]:
    """Distinct singular fade subspaces over pairs of non-zero codeword
    differences from both nodes.

    One-sided difference classes (one node's codewords identical) admit no
    removing map, mirroring the 0/inf fade states, and are excluded from the
    enumeration.  Dedup is by the per-slot ratio key on a 1e-9 grid, which is
    far finer than the minimum key separation.
    """
    tilde1, tilde2 = interleaved_pair_coords(c.point_array())
    t_sq = c.size * c.size
    ti, tj = np.meshgrid(np.arange(t_sq), np.arange(t_sq), indexing="ij")
    off = ti != tj
    ti, tj = ti[off], tj[off]  # all ordered pairs of distinct symbol pairs
    d1 = tilde1[ti] - tilde1[tj]
    d2 = tilde2[ti] - tilde2[tj]
    if np.abs(d1).min() < 1e-12 or np.abs(d2).min() < 1e-12:
        raise ValueError(
            "constellation has coinciding interleaved coordinates; "
            "a rotated set with non-zero CPD is required"
        )
    n = len(ti)
    r1 = -(d1[:, None] / d1[None, :])
    r2 = -(d2[:, None] / d2[None, :])
    # keep each unordered witness pair once: grid cell of the first tuple pair
    # strictly below the second's
    keep = ((ti[:, None] * t_sq + ti[None, :]) < (tj[:, None] * t_sq + tj[None, :])).reshape(-1)
    keys = np.stack(
        [
            np.round(r1.real, _KEY_DECIMALS) + 0.0,
            np.round(r1.imag, _KEY_DECIMALS) + 0.0,
            np.round(r2.real, _KEY_DECIMALS) + 0.0,
            np.round(r2.imag, _KEY_DECIMALS) + 0.0,
        ],
        axis=-1,
    ).reshape(-1, 4)[keep]
    flat_idx = np.nonzero(keep)[0]
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    witnesses_by_group: list = [[] for _ in range(len(uniq))]
    for pos in order:
        ka, kb = divmod(int(flat_idx[pos]), n)
        witnesses_by_group[inverse[pos]].append(
            ((int(ti[ka]), int(ti[kb])), (int(tj[ka]), int(tj[kb])))
        )
    subspaces = []
    for g, key_row in enumerate(uniq):
        wit = witnesses_by_group[g]
        (ta, tb), (ta2, tb2) = wit[0]
        a1 = tilde1[ta] - tilde1[ta2]
        a2 = tilde2[ta] - tilde2[ta2]
        b1 = tilde1[tb] - tilde1[tb2]
        b2 = tilde2[tb] - tilde2[tb2]
        v1 = np.array([-b1, 0.0, a1, 0.0], dtype=np.complex128)
        v2 = np.array([0.0, -b2, 0.0, a2], dtype=np.complex128)
        basis = np.vstack([v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2)])
        subspaces.append(
            SingularFadeSubspace(
                key=(complex(key_row[0], key_row[1]), complex(key_row[2], key_row[3])),
                basis=basis,
                witnesses=tuple(wit),
            )
        )
    subspaces.sort(
        key=lambda s: (s.key[0].real, s.key[0].imag, s.key[1].real, s.key[1].imag)
    )
    return subspaces


# ---------------------------------------------------------------------------
# removal-graph construction and greedy coloring


class _Dsu:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the smaller cell index as root for deterministic labeling
            self.parent[max(ra, rb)] = min(ra, rb)


def build_removal_graph(
    n_rows: int, n_cols: int, merge_cells: Sequence[Tuple[int, int]]
) -> RemovalGraph:
    """Union the cells that must share an output; connect clusters that share
    a row or column (the exclusive-law conflicts)."""
    n = n_rows * n_cols
    dsu = _Dsu(n)
    for a, b in merge_cells:
        dsu.union(a, b)
    roots = [dsu.find(i) for i in range(n)]
    ids = {r: i for i, r in enumerate(sorted(set(roots)))}
    cluster_of = np.array([ids[r] for r in roots], dtype=np.int64)
    adjacency = [set() for _ in range(len(ids))]
    for line in _grid_lines(n_rows, n_cols):
        members = [int(cluster_of[cell]) for cell in line]
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                u, v = members[i], members[j]
                if u == v:
                    raise MapConstructionError(
                        "merge constraints join two cells in the same row or "
                        "column; no exclusive-law completion exists",
                        conflict=(line[i], line[j]),
                    )
                adjacency[u].add(v)
                adjacency[v].add(u)
    return RemovalGraph(
        n_rows=n_rows,
        n_cols=n_cols,
        cluster_of=cluster_of,
        adjacency=tuple(frozenset(s) for s in adjacency),
    )


def _grid_lines(n_rows: int, n_cols: int):
    for r in range(n_rows):
        yield [r * n_cols + c for c in range(n_cols)]
    for c in range(n_cols):
        yield [r * n_cols + c for r in range(n_rows)]


def greedy_color(graph: RemovalGraph) -> RemovalGraph:
    """Color clusters largest-degree-first (ties by cluster id), assigning the
    smallest color not used by an already-colored neighbor."""
    order = sorted(
        range(graph.n_clusters), key=lambda v: (-len(graph.adjacency[v]), v)
    )
    coloring = np.full(graph.n_clusters, -1, dtype=np.int64)
    for v in order:
        used = {int(coloring[u]) for u in graph.adjacency[v] if coloring[u] >= 0}
        color = 0
        while color in used:
            color += 1
        coloring[v] = color
    return RemovalGraph(
        n_rows=graph.n_rows,
        n_cols=graph.n_cols,
        cluster_of=graph.cluster_of,
        adjacency=graph.adjacency,
        coloring=coloring,
    )


def _complete_map(
    n_rows: int, n_cols: int, merge_cells, arity: int, c: Constellation, bc_sets
) -> NetworkCodeMap:
    graph = greedy_color(build_removal_graph(n_rows, n_cols, merge_cells))
    ncolors = int(graph.coloring.max()) + 1
    capacity = lambda s: s.size if arity == 2 else s.size * s.size
    chosen = None
    for bc in sorted(bc_sets, key=lambda s: s.size):
        if capacity(bc) >= ncolors:
            chosen = bc
            break
    if chosen is None:
        raise MapConstructionError(
            f"no broadcast set can hold the {ncolors} output symbols the greedy "
            "completion requires",
            required_colors=ncolors,
        )
    table = graph.coloring[graph.cluster_of].reshape(n_rows, n_cols)
    return NetworkCodeMap(
        arity=arity,
        table=table,
        input_set=c,
        output_set=chosen,
        colors_used=ncolors,
    )


def build_adaptive_map_siso(
    c: Constellation,
    target: SingularFadeState,
    bc_sets: Sequence[Constellation],
) -> NetworkCodeMap:
    """Latin square merging all witness pairs of `target`, using the smallest
    output set in bc_sets that the greedy completion fits into.

    The 0/inf states admit no merging (their witnesses collide within a row or
    column), so for those the plain Latin-square completion with no merge
    constraints is returned.
    """
    m = c.size
    merge = []
    if target.removable:
        merge = [
            (ia * m + ib, ja * m + jb) for (ia, ib), (ja, jb) in target.witnesses
        ]
    return _complete_map(m, m, merge, 2, c, bc_sets)


def build_adaptive_map_scheme2(
    c: Constellation,
    target: SingularFadeSubspace,
    bc_set: Constellation,
) -> NetworkCodeMap:
    """Arity-4 map over the symbol-pair grid merging all witness tuple pairs of
    `target`; colors map to ordered pairs drawn from bc_set."""
    t_sq = c.size * c.size
    merge = [
        (ta * t_sq + tb, ta2 * t_sq + tb2)
        for (ta, tb), (ta2, tb2) in target.witnesses
    ]
    return _complete_map(t_sq, t_sq, merge, 4, c, [bc_set])


# ---------------------------------------------------------------------------
# runtime selection


def chordal_distance(z: complex, r: complex) -> float:
    """Distance between two points of the extended complex plane on the
    Riemann sphere (diameter 2); handles inf on either side."""
    if cmath_isinf(z) and cmath_isinf(r):
        return 0.0
    if cmath_isinf(z):
        return 2.0 / math.sqrt(1.0 + abs(r) ** 2)
    if cmath_isinf(r):
        return 2.0 / math.sqrt(1.0 + abs(z) ** 2)
    return 2.0 * abs(z - r) / math.sqrt((1.0 + abs(z) ** 2) * (1.0 + abs(r) ** 2))


def _state_distance(h_ar: complex, h_br: complex, ratio: complex) -> float:
    # chordal distance of h_br/h_ar to ratio in projective (division-free) form
    denom = math.sqrt(abs(h_ar) ** 2 + abs(h_br) ** 2)
    if cmath_isinf(ratio):
        return 2.0 * abs(h_ar) / denom
    return 2.0 * abs(h_br - ratio * h_ar) / (denom * math.sqrt(1.0 + abs(ratio) ** 2))


def select_map(realization, catalog: Sequence[tuple]) -> NetworkCodeMap:
    """Pick the catalog map whose singular state/subspace is nearest to the
    current fade; ties resolve to the lowest catalog index."""
    if not catalog:
        raise ValueError("empty catalog")
    h = np.asarray(realization.ma_coeffs, dtype=np.complex128)
    best_idx, best_dist = 0, math.inf
    for idx, (target, _) in enumerate(catalog):
        if isinstance(target, SingularFadeState):
            dist = _state_distance(complex(h[0]), complex(h[1]), target.ratio)
        else:
            # sin of the principal angle between span(h) and the subspace
            proj = target.basis.conj() @ h
            resid = float(np.real(h.conj() @ h) - np.real(proj.conj() @ proj))
            dist = math.sqrt(max(resid, 0.0) / float(np.real(h.conj() @ h)))
        if dist < best_dist:
            best_idx, best_dist = idx, dist
    return catalog[best_idx][1]


# ---------------------------------------------------------------------------
# catalogs: build, save, load, cache


@dataclass(frozen=True)
class MapCatalog:
    scheme: str  # "siso" | "scheme2"
    constellation: Constellation
    entries: tuple  # of (SingularFadeState | SingularFadeSubspace, NetworkCodeMap)
    version: str


def _package_version() -> str:
    try:
        return metadata.version("ciodrelay")
    except metadata.PackageNotFoundError:
        return "dev"


CATALOG_FORMAT = "1"


def default_bc_sets(c: Constellation) -> List[Constellation]:
    """Candidate broadcast sets for single-antenna adaptive maps, smallest
    first: the source set, the 5-point set, and rotated 8-PSK."""
    return [
        c,
        bc_constellation(CIOD_ROTATION),
        make_constellation("psk", 8, CIOD_ROTATION),
    ]


def build_catalog(
    c: Constellation,
    scheme: str,
    bc_sets: Optional[Sequence[Constellation]] = None,
) -> MapCatalog:
    """Enumerate all singular states/subspaces of `c` and build one removing
    map per entry."""
    if scheme == "siso":
        targets = enumerate_siso_singular_states(c)
        sets = list(bc_sets) if bc_sets is not None else default_bc_sets(c)
        entries = [(t, build_adaptive_map_siso(c, t, sets)) for t in targets]
    elif scheme == "scheme2":
        targets = enumerate_scheme2_subspaces(c)
        bc = bc_sets[0] if bc_sets else bc_constellation(CIOD_ROTATION)
        entries = [(t, build_adaptive_map_scheme2(c, t, bc)) for t in targets]
    else:
        raise ValueError(f"unknown catalog scheme {scheme!r}")
    return MapCatalog(
        scheme=scheme,
        constellation=c,
        entries=tuple(entries),
        version=_package_version(),
    )


def catalog_cache_key(c: Constellation, scheme: str) -> str:
    payload = "|".join(
        [_package_version(), CATALOG_FORMAT, c.name, repr(c.rotation), scheme]
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_catalog(cat: MapCatalog, path) -> None:
    """Plain-text dump; floats are written with repr so reloads are exact."""
    lines = [
        f"ciodrelay-catalog {CATALOG_FORMAT}",
        f"scheme {cat.scheme}",
        f"constellation {cat.constellation.name} {cat.constellation.rotation!r}",
        f"version {cat.version}",
        f"entries {len(cat.entries)}",
    ]
    for target, m in cat.entries:
        lines.append("entry")
        if isinstance(target, SingularFadeState):
            if cmath_isinf(target.ratio):
                lines.append("key inf")
            else:
                lines.append(f"key {target.ratio.real!r} {target.ratio.imag!r}")
        else:
            r1, r2 = target.key
            lines.append(f"key {r1.real!r} {r1.imag!r} {r2.real!r} {r2.imag!r}")
            flat = " ".join(
                f"{float(v.real)!r} {float(v.imag)!r}" for v in target.basis.reshape(-1)
            )
            lines.append(f"basis {flat}")
        lines.append(f"arity {m.arity}")
        lines.append(f"colors {m.colors_used}")
        lines.append(f"output {m.output_set.name} {m.output_set.rotation!r}")
        lines.append("table " + " ".join(str(v) for v in m.table.reshape(-1)))
        lines.append(f"witnesses {len(target.witnesses)}")
        lines.extend(
            f"w {p[0]} {p[1]} {q[0]} {q[1]}" for p, q in target.witnesses
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_catalog(path) -> MapCatalog:
    text = Path(path).read_text().splitlines()
    it = iter(text)

    def take(prefix: str) -> str:
        line = next(it)
        if not line.startswith(prefix):
            raise CatalogFormatError(f"expected {prefix!r}, got {line!r}")
        return line[len(prefix):].strip()

    header = next(it)
    if header != f"ciodrelay-catalog {CATALOG_FORMAT}":
        raise CatalogFormatError(f"unsupported catalog header {header!r}")
    scheme = take("scheme ")
    cname, crot = take("constellation ").split()
    c = from_name(cname, float(crot))
    version = take("version ")
    n_entries = int(take("entries "))
    entries = []
    for _ in range(n_entries):
        take("entry")
        key_parts = take("key ").split()
        basis = None
        if scheme == "scheme2":
            vals = [float(v) for v in take("basis ").split()]
            basis = np.array(
                [complex(vals[2 * i], vals[2 * i + 1]) for i in range(len(vals) // 2)]
            ).reshape(2, 4)
        arity = int(take("arity "))
        colors = int(take("colors "))
        oname, orot = take("output ").split()
        output_set = from_name(oname, float(orot))
        table_vals = [int(v) for v in take("table ").split()]
        n_wit = int(take("witnesses "))
        wits = []
        for _ in range(n_wit):
            a, b, d, e = (int(v) for v in take("w ").split())
            wits.append(((a, b), (d, e)))
        side = int(math.isqrt(len(table_vals)))
        table = np.array(table_vals, dtype=np.int64).reshape(side, side)
        if scheme == "siso":
            ratio = (
                complex(math.inf, 0.0)
                if key_parts == ["inf"]
                else complex(float(key_parts[0]), float(key_parts[1]))
            )
            target = SingularFadeState(ratio=ratio, witnesses=tuple(wits))
        else:
            target = SingularFadeSubspace(
                key=(
                    complex(float(key_parts[0]), float(key_parts[1])),
                    complex(float(key_parts[2]), float(key_parts[3])),
                ),
                basis=basis,
                witnesses=tuple(wits),
            )
        entries.append(
            (
                target,
                NetworkCodeMap(
                    arity=arity,
                    table=table,
                    input_set=c,
                    output_set=output_set,
                    colors_used=colors,
                ),
            )
        )
    return MapCatalog(
        scheme=scheme, constellation=c, entries=tuple(entries), version=version
    )


def cached_catalog(
    c: Constellation,
    scheme: str,
    cache_dir,
    bc_sets: Optional[Sequence[Constellation]] = None,
) -> MapCatalog:
    """Load the catalog from the cache directory or build and store it.

    The cache key covers the constellation, scheme, and code version, so stale
    files from older builds are never reused.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"catalog-{scheme}-{catalog_cache_key(c, scheme)}.txt"
    if path.exists():
        try:
            return load_catalog(path)
        except (CatalogFormatError, ValueError):
            path.unlink()
    cat = build_catalog(c, scheme, bc_sets)
    save_catalog(cat, path)
    return cat
