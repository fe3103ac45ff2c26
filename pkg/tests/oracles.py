"""Independent reference computations used to check the package.

Nothing here calls the code under test for the quantity being checked: the
formulas are re-derived with plain ``math``/``cmath`` loops or by brute-force
enumeration.
"""

import cmath
import itertools
import math

C = 299_792_458.0

# Frozen outputs of the oracles below (recomputed and compared in test_oracles.py).
FSPL_1M_60GHZ = 68.01080822955625
DIPOLE_PEAK_DBI = 2.1484384804769787
DIPOLE_PI_3 = 1.093333333333333
WAVELENGTH_60GHZ = 0.004996540966666667
WAVELENGTH_5GHZ = 0.0599584916
META_ATOMS_5X3_8MM = 234_375
DRAIN_5X3_8MM_W = 1.875
TWO_EQUAL_MINUS70_DBM = -66.98970004336019


def fspl(d, f):
    return 20.0 * math.log10(4.0 * math.pi * d * f / C)


def dipole(theta):
    s = math.sin(theta)
    if abs(s) < 1e-12:
        return 0.0
    return 1.64 * (math.cos(math.pi / 2.0 * math.cos(theta)) / s) ** 2


def meta_atoms(width_mm, height_mm, side_mm):
    # integer millimetres keep the count exact
    return (width_mm // side_mm) * (height_mm // side_mm)


def rms_spread(taps):
    total = sum(p for _, p in taps)
    mean = sum(t * p for t, p in taps) / total
    return math.sqrt(sum(p * (t - mean) ** 2 for t, p in taps) / total)


# -- graphs -------------------------------------------------------------------


def all_simple_paths(adj, src, dst, banned=()):
    """Every loopless src->dst path by depth-first enumeration."""
    out = []

    def walk(node, path):
        if node == dst:
            out.append(tuple(path))
            return
        for nxt in sorted(adj.get(node, {})):
            if nxt not in path and nxt not in banned:
                walk(nxt, path + [nxt])

    walk(src, [src])
    return out


def path_len(adj, path):
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += adj[a][b]
    return total


def k_shortest_brute(adj, src, dst, K):
    paths = all_simple_paths(adj, src, dst)
    ranked = sorted(((path_len(adj, p), p) for p in paths))
    return ranked[:K]


# -- arrays -------------------------------------------------------------------


def array_factor_direct(bits, n, m, spacing, freq, direction, incident=None):
    """|sum_e exp(j(phi_e + k r_e.(d - d_in)))|^2 with a plain double loop."""
    k = 2.0 * math.pi * freq / C
    dx, dy, dz = direction
    if incident is not None:
        dx, dy, dz = dx - incident[0], dy - incident[1], dz - incident[2]
    acc = 0j
    for r in range(n):
        for c in range(m):
            phi = 0.0 if bits[r * m + c] else math.pi
            x, y = c * spacing, r * spacing
            acc += cmath.exp(1j * (phi + k * (x * dx + y * dy)))
    return abs(acc) ** 2


def exhaustive_array_best(n, m, spacing, freq, direction, incident=None):
    best = -math.inf
    for bits in itertools.product((False, True), repeat=n * m):
        best = max(best, array_factor_direct(bits, n, m, spacing, freq, direction, incident))
    return best


# -- geometry -----------------------------------------------------------------


def brute_tile_edges(scenario, occluded):
    """Tile pairs facing each other with a clear line between centres (O(n^2))."""
    edges = set()
    tiles = scenario.tiles
    for i, a in enumerate(tiles):
        for b in tiles[i + 1:]:
            ab = b.center - a.center
            if ab.dot(a.normal) <= 1e-12 or (-ab).dot(b.normal) <= 1e-12:
                continue
            if not occluded(a.center, b.center, scenario):
                edges.add(frozenset((a.id, b.id)))
    return edges


def reflection_angles(incoming, outgoing, normal):
    """(angle of incidence, angle of reflection) in radians, both from the normal."""
    def ang(u, v):
        nu = math.sqrt(sum(x * x for x in u))
        nv = math.sqrt(sum(x * x for x in v))
        cosv = sum(a * b for a, b in zip(u, v)) / (nu * nv)
        return math.acos(max(-1.0, min(1.0, cosv)))

    back = tuple(-x for x in incoming)
    return ang(back, normal), ang(outgoing, normal)


# -- toy max-min enumeration --------------------------------------------------


def enumerate_assignments(tile_ids, has_edge, tx, receivers):
    """All (route or None, focus flag) choices per receiver with disjoint tiles.

    A route is a sequence of distinct tiles forming a chain tx -> t1 -> ... -> rx
    in the graph described by ``has_edge``.
    """
    per_rx = {}
    for rx in receivers:
        opts = [None]
        for k in range(1, len(tile_ids) + 1):
            for seq in itertools.permutations(tile_ids, k):
                nodes = (f"@{tx}", *seq, f"@{rx}")
                if all(has_edge(a, b) for a, b in zip(nodes, nodes[1:])):
                    opts.append((seq, True))
                    opts.append((seq, False))
        per_rx[rx] = opts
    for combo in itertools.product(*(per_rx[r] for r in receivers)):
        used = [t for c in combo if c is not None for t in c[0]]
        if len(used) == len(set(used)):
            yield dict(zip(receivers, combo))


def segment_crosses_box(p, q, box, eps=1e-7):
    """Liang-Barsky clip of the open segment p->q against ``box`` shrunk by ``eps``."""
    lo, hi = box
    t0, t1 = 0.0, 1.0
    for a in range(3):
        d = q[a] - p[a]
        lo_a, hi_a = lo[a] + eps, hi[a] - eps
        if abs(d) < 1e-15:
            if p[a] <= lo_a or p[a] >= hi_a:
                return False
            continue
        ta, tb = (lo_a - p[a]) / d, (hi_a - p[a]) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 >= t1:
            return False
    return True


def point_segment_dist(p, a, b):
    ab = [b[i] - a[i] for i in range(3)]
    ap = [p[i] - a[i] for i in range(3)]
    den = sum(x * x for x in ab)
    t = 0.0 if den == 0 else max(0.0, min(1.0, sum(x * y for x, y in zip(ap, ab)) / den))
    closest = [a[i] + t * ab[i] for i in range(3)]
    return math.dist(p, closest)
