"""One-dimensional polymer gas: brute-force partition functions and cluster expansions.

Polymers are nonempty subsets of {1..n} stored as sorted tuples.  Two
polymers are adjacent (incompatible) when their distance is at most the
adjacency gap; in particular every polymer is adjacent to itself.
Clusters are multisets of polymers; a cluster with multiplicities m_i
carries the symmetry factor 1 / prod(m_i!).
"""
from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import factorial
from typing import Callable, Optional

import numpy as np

from .errors import ClusterTooLarge, HorizonTooLarge

BRUTE_FORCE_MAX_N = 12
ENUMERATION_MAX_N = 256
DEFAULT_SIZE_CAP = 5
DEFAULT_DIAMETER_CAP = 24
DEFAULT_MEMBER_CAP = 8


def _key(A):
    return tuple(sorted(int(x) for x in A))


def distance(A, B):
    a, b = np.asarray(A), np.asarray(B)
    return int(np.min(np.abs(a[:, None] - b[None, :])))


def diameter(A):
    return max(A) - min(A)


def cluster_support(members):
    s = set()
    for A in members:
        s.update(A)
    return s


def cluster_diameter(members):
    s = cluster_support(members)
    return max(s) - min(s)


@dataclass
class PolymerSystem:
    n: int
    weights: dict
    adjacency_gap: int = 1

    def __post_init__(self):
        w = {}
        for A, v in self.weights.items():
            k = _key(A)
            if not k or k[0] < 1 or k[-1] > self.n:
                raise ValueError(f"polymer {A} is not a nonempty subset of 1..{self.n}")
            if v != 0:
                w[k] = complex(v)
        self.weights = w
        self._support = sorted(w, key=lambda A: (A[0], len(A), A))
        self._index = {A: i for i, A in enumerate(self._support)}
        self._adj = None

    def weight(self, A):
        return self.weights.get(_key(A), 0j)

    def adjacent(self, A, B):
        return distance(A, B) <= self.adjacency_gap

    @property
    def support(self):
        return self._support

    def adjacency(self):
        """Boolean adjacency matrix over the support (diagonal True)."""
        if self._adj is None:
            P = len(self._support)
            adj = np.zeros((P, P), dtype=bool)
            lo = np.array([A[0] for A in self._support])
            hi = np.array([A[-1] for A in self._support])
            for i, A in enumerate(self._support):
                near = np.flatnonzero((lo <= hi[i] + self.adjacency_gap) &
                                      (hi >= lo[i] - self.adjacency_gap))
                for j in near:
                    adj[i, j] = self.adjacent(A, self._support[j])
            self._adj = adj
        return self._adj

    def adjacency_masks(self):
        """Adjacency rows as integer bitmasks over support indices."""
        if getattr(self, "_masks", None) is None:
            self._masks = [sum(1 << int(j) for j in np.flatnonzero(row))
                           for row in self.adjacency()]
        return self._masks

    def neighbours(self):
        adj = self.adjacency()
        return [np.flatnonzero(adj[i]) for i in range(adj.shape[0])]


# ------------------------------------------------------------ brute force
def brute_force_partition(sys: PolymerSystem) -> complex:
    """Sum over collections of pairwise non-adjacent polymers of the product of weights."""
    if sys.n > BRUTE_FORCE_MAX_N:
        raise HorizonTooLarge(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}")
    sup = sys.support
    P = len(sup)
    if P == 0:
        return 1 + 0j
    adj = sys.adjacency()
    w = [sys.weights[A] for A in sup]
    compat = [sum(1 << j for j in range(P) if not adj[i, j]) for i in range(P)]

    @lru_cache(maxsize=None)
    def Z(allowed):
        # sum over collections drawn from the bitmask 'allowed'
        if allowed == 0:
            return 1 + 0j
        i = (allowed & -allowed).bit_length() - 1
        rest = allowed & ~(1 << i)
        return Z(rest) + w[i] * Z(rest & compat[i])

    val = Z((1 << P) - 1)
    Z.cache_clear()
    return val


# ------------------------------------------------------------ connected graphs
@lru_cache(maxsize=None)
def connected_graph_sum(m: int, edge_mask: int) -> int:
    """Sum over connected spanning subgraphs H of G of (-1)^{|E(H)|}.

    ``edge_mask`` encodes G: bit (i * m + j) set for allowed edges i < j.
    Computed by the recursion over vertex subsets
    c(S) = f(S) - sum_{T < S, min S in T} c(T) f(S \\ T),
    where f(S) = 1 when G[S] has no edges and 0 otherwise.
    """
    if m == 1:
        return 1
    nbr = [0] * m
    for i in range(m):
        for j in range(i + 1, m):
            if edge_mask >> (i * m + j) & 1:
                nbr[i] |= 1 << j
                nbr[j] |= 1 << i
    full = (1 << m) - 1
    indep = [False] * (full + 1)
    indep[0] = True
    for S in range(1, full + 1):
        low = S & -S
        v = low.bit_length() - 1
        R = S ^ low
        indep[S] = indep[R] and not (nbr[v] & R)
    c = [0] * (full + 1)
    for S in range(1, full + 1):
        low = S & -S
        rest = S ^ low
        total = 1 if indep[S] else 0
        # proper subsets T of S containing the lowest vertex: T = low | U, U < rest
        U = (rest - 1) & rest
        while True:
            if U != rest:
                T = low | U
                if indep[S ^ T]:
                    total -= c[T]
            if U == 0:
                break
            U = (U - 1) & rest
        c[S] = total
    return c[full]


def _edge_mask(members, adjacent):
    m = len(members)
    mask = 0
    for i in range(m):
        for j in range(i + 1, m):
            if adjacent(members[i], members[j]):
                mask |= 1 << (i * m + j)
    return mask


def truncated_weight(sys: PolymerSystem, members, max_size=DEFAULT_MEMBER_CAP) -> complex:
    """Raw truncated weight: sum over connected graphs of (-1)^edges times prod w.

    No multiset symmetry factor is applied here; cluster sums divide by
    prod(multiplicity!) themselves.
    """
    members = [_key(A) for A in members]
    if len(members) > max_size:
        raise ClusterTooLarge(f"{len(members)} members exceed the cap {max_size}")
    if not members:
        raise ValueError("a cluster needs at least one member")
    prod = 1 + 0j
    for A in members:
        prod *= sys.weight(A)
    cs = connected_graph_sum(len(members), _edge_mask(members, sys.adjacent))
    return cs * prod


def _symmetry(members):
    out = 1
    for c in Counter(members).values():
        out *= factorial(c)
    return out


# ------------------------------------------------------------ Kotecky-Preiss
@dataclass
class KPReport:
    satisfied: bool
    worst_ratio: float
    witness: Optional[tuple]


def _default_a(A):
    return float(len(A))


def check_kotecky_preiss(sys: PolymerSystem, a_fn: Callable = None, targets=None) -> KPReport:
    """Check sum_{A ~ A'} |w(A)| exp(a(A)) <= a(A') over A' in the support.

    ``targets`` optionally replaces the set of A' that are tested.
    """
    a_fn = a_fn or _default_a
    sup = sys.support
    if targets is None:
        targets = sup
    if not sup or not targets:
        return KPReport(True, 0.0, None)
    mass = np.array([abs(sys.weights[A]) * np.exp(a_fn(A)) for A in sup])
    lo = np.array([A[0] for A in sup])
    hi = np.array([A[-1] for A in sup])
    g = sys.adjacency_gap
    worst, witness = 0.0, None
    for B in targets:
        B = _key(B)
        near = np.flatnonzero((lo <= B[-1] + g) & (hi >= B[0] - g))
        lhs = sum(mass[j] for j in near if sys.adjacent(sup[j], B))
        ratio = lhs / a_fn(B)
        if ratio > worst:
            worst, witness = ratio, B
    return KPReport(bool(worst <= 1.0), float(worst), witness)


def check_strengthened_kp(sys: PolymerSystem, alpha, delta) -> KPReport:
    """Check sum_{A ~ A'} exp(delta |A|) d(A)^alpha |w(A)| <= delta |A'|.

    d(A) counts sites in the span, max - min + 1, so singletons have d = 1.
    """
    a = lambda A: delta * len(A)
    mod = {A: w * (A[-1] - A[0] + 1) ** alpha for A, w in sys.weights.items()}
    return check_kotecky_preiss(PolymerSystem(sys.n, mod, sys.adjacency_gap), a)


# ------------------------------------------------------------ cluster sums
def enumerate_clusters(sys: PolymerSystem, size_cap, diameter_cap=None, seeds=None):
    """All connected polymer multisets up to ``size_cap`` members.

    Grown breadth-first by adding polymers adjacent to some member (repeats
    allowed); ``seeds`` restricts the growth to start from the given support
    indices.  Returns a list of sorted index tuples.
    """
    sup = sys.support
    nbmask = sys.adjacency_masks()
    lo = [A[0] for A in sup]
    hi = [A[-1] for A in sup]
    if seeds is None:
        seeds = range(len(sup))
    # cluster -> (reach bitmask, lo, hi)
    level = {(i,): (nbmask[i], lo[i], hi[i]) for i in seeds}
    found = list(level)
    for _ in range(size_cap - 1):
        nxt = {}
        for C, (reach, a, b) in level.items():
            r = reach
            while r:
                low = r & -r
                j = low.bit_length() - 1
                r ^= low
                a2, b2 = min(a, lo[j]), max(b, hi[j])
                if diameter_cap is not None and b2 - a2 > diameter_cap:
                    continue
                D = tuple(sorted(C + (j,)))
                if D not in nxt:
                    nxt[D] = (reach | nbmask[j], a2, b2)
        found.extend(nxt)
        level = nxt
    return found


def _cluster_value(sys, idx_tuple, cache):
    m = len(idx_tuple)
    w = sys.weights
    sup = sys.support
    if m == 1:
        return w[sup[idx_tuple[0]]]
    adj = sys.adjacency_masks()
    mask = 0
    for a in range(m):
        row = adj[idx_tuple[a]]
        for b in range(a + 1, m):
            if row >> idx_tuple[b] & 1:
                mask |= 1 << (a * m + b)
    key = (m, mask)
    cs = cache.get(key)
    if cs is None:
        cs = cache[key] = connected_graph_sum(m, mask)
    if cs == 0:
        return 0j
    prod = 1 + 0j
    sym = 1
    run = 1
    for k, i in enumerate(idx_tuple):
        prod *= w[sup[i]]
        if k and i == idx_tuple[k - 1]:
            run += 1
            sym *= run
        else:
            run = 1
    return cs * prod / sym


@dataclass
class ClusterResult:
    value: complex
    truncation_bound: float
    kp: KPReport = None
    n_clusters: int = 0

    def to_json(self):
        return json.dumps({"satisfied": self.kp.satisfied if self.kp else None,
                           "worst_ratio": self.kp.worst_ratio if self.kp else None,
                           "witness": list(self.kp.witness) if self.kp and self.kp.witness else None,
                           "value_re": self.value.real, "value_im": self.value.imag,
                           "tail_bound": self.truncation_bound})


def _tail_bound(kp: KPReport, anchor_mass, size_cap, min_excluded=None):
    """Geometric bound on the clusters left out by the caps.

    With r = 1 / worst_ratio the rescaled weights r w still satisfy the
    criterion, so clusters of size m touching a site carry at most
    r^-m a(site) in absolute value.
    """
    if kp.worst_ratio == 0:
        return 0.0
    if kp.worst_ratio >= 1:
        return float("inf")
    q = kp.worst_ratio
    start = size_cap + 1 if min_excluded is None else min(size_cap + 1, min_excluded)
    return float(anchor_mass * q ** start / (1 - q))


def cluster_log_partition(sys: PolymerSystem, cluster_size_cap=DEFAULT_SIZE_CAP,
                          diameter_cap=DEFAULT_DIAMETER_CAP, a_fn=None) -> ClusterResult:
    """Sum of truncated weights over clusters within the caps.

    ``a_fn`` (default |A|) feeds the Kotecky-Preiss check behind the tail bound.
    """
    if sys.n > ENUMERATION_MAX_N:
        raise HorizonTooLarge(f"cluster enumeration limited to n <= {ENUMERATION_MAX_N}")
    a_fn = a_fn or _default_a
    if not sys.support:
        return ClusterResult(0j, 0.0, KPReport(True, 0.0, None), 0)
    singles = [(t,) for t in range(1, sys.n + 1)]
    kp = check_kotecky_preiss(sys, a_fn, targets=list(sys.support) + singles)
    if not kp.satisfied:
        warnings.warn(f"Kotecky-Preiss fails (worst ratio {kp.worst_ratio:.3g}); "
                      "the cluster sum may not converge", RuntimeWarning)
    clusters = enumerate_clusters(sys, cluster_size_cap, diameter_cap)
    cache = {}
    total = 0j
    for C in clusters:
        total += _cluster_value(sys, C, cache)
    maxd = max(diameter(A) for A in sys.support)
    min_excl = None
    if diameter_cap is not None and maxd > 0 and cluster_size_cap * maxd + 2 * cluster_size_cap > diameter_cap:
        # a cluster of m members spans at most m * (maxd + gap + 1)
        span = maxd + sys.adjacency_gap + 1
        min_excl = int(np.ceil((diameter_cap + 1) / span))
    anchor_mass = sum(a_fn(s) for s in singles)
    return ClusterResult(total, _tail_bound(kp, anchor_mass, cluster_size_cap, min_excl),
                         kp, len(clusters))


def cluster_sum_touching(sys: PolymerSystem, anchor, size_cap=DEFAULT_SIZE_CAP, absolute=True):
    """Sum over clusters adjacent to ``anchor`` of |w^T| (or w^T), with symmetry factors."""
    anchor = _key(anchor)
    sup = sys.support
    seeds = [i for i, A in enumerate(sup) if sys.adjacent(A, anchor)]
    # enumerate clusters whose first member touches the anchor, then dedupe
    seen = set()
    cache = {}
    total = 0.0 if absolute else 0j
    nb = sys.neighbours()
    level = {(i,) for i in seeds}
    for size in range(1, size_cap + 1):
        for C in level:
            if C in seen:
                continue
            seen.add(C)
            v = _cluster_value(sys, C, cache)
            total += abs(v) if absolute else v
        if size == size_cap:
            break
        nxt = set()
        for C in level:
            for i in C:
                for j in nb[i]:
                    nxt.add(tuple(sorted(C + (int(j),))))
        level = nxt
    return total


def cluster_decay_profile(sys: PolymerSystem, ms, size_cap=3, diameter_cap=None):
    """S(m) = sum over clusters with d >= m of |w^T|, d counting spanned sites."""
    clusters = enumerate_clusters(sys, size_cap, diameter_cap)
    sup = sys.support
    cache = {}
    ds = np.empty(len(clusters))
    vals = np.empty(len(clusters))
    for k, C in enumerate(clusters):
        members = [sup[i] for i in C]
        ds[k] = cluster_diameter(members) + 1
        vals[k] = abs(_cluster_value(sys, C, cache))
    return np.array([vals[ds >= m].sum() for m in ms])


def fit_decay_exponent(ms, S):
    """Least-squares slope of -log S against log m."""
    slope = np.polyfit(np.log(np.asarray(ms, float)), np.log(np.asarray(S, float)), 1)[0]
    return float(-slope)


# ------------------------------------------------------------ translation invariant
def family_system(family: dict, n: int, adjacency_gap=1) -> PolymerSystem:
    """Place every translate of the shapes in ``family`` inside {1..n}.

    Shapes are tuples starting at 0, e.g. (0,) for singletons, (0, 1) for
    nearest-neighbour pairs.
    """
    w = {}
    for shape, x in family.items():
        shape = _key(shape)
        if shape[0] != 0:
            raise ValueError("shapes must start at 0")
        for s in range(1, n - shape[-1] + 1):
            w[tuple(s + k for k in shape)] = x
    return PolymerSystem(n, w, adjacency_gap)


@dataclass
class PressureResult:
    value: complex
    tail_bound: float
    anchored: list = field(default_factory=list, repr=False)


def _anchored_clusters(family, size_cap, diameter_cap, adjacency_gap, a_fn):
    L = diameter_cap + 1
    sys = family_system(family, L, adjacency_gap)
    sup = sys.support
    if not sup:
        return sys, [], KPReport(True, 0.0, None)
    seeds = [i for i, A in enumerate(sup) if A[0] == 1]
    clusters = enumerate_clusters(sys, size_cap, diameter_cap, seeds=seeds)
    cache = {}
    rows = []
    for C in clusters:
        members = [sup[i] for i in C]
        if min(A[0] for A in members) != 1:
            continue
        rows.append((cluster_diameter(members) + 1, _cluster_value(sys, C, cache)))
    kp = check_kotecky_preiss(sys, a_fn or _default_a,
                              targets=list(sup) + [(t,) for t in range(1, L + 1)])
    return sys, rows, kp


def pressure(weight_family: dict, cluster_size_cap=DEFAULT_SIZE_CAP,
             diameter_cap=DEFAULT_DIAMETER_CAP, adjacency_gap=1, a_fn=None) -> PressureResult:
    """Sum of w^T over clusters whose support starts at site 1."""
    sys, rows, kp = _anchored_clusters(weight_family, cluster_size_cap, diameter_cap,
                                       adjacency_gap, a_fn)
    value = sum((v for _, v in rows), 0j)
    bound = _tail_bound(kp, (a_fn or _default_a)((1,)), cluster_size_cap)
    return PressureResult(value, bound, rows)


def finite_size_correction(weight_family: dict, n: int, cluster_size_cap=DEFAULT_SIZE_CAP,
                           diameter_cap=DEFAULT_DIAMETER_CAP, adjacency_gap=1) -> complex:
    """p - log(Upsilon_n) / n = sum over anchored clusters of (n - (n + 1 - d)_+) / n w^T.

    d counts the sites spanned by the cluster, so it has n + 1 - d translates in {1..n}.
    """
    _, rows, _ = _anchored_clusters(weight_family, cluster_size_cap, diameter_cap,
                                    adjacency_gap, None)
    total = 0j
    for d, v in rows:
        total += (n - max(n + 1 - d, 0)) / n * v
    return total


def exclusion_gas_pressure(x):
    """Transfer-matrix pressure of singletons with weight x and gap-1 exclusion."""
    return complex(np.log((1 + np.sqrt(1 + 4 * complex(x))) / 2))


# ------------------------------------------------------------ cumulants
def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in set_partitions(rest):
        yield [[first]] + p
        for k in range(len(p)):
            yield p[:k] + [[first] + p[k]] + p[k + 1:]


def cumulants(G: dict, ground):
    """Connected parts G^c from full values G over subsets of ``ground`` (Moebius inversion)."""
    out = {}
    for r in range(1, len(ground) + 1):
        for S in combinations(sorted(ground), r):
            total = 0j
            for p in set_partitions(S):
                k = len(p)
                term = (-1) ** (k - 1) * factorial(k - 1)
                for B in p:
                    term *= G[tuple(sorted(B))]
                total += term
            out[S] = total
    return out


def moments_from_cumulants(Gc: dict, ground):
    out = {}
    for r in range(1, len(ground) + 1):
        for S in combinations(sorted(ground), r):
            total = 0j
            for p in set_partitions(S):
                term = 1 + 0j
                for B in p:
                    term *= Gc[tuple(sorted(B))]
                total += term
            out[S] = total
    return out


# ------------------------------------------------------------ io
def load_weights(path, n=None, adjacency_gap=1) -> PolymerSystem:
    with open(path) as fh:
        data = json.load(fh)
    w = {tuple(item["subset"]): complex(item["re"], item.get("im", 0.0)) for item in data}
    if n is None:
        n = max((max(A) for A in w), default=1)
    return PolymerSystem(n, w, adjacency_gap)


def dump_weights(sys: PolymerSystem, path):
    data = [{"subset": list(A), "re": v.real, "im": v.imag} for A, v in sys.weights.items()]
    with open(path, "w") as fh:
        json.dump(data, fh)
