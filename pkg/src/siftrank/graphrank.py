"""Call-graph triage: chain generation, function weighting, cluster scoring.

Ranked call chains (single functions or caller/callee pairs) are collapsed
into per-function weights, then grouped into connected, diameter-bounded
subgraphs scored by mass times density, concentrating attention on tight
groups of highly ranked functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

CHAIN_SEPARATOR = "->"

# Above this many weighted nodes, per-seed growth switches from exhaustive
# subset enumeration to greedy best-weight admission.
EXACT_ENUM_LIMIT = 12


@dataclass(frozen=True)
class CallGraph:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]

    def with_nodes(self, extra: Iterable[str]) -> "CallGraph":
        return CallGraph(self.nodes | frozenset(extra), self.edges)


@dataclass(frozen=True)
class CallChain:
    """A single function or caller->callee pair ranked as one document."""

    functions: tuple[str, ...]
    text: str = ""
    rank: int | None = None
    iterations: int | None = None

    def __post_init__(self):
        if not 1 <= len(self.functions) <= 2:
            raise ValueError("a call chain holds one function or one caller/callee pair")

    @property
    def id(self) -> str:
        return CHAIN_SEPARATOR.join(self.functions)


def parse_chain_id(chain_id: str) -> tuple[str, ...]:
    return tuple(part for part in chain_id.split(CHAIN_SEPARATOR) if part)


@dataclass(frozen=True)
class FunctionWeight:
    """Best rank and longest survival of a function across its chains."""

    function: str
    best_rank: int
    iterations: int

    @property
    def weight(self) -> float:
        return self.iterations / self.best_rank


@dataclass(frozen=True)
class Cluster:
    """Connected set of weighted functions with its mass/density score.

    ``diameter`` is the measured all-pairs maximum distance inside the
    member-induced subgraph; ``bound`` is the growth constraint it was
    discovered under (diameter <= bound always holds).
    """

    seed: str
    bound: int
    diameter: int
    members: tuple[str, ...]
    mass: float
    density: float
    score: float


def load_call_graph(path: str | Path) -> CallGraph:
    """Parse an edge-list file with one ``caller callee`` pair per line."""
    nodes: set[str] = set()
    edges: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected 'caller callee', got {stripped!r}"
                )
            caller, callee = parts
            nodes.update((caller, callee))
            edges.add((caller, callee))
    return CallGraph(frozenset(nodes), frozenset(edges))


def load_function_list(path: str | Path) -> list[str]:
    """Parse a file of function ids, one per line, preserving order."""
    functions: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            name = line.strip()
            if name and not name.startswith("#") and name not in seen:
                seen.add(name)
                functions.append(name)
    return functions


def generate_call_chains(graph: CallGraph, changed: Iterable[str],
                         summaries: Mapping[str, str] | None = None) -> list[CallChain]:
    """Build length-1 and length-2 chains over the changed functions.

    Every changed function yields a singleton chain; every edge with both
    endpoints changed yields a pair chain. Chain text concatenates the
    functions' summaries when provided, falling back to bare names.
    """
    changed_list = list(dict.fromkeys(changed))
    unknown = [f for f in changed_list if f not in graph.nodes]
    if unknown:
        raise ValueError(f"changed functions not in graph: {unknown[:5]}")
    summaries = summaries or {}

    def describe(function: str) -> str:
        return summaries.get(function) or function

    chains = [CallChain((f,), text=describe(f)) for f in changed_list]
    changed_set = set(changed_list)
    for caller, callee in sorted(graph.edges):
        if caller in changed_set and callee in changed_set and caller != callee:
            text = (f"{caller} calls {callee}.\n"
                    f"{caller}: {describe(caller)}\n"
                    f"{callee}: {describe(callee)}")
            chains.append(CallChain((caller, callee), text=text))
    return chains


def compute_function_weights(ranked_chains: Sequence[CallChain],
                             survivors_only: bool = True) -> list[FunctionWeight]:
    """Collapse ranked chains into per-function weights.

    Per function, the best (lowest) rank and the highest iteration count are
    taken independently across all containing chains. ``survivors_only``
    drops chains eliminated in the first iteration before weighting.
    """
    best_rank: dict[str, int] = {}
    most_iterations: dict[str, int] = {}
    for chain in ranked_chains:
        if chain.rank is None or chain.iterations is None:
            raise ValueError(f"chain {chain.id!r} is missing rank or iteration count")
        if survivors_only and chain.iterations <= 1:
            continue
        for function in chain.functions:
            if function not in best_rank or chain.rank < best_rank[function]:
                best_rank[function] = chain.rank
            if function not in most_iterations or chain.iterations > most_iterations[function]:
                most_iterations[function] = chain.iterations
    weights = [
        FunctionWeight(f, best_rank[f], most_iterations[f]) for f in best_rank
    ]
    weights.sort(key=lambda w: (-w.weight, w.function))
    return weights


def _undirected_adjacency(graph: CallGraph, allowed: set[str]) -> dict[str, set[str]]:
    adjacency: dict[str, set[str]] = {node: set() for node in allowed}
    for caller, callee in graph.edges:
        if caller in allowed and callee in allowed and caller != callee:
            adjacency[caller].add(callee)
            adjacency[callee].add(caller)
    return adjacency


def _induced_diameter(members: Sequence[str], adjacency: Mapping[str, set[str]]) -> int | None:
    """All-pairs max distance in the member-induced subgraph; None if disconnected."""
    member_set = set(members)
    worst = 0
    for source in members:
        dist = {source: 0}
        queue = [source]
        while queue:
            nxt: list[str] = []
            for node in queue:
                for neighbor in adjacency[node]:
                    if neighbor in member_set and neighbor not in dist:
                        dist[neighbor] = dist[node] + 1
                        nxt.append(neighbor)
            queue = nxt
        if len(dist) != len(member_set):
            return None
        worst = max(worst, max(dist.values()))
    return worst


def _cluster_score(members, weights: Mapping[str, float]) -> tuple[float, float, float]:
    mass = sum(weights[m] for m in members)
    density = mass / len(members)
    return mass, density, mass * density


def _enumerate_connected(nodes: list[str], adjacency: Mapping[str, set[str]]
                         ) -> list[frozenset[str]]:
    """All connected non-empty subsets, via bitmask scan (small node counts)."""
    index = {node: i for i, node in enumerate(nodes)}
    masks = [0] * len(nodes)
    for node, i in index.items():
        for neighbor in adjacency[node]:
            masks[i] |= 1 << index[neighbor]
    subsets: list[frozenset[str]] = []
    for mask in range(1, 1 << len(nodes)):
        start = mask & -mask
        reached = start
        frontier = start
        while frontier:
            grow = 0
            bits = frontier
            while bits:
                low = bits & -bits
                grow |= masks[low.bit_length() - 1]
                bits ^= low
            frontier = grow & mask & ~reached
            reached |= frontier
        if reached == mask:
            subsets.append(frozenset(
                nodes[i] for i in range(len(nodes)) if mask >> i & 1
            ))
    return subsets


def _grow_greedy(seed: str, bound: int, adjacency: Mapping[str, set[str]],
                 weights: Mapping[str, float]) -> frozenset[str]:
    """Greedy best-weight admission from a seed, keeping the best prefix.

    Candidates join heaviest-first as long as the induced diameter stays
    within the bound; of the growth prefixes, the one with the highest
    mass*density score is returned.
    """
    members = [seed]
    best_members = frozenset(members)
    best_score = _cluster_score(members, weights)[2]
    while True:
        member_set = set(members)
        candidates = sorted(
            {n for m in members for n in adjacency[m]} - member_set,
            key=lambda n: (-weights[n], n),
        )
        admitted = None
        for candidate in candidates:
            diameter = _induced_diameter(members + [candidate], adjacency)
            if diameter is not None and diameter <= bound:
                admitted = candidate
                break
        if admitted is None:
            return best_members
        members.append(admitted)
        score = _cluster_score(members, weights)[2]
        if score > best_score:
            best_score = score
            best_members = frozenset(members)


def build_clusters(graph: CallGraph, weights: Mapping[str, float] | Sequence[FunctionWeight],
                   diameters: Iterable[int] = (1, 2, 3),
                   exact_limit: int = EXACT_ENUM_LIMIT) -> list[Cluster]:
    """Grow one cluster per weighted function per diameter bound, then pool.

    For each seed and bound, the best-scoring connected set of weighted
    functions containing the seed is selected: exhaustively when the
    weighted subgraph is small enough, greedily otherwise. Identical member
    sets discovered by different seeds or bounds collapse to one cluster.
    """
    if not isinstance(weights, Mapping):
        weights = {fw.function: fw.weight for fw in weights}
    missing = [f for f in weights if f not in graph.nodes]
    if missing:
        raise ValueError(f"weighted functions not in graph: {missing[:5]}")
    if not weights:
        return []
    allowed = set(weights)
    adjacency = _undirected_adjacency(graph, allowed)
    seeds = sorted(allowed)
    bounds = sorted(set(diameters))

    exact: dict[int, list[tuple[frozenset[str], int, float]]] = {}
    if len(seeds) <= exact_limit:
        pool = [
            (subset, diameter, _cluster_score(subset, weights)[2])
            for subset in _enumerate_connected(seeds, adjacency)
            for diameter in [_induced_diameter(sorted(subset), adjacency)]
        ]
        for bound in bounds:
            exact[bound] = [row for row in pool if row[1] <= bound]

    clusters: list[Cluster] = []
    seen: dict[frozenset[str], int] = {}
    for bound in bounds:
        for seed in seeds:
            if bound in exact:
                containing = [row for row in exact[bound] if seed in row[0]]
                if not containing:
                    continue
                members = min(
                    containing,
                    key=lambda row: (-row[2], -sum(weights[m] for m in row[0]),
                                     tuple(sorted(row[0]))),
                )[0]
            else:
                members = _grow_greedy(seed, bound, adjacency, weights)
            if members in seen:
                continue
            seen[members] = bound
            ordered = tuple(sorted(members))
            mass, density, score = _cluster_score(ordered, weights)
            diameter = _induced_diameter(ordered, adjacency)
            clusters.append(Cluster(
                seed=seed, bound=bound, diameter=diameter if diameter is not None else 0,
                members=ordered, mass=mass, density=density, score=score,
            ))
    return clusters


def score_clusters(clusters: Iterable[Cluster]) -> list[Cluster]:
    """Rank clusters by score descending; ties favor larger mass, then seed id."""
    kept = [c for c in clusters if c.members]
    kept.sort(key=lambda c: (-c.score, -c.mass, c.seed))
    return kept
