"""Graph intention encoder.

Training ASTs are pruned to the nodes that lead to changed tokens, merged
into one static graph, and every per-patch AST is aligned onto the static
graph's slots. A residual GCN over the renormalized Laplacian turns the
aligned graph into node embeddings that are mean-pooled; the before/after
pooled vectors are combined by the graph-cross-resnet.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import EmptyAfterPrune, NonSymmetric, ShapeMismatch
from .minilang import AstGraph, word_tokens

log = logging.getLogger(__name__)


def _neighbor_labels(g, adj, n):
    return {g.nodes[m][0] for m in adj[n]}


def _compatible(a, adj_a, u, b, adj_b, v):
    if a.nodes[u] != b.nodes[v]:
        return False
    la, lb = _neighbor_labels(a, adj_a, u), _neighbor_labels(b, adj_b, v)
    if not la and not lb:
        return True
    return bool(la & lb)


def merge_mapping(a, b):
    """Which node of ``a`` each node of ``b`` merges into (absent = kept apart).

    Two nodes merge when they share ``(label, depth)`` and at least one
    neighbor label (isolated nodes merge on the key alone). Each ``a`` node
    absorbs at most one ``b`` node; ``b`` nodes are visited in id order and
    take the lowest-id free candidate.
    """
    adj_a, adj_b = a.adjacency(), b.adjacency()
    by_key = {}
    for u in sorted(a.nodes):
        by_key.setdefault(a.nodes[u], []).append(u)
    used = set()
    mapping = {}
    for v in sorted(b.nodes):
        for u in by_key.get(b.nodes[v], ()):
            if u not in used and _compatible(a, adj_a, u, b, adj_b, v):
                mapping[v] = u
                used.add(u)
                break
    return mapping


def merge_graphs(a, b):
    """Merge ``b`` into ``a``; merged nodes take the union of both neighbor sets.

    Nodes of ``a`` keep their ids; unmerged ``b`` nodes are appended.
    """
    mapping = merge_mapping(a, b)
    out = a.copy()
    next_id = max(a.nodes, default=-1) + 1
    for v in sorted(b.nodes):
        if v not in mapping:
            mapping[v] = next_id
            out.add_node(next_id, *b.nodes[v])
            next_id += 1
    for x, y in b.edges:
        out.add_edge(mapping[x], mapping[y])
    return out


def _children(g, adj, n):
    d = g.nodes[n][1]
    return [m for m in adj[n] if g.nodes[m][1] == d + 1]


def _parents(g, adj, n):
    d = g.nodes[n][1]
    return [m for m in adj[n] if g.nodes[m][1] == d - 1]


def prune_graph(g, patch_tokens):
    """Keep leaves whose label is a patch token, plus all of their ancestors."""
    adj = g.adjacency()
    tokens = set(patch_tokens)
    keep = set()
    stack = [n for n in g.nodes if not _children(g, adj, n) and g.nodes[n][0] in tokens]
    if not stack:
        raise EmptyAfterPrune("no leaf label occurs in the patch tokens")
    while stack:
        n = stack.pop()
        if n in keep:
            continue
        keep.add(n)
        stack.extend(_parents(g, adj, n))
    return AstGraph({n: g.nodes[n] for n in keep}, [e for e in g.edges if e[0] in keep and e[1] in keep])


def prune_or_keep(g, patch_tokens):
    try:
        return prune_graph(g, patch_tokens)
    except EmptyAfterPrune:
        return g


def _relabel_dense(g):
    order = sorted(g.nodes)
    remap = {old: new for new, old in enumerate(order)}
    return AstGraph({remap[n]: g.nodes[n] for n in order}, [(remap[a], remap[b]) for a, b in g.edges]), remap


@dataclass
class StaticGraph:
    graph: AstGraph
    n_cap: int
    freq: dict = field(default_factory=dict)
    node_index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.node_index:
            index = {}
            for n in sorted(self.graph.nodes):
                index.setdefault(self.graph.nodes[n], []).append(n)
            self.node_index = {k: tuple(v) for k, v in index.items()}
        self._adj = None

    def __len__(self):
        return len(self.graph)

    @property
    def adjacency(self):
        if self._adj is None:
            self._adj = self.graph.adjacency()
        return self._adj

    def has_edge(self, a, b):
        return b in self.adjacency[a]

    def to_json(self):
        doc = self.graph.to_json()
        doc["n_cap"] = self.n_cap
        doc["node_index"] = [
            {"label": lab, "depth": d, "slots": list(slots)} for (lab, d), slots in sorted(self.node_index.items())
        ]
        doc["freq"] = [{"label": lab, "depth": d, "count": c} for (lab, d), c in sorted(self.freq.items())]
        return doc

    @classmethod
    def from_json(cls, doc):
        g = AstGraph.from_json(doc)
        freq = {(e["label"], e["depth"]): e["count"] for e in doc.get("freq", [])}
        index = {(e["label"], e["depth"]): tuple(e["slots"]) for e in doc.get("node_index", [])}
        return cls(g, int(doc["n_cap"]), freq, index)


def build_static_graph(graphs, n_cap=2000, patch_tokens=None):
    """Left-fold ``merge_graphs`` over (pruned) training graphs, capped at ``n_cap`` nodes.

    ``patch_tokens`` is an optional parallel list of token sets used for
    pruning; graphs that would prune to nothing are kept whole.
    """
    graphs = list(graphs)
    if not graphs:
        raise ValueError("build_static_graph needs at least one graph")
    if patch_tokens is not None:
        graphs = [prune_or_keep(g, toks) for g, toks in zip(graphs, patch_tokens)]
    freq = Counter()
    for g in graphs:
        freq.update(g.nodes.values())
    merged, _ = _relabel_dense(graphs[0])
    for g in graphs[1:]:
        merged = merge_graphs(merged, g)
    if len(merged) > n_cap:
        order = sorted(merged.nodes, key=lambda n: (freq[merged.nodes[n]], merged.nodes[n], -n))
        drop = set(order[: len(merged) - n_cap])
        log.info("static graph: dropping %d low-frequency nodes to fit N_g=%d", len(drop), n_cap)
        merged = AstGraph(
            {n: v for n, v in merged.nodes.items() if n not in drop},
            [e for e in merged.edges if e[0] not in drop and e[1] not in drop],
        )
    merged, _ = _relabel_dense(merged)
    return StaticGraph(merged, n_cap, dict(freq))


# -- alignment ---------------------------------------------------------------

def _candidates(local, static):
    return {u: static.node_index.get(local.nodes[u], ()) for u in local.nodes}


def _consistent(u, s, mapping, local_adj, static):
    for w in local_adj[u]:
        t = mapping.get(w)
        if t is not None and not static.has_edge(s, t):
            return False
    return True


def exact_match(local, static, budget=200_000):
    """Maximum edge-consistent injective label/depth matching by backtracking.

    A matched local edge must land on a static edge. Search visits local
    nodes in id order and candidate slots in ascending order, so the first
    optimum found wins. ``budget`` caps the number of search nodes.
    """
    order = sorted(local.nodes)
    cands = _candidates(local, static)
    adj = local.adjacency()
    reachable = [0] * (len(order) + 1)
    for i in range(len(order) - 1, -1, -1):
        reachable[i] = reachable[i + 1] + (1 if cands[order[i]] else 0)
    best = {"size": -1, "map": {}}
    mapping, used = {}, set()
    steps = [0]

    def search(i, size):
        steps[0] += 1
        if size + reachable[i] <= best["size"] or steps[0] > budget:
            return
        if i == len(order):
            best["size"], best["map"] = size, dict(mapping)
            return
        u = order[i]
        for s in cands[u]:
            if s not in used and _consistent(u, s, mapping, adj, static):
                mapping[u] = s
                used.add(s)
                search(i + 1, size + 1)
                del mapping[u]
                used.discard(s)
        mapping[u] = None
        search(i + 1, size)
        del mapping[u]

    search(0, 0)
    if steps[0] > budget:
        log.debug("exact alignment hit its search budget; returning best found")
    return {u: s for u, s in best["map"].items() if s is not None}


def greedy_match(local, static):
    """Rarest label first, then higher degree, then lower id."""
    cands = _candidates(local, static)
    adj = local.adjacency()
    order = sorted(local.nodes, key=lambda u: (len(cands[u]) or float("inf"), -len(adj[u]), u))
    mapping, used = {}, set()
    for u in order:
        best, best_key = None, None
        for s in cands[u]:
            if s in used or not _consistent(u, s, mapping, adj, static):
                continue
            anchored = sum(1 for w in adj[u] if w in mapping)
            key = (-anchored, s)
            if best_key is None or key < best_key:
                best, best_key = s, key
        if best is not None:
            mapping[u] = best
            used.add(best)
    return mapping


@dataclass
class AlignedGraph:
    """A local AST laid out on the ``n_slots`` slots of the static graph.

    Slot ``s`` holds local node ``slot_node[s]``; ``edges`` are slot pairs.
    Dense ``N_g``-sized views are built on demand; the GCN only touches the
    active slots.
    """

    n_slots: int
    slot_of: dict
    edges: list
    labels: dict
    changed: dict
    matched: int = 0

    @property
    def node_mask(self):
        m = np.zeros(self.n_slots, dtype=np.float32)
        m[list(self.slot_of.values())] = 1.0
        return m

    def adjacency(self):
        a = np.zeros((self.n_slots, self.n_slots), dtype=np.float32)
        for s, t in self.edges:
            a[s, t] = a[t, s] = 1.0
        return a

    def active_slots(self):
        slots = set(self.slot_of.values())
        for s, t in self.edges:
            slots.add(s)
            slots.add(t)
        return sorted(slots)

    def compact(self):
        """(active slots, compact adjacency, real-node mask, changed mask)."""
        slots = self.active_slots()
        pos = {s: i for i, s in enumerate(slots)}
        a = np.zeros((len(slots), len(slots)), dtype=np.float64)
        for s, t in self.edges:
            a[pos[s], pos[t]] = a[pos[t], pos[s]] = 1.0
        real = set(self.slot_of.values())
        node = {s: u for u, s in self.slot_of.items()}
        mask = np.array([1.0 if s in real else 0.0 for s in slots])
        changed = np.array([1.0 if s in real and self.changed.get(node[s], False) else 0.0 for s in slots])
        return slots, a, mask, changed

    def bags(self, vocab):
        """Per active slot, the BPE ids of the node label (empty for PAD)."""
        node = {s: u for u, s in self.slot_of.items()}
        out = []
        for s in self.active_slots():
            if s in node:
                ids = vocab.encode_ids(self.labels[node[s]])
                out.append(ids or [4])
            else:
                out.append([])
        return out

    def features(self, table, vocab):
        """Dense ``H0`` (compact rows): mean token embedding of each node label."""
        return ad.embedding_bag(table, self.bags(vocab))


def align_graph(local, static, n_slots=None, changed_tokens=(), exact_limit=12, edges="local"):
    n_slots = static.n_cap if n_slots is None else n_slots
    if len(static) > n_slots:
        raise ShapeMismatch(f"static graph has {len(static)} nodes but only {n_slots} slots")
    if len(local) <= exact_limit:
        mapping = exact_match(local, static)
    else:
        mapping = greedy_match(local, static)
    slot_of = dict(mapping)
    taken = set(slot_of.values())
    free = [s for s in range(len(static), n_slots)] + [s for s in range(len(static)) if s not in taken]
    free_iter = iter(free)
    dropped = 0
    for u in sorted(local.nodes):
        if u in slot_of:
            continue
        s = next(free_iter, None)
        if s is None:
            dropped += 1
            continue
        slot_of[u] = s
    if dropped:
        log.warning("alignment: %d local nodes did not fit in %d slots", dropped, n_slots)
    edge_slots = [(slot_of[a], slot_of[b]) for a, b in sorted(local.edges) if a in slot_of and b in slot_of]
    if edges == "global":
        edge_slots = sorted(set(edge_slots) | set(static.graph.edges))
    elif edges != "local":
        raise ValueError(f"edges must be 'local' or 'global', got {edges!r}")
    changed_tokens = set(changed_tokens)
    changed = {u: bool(set(word_tokens(local.nodes[u][0])) & changed_tokens) for u in slot_of}
    return AlignedGraph(
        n_slots=n_slots,
        slot_of=slot_of,
        edges=edge_slots,
        labels={u: local.nodes[u][0] for u in slot_of},
        changed=changed,
        matched=len(mapping),
    )


# -- GCN ---------------------------------------------------------------------

def renormalized_laplacian(adj):
    """``(D+I)^-1/2 (A+I) (D+I)^-1/2`` for a symmetric 0/1 adjacency."""
    a = np.asarray(adj, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"adjacency must be square, got {a.shape}")
    if not np.array_equal(a, a.T):
        raise NonSymmetric("adjacency matrix is not symmetric")
    a_hat = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    # d_i d_j is commutative in floating point, so P is exactly symmetric
    return np.outer(d, d) * a_hat


@dataclass
class GcnConfig:
    layers: int = 2
    alpha: float = 0.1
    beta_scale: float = 0.5
    pooling: str = "all"
    betas: tuple = None

    def beta(self, layer):
        if self.betas is not None:
            return self.betas[layer]
        return self.beta_scale / (layer + 1)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for l in range(self.layers):
            if not 0.0 <= self.beta(l) <= 1.0:
                raise ValueError(f"beta for layer {l} must lie in [0, 1]")


def gcn_forward(p, h0, cfg, weights, node_mask=None):
    """Residual GCN: ``relu(((1-a) P H + a H0) ((1-b_l) I + b_l W_l))`` per layer.

    ``p`` is a constant propagation matrix, ``h0`` and ``weights`` tensors.
    Rows with ``node_mask == 0`` are re-zeroed after every layer.
    """
    p = np.asarray(p)
    if p.shape != (h0.shape[0], h0.shape[0]):
        raise ShapeMismatch(f"gcn_forward: P {p.shape} vs H0 {h0.shape}")
    if len(weights) < cfg.layers:
        raise ShapeMismatch(f"gcn_forward: {cfg.layers} layers but {len(weights)} weight matrices")
    p_t = ad.Tensor(p)
    h = h0
    for l in range(cfg.layers):
        w = weights[l]
        if w.shape != (h0.shape[1], h0.shape[1]):
            raise ShapeMismatch(f"gcn_forward: W[{l}] {w.shape} vs embedding dim {h0.shape[1]}")
        x = (1.0 - cfg.alpha) * (p_t @ h) + cfg.alpha * h0 if cfg.alpha else p_t @ h
        b = cfg.beta(l)
        x = (1.0 - b) * x + b * (x @ w) if b else x
        h = ad.relu(x)
        if node_mask is not None:
            h = ad.mask_rows(h, node_mask)
    return h


def graph_pool(h, node_mask, mode="all", changed_mask=None):
    """Mean of node rows over real nodes; ``mode='changed'`` restricts to changed nodes."""
    mask = np.asarray(node_mask, dtype=np.float64)
    if mode == "changed" and changed_mask is not None:
        cm = np.asarray(changed_mask, dtype=np.float64) * mask
        if cm.sum() > 0:
            mask = cm
    elif mode not in ("all", "changed"):
        raise ValueError(f"unknown pooling mode {mode!r}")
    return ad.masked_mean(h, mask)


def graph_cross_resnet(w_before, w_after, fc_w, fc_b):
    """``FC(relu(path1 + path2 + path3))`` with paths before, before+after, after."""
    if w_before.shape != w_after.shape:
        raise ShapeMismatch(f"graph_cross_resnet: {w_before.shape} vs {w_after.shape}")
    path1 = w_before
    path2 = w_before + w_after
    path3 = w_after
    return ad.relu(path1 + path2 + path3) @ fc_w + fc_b


def encode_graph(aligned, table, vocab, cfg, weights):
    """Pooled GCN embedding of one aligned graph."""
    slots, a, mask, changed = aligned.compact()
    if not slots:
        return ad.Tensor(np.zeros(table.shape[1]))
    h0 = aligned.features(table, vocab)
    h = gcn_forward(renormalized_laplacian(a), h0, cfg, weights, node_mask=mask)
    return graph_pool(h, mask, cfg.pooling, changed)
