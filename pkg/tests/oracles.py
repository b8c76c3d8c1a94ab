"""Small independent oracles shared by the unit and acceptance tests."""

import itertools

import numpy as np

from patcherizer.minilang import AstGraph


def tree(parents, labels):
    """AstGraph from a parent list (root has parent -1)."""
    depth = {}
    for i, p in enumerate(parents):
        depth[i] = 0 if p < 0 else depth[p] + 1
    return AstGraph({i: (labels[i], depth[i]) for i in range(len(parents))}, [(p, i) for i, p in enumerate(parents) if p >= 0])


def _nbr_labels(g, n):
    return {g.nodes[m][0] for e in g.edges for m in e if n in e and m != n}


def mergeable(a, u, b, v):
    """Pairwise merge rule, checked directly from the edge lists."""
    if a.nodes[u] != b.nodes[v]:
        return False
    la, lb = _nbr_labels(a, u), _nbr_labels(b, v)
    return (not la and not lb) or bool(la & lb)


def check_merge(a, b, merged):
    """Verify ``merged`` against an exhaustive pairwise scan of ``a`` x ``b``.

    Recovers which ``b`` node went where by trying every assignment of
    unmatched ``b`` nodes to the appended ids, then checks that merged pairs
    obey the rule, that no further legal merge was left undone, and that the
    edge set is exactly the union. Returns a list of problems.
    """
    problems = []
    extra = sorted(n for n in merged.nodes if n not in a.nodes)
    for n in a.nodes:
        if merged.nodes.get(n) != a.nodes[n]:
            problems.append(f"a node {n} changed")
    pairs = {(u, v) for u in a.nodes for v in b.nodes if mergeable(a, u, b, v)}
    n_merged = len(a) + len(b) - len(merged)
    found = False
    b_nodes = sorted(b.nodes)
    for chosen in itertools.combinations(b_nodes, n_merged):
        rest = [v for v in b_nodes if v not in chosen]
        if [b.nodes[v] for v in rest] != [merged.nodes[n] for n in extra]:
            continue
        cand_a = [[u for u in a.nodes if (u, v) in pairs] for v in chosen]
        for targets in itertools.product(*cand_a):
            if len(set(targets)) != len(targets):
                continue
            mapping = dict(zip(chosen, targets))
            mapping.update(zip(rest, extra))
            used = set(targets)
            maximal = all(not any((u, v) in pairs and u not in used for u in a.nodes) for v in rest)
            edges = set(a.edges) | {tuple(sorted((mapping[x], mapping[y]))) for x, y in b.edges}
            if maximal and edges == set(merged.edges):
                found = True
                break
        if found:
            break
    if not found:
        problems.append("no legal maximal merge reproduces the result")
    return problems


def brute_lcs(a, b):
    for k in range(min(len(a), len(b)), 0, -1):
        subs = {tuple(a[i] for i in idx) for idx in itertools.combinations(range(len(a)), k)}
        for idx in itertools.combinations(range(len(b)), k):
            if tuple(b[i] for i in idx) in subs:
                return k
    return 0


def brute_force_alignment(local, static_graph):
    """Size of the largest injective label/depth-preserving edge-consistent map."""
    nodes = sorted(local.nodes)
    sadj = static_graph.adjacency()
    best = 0
    options = [[None] + [s for s in static_graph.nodes if static_graph.nodes[s] == local.nodes[u]] for u in nodes]
    for choice in itertools.product(*options):
        used = [s for s in choice if s is not None]
        if len(used) <= best or len(used) != len(set(used)):
            continue
        m = dict(zip(nodes, choice))
        if all(m[x] is None or m[y] is None or m[y] in sadj[m[x]] for x, y in local.edges):
            best = len(used)
    return best


# -- straight-line sequence-intention forward ---------------------------------

def np_ln(x, g, b):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * g + b


def np_softmax(z):
    z = z - z.max(-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(-1, keepdims=True)


def np_embed(ids, mask, P, cfg):
    if not any(mask):
        return np.zeros((len(ids), P["tok_emb"].shape[1]))
    x = P["tok_emb"][ids] + P["pos_emb"][: len(ids)]
    keep = np.array(mask, dtype=bool)
    dh = cfg.d_e // cfg.n_heads
    for l in range(cfg.n_layers):
        q, k, v = (x @ P[f"enc{l}.w{c}"] for c in "qkv")
        heads = []
        for h in range(cfg.n_heads):
            s = slice(h * dh, (h + 1) * dh)
            scores = q[:, s] @ k[:, s].T / np.sqrt(dh)
            scores[:, ~keep] = -np.inf
            heads.append(np_softmax(scores) @ v[:, s])
        x = np_ln(x + np.concatenate(heads, 1) @ P[f"enc{l}.wo"], P[f"enc{l}.ln1.g"], P[f"enc{l}.ln1.b"])
        ff = np.maximum(x @ P[f"enc{l}.ff1.w"] + P[f"enc{l}.ff1.b"], 0) @ P[f"enc{l}.ff2.w"] + P[f"enc{l}.ff2.b"]
        x = np_ln(x + ff, P[f"enc{l}.ln2.g"], P[f"enc{l}.ln2.b"])
    return x * keep[:, None]


def np_cross(src, qry, src_mask):
    keep = np.array(src_mask, dtype=bool)
    if not keep.any():
        return np.zeros_like(qry)
    scores = qry @ src.T
    scores[:, ~keep] = -np.inf
    return np_softmax(scores) @ src


def np_seq_intention(ids_p, mp, ids_m, mm, ids_c, mc, P, cfg):
    e_p, e_m, e_c = (np_embed(i, m, P, cfg) for i, m in ((ids_p, mp), (ids_m, mm), (ids_c, mc)))
    mp, mm, mc = (np.array(m, dtype=float)[:, None] for m in (mp, mm, mc))

    def res(e, v, which):
        return np.maximum(np_ln(e, P[f"seqint.ln_{which}.g"], P[f"seqint.ln_{which}.b"]) + e + v, 0)

    return (
        res(e_p, np_cross(e_m, e_p, mm[:, 0]), "op") * mp,
        res(e_m, np_cross(e_p, e_m, mp[:, 0]), "op") * mm,
        res(e_p, e_c, "ctx") * np.maximum(mp, mc),
        res(e_m, e_c, "ctx") * np.maximum(mm, mc),
    )
