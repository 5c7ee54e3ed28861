"""View-based rewriting: candidate plans over lossless prefixes, the
efficient tree-only variant, exhaustive enumeration, and nested plans.

A plan intersects compensated view heads; its unfolding must be
equivalent to the query.  Only a linear number of candidates (one per
main-branch prefix) needs to be inspected for the single-level language;
nested plans go through a single minimally-containing candidate graph.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .syntax import (
    CHILD,
    DESC,
    Compensated,
    Dialect,
    Expr,
    Intersect,
    Path,
    Step,
    print_expr,
)
from .pattern import (
    EMPTY,
    Pattern,
    ViewSet,
    _copy_subtree,
    compensate_expr,
    compensate_pattern,
    dag_intersect,
    lossless_prefixes,
    main_branch,
    subpattern_at,
    to_text,
    tokens,
    tree_from_ast,
    unfold_expr,
)
from .containment import (
    CONTAINMENT,
    ROOT_MAPPING,
    dag_contained_in_dag,
    dag_contained_in_tree,
    find_mapping,
    minimize,
    root_mapping_out_images,
    tree_contains,
)
from .fragments import FragmentClass, classify, extended_skeleton, root_token_code
from .interleaving import interleavings
from .rules import TraceStep, apply_rules

log = logging.getLogger(__name__)

FULL = "full"
EFFICIENT = "efficient"


@dataclass
class RewritePlan:
    """An intersection of compensated view heads, possibly compensated
    again, plus the unfold linkage to the view definitions."""

    expr: Expr
    views: ViewSet

    @property
    def text(self) -> str:
        return print_expr(self.expr)

    def unfold(self):
        return unfold_expr(self.expr, self.views)


@dataclass
class RewriteOutcome:
    plan: Optional[RewritePlan]
    status: str  # 'rewritten' | 'noRewriting'
    prefix_index: Optional[int] = None
    trace: list[TraceStep] = field(default_factory=list)
    candidates_examined: int = 0
    timings: dict = field(default_factory=dict)


def _view_pairs(views: ViewSet, p: Pattern) -> list[tuple[str, int]]:
    """(view, image) pairs: root-mappings of each view into the prefix."""
    pairs = []
    for name, v in views.items():
        for b in root_mapping_out_images(v, p):
            pairs.append((name, b))
    return pairs


def _compensated_head(name: str, p: Pattern, b: int) -> Expr:
    head = Path(name, (Step(name, CHILD),))
    return compensate_expr(head, p, b)


def _plan_expr(pairs: list[tuple[str, int]], p: Pattern) -> Expr:
    branches = tuple(_compensated_head(name, p, b) for name, b in pairs)
    if len(branches) == 1:
        return branches[0]
    return Intersect(branches)


def _skeleton_views(views: ViewSet) -> ViewSet:
    vs = ViewSet()
    for name, v in views.items():
        vs.define(name, extended_skeleton(v))
    return vs


def best_comp(v: Pattern, p: Pattern) -> Pattern:
    """The view compensated at its highest mapping image in ``p``; it is
    contained in every other compensated version."""
    images = root_mapping_out_images(v, p)
    if not images:
        raise ValueError("view does not map into the prefix")
    depth = {n: i for i, n in enumerate(main_branch(p))}
    top = min(images, key=lambda n: depth[n])
    return compensate_pattern(v, p, top)


def _best_pairs(pairs: list[tuple[str, int]], p: Pattern) -> list[tuple[str, int]]:
    depth = {n: i for i, n in enumerate(main_branch(p))}
    best: dict[str, int] = {}
    for name, b in pairs:
        if name not in best or depth[b] < depth[best[name]]:
            best[name] = b
    return sorted(best.items())


def prune_plan_fast(q: Pattern, prefix: Pattern, pairs: list[tuple[str, int]], views: ViewSet) -> bool:
    """Cheap necessary conditions; False proves there is no rewriting for
    this prefix."""
    if not pairs:
        return False
    toks = tokens(prefix)
    comp_codes = []
    for name, b in pairs:
        v = views[name]
        comp = compensate_pattern(v, prefix, b)
        comp_codes.append([t.labels(comp) for t in tokens(comp)])
    if len(toks) == 1:
        # a /-only prefix needs a view whose compensated main branch is that
        # exact /-path
        want = toks[0].labels(prefix)
        if not any(len(c) == 1 and c[0] == want for c in comp_codes):
            return False
    # root tokens must be pairwise prefix-compatible, and compatible with
    # the prefix's root token
    roots = [c[0] for c in comp_codes] + [toks[0].labels(prefix)]
    for a in roots:
        for b in roots:
            k = min(len(a), len(b))
            if a[:k] != b[:k]:
                return False
    # result tokens must be pairwise suffix-compatible
    results = [c[-1] for c in comp_codes]
    for a in results:
        for b in results:
            k = min(len(a), len(b))
            if k and a[-k:] != b[-k:]:
                return False
    return True


def filter_prefixes_by_keys(
    prefixes: list[Pattern], key_targets: list[Pattern]
) -> list[Pattern]:
    """Keep prefixes contained in some key target path."""
    return [
        p
        for p in prefixes
        if any(tree_contains(t, p) for t in key_targets)
    ]


def _candidate_for_prefix(
    p: Pattern,
    pairs: list[tuple[str, int]],
    views: ViewSet,
    dag_views: ViewSet,
):
    expr = _plan_expr(pairs, p)
    return expr, unfold_expr(expr, dag_views)


def rewrite_detailed(
    q: Pattern,
    views: ViewSet,
    mode: str = FULL,
    key_targets: Optional[list[Pattern]] = None,
    use_best_comp: bool = False,
    use_prune: bool = False,
    akin_first: bool = False,
) -> RewriteOutcome:
    """The prefix-driven rewriting search.

    Iterates lossless prefixes root-first; for each, intersects every
    compensated view that root-maps into it, normalizes the unfolding with
    the rule engine and tests containment in the prefix.  In efficient
    mode the containment test runs only when the rules produced a tree.
    """
    t0 = time.perf_counter()
    q.validate()
    prefixes = lossless_prefixes(q)
    if key_targets is not None:
        prefixes = filter_prefixes_by_keys(prefixes, key_targets)
    dag_views = views
    if classify(q) is FragmentClass.EXTENDED_SKELETON:
        dag_views = _skeleton_views(views)
    examined = 0
    for idx, p in enumerate(prefixes):
        pairs = _view_pairs(views, p)
        if not pairs:
            continue
        if use_best_comp:
            pairs = _best_pairs(pairs, p)
        if use_prune and not prune_plan_fast(q, p, pairs, views):
            continue
        examined += 1
        groups: list[list[tuple[str, int]]] = [pairs]
        if akin_first:
            akin_group = _largest_akin_group(pairs, views)
            if akin_group and len(akin_group) < len(pairs):
                groups.insert(0, akin_group)
        for group in groups:
            expr, d = _candidate_for_prefix(p, group, views, dag_views)
            d2, trace = apply_rules(d)
            if mode == EFFICIENT:
                ok = d2 is not EMPTY and d2.is_tree() and tree_contains(p, d2)
            else:
                if d2 is EMPTY:
                    ok = False
                elif d2.is_tree():
                    ok = tree_contains(p, d2)
                else:
                    ok = dag_contained_in_tree(d2, p)
            if ok:
                plan_expr = compensate_expr(expr, q, mb_node_at(q, idx))
                return RewriteOutcome(
                    RewritePlan(plan_expr, views),
                    "rewritten",
                    prefix_index=idx,
                    trace=trace,
                    candidates_examined=examined,
                    timings={"rewriteMs": (time.perf_counter() - t0) * 1e3},
                )
    return RewriteOutcome(
        None,
        "noRewriting",
        candidates_examined=examined,
        timings={"rewriteMs": (time.perf_counter() - t0) * 1e3},
    )


def mb_node_at(q: Pattern, idx: int) -> int:
    return main_branch(q)[idx]


def _largest_akin_group(pairs, views) -> list[tuple[str, int]]:
    by_code: dict[tuple, list[tuple[str, int]]] = {}
    for name, b in pairs:
        code = root_token_code(views[name])
        by_code.setdefault(code, []).append((name, b))
    best = max(by_code.values(), key=len, default=[])
    return best


def rewrite(
    q: Pattern,
    views: ViewSet,
    mode: str = FULL,
    **kw,
) -> Optional[RewritePlan]:
    return rewrite_detailed(q, views, mode, **kw).plan


def all_rewrites(
    q: Pattern, views: ViewSet, max_views: int = 8
) -> Iterator[RewritePlan]:
    """Every minimal rewriting, enumerating view subsets per prefix
    (smallest subsets first, capped at ``max_views`` views)."""
    from itertools import combinations

    if minimize(q).size() != q.size():
        log.warning("all_rewrites: query is not minimal; minimizing")
        q = minimize(q)
    for idx, p in enumerate(lossless_prefixes(q)):
        pairs = _view_pairs(views, p)
        if not pairs:
            continue
        for size in range(1, min(len(pairs), max_views) + 1):
            for subset in combinations(pairs, size):
                expr, d = _candidate_for_prefix(p, list(subset), views, views)
                d2, _ = apply_rules(d)
                if d2 is EMPTY:
                    continue
                if d2.is_tree():
                    ok = tree_contains(p, d2)
                else:
                    ok = dag_contained_in_tree(d2, p)
                if ok:
                    yield RewritePlan(
                        compensate_expr(expr, q, mb_node_at(q, idx)), views
                    )


# ---------------------------------------------------------------------------
# nested plans (rewriting graphs)


@dataclass
class RewritingGraph:
    """The query pattern with view heads attached at mapping images.

    ``attachments`` maps a query node to the views whose output maps
    there; nodes not reachable from any view head have been dropped.
    """

    base: Pattern  # pruned copy of the query pattern
    attachments: dict[int, list[str]]
    views: ViewSet

    def unfold(self):
        parts = []
        for node, names in sorted(self.attachments.items()):
            for name in names:
                v = self.views[name]
                parts.append((node, v))
        acc = self.base.clone()
        alias: dict[int, int] = {}

        def res(n: int) -> int:
            while n in alias:
                n = alias[n]
            return n

        from .pattern import _copy_into, _merge_nodes

        roots = []
        for node, v in parts:
            ren = _copy_into(acc, v)
            roots.append(ren[v.root])
            # the view output coalesces with its attachment point
            keep, gone = res(node), ren[v.out]
            _merge_nodes(acc, keep, gone)
            alias[gone] = keep
        # all view definitions read the same document: one root
        r0 = roots[0]
        for r in roots[1:]:
            keep, gone = res(r0), res(r)
            if keep != gone:
                _merge_nodes(acc, keep, gone)
                alias[gone] = keep
        acc.root = res(r0)
        acc.out = res(self.base.out)
        return acc

    def to_expr(self) -> Expr:
        """Serialize as a nested intersection along the main branch.

        The first attachment node's own predicates ride on its first view
        head; later nodes' predicates are carried by the connecting
        segments.
        """
        from .pattern import _pred_of

        base = self.base
        mb = [n for n in main_branch_order(base) if n in self.attachments]
        cur: Optional[Expr] = None
        prev: Optional[int] = None
        for node in mb:
            heads = [
                Path(name, (Step(name, CHILD),)) for name in self.attachments[node]
            ]
            if cur is None:
                preds = tuple(
                    _pred_of(base, b, k) for b, k in base.pred_edges(node)
                )
                first = heads[0]
                heads[0] = Path(
                    first.doc, (Step(first.steps[0].label, CHILD, preds),)
                )
                branches = tuple(heads)
            else:
                seg = _segment_steps(base, prev, node)
                branches = (_append_steps(cur, seg),) + tuple(heads)
            cur = branches[0] if len(branches) == 1 else Intersect(branches)
            prev = node
        seg = _segment_steps(base, prev, base.out)
        if seg:
            cur = _append_steps(cur, seg)
        return cur


def main_branch_order(p: Pattern) -> list[int]:
    mbn = p.mb_nodes()
    order = [n for n in p.topo_order() if n in mbn]
    return order


def _segment_steps(p: Pattern, a: int, b: int) -> tuple[Step, ...]:
    """Steps of the main-branch segment from a (exclusive) to b (inclusive)."""
    if a == b:
        return ()
    chain = [b]
    while chain[-1] != a:
        parents = [x for x, _ in p.mb_in_edges(chain[-1])]
        chain.append(parents[0])
    chain.reverse()
    steps = []
    for prev, cur in zip(chain, chain[1:]):
        k = p.edges[(prev, cur)]
        axis = CHILD if k in (CHILD, "both") else DESC
        from .pattern import _pred_of

        preds = tuple(_pred_of(p, bb, kk) for bb, kk in p.pred_edges(cur))
        steps.append(Step(p.label(cur), axis, preds))
    return tuple(steps)


def _append_steps(expr: Expr, steps: tuple[Step, ...]) -> Expr:
    if isinstance(expr, Path):
        return Path(expr.doc, expr.steps + steps)
    return Compensated(expr, steps)


def build_rewrite_candidate(q: Pattern, views: ViewSet) -> Optional[RewritingGraph]:
    """The minimally-containing candidate: attach every view at every
    root-mapping image of its output, then keep only what the view heads
    reach; fail when the query output is lost."""
    attach: dict[int, list[str]] = {}
    for name, v in views.items():
        for o in root_mapping_out_images(v, q):
            attach.setdefault(o, []).append(name)
    if not attach:
        return None
    reachable: set[int] = set()
    for node in attach:
        reachable.add(node)
        reachable |= q.descendants(node)
    if q.out not in reachable:
        return None
    base = q.clone()
    base.remove_nodes(set(q.nodes) - reachable)
    # The attachment points sit on the query's main branch, so the highest
    # one dominates everything kept and becomes the region's root.
    base.root = base.topo_order()[0]
    base.out = q.out
    base._dirty()
    pruned_attach = {n: sorted(v) for n, v in attach.items() if n in base.nodes}
    return RewritingGraph(base, pruned_attach, views)


def nested_rewrite(q: Pattern, views: ViewSet) -> Optional[RewritingGraph]:
    """Nested-plan rewriting: the candidate is a rewriting iff any exists."""
    cand = build_rewrite_candidate(q, views)
    if cand is None:
        return None
    d = cand.unfold()
    # q ⊑ unfold via a containment mapping; unfold ⊑ q via interleavings
    if find_mapping(d, q, CONTAINMENT) is None:
        return None
    if not dag_contained_in_tree(d, q):
        return None
    return cand
