"""Tree and DAG patterns: the graph representation of queries.

A pattern is a rooted, labeled graph with child (/) and descendant (//)
edges and one output node.  Trees represent plain queries; DAGs represent
intersections.  Nodes on a root-to-output path (main-branch nodes) never
carry text tests; all other nodes form predicate subtrees and have exactly
one incoming edge.

Patterns are values: every editing helper returns a new pattern.  The
mutating methods are for builders and for the rule engine's private
working copies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .syntax import (
    CHILD,
    DESC,
    Compensated,
    Dialect,
    Expr,
    Intersect,
    Path,
    Pred,
    Step,
    parse,
    print_expr,
)


class UnknownView(KeyError):
    """A plan references a view name that is not defined."""


class NotMainBranch(ValueError):
    """Operation requires a main-branch node."""


class LabelMismatch(ValueError):
    """Collapse requires equal labels."""


@dataclass(frozen=True)
class PNode:
    label: str
    test: Optional[str] = None  # None means the empty test


class EmptyPattern:
    """The unsatisfiable pattern; a singleton propagated by constructors."""

    is_empty = True

    def __repr__(self) -> str:
        return "EMPTY"

    def __deepcopy__(self, memo):
        return self


EMPTY = EmptyPattern()


class Pattern:
    is_empty = False

    def __init__(self):
        self.nodes: dict[int, PNode] = {}
        # edges[(src, dst)] = axis; kids/pars are derived adjacency.
        self.edges: dict[tuple[int, int], str] = {}
        self.root: int = -1
        self.out: int = -1
        self._next = 0
        self._mbn: Optional[frozenset[int]] = None
        self._desc: Optional[dict[int, frozenset[int]]] = None
        self._adj = None

    # -- construction ------------------------------------------------------

    def add_node(self, label: str, test: Optional[str] = None) -> int:
        nid = self._next
        self._next += 1
        self.nodes[nid] = PNode(label, test)
        self._dirty()
        return nid

    def add_edge(self, src: int, dst: int, axis: str) -> None:
        old = self.edges.get((src, dst))
        # A / and a // edge between the same pair: keep both only when they
        # were added separately (dag construction); callers that must
        # normalize use collapse or the rule engine.
        if old is None or old == axis:
            self.edges[(src, dst)] = axis if old is None else old
        else:
            # store the duplicate pair as two logical edges via marker
            self.edges[(src, dst)] = "both"
        self._dirty()

    def remove_edge(self, src: int, dst: int, axis: Optional[str] = None) -> None:
        cur = self.edges.get((src, dst))
        if cur is None:
            return
        if axis is None or cur == axis:
            del self.edges[(src, dst)]
        elif cur == "both":
            self.edges[(src, dst)] = CHILD if axis == DESC else DESC
        self._dirty()

    def remove_nodes(self, dead: Iterable[int]) -> None:
        dead = set(dead)
        for n in dead:
            self.nodes.pop(n, None)
        self.edges = {
            (a, b): k for (a, b), k in self.edges.items() if a not in dead and b not in dead
        }
        self._dirty()

    def _dirty(self) -> None:
        self._mbn = None
        self._desc = None
        self._adj = None

    def _adjacency(self):
        if getattr(self, "_adj", None) is None:
            kids: dict[int, list[tuple[int, str]]] = {n: [] for n in self.nodes}
            pars: dict[int, list[tuple[int, str]]] = {n: [] for n in self.nodes}
            for (a, b), k in self.edges.items():
                kinds = (CHILD, DESC) if k == "both" else (k,)
                for kk in kinds:
                    kids[a].append((b, kk))
                    pars[b].append((a, kk))
            for n in kids:
                kids[n].sort()
                pars[n].sort()
            self._adj = (kids, pars)
        return self._adj

    def clone(self) -> "Pattern":
        p = Pattern()
        p.nodes = dict(self.nodes)
        p.edges = dict(self.edges)
        p.root = self.root
        p.out = self.out
        p._next = self._next
        return p

    # -- adjacency ---------------------------------------------------------

    def out_edges(self, n: int) -> list[tuple[int, str]]:
        return self._adjacency()[0][n]

    def in_edges(self, n: int) -> list[tuple[int, str]]:
        return self._adjacency()[1][n]

    def label(self, n: int) -> str:
        return self.nodes[n].label

    def test(self, n: int) -> Optional[str]:
        return self.nodes[n].test

    # -- derived sets --------------------------------------------------------

    def descendants(self, n: int) -> frozenset[int]:
        """Nodes strictly below ``n`` (transitive, any edge kind)."""
        if self._desc is None:
            self._desc = {}
        cached = self._desc.get(n)
        if cached is not None:
            return cached
        kids = self._adjacency()[0]
        seen: set[int] = set()
        stack = [b for b, _ in kids[n]]
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            stack.extend(b for b, _ in kids[x])
        res = frozenset(seen)
        self._desc[n] = res
        return res

    def reaches(self, a: int, b: int) -> bool:
        return b in self.descendants(a)

    def mb_nodes(self) -> frozenset[int]:
        """Nodes on some root-to-output path."""
        if self._mbn is None:
            pars = self._adjacency()[1]
            above: set[int] = {self.out}
            stack = [a for a, _ in pars[self.out]]
            while stack:
                x = stack.pop()
                if x in above:
                    continue
                above.add(x)
                stack.extend(a for a, _ in pars[x])
            below = self.descendants(self.root) | {self.root}
            self._mbn = frozenset(below & above)
        return self._mbn

    def mb_out_edges(self, n: int) -> list[tuple[int, str]]:
        mbn = self.mb_nodes()
        return [(b, k) for b, k in self.out_edges(n) if b in mbn]

    def mb_in_edges(self, n: int) -> list[tuple[int, str]]:
        mbn = self.mb_nodes()
        return [(a, k) for a, k in self.in_edges(n) if a in mbn]

    def pred_edges(self, n: int) -> list[tuple[int, str]]:
        """Edges from ``n`` to predicate-subtree roots."""
        mbn = self.mb_nodes()
        return [(b, k) for b, k in self.out_edges(n) if b not in mbn]

    def is_tree(self) -> bool:
        ins = {n: 0 for n in self.nodes}
        for (a, b), k in self.edges.items():
            ins[b] += 2 if k == "both" else 1
        return all(c == 1 for n, c in ins.items() if n != self.root) and ins[self.root] == 0

    def topo_order(self) -> list[int]:
        import heapq

        kids = self._adjacency()[0]
        indeg = {n: 0 for n in self.nodes}
        for (a, b) in self.edges:
            indeg[b] += 1
        ready = [n for n, c in indeg.items() if c == 0]
        heapq.heapify(ready)
        order: list[int] = []
        seen_edges = set()
        while ready:
            n = heapq.heappop(ready)
            order.append(n)
            for b, _ in kids[n]:
                if (n, b) in seen_edges:
                    continue
                seen_edges.add((n, b))
                indeg[b] -= 1
                if indeg[b] == 0:
                    heapq.heappush(ready, b)
        if len(order) != len(self.nodes):
            raise ValueError("pattern graph has a cycle")
        return order

    def validate(self) -> None:
        assert self.root in self.nodes and self.out in self.nodes
        self.topo_order()
        mbn = self.mb_nodes()
        for n in self.nodes:
            if n in mbn:
                if self.nodes[n].test is not None:
                    raise ValueError(f"main-branch node {n} carries a test")
            else:
                if len(self.in_edges(n)) != 1:
                    raise ValueError(f"predicate node {n} has several parents")
        for n in self.nodes:
            if n != self.root and not self.in_edges(n):
                raise ValueError(f"node {n} unreachable")

    # -- misc ----------------------------------------------------------------

    def size(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        try:
            return f"<Pattern {to_text(self)}>"
        except Exception:
            return f"<Pattern {len(self.nodes)} nodes>"


# ---------------------------------------------------------------------------
# construction from ASTs


def _graft_steps(p: Pattern, at: int, steps: tuple[Step, ...], on_main: bool) -> int:
    """Append a step chain below ``at``; returns the last node added."""
    cur = at
    for step in steps:
        nid = p.add_node(step.label)
        p.add_edge(cur, nid, step.axis)
        cur = nid
        for pred in step.preds:
            _graft_pred(p, cur, pred)
    return cur


def _graft_pred(p: Pattern, at: int, pred: Pred) -> None:
    cur = at
    for i, step in enumerate(pred.steps):
        nid = p.add_node(step.label)
        p.add_edge(cur, nid, step.axis)
        cur = nid
        for sub in step.preds:
            _graft_pred(p, cur, sub)
    if pred.const is not None:
        p.nodes[cur] = PNode(p.nodes[cur].label, pred.const)


def tree_from_ast(expr: Expr) -> Pattern:
    """Tree pattern of an XP path (output = last step)."""
    if not isinstance(expr, Path) or expr.doc is None:
        raise ValueError("tree_from_ast expects an absolute XP path")
    p = Pattern()
    p.root = p.add_node(expr.doc)
    p.out = _graft_steps(p, p.root, expr.steps, True)
    p.validate()
    return p


def tree_from_text(text: str) -> Pattern:
    return tree_from_ast(parse(text, Dialect.XP))


class ViewSet:
    """Named view definitions (absolute XP patterns over the base document)."""

    def __init__(self, defs: Optional[dict[str, Pattern]] = None):
        self.defs: dict[str, Pattern] = {}
        if defs:
            for name, pat in defs.items():
                self.define(name, pat)

    @classmethod
    def from_texts(cls, defs: dict[str, str]) -> "ViewSet":
        return cls({name: tree_from_text(t) for name, t in defs.items()})

    def define(self, name: str, pattern: Pattern) -> None:
        if name in self.defs:
            raise ValueError(f"duplicate view name {name!r}")
        pattern.validate()
        self.defs[name] = pattern

    def __contains__(self, name: str) -> bool:
        return name in self.defs

    def __getitem__(self, name: str) -> Pattern:
        try:
            return self.defs[name]
        except KeyError:
            raise UnknownView(name) from None

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.defs))

    def __len__(self) -> int:
        return len(self.defs)

    def items(self):
        return sorted(self.defs.items())


def _copy_into(dst: Pattern, src: Pattern) -> dict[int, int]:
    """Copy all of ``src`` into ``dst``; returns the id translation."""
    ren: dict[int, int] = {}
    for n in sorted(src.nodes):
        ren[n] = dst.add_node(src.nodes[n].label, src.nodes[n].test)
    for (a, b), k in sorted(src.edges.items()):
        if k == "both":
            dst.add_edge(ren[a], ren[b], CHILD)
            dst.add_edge(ren[a], ren[b], DESC)
        else:
            dst.add_edge(ren[a], ren[b], k)
    return ren


def _merge_nodes(p: Pattern, keep: int, gone: int) -> None:
    """Redirect all edges of ``gone`` onto ``keep`` and delete ``gone``.

    Parallel / and // edges between one pair are both kept ("both"); the
    // half is redundant and the rule engine removes it as a degenerate
    branch.
    """
    if keep == gone:
        return
    edges = dict(p.edges)
    p.edges = {}
    for (a, b), k in edges.items():
        a2 = keep if a == gone else a
        b2 = keep if b == gone else b
        if a2 == b2:
            raise ValueError("collapse would create a self loop")
        kinds = [CHILD, DESC] if k == "both" else [k]
        for kk in kinds:
            old = p.edges.get((a2, b2))
            if old is None:
                p.edges[(a2, b2)] = kk
            elif old != kk and old != "both":
                p.edges[(a2, b2)] = "both"
    del p.nodes[gone]
    if p.root == gone:
        p.root = keep
    if p.out == gone:
        p.out = keep
    p._dirty()


def collapse(d: Pattern, n1: int, n2: int) -> Pattern:
    """Merge two equally-labeled nodes; identity when ``n1 == n2``."""
    if n1 == n2:
        return d
    if d.label(n1) != d.label(n2):
        raise LabelMismatch(f"{d.label(n1)} != {d.label(n2)}")
    if d.reaches(n1, n2) or d.reaches(n2, n1):
        raise ValueError("cannot collapse comparable nodes")
    p = d.clone()
    keep, gone = min(n1, n2), max(n1, n2)
    _merge_nodes(p, keep, gone)
    return p


def dag_intersect(parts: list[Pattern]):
    """Coalesce roots and outputs of the given patterns (the ∩ operator)."""
    parts = [q for q in parts]
    if any(q is EMPTY for q in parts):
        return EMPTY
    if not parts:
        raise ValueError("empty intersection")
    labels_r = {q.nodes[q.root].label for q in parts}
    labels_o = {q.nodes[q.out].label for q in parts}
    if len(labels_r) > 1 or len(labels_o) > 1:
        return EMPTY
    degenerate = {q.root == q.out for q in parts}
    if degenerate == {True, False}:
        # One branch answers document roots, another answers strictly below.
        return EMPTY
    acc = Pattern()
    ren0 = _copy_into(acc, parts[0])
    acc.root = ren0[parts[0].root]
    acc.out = ren0[parts[0].out]
    for q in parts[1:]:
        ren = _copy_into(acc, q)
        r, o = ren[q.root], ren[q.out]
        _merge_nodes(acc, acc.root, r)
        if o != r:
            _merge_nodes(acc, acc.out, o)
    return acc


def dag_append(x, steps: tuple[Step, ...]):
    """Append a relative continuation below the output node."""
    if x is EMPTY:
        return EMPTY
    p = x.clone()
    p.out = _graft_steps(p, p.out, steps, True)
    return p


def dag_from_expr(expr: Expr, views: Optional[ViewSet] = None):
    """DAG pattern of an intersection expression.

    When ``views`` is given, ``doc("v")/v`` heads are unfolded first; the
    navigation after the view step continues below the view's output node.
    Without views, document nodes become plain root labels.
    """
    if isinstance(expr, Path):
        if views is not None and expr.doc in views:
            vdef = views[expr.doc]
            head = expr.steps[0]
            if head.label != expr.doc:
                raise UnknownView(
                    f"view head doc({expr.doc!r})/{head.label} must repeat the view name"
                )
            p = Pattern()
            ren = _copy_into(p, vdef)
            p.root = ren[vdef.root]
            p.out = ren[vdef.out]
            for pred in head.preds:
                _graft_pred(p, p.out, pred)
            p.out = _graft_steps(p, p.out, expr.steps[1:], True)
            return p
        return tree_from_ast(expr)
    if isinstance(expr, Intersect):
        return dag_intersect([dag_from_expr(b, views) for b in expr.branches])
    if isinstance(expr, Compensated):
        return dag_append(dag_from_expr(expr.base, views), expr.steps)
    raise TypeError(type(expr))


def unfold_expr(expr: Expr, views: ViewSet):
    """DAG of a rewrite plan with every view head replaced by its definition."""
    return dag_from_expr(expr, views)


# ---------------------------------------------------------------------------
# main-branch structure


def main_branch(p: Pattern) -> list[int]:
    """Root-to-output node list of a tree pattern."""
    if not p.is_tree():
        raise ValueError("main_branch requires a tree pattern")
    chain = [p.out]
    while chain[-1] != p.root:
        (parent, _), = p.in_edges(chain[-1])
        chain.append(parent)
    return chain[::-1]


@dataclass(frozen=True)
class Token:
    """Maximal /-connected segment of a main branch."""

    nodes: tuple[int, ...]
    position: str  # 'root' | 'intermediary' | 'result'

    def labels(self, p: Pattern) -> tuple[str, ...]:
        return tuple(p.label(n) for n in self.nodes)


def tokens(p: Pattern) -> list[Token]:
    mb = main_branch(p)
    groups: list[list[int]] = [[mb[0]]]
    for prev, cur in zip(mb, mb[1:]):
        if p.edges[(prev, cur)] == CHILD:
            groups[-1].append(cur)
        else:
            groups.append([cur])
    toks = []
    for i, g in enumerate(groups):
        if i == 0:
            pos = "root"
        elif i == len(groups) - 1:
            pos = "result"
        else:
            pos = "intermediary"
        toks.append(Token(tuple(g), pos))
    if len(toks) == 1:
        toks[0] = Token(toks[0].nodes, "root")
    return toks


def subpattern_at(d: Pattern, n: int) -> Pattern:
    """Subpattern rooted at ``n`` (SUB): everything reachable from it."""
    keep = d.descendants(n) | {n}
    p = Pattern()
    ren = {}
    for x in sorted(keep):
        ren[x] = p.add_node(d.nodes[x].label, d.nodes[x].test)
    for (a, b), k in sorted(d.edges.items()):
        if a in keep and b in keep:
            if k == "both":
                p.add_edge(ren[a], ren[b], CHILD)
                p.add_edge(ren[a], ren[b], DESC)
            else:
                p.add_edge(ren[a], ren[b], k)
    p.root = ren[n]
    p.out = ren[d.out] if d.out in keep else ren[n]
    return p


def tp_of_path(d: Pattern, path: list[int]) -> Pattern:
    """Tree pattern of a main-branch path plus the predicates of its nodes."""
    p = Pattern()
    ren: dict[int, int] = {}
    prev = None
    for n in path:
        ren[n] = p.add_node(d.nodes[n].label, d.nodes[n].test)
        if prev is not None:
            k = d.edges[(prev, n)]
            p.add_edge(ren[prev], ren[n], CHILD if k in (CHILD, "both") else DESC)
        prev = n
    for n in path:
        for b, k in d.pred_edges(n):
            _copy_subtree(p, d, b, ren[n], k)
    p.root = ren[path[0]]
    p.out = ren[path[-1]]
    return p


def _copy_subtree(dst: Pattern, src: Pattern, sub_root: int, attach: int, axis: str) -> int:
    nid = dst.add_node(src.nodes[sub_root].label, src.nodes[sub_root].test)
    dst.add_edge(attach, nid, axis)
    for b, k in src.out_edges(sub_root):
        _copy_subtree(dst, src, b, nid, k)
    return nid


def singleton_pattern(label: str, pred_root: Pattern, pred_sub: int, axis: str) -> Pattern:
    """PATTERN(label[Q]): one node with a copy of the given predicate subtree."""
    p = Pattern()
    p.root = p.add_node(label)
    p.out = p.root
    _copy_subtree(p, pred_root, pred_sub, p.root, axis)
    return p


def lossless_prefixes(q: Pattern) -> list[Pattern]:
    """All output-demotions of ``q``, root-first; the last element is ``q``."""
    mb = main_branch(q)
    res = []
    for n in mb:
        p = q.clone()
        p.out = n
        # the former continuation now hangs as a predicate subtree
        res.append(p)
    return res


# ---------------------------------------------------------------------------
# textual form


def to_ast(p: Pattern) -> Path:
    """AST of a tree pattern (absolute path; root label is the doc name)."""
    mb = main_branch(p)
    steps = []
    for prev, cur in zip(mb, mb[1:]):
        steps.append(_step_of(p, prev, cur))
    return Path(p.label(p.root), tuple(steps))


def _step_of(p: Pattern, parent: int, n: int) -> Step:
    k = p.edges[(parent, n)]
    preds = tuple(_pred_of(p, b, kk) for b, kk in p.pred_edges(n))
    return Step(p.label(n), CHILD if k in (CHILD, "both") else DESC, preds)


def _pred_of(p: Pattern, sub_root: int, axis: str) -> Pred:
    # Render a predicate subtree: inline single-child chains as steps,
    # siblings as nested bracket predicates.
    steps: list[Step] = []
    cur = sub_root
    cur_axis = axis
    while True:
        kids = p.out_edges(cur)
        if p.test(cur) is not None or len(kids) != 1:
            preds = tuple(_pred_of(p, b, k) for b, k in kids)
            steps.append(Step(p.label(cur), cur_axis, preds))
            return Pred(tuple(steps), p.test(cur))
        steps.append(Step(p.label(cur), cur_axis, ()))
        (cur, cur_axis), = kids


def to_text(p) -> str:
    if p is EMPTY:
        return "EMPTY"
    return print_expr(to_ast(p))


def relative_ast(p: Pattern, n: int) -> tuple[tuple[Pred, ...], tuple[Step, ...]]:
    """xpath(SUB(p, n)) minus its leading label: the predicates of ``n``
    and the continuation steps below it (the compensation payload)."""
    if n not in p.mb_nodes():
        raise NotMainBranch(n)
    sub = subpattern_at(p, n)
    ast = to_ast(sub)
    head_preds = tuple(
        _pred_of(sub, b, k) for b, k in sub.pred_edges(sub.root)
    )
    return head_preds, ast.steps


def compensate_pattern(r: Pattern, p: Pattern, n: int) -> Pattern:
    """Append xpath(SUB(p, n)) minus its first label below OUT(r)."""
    preds, steps = relative_ast(p, n)
    res = r.clone()
    for pred in preds:
        _graft_pred(res, res.out, pred)
    res.out = _graft_steps(res, res.out, steps, True)
    return res


def compensate(r, p: Pattern, n: int):
    """Delete the first symbol of xpath(SUB(p, n)) and concatenate the rest
    to ``r``; works on tree patterns and on plan expressions alike."""
    if isinstance(r, Pattern):
        return compensate_pattern(r, p, n)
    return compensate_expr(r, p, n)


def compensate_expr(r: Expr, p: Pattern, n: int) -> Expr:
    """Compensation on plan expressions.

    For a path, the predicates of ``n`` and its continuation are appended
    to the last step.  For an intersection, only the continuation can be
    attached (the grammar has no predicate slot on a parenthesized
    intersection); the predicates of ``n`` are already carried by the
    per-branch compensations.
    """
    preds, steps = relative_ast(p, n)
    if isinstance(r, Path):
        last = r.steps[-1]
        new_last = Step(last.label, last.axis, last.preds + preds)
        return Path(r.doc, r.steps[:-1] + (new_last,) + steps)
    if not steps:
        return r
    return Compensated(r, steps)


# ---------------------------------------------------------------------------
# JSON form


def pattern_to_json(p) -> str:
    if p is EMPTY:
        return json.dumps({"empty": True})
    doc = {
        "nodes": [
            {"id": n, "label": p.nodes[n].label, "test": p.nodes[n].test}
            for n in sorted(p.nodes)
        ],
        "edges": [
            {"from": a, "to": b, "kind": k}
            for (a, b), k in sorted(p.edges.items())
        ],
        "root": p.root,
        "output": p.out,
    }
    return json.dumps(doc, indent=2)


def pattern_from_json(text: str):
    doc = json.loads(text)
    if doc.get("empty"):
        return EMPTY
    p = Pattern()
    for nd in doc["nodes"]:
        p.nodes[nd["id"]] = PNode(nd["label"], nd.get("test"))
        p._next = max(p._next, nd["id"] + 1)
    for ed in doc["edges"]:
        p.edges[(ed["from"], ed["to"])] = ed["kind"]
    p.root = doc["root"]
    p.out = doc["output"]
    p.validate()
    return p


# ---------------------------------------------------------------------------
# canonical keys (trees)


def canon_key(p: Pattern, n: Optional[int] = None):
    """Canonical signature of a tree pattern; equal keys iff isomorphic
    (respecting labels, tests, edge kinds and the output node)."""
    if n is None:
        n = p.root
    kids = tuple(
        sorted((k, canon_key(p, b)) for b, k in p.out_edges(n))
    )
    return (p.label(n), p.test(n), n == p.out, kids)
