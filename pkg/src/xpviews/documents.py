"""Unordered labeled XML trees, pattern evaluation, and view documents.

Evaluation follows embedding semantics: a tree pattern selects the set of
images of its output node under all embeddings.  Only elements and text
are supported; attributes and namespaces are rejected.
"""

from __future__ import annotations

import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .syntax import CHILD, DESC, Compensated, Expr, Intersect, Path, Pred, Step
from .pattern import EMPTY, Pattern, UnknownView, ViewSet


class UnsupportedXml(ValueError):
    """Input uses XML features outside the element+text subset."""


class XmlTree:
    """Rooted unordered tree with persistent integer node ids."""

    def __init__(self):
        self.labels: dict[int, str] = {}
        self.texts: dict[int, str] = {}
        self.children: dict[int, list[int]] = {}
        self.parent: dict[int, Optional[int]] = {}
        self.root: int = -1
        self._next = 0
        self._tin: Optional[dict[int, int]] = None
        self._tout: Optional[dict[int, int]] = None

    def add_node(self, label: str, parent: Optional[int], text: str = "") -> int:
        nid = self._next
        self._next += 1
        self.labels[nid] = label
        self.texts[nid] = text
        self.children[nid] = []
        self.parent[nid] = parent
        if parent is None:
            self.root = nid
        else:
            self.children[parent].append(nid)
        self._tin = None
        return nid

    def size(self) -> int:
        return len(self.labels)

    def _index(self) -> None:
        # Euler intervals for O(1) strict-descendant tests.
        tin: dict[int, int] = {}
        tout: dict[int, int] = {}
        clock = 0
        stack: list[tuple[int, bool]] = [(self.root, False)]
        while stack:
            n, done = stack.pop()
            if done:
                tout[n] = clock
                clock += 1
                continue
            tin[n] = clock
            clock += 1
            stack.append((n, True))
            for c in reversed(self.children[n]):
                stack.append((c, False))
        self._tin, self._tout = tin, tout

    def is_strict_descendant(self, d: int, a: int) -> bool:
        if self._tin is None:
            self._index()
        return d != a and self._tin[a] < self._tin[d] and self._tout[d] < self._tout[a]

    def descendants(self, n: int) -> list[int]:
        out = []
        stack = list(self.children[n])
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(self.children[x])
        return out

    def subtree_nodes(self, n: int) -> list[int]:
        return [n] + self.descendants(n)

    def depth(self, n: int) -> int:
        d = 0
        while self.parent[n] is not None:
            n = self.parent[n]
            d += 1
        return d


# ---------------------------------------------------------------------------
# XML text form (elements + text only)


def parse_xml(text: str) -> XmlTree:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise UnsupportedXml(f"malformed XML: {exc}") from None
    t = XmlTree()

    def walk(el: ET.Element, parent: Optional[int]) -> None:
        if el.attrib:
            raise UnsupportedXml(f"attributes are not supported (element {el.tag!r})")
        if "}" in el.tag:
            raise UnsupportedXml("namespaces are not supported")
        nid = t.add_node(el.tag, parent, (el.text or "").strip())
        for child in el:
            walk(child, nid)

    walk(root, None)
    return t


def print_xml(t: XmlTree, node: Optional[int] = None, indent: int = 0) -> str:
    n = t.root if node is None else node
    pad = "  " * indent
    label = t.labels[n]
    inner = t.texts[n]
    kids = t.children[n]
    if not kids and not inner:
        return f"{pad}<{label}/>"
    if not kids:
        return f"{pad}<{label}>{_escape(inner)}</{label}>"
    lines = [f"{pad}<{label}>" + (_escape(inner) if inner else "")]
    for c in kids:
        lines.append(print_xml(t, c, indent + 1))
    lines.append(f"{pad}</{label}>")
    return "\n".join(lines)


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# ---------------------------------------------------------------------------
# evaluation


def _node_ok(p: Pattern, pn: int, t: XmlTree, x: int) -> bool:
    if p.label(pn) != t.labels[x]:
        return False
    req = p.test(pn)
    return req is None or t.texts[x] == req


def _strict_ancestors(t: XmlTree, nodes: Iterable[int]) -> set[int]:
    seen: set[int] = set()
    for n in nodes:
        x = t.parent[n]
        while x is not None and x not in seen:
            seen.add(x)
            x = t.parent[x]
    return seen


def _label_index(t: XmlTree) -> dict[str, set[int]]:
    idx: dict[str, set[int]] = {}
    for n, lab in t.labels.items():
        idx.setdefault(lab, set()).add(n)
    return idx


def _candidate_sets(p: Pattern, t: XmlTree) -> Optional[dict[int, set[int]]]:
    """Bottom-up feasibility sets; exact for tree-shaped patterns."""
    order = p.topo_order()
    cand: dict[int, set[int]] = {}
    idx = _label_index(t)
    for pn in reversed(order):
        base = set(idx.get(p.label(pn), ()))
        req = p.test(pn)
        if req is not None:
            base = {x for x in base if t.texts[x] == req}
        for b, k in p.out_edges(pn):
            if not base:
                break
            sub = cand[b]
            if k == CHILD:
                base &= {t.parent[c] for c in sub if t.parent[c] is not None}
            else:
                base &= _strict_ancestors(t, sub)
        cand[pn] = base
        if not base:
            return None
    return cand


def eval_tree_pattern(p: Pattern, t: XmlTree) -> set[int]:
    """Output-node images over all embeddings of a tree pattern."""
    if p is EMPTY:
        return set()
    if not p.is_tree():
        return eval_dag_pattern(p, t)
    cand = _candidate_sets(p, t)
    if cand is None or t.root not in cand[p.root]:
        return set()
    # Top-down restriction to images reachable from the rooted embedding.
    reach: dict[int, set[int]] = {p.root: {t.root}}
    order = p.topo_order()
    for pn in order:
        if pn not in reach:
            continue
        here = reach[pn]
        for b, k in p.out_edges(pn):
            if k == CHILD:
                nxt = {c for x in here for c in t.children[x] if c in cand[b]}
            else:
                # candidates whose strict-ancestor chain meets `here`
                nxt = set()
                for d in cand[b]:
                    x = t.parent[d]
                    while x is not None:
                        if x in here:
                            nxt.add(d)
                            break
                        x = t.parent[x]
            reach.setdefault(b, set()).update(nxt)
    return reach.get(p.out, set())


def eval_dag_pattern(d, t: XmlTree) -> set[int]:
    """Embedding semantics extended to DAG patterns.

    Main-branch images all lie on one root path of ``t``; we fix the output
    image and search for a consistent assignment, using the tree-exact
    candidate sets for pruning.
    """
    if d is EMPTY:
        return set()
    cand = _candidate_sets(d, t)
    if cand is None or t.root not in cand[d.root]:
        return set()
    mbn = d.mb_nodes()
    order = [n for n in d.topo_order()]
    result = set()
    for out_img in sorted(cand[d.out]):
        path = set(_root_path(t, out_img))
        assign: dict[int, int] = {}

        def ok(pn: int, x: int) -> bool:
            for a, k in d.in_edges(pn):
                if a in assign:
                    if k == CHILD and t.parent[x] != assign[a]:
                        return False
                    if k == DESC and not t.is_strict_descendant(x, assign[a]):
                        return False
            return True

        def search(i: int) -> bool:
            if i == len(order):
                return True
            pn = order[i]
            pool = cand[pn]
            if pn in mbn:
                pool = pool & path
            if pn == d.out:
                pool = pool & {out_img}
            if pn == d.root:
                pool = pool & {t.root}
            for x in sorted(pool):
                if ok(pn, x):
                    assign[pn] = x
                    if search(i + 1):
                        return True
                    del assign[pn]
            return False

        if search(0):
            result.add(out_img)
    return result


def _root_path(t: XmlTree, n: int) -> list[int]:
    path = [n]
    while t.parent[path[-1]] is not None:
        path.append(t.parent[path[-1]])
    return path


# ---------------------------------------------------------------------------
# view documents and plan evaluation


@dataclass
class ViewDocument:
    """Materialized view: answer subtrees copied under a root named after
    the view, with a copy-to-original id map."""

    name: str
    tree: XmlTree
    originals: dict[int, int]
    answer_roots: list[int] = field(default_factory=list)


def materialize_view(v: Pattern, name: str, t: XmlTree) -> ViewDocument:
    answers = sorted(eval_tree_pattern(v, t))
    vt = XmlTree()
    root = vt.add_node(name, None)
    originals: dict[int, int] = {}
    roots = []

    def copy(n: int, parent: int) -> int:
        nid = vt.add_node(t.labels[n], parent, t.texts[n])
        originals[nid] = n
        for c in t.children[n]:
            copy(c, nid)
        return nid

    for a in answers:
        roots.append(copy(a, root))
    return ViewDocument(name, vt, originals, roots)


def materialize_all(views: ViewSet, t: XmlTree) -> dict[str, ViewDocument]:
    return {name: materialize_view(v, name, t) for name, v in views.items()}


ORIGID_LABEL = "__origid"


def view_document_to_xml(vd: ViewDocument) -> str:
    """Serialize a view document; each answer root carries a reserved
    ``__origid`` marker element holding its original node id."""
    marked = XmlTree()

    def copy(n: int, parent: Optional[int]) -> int:
        nid = marked.add_node(vd.tree.labels[n], parent, vd.tree.texts[n])
        if n in vd.answer_roots:
            marked.add_node(ORIGID_LABEL, nid, str(vd.originals[n]))
        for c in vd.tree.children[n]:
            copy(c, nid)
        return nid

    copy(vd.tree.root, None)
    return print_xml(marked)


def view_document_from_xml(text: str, base: XmlTree) -> ViewDocument:
    """Rebuild a view document; originals of inner copies are recovered by
    walking the base document from each marked answer root (copies preserve
    child order)."""
    marked = parse_xml(text)
    vt = XmlTree()
    originals: dict[int, int] = {}
    answer_roots: list[int] = []

    def walk(n: int, parent: Optional[int], orig: Optional[int]) -> None:
        nid = vt.add_node(marked.labels[n], parent, marked.texts[n])
        kids = list(marked.children[n])
        if parent == vt.root:
            markers = [c for c in kids if marked.labels[c] == ORIGID_LABEL]
            if len(markers) != 1:
                raise UnsupportedXml("answer root lacks its __origid marker")
            orig = int(marked.texts[markers[0]])
            kids = [c for c in kids if c not in markers]
            answer_roots.append(nid)
        if orig is not None:
            originals[nid] = orig
            base_kids = base.children[orig]
            if len(base_kids) != len(kids):
                raise UnsupportedXml("view copy does not match the base document")
            for c, bc in zip(kids, base_kids):
                walk(c, nid, bc)
        else:
            for c in kids:
                walk(c, nid, None)

    root = vt.add_node(marked.labels[marked.root], None)
    for c in marked.children[marked.root]:
        walk(c, root, None)
    return ViewDocument(marked.labels[marked.root], vt, originals, answer_roots)


def _pred_holds(doc: XmlTree, x: int, pred: Pred) -> bool:
    cur = {x}
    for i, step in enumerate(pred.steps):
        nxt = set()
        for y in cur:
            pool = doc.children[y] if step.axis == CHILD else doc.descendants(y)
            for c in pool:
                if doc.labels[c] != step.label:
                    continue
                if all(_pred_holds(doc, c, sp) for sp in step.preds):
                    nxt.add(c)
        cur = nxt
        if not cur:
            return False
    if pred.const is not None:
        return any(doc.texts[y] == pred.const for y in cur)
    return True


def _navigate(doc: XmlTree, starts: Iterable[int], steps: tuple[Step, ...]) -> set[int]:
    cur = set(starts)
    for step in steps:
        nxt = set()
        for y in cur:
            pool = doc.children[y] if step.axis == CHILD else doc.descendants(y)
            for c in pool:
                if doc.labels[c] == step.label and all(
                    _pred_holds(doc, c, sp) for sp in step.preds
                ):
                    nxt.add(c)
        cur = nxt
    return cur


def eval_plan(plan: Expr, docs: dict[str, ViewDocument]) -> set[int]:
    """Evaluate a rewrite plan over view documents.

    Intersections intersect *original* node ids; navigation proceeds inside
    whichever view document holds a copy of the current node.  The result
    is a set of original ids in the base document.
    """
    reps = _eval_plan_reps(plan, docs)
    return set(reps)


def _eval_plan_reps(plan: Expr, docs: dict[str, ViewDocument]) -> dict[int, tuple[str, int]]:
    if isinstance(plan, Path):
        if plan.doc not in docs:
            raise UnknownView(plan.doc)
        vd = docs[plan.doc]
        head = plan.steps[0]
        if head.label != vd.name:
            raise UnknownView(f"plan head {head.label!r} does not match view {vd.name!r}")
        starts = [
            a
            for a in vd.answer_roots
            if all(_pred_holds(vd.tree, a, sp) for sp in head.preds)
        ]
        hits = _navigate(vd.tree, starts, plan.steps[1:])
        return {vd.originals[h]: (vd.name, h) for h in hits}
    if isinstance(plan, Intersect):
        parts = [_eval_plan_reps(b, docs) for b in plan.branches]
        common = set(parts[0])
        for part in parts[1:]:
            common &= set(part)
        return {orig: parts[0][orig] for orig in common}
    if isinstance(plan, Compensated):
        base = _eval_plan_reps(plan.base, docs)
        out: dict[int, tuple[str, int]] = {}
        for orig, (name, copy_id) in base.items():
            vd = docs[name]
            for h in _navigate(vd.tree, [copy_id], plan.steps):
                out[vd.originals[h]] = (name, h)
        return out
    raise TypeError(type(plan))


# ---------------------------------------------------------------------------
# canonical models


def canonical_model(p: Pattern, z: str = "zz_fresh") -> XmlTree:
    """Tree obtained from ``p`` by expanding each //-edge into /z/ steps."""
    tree, _ = canonical_model_with_output(p, z)
    return tree


def canonical_model_with_output(p: Pattern, z: str = "zz_fresh") -> tuple[XmlTree, int]:
    t = XmlTree()
    images: dict[int, int] = {}
    order = p.topo_order()
    images[p.root] = t.add_node(p.label(p.root), None, p.test(p.root) or "")
    for n in order:
        for b, k in p.out_edges(n):
            at = images[n]
            if k == DESC:
                at = t.add_node(z, at)
            images[b] = t.add_node(p.label(b), at, p.test(b) or "")
    return t, images[p.out]


# ---------------------------------------------------------------------------
# random document generation


@dataclass
class TreeGenConfig:
    depth: int = 6
    fanout: int = 3
    labels: tuple[str, ...] = ("a", "b", "c", "d", "e")
    seed: int = 0
    text_values: tuple[str, ...] = ("", "", "x", "y")
    root_label: str = "L"


def generate_tree(cfg: TreeGenConfig) -> XmlTree:
    """Seed-deterministic random document."""
    rng = random.Random(cfg.seed)
    t = XmlTree()
    root = t.add_node(cfg.root_label, None)
    frontier = [(root, 0)]
    while frontier:
        n, d = frontier.pop()
        if d >= cfg.depth:
            continue
        for _ in range(rng.randint(1, cfg.fanout)):
            c = t.add_node(
                rng.choice(cfg.labels), n, rng.choice(cfg.text_values)
            )
            frontier.append((c, d + 1))
    return t
