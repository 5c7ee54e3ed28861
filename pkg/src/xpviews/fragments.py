"""Fragment classification: extended skeletons and the //-predicate relaxation.

A //-subpredicate of a main-branch node n is a predicate subtree hanging by
a //-edge off a /-path that starts at n.  Extended skeletons require, for
every such subtree of every non-output main-branch node, that its incoming
/-path and the /-path following n on the main branch have no mapping in
either direction (the empty path maps into everything).
"""

from __future__ import annotations

from enum import Enum
from typing import Iterator

from .syntax import CHILD, DESC
from .pattern import EMPTY, Pattern


class FragmentClass(Enum):
    EXTENDED_SKELETON = "es"
    SLASH_SLASH = "xp//"
    FULL = "xp"


def codes_map(a: tuple[str, ...], b: tuple[str, ...]) -> bool:
    """Whether the /-path code ``a`` maps into ``b`` (substring relation;
    the empty code maps into anything)."""
    if not a:
        return True
    n, m = len(a), len(b)
    return any(b[i : i + n] == a for i in range(m - n + 1))


def codes_incompatible(a: tuple[str, ...], b: tuple[str, ...]) -> bool:
    return not codes_map(a, b) and not codes_map(b, a)


def slash_path_below(d: Pattern, n: int) -> tuple[str, ...]:
    """Labels of the /-path following ``n`` on the main branch."""
    labels = []
    cur = n
    while True:
        nxt = [b for b, k in d.mb_out_edges(cur) if k == CHILD]
        if len(nxt) != 1:
            break
        cur = nxt[0]
        labels.append(d.label(cur))
    return tuple(labels)


def _dd_subpredicates(
    d: Pattern, n: int, start: int, prefix: tuple[str, ...]
) -> Iterator[tuple[tuple[str, ...], int, bool]]:
    """(incoming /-path code, subtree root, attached-directly-to-n) for every
    //-subpredicate reachable from ``start`` through predicate /-edges."""
    for b, k in d.out_edges(start) if start != n else d.pred_edges(n):
        if k == DESC:
            yield prefix, b, start == n
        else:
            yield from _dd_subpredicates(d, n, b, prefix + (d.label(b),))


def iter_dd_subpredicates(d: Pattern, n: int):
    yield from _dd_subpredicates(d, n, n, ())


def violating_subpredicates(d: Pattern, n: int) -> list[tuple[int, bool]]:
    """//-subpredicates of ``n`` breaking the extended-skeleton condition.

    Returns (subtree root, hangs-directly-off-main-branch) pairs.
    """
    follow = slash_path_below(d, n)
    out = []
    for incoming, sub, direct in iter_dd_subpredicates(d, n):
        if not codes_incompatible(incoming, follow):
            out.append((sub, direct))
    return out


def classify(p: Pattern) -> FragmentClass:
    """ES when no violations; XP_// when violations are only whole
    predicates hung directly off the main branch by //-edges; else full XP."""
    only_direct = True
    clean = True
    for n in sorted(p.mb_nodes()):
        if n == p.out:
            continue  # output predicates are unrestricted
        for sub, direct in violating_subpredicates(p, n):
            clean = False
            if not direct:
                only_direct = False
    if clean:
        return FragmentClass.EXTENDED_SKELETON
    if only_direct:
        return FragmentClass.SLASH_SLASH
    return FragmentClass.FULL


def extended_skeleton(p: Pattern) -> Pattern:
    """Prune every //-subpredicate violating the ES condition (idempotent)."""
    if p is EMPTY:
        return EMPTY
    cur = p
    while True:
        doomed: set[int] = set()
        for n in sorted(cur.mb_nodes()):
            if n == cur.out:
                continue
            for sub, _ in violating_subpredicates(cur, n):
                doomed.add(sub)
        if not doomed:
            return cur
        nxt = cur.clone()
        dead = set()
        for s in doomed:
            dead |= cur.descendants(s) | {s}
        nxt.remove_nodes(dead)
        cur = nxt


def added_pred_keeps_es(d: Pattern, n: int, q_owner: int, q_root: int) -> bool:
    """Would attaching a copy of predicate ``q_root`` (of node ``q_owner``)
    below ``n`` by a /-edge satisfy the ES condition at ``n``?"""
    if n == d.out:
        return True
    follow = slash_path_below(d, n)

    def walk(x: int, prefix: tuple[str, ...]) -> bool:
        for b, k in d.out_edges(x):
            if k == DESC:
                if not codes_incompatible(prefix, follow):
                    return False
            else:
                if not walk(b, prefix + (d.label(b),)):
                    return False
        return True

    return walk(q_root, (d.label(q_root),))


def root_token_code(p: Pattern) -> tuple[str, ...]:
    from .pattern import tokens

    return tokens(p)[0].labels(p)


def are_akin(ps: list[Pattern]) -> bool:
    """Tree patterns whose root tokens share one main-branch code."""
    codes = {root_token_code(p) for p in ps}
    return len(codes) <= 1
