"""Checks of the measurement-design conditions that make (G, Q) identifiable."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .model import CapacityError, DENSE_CAP, as_qmatrix, eta_table


@dataclass
class IdentReport:
    strict_two_identity: bool
    generic_block_condition: bool
    subset_condition: bool
    no_all_zero_column_overall: bool
    witnesses: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "strict_two_identity": self.strict_two_identity,
            "generic_block_condition": self.generic_block_condition,
            "subset_condition": self.subset_condition,
            "no_all_zero_column_overall": self.no_all_zero_column_overall,
            "witnesses": self.witnesses,
        }


def strict_condition(q):
    """Each unit row e_k must appear at least twice.

    Returns ``(ok, witness)``. On success the witness is a list of two row
    index tuples, the first and second identity blocks (block[k] is the row
    equal to e_k). On failure it is the list of columns with fewer than two
    anchor rows.
    """
    q = as_qmatrix(q)
    j, k = q.shape
    anchors = {c: [] for c in range(k)}
    for r in range(j):
        if q[r].sum() == 1:
            anchors[int(np.argmax(q[r]))].append(r)
    short = [c for c in range(k) if len(anchors[c]) < 2]
    if short:
        return False, short
    return True, [tuple(anchors[c][0] for c in range(k)), tuple(anchors[c][1] for c in range(k))]


def _capacity_matching(q, rows, k):
    """Assign two rows to every column through q-ones; None if impossible.

    Augmenting paths, columns visited in ascending order and candidate rows in
    ascending order, so the result is deterministic.
    """
    owner = {}  # row -> column
    slots = {c: [] for c in range(k)}

    def augment(c, seen):
        for r in rows:
            if not q[r, c] or r in seen:
                continue
            seen.add(r)
            if r not in owner:
                owner[r] = c
                slots[c].append(r)
                return True
            c2 = owner[r]
            if augment(c2, seen):
                slots[c2].remove(r)
                owner[r] = c
                slots[c].append(r)
                return True
        return False

    for c in range(k):
        for _ in range(2):
            if not augment(c, set()):
                return None
    return {c: tuple(sorted(v)) for c, v in slots.items()}


def generic_block_condition(q):
    """Two unit-diagonal K x K blocks plus a remainder with no all-zero column.

    Returns ``(ok, witness)``: on success ``{"assignment": {col: (r1, r2)},
    "cover": {col: row}}``; on failure the uncovered / unmatched columns.
    """
    q = as_qmatrix(q)
    j, k = q.shape
    zero_cols = [c for c in range(k) if not q[:, c].any()]
    if zero_cols or j < 2 * k:
        return False, {"columns": zero_cols or list(range(k))}
    rows = list(range(j))

    def attempt(reserved):
        free = [r for r in rows if r not in reserved]
        m = _capacity_matching(q, free, k)
        if m is None:
            return None
        used = {r for pair in m.values() for r in pair}
        cover = {}
        for c in range(k):
            cand = [r for r in rows if r not in used and q[r, c]]
            if not cand:
                return None
            cover[c] = cand[0]
        return {"assignment": m, "cover": cover}

    out = attempt(set())
    if out is not None:
        return True, out
    if _capacity_matching(q, rows, k) is None:
        return False, {"columns": "no two-to-one assignment"}

    # reserve one covering row per column, searched depth first
    def search(c, reserved):
        if c == k:
            return attempt(reserved)
        if any(q[r, c] for r in reserved):
            return search(c + 1, reserved)
        for r in rows:
            if q[r, c] and r not in reserved:
                res = search(c + 1, reserved | {r})
                if res is not None:
                    return res
        return None

    out = search(0, frozenset())
    if out is None:
        return False, {"columns": "remainder cannot cover every column"}
    return True, out


def subset_condition(q):
    """No column dominates another entrywise. Returns ``(ok, pair)``, pair 1-based."""
    q = as_qmatrix(q)
    k = q.shape[1]
    for a, b in itertools.combinations(range(k), 2):
        if np.all(q[:, a] >= q[:, b]) or np.all(q[:, b] >= q[:, a]):
            return False, (a + 1, b + 1)
    return True, None


def eta_separation_condition(params, q, cap: int = DENSE_CAP):
    """Every pair of latent states is separated by some non-anchor item.

    Returns ``(ok, pair)`` where ``pair`` is a violating pair of state codes.
    """
    q = as_qmatrix(q)
    if params.k > cap:
        raise CapacityError(f"K={params.k} exceeds the dense cap {cap}")
    ok, blocks = strict_condition(q)
    anchors = set(blocks[0]) | set(blocks[1]) if ok else set()
    rest = [r for r in range(q.shape[0]) if r not in anchors]
    if not rest:
        return False, (0, 1)
    eta = eta_table(params.b[rest])
    _, first, inverse = np.unique(np.round(eta, 12), axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for code in range(eta.shape[0]):
        if first[inverse[code]] != code:
            return False, (int(first[inverse[code]]), code)
    return True, None


def check_q(q) -> IdentReport:
    q = as_qmatrix(q)
    s_ok, s_w = strict_condition(q)
    g_ok, g_w = generic_block_condition(q)
    sub_ok, sub_w = subset_condition(q)
    zero = [c for c in range(q.shape[1]) if not q[:, c].any()]
    return IdentReport(
        strict_two_identity=s_ok,
        generic_block_condition=g_ok,
        subset_condition=sub_ok,
        no_all_zero_column_overall=not zero,
        witnesses={
            "strict": [list(b) for b in s_w] if s_ok else {"columns_lacking_two_anchors": s_w},
            "generic": ({"assignment": {str(c): list(v) for c, v in g_w["assignment"].items()},
                         "cover": {str(c): r for c, r in g_w["cover"].items()}} if g_ok else g_w),
            "subset": None if sub_ok else list(sub_w),
            "zero_columns": zero,
        },
    )
