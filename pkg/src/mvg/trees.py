"""Bracketed parse trees and the syntactic metrics built on them: ordered
tree edit distance (Zhang-Shasha, unit costs), labeled span F1, and POS
sequence utilities.
"""

import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _core


class TreeError(ValueError):
    pass


class ParseTree:
    """Labeled ordered tree; childless nodes are tokens, nodes whose
    children are all tokens are preterminals (POS over a word)."""

    __slots__ = ("label", "children")

    def __init__(self, label, children=()):
        if not label:
            raise TreeError("empty node label")
        self.label = label
        self.children = list(children)

    def is_leaf(self):
        return not self.children

    def is_preterminal(self):
        return bool(self.children) and all(c.is_leaf() for c in self.children)

    def leaves(self):
        if self.is_leaf():
            return [self.label]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def preterminal_labels(self):
        """POS sequence: preterminal labels in yield order."""
        if self.is_leaf():
            return []
        if self.is_preterminal():
            return [self.label] * len(self.children)
        out = []
        for c in self.children:
            out.extend(c.preterminal_labels())
        return out

    def size(self):
        """Node count, tokens excluded."""
        if self.is_leaf():
            return 0
        return 1 + sum(c.size() for c in self.children)

    def to_bracketed(self):
        if self.is_leaf():
            return self.label
        inner = " ".join(c.to_bracketed() for c in self.children)
        return f"({self.label} {inner})"

    def __eq__(self, other):
        return (isinstance(other, ParseTree) and self.label == other.label
                and self.children == other.children)

    def __repr__(self):
        return f"ParseTree({self.to_bracketed()!r})"


def parse_brackets(text):
    """Read one PTB-style bracketed tree; errors carry a character offset."""
    pos = 0
    n = len(text)

    def skip_ws():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def read_atom():
        nonlocal pos
        start = pos
        while pos < n and not text[pos].isspace() and text[pos] not in "()":
            pos += 1
        return text[start:pos]

    def read_node():
        nonlocal pos
        skip_ws()
        if pos >= n:
            raise TreeError(f"unexpected end of input at offset {pos}")
        if text[pos] != "(":
            tok = read_atom()
            if not tok:
                raise TreeError(f"expected token or '(' at offset {pos}")
            return ParseTree(tok)
        open_at = pos
        pos += 1
        skip_ws()
        label = read_atom()
        if not label:
            raise TreeError(f"empty label in bracket opened at offset {open_at}")
        children = []
        while True:
            skip_ws()
            if pos >= n:
                raise TreeError(
                    f"unbalanced bracket opened at offset {open_at}")
            if text[pos] == ")":
                pos += 1
                if not children:
                    raise TreeError(
                        f"bracket at offset {open_at} has no children")
                return ParseTree(label, children)
            children.append(read_node())

    root = read_node()
    skip_ws()
    if pos != n:
        raise TreeError(f"trailing content at offset {pos}")
    return root


def strip_tokens(tree):
    """Drop token leaves so preterminal POS nodes become the leaves; this is
    the preparation step for tree edit distance."""
    if tree.is_leaf():
        raise TreeError("cannot strip a bare token")
    kept = [strip_tokens(c) for c in tree.children if not c.is_leaf()]
    return ParseTree(tree.label, kept)


def _annotate(tree, code_of):
    """Postorder arrays for Zhang-Shasha: (lmds, keyroots, label codes)."""
    labels, lmds = [], []

    def walk(node):
        child_idx = [walk(c) for c in node.children]
        idx = len(labels)
        labels.append(code_of(node.label))
        lmds.append(lmds[child_idx[0]] if child_idx else idx)
        return idx

    walk(tree)
    last_for_lmd = {}
    for i, l in enumerate(lmds):
        last_for_lmd[l] = i
    keyroots = sorted(last_for_lmd.values())
    return (np.array(lmds, dtype=np.int32),
            np.array(keyroots, dtype=np.int32),
            np.array(labels, dtype=np.int32))


def tree_edit_distance(t1, t2):
    """Ordered tree edit distance with unit insert/delete/relabel costs.

    Operates on the trees as given; strip token leaves first (see
    strip_tokens) when scoring parses.
    """
    codes = {}

    def code_of(label):
        return codes.setdefault(label, len(codes))

    lmd1, kr1, lab1 = _annotate(t1, code_of)
    lmd2, kr2, lab2 = _annotate(t2, code_of)
    return _core.tree_edit_distance(lmd1, kr1, lab1, lmd2, kr2, lab2)


def _max_threads():
    raw = os.environ.get("MVG_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def st_score(hyp_trees, tgt_trees):
    """Mean tree edit distance between aligned parsed lists (lower is
    better). Trees are prepared by stripping token leaves."""
    if len(hyp_trees) != len(tgt_trees):
        raise TreeError("st_score needs equal-length tree lists")
    if not hyp_trees:
        raise TreeError("st_score needs at least one pair")
    prepared = [(strip_tokens(h), strip_tokens(t))
                for h, t in zip(hyp_trees, tgt_trees)]
    workers = _max_threads()
    if workers > 1 and len(prepared) > 8:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            dists = list(ex.map(lambda p: tree_edit_distance(*p), prepared))
    else:
        dists = [tree_edit_distance(h, t) for h, t in prepared]
    return float(np.mean(dists))


def labeled_spans(tree):
    """Multiset of (label, start, end) for non-preterminal internal nodes;
    a width-1 root span (single-word sentence) is dropped."""
    spans = Counter()

    def walk(node, i):
        if node.is_leaf():
            return i + 1
        j = i
        for c in node.children:
            j = walk(c, j)
        if not node.is_preterminal():
            spans[(node.label, i, j)] += 1
        return j

    total = walk(tree, 0)
    if total == 1:
        spans.pop((tree.label, 0, 1), None)
    return spans


def labeled_f1(t1, t2):
    """F1 over labeled constituent spans, preterminals excluded."""
    y1, y2 = t1.leaves(), t2.leaves()
    if len(y1) != len(y2):
        raise TreeError("labeled_f1 needs equal-length yields")
    s1, s2 = labeled_spans(t1), labeled_spans(t2)
    n1, n2 = sum(s1.values()), sum(s2.values())
    if n1 == 0 and n2 == 0:
        return 1.0
    if n1 == 0 or n2 == 0:
        return 0.0
    match = sum(min(c, s2[k]) for k, c in s1.items())
    precision = match / n1
    recall = match / n2
    if match == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def pos_accuracy(p1, p2):
    """Positionwise label match rate between equal-length POS sequences."""
    if len(p1) != len(p2):
        raise TreeError("pos_accuracy needs equal-length sequences")
    if not p1:
        raise TreeError("pos_accuracy needs non-empty sequences")
    return sum(a == b for a, b in zip(p1, p2)) / len(p1)


def pos_seq_edit_distance(p1, p2):
    """Levenshtein distance over POS labels, unit costs."""
    codes = {}

    def code_of(label):
        return codes.setdefault(label, len(codes))

    a = np.array([code_of(x) for x in p1], dtype=np.int32)
    b = np.array([code_of(x) for x in p2], dtype=np.int32)
    return _core.levenshtein(a, b)
