"""Tree metrics against exhaustive and hand-computed oracles."""

import numpy as np
import pytest

from mvg.trees import (ParseTree, TreeError, labeled_f1, parse_brackets,
                       pos_accuracy, pos_seq_edit_distance, st_score,
                       strip_tokens, tree_edit_distance)


# ---------------------------------------------------------------------------
# oracles

def ted_oracle(f1, f2):
    """Forest edit distance by direct recursion over the edit choices for
    the rightmost roots: delete / insert / match. Enumerates every edit
    script; no DP, no keyroots."""
    if not f1 and not f2:
        return 0
    if not f1:
        return sum(1 + ted_oracle((), tuple(t.children)) for t in f2)
    if not f2:
        return sum(1 + ted_oracle(tuple(t.children), ()) for t in f1)
    v, w = f1[-1], f2[-1]
    best = ted_oracle(f1[:-1] + tuple(v.children), f2) + 1
    best = min(best, ted_oracle(f1, f2[:-1] + tuple(w.children)) + 1)
    best = min(best, ted_oracle(f1[:-1], f2[:-1])
               + ted_oracle(tuple(v.children), tuple(w.children))
               + (v.label != w.label))
    return best


def all_trees(n, labels):
    """Every ordered labeled tree with exactly n nodes."""
    if n == 0:
        return []
    out = []
    for label in labels:
        for kids in all_forests(n - 1, labels):
            out.append(ParseTree(label, list(kids)))
    return out


def all_forests(n, labels):
    if n == 0:
        return [()]
    out = []
    for first in range(1, n + 1):
        for t in all_trees(first, labels):
            for rest in all_forests(n - first, labels):
                out.append((t,) + rest)
    return out


def random_tree(rng, max_depth=4, labels="ABCDE"):
    label = labels[rng.integers(0, len(labels))]
    if max_depth == 0 or rng.random() < 0.35:
        return ParseTree(label)
    kids = [random_tree(rng, max_depth - 1, labels)
            for _ in range(rng.integers(1, 4))]
    return ParseTree(label, kids)


# ---------------------------------------------------------------------------
# parsing

class TestParseBrackets:
    def test_simple(self):
        t = parse_brackets("(S (N dog))")
        assert t.label == "S"
        assert t.leaves() == ["dog"]
        assert t.size() == 2  # S and N; the token is not a node

    def test_unbalanced_reports_offset(self):
        # the outer bracket (offset 0) is the one left open
        with pytest.raises(TreeError, match="offset 0"):
            parse_brackets("(S (N dog)")

    def test_empty_label(self):
        with pytest.raises(TreeError, match="empty label"):
            parse_brackets("(S (( dog))")

    def test_trailing_content(self):
        with pytest.raises(TreeError, match="trailing"):
            parse_brackets("(S (N dog)) extra")

    def test_roundtrip_bank(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            t = random_tree(rng)
            text = t.to_bracketed()
            assert parse_brackets(text).to_bracketed() == text

    def test_pos_and_yield(self):
        t = parse_brackets("(S (NP (D the) (N dog)) (VP (V ran)))")
        assert t.leaves() == ["the", "dog", "ran"]
        assert t.preterminal_labels() == ["D", "N", "V"]


# ---------------------------------------------------------------------------
# tree edit distance

class TestTreeEditDistance:
    def test_identical_zero(self):
        t = strip_tokens(parse_brackets("(S (NP (D a) (N b)) (VP (V c)))"))
        assert tree_edit_distance(t, t) == 0

    def test_single_deletion(self):
        a = parse_brackets("(S (NP x) (VP y))")
        b = parse_brackets("(S (NP x))")
        assert tree_edit_distance(strip_tokens(a), strip_tokens(b)) == 1

    def test_exhaustive_small_trees(self):
        trees = []
        for n in range(1, 5):
            trees.extend(all_trees(n, "AB"))
        assert len(trees) == 102
        # sample the full cross product deterministically but densely
        for i, t1 in enumerate(trees):
            for j in range(i % 3, len(trees), 3):
                t2 = trees[j]
                got = tree_edit_distance(t1, t2)
                want = ted_oracle((t1,), (t2,))
                assert got == want, (t1, t2, got, want)

    def test_exhaustive_full_cross_product_three_nodes(self):
        trees = []
        for n in range(1, 4):
            trees.extend(all_trees(n, "AB"))
        for t1 in trees:
            for t2 in trees:
                assert tree_edit_distance(t1, t2) == ted_oracle((t1,), (t2,))

    def test_metric_axioms_random(self):
        rng = np.random.default_rng(1)
        pairs = [(random_tree(rng, 3), random_tree(rng, 3))
                 for _ in range(1000)]
        for a, b in pairs:
            dab = tree_edit_distance(a, b)
            assert dab == tree_edit_distance(b, a)
            assert dab >= 0
            assert (dab == 0) == (a.to_bracketed() == b.to_bracketed())
        for k in range(0, 998, 3):
            a, b = pairs[k]
            c = pairs[k + 1][0]
            assert tree_edit_distance(a, c) <= \
                tree_edit_distance(a, b) + tree_edit_distance(b, c)


class TestStScore:
    def test_self_is_zero(self):
        trees = [parse_brackets("(S (NP (D a) (N b)) (VP (V c)))"),
                 parse_brackets("(S (VP (V run)))")]
        assert st_score(trees, trees) == 0.0

    def test_single_pair(self):
        a = [parse_brackets("(S (NP x) (VP y))")]
        b = [parse_brackets("(S (NP x))")]
        assert st_score(a, b) == 1.0

    def test_hand_mean_three_pairs(self):
        hyp = [parse_brackets("(S (NP x) (VP y))"),
               parse_brackets("(S (NP x))"),
               parse_brackets("(S (A x) (B y) (C z))")]
        ref = [parse_brackets("(S (NP x) (VP y))"),
               parse_brackets("(S (VP x))"),
               parse_brackets("(S (A x))")]
        per_pair = [tree_edit_distance(strip_tokens(h), strip_tokens(r))
                    for h, r in zip(hyp, ref)]
        assert per_pair == [0, 1, 2]
        assert st_score(hyp, ref) == pytest.approx(1.0)

    def test_length_mismatch(self):
        t = [parse_brackets("(S (N x))")]
        with pytest.raises(TreeError):
            st_score(t, t + t)


class TestLabeledF1:
    def test_identical(self):
        t = parse_brackets("(S (NP (D a) (N b)) (VP (V c) (NP (N d))))")
        assert labeled_f1(t, t) == 1.0

    def test_disjoint_labels(self):
        a = parse_brackets("(S (NP (D a) (N b)) (VP (V c) (N d)))")
        b = parse_brackets("(T (XP (D a) (N b)) (YP (V c) (N d)))")
        assert labeled_f1(a, b) == 0.0

    def test_two_of_three_shared(self):
        a = parse_brackets("(S (NP (D a) (N b)) (VP (V c) (N d)))")
        b = parse_brackets("(S (NP (D a) (N b)) (XP (V c) (N d)))")
        # spans: {S(0,4), NP(0,2), VP/XP(2,4)} -> 2 of 3 shared
        assert labeled_f1(a, b) == pytest.approx(2 / 3)

    def test_symmetry(self):
        a = parse_brackets("(S (NP (D a) (N b)) (VP (V c) (N d)))")
        b = parse_brackets("(S (Q (D a) (N b) (V c)) (R (N d)))")
        assert labeled_f1(a, b) == labeled_f1(b, a)

    def test_yield_mismatch(self):
        a = parse_brackets("(S (N x))")
        b = parse_brackets("(S (N x) (N y))")
        with pytest.raises(TreeError):
            labeled_f1(a, b)

    def test_single_word_root_excluded(self):
        a = parse_brackets("(S (N dog))")
        b = parse_brackets("(S (N cat))")
        assert labeled_f1(a, b) == 1.0  # no countable spans on either side


class TestPosMetrics:
    def test_accuracy_identical(self):
        assert pos_accuracy(list("DNVR"), list("DNVR")) == 1.0

    def test_accuracy_one_of_four(self):
        assert pos_accuracy(list("DNVR"), list("DNVX")) == 0.75

    def test_accuracy_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 12))
            a = [str(x) for x in rng.integers(0, 4, n)]
            b = [str(x) for x in rng.integers(0, 4, n)]
            naive = sum(1 for x, y in zip(a, b) if x == y) / n
            assert pos_accuracy(a, b) == naive

    def test_edit_distance_trivial(self):
        assert pos_seq_edit_distance(list("DNV"), list("DNV")) == 0
        assert pos_seq_edit_distance(list("DNV"), list("DNVR")) == 1

    def test_edit_distance_recursion_oracle(self):
        from .test_kernels import lev_oracle
        rng = np.random.default_rng(3)
        for _ in range(150):
            a = [str(x) for x in rng.integers(0, 3, rng.integers(0, 7))]
            b = [str(x) for x in rng.integers(0, 3, rng.integers(0, 7))]
            assert pos_seq_edit_distance(a, b) == lev_oracle(a, b)

    def test_bounded_by_max_length(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            a = [str(x) for x in rng.integers(0, 3, rng.integers(0, 9))]
            b = [str(x) for x in rng.integers(0, 3, rng.integers(0, 9))]
            assert pos_seq_edit_distance(a, b) <= max(len(a), len(b))
