"""String-overlap metrics, correlation, and the disentanglement probes.

The probes score both latent variables on the same task and report the gap:
semantic probes orient the gap as sem - syn, syntactic probes as syn - sem.
Each probe carries Oracle (per-query best candidate) and Random (mean of 10
seeded draws) baselines.
"""

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .control import cosine_matrix, encode_pool
from .trees import labeled_f1, pos_accuracy


class MetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# n-gram metrics

def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _chars(tokens):
    return [ch for tok in tokens for ch in tok]


def bleu(hypotheses, references, mode="word"):
    """Corpus BLEU in [0, 100]: geometric mean of 1..4-gram modified
    precisions times the brevity penalty. Zero counts for n >= 2 get
    add-one smoothing (short desk-scale outputs would otherwise hit hard
    zeros). Char mode splits every token into characters first."""
    if mode not in ("word", "char"):
        raise MetricError(f"unknown bleu mode: {mode!r}")
    if not hypotheses or len(hypotheses) != len(references):
        raise MetricError("need equal-length non-empty hypothesis/reference "
                          "lists")
    if mode == "char":
        hypotheses = [_chars(h) for h in hypotheses]
        references = [_chars(r) for r in references]
    matches = [0] * 4
    totals = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            hc = _ngrams(hyp, n)
            rc = _ngrams(ref, n)
            totals[n - 1] += sum(hc.values())
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
    log_p = 0.0
    for n in range(1, 5):
        m, t = matches[n - 1], totals[n - 1]
        if m == 0 and n >= 2:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_p += math.log(m / t)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return 100.0 * bp * math.exp(log_p / 4.0)


def _fscore(match, hyp_total, ref_total):
    if match == 0:
        return 0.0
    p = match / hyp_total
    r = match / ref_total
    return 2.0 * p * r / (p + r)


def rouge_n(hypotheses, references, n, mode="word"):
    """Mean sentence-level n-gram overlap F-measure in [0, 1]."""
    if n < 1:
        raise MetricError("n must be >= 1")
    if not hypotheses or len(hypotheses) != len(references):
        raise MetricError("need equal-length non-empty lists")
    scores = []
    for hyp, ref in zip(hypotheses, references):
        if mode == "char":
            hyp, ref = _chars(hyp), _chars(ref)
        hc, rc = _ngrams(hyp, n), _ngrams(ref, n)
        match = sum(min(c, rc[g]) for g, c in hc.items())
        ht, rt = sum(hc.values()), sum(rc.values())
        scores.append(0.0 if ht == 0 or rt == 0 else _fscore(match, ht, rt))
    return float(np.mean(scores))


def _lcs_len(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y
                       else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hypotheses, references, mode="word"):
    """Mean longest-common-subsequence F-measure in [0, 1]."""
    if not hypotheses or len(hypotheses) != len(references):
        raise MetricError("need equal-length non-empty lists")
    scores = []
    for hyp, ref in zip(hypotheses, references):
        if mode == "char":
            hyp, ref = _chars(hyp), _chars(ref)
        if not hyp or not ref:
            scores.append(0.0)
            continue
        scores.append(_fscore(_lcs_len(hyp, ref), len(hyp), len(ref)))
    return float(np.mean(scores))


def pearson(x, y):
    """Product-moment correlation; errors on constant input (undefined)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise MetricError("pearson needs two equal-length vectors, n >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt((xc * xc).sum())
    sy = np.sqrt((yc * yc).sum())
    if sx == 0 or sy == 0:
        raise MetricError("pearson undefined for constant input")
    return float((xc * yc).sum() / (sx * sy))


# ---------------------------------------------------------------------------
# probes

@dataclass
class ProbeReport:
    probe: str
    kind: str            # "semantic" or "syntactic": orients delta
    sem_score: float
    syn_score: float
    baselines: dict = field(default_factory=dict)

    @property
    def delta(self):
        gap = self.sem_score - self.syn_score
        return gap if self.kind == "semantic" else -gap

    def to_dict(self):
        return {"probe": self.probe, "kind": self.kind,
                "sem_score": self.sem_score, "syn_score": self.syn_score,
                "delta": self.delta, "baselines": dict(self.baselines)}


def _cos_rows(a, b):
    num = (a * b).sum(axis=1)
    den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    return num / np.maximum(den, 1e-12)


def sts_probe(params, bpe, sentence_pairs, gold):
    """Pearson correlation of gold similarities against latent cosines.

    sentence_pairs: list of ((tokens_a, lang_a), (tokens_b, lang_b)).
    Includes a bag-of-vectors baseline built from the model's own semantic
    embedding averages.
    """
    if len(sentence_pairs) != len(gold):
        raise MetricError("pairs and gold scores must align")
    left = [p[0] for p in sentence_pairs]
    right = [p[1] for p in sentence_pairs]
    sem_cos = _cos_rows(encode_pool(params, bpe, left, "semantic"),
                        encode_pool(params, bpe, right, "semantic"))
    syn_cos = _cos_rows(encode_pool(params, bpe, left, "syntactic"),
                        encode_pool(params, bpe, right, "syntactic"))

    def bag(sentences):
        table = params["sem_embed"].data
        rows = []
        for tokens, lang in sentences:
            from .subword import bpe_encode
            ids = [i for i in bpe_encode(bpe, tokens, lang).ids
                   if i >= params.config.n_reserved]
            rows.append(table[ids].mean(axis=0))
        return np.stack(rows)

    bag_cos = _cos_rows(bag(left), bag(right))
    return ProbeReport(
        probe="sts", kind="semantic",
        sem_score=pearson(gold, sem_cos), syn_score=pearson(gold, syn_cos),
        baselines={"bag_of_vectors": pearson(gold, bag_cos)})


def _retrieval_scores(reps_q, reps_c, score_fn, n_candidates, seed):
    """Model / oracle / random retrieval means for one representation."""
    sims = cosine_matrix(reps_q, reps_c)
    model = []
    for qi in range(sims.shape[0]):
        model.append(score_fn(qi, int(np.argmax(sims[qi]))))
    oracle = []
    for qi in range(sims.shape[0]):
        oracle.append(max(score_fn(qi, ci) for ci in range(n_candidates)))
    rng = np.random.default_rng(seed)
    runs = []
    for _ in range(10):
        picks = rng.integers(0, n_candidates, size=sims.shape[0])
        runs.append(float(np.mean([score_fn(qi, int(ci))
                                   for qi, ci in enumerate(picks)])))
    return (float(np.mean(model)), float(np.mean(oracle)),
            float(np.mean(runs)), float(np.std(runs)))


def syntax_probe(params, bpe, bank, max_length=30, per_length=300, seed=0):
    """Length-stratified nearest-neighbor retrieval probe over a parse bank.

    For each sentence length, up to per_length sentences become queries; the
    remaining same-length sentences are candidates. The neighbor's gold POS
    and parse score the query's representation. Returns ProbeReports for
    POS accuracy and labeled F1.
    """
    by_len = {}
    for tokens, pos, tree in bank.entries:
        if len(tokens) <= max_length:
            by_len.setdefault(len(tokens), []).append((tokens, pos, tree))
    per_rep_scores = {"semantic": {"pos": [], "f1": []},
                      "syntactic": {"pos": [], "f1": []}}
    oracle = {"pos": [], "f1": []}
    random_runs = {"pos": [], "f1": []}
    rng = np.random.default_rng(np.random.SeedSequence([seed, 31]))
    for length in sorted(by_len):
        group = by_len[length]
        if len(group) < 2:
            warnings.warn(f"length {length}: fewer than 2 sentences, skipped")
            continue
        order = rng.permutation(len(group))
        n_q = min(per_length, max(1, len(group) // 2))
        q_idx = order[:n_q]
        c_idx = order[n_q:]
        if len(c_idx) == 0:
            warnings.warn(f"length {length}: no candidates left, skipped")
            continue
        queries = [group[i] for i in q_idx]
        cands = [group[i] for i in c_idx]
        lang = bank.lang

        def score_pos(qi, ci):
            return pos_accuracy(queries[qi][1], cands[ci][1])

        def score_f1(qi, ci):
            return labeled_f1(queries[qi][2], cands[ci][2])

        q_sents = [(q[0], lang) for q in queries]
        c_sents = [(c[0], lang) for c in cands]
        for variable in ("semantic", "syntactic"):
            reps_q = encode_pool(params, bpe, q_sents, variable)
            reps_c = encode_pool(params, bpe, c_sents, variable)
            sims = cosine_matrix(reps_q, reps_c)
            nn = np.argmax(sims, axis=1)
            per_rep_scores[variable]["pos"].extend(
                score_pos(qi, int(ci)) for qi, ci in enumerate(nn))
            per_rep_scores[variable]["f1"].extend(
                score_f1(qi, int(ci)) for qi, ci in enumerate(nn))
        for metric, fn in (("pos", score_pos), ("f1", score_f1)):
            oracle[metric].extend(
                max(fn(qi, ci) for ci in range(len(cands)))
                for qi in range(len(queries)))
        sub = np.random.default_rng(np.random.SeedSequence([seed, 37, length]))
        for metric, fn in (("pos", score_pos), ("f1", score_f1)):
            runs = []
            for _ in range(10):
                picks = sub.integers(0, len(cands), size=len(queries))
                runs.append(np.mean([fn(qi, int(ci))
                                     for qi, ci in enumerate(picks)]))
            random_runs[metric].append((len(queries), np.mean(runs),
                                        np.std(runs)))
    if not oracle["pos"]:
        raise MetricError("no usable length stratum in the bank")

    def weighted_random(metric):
        total = sum(n for n, _, _ in random_runs[metric])
        mean = sum(n * m for n, m, _ in random_runs[metric]) / total
        std = max(s for _, _, s in random_runs[metric])
        return mean, std

    reports = {}
    for metric in ("pos", "f1"):
        rmean, rstd = weighted_random(metric)
        reports[metric] = ProbeReport(
            probe=f"syntax-{metric}", kind="syntactic",
            sem_score=float(np.mean(per_rep_scores["semantic"][metric])),
            syn_score=float(np.mean(per_rep_scores["syntactic"][metric])),
            baselines={"oracle": float(np.mean(oracle[metric])),
                       "random": rmean, "random_std": rstd})
    return reports


def frame_retrieval_probe(params, bpe, world, n_queries=200, pool_size=24,
                          seed=0):
    """Does a latent find the sentence sharing the query's semantic frame?

    Each query's pool holds exactly one frame partner (same frame, different
    template) among distractors with other frames; accuracy is the rate of
    retrieving the partner at rank 1.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 41]))
    hits = {"semantic": [], "syntactic": []}
    rand_runs = []
    for qi in range(n_queries):
        lang = world.langs[qi % 2]
        n_t = len(world.config.templates[lang])
        frame = world.sample_frame(rng)
        t_q = int(rng.integers(0, n_t))
        t_p = int(rng.integers(0, n_t - 1))
        if t_p >= t_q:
            t_p += 1
        q_toks, _, _ = world.render(lang, t_q, frame)
        pool = [(world.render(lang, t_p, frame)[0], lang)]
        while len(pool) < pool_size:
            f = world.sample_frame(rng)
            if f == frame:
                continue
            t = int(rng.integers(0, n_t))
            pool.append((world.render(lang, t, f)[0], lang))
        reps_q = {v: encode_pool(params, bpe, [(q_toks, lang)], v)
                  for v in ("semantic", "syntactic")}
        for v in ("semantic", "syntactic"):
            reps_c = encode_pool(params, bpe, pool, v)
            nn = int(np.argmax(cosine_matrix(reps_q[v], reps_c)[0]))
            hits[v].append(1.0 if nn == 0 else 0.0)
    sub = np.random.default_rng(np.random.SeedSequence([seed, 43]))
    for _ in range(10):
        rand_runs.append(np.mean(sub.integers(0, pool_size,
                                              size=n_queries) == 0))
    return ProbeReport(
        probe="frame-retrieval", kind="semantic",
        sem_score=float(np.mean(hits["semantic"])),
        syn_score=float(np.mean(hits["syntactic"])),
        baselines={"oracle": 1.0, "random": float(np.mean(rand_runs)),
                   "random_std": float(np.std(rand_runs))})


def template_retrieval_probe(params, bpe, world, n_queries=200, pool_size=24,
                             seed=0):
    """POS-accuracy proxy for template retrieval: the neighbor's gold POS
    sequence is scored against the query's. Pools contain at least one
    template match (different frame) and no frame matches."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 47]))
    scores = {"semantic": [], "syntactic": []}
    oracles, rand_runs = [], []
    sub = np.random.default_rng(np.random.SeedSequence([seed, 53]))
    for qi in range(n_queries):
        lang = world.langs[qi % 2]
        n_t = len(world.config.templates[lang])
        frame = world.sample_frame(rng)
        t_q = int(rng.integers(0, n_t))
        q_toks, q_pos, _ = world.render(lang, t_q, frame)
        pool, pool_pos = [], []

        def add(f, t):
            toks, pos, _ = world.render(lang, t, f)
            pool.append((toks, lang))
            pool_pos.append(pos)

        f = world.sample_frame(rng)
        while f == frame:
            f = world.sample_frame(rng)
        add(f, t_q)
        while len(pool) < pool_size:
            f = world.sample_frame(rng)
            if f == frame:
                continue
            add(f, int(rng.integers(0, n_t)))
        reps_q = {v: encode_pool(params, bpe, [(q_toks, lang)], v)
                  for v in ("semantic", "syntactic")}
        for v in ("semantic", "syntactic"):
            reps_c = encode_pool(params, bpe, pool, v)
            nn = int(np.argmax(cosine_matrix(reps_q[v], reps_c)[0]))
            scores[v].append(pos_accuracy(q_pos, pool_pos[nn]))
        oracles.append(max(pos_accuracy(q_pos, p) for p in pool_pos))
        rand_runs.append([pos_accuracy(q_pos, pool_pos[int(c)])
                          for c in sub.integers(0, pool_size, size=10)])
    rand_matrix = np.array(rand_runs)  # (n_queries, 10)
    run_means = rand_matrix.mean(axis=0)
    return ProbeReport(
        probe="template-retrieval", kind="syntactic",
        sem_score=float(np.mean(scores["semantic"])),
        syn_score=float(np.mean(scores["syntactic"])),
        baselines={"oracle": float(np.mean(oracles)),
                   "random": float(np.mean(run_means)),
                   "random_std": float(np.std(run_means))})
