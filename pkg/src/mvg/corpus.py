"""Parallel-corpus ingestion, the synthetic bitext world, evaluation
triples, word noising, and batching.

The synthetic world renders a shared semantic frame (one lexeme per role)
through independently sampled per-language templates, so every sentence has
a gold frame ID and gold template ID. Templates fix the POS sequence and
the parse tree mechanically, which makes the retrieval probes and the tree
metrics exactly scorable without an external parser.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .subword import SubwordSeq
from .trees import ParseTree, parse_brackets


class CorpusError(ValueError):
    pass


# ---------------------------------------------------------------------------
# bitext containers and IO

@dataclass
class BitextPair:
    src_lang: str
    tgt_lang: str
    src_tokens: list[str]
    tgt_tokens: list[str]

    def __post_init__(self):
        if not self.src_tokens or not self.tgt_tokens:
            raise CorpusError("both sides of a pair must be non-empty")
        for tok in (*self.src_tokens, *self.tgt_tokens):
            if any(ch.isspace() for ch in tok):
                raise CorpusError(f"token contains whitespace: {tok!r}")


class BitextCorpus:
    def __init__(self, pairs, monolingual=False):
        self.pairs = list(pairs)
        self.monolingual = monolingual
        for p in self.pairs:
            if p.src_lang == p.tgt_lang and not monolingual:
                raise CorpusError(
                    "same-language pair in a corpus not declared monolingual")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def languages(self):
        langs = []
        for p in self.pairs:
            for lang in (p.src_lang, p.tgt_lang):
                if lang not in langs:
                    langs.append(lang)
        return langs


def load_bitext(path, format="tsv", src_lang="l1", tgt_lang="l2",
                monolingual=False):
    """Read a parallel corpus; returns (corpus, n_rejected).

    tsv: one `src<TAB>tgt` pair per line. paired-files: `path` is a
    (src_path, tgt_path) tuple of aligned line files. Lines with a missing
    column raise; lines with an empty side are rejected and counted.
    """
    if format == "tsv":
        records = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                cols = line.split("\t")
                if len(cols) != 2:
                    raise CorpusError(
                        f"{path}:{lineno}: expected 2 tab-separated columns, "
                        f"got {len(cols)}")
                records.append((lineno, cols[0], cols[1]))
    elif format == "paired-files":
        src_path, tgt_path = path
        with open(src_path, encoding="utf-8") as f:
            src_lines = f.read().splitlines()
        with open(tgt_path, encoding="utf-8") as f:
            tgt_lines = f.read().splitlines()
        if len(src_lines) != len(tgt_lines):
            raise CorpusError(
                f"paired files differ in length: {len(src_lines)} vs "
                f"{len(tgt_lines)}")
        records = [(i + 1, s, t)
                   for i, (s, t) in enumerate(zip(src_lines, tgt_lines))]
    else:
        raise CorpusError(f"unknown bitext format: {format!r}")

    pairs, rejected = [], 0
    for _lineno, src, tgt in records:
        src_toks, tgt_toks = src.split(), tgt.split()
        if not src_toks or not tgt_toks:
            rejected += 1
            continue
        pairs.append(BitextPair(src_lang, tgt_lang, src_toks, tgt_toks))
    return BitextCorpus(pairs, monolingual=monolingual), rejected


def save_bitext(corpus, path):
    with open(path, "w", encoding="utf-8") as f:
        for p in corpus:
            f.write(" ".join(p.src_tokens) + "\t" + " ".join(p.tgt_tokens)
                    + "\n")


# ---------------------------------------------------------------------------
# evaluation triples

@dataclass
class EvalTriple:
    sem_tokens: list[str]
    sem_lang: str
    syn_tokens: list[str]
    ref_tokens: list[str]
    tgt_lang: str

    def __post_init__(self):
        if not self.sem_tokens or not self.syn_tokens or not self.ref_tokens:
            raise CorpusError("triple sides must be non-empty")

    @property
    def task_kind(self):
        return "paraphrase" if self.sem_lang == self.tgt_lang else "translation"


def save_triples(triples, path):
    with open(path, "w", encoding="utf-8") as f:
        for t in triples:
            rec = {"sem": " ".join(t.sem_tokens), "syn": " ".join(t.syn_tokens),
                   "ref": " ".join(t.ref_tokens), "sem_lang": t.sem_lang,
                   "tgt_lang": t.tgt_lang}
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_triples(path):
    triples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                triples.append(EvalTriple(
                    sem_tokens=rec["sem"].split(), sem_lang=rec["sem_lang"],
                    syn_tokens=rec["syn"].split(),
                    ref_tokens=rec["ref"].split(), tgt_lang=rec["tgt_lang"]))
            except (KeyError, json.JSONDecodeError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad triple record: {exc}")
    return triples


# ---------------------------------------------------------------------------
# parse banks

@dataclass
class ParseBank:
    lang: str
    entries: list  # (tokens, pos sequence, ParseTree)

    def __post_init__(self):
        for tokens, pos, tree in self.entries:
            if len(tokens) != len(pos):
                raise CorpusError("POS sequence length must equal token count")
            if tree.leaves() != list(tokens):
                raise CorpusError("tree yield must equal token sequence")

    def __len__(self):
        return len(self.entries)


def bank_from_trees(trees, lang):
    entries = [(t.leaves(), t.preterminal_labels(), t) for t in trees]
    return ParseBank(lang=lang, entries=entries)


def save_bank(bank, path):
    with open(path, "w", encoding="utf-8") as f:
        for _tokens, _pos, tree in bank.entries:
            f.write(tree.to_bracketed() + "\n")


def load_bank(path, lang):
    trees = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                trees.append(parse_brackets(line))
    return bank_from_trees(trees, lang)


# ---------------------------------------------------------------------------
# synthetic world

@dataclass(frozen=True)
class RoleSpec:
    name: str
    pos: str
    n_lexemes: int


@dataclass(frozen=True)
class TemplateSpec:
    """Ordered slot pattern: elements are ("slot", role) or
    ("word", surface, pos); skeleton is a bracketed shape whose {k}
    placeholders expand to the k-th element's preterminal."""
    name: str
    elements: tuple
    skeleton: str


@dataclass(frozen=True)
class SyntheticWorldConfig:
    roles: tuple = (
        RoleSpec("agent", "N", 20),
        RoleSpec("action", "V", 20),
        RoleSpec("patient", "N", 20),
        RoleSpec("manner", "R", 20),
    )
    templates: dict = None
    n_pairs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.templates is None:
            object.__setattr__(self, "templates", default_templates())


def default_templates():
    """Six templates per language, all yield length 7, pairwise distinct POS
    sequences, varied bracketing shapes."""
    A, V, P, M = ("slot", "agent"), ("slot", "action"), \
        ("slot", "patient"), ("slot", "manner")

    def w(surface, pos):
        return ("word", surface, pos)

    l1 = (
        TemplateSpec("t0", (w("ta", "D"), A, V, w("po", "D"), P, M, w("ki", "X")),
                     "(S (NP {0} {1}) (VP {2} (NP {3} {4}) (ADVP {5})) {6})"),
        TemplateSpec("t1", (M, w("ta", "D"), A, w("ki", "X"), V, w("po", "D"), P),
                     "(S (ADVP {0}) (NP {1} {2}) (VP {3} {4} (NP {5} {6})))"),
        TemplateSpec("t2", (w("ta", "D"), A, w("po", "D"), P, V, w("ki", "X"), M),
                     "(S (NP {0} {1}) (VP (NP {2} {3}) {4}) (ADVP {5} {6}))"),
        TemplateSpec("t3", (w("ki", "X"), V, w("ta", "D"), A, w("nu", "P"), P, M),
                     "(S (VP {0} {1}) (NP {2} {3}) (PP {4} (NP {5})) (ADVP {6}))"),
        TemplateSpec("t4", (A, w("ki", "X"), M, V, w("nu", "P"), w("po", "D"), P),
                     "(S (NP {0}) (VP {1} (ADVP {2}) {3}) (PP {4} (NP {5} {6})))"),
        TemplateSpec("t5", (w("nu", "P"), P, w("ta", "D"), A, V, M, w("we", "C")),
                     "(S (PP {0} (NP {1})) (NP {2} {3}) (VP {4} (ADVP {5})) {6})"),
    )
    l2 = (
        TemplateSpec("u0", (w("fy", "D"), A, w("xo", "D"), P, M, V, w("hu", "X")),
                     "(S (NP {0} {1}) (NP {2} {3}) (VP (ADVP {4}) {5} {6}))"),
        TemplateSpec("u1", (M, w("fy", "D"), A, w("xo", "D"), P, V, w("wa", "C")),
                     "(S (ADVP {0}) (NP {1} {2}) (VP (NP {3} {4}) {5}) {6})"),
        TemplateSpec("u2", (w("hu", "X"), w("fy", "D"), A, V, w("xo", "D"), P, M),
                     "(S {0} (NP {1} {2}) (VP {3} (NP {4} {5}) (ADVP {6})))"),
        TemplateSpec("u3", (w("fy", "D"), P, w("je", "P"), A, V, w("hu", "X"), M),
                     "(S (NP {0} {1}) (PP {2} (NP {3})) (VP {4} {5} (ADVP {6})))"),
        TemplateSpec("u4", (A, w("je", "P"), P, M, V, w("hu", "X"), w("wa", "C")),
                     "(S (NP {0}) (PP {1} (NP {2})) (VP (ADVP {3}) {4} {5}) {6})"),
        TemplateSpec("u5", (w("wa", "C"), A, w("fy", "D"), P, V, M, w("je", "P")),
                     "(S {0} (NP {1}) (VP (NP {2} {3}) {4} (ADVP {5})) {6})"),
    )
    return {"l1": l1, "l2": l2}


_SYLLABLES = {
    0: [c + v for c in "bdgklmnprstz" for v in "aeiou"],
    1: [c + v for c in "fcjqvwxyh" for v in "aeiou"],
}


def _build_lexicon(config):
    """lang -> role -> list of words; deterministic in config.seed, words
    disjoint across languages and from function words."""
    langs = sorted(config.templates.keys())
    function_words = set()
    for tmpls in config.templates.values():
        for t in tmpls:
            for el in t.elements:
                if el[0] == "word":
                    function_words.add(el[1])
    lexicon = {}
    for li, lang in enumerate(langs):
        rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, 7, li]))
        syl = _SYLLABLES[li % len(_SYLLABLES)]
        candidates = [a + b for a in syl for b in syl]
        order = rng.permutation(len(candidates))
        pool = [candidates[k] for k in order
                if candidates[k] not in function_words]
        lexicon[lang] = {}
        taken = 0
        for role in config.roles:
            lexicon[lang][role.name] = pool[taken:taken + role.n_lexemes]
            taken += role.n_lexemes
            if len(lexicon[lang][role.name]) < role.n_lexemes:
                raise CorpusError("syllable inventory too small for lexicon")
    return lexicon


class SyntheticWorld:
    """Deterministic generator over (frame, template) sentence space."""

    def __init__(self, config: SyntheticWorldConfig):
        self.config = config
        self.langs = sorted(config.templates.keys())
        if len(self.langs) != 2:
            raise CorpusError("synthetic world needs exactly 2 languages")
        for lang in self.langs:
            tmpls = config.templates[lang]
            if len(tmpls) < 2:
                raise CorpusError(f"{lang}: need >= 2 templates")
            seen = {}
            for t in tmpls:
                pos = self.template_pos(t)
                if pos in seen:
                    raise CorpusError(
                        f"{lang}: templates {seen[pos]} and {t.name} share "
                        f"POS sequence {pos}")
                seen[pos] = t.name
        self.lexicon = _build_lexicon(config)
        self._word_to_role = {}
        for lang in self.langs:
            table = {}
            for role in config.roles:
                for idx, word in enumerate(self.lexicon[lang][role.name]):
                    table[word] = (role.name, idx)
            self._word_to_role[lang] = table

    @staticmethod
    def template_pos(template):
        pos = []
        for el in template.elements:
            pos.append(el[2] if el[0] == "word" else None)
        return tuple(pos)

    def template_pos_seq(self, lang, t_idx):
        t = self.config.templates[lang][t_idx]
        out = []
        role_pos = {r.name: r.pos for r in self.config.roles}
        for el in t.elements:
            out.append(el[2] if el[0] == "word" else role_pos[el[1]])
        return out

    def sample_frame(self, rng):
        return tuple(int(rng.integers(0, r.n_lexemes))
                     for r in self.config.roles)

    def frame_id(self, frame):
        return "-".join(str(i) for i in frame)

    def template_id(self, lang, t_idx):
        return f"{lang}/{self.config.templates[lang][t_idx].name}"

    def render(self, lang, t_idx, frame):
        """Returns (tokens, pos_seq, tree) for a frame under a template."""
        template = self.config.templates[lang][t_idx]
        role_index = {r.name: k for k, r in enumerate(self.config.roles)}
        role_pos = {r.name: r.pos for r in self.config.roles}
        tokens, pos, pret = [], [], []
        for el in template.elements:
            if el[0] == "word":
                tokens.append(el[1])
                pos.append(el[2])
            else:
                role = el[1]
                word = self.lexicon[lang][role][frame[role_index[role]]]
                tokens.append(word)
                pos.append(role_pos[role])
            pret.append(f"({pos[-1]} {tokens[-1]})")
        tree = parse_brackets(template.skeleton.format(*pret))
        return tokens, pos, tree

    def analyze(self, tokens, lang):
        """Invert render: returns (frame, t_idx, tree) or None if the
        sentence instantiates no template."""
        role_index = {r.name: k for k, r in enumerate(self.config.roles)}
        for t_idx, template in enumerate(self.config.templates[lang]):
            if len(template.elements) != len(tokens):
                continue
            frame = [None] * len(self.config.roles)
            ok = True
            for el, tok in zip(template.elements, tokens):
                if el[0] == "word":
                    if tok != el[1]:
                        ok = False
                        break
                else:
                    hit = self._word_to_role[lang].get(tok)
                    if hit is None or hit[0] != el[1]:
                        ok = False
                        break
                    frame[role_index[el[1]]] = hit[1]
            if ok and all(v is not None for v in frame):
                _, _, tree = self.render(lang, t_idx, tuple(frame))
                return tuple(frame), t_idx, tree
        return None

    def lexicon_words(self, lang):
        words = set()
        for role in self.config.roles:
            words.update(self.lexicon[lang][role.name])
        for t in self.config.templates[lang]:
            for el in t.elements:
                if el[0] == "word":
                    words.add(el[1])
        return words


def gen_synthetic_bitext(config: SyntheticWorldConfig):
    """Generate the aligned corpus plus per-language parse banks and gold
    (frame, template) labels; bit-deterministic in config.seed."""
    world = SyntheticWorld(config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
    l1, l2 = world.langs
    n1, n2 = len(config.templates[l1]), len(config.templates[l2])
    pairs, entries1, entries2, gold = [], [], [], []
    for _ in range(config.n_pairs):
        frame = world.sample_frame(rng)
        t1 = int(rng.integers(0, n1))
        t2 = int(rng.integers(0, n2))
        toks1, pos1, tree1 = world.render(l1, t1, frame)
        toks2, pos2, tree2 = world.render(l2, t2, frame)
        pairs.append(BitextPair(l1, l2, toks1, toks2))
        entries1.append((toks1, pos1, tree1))
        entries2.append((toks2, pos2, tree2))
        gold.append({"frame": world.frame_id(frame),
                     "src_template": world.template_id(l1, t1),
                     "tgt_template": world.template_id(l2, t2)})
    corpus = BitextCorpus(pairs)
    bank1 = ParseBank(lang=l1, entries=entries1)
    bank2 = ParseBank(lang=l2, entries=entries2)
    return world, corpus, bank1, bank2, gold


def gen_synthetic_triples(world, n, task_kind, seed, pool_size=40,
                          return_pools=False):
    """Build controlled-generation triples from the world.

    The reference realizes (frame F, template T); the semantic input renders
    F under a different template; the syntactic exemplar is mined from a
    random sentence pool as the nearest POS-sequence neighbor of the
    reference among pool items with a different frame (same-template items
    have distance 0, so mining recovers a template match when one exists).
    With return_pools=True also returns the per-triple mining pool as
    (frame, template_idx, chosen_idx) for oracle re-verification.
    """
    if task_kind not in ("paraphrase", "translation"):
        raise CorpusError(f"unknown task kind: {task_kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 13]))
    l1, l2 = world.langs
    triples = []
    pools = []
    for k in range(n):
        tgt_lang = (l1, l2)[k % 2]
        src_lang = tgt_lang if task_kind == "paraphrase" \
            else (l2 if tgt_lang == l1 else l1)
        n_tgt = len(world.config.templates[tgt_lang])
        n_src = len(world.config.templates[src_lang])
        if n_tgt < 2 or (task_kind == "paraphrase" and n_src < 2):
            raise CorpusError("need >= 2 templates to build triples")
        frame = world.sample_frame(rng)
        t_ref = int(rng.integers(0, n_tgt))
        ref_toks, ref_pos, _ = world.render(tgt_lang, t_ref, frame)
        if task_kind == "paraphrase":
            t_sem = int(rng.integers(0, n_src - 1))
            if t_sem >= t_ref:
                t_sem += 1
        else:
            t_sem = int(rng.integers(0, n_src))
        sem_toks, _, _ = world.render(src_lang, t_sem, frame)

        pool = []
        for _ in range(pool_size):
            f = world.sample_frame(rng)
            t = int(rng.integers(0, n_tgt))
            pool.append((f, t))
        if not any(t == t_ref and f != frame for f, t in pool):
            f = world.sample_frame(rng)
            while f == frame:
                f = world.sample_frame(rng)
            pool[-1] = (f, t_ref)

        label_codes = {}
        def codes(pos_seq):
            return np.array([label_codes.setdefault(p, len(label_codes))
                             for p in pos_seq], dtype=np.int32)
        ref_codes = codes(ref_pos)
        best_idx, best_dist = -1, None
        for idx, (f, t) in enumerate(pool):
            if f == frame:
                continue
            d = _core.levenshtein(codes(world.template_pos_seq(tgt_lang, t)),
                                  ref_codes)
            if best_dist is None or d < best_dist:
                best_idx, best_dist = idx, d
        syn_frame, syn_t = pool[best_idx]
        syn_toks, _, _ = world.render(tgt_lang, syn_t, syn_frame)
        triples.append(EvalTriple(sem_tokens=sem_toks, sem_lang=src_lang,
                                  syn_tokens=syn_toks, ref_tokens=ref_toks,
                                  tgt_lang=tgt_lang))
        pools.append({"tgt_lang": tgt_lang, "ref_frame": frame,
                      "ref_template": t_ref, "pool": pool,
                      "chosen": best_idx})
    if return_pools:
        return triples, pools
    return triples


def world_config_to_dict(cfg: SyntheticWorldConfig):
    return {
        "roles": [[r.name, r.pos, r.n_lexemes] for r in cfg.roles],
        "templates": {
            lang: [{"name": t.name,
                    "elements": [list(el) for el in t.elements],
                    "skeleton": t.skeleton} for t in tmpls]
            for lang, tmpls in cfg.templates.items()},
        "n_pairs": cfg.n_pairs,
        "seed": cfg.seed,
    }


def world_config_from_dict(d):
    roles = tuple(RoleSpec(name, pos, n) for name, pos, n in d["roles"])
    templates = {
        lang: tuple(TemplateSpec(t["name"],
                                 tuple(tuple(el) for el in t["elements"]),
                                 t["skeleton"]) for t in tmpls)
        for lang, tmpls in d["templates"].items()}
    return SyntheticWorldConfig(roles=roles, templates=templates,
                                n_pairs=d["n_pairs"], seed=d["seed"])


def save_world_config(cfg, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(world_config_to_dict(cfg), f, sort_keys=True, indent=1)
        f.write("\n")


def load_world_config(path) -> SyntheticWorldConfig:
    with open(path, encoding="utf-8") as f:
        return world_config_from_dict(json.load(f))


def gen_sts_pairs(world, n, lang, seed):
    """Sentence pairs with graded gold similarity = fraction of shared role
    lexemes; exercises the semantic-similarity probe on the desk world."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 59]))
    n_t = len(world.config.templates[lang])
    n_roles = len(world.config.roles)
    rows = []
    for k in range(n):
        frame_a = world.sample_frame(rng)
        overlap = k % (n_roles + 1)
        frame_b = list(world.sample_frame(rng))
        keep = rng.permutation(n_roles)[:overlap]
        for r in keep:
            frame_b[r] = frame_a[r]
        for r in range(n_roles):
            if r not in keep and frame_b[r] == frame_a[r]:
                frame_b[r] = (frame_b[r] + 1) % world.config.roles[r].n_lexemes
        toks_a, _, _ = world.render(lang, int(rng.integers(0, n_t)), frame_a)
        toks_b, _, _ = world.render(lang, int(rng.integers(0, n_t)),
                                    tuple(frame_b))
        rows.append((toks_a, toks_b, overlap / n_roles))
    return rows


# ---------------------------------------------------------------------------
# noising and batching

def noise_words(tokens, p, seed, vocab):
    """Independently replace each word with probability p by a uniform draw
    from `vocab`; length-preserving and deterministic given the seed."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("noise probability must be in [0, 1]")
    rng = np.random.default_rng(seed) if not isinstance(
        seed, np.random.Generator) else seed
    if p == 0.0 or not tokens:
        return list(tokens)
    mask = rng.random(len(tokens)) < p
    out = list(tokens)
    n_hit = int(mask.sum())
    if n_hit:
        picks = rng.integers(0, len(vocab), size=n_hit)
        j = 0
        for i, hit in enumerate(mask):
            if hit:
                out[i] = vocab[int(picks[j])]
                j += 1
    return out


@dataclass
class EncodedPair:
    src_enc: SubwordSeq  # encoder view (noised during training)
    tgt_enc: SubwordSeq
    src_dec: SubwordSeq  # clean reconstruction target
    tgt_dec: SubwordSeq


@dataclass
class SideBatch:
    enc_ids: np.ndarray      # (B, Te) padded
    enc_bounds: np.ndarray   # (B, Te) word index, pad/tag -> -1
    enc_lens: np.ndarray     # (B,)
    dec_ids: np.ndarray      # (B, Td) padded, no eos appended here
    dec_lens: np.ndarray
    lang: str


@dataclass
class PairBatch:
    src: SideBatch
    tgt: SideBatch

    @property
    def size(self):
        return self.src.enc_ids.shape[0]


def _pad_side(encs, decs, pad_id):
    bsz = len(encs)
    te = max(len(e.ids) for e in encs)
    td = max(len(d.ids) for d in decs)
    enc_ids = np.full((bsz, te), pad_id, dtype=np.int64)
    bounds = np.full((bsz, te), -1, dtype=np.int64)
    enc_lens = np.zeros(bsz, dtype=np.int64)
    dec_ids = np.full((bsz, td), pad_id, dtype=np.int64)
    dec_lens = np.zeros(bsz, dtype=np.int64)
    for b, (e, d) in enumerate(zip(encs, decs)):
        enc_ids[b, :len(e.ids)] = e.ids
        bounds[b, :len(e.ids)] = e.word_boundary
        enc_lens[b] = len(e.ids)
        dec_ids[b, :len(d.ids)] = d.ids
        dec_lens[b] = len(d.ids)
    return SideBatch(enc_ids, bounds, enc_lens, dec_ids, dec_lens,
                     encs[0].lang)


def make_batches(pairs, batch_size, seed, pad_id):
    """Deterministic shuffled batches over encoded pairs; every pair appears
    exactly once, padded with `pad_id` (excluded from losses downstream)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(pairs))
    batches = []
    for start in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in order[start:start + batch_size]]
        batches.append(PairBatch(
            src=_pad_side([c.src_enc for c in chunk],
                          [c.src_dec for c in chunk], pad_id),
            tgt=_pad_side([c.tgt_enc for c in chunk],
                          [c.tgt_dec for c in chunk], pad_id)))
    return batches
