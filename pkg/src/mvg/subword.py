"""Byte-pair-encoding subword model with word-boundary tracking.

One BPE model is trained jointly over both sides of a corpus; every
language gets a reserved tag ID that encoders prepend to their input. Each
subword remembers which original word it came from (the boundary map), which
is what the word-position loss trains against.
"""

from dataclasses import dataclass, field

END_MARK = "</w>"
PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
SPECIALS = (PAD, UNK, BOS, EOS)
TAG_BOUNDARY = -1  # boundary sentinel for the language-tag position


@dataclass
class SubwordSeq:
    ids: list[int]
    word_boundary: list[int]  # original word index per position; tag -> -1
    lang: str

    def __post_init__(self):
        if len(self.ids) != len(self.word_boundary):
            raise ValueError("ids and word_boundary must align")
        for a, b in zip(self.word_boundary, self.word_boundary[1:]):
            if b < a:
                raise ValueError("word_boundary must be non-decreasing")

    @property
    def n_words(self):
        return max(self.word_boundary, default=TAG_BOUNDARY) + 1


def lang_tag(lang: str) -> str:
    return f"<{lang}>"


class BpeModel:
    """Ordered merge list + vocabulary with reserved IDs.

    Reserved IDs (pad/unk/bos/eos then one tag per language) come first and
    are never produced by merges.
    """

    def __init__(self, merges, symbols, languages):
        self.merges = list(merges)
        self.languages = sorted(languages)
        self.vocab: dict[str, int] = {}
        for sym in SPECIALS:
            self.vocab[sym] = len(self.vocab)
        for lang in self.languages:
            self.vocab[lang_tag(lang)] = len(self.vocab)
        for sym in sorted(symbols):
            if sym not in self.vocab:
                self.vocab[sym] = len(self.vocab)
        self.id_to_sym = {i: s for s, i in self.vocab.items()}
        self.pad_id = self.vocab[PAD]
        self.unk_id = self.vocab[UNK]
        self.bos_id = self.vocab[BOS]
        self.eos_id = self.vocab[EOS]
        self.tag_ids = {lang: self.vocab[lang_tag(lang)]
                        for lang in self.languages}
        self._merge_rank = {pair: r for r, pair in enumerate(self.merges)}
        self._word_cache: dict[str, tuple[str, ...]] = {}

    def __len__(self):
        return len(self.vocab)

    @property
    def n_reserved(self):
        return len(SPECIALS) + len(self.languages)

    def segment_word(self, word: str) -> tuple[str, ...]:
        """Split a word into subword symbols by applying merges in rank order."""
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        syms = list(word[:-1]) + [word[-1] + END_MARK]
        while len(syms) > 1:
            best_rank, best_at = None, -1
            for k in range(len(syms) - 1):
                r = self._merge_rank.get((syms[k], syms[k + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank, best_at = r, k
            if best_rank is None:
                break
            syms[best_at:best_at + 2] = [syms[best_at] + syms[best_at + 1]]
        out = tuple(syms)
        self._word_cache[word] = out
        return out


def bpe_train(sentences, n_merges, languages) -> BpeModel:
    """Learn merges from an iterable of token lists.

    Deterministic: the most frequent adjacent pair wins each round, ties
    broken by lexicographically smallest pair; merging stops early once no
    pair occurs twice.
    """
    if n_merges < 0:
        raise ValueError("n_merges must be >= 0")
    word_freq: dict[str, int] = {}
    for tokens in sentences:
        for tok in tokens:
            word_freq[tok] = word_freq.get(tok, 0) + 1
    if not word_freq:
        raise ValueError("empty training corpus")

    words = {w: list(w[:-1]) + [w[-1] + END_MARK] for w in word_freq}
    merges = []
    for _ in range(n_merges):
        counts: dict[tuple[str, str], int] = {}
        for w, syms in words.items():
            f = word_freq[w]
            for a, b in zip(syms, syms[1:]):
                counts[(a, b)] = counts.get((a, b), 0) + f
        if not counts:
            break
        best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        if counts[best] < 2:
            break
        merges.append(best)
        merged = best[0] + best[1]
        for syms in words.values():
            k = 0
            while k < len(syms) - 1:
                if syms[k] == best[0] and syms[k + 1] == best[1]:
                    syms[k:k + 2] = [merged]
                else:
                    k += 1

    symbols = set()
    for syms in words.values():
        symbols.update(syms)
    return BpeModel(merges, symbols, languages)


def bpe_encode(model: BpeModel, tokens, lang) -> SubwordSeq:
    """Encode a word sequence; prepends the language tag, maps unseen
    symbols to unk, and records each subword's source-word index."""
    if lang not in model.tag_ids:
        raise ValueError(f"unknown language code: {lang!r}")
    ids = [model.tag_ids[lang]]
    bounds = [TAG_BOUNDARY]
    for w_idx, tok in enumerate(tokens):
        for sym in model.segment_word(tok):
            ids.append(model.vocab.get(sym, model.unk_id))
            bounds.append(w_idx)
    return SubwordSeq(ids=ids, word_boundary=bounds, lang=lang)


def bpe_decode(model: BpeModel, ids) -> list[str]:
    """Invert segmentation; drops tags and specials, errors on unknown IDs."""
    words, buf = [], ""
    n_res = model.n_reserved
    for i in ids:
        i = int(i)
        sym = model.id_to_sym.get(i)
        if sym is None:
            raise ValueError(f"unknown subword ID: {i}")
        if i < n_res:
            continue
        buf += sym
        if buf.endswith(END_MARK):
            words.append(buf[:-len(END_MARK)])
            buf = ""
    if buf:
        words.append(buf)
    return words


def save_bpe(model: BpeModel, path):
    """Line-oriented model file: header, languages, ranked merges, vocab."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"mvg-bpe\t1\t{len(model.merges)}\t{len(model.vocab)}\n")
        f.write("\t".join(model.languages) + "\n")
        for a, b in model.merges:
            f.write(f"{a} {b}\n")
        for sym, idx in model.vocab.items():
            f.write(f"{sym}\t{idx}\n")


def load_bpe(path) -> BpeModel:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if len(header) != 4 or header[0] != "mvg-bpe":
            raise ValueError(f"not a bpe model file: {path}")
        n_merges, n_vocab = int(header[2]), int(header[3])
        languages = f.readline().rstrip("\n").split("\t")
        merges = []
        for _ in range(n_merges):
            a, b = f.readline().rstrip("\n").split(" ")
            merges.append((a, b))
        vocab = {}
        for _ in range(n_vocab):
            sym, idx = f.readline().rstrip("\n").split("\t")
            vocab[sym] = int(idx)
    n_reserved = len(SPECIALS) + len(languages)
    symbols = [s for s, i in vocab.items() if i >= n_reserved]
    model = BpeModel(merges, symbols, languages)
    if model.vocab != vocab:
        raise ValueError(f"corrupt bpe model file: {path}")
    return model
