"""Exemplar-controlled generation by latent swapping, plus nearest-neighbor
retrieval over the latent representations.

Inference is deterministic: it uses the vMF mean direction of the semantic
input and the Gaussian mean of the syntactic exemplar (no sampling), then
beam-searches the decoder conditioned on (y, z, target-language tag).
"""

from dataclasses import dataclass

import numpy as np

from . import _core
from .network import sem_encode_batch, syn_encode_batch
from .subword import bpe_encode, bpe_decode


class ControlError(ValueError):
    pass


@dataclass
class GenerationRequest:
    sem_tokens: list
    sem_lang: str
    syn_tokens: list
    syn_lang: str
    tgt_lang: str
    beam: int = 10
    max_len: int = 32

    def __post_init__(self):
        if self.syn_lang != self.tgt_lang:
            raise ControlError("syntactic exemplar must be in the target "
                               "language")
        if self.beam < 1:
            raise ControlError("beam width must be >= 1")


@dataclass
class LatentPair:
    y: np.ndarray  # unit semantic direction
    z: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.y) - 1.0) > 1e-6:
            raise ControlError("semantic latent must be unit-norm")


@dataclass
class GenerationResult:
    tokens: list
    score: float       # length-normalized log-probability
    truncated: bool


def encode_latents(params, bpe, request: GenerationRequest) -> LatentPair:
    """y = vMF mean direction of the semantic input (shared encoder);
    z = Gaussian mean of the exemplar under the target-language encoder."""
    cfg = params.config
    for lang in (request.sem_lang, request.tgt_lang):
        if lang not in cfg.tag_ids:
            raise ControlError(f"undeclared language: {lang!r}")
    sem = bpe_encode(bpe, request.sem_tokens, request.sem_lang)
    syn = bpe_encode(bpe, request.syn_tokens, request.syn_lang)
    y = sem_encode_batch(params, np.array([sem.ids]))
    z_mu, _ = syn_encode_batch(params, np.array([syn.ids]),
                               np.array([len(syn.ids)]), request.syn_lang)
    return LatentPair(y=y.data[0].copy(), z=z_mu.data[0].copy())


def _decoder_arrays(params):
    p = params
    return {
        "emb": p["dec_embed"].data, "wx": p["dec_rnn.Wx"].data,
        "wh": p["dec_rnn.Wh"].data, "b": p["dec_rnn.b"].data,
        "iw": p["dec_init.W"].data, "ib": p["dec_init.b"].data,
        "ow": p["out_proj.W"].data, "ob": p["out_proj.b"].data,
    }


def _step(arrs, ids, yz, h, c):
    """One greedy/beam decoder step over a batch of hypotheses."""
    x = np.concatenate([arrs["emb"][ids], yz], axis=1)
    pre = x @ arrs["wx"] + h @ arrs["wh"] + arrs["b"]
    h, c, _ = _core.lstm_cell_forward(pre, c)
    logits = h @ arrs["ow"] + arrs["ob"]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return h, c, logp


def controlled_generate(params, bpe, request: GenerationRequest):
    """Beam search conditioned on (y, z, target tag); deterministic, scored
    by log-probability divided by output length. If no hypothesis emits the
    end token within max_len, the best truncated one is returned flagged."""
    cfg = params.config
    lat = encode_latents(params, bpe, request)
    beam = request.beam
    tag = cfg.tag_ids[request.tgt_lang]
    arrs = _decoder_arrays(params)
    hdim = cfg.d_hid

    yz1 = np.concatenate([lat.y, lat.z])[None, :]
    hc = yz1 @ arrs["iw"] + arrs["ib"]
    h, c = hc[:, :hdim], hc[:, hdim:]

    # force the language tag as the first target token
    h, c, logp = _step(arrs, np.array([cfg.bos_id]), yz1, h, c)
    base_lp = float(logp[0, tag])

    # hypotheses: (ids tuple, logp); finished kept separately
    alive = [((), base_lp)]
    h = np.repeat(h, 1, axis=0)
    last_ids = np.array([tag])
    finished = []
    for _ in range(request.max_len):
        k = len(alive)
        yzk = np.repeat(yz1, k, axis=0)
        h, c, logp = _step(arrs, last_ids, yzk, h, c)
        scores = np.array([lp for _, lp in alive])[:, None] + logp
        flat = scores.reshape(-1)
        # stable top-k: ties resolved toward lower hypothesis/vocab index
        take = min(beam, flat.size)
        top = np.argsort(-flat, kind="stable")[:2 * beam]
        new_alive, new_rows, new_ids = [], [], []
        for idx in top:
            row, tok = divmod(int(idx), cfg.vocab_size)
            ids, _ = alive[row]
            lp = float(flat[idx])
            if tok == cfg.eos_id:
                finished.append((ids, lp, len(ids) + 1))
            else:
                new_alive.append((ids + (tok,), lp))
                new_rows.append(row)
                new_ids.append(tok)
            if len(new_alive) >= take:
                break
        if not new_alive:
            break
        alive = new_alive
        h = h[new_rows]
        c = c[new_rows]
        last_ids = np.array(new_ids)

    def norm_score(entry):
        ids, lp, n = entry
        return lp / max(n, 1)

    if finished:
        finished.sort(key=lambda e: (-norm_score(e), e[0]))
        ids, lp, n = finished[0]
        truncated = False
        score = norm_score((ids, lp, n))
    else:
        ranked = sorted(((ids, lp, len(ids)) for ids, lp in alive),
                        key=lambda e: (-norm_score(e), e[0]))
        ids, lp, n = ranked[0]
        truncated = True
        score = norm_score((ids, lp, n))
    return GenerationResult(tokens=bpe_decode(bpe, list(ids)), score=score,
                            truncated=truncated)


def generate_for_triples(params, bpe, triples, beam=10, max_len=32):
    """Batch surface for triple files; yields dicts with hypothesis, score,
    and the truncation flag."""
    out = []
    for t in triples:
        req = GenerationRequest(sem_tokens=t.sem_tokens, sem_lang=t.sem_lang,
                                syn_tokens=t.syn_tokens, syn_lang=t.tgt_lang,
                                tgt_lang=t.tgt_lang, beam=beam,
                                max_len=max_len)
        res = controlled_generate(params, bpe, req)
        out.append({"hypothesis": " ".join(res.tokens), "score": res.score,
                    "truncated": res.truncated,
                    "tgt_lang": t.tgt_lang, "sem_lang": t.sem_lang})
    return out


def encode_pool(params, bpe, sentences, variable):
    """Latent representations for a list of (tokens, lang): y rows for the
    semantic variable, Gaussian means for the syntactic one."""
    if variable not in ("semantic", "syntactic"):
        raise ControlError(f"unknown variable: {variable!r}")
    reps = np.zeros((len(sentences),
                     params.config.latent.d_sem if variable == "semantic"
                     else params.config.latent.d_syn))
    by_lang = {}
    for i, (tokens, lang) in enumerate(sentences):
        by_lang.setdefault(lang, []).append(i)
    for lang, idxs in by_lang.items():
        encs = [bpe_encode(bpe, sentences[i][0], lang) for i in idxs]
        T = max(len(e.ids) for e in encs)
        ids = np.full((len(encs), T), params.config.pad_id, dtype=np.int64)
        lens = np.zeros(len(encs), dtype=np.int64)
        for r, e in enumerate(encs):
            ids[r, :len(e.ids)] = e.ids
            lens[r] = len(e.ids)
        if variable == "semantic":
            reps[idxs] = sem_encode_batch(params, ids).data
        else:
            mu, _ = syn_encode_batch(params, ids, lens, lang)
            reps[idxs] = mu.data
    return reps


def cosine_matrix(a, b):
    an = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1e-12)
    bn = b / np.maximum(np.linalg.norm(b, axis=1, keepdims=True), 1e-12)
    return an @ bn.T


def nearest_neighbors(params, bpe, query_tokens, query_lang, pool, variable,
                      k):
    """Top-k pool indices by cosine similarity on the chosen latent; ties
    broken toward the lowest pool index. k beyond the pool size returns the
    full ranking."""
    if not pool:
        raise ControlError("empty candidate pool")
    if k < 0:
        raise ControlError("k must be >= 0")
    q = encode_pool(params, bpe, [(query_tokens, query_lang)], variable)
    reps = encode_pool(params, bpe, pool, variable)
    sims = cosine_matrix(q, reps)[0]
    order = np.argsort(-sims, kind="stable")
    return [(int(i), float(sims[i])) for i in order[:min(k, len(pool))]]
