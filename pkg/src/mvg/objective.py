"""Training losses and the training loop.

Loss expectations are estimated with one posterior sample per term per step.
Sampling noise is derived from (step seed, loss term, sentence content), so
the paraphrase-reconstruction loss is exactly symmetric under swapping the
two sides of a pair, and the total loss decomposes bit-exactly into the
separately computable terms.
"""

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import latent as lat
from .autodiff import Tensor
from .corpus import EncodedPair, PairBatch, SideBatch, make_batches, noise_words
from .network import (ModelParams, init_params, param_specs, save_checkpoint,
                      load_checkpoint, sem_encode_batch, syn_encode_batch,
                      sequence_nll, wpl_logits_batch)
from .subword import bpe_encode


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    grad_clip: float = 5.0
    noise_p: float = 0.9
    eval_every: int = 1          # epochs between dev evaluations
    patience: int = -1           # non-improving evals tolerated; -1 disables
    seed: int = 0
    beam: int = 10
    max_gen_len: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.noise_p <= 1.0:
            raise ValueError("noise_p must be in [0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _stream(*parts):
    return np.random.default_rng(np.random.SeedSequence(
        [int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]))


def _sentence_rng(step_seed, purpose, lang, ids):
    """Noise stream keyed by loss term and sentence content (not position in
    the batch), which is what makes PRL swap-symmetric."""
    h = hashlib.blake2s(digest_size=8)
    h.update(purpose.encode())
    h.update(lang.encode())
    h.update(np.asarray(ids, dtype=np.int64).tobytes())
    return _stream(step_seed, int.from_bytes(h.digest(), "little"))


def _side_rows(side: SideBatch):
    for b in range(side.dec_ids.shape[0]):
        yield side.dec_ids[b, :side.dec_lens[b]]


def _sample_y(params, side, y_mu, purpose, step_seed):
    cfg = params.config.latent
    if cfg.kappa == 0:
        rows = []
        for ids in _side_rows(side):
            rng = _sentence_rng(step_seed, purpose, side.lang, ids)
            x = rng.standard_normal(cfg.d_sem)
            rows.append(x / np.linalg.norm(x))
        return Tensor(np.stack(rows))
    omegas, vs = [], []
    for ids in _side_rows(side):
        rng = _sentence_rng(step_seed, purpose, side.lang, ids)
        o, v = lat.vmf_noise(1, cfg.d_sem, cfg.kappa, rng)
        omegas.append(o[0])
        vs.append(v[0])
    return lat.vmf_sample_tensor(y_mu, cfg.kappa,
                                 noise=(np.array(omegas), np.stack(vs)))


def _sample_z(params, side, z_mu, z_ls, purpose, step_seed):
    eps = np.stack([
        _sentence_rng(step_seed, purpose, side.lang, ids)
        .standard_normal(params.config.latent.d_syn)
        for ids in _side_rows(side)])
    return lat.gauss_sample_tensor(z_mu, z_ls, eps=eps)


def _encode_side(params, side: SideBatch):
    """Posteriors for one side; shared across loss terms inside total_loss
    (recomputing them in a separately called term gives bit-identical
    values, so the decomposition identity survives the sharing)."""
    y_mu = sem_encode_batch(params, side.enc_ids)
    z_mu, z_ls = syn_encode_batch(params, side.enc_ids, side.enc_lens,
                                  side.lang)
    return y_mu, z_mu, z_ls


def _elbo_from(params, side, post, step_seed):
    cfg = params.config.latent
    y_mu, z_mu, z_ls = post
    y = _sample_y(params, side, y_mu, "elbo.y", step_seed)
    z = _sample_z(params, side, z_mu, z_ls, "elbo.z", step_seed)
    nll = sequence_nll(params, y, z, side.dec_ids, side.dec_lens)
    kl_z = lat.gauss_kl_std_tensor(z_mu, z_ls)
    kl_y = lat.vmf_kl_uniform(cfg.kappa, cfg.d_sem)
    loss = ad.add(ad.tmean(ad.add(nll, ad.mul(kl_z, cfg.lambda_z))),
                  cfg.lambda_y * kl_y)
    parts = {"recon": float(nll.data.mean()),
             "kl_z": float(kl_z.data.mean()), "kl_y": kl_y}
    if not np.isfinite(loss.data):
        raise TrainingDiverged(f"non-finite ELBO: {parts}")
    return loss, parts


def elbo_loss(params, side: SideBatch, step_seed):
    """Mean over the batch of [teacher-forced NLL with sampled latents]
    plus weighted KL terms; returns (scalar tensor, parts dict)."""
    return _elbo_from(params, side, _encode_side(params, side), step_seed)


def _prl_from(params, batch, post_src, post_tgt, step_seed):
    src, tgt = batch.src, batch.tgt
    y1_mu, z1_mu, z1_ls = post_src
    y2_mu, z2_mu, z2_ls = post_tgt
    y1 = _sample_y(params, src, y1_mu, "prl.y", step_seed)
    y2 = _sample_y(params, tgt, y2_mu, "prl.y", step_seed)
    z1 = _sample_z(params, src, z1_mu, z1_ls, "prl.z", step_seed)
    z2 = _sample_z(params, tgt, z2_mu, z2_ls, "prl.z", step_seed)
    nll1 = sequence_nll(params, y2, z1, src.dec_ids, src.dec_lens)
    nll2 = sequence_nll(params, y1, z2, tgt.dec_ids, tgt.dec_lens)
    loss = ad.tmean(ad.add(nll1, nll2))
    if not np.isfinite(loss.data):
        raise TrainingDiverged("non-finite PRL")
    return loss, {"prl": float(loss.data)}


def prl_loss(params, batch: PairBatch, step_seed):
    """Reconstruct each side from its own syntactic sample and its
    translation's semantic sample; symmetric in the two sides."""
    return _prl_from(params, batch, _encode_side(params, batch.src),
                     _encode_side(params, batch.tgt), step_seed)


def _wpl_from(params, side, post, step_seed):
    cfg = params.config
    bounds = side.enc_bounds
    if bounds.max() >= cfg.max_len:
        raise ValueError(f"word boundary {bounds.max()} >= max_len "
                         f"{cfg.max_len}")
    _, z_mu, z_ls = post
    z = _sample_z(params, side, z_mu, z_ls, "wpl.z", step_seed)
    logits = wpl_logits_batch(params, side.enc_ids, z)
    flat_bounds = bounds.reshape(-1)
    mask = (flat_bounds >= 0).astype(np.float64)
    targets = np.maximum(flat_bounds, 0)
    nll = ad.softmax_cross_entropy(logits, targets)
    loss = ad.mul(ad.tsum(ad.mul(nll, Tensor(mask))), 1.0 / mask.sum())
    if not np.isfinite(loss.data):
        raise TrainingDiverged("non-finite WPL")
    return loss, {"wpl": float(loss.data)}


def wpl_loss(params, side: SideBatch, step_seed):
    """Mean NLL of each subword's original word index from [embedding; z]."""
    return _wpl_from(params, side, _encode_side(params, side), step_seed)


def total_loss(params, batch: PairBatch, step_seed):
    """ELBO on both sides + PRL + WPL on both sides; equals the sum of the
    separately called terms bit-for-bit (shared content-keyed noise)."""
    post_src = _encode_side(params, batch.src)
    post_tgt = _encode_side(params, batch.tgt)
    e1, p1 = _elbo_from(params, batch.src, post_src, step_seed)
    e2, p2 = _elbo_from(params, batch.tgt, post_tgt, step_seed)
    pr, p3 = _prl_from(params, batch, post_src, post_tgt, step_seed)
    w1, p4 = _wpl_from(params, batch.src, post_src, step_seed)
    w2, p5 = _wpl_from(params, batch.tgt, post_tgt, step_seed)
    loss = ad.add(ad.add(ad.add(ad.add(e1, e2), pr), w1), w2)
    parts = {"elbo": float(e1.data + e2.data),
             "recon": p1["recon"] + p2["recon"],
             "kl_z": p1["kl_z"] + p2["kl_z"],
             "kl_y": p1["kl_y"] + p2["kl_y"],
             "prl": p3["prl"],
             "wpl": p4["wpl"] + p5["wpl"],
             "total": float(loss.data)}
    return loss, parts


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Adaptive-moment gradient descent with global-norm clipping."""

    def __init__(self, params: ModelParams, lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8, clip=5.0):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps, self.clip = \
            lr, beta1, beta2, eps, clip
        self.t = 0
        self.m = {n: np.zeros_like(params[n].data) for n in params.names()}
        self.v = {n: np.zeros_like(params[n].data) for n in params.names()}

    def step(self):
        self.t += 1
        sq = 0.0
        for n in self.params.names():
            g = self.params[n].grad
            if g is not None:
                sq += float((g * g).sum())
        norm = np.sqrt(sq)
        scale = self.clip / norm if (self.clip > 0 and norm > self.clip) \
            else 1.0
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for n in self.params.names():
            g = self.params[n].grad
            if g is None:
                continue
            g = g * scale
            self.m[n] = self.beta1 * self.m[n] + (1 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1 - self.beta2) * g * g
            mhat = self.m[n] / b1c
            vhat = self.v[n] / b2c
            self.params[n].data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainState:
    params: ModelParams
    opt: Adam
    epoch: int = 0
    global_step: int = 0
    best_dev_bleu: float = -1.0
    best_epoch: int = -1
    evals_since_improve: int = 0


def encode_corpus(bpe, corpus):
    """Clean subword encodings, one EncodedPair per bitext pair (encoder
    view == decoder view until noising replaces it)."""
    out = []
    for p in corpus:
        src = bpe_encode(bpe, p.src_tokens, p.src_lang)
        tgt = bpe_encode(bpe, p.tgt_tokens, p.tgt_lang)
        out.append(EncodedPair(src_enc=src, tgt_enc=tgt,
                               src_dec=src, tgt_dec=tgt))
    return out


def _word_vocab(corpus):
    vocab = {}
    for p in corpus:
        vocab.setdefault(p.src_lang, set()).update(p.src_tokens)
        vocab.setdefault(p.tgt_lang, set()).update(p.tgt_tokens)
    return {lang: sorted(words) for lang, words in vocab.items()}


def _noised_epoch(bpe, corpus, clean, vocab, noise_p, seed, epoch):
    if noise_p == 0.0:
        return clean
    out = []
    for i, p in enumerate(corpus):
        src_noisy = noise_words(p.src_tokens, noise_p,
                                _stream(seed, 17, epoch, i, 0),
                                vocab[p.src_lang])
        tgt_noisy = noise_words(p.tgt_tokens, noise_p,
                                _stream(seed, 17, epoch, i, 1),
                                vocab[p.tgt_lang])
        out.append(EncodedPair(
            src_enc=bpe_encode(bpe, src_noisy, p.src_lang),
            tgt_enc=bpe_encode(bpe, tgt_noisy, p.tgt_lang),
            src_dec=clean[i].src_dec, tgt_dec=clean[i].tgt_dec))
    return out


def _dev_bleu(params, bpe, dev_triples, cfg: TrainConfig):
    from .control import GenerationRequest, controlled_generate
    from .metrics import bleu
    hyps, refs = [], []
    for t in dev_triples:
        req = GenerationRequest(
            sem_tokens=t.sem_tokens, sem_lang=t.sem_lang,
            syn_tokens=t.syn_tokens, syn_lang=t.tgt_lang,
            tgt_lang=t.tgt_lang, beam=cfg.beam, max_len=cfg.max_gen_len)
        res = controlled_generate(params, bpe, req)
        hyps.append(res.tokens if res.tokens else ["<empty>"])
        refs.append(t.ref_tokens)
    return bleu(hyps, refs, mode="word")


def train(cfg: TrainConfig, model_cfg, bpe, corpus, dev_triples,
          out_dir, resume_from=None, log=None):
    """Train on a bitext corpus with dev-BLEU early stopping.

    Writes best.ckpt / last.ckpt / state.ckpt / metrics.csv under out_dir;
    fully deterministic in (cfg.seed, corpus). Returns (TrainState, rows).
    """
    os.makedirs(out_dir, exist_ok=True)
    if resume_from is not None:
        state = load_train_state(resume_from, cfg)
    else:
        params = init_params(model_cfg, seed=cfg.seed)
        state = TrainState(params=params, opt=Adam(
            params, lr=cfg.lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
            eps=cfg.adam_eps, clip=cfg.grad_clip))
    params = state.params

    clean = encode_corpus(bpe, corpus)
    vocab = _word_vocab(corpus)
    rows = []

    def emit(row):
        rows.append(row)
        if log:
            log(row)

    stop = False
    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        encoded = _noised_epoch(bpe, corpus, clean, vocab, cfg.noise_p,
                                cfg.seed, epoch)
        batches = make_batches(encoded, cfg.batch_size,
                               _stream(cfg.seed, 19, epoch),
                               params.config.pad_id)
        for batch in batches:
            state.global_step += 1
            step_seed = (cfg.seed * 1_000_003 + state.global_step)
            params.zero_grads()
            loss, parts = total_loss(params, batch, step_seed)
            loss.backward()
            state.opt.step()
            emit({"step": state.global_step, "epoch": epoch,
                  "elbo": parts["elbo"], "kl_z": parts["kl_z"],
                  "kl_y": parts["kl_y"], "prl": parts["prl"],
                  "wpl": parts["wpl"], "total": parts["total"],
                  "dev_bleu": ""})
        state.epoch = epoch

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            dev = _dev_bleu(params, bpe, dev_triples, cfg) \
                if dev_triples else 0.0
            emit({"step": state.global_step, "epoch": epoch, "elbo": "",
                  "kl_z": "", "kl_y": "", "prl": "", "wpl": "", "total": "",
                  "dev_bleu": dev})
            if dev > state.best_dev_bleu:
                state.best_dev_bleu = dev
                state.best_epoch = epoch
                state.evals_since_improve = 0
                save_checkpoint(params, os.path.join(out_dir, "best.ckpt"),
                                extra={"epoch": epoch, "dev_bleu": dev})
            else:
                state.evals_since_improve += 1
                if cfg.patience >= 0 and \
                        state.evals_since_improve > cfg.patience:
                    stop = True
            save_checkpoint(params, os.path.join(out_dir, "last.ckpt"),
                            extra={"epoch": epoch, "dev_bleu": dev})
            save_train_state(os.path.join(out_dir, "state.ckpt"), state)
        if stop:
            break

    write_metrics_csv(rows, os.path.join(out_dir, "metrics.csv"))
    return state, rows


def write_metrics_csv(rows, path):
    cols = ["step", "epoch", "elbo", "kl_z", "kl_y", "prl", "wpl", "total",
            "dev_bleu"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c, "") for c in cols})


def save_train_state(path, state: TrainState):
    """Container with model tensors plus adam moments; counters in the
    header. Resume reproduces the unbroken run bit-for-bit (all randomness
    is derived from seed + counters)."""
    params = state.params
    merged = {n: params[n] for n in params.names()}
    for n in params.names():
        merged[f"opt.m.{n}"] = Tensor(state.opt.m[n])
        merged[f"opt.v.{n}"] = Tensor(state.opt.v[n])
    extra = {"epoch": state.epoch, "global_step": state.global_step,
             "best_dev_bleu": state.best_dev_bleu,
             "best_epoch": state.best_epoch,
             "evals_since_improve": state.evals_since_improve,
             "opt_t": state.opt.t, "kind": "train-state"}
    names = sorted(merged)
    tensors = []
    offset = 0
    for name in names:
        arr = merged[name].data
        tensors.append({"name": name, "shape": list(arr.shape),
                        "dtype": "<f8", "offset": offset,
                        "nbytes": arr.nbytes})
        offset += arr.nbytes
    from .network import CKPT_MAGIC, _config_to_dict
    header = {"format_version": 1, "config": _config_to_dict(params.config),
              "tensors": tensors, "extra": extra}
    blob = json.dumps(header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        for name in names:
            f.write(np.ascontiguousarray(merged[name].data,
                                         dtype="<f8").tobytes())


def load_train_state(path, cfg: TrainConfig) -> TrainState:
    from .network import CKPT_MAGIC, _config_from_dict, NetworkError
    with open(path, "rb") as f:
        if f.read(len(CKPT_MAGIC)) != CKPT_MAGIC:
            raise NetworkError(f"not a checkpoint file: {path}")
        blob_len = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(blob_len).decode("utf-8"))
        if header["extra"].get("kind") != "train-state":
            raise NetworkError(f"not a train-state file: {path}")
        model_cfg = _config_from_dict(header["config"])
        arrays = {}
        for rec in header["tensors"]:
            raw = f.read(rec["nbytes"])
            arrays[rec["name"]] = np.frombuffer(raw, dtype="<f8") \
                .reshape(rec["shape"]).copy()
    specs = param_specs(model_cfg)
    tensors = {n: Tensor(arrays[n], requires_grad=True) for n in specs}
    params = ModelParams(model_cfg, tensors)
    opt = Adam(params, lr=cfg.lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
               eps=cfg.adam_eps, clip=cfg.grad_clip)
    extra = header["extra"]
    opt.t = extra["opt_t"]
    for n in specs:
        opt.m[n] = arrays[f"opt.m.{n}"]
        opt.v[n] = arrays[f"opt.v.{n}"]
    return TrainState(params=params, opt=opt, epoch=extra["epoch"],
                      global_step=extra["global_step"],
                      best_dev_bleu=extra["best_dev_bleu"],
                      best_epoch=extra["best_epoch"],
                      evals_since_improve=extra["evals_since_improve"])
