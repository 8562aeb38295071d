"""Parameterized components: shared word-averaging semantic encoder,
per-language BiLSTM syntactic encoders, shared LSTM decoder steered by a
target-language tag, and the word-position classifier head. All forwards
build autodiff graphs; grad_check verifies every component against central
finite differences.
"""

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _core
from . import autodiff as ad
from .autodiff import Tensor
from .latent import LatentConfig

CKPT_MAGIC = b"MVGCKPT1"


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    languages: tuple
    pad_id: int
    bos_id: int
    eos_id: int
    tag_ids: dict  # lang -> reserved tag id
    n_reserved: int
    d_emb: int = 64
    d_hid: int = 512
    max_len: int = 64
    latent: LatentConfig = field(default_factory=LatentConfig)

    @classmethod
    def from_bpe(cls, bpe, **kw):
        return cls(vocab_size=len(bpe), languages=tuple(bpe.languages),
                   pad_id=bpe.pad_id, bos_id=bpe.bos_id, eos_id=bpe.eos_id,
                   tag_ids=dict(bpe.tag_ids), n_reserved=bpe.n_reserved, **kw)


def param_specs(cfg: ModelConfig):
    """Ordered name -> shape map; single source of truth for init and
    checkpoint validation."""
    V, E, H = cfg.vocab_size, cfg.d_emb, cfg.d_hid
    ds, dz = cfg.latent.d_sem, cfg.latent.d_syn
    specs = {
        "sem_embed": (V, E),
        "syn_embed": (V, E),
        "sem_ffn.W1": (E, H), "sem_ffn.b1": (H,),
        "sem_ffn.W2": (H, ds), "sem_ffn.b2": (ds,),
    }
    for lang in cfg.languages:
        for d in ("fwd", "bwd"):
            specs[f"syn_rnn.{lang}.{d}.Wx"] = (E, 4 * H)
            specs[f"syn_rnn.{lang}.{d}.Wh"] = (H, 4 * H)
            specs[f"syn_rnn.{lang}.{d}.b"] = (4 * H,)
        specs[f"syn_ffn.{lang}.W1"] = (2 * H, H)
        specs[f"syn_ffn.{lang}.b1"] = (H,)
        specs[f"syn_ffn.{lang}.W2"] = (H, 2 * dz)
        specs[f"syn_ffn.{lang}.b2"] = (2 * dz,)
    specs.update({
        "dec_embed": (V, E),
        "dec_rnn.Wx": (E + ds + dz, 4 * H),
        "dec_rnn.Wh": (H, 4 * H),
        "dec_rnn.b": (4 * H,),
        "dec_init.W": (ds + dz, 2 * H), "dec_init.b": (2 * H,),
        "out_proj.W": (H, V), "out_proj.b": (V,),
        "wpl_ffn.W1": (E + dz, H), "wpl_ffn.b1": (H,),
        "wpl_ffn.W2": (H, H), "wpl_ffn.b2": (H,),
        "wpl_ffn.W3": (H, cfg.max_len), "wpl_ffn.b3": (cfg.max_len,),
    })
    return specs


class ModelParams:
    def __init__(self, config: ModelConfig, tensors):
        self.config = config
        self.tensors = dict(tensors)
        specs = param_specs(config)
        if set(self.tensors) != set(specs):
            missing = sorted(set(specs) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(specs))
            raise NetworkError(f"parameter set mismatch: missing={missing} "
                               f"extra={extra}")
        for name, shape in specs.items():
            if self.tensors[name].data.shape != shape:
                raise NetworkError(
                    f"shape mismatch for {name}: "
                    f"{self.tensors[name].data.shape} != {shape}")
        if self.tensors["sem_embed"] is self.tensors["syn_embed"]:
            raise NetworkError("semantic and syntactic embeddings must be "
                               "distinct parameter blocks")

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return sorted(self.tensors)

    def zero_grads(self):
        for t in self.tensors.values():
            t.grad = None

    def clone(self):
        return ModelParams(self.config, {
            n: Tensor(t.data.copy(), requires_grad=True)
            for n, t in self.tensors.items()})


def init_params(config: ModelConfig, seed) -> ModelParams:
    """uniform(-0.1, 0.1) init, recurrent forget-gate bias +1."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
    tensors = {}
    for name, shape in param_specs(config).items():
        data = rng.uniform(-0.1, 0.1, size=shape)
        if name.endswith(".b") and ("rnn" in name):
            data[config.d_hid:2 * config.d_hid] += 1.0
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(config, tensors)


# ---------------------------------------------------------------------------
# forward passes

def _content_mask(ids, n_reserved):
    return (np.asarray(ids) >= n_reserved).astype(np.float64)


def _ffn2(x, w1, b1, w2, b2):
    h = ad.tanh(ad.add(ad.matmul(x, w1), b1))
    return ad.add(ad.matmul(h, w2), b2)


def sem_encode_batch(params, ids):
    """Word-averaging semantic encoder -> unit mean directions (B, d_sem).

    Averages sem_embed over content positions (reserved IDs masked out), so
    the posterior is invariant to token order by construction.
    """
    cfg = params.config
    mask = _content_mask(ids, cfg.n_reserved)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise NetworkError("cannot encode a sequence of only special tokens")
    emb = ad.embedding(params["sem_embed"], ids)
    avg = ad.mul(ad.tsum(ad.mul(emb, Tensor(mask[:, :, None])), axis=1),
                 Tensor(1.0 / counts[:, None]))
    out = _ffn2(avg, params["sem_ffn.W1"], params["sem_ffn.b1"],
                params["sem_ffn.W2"], params["sem_ffn.b2"])
    return ad.l2_normalize(out)


def _lstm_run(emb, wx, wh, b, h0=None, c0=None):
    """Run an LSTM over emb (B, T, E); returns the list of h tensors."""
    bsz, steps, _ = emb.shape
    hdim = wh.shape[0]
    pre_x = ad.add(ad.reshape(ad.matmul(
        ad.reshape(emb, (bsz * steps, emb.shape[2])), wx),
        (bsz, steps, 4 * hdim)), b)
    h = h0 if h0 is not None else Tensor(np.zeros((bsz, hdim)))
    c = c0 if c0 is not None else Tensor(np.zeros((bsz, hdim)))
    hs = []
    for t in range(steps):
        pre = ad.add(ad.reshape(ad.narrow(pre_x, 1, t, 1), (bsz, 4 * hdim)),
                     ad.matmul(h, wh))
        hc = ad.lstm_cell(pre, c)
        h = ad.narrow(hc, 1, 0, hdim)
        c = ad.narrow(hc, 1, hdim, hdim)
        hs.append(h)
    return hs


def syn_encode_batch(params, ids, lens, lang):
    """BiLSTM syntactic encoder -> (mu, log_sigma) tensors, each (B, d_syn)."""
    cfg = params.config
    if lang not in cfg.tag_ids:
        raise NetworkError(f"undeclared language: {lang!r}")
    ids = np.asarray(ids, dtype=np.int64)
    lens = np.asarray(lens, dtype=np.int64)
    bsz, steps = ids.shape
    rev = np.full_like(ids, cfg.pad_id)
    for bi in range(bsz):
        rev[bi, :lens[bi]] = ids[bi, :lens[bi]][::-1]

    def direction(seq_ids, suffix):
        emb = ad.embedding(params["syn_embed"], seq_ids)
        hs = _lstm_run(emb, params[f"syn_rnn.{lang}.{suffix}.Wx"],
                       params[f"syn_rnn.{lang}.{suffix}.Wh"],
                       params[f"syn_rnn.{lang}.{suffix}.b"])
        return ad.gather_bt(ad.stack(hs, axis=0), lens - 1)

    both = ad.concat([direction(ids, "fwd"), direction(rev, "bwd")], axis=1)
    out = _ffn2(both, params[f"syn_ffn.{lang}.W1"],
                params[f"syn_ffn.{lang}.b1"],
                params[f"syn_ffn.{lang}.W2"], params[f"syn_ffn.{lang}.b2"])
    dz = cfg.latent.d_syn
    return ad.narrow(out, 1, 0, dz), ad.narrow(out, 1, dz, dz)


def decoder_logits_batch(params, y, z, in_ids):
    """Teacher-forced decoder logits (B, T, V); each step consumes
    [token embedding; y; z], initial state is a linear map of [y; z]."""
    cfg = params.config
    in_ids = np.asarray(in_ids, dtype=np.int64)
    bsz, steps = in_ids.shape
    hdim = cfg.d_hid
    yz = ad.concat([y, z], axis=1)
    hc0 = ad.add(ad.matmul(yz, params["dec_init.W"]), params["dec_init.b"])
    h0 = ad.narrow(hc0, 1, 0, hdim)
    c0 = ad.narrow(hc0, 1, hdim, hdim)

    emb = ad.embedding(params["dec_embed"], in_ids)
    wx = params["dec_rnn.Wx"]
    wx_e = ad.narrow(wx, 0, 0, cfg.d_emb)
    wx_yz = ad.narrow(wx, 0, cfg.d_emb, wx.shape[0] - cfg.d_emb)
    pre_e = ad.reshape(ad.matmul(ad.reshape(emb, (bsz * steps, cfg.d_emb)),
                                 wx_e), (bsz, steps, 4 * hdim))
    pre_yz = ad.reshape(ad.matmul(yz, wx_yz), (bsz, 1, 4 * hdim))
    pre_x = ad.add(ad.add(pre_e, pre_yz), params["dec_rnn.b"])

    h, c = h0, c0
    hs = []
    for t in range(steps):
        pre = ad.add(ad.reshape(ad.narrow(pre_x, 1, t, 1), (bsz, 4 * hdim)),
                     ad.matmul(h, params["dec_rnn.Wh"]))
        hc = ad.lstm_cell(pre, c)
        h = ad.narrow(hc, 1, 0, hdim)
        c = ad.narrow(hc, 1, hdim, hdim)
        hs.append(h)
    flat = ad.reshape(ad.stack(hs, axis=1), (bsz * steps, hdim))
    logits = ad.add(ad.matmul(flat, params["out_proj.W"]),
                    params["out_proj.b"])
    return ad.reshape(logits, (bsz, steps, cfg.vocab_size))


def decode_logits(params, y, z, prefix_ids, lang):
    """Single-sequence teacher forcing: prefix_ids is the forced target with
    the language tag first; rows align with prefix positions."""
    cfg = params.config
    if lang not in cfg.tag_ids:
        raise NetworkError(f"undeclared language: {lang!r}")
    prefix_ids = list(prefix_ids)
    if not prefix_ids or prefix_ids[0] != cfg.tag_ids[lang]:
        raise NetworkError("prefix must start with the target-language tag")
    y = y if isinstance(y, Tensor) else Tensor(y)
    z = z if isinstance(z, Tensor) else Tensor(z)
    if y.data.shape[-1] != cfg.latent.d_sem or \
            z.data.shape[-1] != cfg.latent.d_syn:
        raise NetworkError("latent dimension mismatch")
    if abs(np.linalg.norm(y.data) - 1.0) > 1e-4:
        raise NetworkError("semantic latent must be unit-norm")
    in_ids = np.array([[cfg.bos_id] + prefix_ids[:-1]])
    out = decoder_logits_batch(params, ad.reshape(y, (1, -1)),
                               ad.reshape(z, (1, -1)), in_ids)
    return ad.reshape(out, (len(prefix_ids), cfg.vocab_size))


def sequence_nll(params, y, z, dec_ids, dec_lens):
    """Per-sentence reconstruction NLL (B,) for targets [ids..., eos] under
    teacher forcing; pad positions excluded."""
    cfg = params.config
    dec_ids = np.asarray(dec_ids, dtype=np.int64)
    lens = np.asarray(dec_lens, dtype=np.int64)
    bsz, td = dec_ids.shape
    steps = td + 1
    inp = np.full((bsz, steps), cfg.pad_id, dtype=np.int64)
    tgt = np.full((bsz, steps), cfg.pad_id, dtype=np.int64)
    for bi in range(bsz):
        L = lens[bi]
        inp[bi, 0] = cfg.bos_id
        inp[bi, 1:L + 1] = dec_ids[bi, :L]
        tgt[bi, :L] = dec_ids[bi, :L]
        tgt[bi, L] = cfg.eos_id
    logits = decoder_logits_batch(params, y, z, inp)
    flat = ad.reshape(logits, (bsz * steps, cfg.vocab_size))
    nll = ad.softmax_cross_entropy(flat, tgt.reshape(-1))
    mask = (tgt != cfg.pad_id).astype(np.float64)
    masked = ad.mul(ad.reshape(nll, (bsz, steps)), Tensor(mask))
    return ad.tsum(masked, axis=1)


def wpl_logits_batch(params, ids, z):
    """Word-position logits (B*T, max_len) from [syn_embed(id); z]."""
    cfg = params.config
    ids = np.asarray(ids, dtype=np.int64)
    bsz, steps = ids.shape
    if steps > cfg.max_len:
        raise NetworkError(f"sequence length {steps} exceeds max_len "
                           f"{cfg.max_len}")
    emb = ad.reshape(ad.embedding(params["syn_embed"], ids),
                     (bsz * steps, cfg.d_emb))
    zz = ad.reshape(z, (bsz, 1, z.shape[1]))
    zrep = ad.reshape(ad.add(zz, Tensor(np.zeros((bsz, steps, 1)))),
                      (bsz * steps, z.shape[1]))
    x = ad.concat([emb, zrep], axis=1)
    h1 = ad.tanh(ad.add(ad.matmul(x, params["wpl_ffn.W1"]),
                        params["wpl_ffn.b1"]))
    h2 = ad.tanh(ad.add(ad.matmul(h1, params["wpl_ffn.W2"]),
                        params["wpl_ffn.b2"]))
    return ad.add(ad.matmul(h2, params["wpl_ffn.W3"]), params["wpl_ffn.b3"])


def wpl_logits(params, seq_ids, z):
    """Single-sequence position logits, one row per position."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    return wpl_logits_batch(params, np.array([seq_ids]),
                            ad.reshape(z, (1, -1)))


# ---------------------------------------------------------------------------
# gradient checking

class GradCheckError(RuntimeError):
    pass


def grad_check(loss_fn, params, names=None, eps=1e-5, max_coords=24, seed=0):
    """Compare analytic gradients of loss_fn() against central differences.

    loss_fn must be deterministic (fix any sampling noise before calling).
    Checks up to max_coords coordinates per tensor; returns the max relative
    error and a per-tensor report dict. The error denominator is floored at
    1e-4 so coordinates whose true gradient sits below finite-difference
    resolution (loss deltas near machine epsilon) do not read as failures.
    """
    params.zero_grads()
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise GradCheckError("loss is non-finite")
    loss.backward()
    rng = np.random.default_rng(seed)
    report = {}
    worst = 0.0
    for name in (names or params.names()):
        t = params[name]
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise GradCheckError(f"non-finite gradient in tensor {name}")
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        size = t.data.size
        coords = np.arange(size) if size <= max_coords else \
            rng.choice(size, size=max_coords, replace=False)
        tmax = 0.0
        for flat in coords:
            orig = t.data.flat[flat]
            t.data.flat[flat] = orig + eps
            up = loss_fn().item()
            t.data.flat[flat] = orig - eps
            dn = loss_fn().item()
            t.data.flat[flat] = orig
            num = (up - dn) / (2 * eps)
            an = analytic.flat[flat]
            err = abs(an - num) / max(abs(an) + abs(num), 1e-4)
            tmax = max(tmax, err)
        report[name] = tmax
        worst = max(worst, tmax)
    return worst, report


# ---------------------------------------------------------------------------
# checkpoint container

def _config_to_dict(cfg: ModelConfig):
    d = asdict(cfg)
    d["languages"] = list(cfg.languages)
    return d


def _config_from_dict(d):
    d = dict(d)
    d["languages"] = tuple(d["languages"])
    d["latent"] = LatentConfig(**d["latent"])
    return ModelConfig(**d)


def save_checkpoint(params: ModelParams, path, extra=None):
    """Self-describing binary container: magic, json header (config, tensor
    table, format version), then raw little-endian float64 payload.
    Byte-deterministic for identical params."""
    names = params.names()
    tensors = []
    offset = 0
    for name in names:
        arr = params[name].data
        tensors.append({"name": name, "shape": list(arr.shape),
                        "dtype": "<f8", "offset": offset,
                        "nbytes": arr.nbytes})
        offset += arr.nbytes
    header = {"format_version": 1,
              "config": _config_to_dict(params.config),
              "tensors": tensors,
              "extra": extra or {}}
    blob = json.dumps(header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        for name in names:
            f.write(np.ascontiguousarray(
                params[name].data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (ModelParams, extra dict); rejects shape mismatches."""
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise NetworkError(f"not a checkpoint file: {path}")
        blob_len = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(blob_len).decode("utf-8"))
        if header.get("format_version") != 1:
            raise NetworkError(
                f"unsupported checkpoint version: {header.get('format_version')}")
        cfg = _config_from_dict(header["config"])
        specs = param_specs(cfg)
        tensors = {}
        for rec in header["tensors"]:
            name = rec["name"]
            if name not in specs:
                raise NetworkError(f"unknown tensor in checkpoint: {name}")
            if tuple(rec["shape"]) != specs[name]:
                raise NetworkError(
                    f"checkpoint shape mismatch for {name}: "
                    f"{tuple(rec['shape'])} != {specs[name]}")
            raw = f.read(rec["nbytes"])
            arr = np.frombuffer(raw, dtype="<f8").reshape(rec["shape"]).copy()
            tensors[name] = Tensor(arr, requires_grad=True)
    return ModelParams(cfg, tensors), header.get("extra", {})
