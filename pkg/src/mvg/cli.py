"""Batch command-line surface.

Subcommands: gen-synth, bpe, train, generate, eval-para, eval-mt, eval-sts,
eval-syn, nn, bench. Config precedence is flags > --config file > defaults;
every report embeds the effective-config hash and seed. MVG_THREADS caps
BLAS threads and the tree-metric worker pool.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, fields, asdict


class CliError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    # latent space
    d_sem: int = 50
    d_syn: int = 50
    kappa: float = 80.0
    lambda_y: float = 1e-4
    lambda_z: float = 1e-3
    # model dims
    d_emb: int = 64
    d_hid: int = 512
    max_len: int = 64
    # training
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    grad_clip: float = 5.0
    noise_p: float = 0.9
    eval_every: int = 1
    patience: int = -1
    beam: int = 10
    max_gen_len: int = 32
    # subwords
    merges: int = 2000
    # synthetic world
    n_pairs: int = 1000
    lexemes_per_role: int = 20

    @classmethod
    def load(cls, path=None, overrides=None):
        data = {}
        if path:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
            unknown = sorted(set(data) - {f.name for f in fields(cls)})
            if unknown:
                raise CliError("unknown config keys: " + ", ".join(unknown))
        cfg = cls(**data)
        for key, val in (overrides or {}).items():
            if val is not None:
                setattr(cfg, key, val)
        return cfg

    def sha256(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _provenance(cfg: RunConfig):
    return {"config_sha256": cfg.sha256(), "seed": cfg.seed,
            "schema_version": 1}


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")


def _write_metric_csv(path, metrics):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for key in sorted(metrics):
            w.writerow([key, metrics[key]])


def _latent_config(cfg: RunConfig):
    from .latent import LatentConfig
    return LatentConfig(d_sem=cfg.d_sem, d_syn=cfg.d_syn, kappa=cfg.kappa,
                        lambda_y=cfg.lambda_y, lambda_z=cfg.lambda_z)


def _train_config(cfg: RunConfig):
    from .objective import TrainConfig
    return TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                       lr=cfg.lr, grad_clip=cfg.grad_clip,
                       noise_p=cfg.noise_p, eval_every=cfg.eval_every,
                       patience=cfg.patience, seed=cfg.seed, beam=cfg.beam,
                       max_gen_len=cfg.max_gen_len)


def _load_model(ckpt_path, bpe_path):
    from .network import load_checkpoint
    from .subword import load_bpe
    params, extra = load_checkpoint(ckpt_path)
    bpe = load_bpe(bpe_path)
    if len(bpe) != params.config.vocab_size:
        raise CliError(f"bpe vocabulary ({len(bpe)}) does not match "
                       f"checkpoint ({params.config.vocab_size})")
    return params, bpe, extra


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_synth(args):
    from .corpus import (SyntheticWorldConfig, RoleSpec, default_templates,
                         gen_synthetic_bitext, gen_synthetic_triples,
                         gen_sts_pairs, save_bitext, save_bank, save_triples,
                         save_world_config)
    cfg = RunConfig.load(args.config, {"seed": args.seed,
                                       "n_pairs": args.n_pairs})
    roles = tuple(RoleSpec(r.name, r.pos, cfg.lexemes_per_role)
                  for r in SyntheticWorldConfig().roles)
    wcfg = SyntheticWorldConfig(roles=roles, templates=default_templates(),
                                n_pairs=cfg.n_pairs, seed=cfg.seed)
    world, corpus, bank1, bank2, gold = gen_synthetic_bitext(wcfg)
    os.makedirs(args.out, exist_ok=True)
    save_world_config(wcfg, os.path.join(args.out, "world.json"))
    save_bitext(corpus, os.path.join(args.out, "corpus.tsv"))
    save_bank(bank1, os.path.join(args.out, f"bank.{bank1.lang}.txt"))
    save_bank(bank2, os.path.join(args.out, f"bank.{bank2.lang}.txt"))
    with open(os.path.join(args.out, "gold.jsonl"), "w",
              encoding="utf-8") as f:
        for rec in gold:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    n_triples = args.triples
    save_triples(gen_synthetic_triples(world, n_triples, "paraphrase",
                                       seed=cfg.seed),
                 os.path.join(args.out, "triples.para.jsonl"))
    save_triples(gen_synthetic_triples(world, n_triples, "translation",
                                       seed=cfg.seed),
                 os.path.join(args.out, "triples.mt.jsonl"))
    for lang in world.langs:
        rows = gen_sts_pairs(world, args.sts_pairs, lang, cfg.seed)
        with open(os.path.join(args.out, f"sts.{lang}.tsv"), "w",
                  encoding="utf-8") as f:
            for a, b, g in rows:
                f.write(f"{' '.join(a)}\t{' '.join(b)}\t{g}\n")
    _write_json(os.path.join(args.out, "gen_report.json"),
                {**_provenance(cfg), "n_pairs": len(corpus),
                 "n_triples_per_task": n_triples,
                 "languages": world.langs})
    print(f"wrote synthetic world ({len(corpus)} pairs) to {args.out}")
    return 0


def cmd_bpe(args):
    from .corpus import load_bitext
    from .subword import bpe_train, save_bpe
    cfg = RunConfig.load(args.config, {"seed": args.seed,
                                       "merges": args.merges})
    corpus, rejected = load_bitext(args.corpus, src_lang=args.src_lang,
                                   tgt_lang=args.tgt_lang)
    sents = [p.src_tokens for p in corpus] + [p.tgt_tokens for p in corpus]
    model = bpe_train(sents, cfg.merges, [args.src_lang, args.tgt_lang])
    save_bpe(model, args.out)
    print(f"trained bpe: {len(model.merges)} merges, vocab {len(model)} "
          f"({rejected} records rejected)")
    return 0


def cmd_train(args):
    from .corpus import load_bitext, load_triples
    from .network import ModelConfig
    from .objective import train
    from .subword import load_bpe
    cfg = RunConfig.load(args.config, {"seed": args.seed,
                                       "epochs": args.epochs,
                                       "batch_size": args.batch_size,
                                       "d_hid": args.d_hid,
                                       "d_emb": args.d_emb,
                                       "d_sem": args.d_sem,
                                       "d_syn": args.d_syn,
                                       "noise_p": args.noise_p,
                                       "lr": args.lr})
    bpe = load_bpe(args.bpe)
    corpus, _ = load_bitext(args.corpus, src_lang=bpe.languages[0],
                            tgt_lang=bpe.languages[1])
    dev = load_triples(args.dev) if args.dev else None
    mcfg = ModelConfig.from_bpe(bpe, d_emb=cfg.d_emb, d_hid=cfg.d_hid,
                                max_len=cfg.max_len,
                                latent=_latent_config(cfg))
    log = None
    if args.verbose:
        def log(row):
            if row.get("dev_bleu") != "":
                print(f"epoch {row['epoch']}: dev_bleu={row['dev_bleu']:.2f}")
    state, rows = train(_train_config(cfg), mcfg, bpe, corpus, dev,
                        args.out, resume_from=args.resume, log=log)
    _write_json(os.path.join(args.out, "train_report.json"),
                {**_provenance(cfg), "epochs_run": state.epoch,
                 "steps": state.global_step,
                 "best_dev_bleu": state.best_dev_bleu,
                 "best_epoch": state.best_epoch})
    print(f"trained {state.epoch} epochs ({state.global_step} steps); "
          f"best dev BLEU {state.best_dev_bleu:.2f} @ epoch "
          f"{state.best_epoch}")
    return 0


def cmd_generate(args):
    from .control import generate_for_triples
    from .corpus import load_triples
    cfg = RunConfig.load(args.config, {"seed": args.seed, "beam": args.beam})
    params, bpe, _ = _load_model(args.ckpt, args.bpe)
    triples = load_triples(args.triples)
    results = generate_for_triples(params, bpe, triples, beam=cfg.beam,
                                   max_len=cfg.max_gen_len)
    with open(args.out, "w", encoding="utf-8") as f:
        for rec in results:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    _write_json(args.out + ".meta.json",
                {**_provenance(cfg), "n": len(results),
                 "truncated": sum(r["truncated"] for r in results)})
    print(f"generated {len(results)} hypotheses -> {args.out}")
    return 0


def _load_hypotheses(path):
    hyps = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                hyps.append(json.loads(line))
    return hyps


def _eval_generation(args, task_kind):
    from .corpus import load_triples, load_world_config, SyntheticWorld, \
        load_bank
    from .metrics import bleu, rouge_n, rouge_l
    from .trees import st_score
    cfg = RunConfig.load(args.config, {"seed": args.seed})
    triples = load_triples(args.triples)
    hyps = _load_hypotheses(args.hyps)
    if len(triples) != len(hyps):
        raise CliError(f"{len(hyps)} hypotheses vs {len(triples)} triples")
    keep = [i for i, t in enumerate(triples) if t.task_kind == task_kind]
    if not keep:
        raise CliError(f"no {task_kind} triples in {args.triples}")
    triples = [triples[i] for i in keep]
    hyps = [hyps[i] for i in keep]
    hyp_tokens = [h["hypothesis"].split() for h in hyps]
    refs = [t.ref_tokens for t in triples]
    mode = args.metric_mode
    metrics = {
        "bleu": bleu([h if h else ["<empty>"] for h in hyp_tokens], refs,
                     mode=mode),
        "rouge1": rouge_n(hyp_tokens, refs, 1, mode=mode),
        "rouge2": rouge_n(hyp_tokens, refs, 2, mode=mode),
        "rougeL": rouge_l(hyp_tokens, refs, mode=mode),
    }

    parser = None
    if args.world:
        world = SyntheticWorld(load_world_config(args.world))

        def parser(tokens, lang):
            hit = world.analyze(tokens, lang)
            return hit[2] if hit else None
    elif args.bank:
        bank = load_bank(args.bank, lang="*")
        table = {tuple(tokens): tree for tokens, _, tree in bank.entries}

        def parser(tokens, lang):
            return table.get(tuple(tokens))

    if parser is not None:
        pairs_r, pairs_s = [], []
        for htoks, t in zip(hyp_tokens, triples):
            h_tree = parser(htoks, t.tgt_lang) if htoks else None
            r_tree = parser(t.ref_tokens, t.tgt_lang)
            s_tree = parser(t.syn_tokens, t.tgt_lang)
            if h_tree and r_tree:
                pairs_r.append((h_tree, r_tree))
            if h_tree and s_tree:
                pairs_s.append((h_tree, s_tree))
        metrics["st_coverage"] = len(pairs_r) / len(triples)
        metrics["st_r"] = st_score([a for a, _ in pairs_r],
                                   [b for _, b in pairs_r]) \
            if pairs_r else float("nan")
        metrics["st_s"] = st_score([a for a, _ in pairs_s],
                                   [b for _, b in pairs_s]) \
            if pairs_s else float("nan")
    report = {**_provenance(cfg), "task": task_kind, "n": len(triples),
              "metric_mode": mode, "metrics": metrics}
    _write_json(args.out + ".json", report)
    _write_metric_csv(args.out + ".csv", metrics)
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_eval_para(args):
    return _eval_generation(args, "paraphrase")


def cmd_eval_mt(args):
    return _eval_generation(args, "translation")


def cmd_eval_sts(args):
    from .metrics import sts_probe
    cfg = RunConfig.load(args.config, {"seed": args.seed})
    params, bpe, _ = _load_model(args.ckpt, args.bpe)
    pairs, gold = [], []
    with open(args.pairs, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise CliError(f"{args.pairs}:{lineno}: expected 3 columns")
            pairs.append(((cols[0].split(), args.lang),
                          (cols[1].split(), args.lang)))
            gold.append(float(cols[2]))
    report = sts_probe(params, bpe, pairs, gold)
    payload = {**_provenance(cfg), "lang": args.lang, "n": len(pairs),
               "report": report.to_dict()}
    _write_json(args.out + ".json", payload)
    _write_metric_csv(args.out + ".csv",
                      {"sem": report.sem_score, "syn": report.syn_score,
                       "delta": report.delta, **report.baselines})
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_eval_syn(args):
    from .corpus import load_bank
    from .metrics import syntax_probe
    cfg = RunConfig.load(args.config, {"seed": args.seed})
    params, bpe, _ = _load_model(args.ckpt, args.bpe)
    bank = load_bank(args.bank, lang=args.lang)
    reports = syntax_probe(params, bpe, bank, max_length=args.max_length,
                           per_length=args.per_length, seed=cfg.seed)
    payload = {**_provenance(cfg), "lang": args.lang,
               "reports": {k: r.to_dict() for k, r in reports.items()}}
    _write_json(args.out + ".json", payload)
    flat = {}
    for key, rep in reports.items():
        flat[f"{key}_sem"] = rep.sem_score
        flat[f"{key}_syn"] = rep.syn_score
        flat[f"{key}_delta"] = rep.delta
        for bk, bv in rep.baselines.items():
            flat[f"{key}_{bk}"] = bv
    _write_metric_csv(args.out + ".csv", flat)
    print(json.dumps({k: r.to_dict() for k, r in reports.items()},
                     sort_keys=True))
    return 0


def cmd_nn(args):
    from .control import nearest_neighbors
    cfg = RunConfig.load(args.config, {"seed": args.seed})
    params, bpe, _ = _load_model(args.ckpt, args.bpe)

    def read_lines(path):
        with open(path, encoding="utf-8") as f:
            return [line.split() for line in f.read().splitlines() if line]

    queries = read_lines(args.queries)
    pool = [(toks, args.lang) for toks in read_lines(args.pool)]
    with open(args.out, "w", encoding="utf-8") as f:
        for q in queries:
            ranked = nearest_neighbors(params, bpe, q, args.lang, pool,
                                       args.variable, args.k)
            rec = {"query": " ".join(q),
                   "neighbors": [{"index": i,
                                  "sentence": " ".join(pool[i][0]),
                                  "score": s} for i, s in ranked]}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    _write_json(args.out + ".meta.json",
                {**_provenance(cfg), "variable": args.variable,
                 "k": args.k, "n_queries": len(queries),
                 "pool_size": len(pool)})
    print(f"wrote neighbors for {len(queries)} queries -> {args.out}")
    return 0


def cmd_bench(args):
    from .bench import run_bench
    rows = run_bench(repeats=args.repeats)
    for row in rows:
        print(row)
    return 0


# ---------------------------------------------------------------------------

def _cap_threads():
    n = os.environ.get("MVG_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, n)


def build_parser():
    p = argparse.ArgumentParser(
        prog="mvg",
        description="Bitext-trained controlled paraphrase/translation model "
                    "and its evaluation battery")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("gen-synth", help="generate the synthetic world")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-pairs", type=int, default=None)
    sp.add_argument("--triples", type=int, default=200)
    sp.add_argument("--sts-pairs", type=int, default=200)
    sp.set_defaults(fn=cmd_gen_synth)

    sp = sub.add_parser("bpe", help="train the subword model")
    common(sp)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--merges", type=int, default=None)
    sp.add_argument("--src-lang", default="l1")
    sp.add_argument("--tgt-lang", default="l2")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_bpe)

    sp = sub.add_parser("train", help="train on a bitext corpus")
    common(sp)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--bpe", required=True)
    sp.add_argument("--dev", help="dev triples for early stopping")
    sp.add_argument("--out", required=True)
    sp.add_argument("--resume", help="resume from a state.ckpt")
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--d-hid", type=int, default=None)
    sp.add_argument("--d-emb", type=int, default=None)
    sp.add_argument("--d-sem", type=int, default=None)
    sp.add_argument("--d-syn", type=int, default=None)
    sp.add_argument("--noise-p", type=float, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("generate", help="controlled generation for triples")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--bpe", required=True)
    sp.add_argument("--triples", required=True)
    sp.add_argument("--beam", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_generate)

    for name, fn in (("eval-para", cmd_eval_para), ("eval-mt", cmd_eval_mt)):
        sp = sub.add_parser(name, help=f"score hypotheses ({name[5:]})")
        common(sp)
        sp.add_argument("--hyps", required=True)
        sp.add_argument("--triples", required=True)
        sp.add_argument("--world", help="world.json for parsing hypotheses")
        sp.add_argument("--bank", help="parse bank fallback for ST")
        sp.add_argument("--metric-mode", choices=("word", "char"),
                        default="word")
        sp.add_argument("--out", required=True,
                        help="report path prefix (.json/.csv)")
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("eval-sts", help="semantic similarity probe")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--bpe", required=True)
    sp.add_argument("--pairs", required=True,
                    help="TSV: sent_a, sent_b, gold similarity")
    sp.add_argument("--lang", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_eval_sts)

    sp = sub.add_parser("eval-syn", help="syntactic retrieval probe")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--bpe", required=True)
    sp.add_argument("--bank", required=True)
    sp.add_argument("--lang", required=True)
    sp.add_argument("--max-length", type=int, default=30)
    sp.add_argument("--per-length", type=int, default=300)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_eval_syn)

    sp = sub.add_parser("nn", help="nearest neighbors by latent variable")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--bpe", required=True)
    sp.add_argument("--queries", required=True, help="one sentence per line")
    sp.add_argument("--pool", required=True)
    sp.add_argument("--lang", required=True)
    sp.add_argument("--variable", choices=("semantic", "syntactic"),
                    required=True)
    sp.add_argument("-k", type=int, default=5)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_nn)

    sp = sub.add_parser("bench", help="compiled-vs-python kernel benchmark")
    sp.add_argument("--repeats", type=int, default=5)
    sp.set_defaults(fn=cmd_bench)
    return p


def main(argv=None):
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(json.dumps({"error": str(exc), "kind": "config"}),
              file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(json.dumps({"error": str(exc),
                          "kind": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
