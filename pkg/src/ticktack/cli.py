"""Command-line entry point binding conversion, profiling, training, and eval.

Subcommands: convert, encode, profile, gen-tasks, fisher, train, eval.
Every artifact-producing command writes the fully resolved configuration
(config.ini) into its output directory; re-running with that file and the
same inputs reproduces the artifacts byte for byte at --threads 1.  The
TICKTACK_OUT environment variable re-roots relative output directories.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from pathlib import Path

import torch

from . import alignment, annotate, evaluation, geometry, model, runconfig, sexagenary
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import ConfigError, TicktackError
from .tokenizer import Tokenizer

_YEAR_ARG_RE = re.compile(r"^\s*(?:AD\s*)?([+-]?\d+)\s*(BCE|BC|AD)?\s*$", re.IGNORECASE)


def _parse_year_arg(text: str) -> int:
    m = _YEAR_ARG_RE.match(text)
    if not m:
        raise ConfigError(f"cannot parse year argument {text!r}")
    value = int(m.group(1))
    marker = (m.group(2) or "").upper()
    if marker in ("BCE", "BC"):
        value = -value
    return value


def _out_dir(arg: str) -> Path:
    path = Path(arg)
    root = os.environ.get("TICKTACK_OUT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return p


def _config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file (see --help epilog for keys)")
    parser.add_argument("--threads", type=int, help="torch CPU threads (1 = deterministic)")
    parser.add_argument("--seed", type=int, help="sets model.seed and training.seed together")


_FLAG_TO_SCHEMA = {
    "dim": ("model", "dim"),
    "n_layers": ("model", "n_layers"),
    "n_heads": ("model", "n_heads"),
    "max_seq_len": ("model", "max_seq_len"),
    "max_vocab": ("model", "max_vocab"),
    "adapter_rank": ("model", "adapter_rank"),
    "alpha": ("encoding", "alpha"),
    "beta": ("encoding", "beta"),
    "wavelength_base": ("encoding", "wavelength_base"),
    "delta": ("training", "delta"),
    "sigma": ("training", "sigma"),
    "ewc_lambda": ("training", "ewc_lambda"),
    "learning_rate": ("training", "learning_rate"),
    "batch_size": ("training", "batch_size"),
    "grad_accum_steps": ("training", "grad_accum_steps"),
    "epochs": ("training", "epochs"),
    "samples": ("fisher", "samples"),
}


def _model_flags(parser: argparse.ArgumentParser) -> None:
    for flag in ("dim", "n_layers", "n_heads", "max_seq_len", "max_vocab", "adapter_rank"):
        parser.add_argument(f"--{flag.replace('_', '-')}", type=int, dest=flag)
    for flag in ("alpha", "beta", "wavelength_base"):
        parser.add_argument(f"--{flag.replace('_', '-')}", type=float, dest=flag)


def _resolve(args) -> runconfig.RunConfig:
    overrides = {}
    for flag, sk in _FLAG_TO_SCHEMA.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[sk] = value
    if getattr(args, "threads", None) is not None:
        overrides[("run", "threads")] = args.threads
    if getattr(args, "seed", None) is not None:
        overrides[("model", "seed")] = args.seed
        overrides[("training", "seed")] = args.seed
    cfg = runconfig.resolve(getattr(args, "config", None), overrides)
    torch.set_num_threads(cfg.get("run", "threads"))
    return cfg


def _encoding_config(cfg: runconfig.RunConfig, dim: int) -> geometry.EncodingConfig:
    return geometry.EncodingConfig(
        alpha=cfg.get("encoding", "alpha"),
        beta=cfg.get("encoding", "beta"),
        dim=dim,
        wavelength_base=cfg.get("encoding", "wavelength_base"),
    )


def _model_config(cfg: runconfig.RunConfig, vocab_size: int) -> model.ModelConfig:
    return model.ModelConfig(
        vocab_size=vocab_size,
        dim=cfg.get("model", "dim"),
        n_layers=cfg.get("model", "n_layers"),
        n_heads=cfg.get("model", "n_heads"),
        max_seq_len=cfg.get("model", "max_seq_len"),
        adapter_rank=cfg.get("model", "adapter_rank"),
        seed=cfg.get("model", "seed"),
    )


def _load_corpus(path: Path) -> list[str]:
    return list(annotate.iter_corpus(path))


def _annotated(texts: list[str], tok: Tokenizer) -> list:
    return [annotate.annotate(t, tok) for t in texts]


def _json_dump(payload, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


# --- subcommands ---------------------------------------------------------


def _cmd_convert(args) -> int:
    cfg = _resolve(args)
    enc = _encoding_config(cfg, cfg.get("model", "dim"))
    rows = []
    for raw in args.years:
        year = _parse_year_arg(raw)
        idx = sexagenary.to_cycle_index(year)
        term = sexagenary.term_of(idx)
        polar = geometry.to_polar(year, enc)
        cart = geometry.to_cartesian(polar)
        rows.append(
            (year, idx.value, term.name, polar.theta_degrees, polar.radius, cart.x, cart.y)
        )
    print("year\tcycle_index\tterm\ttheta_deg\tradius\tx\ty")
    for row in rows:
        year, idx, name, theta, r, x, y = row
        print(f"{year}\t{idx}\t{name}\t{theta!r}\t{r!r}\t{x!r}\t{y!r}")
    return 0


def _cmd_encode(args) -> int:
    cfg = _resolve(args)
    enc = _encoding_config(cfg, cfg.get("model", "dim"))
    for raw in args.years:
        year = _parse_year_arg(raw)
        polar = geometry.to_polar(year, enc)
        cart = geometry.to_cartesian(polar)
        te_x, te_y = geometry.encode_year(year, enc)
        print(
            json.dumps(
                {
                    "year": year,
                    "cycle_index": sexagenary.to_cycle_index(year).value,
                    "theta_degrees": polar.theta_degrees,
                    "radius": polar.radius,
                    "x": cart.x,
                    "y": cart.y,
                    "te_x": te_x.tolist(),
                    "te_y": te_y.tolist(),
                },
                sort_keys=True,
            )
        )
    return 0


def _write_histogram_csv(hist, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_start", "bin_end", "count"])
        for (start, end), count in hist.bins:
            writer.writerow([start, end, count])


def _cmd_profile(args) -> int:
    cfg = _resolve(args)
    corpus_path = _require_file(args.corpus, "corpus")
    out = _out_dir(args.out)
    if args.view == "gregorian":
        hist = annotate.profile_gregorian(annotate.iter_corpus(corpus_path), args.bin_width)
    else:
        hist = annotate.profile_sexagenary(annotate.iter_corpus(corpus_path))
    metrics = {
        "view": args.view,
        "bin_width": hist.bin_width_years,
        "total": hist.total,
        "capable_bins": hist.capable_bins,
        "normalized_entropy": None,
        "chi_square": None,
    }
    if hist.total > 0:
        entropy, chi = annotate.uniformity_metrics(hist)
        metrics["normalized_entropy"] = entropy
        metrics["chi_square"] = chi
    else:
        print("warning: no year mentions found; uniformity metrics unavailable", file=sys.stderr)
    out.mkdir(parents=True, exist_ok=True)
    _write_histogram_csv(hist, out / f"histogram_{args.view}.csv")
    _json_dump(metrics, out / f"metrics_{args.view}.json")
    cfg.write(out / "config.ini")
    print(f"wrote histogram_{args.view}.csv and metrics_{args.view}.json to {out}")
    return 0


def _cmd_gen_tasks(args) -> int:
    cfg = _resolve(args)
    tasks = evaluation.generate_synthetic_tasks(
        seed=args.gen_seed,
        n_items=args.n_items,
        year_range=(args.year_min, args.year_max),
        n_entities=args.n_entities,
        n_fewshot=args.n_fewshot,
    )
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_items_jsonl(tasks.items, out / "items.jsonl")
    evaluation.write_items_jsonl(tasks.fewshot_pool, out / "fewshot.jsonl")
    evaluation.write_corpus_jsonl(tasks.corpus, out / "corpus.jsonl")
    cfg.write(out / "config.ini")
    print(
        f"wrote {len(tasks.items)} items, {len(tasks.fewshot_pool)} few-shot exemplars, "
        f"{len(tasks.corpus)} corpus sentences to {out}"
    )
    return 0


def _checkpoint_config(cfg: runconfig.RunConfig, mode: str, injection: bool) -> dict:
    return {
        "model": cfg.section("model"),
        "encoding": cfg.section("encoding"),
        "training": cfg.section("training"),
        "mode": mode,
        "injection": injection,
    }


def _cmd_fisher(args) -> int:
    cfg = _resolve(args)
    corpus_path = _require_file(args.corpus, "corpus")
    texts = _load_corpus(corpus_path)
    tok = Tokenizer.build(texts, max_size=cfg.get("model", "max_vocab"))
    seqs = _annotated(texts, tok)
    model_cfg = _model_config(cfg, tok.vocab_size)
    enc_cfg = _encoding_config(cfg, model_cfg.dim)
    base = model.init(model_cfg)
    fisher = alignment.estimate_fisher(
        base, seqs, model_cfg, enc_cfg, samples=cfg.get("fisher", "samples")
    )
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        out / "fisher.tkck",
        Checkpoint(
            config=_checkpoint_config(cfg, "fisher", False),
            seed=model_cfg.seed,
            step=0,
            tensors=fisher.values.to_numpy(),
            extra={"vocab": tok.id_to_token, "sample_count": fisher.sample_count},
        ),
    )
    cfg.write(out / "config.ini")
    print(f"wrote fisher.tkck ({fisher.sample_count} samples) to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve(args)
    corpus_path = _require_file(args.corpus, "corpus")
    texts = _load_corpus(corpus_path)
    tok = Tokenizer.build(texts, max_size=cfg.get("model", "max_vocab"))
    seqs = _annotated(texts, tok)
    model_cfg = _model_config(cfg, tok.vocab_size)
    enc_cfg = _encoding_config(cfg, model_cfg.dim)

    if args.mode == "pt":
        sigma, lam, injection = 0.0, 0.0, False
    else:
        sigma = cfg.get("training", "sigma")
        lam = cfg.get("training", "ewc_lambda")
        injection = cfg.get("training", "injection")
    train_cfg = alignment.TrainingConfig(
        delta=cfg.get("training", "delta"),
        sigma=sigma,
        ewc_lambda=lam,
        learning_rate=cfg.get("training", "learning_rate"),
        batch_size=cfg.get("training", "batch_size"),
        grad_accum_steps=cfg.get("training", "grad_accum_steps"),
        epochs=cfg.get("training", "epochs"),
        seed=cfg.get("training", "seed"),
    )

    fisher = None
    if sigma > 0 and lam > 0:
        if not args.fisher:
            raise ConfigError("--fisher is required unless ewc_lambda is 0 or mode is pt")
        fisher_ckpt = load_checkpoint(_require_file(args.fisher, "fisher file"))
        if fisher_ckpt.extra.get("vocab") != tok.id_to_token:
            raise ConfigError("fisher file was built with a different vocabulary/corpus")
        fisher = alignment.FisherDiagonal(
            values=model.ParameterSet.from_numpy(fisher_ckpt.tensors),
            sample_count=fisher_ckpt.extra.get("sample_count", 0),
        )

    base = model.init(model_cfg)
    result = alignment.train(
        base, seqs, train_cfg, model_cfg, enc_cfg, fisher=fisher, injection_enabled=injection
    )
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        out / "checkpoint.tkck",
        Checkpoint(
            config=_checkpoint_config(cfg, args.mode, injection),
            seed=model_cfg.seed,
            step=result.steps,
            tensors=result.params.to_numpy(),
            extra={"vocab": tok.id_to_token, "aborted": result.aborted},
        ),
    )
    alignment.write_metrics_csv(result.metrics, out / "metrics.csv")
    cfg.write(out / "config.ini")
    if result.aborted:
        print("error: non-finite loss; wrote last good checkpoint", file=sys.stderr)
        return 1
    print(f"trained {result.steps} steps ({args.mode}); wrote checkpoint.tkck to {out}")
    return 0


def _restore_checkpoint(path: Path):
    ckpt = load_checkpoint(path)
    stored = ckpt.config
    overrides = {}
    for sec in ("model", "encoding", "training"):
        for key, value in stored.get(sec, {}).items():
            overrides[(sec, key)] = value
    cfg = runconfig.resolve(None, overrides)
    vocab = ckpt.extra["vocab"]
    tok = Tokenizer(vocab)
    model_cfg = _model_config(cfg, tok.vocab_size)
    enc_cfg = _encoding_config(cfg, model_cfg.dim)
    params = model.ParameterSet.from_numpy(ckpt.tensors)
    return ckpt, cfg, tok, model_cfg, enc_cfg, params


def _cmd_eval(args) -> int:
    ckpt_path = _require_file(args.checkpoint, "checkpoint")
    items_path = _require_file(args.items, "items file")
    pool_path = _require_file(args.fewshot, "few-shot pool") if args.fewshot else None
    ckpt, cfg, tok, model_cfg, enc_cfg, params = _restore_checkpoint(ckpt_path)
    if args.threads is not None:
        torch.set_num_threads(args.threads)
    else:
        torch.set_num_threads(cfg.get("run", "threads"))
    injection = bool(ckpt.config.get("injection", False))
    items = evaluation.read_items_jsonl(items_path)
    pool = evaluation.read_items_jsonl(pool_path) if pool_path else None
    report = evaluation.evaluate_qa(
        params, model_cfg, enc_cfg, tok, items,
        shots=args.shots, fewshot_pool=pool, seed=args.eval_seed,
        injection_enabled=injection,
    )
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = evaluation.report_to_dict(report)
    payload.update(
        {"shots": args.shots, "seed": args.eval_seed, "injection": injection,
         "mode": ckpt.config.get("mode", "unknown")}
    )
    _json_dump(payload, out / "report.json")
    evaluation.write_report_csv(report, out / "buckets.csv")
    if args.export_embeddings:
        rows = []
        for item in items:
            text = item.question.replace("____", item.options[item.answer_index])
            seq = annotate.annotate(text, tok)
            _, hidden = model.forward(
                params, seq, model_cfg, enc_cfg,
                injection_enabled=injection, injection_year=item.year,
            )
            vec = model.sentence_embedding(hidden).detach().numpy()
            rows.append((item.year, sexagenary.to_cycle_index(item.year).value, vec))
        evaluation.export_embeddings_csv(rows, out / "embeddings.csv")
    if args.similarity_years:
        lo, hi = (int(v) for v in args.similarity_years.split(":"))
        years = [y for y in range(lo, hi + 1) if y != 0]
        sim = evaluation.year_similarity_matrix(
            params, model_cfg, enc_cfg, tok, years, args.probe_template,
            injection_enabled=injection,
        )
        with open(out / "similarity.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["year"] + [str(y) for y in sim.years])
            for i, year in enumerate(sim.years):
                writer.writerow([year] + [repr(float(v)) for v in sim.values[i]])
    cfg.write(out / "config.ini")
    print(
        f"accuracy {report.overall_accuracy:.4f} over {report.total} items "
        f"({args.shots}-shot); report in {out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ticktack",
        description="Sexagenary-cycle temporal encoding and alignment toolkit.",
        epilog="config keys:\n" + runconfig.schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="year -> cycle index, term, spiral coordinates")
    p.add_argument("years", nargs="+", help='years like "1864", "-75000", "75000BCE"')
    _config_flags(p)
    _model_flags(p)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("encode", help="print temporal encodings as JSON lines")
    p.add_argument("years", nargs="+")
    _config_flags(p)
    _model_flags(p)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("profile", help="histogram a corpus's year mentions")
    p.add_argument("corpus", help="newline-delimited JSON with a \"text\" field")
    p.add_argument("--view", choices=("gregorian", "sexagenary"), default="gregorian")
    p.add_argument("--bin-width", type=int, default=200)
    p.add_argument("--out", required=True, help="output directory")
    _config_flags(p)
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("gen-tasks", help="generate the synthetic long-span QA suite")
    p.add_argument("--seed", dest="gen_seed", type=int, default=0)
    p.add_argument("--n-items", type=int, default=120)
    p.add_argument("--year-min", type=int, default=-75000)
    p.add_argument("--year-max", type=int, default=2025)
    p.add_argument("--n-entities", type=int, default=16)
    p.add_argument("--n-fewshot", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_tasks, config=None, threads=None)

    p = sub.add_parser("fisher", help="estimate the diagonal Fisher at the base weights")
    p.add_argument("--corpus", required=True)
    p.add_argument("--samples", type=int, dest="samples")
    p.add_argument("--out", required=True)
    _config_flags(p)
    _model_flags(p)
    p.set_defaults(func=_cmd_fisher)

    p = sub.add_parser("train", help="post-train the toy model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=("ticktack", "pt"), default="ticktack",
                   help="full temporal objective, or plain next-token baseline")
    p.add_argument("--fisher", help="fisher.tkck file (required unless ewc_lambda=0 or pt)")
    p.add_argument("--out", required=True)
    for flag in ("delta", "sigma", "ewc_lambda", "learning_rate"):
        p.add_argument(f"--{flag.replace('_', '-')}", type=float, dest=flag)
    for flag in ("batch_size", "grad_accum_steps", "epochs"):
        p.add_argument(f"--{flag.replace('_', '-')}", type=int, dest=flag)
    _config_flags(p)
    _model_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score the synthetic QA items with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--shots", type=int, default=0)
    p.add_argument("--fewshot", help="held-out exemplar pool (required when shots > 0)")
    p.add_argument("--eval-seed", type=int, default=0, help="exemplar draw seed")
    p.add_argument("--export-embeddings", action="store_true")
    p.add_argument("--similarity-years", help="inclusive year range LO:HI for similarity.csv")
    p.add_argument("--probe-template", default="In {year}, Aldan opened the stone bridge.",
                   help="probe sentence for the similarity matrix; needs {year}")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TicktackError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
