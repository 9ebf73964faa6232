"""Command-line front end; each subcommand is a thin wrapper over the library."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import RunConfig
from .corpus import build_corpus_from_file, corpus_stats, read_biased_file, write_corpus
from .detector import bundled_lexicon_dir, load_lexicons, train_detector
from .editor import LossConfig, NoiseConfig, pretrain_autoencoder
from .engine.checkpoint import CheckpointError
from .evaluation import evaluate_system, sentence_of
from .persist import (
    Artifact,
    build_concurrent,
    build_detector,
    build_editor,
    load_artifact,
    save_artifact,
)
from .systems import ControlVector, ModularSystem, fine_tune, pretrain_concurrent
from .text import tokenize
from .vocab import Vocabulary


class CliError(Exception):
    pass


def _vocab_from_rows(rows, cap: int) -> Vocabulary:
    streams = []
    categories = set()
    for row in rows:
        streams.append(row["src_tokens"])
        streams.append(row["tgt_tokens"])
        categories.add(row["category"])
    return Vocabulary.build(streams, categories=sorted(categories), cap=cap)


def _read_rows(path):
    try:
        rows = read_biased_file(path)
    except OSError as err:
        raise CliError(f"cannot read corpus {path}: {err}")
    if not rows:
        raise CliError(f"corpus {path} is empty")
    return rows


def _triples(rows):
    return [(row["src_tokens"], row["tgt_tokens"], row["category"])
            for row in rows]


def _load(path, *kinds) -> Artifact:
    try:
        art = load_artifact(path)
    except (OSError, CheckpointError, ValueError) as err:
        raise CliError(f"cannot load model {path}: {err}")
    if kinds and art.kind not in kinds:
        raise CliError(
            f"model {path} is a {art.kind} artifact; need one of {kinds}")
    return art


def _parse_control(text: str | None):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise CliError(f"control must be comma-separated numbers, got {text!r}")


# -- subcommands ------------------------------------------------------------


def cmd_build_corpus(args) -> int:
    try:
        splits = build_corpus_from_file(args.input)
    except (OSError, ValueError) as err:
        raise CliError(str(err))
    write_corpus(splits, args.out)
    stats = corpus_stats(splits)
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_train_detector(args) -> int:
    rows = _read_rows(args.corpus)
    run = RunConfig(seed=args.seed).replace(detector_epochs=args.epochs)
    vocab = _vocab_from_rows(rows, run.vocab_cap)
    lexicons = load_lexicons(args.lexicons or bundled_lexicon_dir())
    detector = build_detector(run, vocab, lexicons)
    pairs = [(sentence_of(row["src_tokens"]), row["category"],
              [float(x) for x in row["labels"]]) for row in rows]
    losses = train_detector(detector, pairs, epochs=run.detector_epochs,
                            batch_size=run.batch_size, lr=run.lr_pretrain,
                            seed=run.seed)
    save_artifact(args.out, "detector", detector, run, vocab, lexicons)
    print(f"trained detector on {len(pairs)} pairs; "
          f"epoch losses {' '.join(f'{l:.4f}' for l in losses)}")
    return 0


def cmd_pretrain_editor(args) -> int:
    rows = _read_rows(args.corpus)
    run = RunConfig(seed=args.seed, mode=args.mode).replace(
        pretrain_steps=args.steps)
    vocab = _vocab_from_rows(rows, run.vocab_cap)
    sentences = [row["src_tokens"] for row in rows]
    noise = NoiseConfig(k=run.shuffle_k, p_drop=run.word_drop)
    if args.mode == "modular":
        editor = build_editor(run, vocab)
        losses = pretrain_autoencoder(editor, sentences,
                                      steps=run.pretrain_steps,
                                      batch_size=run.batch_size, noise=noise,
                                      lr=run.lr_pretrain, seed=run.seed)
        save_artifact(args.out, "editor", editor, run, vocab)
    else:
        system = build_concurrent(run, vocab)
        losses = pretrain_concurrent(system, sentences,
                                     steps=run.pretrain_steps,
                                     batch_size=run.batch_size, noise=noise,
                                     lr=run.lr_pretrain, seed=run.seed)
        save_artifact(args.out, "concurrent", system, run, vocab)
    print(f"pretrained on {len(sentences)} sentences; "
          f"final loss {losses[-1]:.4f}")
    return 0


def cmd_train(args) -> int:
    rows = _read_rows(args.corpus)
    pairs = _triples(rows)
    cfg = LossConfig(alpha=args.alpha)
    if args.mode == "modular":
        if not args.detector or not args.editor:
            raise CliError("modular training needs --detector and --editor")
        det_art = _load(args.detector, "detector")
        ed_art = _load(args.editor, "editor")
        if det_art.vocab.to_config() != ed_art.vocab.to_config():
            raise CliError("detector and editor vocabularies differ; "
                           "build both from the same corpus")
        run = det_art.run.replace(mode="modular", join_mode=args.join,
                                  alpha=args.alpha, beam_width=args.beam,
                                  finetune_steps=args.steps, seed=args.seed)
        system = ModularSystem(det_art.model, ed_art.model,
                               join_mode=args.join,
                               rng=np.random.default_rng(args.seed))
        if args.copy_mix and args.join != "gate":
            raise CliError("--copy-mix requires the gate join")
        losses = fine_tune(system, pairs, steps=args.steps,
                           batch_size=run.batch_size, lr=run.lr_finetune,
                           clip_norm=run.clip_norm, drop=run.dropout,
                           cfg=cfg, seed=args.seed, copy_mix=args.copy_mix)
        save_artifact(args.out, "modular", system, run, det_art.vocab,
                      det_art.lexicons)
    else:
        if args.join != "gate":
            raise CliError("concat join is only valid in modular mode")
        if args.copy_mix:
            raise CliError("--copy-mix requires modular gate training")
        if not args.editor:
            raise CliError("concurrent training needs --editor "
                           "(a pretrained concurrent artifact)")
        art = _load(args.editor, "concurrent")
        run = art.run.replace(mode="concurrent", alpha=args.alpha,
                              beam_width=args.beam, finetune_steps=args.steps,
                              seed=args.seed)
        losses = fine_tune(art.model, pairs, steps=args.steps,
                           batch_size=run.batch_size, lr=run.lr_finetune,
                           clip_norm=run.clip_norm, drop=run.dropout,
                           cfg=cfg, seed=args.seed)
        save_artifact(args.out, "concurrent", art.model, run, art.vocab)
    print(f"fine-tuned on {len(pairs)} pairs for {args.steps} steps; "
          f"final loss {losses[-1]:.4f}")
    return 0


def _print_detection(tokens, probabilities, as_json: bool) -> None:
    if as_json:
        print(json.dumps({"tokens": tokens, "probabilities": probabilities}))
        return
    print("tokens:        " + " ".join(tokens))
    print("probabilities: " + " ".join(f"{p:.3f}" for p in probabilities))


def _post(server: str, endpoint: str, payload: dict) -> dict:
    import httpx

    try:
        resp = httpx.post(server.rstrip("/") + endpoint, json=payload,
                          timeout=60.0)
    except httpx.HTTPError as err:
        raise CliError(f"server unreachable: {err}")
    body = resp.json()
    if resp.status_code != 200:
        raise CliError(f"{body.get('code', resp.status_code)}: "
                       f"{body.get('message', 'request failed')}")
    return body


def cmd_detect(args) -> int:
    if args.server:
        body = _post(args.server, "/api/detect",
                     {"text": args.text, "category": args.category})
        _print_detection(body["tokens"], body["probabilities"], args.json)
        return 0
    art = _load(args.model, "modular")
    try:
        sent = tokenize(args.text)
    except ValueError as err:
        raise CliError(str(err))
    probs = art.model.detector.detect(sent, args.category)
    _print_detection(sent.surfaces, [float(p) for p in probs], args.json)
    return 0


def cmd_neutralize(args) -> int:
    control = _parse_control(args.control)
    if args.server:
        body = _post(args.server, "/api/neutralize",
                     {"text": args.text, "category": args.category,
                      "control": control, "merge": args.merge})
        if args.json:
            print(json.dumps(body))
        else:
            _print_detection(body["tokens"], body["probabilities"], False)
            print("output:        " + body["output_text"])
        return 0
    art = _load(args.model, "modular", "concurrent")
    try:
        sent = tokenize(args.text)
    except ValueError as err:
        raise CliError(str(err))
    ctl = None
    if control is not None:
        try:
            ctl = ControlVector(tuple(control), merge=args.merge)
        except ValueError as err:
            raise CliError(str(err))
    try:
        result = art.model.neutralize(sent.norms, args.category, control=ctl,
                                      width=art.run.beam_width)
    except ValueError as err:
        raise CliError(str(err))
    probs = ([float(p) for p in result.p_used]
             if result.p_used is not None else [])
    if args.json:
        print(json.dumps({"tokens": sent.surfaces, "probabilities": probs,
                          "output_tokens": result.output_tokens,
                          "output_text": " ".join(result.output_tokens)}))
    else:
        _print_detection(sent.surfaces, probs, False)
        print("output:        " + " ".join(result.output_tokens))
    return 0


def cmd_evaluate(args) -> int:
    art = _load(args.model, "modular", "concurrent")
    rows = _read_rows(args.test)
    pairs = _triples(rows)
    labeled = None
    if art.kind == "modular" and all(sum(r["labels"]) == 1 for r in rows):
        labeled = [(sentence_of(r["src_tokens"]), r["category"],
                    [float(x) for x in r["labels"]]) for r in rows]
    report = evaluate_system(art.model, pairs, width=art.run.beam_width,
                             resamples=args.resamples, seed=args.seed,
                             labeled_pairs=labeled,
                             config={"model": str(args.model),
                                     "resamples": args.resamples,
                                     "seed": args.seed})
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
    print(report.table())
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    try:
        app = create_app(args.model)
    except (ValueError, CheckpointError, OSError) as err:
        raise CliError(str(err))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npov",
        description="Detect and rewrite subjectively biased wording.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-corpus", help="filter and split revision pairs")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("train-detector", help="train the tagging stage")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lexicons", default=None)
    p.set_defaults(func=cmd_train_detector)

    p = sub.add_parser("pretrain-editor",
                       help="denoising pretraining for a rewriting stage")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["modular", "concurrent"],
                   default="modular")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pretrain_editor)

    p = sub.add_parser("train", help="joint fine-tuning")
    p.add_argument("--mode", choices=["modular", "concurrent"],
                   required=True)
    p.add_argument("--join", choices=["gate", "concat"], default="gate")
    p.add_argument("--corpus", required=True)
    p.add_argument("--detector", default=None)
    p.add_argument("--editor", default=None)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--alpha", type=float, default=1.3)
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--copy-mix", type=float, default=0.0,
                   help="fraction of steps trained on copy targets with "
                        "the gate forced to zero (gate join only)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="per-token bias probabilities")
    p.add_argument("--model", default=None)
    p.add_argument("--server", default=None)
    p.add_argument("--text", required=True)
    p.add_argument("--category", default="unknown")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("neutralize", help="rewrite a sentence")
    p.add_argument("--model", default=None)
    p.add_argument("--server", default=None)
    p.add_argument("--text", required=True)
    p.add_argument("--category", default="unknown")
    p.add_argument("--control", default=None)
    p.add_argument("--merge", choices=["replace", "max"], default="replace")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_neutralize)

    p = sub.add_parser("evaluate", help="score a model on held-out pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) in (cmd_detect, cmd_neutralize):
        if not args.server and not args.model:
            parser.error("one of --model or --server is required")
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
