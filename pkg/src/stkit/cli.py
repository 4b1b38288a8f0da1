"""Command-line entry point.

Subcommands: codec, lape, pack, eval, forge, selftest. All randomness
flows from explicit --seed flags; no wall-clock or OS entropy is used
anywhere, so every seeded invocation is reproducible byte-for-byte.

Exit codes: 0 success, 1 selftest failure, 2 usage/schema/parse error,
3 no output produced.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .codec import (
    BBox,
    CoordVocab,
    SpatioTemporalTube,
    TemporalSpan,
    box_from_text,
    box_to_text,
    decode_span,
    decode_tube,
    dequantize,
    encode_span,
    encode_tube,
    quantize,
)
from .errors import DomainError, ParseError, SchemaError, ShapeError
from .forge import ALL_TASKS, forge_file
from .metrics import (
    TASKS,
    aggregate,
    emit_caption_pairs,
    load_records_jsonl,
    match_records,
    report_to_text,
    validate_or_raise,
)
from .packer import PackerConfig, PackerParams, spatial_pack, temporal_pack
from .posembed import EmbeddingTables, position_grid, resize_grid, resize_grid_image
from .rng import make_generator
from .selftest import run_selftest
from .tensorio import load_tensor, save_tensor


def _add_vocab_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--m-w", type=int, default=100, help="width anchor count")
    parser.add_argument("--m-h", type=int, default=100, help="height anchor count")
    parser.add_argument("--m-t", type=int, default=100, help="time anchor count")


def _vocab(args: argparse.Namespace) -> CoordVocab:
    return CoordVocab(m_w=args.m_w, m_h=args.m_h, m_t=args.m_t)


def _parse_floats(text: str, n: int, what: str) -> list[float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise ParseError(f"{what} needs {n} comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(f"{what}: {exc}") from exc


def cmd_codec(args: argparse.Namespace) -> int:
    vocab = _vocab(args)
    if args.quantize is not None:
        print(quantize(args.quantize, args.m))
    elif args.dequantize is not None:
        print(repr(dequantize(args.dequantize, args.m)))
    elif args.encode_box is not None:
        vals = _parse_floats(args.encode_box, 4, "--encode-box")
        print(box_to_text(BBox(*vals), vocab))
    elif args.decode_box is not None:
        box = box_from_text(args.decode_box, vocab)
        print(json.dumps(box.as_list()))
    elif args.encode_span is not None:
        vals = _parse_floats(args.encode_span, 2, "--encode-span")
        print(encode_span(TemporalSpan(*vals), vocab))
    elif args.decode_span is not None:
        span = decode_span(args.decode_span, vocab)
        print(json.dumps([span.start, span.end]))
    elif args.encode_tube is not None:
        raw = args.encode_tube
        text = raw if raw.lstrip().startswith(("[", "{")) else Path(raw).read_text()
        data = json.loads(text)
        if isinstance(data, dict):
            data = data["keyframes"]
        tube = SpatioTemporalTube.from_keyframes(
            (float(ts), BBox(*(float(v) for v in box))) for ts, box in data
        )
        print(encode_tube(tube, vocab))
    elif args.decode_tube is not None:
        tube = decode_tube(args.decode_tube, vocab)
        payload = {
            "span": [tube.span.start, tube.span.end],
            "keyframes": [[ts, box.as_list()] for ts, box in tube.keyframes],
        }
        print(json.dumps(payload))
    else:
        raise ParseError("codec: choose one action flag (see --help)")
    return 0


def cmd_lape(args: argparse.Namespace) -> int:
    vocab = _vocab(args)
    if args.tables_in:
        tables = EmbeddingTables.load(args.tables_in)
    elif args.zero_tables:
        tables = EmbeddingTables.zeros(vocab, args.dim)
    else:
        tables = EmbeddingTables.random(vocab, args.dim, seed=args.seed)
    if args.save_tables:
        tables.save(args.save_tables)
    grid = position_grid(tables)
    if args.image:
        w1, h1 = (int(v) for v in _parse_floats(args.target, 2, "--target"))
        out = resize_grid_image(grid, w1, h1)
    else:
        w1, h1, n = (int(v) for v in _parse_floats(args.target, 3, "--target"))
        out = resize_grid(grid, w1, h1, n)
    save_tensor(args.out, out)
    print(f"wrote {args.out} shape {out.shape}")
    return 0


def cmd_pack(args: argparse.Namespace) -> int:
    if args.no_packer_s and args.no_packer_t:
        raise ParseError("--no-packer-s and --no-packer-t cannot both be set")
    cfg = PackerConfig(
        w1=args.w1,
        h1=args.h1,
        n_frames=args.n_frames,
        k1=args.k1,
        k2=args.k2,
        sigma=args.sigma,
    )
    if args.input:
        v = load_tensor(args.input)
        if v.ndim != 4:
            raise ShapeError(f"input tensor must be rank 4, got {v.shape}")
    else:
        g = make_generator(args.seed, "pack-input")
        v = g.standard_normal((cfg.w1, cfg.h1, cfg.n_frames, args.dim))
    if v.shape[:3] != (cfg.w1, cfg.h1, cfg.n_frames):
        raise ShapeError(
            f"input shape {v.shape} does not match config "
            f"({cfg.w1}, {cfg.h1}, {cfg.n_frames}, D)"
        )
    dim = v.shape[3]

    if args.params_dir:
        base = Path(args.params_dir)
        params_first = PackerParams.load(base / "stage1")
        params_spatial = (
            params_first if args.tie_spatial_params else PackerParams.load(base / "spatial")
        )
        params_temporal = PackerParams.load(base / "temporal")
    else:
        params_first = PackerParams.random(dim, args.seed, stream="packer-stage1")
        params_spatial = (
            params_first
            if args.tie_spatial_params
            else PackerParams.random(dim, args.seed, stream="packer-spatial")
        )
        params_temporal = PackerParams.random(dim, args.seed, stream="packer-temporal")
    if args.save_params:
        base = Path(args.save_params)
        params_first.save(base / "stage1")
        params_spatial.save(base / "spatial")
        params_temporal.save(base / "temporal")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reduced = spatial_pack(v, cfg.k1, params_first)
    outputs: dict[str, str] = {}
    tokens_t = tokens_s = 0
    rows = []
    if not args.no_packer_t:
        f_t = temporal_pack(reduced, cfg.sigma, params_temporal)
        save_tensor(out_dir / "f_t.stt1", f_t)
        outputs["f_t"] = str(out_dir / "f_t.stt1")
        tokens_t = cfg.tokens_temporal
        rows.append(f_t.transpose(2, 0, 1, 3).reshape(-1, dim))
    if not args.no_packer_s:
        f_s = spatial_pack(reduced, cfg.k2, params_spatial)
        save_tensor(out_dir / "f_s.stt1", f_s)
        outputs["f_s"] = str(out_dir / "f_s.stt1")
        tokens_s = cfg.tokens_spatial
        rows.append(f_s.transpose(2, 0, 1, 3).reshape(-1, dim))
    flat = np.concatenate(rows, axis=0)
    save_tensor(out_dir / "tokens.stt1", flat)
    outputs["tokens"] = str(out_dir / "tokens.stt1")

    summary = {
        "backend": kernels.active_backend(),
        "config": {
            "w1": cfg.w1,
            "h1": cfg.h1,
            "n_frames": cfg.n_frames,
            "k1": cfg.k1,
            "k2": cfg.k2,
            "sigma": cfg.sigma,
            "dim": dim,
        },
        "tokens_temporal": tokens_t,
        "tokens_spatial": tokens_s,
        "token_total": tokens_t + tokens_s,
        "outputs": outputs,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    task = args.task.upper()
    gts, gt_problems = load_records_jsonl(args.gt, task=task, strict=True)
    validate_or_raise(gt_problems, args.gt)
    if not gts:
        raise SchemaError(f"{args.gt}: no ground-truth records")
    preds, pred_problems = load_records_jsonl(args.pred, task=task, strict=False)
    if not preds and not pred_problems:
        raise SchemaError(f"{args.pred}: empty prediction file")
    pairs, diagnostics = match_records(gts, preds)
    report = aggregate(pairs, task, num_ticks=args.ticks)
    report.diagnostics.extend(f"pred line {n}: {m}" for n, m in pred_problems)
    report.diagnostics.extend(diagnostics)
    print(report_to_text(report))
    for diag in report.diagnostics:
        print(f"note: {diag}", file=sys.stderr)
    if args.report:
        Path(args.report).write_text(report.to_json())
    if args.captions_out:
        if task != "ELC":
            raise ParseError("--captions-out applies to --task elc only")
        n = emit_caption_pairs(pairs, args.captions_out)
        print(f"wrote {n} caption pairs to {args.captions_out}", file=sys.stderr)
    return 0


def cmd_forge(args: argparse.Namespace) -> int:
    vocab = _vocab(args)
    emitted, skipped = forge_file(args.input, args.out, args.task, vocab, args.seed)
    for line_no, reason in skipped:
        print(f"skipped line {line_no}: {reason}", file=sys.stderr)
    print(f"emitted {emitted} samples ({len(skipped)} skipped) to {args.out}")
    return 0 if emitted > 0 else 3


def cmd_selftest(args: argparse.Namespace) -> int:
    ok = run_selftest(inject_fault=args.inject_fault)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stkit",
        description="Spatio-temporal grounding toolkit",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "codec",
        help="encode/decode coordinates, boxes, spans, tubes",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_vocab_flags(p)
    p.add_argument("--m", type=int, default=100, help="anchor count for --quantize/--dequantize")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--quantize", type=float, help="coordinate in [0,1] to anchor index")
    group.add_argument("--dequantize", type=int, help="anchor index to coordinate")
    group.add_argument("--encode-box", help="x0,y0,x1,y1 to token text")
    group.add_argument("--decode-box", help="token text to JSON box")
    group.add_argument("--encode-span", help="start,end to span text")
    group.add_argument("--decode-span", help="span text to JSON [start, end]")
    group.add_argument("--encode-tube", help="tube JSON (inline or file path) to token text")
    group.add_argument("--decode-tube", help="tube token text to JSON")
    p.set_defaults(func=cmd_codec)

    p = sub.add_parser(
        "lape",
        help="build the coordinate-token positional grid and resize it to a feature grid",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_vocab_flags(p)
    p.add_argument("--dim", type=int, default=8, help="embedding dimension")
    p.add_argument("--seed", type=int, default=0, help="table initialization seed")
    p.add_argument("--zero-tables", action="store_true", help="use all-zero tables")
    p.add_argument("--tables-in", help="load tables from a directory instead of seeding")
    p.add_argument("--save-tables", help="also save the tables to this directory")
    p.add_argument("--image", action="store_true", help="image mode: time-zero slice only")
    p.add_argument(
        "--target",
        default="27,27,100",
        help="target grid w,h,n (video) or w,h (with --image)",
    )
    p.add_argument("--out", required=True, help="output STT1 path")
    p.set_defaults(func=cmd_lape)

    p = sub.add_parser(
        "pack",
        help="two-stage feature compression of a (w1,h1,n,D) tensor",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--input", help="input STT1 tensor; omit to use a seeded random input")
    p.add_argument("--dim", type=int, default=8, help="feature dim for the random input")
    p.add_argument("--w1", type=int, default=27, help="input width")
    p.add_argument("--h1", type=int, default=27, help="input height")
    p.add_argument("--n-frames", type=int, default=100, help="input frame count")
    p.add_argument("--k1", type=int, default=9, help="stage-one spatial grid")
    p.add_argument("--k2", type=int, default=3, help="spatial-stream output grid")
    p.add_argument("--sigma", type=int, default=20, help="temporal-stream output length")
    p.add_argument("--seed", type=int, default=0, help="parameter seed")
    p.add_argument("--params-dir", help="load packer parameters from this directory")
    p.add_argument("--save-params", help="save packer parameters to this directory")
    p.add_argument(
        "--tie-spatial-params",
        action="store_true",
        help="reuse stage-one spatial parameters for the spatial stream",
    )
    p.add_argument("--no-packer-s", action="store_true", help="drop the spatial stream")
    p.add_argument("--no-packer-t", action="store_true", help="drop the temporal stream")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser(
        "eval",
        help="score prediction JSONL against ground-truth JSONL",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--task", required=True, choices=[t.lower() for t in TASKS])
    p.add_argument("--gt", required=True, help="ground-truth JSONL")
    p.add_argument("--pred", required=True, help="prediction JSONL")
    p.add_argument("--ticks", type=int, default=100, help="time anchors for tube scoring")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--captions-out", help="write ELC caption pairs here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "forge",
        help="generate instruction samples from annotation JSONL",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_vocab_flags(p)
    p.add_argument("--task", required=True, choices=[t.lower() for t in ALL_TASKS])
    p.add_argument("--input", required=True, help="annotation JSONL")
    p.add_argument("--out", required=True, help="output sample JSONL")
    p.add_argument("--seed", type=int, required=True, help="generation seed (mandatory)")
    p.set_defaults(func=cmd_forge)

    p = sub.add_parser(
        "selftest",
        help="run the embedded invariant suite",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument(
        "--inject-fault",
        action="store_true",
        help="force one check to fail (testing hook)",
    )
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ParseError, ShapeError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
