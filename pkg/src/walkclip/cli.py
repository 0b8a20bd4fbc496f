"""Command line entry point: ``walkclip <subcommand> ...``.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .contrastive import ContrastiveTrainConfig, parse_pairs, rotation_pairs, train_projection_head, write_head, write_pairs
from .datamodel import DatasetError, SynthConfig, diagnose_file, parse_dataset, synthesize_dataset, write_dataset
from .evaluation import DEFAULT_PROJECTIONS, evaluate
from .pipeline import ROWS_BY_NAME, SAFE_SCOPES, PipelineError, RunConfig, read_predictions, run_pipeline
from .safe import SafeConfig, safe_transform
from .splits import make_split_plan, write_split_plan

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _dims(text: str) -> tuple[int, int, int]:
    dims = tuple(int(a) for a in text.split(","))
    if len(dims) != 3:
        raise argparse.ArgumentTypeError("dims must be three comma-separated integers")
    return dims  # type: ignore[return-value]


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_locations=args.n,
        dims=args.dims,
        spatial_extent=args.extent,
        autocorrelation_length=args.length,
        noise_std=args.noise,
        augment_copies=args.copies,
        seed=args.seed,
    )
    ds = synthesize_dataset(cfg)
    out = Path(args.output)
    write_dataset(ds, out)
    stamp = {"generator": "walkclip.synthesize_dataset", "config": asdict(cfg), "records": len(ds)}
    out.with_name(out.name + ".provenance.json").write_text(json.dumps(stamp, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(ds)} records to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    records, dims, diags = diagnose_file(args.path)
    if diags:
        for d in diags:
            print(d)
        print(f"INVALID, {len(diags)} problem(s)")
        return EXIT_INVALID
    print(f"OK, {len(records)} records, dims=({dims[0]}, {dims[1]}, {dims[2]})")
    return EXIT_OK


def cmd_safe(args) -> int:
    ds = parse_dataset(args.path)
    cfg = SafeConfig(args.radius, args.epsilon, args.power)
    xy = ds.coords()
    if len(ds) == 0:
        out = ds
    else:
        out = ds.with_embeddings(
            sat=safe_transform(ds.matrix("sat"), xy, cfg),
            street=safe_transform(ds.matrix("street"), xy, cfg),
        )
    write_dataset(out, args.output)
    print(f"wrote SAFE-enhanced dataset ({len(out)} records) to {args.output}")
    return EXIT_OK


def cmd_split(args) -> int:
    ds = parse_dataset(args.path)
    plan = make_split_plan(ds, args.test_fraction, args.k, args.seed)
    write_split_plan(plan, args.output)
    print(f"test groups: {len(plan.test_group_ids)}; fold groups: {[len(f) for f in plan.folds]}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    if args.pairs:
        pairs = parse_pairs(args.pairs)
    else:
        pairs = rotation_pairs(args.synthetic, args.synthetic_dim, seed=args.seed, noise_std=args.synthetic_noise)
        if args.write_pairs:
            write_pairs(pairs, args.write_pairs)
    cfg = ContrastiveTrainConfig(
        epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
        seed=args.seed, symmetric=args.symmetric, proj_dim=args.proj_dim,
    )
    head, trace = train_projection_head(pairs, cfg)
    write_head(head, args.output, trace)
    print(f"loss {trace[0]:.6f} -> {trace[-1]:.6f}, tau={head.tau:.6f}; head written to {args.output}")
    return EXIT_OK


def load_run_config(args) -> RunConfig:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.dataset:
        data["dataset"] = args.dataset
    if args.out:
        data["output_dir"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    if args.rows:
        data.pop("rows", None)
        for k in ("use_sat", "use_street", "use_pdfm", "use_safe"):
            data.pop(k, None)
        data["rows"] = [r.strip() for r in args.rows.split(",")]
    if args.safe_scope:
        data["safe_scope"] = args.safe_scope
    if args.no_grid:
        data["grid"] = None
    if args.epochs is not None:
        data.setdefault("train", {})["epochs"] = args.epochs
    missing = [k for k in ("dataset", "output_dir") if k not in data]
    if missing:
        raise ValueError(f"missing required config values: {missing}")
    return RunConfig.from_dict(data)


def cmd_run(args) -> int:
    try:
        cfg = load_run_config(args)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"invalid run config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report = run_pipeline(cfg)
    for row in report["rows"]:
        ev = row["eval"]
        r2 = "n/a" if ev["r2"] is None else f"{ev['r2']:.3f}"
        print(f"{row['name']:<12} R2={r2}  RMSE={ev['rmse']:.3f}  SWD={ev['swd']:.3f}")
    print(f"report written to {Path(cfg.output_dir) / 'report.json'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    report = evaluate(read_predictions(args.predictions), args.n_proj, args.seed)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="walkclip", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--dims", type=_dims, default=SynthConfig.dims)
    s.add_argument("--extent", type=float, default=SynthConfig.spatial_extent)
    s.add_argument("--length", type=float, default=SynthConfig.autocorrelation_length)
    s.add_argument("--noise", type=float, default=SynthConfig.noise_std)
    s.add_argument("--copies", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("validate", help="check a dataset file")
    s.add_argument("path")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("safe", help="apply SAFE to sat/street embeddings")
    s.add_argument("path")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--radius", type=float, default=SafeConfig.radius)
    s.add_argument("--epsilon", type=float, default=SafeConfig.epsilon)
    s.add_argument("--power", type=float, default=SafeConfig.power)
    s.set_defaults(func=cmd_safe)

    s = sub.add_parser("split", help="write a grouped hold-out + stratified k-fold plan")
    s.add_argument("path")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--test-fraction", type=float, default=0.15)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("pretrain", help="contrastive training of linear projection heads")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--pairs", help="pair fixture file (pair_id|image_emb|text_emb)")
    src.add_argument("--synthetic", type=int, metavar="N", help="use N synthetic rotation pairs")
    s.add_argument("--synthetic-dim", type=int, default=16)
    s.add_argument("--synthetic-noise", type=float, default=0.0)
    s.add_argument("--write-pairs", help="also save the synthetic pairs here")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--lr", type=float, default=ContrastiveTrainConfig.learning_rate)
    s.add_argument("--batch-size", type=int, default=ContrastiveTrainConfig.batch_size)
    s.add_argument("--proj-dim", type=int, default=ContrastiveTrainConfig.proj_dim)
    s.add_argument("--symmetric", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("run", help="end-to-end ablation experiment")
    s.add_argument("--config", help="JSON run config")
    s.add_argument("--dataset")
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--rows", help=f"comma-separated subset of {','.join(ROWS_BY_NAME)}")
    s.add_argument("--safe-scope", choices=SAFE_SCOPES)
    s.add_argument("--no-grid", action="store_true", help="skip grid search; use the configured train settings")
    s.add_argument("--epochs", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("eval", help="metrics for a predictions CSV")
    s.add_argument("predictions")
    s.add_argument("--n-proj", type=int, default=DEFAULT_PROJECTIONS)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DatasetError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_INVALID
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
