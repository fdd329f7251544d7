"""Command-line surface.

Subcommands: infer, perturb, eval, robustness, synth, init-weights,
print-config. Every flag overrides the matching key of the YAML config
file. Exit codes: 0 success, 2 usage error, 3 data error, 4 config error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from .dataset import (
    load_category_manifest,
    load_dataset,
    read_mask,
    save_predictions,
)
from .errors import ConfigError, DataError
from .metrics import (
    f_mean,
    j_mean,
    jf_mean,
    score_sequence,
    split_scores,
    temporal_decay_curve,
    write_decay_csv,
    write_score_csv,
)
from .perturb import PerturbationSpec, perturb_dataset
from .pipeline import (
    PipelineConfig,
    ReferenceSchedule,
    default_config,
    make_store,
    parameter_table,
    propagate_sequence,
    with_overrides,
)
from .proxies import ClusterSchedule
from .robustness import run_robustness, write_robustness_csv
from .synth import synth_dataset
from .weights import init_weights


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file; flags override its keys")
    p.add_argument("--mode", choices=["full", "matching-only"])
    p.add_argument("--refs", choices=["base", "mf"])
    p.add_argument("--delta", type=int)
    p.add_argument("--clusters", help="granularity schedule, e.g. 1,16,full")
    p.add_argument("--beta", type=float)
    p.add_argument("--stages", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--weights", type=Path, help="weight manifest written by init-weights")


def _resolve_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        try:
            raw = yaml.safe_load(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {args.config}: {exc}") from exc
        cfg = PipelineConfig.from_dict(raw or {})
    else:
        cfg = default_config()

    overrides = {}
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode.replace("-", "_")
    if getattr(args, "refs", None):
        mode = "multi_frame" if args.refs == "mf" else "base"
        delta = args.delta if args.delta is not None else cfg.references.delta
        overrides["references"] = ReferenceSchedule(mode, delta)
    elif getattr(args, "delta", None) is not None:
        overrides["references"] = ReferenceSchedule(cfg.references.mode, args.delta)
    if getattr(args, "clusters", None):
        overrides["schedule"] = ClusterSchedule.parse(args.clusters)
    if getattr(args, "beta", None) is not None:
        overrides["beta"] = args.beta
    if getattr(args, "stages", None) is not None:
        overrides["num_stages"] = args.stages
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "weights", None):
        overrides["weights_path"] = str(args.weights)
    try:
        return with_overrides(cfg, **overrides) if overrides else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _infer_one(payload):
    record, cfg = payload
    return record.sequence_id, record.frame_stems, propagate_sequence(record, cfg)


def cmd_infer(args) -> int:
    cfg = _resolve_config(args)
    records = load_dataset(args.data)
    if not records:
        raise DataError(f"no sequences found under {args.data}")
    out = Path(args.out)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = pool.map(_infer_one, [(r, cfg) for r in records])
            for seq_id, stems, preds in results:
                save_predictions(out, seq_id, stems, preds)
    else:
        store = make_store(cfg)
        for record in records:
            preds = propagate_sequence(record, cfg, store)
            save_predictions(out, record.sequence_id, record.frame_stems, preds)
    print(f"wrote predictions for {len(records)} sequence(s) to {out}")
    return 0


def cmd_perturb(args) -> int:
    kind = args.kind.replace("-", "_")
    spec = PerturbationSpec(kind, args.param, args.seed)
    n = perturb_dataset(args.data, spec, args.out)
    print(f"perturbed {n} frame(s) into {args.out}")
    return 0


def cmd_eval(args) -> int:
    records = load_dataset(args.gt)
    if not records:
        raise DataError(f"no sequences found under {args.gt}")
    scores = []
    for record in records:
        stem_to_index = {stem: i + 1 for i, stem in enumerate(record.frame_stems)}
        preds = []
        for stem in record.frame_stems:
            path = Path(args.pred) / record.sequence_id / f"{stem}.png"
            if not path.is_file():
                raise DataError(f"missing prediction {path}")
            preds.append(read_mask(path, record.num_objects))
        gts = {
            stem_to_index[stem]: read_mask(p, record.num_objects)
            for stem, p in record.annotation_paths.items()
            if stem in stem_to_index
        }
        scores.append(score_sequence(record.sequence_id, preds, gts, record.num_objects))

    splits = None
    if args.categories:
        splits = split_scores(scores, load_category_manifest(args.categories))
    write_score_csv(scores, args.report, splits=splits)
    curve = temporal_decay_curve([s.frame_jf_series() for s in scores], args.bins)
    decay_path = Path(args.report).with_suffix("").as_posix() + "_decay.csv"
    write_decay_csv(curve, decay_path)
    print(f"J {j_mean(scores):.4f}  F {f_mean(scores):.4f}  J&F {jf_mean(scores):.4f} "
          f"over {len(scores)} sequence(s); report {args.report}, decay curve {decay_path}")
    return 0


def cmd_robustness(args) -> int:
    cfg = _resolve_config(args)
    report = run_robustness(args.data, cfg, workdir=args.work)
    write_robustness_csv(report, args.report)
    print(f"Q_c {report.q_c:.4f}  Q_p {report.q_p:.4f}  R_p {report.r_p:.4f} -> {args.report}")
    return 0


def cmd_synth(args) -> int:
    seq = synth_dataset(args.out, frames=args.frames, objects=args.objects,
                        seed=args.seed, size=args.size)
    print(f"wrote synthetic sequence {seq!r} under {args.out}")
    return 0


def cmd_init_weights(args) -> int:
    cfg = _resolve_config(args)
    bundle = init_weights(cfg.seed, parameter_table(cfg))
    bundle.save(args.out)
    print(f"wrote {len(bundle)} arrays to {args.out} (+ .bin)")
    return 0


def cmd_print_config(args) -> int:
    cfg = _resolve_config(args)
    print(yaml.safe_dump(cfg.to_dict(), sort_keys=False), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxyvos",
        description="Proxy-based video object segmentation and robustness benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="propagate masks through every sequence")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("perturb", help="write a perturbed copy of a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--kind", required=True,
                   choices=["gaussian-noise", "salt-pepper", "gaussian-blur", "identity"])
    p.add_argument("--param", type=float, default=None,
                   help="sigma | point count | kernel size")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("eval", help="score predictions against annotations")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--categories", type=Path)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("robustness", help="clean + perturbed benchmark sweep")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--work", type=Path, default=None,
                   help="keep perturbed copies and intermediates here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("synth", help="generate a synthetic fixture sequence")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--objects", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=96)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("init-weights", help="write a seeded weight bundle")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("print-config", help="print the effective configuration")
    _add_config_flags(p)
    p.set_defaults(func=cmd_print_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
