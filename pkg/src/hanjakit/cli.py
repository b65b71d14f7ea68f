"""Command-line entry point: ``hanjakit <command> ...``.

Every data-producing command writes its outputs plus one ``manifest.json``
into ``--out``. Failures exit nonzero with a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .augment import LADDER_MULTIPLIERS, CropParams, augment_corpus, expected_total, materialize
from .coco import dumps_coco, export_coco, import_detections
from .corpus import (
    class_inventory,
    load_class_universe,
    load_corpus,
    serialize_label_file,
    split_corpus,
    validate_corpus,
)
from .evaluation import compare_policies
from .reading_order import DEFAULT_GAP_FACTOR, order_document
from .raster import save_png
from .synth import (
    GridSpec,
    deficits,
    harvest_glyphs,
    imbalance_metrics,
    load_bank,
    missing_classes,
    plan_pages,
    save_bank,
    synthesize_pages,
)
from .variants import EquivalenceIndex, compile_equivalence, load_variant_table

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class CommandError(Exception):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_manifest(
    out_dir: Path,
    args: argparse.Namespace,
    started: str,
    outputs: Sequence[str] = (),
    warnings: Sequence[str] = (),
    extra: Optional[dict] = None,
) -> Path:
    params = {
        k: _jsonable(v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "command", "config")
    }
    manifest = {
        "command": args.command,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "parameters": params,
        "inputs": [str(p) for p in _inputs(args)],
        "outputs": list(outputs),
        "started": started,
        "finished": _now(),
        "warnings": list(warnings),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return path


def _inputs(args) -> list:
    names = ("source", "corpus", "detections", "variants", "universe", "bank", "glyphs_from", "categories", "classes")
    return [getattr(args, n) for n in names if getattr(args, n, None)]


def _universe(args):
    return load_class_universe(args.universe) if getattr(args, "universe", None) else None


def _print_json(obj) -> None:
    print(json.dumps(obj, ensure_ascii=False, indent=2))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    started = _now()
    corpus = load_corpus(args.source, _universe(args), jobs=args.jobs)
    report = validate_corpus(corpus)
    if not report.is_valid:
        raise CommandError(f"corpus has {len(report.errors)} validation error(s); run `validate` for details")
    out = _out_dir(args)
    for doc in corpus.documents:
        src = corpus.image_file(doc)
        if not src.is_file():
            raise CommandError(f"{doc.doc_id}: image not found at {src}")
        dest = out / doc.image_path
        dest.parent.mkdir(parents=True, exist_ok=True)
        if src.resolve() != dest.resolve():
            shutil.copyfile(src, dest)
        (out / f"{doc.doc_id}.json").write_bytes(serialize_label_file(doc))
    write_manifest(
        out, args, started, [f"{d.doc_id}.json" for d in corpus.documents], [f.detail or f.kind.value for f in report.warnings]
    )
    _print_json({"documents": len(corpus), "annotations": corpus.annotation_count()})
    return 0


def cmd_validate(args) -> int:
    corpus = load_corpus(args.corpus, _universe(args), jobs=args.jobs)
    report = validate_corpus(corpus)
    _print_json(report.to_dict())
    return 0 if report.is_valid else 1


def cmd_split(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus, jobs=args.jobs)
    result = split_corpus(corpus, args.val_fraction, args.seed)
    out = _out_dir(args)
    (out / "split.json").write_bytes(result.to_json())
    write_manifest(out, args, started, ["split.json"])
    _print_json({"train": len(result.train), "val": len(result.val), "seed": args.seed})
    return 0


def _crop_params(args) -> CropParams:
    return CropParams(args.min_fraction, args.max_fraction, args.min_crop_px, args.visibility_tau)


def _augment_into(corpus, k, args, out: Path):
    aug = augment_corpus(corpus, k, _crop_params(args), args.seed, jobs=args.jobs, max_retries=args.max_retries)
    written = materialize(aug, out, jobs=args.jobs)
    return aug, written


def cmd_augment(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus, jobs=args.jobs)
    out = _out_dir(args)
    aug, written = _augment_into(corpus, args.k, args, out)
    write_manifest(
        out,
        args,
        started,
        [f"{d.doc_id}.json" for d in written.documents],
        aug.warnings,
        {"augmentation": aug.manifest},
    )
    _print_json({"documents": len(corpus), "k": args.k, "total": len(written)})
    return 0


def cmd_ladder(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus, jobs=args.jobs)
    ks = [int(k) for k in str(args.ks).split(",")] if args.ks else list(LADDER_MULTIPLIERS)
    out = _out_dir(args)
    summary, warnings = [], []
    for k in ks:
        sub = out / f"k{k}"
        sub.mkdir(exist_ok=True)
        k_started = _now()
        aug, written = _augment_into(corpus, k, args, sub)
        write_manifest(
            sub, args, k_started, [f"{d.doc_id}.json" for d in written.documents], aug.warnings,
            {"augmentation": aug.manifest},
        )
        warnings.extend(aug.warnings)
        summary.append({"k": k, "dir": sub.name, "total": len(written), "expected": expected_total(len(corpus), k)})
    (out / "ladder.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    write_manifest(out, args, started, ["ladder.json"] + [s["dir"] for s in summary], warnings)
    _print_json(summary)
    return 0


def cmd_stats(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus, jobs=args.jobs)
    hist = class_inventory(corpus)
    result = {"documents": len(corpus), "histogram": hist.to_dict()}
    universe = _universe(args)
    if universe is not None:
        result["imbalance"] = imbalance_metrics(hist, universe).to_dict()
    if args.out:
        out = _out_dir(args)
        (out / "stats.json").write_text(json.dumps(result, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        write_manifest(out, args, started, ["stats.json"])
    else:
        _print_json(result)
    return 0


def _load_categories(path) -> list:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return data["categories"] if isinstance(data, dict) else data


def cmd_export_coco(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus, jobs=args.jobs)
    report = validate_corpus(corpus)
    if not report.is_valid:
        raise CommandError(f"corpus has {len(report.errors)} validation error(s)")
    categories = _load_categories(args.categories) if args.categories else None
    dataset = export_coco(corpus, categories)
    out = _out_dir(args)
    (out / "coco.json").write_text(dumps_coco(dataset), encoding="utf-8")
    write_manifest(out, args, started, ["coco.json"])
    _print_json({"images": len(dataset["images"]), "annotations": len(dataset["annotations"]), "categories": len(dataset["categories"])})
    return 0


def _load_detections(args, corpus):
    coco_dataset = None
    if args.format == "coco":
        if args.coco_dataset:
            coco_dataset = json.loads(Path(args.coco_dataset).read_text(encoding="utf-8"))
        else:
            coco_dataset = export_coco(corpus)
    return import_detections(args.detections, args.format, coco_dataset, corpus)


def cmd_eval(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus, jobs=args.jobs)
    dets = _load_detections(args, corpus)
    if args.variants:
        index = compile_equivalence(load_variant_table(Path(args.variants).read_bytes()))
    else:
        index = EquivalenceIndex()
    correction = compare_policies(dets, corpus, index, args.iou_threshold)
    report = correction.report
    if args.out:
        out = _out_dir(args)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "report.txt").write_text(report.format_table(), encoding="utf-8")
        (out / "correction.json").write_text(correction.to_json(), encoding="utf-8")
        (out / "correction.csv").write_text(correction.to_csv(), encoding="utf-8")
        write_manifest(out, args, started, ["report.json", "report.txt", "correction.json", "correction.csv"])
    sys.stdout.write(report.format_table())
    return 0


def cmd_order(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus, jobs=args.jobs)
    if args.detections:
        by_doc = {d.doc_id: [] for d in corpus.documents}
        for det in _load_detections(args, corpus):
            by_doc[det.doc_id].append(det)
    else:
        by_doc = {d.doc_id: list(d.annotations) for d in corpus.documents}
    out = _out_dir(args)
    outputs = []
    for doc in corpus.documents:
        # cursive pages are always read right to left
        rtl = doc.style.value == "cursive" or not args.left_to_right
        text, sidecar = order_document(by_doc[doc.doc_id], args.gap_factor, rtl)
        (out / f"{doc.doc_id}.txt").write_text(text + "\n" if text else "", encoding="utf-8")
        (out / f"{doc.doc_id}.order.json").write_text(sidecar, encoding="utf-8")
        outputs += [f"{doc.doc_id}.txt", f"{doc.doc_id}.order.json"]
    write_manifest(out, args, started, outputs)
    _print_json({"documents": len(corpus)})
    return 0


def _read_lines(path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]


def cmd_synth(args) -> int:
    started = _now()
    if args.bank:
        bank = load_bank(args.bank)
    elif args.glyphs_from:
        bank = harvest_glyphs(load_corpus(args.glyphs_from, jobs=args.jobs), jobs=args.jobs)
    else:
        raise CommandError("synth needs a glyph source: --bank DIR or --glyphs-from CORPUS")
    grid = GridSpec(args.columns, args.rows, args.cell_size, args.cell_size, args.margin)
    warnings = []

    if args.classes:
        wanted = _read_lines(args.classes)
    elif args.fill_missing or args.min_count:
        if not (args.corpus and args.universe):
            raise CommandError("--fill-missing/--min-count need --corpus and --universe")
        hist = class_inventory(load_corpus(args.corpus, jobs=args.jobs))
        universe = load_class_universe(args.universe)
        if args.min_count:
            need = deficits(hist, universe, args.min_count)
        else:
            need = {c: 1 for c in sorted(missing_classes(hist, universe))}
        wanted = [c for c, n in need.items() for _ in range(n)]
    else:
        raise CommandError("synth needs target classes: --classes FILE, --fill-missing or --min-count N")

    absent = sorted({c for c in wanted if c not in bank})
    if absent:
        warnings.append(f"{len(absent)} class(es) have no glyph in the bank and were skipped: {''.join(absent[:50])}")
        wanted = [c for c in wanted if c in bank]
    sequences = plan_pages(wanted, grid.capacity, args.copies)
    pages = synthesize_pages(bank, grid, sequences, args.seed, args.prefix, jobs=args.jobs)

    out = _out_dir(args)
    outputs = []
    for raster, record in pages:
        save_png(raster, out / record.image_path)
        (out / f"{record.doc_id}.json").write_bytes(serialize_label_file(record))
        outputs += [record.image_path, f"{record.doc_id}.json"]
    if args.save_bank:
        save_bank(bank, args.save_bank)
    write_manifest(out, args, started, outputs, warnings, {"grid": asdict(grid)})
    _print_json({"pages": len(pages), "characters": sum(len(s) for s in sequences), "skipped_classes": len(absent)})
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _add_crop_args(p) -> None:
    d = CropParams()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-fraction", type=float, default=d.min_fraction)
    p.add_argument("--max-fraction", type=float, default=d.max_fraction)
    p.add_argument("--min-crop-px", type=int, default=d.min_crop_px)
    p.add_argument("--visibility-tau", type=float, default=d.visibility_tau)
    p.add_argument("--max-retries", type=int, default=10)


def _add_detection_args(p) -> None:
    p.add_argument("--format", choices=("native", "coco"), default="native")
    p.add_argument("--coco-dataset", help="COCO dataset the results refer to (default: export of the corpus)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("--config", help="JSON or TOML file of option defaults; flags override")

    parser = argparse.ArgumentParser(prog="hanjakit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse and normalize a directory of label files")
    p.add_argument("source")
    p.add_argument("--out", required=True)
    p.add_argument("--universe")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("validate", parents=[common], help="report corpus problems")
    p.add_argument("corpus")
    p.add_argument("--universe")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("split", parents=[common], help="seeded train/validation split")
    p.add_argument("corpus")
    p.add_argument("--val-fraction", type=float, default=0.12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", parents=[common], help="random-crop augmentation with multiplier k")
    p.add_argument("corpus")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_crop_args(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("ladder", parents=[common], help="augmented datasets for a range of multipliers")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--ks", help="comma-separated multipliers (default 0,1,3,5,10,30,50,100)")
    _add_crop_args(p)
    p.set_defaults(func=cmd_ladder)

    p = sub.add_parser("stats", parents=[common], help="class histogram and imbalance metrics")
    p.add_argument("corpus")
    p.add_argument("--universe")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export-coco", parents=[common], help="write a COCO detection dataset")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--categories", help="fixed category list (JSON list or COCO dataset)")
    p.set_defaults(func=cmd_export_coco)

    p = sub.add_parser("eval", parents=[common], help="score detections against the corpus")
    p.add_argument("corpus")
    p.add_argument("detections")
    _add_detection_args(p)
    p.add_argument("--variants", help="variant table TSV")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("order", parents=[common], help="serialize pages in vertical reading order")
    p.add_argument("corpus")
    p.add_argument("--detections", help="order detections instead of ground truth")
    _add_detection_args(p)
    p.add_argument("--gap-factor", type=float, default=DEFAULT_GAP_FACTOR)
    p.add_argument("--left-to-right", action="store_true", help="read non-cursive pages left to right")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("synth", parents=[common], help="compose synthetic pages from glyph crops")
    p.add_argument("--out", required=True)
    p.add_argument("--bank", help="glyph bank directory")
    p.add_argument("--glyphs-from", help="harvest glyphs from this corpus")
    p.add_argument("--save-bank", help="also persist the glyph bank here")
    p.add_argument("--classes", help="file with one target class per line")
    p.add_argument("--fill-missing", action="store_true", help="one glyph for every universe class absent from --corpus")
    p.add_argument("--min-count", type=int, help="top every universe class in --corpus up to this count")
    p.add_argument("--corpus")
    p.add_argument("--universe")
    p.add_argument("--copies", type=int, default=1)
    p.add_argument("--columns", type=int, default=10)
    p.add_argument("--rows", type=int, default=12)
    p.add_argument("--cell-size", type=int, default=64)
    p.add_argument("--margin", type=int, default=16)
    p.add_argument("--prefix", default="synth")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def _load_config(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".toml"):
        data = tomllib.loads(raw.decode("utf-8"))
    else:
        data = json.loads(raw)
    return {k.replace("-", "_"): v for k, v in data.items()}


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        config = _load_config(known.config)
        choices = parser._subparsers._group_actions[0].choices
        command = next((tok for tok in argv if tok in choices), None)
        if command is not None:
            subparser = choices[command]
            dests = {a.dest for a in subparser._actions}
            unknown = sorted(set(config) - dests)
            if unknown:
                raise CommandError(f"unknown config keys for {command}: {unknown}")
            for action in subparser._actions:
                if action.dest in config:
                    action.required = False
            subparser.set_defaults(**config)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # reported as JSON for harnesses
        err = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("offset", "annotation_id", "doc_ids", "labels", "line"):
            if getattr(exc, attr, None) is not None:
                err[attr] = getattr(exc, attr)
        sys.stderr.write(json.dumps(err, ensure_ascii=False) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
