"""Command-line pipeline: featurize, normalize, render, clean, stats, inspect.

Logging goes to stderr and data to files; stdout stays silent except for the
final JSON summary under ``--json``.  Exit codes: 0 success, 2 configuration
error, 3 I/O error, 4 data error.

Net SVGs use a linear mass ramp: each face's summed-mass channel is scaled
by the net maximum and blended from white (empty) to dark blue (heaviest).
"""

from __future__ import annotations

import argparse
import collections
import concurrent.futures
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, augment, datastore, icogeom, molio, projector
from .errors import IcochemError

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

log = logging.getLogger("icochem")

STRUCTURE_SUFFIXES = {".xyz": "xyz", ".pdb": "pdb", ".sdf": "sdf"}


class _ConfigError(Exception):
    pass


class _FeaturizeError(Exception):
    """Per-molecule failure escalated to a hard error (no --skip-bad)."""


def _prepend(first, rest):
    yield first
    yield from rest


# --- shared helpers -----------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise _ConfigError(f"config file not found: {p}")
    if p.suffix.lower() == ".json":
        return json.loads(p.read_text())
    with open(p, "rb") as fh:
        return tomllib.load(fh)


def _default_threads() -> int:
    raw = os.environ.get("ICOCHEM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _emit_json(args, payload: dict) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload))


def _discover_structures(input_path: Path) -> list[Path]:
    if input_path.is_file():
        return [input_path]
    if input_path.is_dir():
        found = [p for p in sorted(input_path.iterdir())
                 if p.suffix.lower() in STRUCTURE_SUFFIXES]
        return found
    raise FileNotFoundError(input_path)


def _read_label_csv(path: Path) -> dict[str, dict[str, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "mol_id" not in reader.fieldnames:
            raise ValueError(f"label CSV {path} needs a mol_id column")
        names = [c for c in reader.fieldnames if c != "mol_id"]
        table = {}
        for row in reader:
            table[row["mol_id"]] = {n: float(row[n]) for n in names}
    return table


def _mass_color(value: float, peak: float) -> str:
    t = 0.0 if peak <= 0 else min(1.0, value / peak)
    r = round(255 + (31 - 255) * t)
    g = round(255 + (59 - 255) * t)
    b = round(255 + (115 - 255) * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def _net_svg_from_values(layout: icogeom.NetLayout,
                         net_values: np.ndarray) -> str:
    b_sum = np.asarray(net_values)[:, 2]
    peak = float(b_sum.max())
    colors = [_mass_color(float(v), peak) for v in b_sum]
    return icogeom.net_to_svg(layout, colors)


# --- featurize ------------------------------------------------------------------

def _plan_from_args(args) -> augment.AugmentationPlan:
    try:
        return augment.AugmentationPlan(
            level=args.level, jitter_deg=args.jitter_deg,
            offset_fraction=args.offset_fraction,
            n_conformers=args.n_conformers, selection=args.selection,
            cadence=args.cadence, seed=args.seed)
    except ValueError as exc:
        raise _ConfigError(str(exc)) from None


def _featurize_one(path: Path, plan, mesh, group, layout):
    fmt = STRUCTURE_SUFFIXES[path.suffix.lower()]
    molecule = molio.parse_structure(path.read_bytes(), fmt,
                                     mol_id=path.stem)
    n_nets = plan.cadence if plan.selection is augment.Selection.ORDERED \
        else None
    records = augment.generate_nets(molecule, plan, mesh, group,
                                    n_nets=n_nets, layout=layout)
    records = augment.select_nets(records, plan)
    return molecule, records


def _ordered_window_map(items, fn, workers):
    """pool.map with a bounded in-flight window, yielding in input order.

    Keeps featurization memory at O(window x one molecule's nets) no matter
    how large the corpus is.
    """
    window = max(2, workers + 2)
    with concurrent.futures.ThreadPoolExecutor(workers) as pool:
        pending = collections.deque()
        items = iter(items)
        for item in items:
            pending.append((item, pool.submit(fn, item)))
            if len(pending) >= window:
                yield pending.popleft()
        while pending:
            yield pending.popleft()


def cmd_featurize(args) -> int:
    plan = _plan_from_args(args)
    structures = _discover_structures(Path(args.input))
    if not structures:
        log.error("no structures found in %s", args.input)
        return 4

    try:
        labels = _read_label_csv(Path(args.labels)) if args.labels else None
    except (ValueError, TypeError, KeyError) as exc:
        log.error("bad label CSV: %s", exc)
        return 4
    if labels is not None:
        missing = [p.stem for p in structures if p.stem not in labels]
        if missing and not args.skip_unlabeled:
            log.error("no labels for: %s", ", ".join(missing))
            return 4
        if missing:
            log.warning("skipping %d unlabeled molecules", len(missing))
            structures = [p for p in structures if p.stem in labels]
            if not structures:
                log.error("no labeled structures left")
                return 4
        if args.minmax_labels:
            names = sorted(next(iter(labels.values())))
            ranges = {}
            for name in names:
                raw = np.array([labels[m][name] for m in labels])
                scaled, lo, hi = datastore.minmax_scale(raw)
                for m, v in zip(labels, scaled):
                    labels[m][name] = float(v)
                ranges[name] = [lo, hi]
            Path(str(args.out) + ".labels.json").write_text(
                json.dumps(ranges))
            log.info("min-max scaled labels: %s", ranges)

    mesh = icogeom.build_icosphere(plan.level)
    group = icogeom.rotation_group()
    layout = icogeom.canonical_net(mesh)

    descriptor_rows: dict[str, dict[str, float]] = {}
    failures: list[str] = []
    counts = {"nets": 0, "molecules": 0}

    def work(path):
        return _featurize_one(path, plan, mesh, group, layout)

    def molecule_stream():
        for path, future in _ordered_window_map(structures, work,
                                                args.threads):
            try:
                molecule, records = future.result()
            except (IcochemError, ValueError) as exc:
                if not args.skip_bad:
                    raise _FeaturizeError(f"{path.name}: {exc}") from exc
                failures.append(path.name)
                log.warning("skipping %s: %s", path.name, exc)
                continue
            descriptor_rows[molecule.mol_id] = \
                molio.descriptors(molecule).as_dict()
            log.info("%s: %d nets", molecule.mol_id, len(records))
            counts["nets"] += len(records)
            counts["molecules"] += 1
            yield from records

    # prime the stream so descriptor columns are known before writing starts
    stream = molecule_stream()
    try:
        first = next(stream)
    except StopIteration:
        log.error("every structure failed")
        return 4
    except _FeaturizeError as exc:
        log.error("%s", exc)
        return 4

    try:
        header = datastore.write_dataset(
            _prepend(first, stream), args.out, labels=labels,
            descriptors=descriptor_rows, fmt=args.format)
    except _FeaturizeError as exc:
        log.error("%s", exc)
        return 4
    log.info("wrote %d nets for %d molecules to %s",
             header.n_nets, header.n_molecules, args.out)
    _emit_json(args, {"out": str(args.out), "nets": header.n_nets,
                      "molecules": header.n_molecules, "level": header.level,
                      "skipped": failures})
    return 0


# --- normalize ------------------------------------------------------------------

def cmd_normalize(args) -> int:
    mode = datastore.NormalizationMode(args.normalize)
    with datastore.DatasetReader(args.input) as reader:
        if args.from_stats:
            stats = datastore.load_stats(args.from_stats)
            datastore.apply_train_stats(reader, stats, mode, args.out,
                                        batch_size=args.batch_size)
            log.info("applied frozen stats from %s", args.from_stats)
        else:
            mean_map, max_map = datastore.pass1_mean_max(
                reader, batch_size=args.batch_size)
            if mode is datastore.NormalizationMode.MEAN:
                std_map = datastore.pass2_norms_and_std(
                    reader, mean_map, max_map, batch_size=args.batch_size,
                    mean_out=args.out)
            elif mode is datastore.NormalizationMode.L2:
                std_map = datastore.pass2_norms_and_std(
                    reader, mean_map, max_map, batch_size=args.batch_size,
                    l2_out=args.out)
            else:
                std_map = datastore.pass2_norms_and_std(
                    reader, mean_map, max_map, batch_size=args.batch_size)
                datastore.pass3_standardize(reader, mean_map, std_map,
                                            args.out,
                                            batch_size=args.batch_size)
            stats = datastore.StatsMaps(mean_map, max_map, std_map,
                                        args.batch_size)
            sidecar = datastore.stats_sidecar_path(args.out)
            datastore.save_stats(stats, sidecar)
            log.info("stats sidecar: %s", sidecar)
    _emit_json(args, {"out": str(args.out), "mode": mode.value})
    return 0


# --- render ---------------------------------------------------------------------

def _render_structure(args, path: Path) -> list[tuple[Path, str]]:
    fmt = STRUCTURE_SUFFIXES[path.suffix.lower()]
    molecule = molio.parse_structure(path.read_bytes(), fmt,
                                     mol_id=path.stem)
    mesh = icogeom.build_icosphere(args.level)
    layout = icogeom.canonical_net(mesh)
    atoms = molio.center(molecule)
    positions = np.stack([a.position for a in atoms])
    masses = molecule.masses
    group = icogeom.rotation_group()

    wanted = range(60) if args.all_unfoldings else [args.unfolding]
    out = Path(args.out)
    documents = []
    for k in wanted:
        if not 0 <= k < 60:
            raise IndexError(f"unfolding index {k} out of range [0, 60)")
        ico = projector.project(positions @ group.matrices[k].T, mesh,
                                masses=masses)
        svg = _net_svg_from_values(layout, layout.extract(ico.values))
        target = out / f"{path.stem}_unfolding{k:02d}.svg" \
            if args.all_unfoldings else out
        documents.append((target, svg))
    return documents


def _render_dataset(args, path: Path) -> list[tuple[Path, str]]:
    with datastore.DatasetReader(path) as reader:
        if not 0 <= args.index < reader.n_nets:
            raise IndexError(f"net index {args.index} out of range "
                             f"[0, {reader.n_nets})")
        values = reader.read(args.index, args.index + 1)[0]
        mesh = icogeom.build_icosphere(reader.level)
    layout = icogeom.canonical_net(mesh)
    return [(Path(args.out), _net_svg_from_values(layout, values))]


def cmd_render(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        if path.suffix.lower() in STRUCTURE_SUFFIXES:
            documents = _render_structure(args, path)
        else:
            documents = _render_dataset(args, path)
    except IndexError as exc:
        log.error("%s", exc)
        return 4
    if args.all_unfoldings:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    for target, svg in documents:
        target.write_text(svg)
        log.info("wrote %s", target)
    _emit_json(args, {"files": [str(t) for t, _ in documents]})
    return 0


# --- clean ----------------------------------------------------------------------

def _parse_sweep(spec: str) -> list[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise _ConfigError("sweep spec must be lo:hi:step or a comma list")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0:
            raise _ConfigError("sweep step must be positive")
        n = int(round((hi - lo) / step)) + 1
        ratios = [lo + i * step for i in range(max(0, n))
                  if lo + i * step <= hi + 1e-12]
    else:
        ratios = [float(p) for p in spec.split(",") if p.strip()]
    if not ratios:
        raise _ConfigError(f"sweep spec {spec!r} yields no ratios")
    return ratios


def cmd_clean(args) -> int:
    try:
        config = analysis.CleaningConfig(ratio=args.ratio,
                                         fallback_widen_step=args.widen_step)
    except ValueError as exc:
        raise _ConfigError(str(exc)) from None
    try:
        groups = analysis.read_prediction_csv(Path(args.pred).read_text())
    except ValueError as exc:
        log.error("%s", exc)
        return 4

    raw = {g.mol_id: float(np.mean(g.y_preds)) for g in groups}
    cleaned = analysis.clean_all(groups, config, pooled=args.pooled)
    med = {g.mol_id: analysis.median_baseline(g) for g in groups}
    before = analysis.metrics_for_groups(groups, raw)
    after = analysis.metrics_for_groups(groups, cleaned)
    median_report = analysis.metrics_for_groups(groups, med)
    log.info("before: %s", before.as_dict())
    log.info("after : %s", after.as_dict())

    if args.out_csv:
        Path(args.out_csv).write_text(analysis.cleaned_csv(groups, cleaned))
    report = {"before": before.as_dict(), "after": after.as_dict(),
              "median": median_report.as_dict(), "ratio": args.ratio}
    if args.metrics_json:
        Path(args.metrics_json).write_text(json.dumps(report, indent=2))

    if args.sweep:
        rows = analysis.ratio_sweep(groups, _parse_sweep(args.sweep), config)
        sweep_path = Path(args.sweep_out or
                          (str(args.pred) + ".sweep.csv"))
        sweep_path.write_text(analysis.sweep_csv(rows))
        log.info("sweep written to %s", sweep_path)
        report["sweep"] = str(sweep_path)
    _emit_json(args, report)
    return 0


# --- stats / inspect ---------------------------------------------------------

def cmd_stats(args) -> int:
    with datastore.DatasetReader(args.input) as reader:
        stats = datastore.compute_stats(reader, batch_size=args.batch_size)
    sidecar = Path(args.out) if args.out else \
        datastore.stats_sidecar_path(args.input)
    datastore.save_stats(stats, sidecar)
    log.info("stats sidecar: %s", sidecar)
    _emit_json(args, {
        "out": str(sidecar),
        "mean_range": [float(stats.mean.min()), float(stats.mean.max())],
        "max_range": [float(stats.max.min()), float(stats.max.max())],
        "std_range": [float(stats.std.min()), float(stats.std.max())],
    })
    return 0


def cmd_inspect(args) -> int:
    with datastore.DatasetReader(args.input) as reader:
        header = reader.header
        mol_ids = reader.mol_ids()
        payload = {
            "path": str(args.input),
            "format": reader.format,
            "level": header.level,
            "n_nets": header.n_nets,
            "n_molecules": header.n_molecules,
            "n_faces": header.n_faces,
            "label_names": header.label_names,
            "descriptor_names": header.descriptor_names,
            "created_at": header.created_at,
            "first_mol_ids": mol_ids[:5],
        }
    for key, value in payload.items():
        log.info("%s: %s", key, value)
    _emit_json(args, payload)
    return 0


# --- parser ---------------------------------------------------------------------

def build_parser(config: dict) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icochem",
        description="Icospherical featurization of 3-D molecular structures")
    parser.add_argument("--config", help="TOML/JSON config file")
    parser.add_argument("--json", action="store_true",
                        help="print a JSON summary to stdout")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    feat = sub.add_parser("featurize", help="structures -> net container")
    feat.add_argument("--input", required=True,
                      help="structure file or directory of XYZ/PDB/SDF")
    feat.add_argument("--out", required=True)
    feat.add_argument("--labels", help="CSV keyed by mol_id")
    feat.add_argument("--level", type=int, default=1)
    feat.add_argument("--cadence", type=int, default=60)
    feat.add_argument("--selection", default="ordered",
                      choices=["ordered", "random"])
    feat.add_argument("--jitter-deg", type=float, default=5.0)
    feat.add_argument("--offset-fraction", type=float, default=0.05)
    feat.add_argument("--n-conformers", type=int, default=1)
    feat.add_argument("--seed", type=int, default=0)
    feat.add_argument("--threads", type=int, default=_default_threads())
    feat.add_argument("--format", default="hdf5", choices=["hdf5", "flat"])
    feat.add_argument("--skip-bad", action="store_true",
                      help="downgrade per-molecule errors to warnings")
    feat.add_argument("--skip-unlabeled", action="store_true")
    feat.add_argument("--minmax-labels", action="store_true",
                      help="scale labels to [0, 1]; ranges go to a sidecar")
    feat.set_defaults(func=cmd_featurize)

    norm = sub.add_parser("normalize", help="3-pass dataset normalization")
    norm.add_argument("--input", required=True)
    norm.add_argument("--out", required=True)
    norm.add_argument("--normalize", required=True,
                      choices=["mean", "l2", "std"])
    norm.add_argument("--from-stats",
                      help="apply a frozen training-stats sidecar")
    norm.add_argument("--batch-size", type=int, default=64)
    norm.set_defaults(func=cmd_normalize)

    rend = sub.add_parser("render", help="net -> SVG")
    rend.add_argument("--input", required=True,
                      help="structure file or dataset container")
    rend.add_argument("--out", required=True,
                      help="SVG path (directory with --all-unfoldings)")
    rend.add_argument("--level", type=int, default=1,
                      help="icosphere level for structure inputs")
    rend.add_argument("--unfolding", type=int, default=0)
    rend.add_argument("--all-unfoldings", action="store_true")
    rend.add_argument("--index", type=int, default=0,
                      help="net row for dataset inputs")
    rend.set_defaults(func=cmd_render)

    clean = sub.add_parser("clean", help="IQR-clean prediction spreads")
    clean.add_argument("--pred", required=True,
                       help="CSV with mol_id,y_true,y_pred rows")
    clean.add_argument("--ratio", type=float, default=-0.45)
    clean.add_argument("--widen-step", type=float, default=0.05)
    clean.add_argument("--pooled", action="store_true")
    clean.add_argument("--out-csv")
    clean.add_argument("--metrics-json")
    clean.add_argument("--sweep", help="lo:hi:step or comma-separated ratios")
    clean.add_argument("--sweep-out")
    clean.set_defaults(func=cmd_clean)

    stats = sub.add_parser("stats", help="compute stats sidecar only")
    stats.add_argument("--input", required=True)
    stats.add_argument("--out")
    stats.add_argument("--batch-size", type=int, default=64)
    stats.set_defaults(func=cmd_stats)

    insp = sub.add_parser("inspect", help="show container metadata")
    insp.add_argument("--input", required=True)
    insp.set_defaults(func=cmd_inspect)

    # subparsers parse into a fresh namespace, so config-provided defaults
    # must be installed on every one of them
    defaults = {name.replace("-", "_"): value
                for name, value in config.items()}
    parser.set_defaults(**defaults)
    for subparser in (feat, norm, rend, clean, stats, insp):
        subparser.set_defaults(**defaults)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        config = _load_config(known.config)
    except (_ConfigError, json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        print(f"icochem: config error: {exc}", file=sys.stderr)
        return 2

    parser = build_parser(config)
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s")

    try:
        return args.func(args)
    except _ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        log.error("I/O error: %s", exc)
        return 3
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 3
    except IcochemError as exc:
        log.error("data error: %s", exc)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
