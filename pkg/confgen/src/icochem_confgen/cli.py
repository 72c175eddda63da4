"""CLI shim: SMILES CSV in, one multi-conformer SDF per molecule out."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import ConformerRequest, smiles_to_structures
from .errors import ConfgenError

log = logging.getLogger("icochem-confgen")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icochem-confgen",
        description="Generate 3-D conformer SDF files from SMILES strings")
    parser.add_argument("--smiles-csv", required=True,
                        help="CSV with mol_id,smiles[,n_conformers] columns")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--n-conformers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--no-hydrogens", action="store_true")
    parser.add_argument("--no-minimise", action="store_true")
    parser.add_argument("--skip-bad", action="store_true",
                        help="log and continue on per-molecule failures")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")

    csv_path = Path(args.smiles_csv)
    if not csv_path.exists():
        log.error("no such file: %s", csv_path)
        return 3
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                {"mol_id", "smiles"} - set(reader.fieldnames):
            log.error("CSV needs mol_id and smiles columns")
            return 4
        rows = list(reader)

    written = 0
    for row in rows:
        mol_id = (row.get("mol_id") or "").strip()
        try:
            n_conf = int(row.get("n_conformers") or args.n_conformers)
            request = ConformerRequest(
                smiles=row.get("smiles") or "", n_conformers=n_conf,
                add_hydrogens=not args.no_hydrogens,
                minimise=not args.no_minimise, seed=args.seed)
            payload = smiles_to_structures(request, title=mol_id)
        except (ConfgenError, ValueError) as exc:
            if not args.skip_bad:
                log.error("%s: %s", mol_id, exc)
                return 4
            log.warning("skipping %s: %s", mol_id, exc)
            continue
        (out_dir / f"{mol_id}.sdf").write_bytes(payload)
        written += 1
        log.info("%s: %d conformer(s)", mol_id, n_conf)

    if written == 0:
        log.error("no structures written")
        return 4
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
