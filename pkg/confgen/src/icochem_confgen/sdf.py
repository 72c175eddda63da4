"""Minimal V2000 SDF writer (one record per conformer)."""

from __future__ import annotations

import numpy as np

from .smiles import MolGraph

_V2000_BOND_CODE = {1.0: 1, 2.0: 2, 3.0: 3, 1.5: 4}


def to_sdf(graph: MolGraph, conformers: list[np.ndarray],
           title: str = "") -> bytes:
    symbols = [atom.symbol for atom in graph.atoms]
    bond_rows = [(min(i, j) + 1, max(i, j) + 1, _V2000_BOND_CODE.get(o, 1))
                 for (i, j), o in sorted(graph.bonds.items())]

    records = []
    for positions in conformers:
        lines = [title, "  icochem-confgen 3D", ""]
        lines.append(f"{len(symbols):3d}{len(bond_rows):3d}"
                     "  0  0  0  0  0  0  0  0999 V2000")
        for sym, (x, y, z) in zip(symbols, positions):
            lines.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {sym:<3}"
                         "0  0  0  0  0  0  0  0  0  0  0  0")
        for a, b, code in bond_rows:
            lines.append(f"{a:3d}{b:3d}{code:3d}  0")
        lines.append("M  END")
        lines.append("$$$$")
        records.append("\n".join(lines))
    return ("\n".join(records) + "\n").encode()
