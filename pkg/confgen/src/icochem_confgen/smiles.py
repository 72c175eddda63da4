"""A small SMILES reader covering everyday organic molecules.

Supported: the organic subset (B, C, N, O, P, S, F, Cl, Br, I) plus
aromatic b/c/n/o/p/s, bracket atoms with isotopes (ignored), charges,
explicit hydrogen counts and @/@@ tetrahedral marks, branches, ring
closures (including %nn) and -, =, #, : bonds.  Directional bonds / and
\\ are read as single bonds; cis/trans geometry is not modelled.

Hydrogen filling follows the usual rules: bracket atoms carry exactly
their stated hydrogens, organic-subset atoms are filled to the default
valence (aromatic bonds counting 1.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidSmiles

DEFAULT_VALENCE = {"B": 3, "C": 4, "N": 3, "O": 2, "P": 3, "S": 2,
                   "F": 1, "Cl": 1, "Br": 1, "I": 1}

ORGANIC_TWO_CHAR = ("Cl", "Br")
ORGANIC_ONE_CHAR = "BCNOPSFI"
AROMATIC_CHARS = "bcnops"

# placeholder in a stereocenter's neighbor list for its in-bracket hydrogen
H_SLOT = -1


@dataclass
class GraphAtom:
    symbol: str
    aromatic: bool = False
    charge: int = 0
    bracket_h: int | None = None
    chirality: str | None = None          # "@" or "@@"
    neighbors: list[int] = field(default_factory=list)


@dataclass
class MolGraph:
    atoms: list[GraphAtom]
    bonds: dict[tuple[int, int], float]

    def bond_order_sum(self, idx: int) -> float:
        return sum(order for pair, order in self.bonds.items() if idx in pair)

    def add_bond(self, i: int, j: int, order: float) -> None:
        key = (i, j) if i < j else (j, i)
        if i == j or key in self.bonds:
            raise InvalidSmiles(f"duplicate or self bond {i}-{j}")
        self.bonds[key] = order
        self.atoms[i].neighbors.append(j)
        self.atoms[j].neighbors.append(i)


_BOND_ORDERS = {"-": 1.0, "=": 2.0, "#": 3.0, ":": 1.5, "/": 1.0, "\\": 1.0}


def _parse_bracket(text: str, start: int) -> tuple[GraphAtom, int]:
    end = text.find("]", start)
    if end < 0:
        raise InvalidSmiles("unterminated bracket atom")
    body = text[start + 1:end]
    pos = 0
    while pos < len(body) and body[pos].isdigit():
        pos += 1  # isotope label is accepted and ignored

    if pos + 1 < len(body) and body[pos:pos + 2].isalpha() \
            and body[pos:pos + 2].capitalize() in DEFAULT_VALENCE:
        raw = body[pos:pos + 2]
        pos += 2
    elif pos < len(body) and body[pos].isalpha():
        raw = body[pos]
        pos += 1
    else:
        raise InvalidSmiles(f"bad bracket atom [{body}]")
    aromatic = raw.islower()
    symbol = raw.capitalize()

    chirality = None
    if body[pos:pos + 2] == "@@":
        chirality, pos = "@@", pos + 2
    elif body[pos:pos + 1] == "@":
        chirality, pos = "@", pos + 1

    hydrogens = 0
    if body[pos:pos + 1] == "H":
        pos += 1
        digits = ""
        while pos < len(body) and body[pos].isdigit():
            digits += body[pos]
            pos += 1
        hydrogens = int(digits) if digits else 1

    charge = 0
    while pos < len(body) and body[pos] in "+-":
        sign = 1 if body[pos] == "+" else -1
        pos += 1
        digits = ""
        while pos < len(body) and body[pos].isdigit():
            digits += body[pos]
            pos += 1
        charge += sign * (int(digits) if digits else 1)

    if body[pos:pos + 1] == ":":
        pos = len(body)  # atom-class label, ignored
    if pos != len(body):
        raise InvalidSmiles(f"unparsed bracket content in [{body}]")
    atom = GraphAtom(symbol=symbol, aromatic=aromatic, charge=charge,
                     bracket_h=hydrogens, chirality=chirality)
    return atom, end + 1


def parse_smiles(text: str) -> MolGraph:
    text = text.strip()
    if not text:
        raise InvalidSmiles("empty SMILES string")

    graph = MolGraph([], {})
    stack: list[int] = []
    previous: int | None = None
    pending_bond: float | None = None
    rings: dict[int, tuple[int, float | None]] = {}
    i = 0

    def attach(new_idx: int) -> None:
        nonlocal previous, pending_bond
        if previous is not None:
            order = pending_bond
            if order is None:
                both_aromatic = (graph.atoms[previous].aromatic
                                 and graph.atoms[new_idx].aromatic)
                order = 1.5 if both_aromatic else 1.0
            graph.add_bond(previous, new_idx, order)
        pending_bond = None
        previous = new_idx

    while i < len(text):
        ch = text[i]
        if ch == "[":
            atom, i = _parse_bracket(text, i)
            graph.atoms.append(atom)
            attach(len(graph.atoms) - 1)
            if atom.bracket_h and atom.chirality:
                atom.neighbors.append(H_SLOT)
        elif text[i:i + 2] in ORGANIC_TWO_CHAR:
            graph.atoms.append(GraphAtom(symbol=text[i:i + 2]))
            attach(len(graph.atoms) - 1)
            i += 2
        elif ch in ORGANIC_ONE_CHAR:
            graph.atoms.append(GraphAtom(symbol=ch))
            attach(len(graph.atoms) - 1)
            i += 1
        elif ch in AROMATIC_CHARS:
            graph.atoms.append(GraphAtom(symbol=ch.upper(), aromatic=True))
            attach(len(graph.atoms) - 1)
            i += 1
        elif ch in _BOND_ORDERS:
            if pending_bond is not None:
                raise InvalidSmiles("two bond symbols in a row")
            pending_bond = _BOND_ORDERS[ch]
            i += 1
        elif ch == "(":
            if previous is None:
                raise InvalidSmiles("branch before any atom")
            stack.append(previous)
            i += 1
        elif ch == ")":
            if not stack:
                raise InvalidSmiles("unmatched ')'")
            previous = stack.pop()
            i += 1
        elif ch.isdigit() or ch == "%":
            if ch == "%":
                if not text[i + 1:i + 3].isdigit():
                    raise InvalidSmiles("bad %nn ring closure")
                label, i = int(text[i + 1:i + 3]), i + 3
            else:
                label, i = int(ch), i + 1
            if previous is None:
                raise InvalidSmiles("ring closure before any atom")
            if label in rings:
                other, order_there = rings.pop(label)
                order = pending_bond if pending_bond is not None else order_there
                if order is None:
                    both = (graph.atoms[other].aromatic
                            and graph.atoms[previous].aromatic)
                    order = 1.5 if both else 1.0
                graph.add_bond(other, previous, order)
                pending_bond = None
            else:
                rings[label] = (previous, pending_bond)
                pending_bond = None
        elif ch == ".":
            raise InvalidSmiles("disconnected structures are not supported")
        else:
            raise InvalidSmiles(f"unexpected character {ch!r} at position {i}")

    if stack:
        raise InvalidSmiles("unmatched '('")
    if rings:
        raise InvalidSmiles(f"unclosed ring bonds: {sorted(rings)}")
    if not graph.atoms:
        raise InvalidSmiles("no atoms found")
    return graph


def implicit_hydrogens(graph: MolGraph, idx: int) -> int:
    atom = graph.atoms[idx]
    if atom.bracket_h is not None:
        return atom.bracket_h
    valence = DEFAULT_VALENCE.get(atom.symbol)
    if valence is None:
        return 0
    return max(0, int(round(valence - graph.bond_order_sum(idx))))


def add_hydrogens(graph: MolGraph) -> MolGraph:
    """Append explicit hydrogen atoms; fills stereo H placeholder slots."""
    for idx in range(len(graph.atoms)):
        atom = graph.atoms[idx]
        for k in range(implicit_hydrogens(graph, idx)):
            graph.atoms.append(GraphAtom(symbol="H"))
            h_idx = len(graph.atoms) - 1
            key = (idx, h_idx)
            graph.bonds[key] = 1.0
            graph.atoms[h_idx].neighbors.append(idx)
            if k == 0 and H_SLOT in atom.neighbors:
                atom.neighbors[atom.neighbors.index(H_SLOT)] = h_idx
            else:
                atom.neighbors.append(h_idx)
    return graph


def stereocenters(graph: MolGraph) -> list[tuple[int, list[int], int]]:
    """(center, ordered neighbors, parity sign) for @/@@ atoms.

    The sign fixes the orientation of det[n2-n1, n3-n1, n4-n1]: +1 for @@
    and -1 for @ (this package's parity convention; the two marks always
    embed as opposite enantiomers).
    """
    out = []
    for idx, atom in enumerate(graph.atoms):
        if atom.chirality and len(atom.neighbors) == 4:
            sign = 1 if atom.chirality == "@@" else -1
            out.append((idx, list(atom.neighbors), sign))
    return out
