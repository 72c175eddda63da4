"""SMILES to multi-conformer 3-D structures for the icochem pipeline.

The boundary with the featurizer is the SDF file format: this package
parses SMILES, adds hydrogens, embeds seeded conformers with a simple
force-field minimisation, and emits V2000 SDF bytes.  ``DatasetReader``
and ``dataset_iterator`` expose the featurizer's net containers to ML
code.
"""

from dataclasses import dataclass

from .embed import embed_conformer
from .errors import ConfgenError, EmbeddingFailure, FileFormatError, InvalidSmiles
from .reader import DatasetReader, dataset_iterator
from .sdf import to_sdf
from .smiles import MolGraph, add_hydrogens, parse_smiles

__version__ = "0.1.0"

MAX_CONFORMERS = 500


@dataclass
class ConformerRequest:
    smiles: str
    n_conformers: int = 1
    add_hydrogens: bool = True
    minimise: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.smiles or not self.smiles.strip():
            raise ValueError("smiles must be non-empty")
        if not 1 <= self.n_conformers <= MAX_CONFORMERS:
            raise ValueError(
                f"n_conformers must lie in [1, {MAX_CONFORMERS}]")


def smiles_to_structures(request: ConformerRequest,
                         title: str = "") -> bytes:
    """Multi-conformer SDF bytes for a SMILES string.

    Deterministic in ``request.seed``; conformer k uses substream k.
    """
    graph = parse_smiles(request.smiles)
    if request.add_hydrogens:
        graph = add_hydrogens(graph)
    conformers = [embed_conformer(graph, request.seed, k,
                                  minimise=request.minimise)
                  for k in range(request.n_conformers)]
    return to_sdf(graph, conformers, title=title or request.smiles)


__all__ = [
    "ConformerRequest", "ConfgenError", "DatasetReader", "EmbeddingFailure",
    "FileFormatError", "InvalidSmiles", "MolGraph", "add_hydrogens",
    "dataset_iterator", "embed_conformer", "parse_smiles",
    "smiles_to_structures", "to_sdf",
]
