"""icochem: icospherical featurization of 3-D molecular structures.

Pipeline: parse a structure, center it, ray-cast it onto an icosphere,
then augment through the 60 icosahedral unfoldings (plus jitter, offsets
and conformers).  Datasets stream to chunked containers with three-pass
normalization, and prediction spreads are cleaned with the IQR-ratio
method.
"""

from .augment import AugmentationPlan, NetRecord, Selection, generate_nets, select_nets
from .datastore import (DatasetHeader, DatasetReader, NormalizationMode,
                        StatsMaps, write_dataset)
from .icogeom import (IcosphereMesh, NetLayout, RotationGroup,
                      apply_face_permutation, build_icosphere, canonical_net,
                      conv_reference, enumerate_unfoldings, face_permutation,
                      rotation_group)
from .molio import (Atom, Element, GeometricDescriptors, Molecule,
                    StructureFormat, center, descriptors, parse_structure,
                    transform)
from .projector import IcoMap, assign_face, project

__version__ = "0.1.0"

__all__ = [
    "AugmentationPlan", "Atom", "DatasetHeader", "DatasetReader", "Element",
    "GeometricDescriptors", "IcoMap", "IcosphereMesh", "Molecule",
    "NetLayout", "NetRecord", "NormalizationMode", "RotationGroup",
    "Selection", "StatsMaps", "StructureFormat", "apply_face_permutation",
    "assign_face", "build_icosphere", "canonical_net", "center",
    "conv_reference", "descriptors", "enumerate_unfoldings",
    "face_permutation", "generate_nets", "parse_structure", "project",
    "rotation_group", "select_nets", "transform", "write_dataset",
]
