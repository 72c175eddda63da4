import pytest

from icochem_confgen import add_hydrogens, parse_smiles
from icochem_confgen.errors import InvalidSmiles
from icochem_confgen.smiles import implicit_hydrogens, stereocenters


def symbols(graph):
    return [a.symbol for a in graph.atoms]


class TestParser:
    def test_water(self):
        graph = add_hydrogens(parse_smiles("O"))
        assert symbols(graph) == ["O", "H", "H"]
        assert len(graph.bonds) == 2

    def test_methane(self):
        graph = add_hydrogens(parse_smiles("C"))
        assert symbols(graph) == ["C", "H", "H", "H", "H"]

    def test_ethanol(self):
        graph = add_hydrogens(parse_smiles("CCO"))
        assert symbols(graph).count("C") == 2
        assert symbols(graph).count("O") == 1
        assert symbols(graph).count("H") == 6

    def test_double_and_triple_bonds(self):
        ethene = add_hydrogens(parse_smiles("C=C"))
        assert symbols(ethene).count("H") == 4
        ethyne = add_hydrogens(parse_smiles("C#C"))
        assert symbols(ethyne).count("H") == 2
        assert ethyne.bonds[(0, 1)] == 3.0

    def test_branching(self):
        isobutane = add_hydrogens(parse_smiles("CC(C)C"))
        assert symbols(isobutane).count("C") == 4
        assert symbols(isobutane).count("H") == 10
        # central carbon bonds to the three others
        assert sorted(isobutane.atoms[1].neighbors)[:3] == [0, 2, 3]

    def test_benzene_ring(self):
        benzene = add_hydrogens(parse_smiles("c1ccccc1"))
        assert symbols(benzene).count("C") == 6
        assert symbols(benzene).count("H") == 6
        ring_orders = [benzene.bonds[key] for key in benzene.bonds
                       if all(benzene.atoms[a].symbol == "C" for a in key)]
        assert all(order == 1.5 for order in ring_orders)
        assert len(ring_orders) == 6  # closure bond included

    def test_two_character_elements(self):
        graph = add_hydrogens(parse_smiles("ClCBr"))
        assert symbols(graph) == ["Cl", "C", "Br", "H", "H"]

    def test_bracket_charge_and_h(self):
        ammonium = add_hydrogens(parse_smiles("[NH4+]"))
        assert symbols(ammonium) == ["N", "H", "H", "H", "H"]
        assert ammonium.atoms[0].charge == 1
        hydroxide = add_hydrogens(parse_smiles("[OH-]"))
        assert symbols(hydroxide) == ["O", "H"]
        assert hydroxide.atoms[0].charge == -1

    def test_isotope_ignored(self):
        graph = add_hydrogens(parse_smiles("[13CH4]"))
        assert symbols(graph) == ["C", "H", "H", "H", "H"]

    def test_percent_ring_closure(self):
        a = add_hydrogens(parse_smiles("C%10CCCCC%10"))
        b = add_hydrogens(parse_smiles("C1CCCCC1"))
        assert symbols(a) == symbols(b)
        assert len(a.bonds) == len(b.bonds)

    @pytest.mark.parametrize("bad", [
        "", "   ", "C(", "C)", "C1CC", "[C", "[Zz]", "C..C", "C==C", "X",
    ])
    def test_invalid_smiles(self, bad):
        with pytest.raises(InvalidSmiles):
            parse_smiles(bad)

    def test_implicit_h_counts(self):
        graph = parse_smiles("C=O")
        assert implicit_hydrogens(graph, 0) == 2
        assert implicit_hydrogens(graph, 1) == 0


class TestStereo:
    def test_neighbor_order_with_leading_stereocenter(self):
        graph = add_hydrogens(parse_smiles("[C@@H](F)(Cl)Br"))
        centers = stereocenters(graph)
        assert len(centers) == 1
        center, neighbors, sign = centers[0]
        assert center == 0
        assert [graph.atoms[n].symbol for n in neighbors] == \
            ["H", "F", "Cl", "Br"]
        assert sign == 1

    def test_neighbor_order_with_preceding_atom(self):
        graph = add_hydrogens(parse_smiles("N[C@H](C)O"))
        center, neighbors, sign = stereocenters(graph)[0]
        assert center == 1
        assert [graph.atoms[n].symbol for n in neighbors] == \
            ["N", "H", "C", "O"]
        assert sign == -1

    def test_marks_opposite_signs(self):
        plus = stereocenters(add_hydrogens(parse_smiles("[C@@H](F)(Cl)Br")))
        minus = stereocenters(add_hydrogens(parse_smiles("[C@H](F)(Cl)Br")))
        assert plus[0][2] == -minus[0][2]
