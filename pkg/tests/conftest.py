"""Shared corpus and graph generators for the test suite."""

import random

import pytest

from chemsearch.molgraph import (
    DOUBLE,
    SINGLE,
    TRIPLE,
    Atom,
    Bond,
    MolecularGraph,
    ORGANIC_SUBSET,
    parse_smiles,
)

# Parseable molecules covering the supported grammar: chains, branches,
# rings, aromatics, charges, multi-digit ring closures, explicit bonds.
SMILES_CORPUS = [
    "C",
    "CC",
    "CCO",
    "C=C",
    "C#N",
    "CC(C)C",
    "CC(=O)O",
    "C1CC1",
    "C1CCCCC1",
    "c1ccccc1",
    "c1ccncc1",
    "c1ccc2ccccc2c1",
    "CC(C)(C)O",
    "N#Cc1ccccc1",
    "OCC(N)C(=O)O",
    "[NH4+]",
    "[O-]C(=O)C",
    "C[N+](C)(C)C",
    "Clc1ccc(Br)cc1",
    "FC(F)(F)S(=O)(=O)O",
    "CCSC",
    "B(O)(O)c1ccccc1",
    "C1CC2CCC1CC2",
    "c1cc2cccc3cccc(c1)c23",
    "IC=CC=CBr",
    "C%10CCCCC%10",
    "P(O)(O)(=O)OC",
    "C1=CC=CC=C1",
    "[S-2]",
    "C(-C)(C)C",
]


def corpus_graphs():
    return [parse_smiles(s) for s in SMILES_CORPUS]


def random_small_graph(rng: random.Random, max_atoms: int = 6) -> MolecularGraph:
    """Connected random graph: a spanning tree plus occasional ring edges."""
    elements = sorted(ORGANIC_SUBSET)
    orders = [SINGLE, DOUBLE, TRIPLE]
    n = rng.randint(1, max_atoms)
    atoms = [Atom(rng.choice(elements), rng.choice([0, 0, 0, 1, -1])) for _ in range(n)]
    bonds = []
    pairs = set()
    for j in range(1, n):
        i = rng.randrange(j)
        bonds.append(Bond(i, j, rng.choice(orders)))
        pairs.add((i, j))
    extra = rng.randint(0, 1) if n >= 3 else 0
    for _ in range(extra):
        i, j = sorted(rng.sample(range(n), 2))
        if (i, j) not in pairs:
            bonds.append(Bond(i, j, rng.choice(orders)))
            pairs.add((i, j))
    return MolecularGraph(tuple(atoms), tuple(bonds))


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
