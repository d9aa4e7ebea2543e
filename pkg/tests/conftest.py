import sys

import numpy as np
import pytest

from pgc.circuit import Circuit, Const, Product, Sum, Var
from pgc.pc import Indicator, MassCircuit

# Pr(X1, X2, X3), rows 000, 001, ..., 111
THREE_JOINT = np.array([0.02, 0.08, 0.12, 0.48, 0.02, 0.08, 0.04, 0.16])
L_BETA = np.array([[1.0, 2.0, 0.0], [2.0, 6.0, 0.0], [0.0, 0.0, 4.0]])
K_BETA = np.array([[0.3, 0.2, 0.0], [0.2, 0.8, 0.0], [0.0, 0.0, 0.8]])


def three_gp_circuit():
    # (0.1 (z1 + 1)(6 z2 + 1) - 0.4 z1 z2)(0.8 z3 + 0.2)
    return Circuit([
        Var(0),                       # 0: z1
        Const(1.0),                   # 1
        Sum([(0, 1.0), (1, 1.0)]),    # 2: z1 + 1
        Var(1),                       # 3: z2
        Sum([(3, 6.0), (1, 1.0)]),    # 4: 6 z2 + 1
        Product([2, 4]),              # 5
        Product([0, 3]),              # 6: z1 z2
        Sum([(5, 0.1), (6, -0.4)]),   # 7
        Var(2),                       # 8: z3
        Sum([(8, 0.8), (1, 0.2)]),    # 9
        Product([7, 9]),              # 10: root
    ], 3)


def three_pc_mass_circuit():
    # sum over (X1, X2) states times an independent factor on X3
    nodes = [Indicator(0), Indicator(0, True), Indicator(1), Indicator(1, True)]
    p12 = {(0, 0): 0.1, (0, 1): 0.6, (1, 0): 0.1, (1, 1): 0.2}
    terms = []
    for (a, b), p in p12.items():
        nodes.append(Product([0 if a else 1, 2 if b else 3]))
        terms.append((len(nodes) - 1, p))
    nodes.append(Sum(terms))
    s12 = len(nodes) - 1
    nodes += [Indicator(2), Indicator(2, True)]
    nodes.append(Sum([(len(nodes) - 2, 0.8), (len(nodes) - 1, 0.2)]))
    nodes.append(Product([s12, len(nodes) - 1]))
    return MassCircuit(nodes, 3)


@pytest.fixture
def three_gp():
    return three_gp_circuit()


@pytest.fixture
def three_pc():
    return three_pc_mass_circuit()


@pytest.fixture
def rng():
    return np.random.default_rng(20210718)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(mod.line(num))
