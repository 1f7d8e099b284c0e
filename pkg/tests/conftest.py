from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from gcn_sizer import load_technology, parse_netlist
from gcn_sizer.circuit import ComponentKind
from gcn_sizer.params import ParamSpec
from gcn_sizer.technology import DeviceModelFeatures, TechnologyNode, ZERO_FEATURES


def data_path(name: str) -> Path:
    return Path(str(resources.files("gcn_sizer.data") / name))


@pytest.fixture(scope="session")
def tech_n180():
    return load_technology(data_path("n180.yaml"))


@pytest.fixture(scope="session")
def two_stage_tia():
    return parse_netlist(data_path("two_stage_tia.net").read_text(), "two_stage_tia")


@pytest.fixture(scope="session")
def three_stage_tia():
    return parse_netlist(data_path("three_stage_tia.net").read_text(), "three_stage_tia")


@pytest.fixture(scope="session")
def quad4():
    return parse_netlist(data_path("quad4.net").read_text(), "quad4")


def make_tech(name="toy", w=(1e-7, 1e-5, 1e-8, "log"), l=(1e-7, 1e-6, 1e-8, "linear"),
              m=(1.0, 10.0, 1.0, "linear"), r=(1e2, 1e5, 10.0, "log"),
              c=(1e-13, 1e-11, 1e-13, "log")) -> TechnologyNode:
    """Small technology node for tests that need custom grids."""
    features = {
        ComponentKind.NMOS: DeviceModelFeatures(8e4, 0.4, -0.9, 400.0, 3e-10),
        ComponentKind.PMOS: DeviceModelFeatures(7e4, -0.45, -0.8, 160.0, 4e-10),
        ComponentKind.RESISTOR: ZERO_FEATURES,
        ComponentKind.CAPACITOR: ZERO_FEATURES,
    }
    specs = {}
    for kind in (ComponentKind.NMOS, ComponentKind.PMOS):
        for pname, cfg in (("W", w), ("L", l), ("M", m)):
            specs[(kind, pname)] = ParamSpec(pname, cfg[0], cfg[1], cfg[2], cfg[3])
    specs[(ComponentKind.RESISTOR, "r")] = ParamSpec("r", r[0], r[1], r[2], r[3])
    specs[(ComponentKind.CAPACITOR, "c")] = ParamSpec("c", c[0], c[1], c[2], c[3])
    return TechnologyNode(name=name, features=features, param_specs=specs)


def random_netlist_text(rng: np.random.Generator, n_min=3, n_max=10) -> str:
    """Random connected-ish netlist over the four kinds for property tests."""
    n = int(rng.integers(n_min, n_max + 1))
    kinds = ["nmos", "pmos", "res", "cap"]
    lines = []
    for i in range(n):
        kind = kinds[int(rng.integers(len(kinds)))]
        nets = [f"net{int(rng.integers(max(1, n)))}" for _ in range(int(rng.integers(1, 4)))]
        if i > 0:
            nets.append(f"net{int(rng.integers(i))}")  # bias towards shared nets
        lines.append(f"X{i} {kind} {' '.join(dict.fromkeys(nets))}")
    return "\n".join(lines) + "\n"
