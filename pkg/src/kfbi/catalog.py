"""Benchmark catalog: the six model problems as experiment configurations.

Where a problem fixes only the ratio kappa/beta, the individual coefficients
below are a choice of this catalog.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import sympy as sp

from .bie import KINDS


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    surface: str
    curve: str
    kind: str
    solution_plus: str
    solution_minus: Optional[str] = None
    coords: str = "embedded"  # solution expressions in (x, y, z) or in (u, v)
    surface_params: dict = field(default_factory=dict)
    curve_params: dict = field(default_factory=dict)
    kappa_plus: float = 0.0
    kappa_minus: float = 0.0
    beta_plus: float = 1.0
    beta_minus: float = 1.0
    grid_sizes: tuple = (64, 128, 256)
    gmres_tol: float = 1e-8
    mg_tol: float = 1e-10
    output: Optional[str] = None
    dump_fields: bool = False

    def validate(self):
        from .interface import _CURVES
        from .surfaces import surface_names

        if self.surface not in surface_names():
            raise ValueError(f"unknown surface {self.surface!r}")
        if self.curve not in _CURVES:
            raise ValueError(f"unknown curve {self.curve!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.kind.startswith("interface") and self.solution_minus is None:
            raise ValueError("interface problems need solution_minus")
        for n in self.grid_sizes:
            if n < 32 or n & (n - 1):
                raise ValueError(f"grid size {n} is not a power of two >= 32")
        if self.coords not in ("embedded", "param"):
            raise ValueError("coords must be 'embedded' or 'param'")
        return self

    def with_sizes(self, sizes) -> "ExperimentConfig":
        return replace(self, grid_sizes=tuple(int(n) for n in sizes))


PI = sp.pi

_EX1 = dict(surface="cubic_sheet", curve="rotated_ellipse",
            curve_params=dict(r_a=0.7, r_b=0.4, alpha=float(3 * PI / 5)),
            solution_plus="exp((2*x + y)/7)*cos((x - 3*y)/7)", kappa_plus=5.0)

_EX3 = dict(surface="saddle", curve="star",
            curve_params=dict(r_a=0.7, r_b=0.4, alpha=float(6 * PI / 7), eps=0.3, m=3),
            kind="interface_equal_ratio",
            solution_plus="z*exp(x)*cos(y)", solution_minus="z*exp(y)*sin(x)")

CATALOG = {
    "ex1_dirichlet": ExperimentConfig(name="ex1_dirichlet", kind="dirichlet_bvp", **_EX1),
    "ex1_neumann": ExperimentConfig(name="ex1_neumann", kind="neumann_bvp", **_EX1),
    "ex2_helicoid": ExperimentConfig(
        name="ex2_helicoid", surface="helicoid", curve="circle", curve_params=dict(radius=0.5),
        kind="interface_equal_ratio",
        solution_plus="sin(x)*sin(y)*sin(z)", solution_minus="(x**2 - z - 1)*(y**2 + z - 1)",
        beta_plus=2.0, beta_minus=1.0, kappa_plus=2.0, kappa_minus=1.0),
    # beta+/beta- = q with kappa/beta = 1
    "ex3_saddle_q0.001": ExperimentConfig(name="ex3_saddle_q0.001", beta_plus=1.0, beta_minus=1000.0,
                                          kappa_plus=1.0, kappa_minus=1000.0, **_EX3),
    "ex3_saddle_q0.5": ExperimentConfig(name="ex3_saddle_q0.5", beta_plus=1.0, beta_minus=2.0,
                                        kappa_plus=1.0, kappa_minus=2.0, **_EX3),
    "ex3_saddle_q1000": ExperimentConfig(name="ex3_saddle_q1000", beta_plus=1.0, beta_minus=0.001,
                                         kappa_plus=1.0, kappa_minus=0.001, **_EX3),
    # kappa/beta = c on both sides, N = 128
    "ex3_saddle_c1e3_a": ExperimentConfig(name="ex3_saddle_c1e3_a", kappa_plus=1.2e3, kappa_minus=8e2,
                                          beta_plus=1.2, beta_minus=0.8, grid_sizes=(128,), **_EX3),
    "ex3_saddle_c1e-3_a": ExperimentConfig(name="ex3_saddle_c1e-3_a", kappa_plus=1.2e-3, kappa_minus=8e-4,
                                           beta_plus=1.2, beta_minus=0.8, grid_sizes=(128,), **_EX3),
    "ex3_saddle_c1e3_b": ExperimentConfig(name="ex3_saddle_c1e3_b", kappa_plus=2.0, kappa_minus=0.7,
                                          beta_plus=2e-3, beta_minus=7e-4, grid_sizes=(128,), **_EX3),
    "ex3_saddle_c1e-3_b": ExperimentConfig(name="ex3_saddle_c1e-3_b", kappa_plus=2.0, kappa_minus=0.7,
                                           beta_plus=2e3, beta_minus=7e2, grid_sizes=(128,), **_EX3),
    "ex4_paraboloid": ExperimentConfig(
        name="ex4_paraboloid", surface="paraboloid", curve="star",
        curve_params=dict(r_a=0.7, r_b=0.7, alpha=float(11 * PI / 13), eps=0.3, m=5),
        kind="interface_generic",
        solution_plus="cos(x + y)*sin(z)", solution_minus="(x**2 - 1)*(y**2 - 1)",
        beta_plus=1.0, beta_minus=1.0, kappa_plus=3.0, kappa_minus=0.5),
    "ex5_torus_g1": ExperimentConfig(
        name="ex5_torus_g1", surface="torus", curve="rotated_ellipse",
        curve_params=dict(r_a=1.0, r_b=0.6, alpha=float(9 * PI / 13)),
        kind="interface_equal_ratio", coords="param",
        solution_plus="sin(u)*cos(v)", solution_minus="cos(u)*sin(v)",
        beta_plus=2.0, beta_minus=0.5, kappa_plus=2.0, kappa_minus=0.5),
    "ex5_torus_g2": ExperimentConfig(
        name="ex5_torus_g2", surface="torus", curve="star",
        curve_params=dict(r_a=0.6, r_b=0.6, alpha=float(PI / 4), eps=0.4, m=3),
        kind="interface_equal_ratio", coords="param",
        solution_plus="sin(u)*cos(v)", solution_minus="cos(u)*sin(v)",
        beta_plus=2.0, beta_minus=0.5, kappa_plus=2.0, kappa_minus=0.5),
    "ex6_dupin": ExperimentConfig(
        name="ex6_dupin", surface="dupin", curve="circle", curve_params=dict(radius=1.0),
        kind="interface_equal_ratio", coords="param",
        solution_plus="sin(u)*sin(v)", solution_minus="cos(u)*cos(v)",
        beta_plus=3.0, beta_minus=0.8, kappa_plus=3.0, kappa_minus=0.8),
}


def get_config(name: str) -> ExperimentConfig:
    if name not in CATALOG:
        raise KeyError(f"unknown example {name!r}; known: {sorted(CATALOG)}")
    return CATALOG[name]


# ---------------------------------------------------------------------------
# INI config files
# ---------------------------------------------------------------------------

def _parse_value(text: str):
    """Numbers may be written as expressions such as ``3*pi/5``."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    return float(sp.sympify(text))


def _parse_params(text: str) -> dict:
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, _, val = item.partition("=")
        out[key.strip()] = _parse_value(val)
    return out


def load_config(path) -> ExperimentConfig:
    """Read an INI file with an ``[experiment]`` section.

    ``base = <catalog name>`` starts from a catalog entry; every other key
    overrides a field. Parameter dictionaries are written ``r_a=0.7, alpha=3*pi/5``
    and grid sizes as ``64, 128, 256``.
    """
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    if "experiment" not in parser:
        raise ValueError(f"{path}: missing [experiment] section")
    sec = dict(parser["experiment"])
    base = sec.pop("base", None)
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for key, raw in sec.items():
        if key not in known:
            raise ValueError(f"{path}: unknown key {key!r}")
        if key in ("surface_params", "curve_params"):
            values[key] = _parse_params(raw)
        elif key == "grid_sizes":
            values[key] = tuple(int(s) for s in raw.replace(",", " ").split())
        elif key in ("kappa_plus", "kappa_minus", "beta_plus", "beta_minus", "gmres_tol", "mg_tol"):
            values[key] = _parse_value(raw)
        elif key == "dump_fields":
            values[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif key == "solution_minus" and raw.strip().lower() in ("", "none"):
            values[key] = None
        else:
            values[key] = raw.strip()
    if base is not None:
        cfg = replace(get_config(base.strip()), **values)
    else:
        cfg = ExperimentConfig(**values)
    out = cfg.output
    if out is not None and not Path(out).is_absolute():
        cfg = replace(cfg, output=str(Path(path).parent / out))
    return cfg.validate()
