"""Experiment pipelines that emit one metric per CSV row."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .analytic import analytic_circle_solution
from .assembly import BlockSystem, Formulation, IncidentWave
from .geometry import build_tree, make_circle_mesh, make_square_mesh, read_mesh
from .kernels import Material
from .solver import (DEFAULT_DENSE_LIMIT_BYTES, ConvRefused, dense_matrix_bytes,
                     solve_additional_rhs, solve_dense, solve_fds)

log = logging.getLogger(__name__)

CSV_HEADER = ("experiment", "geometry", "formulation", "N", "DOF", "omega", "rho1", "k_leaf",
              "metric", "value")
MODES = ("accuracy", "complexity", "robustness", "multirhs", "analytic")


def default_rho1_grid():
    return [round(0.1 * i, 1) for i in range(1, 101)]


@dataclass
class ExperimentConfig:
    mode: str = "accuracy"
    geometry: str = "circle"
    mesh_file: str | None = None
    n: tuple = (3200,)
    formulation: str = "pmchwt"
    omega: tuple = (4.0,)
    cl0: float = math.sqrt(3.0)
    ct0: float = 1.0
    rho0: float = 1.0
    cl1: float = 3.0
    ct1: float = 1.5
    rho1: float = 2.0
    rank: tuple = (30,)
    growth: float = 1.15
    leaf_size: int = 100
    radius_factor: float = 1.75
    proxy_points: int = 64
    alpha_im: float | None = None
    num_rhs: int = 10
    seed: int = 0
    top_size: int | None = None
    rho1_values: tuple = field(default_factory=lambda: tuple(default_rho1_grid()))
    conv: bool = True
    conv_memory_limit: float = DEFAULT_DENSE_LIMIT_BYTES

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.geometry not in ("circle", "square", "file"):
            raise ValueError("geometry must be circle, square or file")
        if self.geometry == "file" and not self.mesh_file:
            raise ValueError("geometry 'file' needs a mesh file")
        if self.formulation not in ("pmchwt", "bm"):
            raise ValueError("formulation must be pmchwt or bm")
        vals = (self.cl0, self.ct0, self.rho0, self.cl1, self.ct1, self.rho1, self.radius_factor,
                *self.omega, *self.rho1_values)
        if any(not v > 0 for v in vals):
            raise ValueError("physical parameters must be positive")
        if self.growth < 1:
            raise ValueError("growth must be >= 1")
        if any(k < 1 for k in self.rank) or any(n < 8 for n in self.n):
            raise ValueError("ranks must be positive and N >= 8")

    def materials(self, omega, rho1=None):
        m0 = Material.from_speeds(self.cl0, self.ct0, self.rho0, omega)
        m1 = Material.from_speeds(self.cl1, self.ct1, self.rho1 if rho1 is None else rho1, omega)
        return m0, m1

    def form(self):
        if self.formulation == "pmchwt":
            return Formulation.pmchwt()
        return Formulation.burton_miller(None if self.alpha_im is None else 1j * self.alpha_im)

    def mesh(self, N):
        if self.geometry == "circle":
            return make_circle_mesh(N)
        if self.geometry == "square":
            return make_square_mesh(N)
        return read_mesh(self.mesh_file)


def incident_angles(num: int):
    """First along x1, then ``num - 1`` equally spaced further directions."""
    return [2 * math.pi * j / num for j in range(num)]


class _Rows:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.rows = []

    def add(self, N, omega, rho1, k, metric, value):
        self.rows.append({"experiment": self.cfg.mode, "geometry": self.cfg.geometry,
                          "formulation": self.cfg.formulation, "N": N, "DOF": 4 * N,
                          "omega": omega, "rho1": rho1, "k_leaf": k, "metric": metric,
                          "value": value})


def _fds(cfg, system, k, rhs, keep_lu=True, top_size=None):
    tree = build_tree(system.mesh, min(cfg.leaf_size, system.mesh.N // 2))
    return solve_fds(system, tree, k_leaf=k, growth=cfg.growth, radius_factor=cfg.radius_factor,
                     proxy_points=cfg.proxy_points, rhs=rhs, top_size=top_size, keep_lu=keep_lu)


def _conv(cfg, system, rhs):
    return solve_dense(system, rhs=rhs, memory_limit=cfg.conv_memory_limit)


def run_accuracy(cfg: ExperimentConfig, out: _Rows):
    """FDS versus Conv relative 2-norm error per rank.  Each rank compresses
    until at most 32 k unknowns remain, so every DOF is actually compressed."""
    for omega in cfg.omega:
        for N in cfg.n:
            m0, m1 = cfg.materials(omega)
            system = BlockSystem(cfg.mesh(N), m0, m1, cfg.form())
            rhs = system.rhs(IncidentWave())
            t0 = time.perf_counter()
            ref = _conv(cfg, system, rhs)
            out.add(N, omega, m1.rho, "", "time_conv", time.perf_counter() - t0)
            for k in cfg.rank:
                t0 = time.perf_counter()
                top = cfg.top_size if cfg.top_size is not None else 32 * k
                sol, _ = _fds(cfg, system, k, rhs, top_size=top)
                out.add(N, omega, m1.rho, k, "time_fds", time.perf_counter() - t0)
                out.add(N, omega, m1.rho, k, "rel_error", sol.relative_error(ref))


def time_fds_total(cfg: ExperimentConfig, N, omega, k, rho1=None, keep_lu=False):
    """Mesh-to-solution wall time of one FDS solve and its solution."""
    t0 = time.perf_counter()
    m0, m1 = cfg.materials(omega, rho1)
    system = BlockSystem(cfg.mesh(N), m0, m1, cfg.form())
    rhs = system.rhs(IncidentWave())
    sol, fact = _fds(cfg, system, k, rhs, keep_lu=keep_lu, top_size=cfg.top_size)
    return time.perf_counter() - t0, sol, fact


def time_conv_total(cfg: ExperimentConfig, N, omega, rho1=None):
    t0 = time.perf_counter()
    m0, m1 = cfg.materials(omega, rho1)
    system = BlockSystem(cfg.mesh(N), m0, m1, cfg.form())
    sol = _conv(cfg, system, system.rhs(IncidentWave()))
    return time.perf_counter() - t0, sol


def run_complexity(cfg: ExperimentConfig, out: _Rows):
    for omega in cfg.omega:
        for k in cfg.rank:
            for N in cfg.n:
                t, _, fact = time_fds_total(cfg, N, omega, k)
                out.add(N, omega, cfg.rho1, k, "time_fds", t)
                out.add(N, omega, cfg.rho1, k, "factor_bytes", fact.memory_bytes())
                if cfg.conv:
                    if dense_matrix_bytes(N) > cfg.conv_memory_limit:
                        out.add(N, omega, cfg.rho1, "", "conv_refused", 1)
                        continue
                    t, _ = time_conv_total(cfg, N, omega)
                    out.add(N, omega, cfg.rho1, "", "time_conv", t)


def run_robustness(cfg: ExperimentConfig, out: _Rows):
    k = cfg.rank[0]
    for omega in cfg.omega:
        for N in cfg.n:
            for rho1 in cfg.rho1_values:
                t, sol, _ = time_fds_total(cfg, N, omega, k, rho1)
                out.add(N, omega, rho1, k, "time_fds", t)
                if cfg.conv:
                    tc, ref = time_conv_total(cfg, N, omega, rho1)
                    out.add(N, omega, rho1, k, "time_conv", tc)
                    out.add(N, omega, rho1, k, "rel_error", sol.relative_error(ref))


def run_multirhs(cfg: ExperimentConfig, out: _Rows):
    k = cfg.rank[0]
    angles = incident_angles(cfg.num_rhs)
    for omega in cfg.omega:
        for N in cfg.n:
            t0 = time.perf_counter()
            m0, m1 = cfg.materials(omega)
            system = BlockSystem(cfg.mesh(N), m0, m1, cfg.form())
            rhs = system.rhs(IncidentWave.at_angle(angles[0]))
            _, fact = _fds(cfg, system, k, rhs, top_size=cfg.top_size)
            t_first = time.perf_counter() - t0
            t0 = time.perf_counter()
            for th in angles[1:]:
                solve_additional_rhs(fact, system.rhs(IncidentWave.at_angle(th)))
            t_rest = time.perf_counter() - t0
            out.add(N, omega, m1.rho, k, "time_first", t_first)
            out.add(N, omega, m1.rho, k, "time_rest", t_rest)


def boundary_error_vs_analytic(sol, mesh, m0, m1):
    """Relative L2 error of nodal displacements against the series solution."""
    theta = np.arctan2(mesh.nodes[:, 1], mesh.nodes[:, 0])
    radius = float(np.mean(np.hypot(*mesh.nodes.T)))
    an = analytic_circle_solution(m0, m1, a=radius)
    ex = an.boundary_displacement(theta)
    return float(np.linalg.norm(sol.u - ex) / np.linalg.norm(ex))


def run_analytic(cfg: ExperimentConfig, out: _Rows):
    if cfg.geometry != "circle":
        raise ValueError("the analytic comparison needs the circle geometry")
    for omega in cfg.omega:
        for N in cfg.n:
            m0, m1 = cfg.materials(omega)
            mesh = cfg.mesh(N)
            system = BlockSystem(mesh, m0, m1, cfg.form())
            t0 = time.perf_counter()
            sol = _conv(cfg, system, system.rhs(IncidentWave()))
            out.add(N, omega, m1.rho, "", "time_conv", time.perf_counter() - t0)
            out.add(N, omega, m1.rho, "", "rel_l2_error", boundary_error_vs_analytic(sol, mesh, m0, m1))


_RUNNERS = {"accuracy": run_accuracy, "complexity": run_complexity,
            "robustness": run_robustness, "multirhs": run_multirhs, "analytic": run_analytic}


def run_experiment(cfg: ExperimentConfig):
    """Rows (dicts keyed by :data:`CSV_HEADER`) of the requested experiment."""
    rows = _Rows(cfg)
    _RUNNERS[cfg.mode](cfg, rows)
    return rows.rows


def write_csv(rows, path_or_file):
    """UTF-8 CSV with LF line endings."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", encoding="utf-8", newline="") if own else path_or_file
    try:
        w = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    finally:
        if own:
            fh.close()


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])

