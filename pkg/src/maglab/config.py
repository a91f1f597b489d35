"""Experiment configuration: a single versioned JSON document.

The schema is documented in docs/schema.json; `from_dict` normalizes the
document (filling defaults) so that `to_dict` round-trips to an equal config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import fields
from .errors import ConfigError
from .grid import GridSpec

SCHEMA_VERSION = 1
EXPERIMENTS = ("elliptic", "spectrum", "agmon", "flow", "duhamel", "symbolic")

_MODEL_KINDS = ("constant2d", "perturbed2d", "constant4d", "free")

_PROPAGATOR_DEFAULTS = {"krylov_dim": 30, "dt": None, "tol": 1e-10, "max_steps": 200000}
_PACKET_DEFAULTS = {"center": None, "momentum": None, "width": "sqrt_h"}


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict
    grid: dict
    h_list: list
    n: int = 1
    k: int = 3
    alpha_max: int = 4
    t_grid: list = field(default_factory=list)
    m_horizon: int = 1
    beta_list: list = field(default_factory=list)
    packet: dict = field(default_factory=lambda: dict(_PACKET_DEFAULTS))
    seed: int = 0
    propagator: dict = field(default_factory=lambda: dict(_PROPAGATOR_DEFAULTS))
    solver_tol: float = 1e-10
    eigen_tol: float = 1e-6
    quadrature_nodes: int = 32
    duhamel_axis: int = 1

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_dict(cls, doc):
        _require(isinstance(doc, dict), "config must be a JSON object")
        version = doc.get("schema_version", SCHEMA_VERSION)
        _require(version == SCHEMA_VERSION, f"unsupported schema_version {version}")
        unknown = set(doc) - {
            "schema_version", "experiment", "model", "grid", "h_list", "n", "k",
            "alpha_max", "t_grid", "m_horizon", "beta_list", "packet", "seed",
            "propagator", "solver_tol", "eigen_tol", "quadrature_nodes",
            "duhamel_axis",
        }
        _require(not unknown, f"unknown config keys: {sorted(unknown)}")
        for key in ("experiment", "model", "grid", "h_list"):
            _require(key in doc, f"missing required config key '{key}'")
        packet = dict(_PACKET_DEFAULTS)
        packet.update(doc.get("packet", {}))
        prop = dict(_PROPAGATOR_DEFAULTS)
        prop.update(doc.get("propagator", {}))
        cfg = cls(
            experiment=doc["experiment"],
            model=dict(doc["model"]),
            grid=dict(doc["grid"]),
            h_list=[float(h) for h in doc["h_list"]],
            n=int(doc.get("n", 1)),
            k=int(doc.get("k", 3)),
            alpha_max=int(doc.get("alpha_max", 4)),
            t_grid=[float(t) for t in doc.get("t_grid", [])],
            m_horizon=int(doc.get("m_horizon", 1)),
            beta_list=[float(b) for b in doc.get("beta_list", [])],
            packet=packet,
            seed=int(doc.get("seed", 0)),
            propagator=prop,
            solver_tol=float(doc.get("solver_tol", 1e-10)),
            eigen_tol=float(doc.get("eigen_tol", 1e-6)),
            quadrature_nodes=int(doc.get("quadrature_nodes", 32)),
            duhamel_axis=int(doc.get("duhamel_axis", 1)),
        )
        cfg.validate()
        return cfg

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "model": dict(self.model),
            "grid": dict(self.grid),
            "h_list": list(self.h_list),
            "n": self.n,
            "k": self.k,
            "alpha_max": self.alpha_max,
            "t_grid": list(self.t_grid),
            "m_horizon": self.m_horizon,
            "beta_list": list(self.beta_list),
            "packet": dict(self.packet),
            "seed": self.seed,
            "propagator": dict(self.propagator),
            "solver_tol": self.solver_tol,
            "eigen_tol": self.eigen_tol,
            "quadrature_nodes": self.quadrature_nodes,
            "duhamel_axis": self.duhamel_axis,
        }

    # -- validation and builders ----------------------------------------------

    def validate(self):
        _require(self.experiment in EXPERIMENTS,
                 f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        kind = self.model.get("kind")
        _require(kind in _MODEL_KINDS, f"model.kind must be one of {_MODEL_KINDS}")
        for key in ("d", "half_width", "points_per_axis"):
            _require(key in self.grid, f"grid.{key} is required")
        try:
            spec = self.build_grid()
            model = self.build_model()
        except ConfigError:
            raise
        except Exception as exc:  # invalid grid/model parameters
            raise ConfigError(str(exc)) from exc
        _require(model.d == spec.d,
                 f"model dimension {model.d} != grid dimension {spec.d}")
        _require(len(self.h_list) >= 1, "h_list must be non-empty")
        _require(all(h > 0 for h in self.h_list), "h_list entries must be positive")
        _require(all(a > b for a, b in zip(self.h_list, self.h_list[1:])),
                 "h_list must be strictly decreasing")
        if model.b0 > 0:
            for h in self.h_list:
                guard = math.sqrt(h / model.b0) / 4.0
                _require(
                    spec.spacing <= guard,
                    f"grid spacing {spec.spacing:g} does not resolve the magnetic "
                    f"length at h={h:g} (needs <= {guard:g})",
                )
        _require(self.n >= 0, "n must be >= 0")
        _require(self.k >= 0, "k must be >= 0")
        _require(0 <= self.alpha_max <= 4, "alpha_max must be in 0..4")
        _require(all(t >= 0 for t in self.t_grid), "t_grid entries must be >= 0")
        _require(all(a < b for a, b in zip(self.t_grid, self.t_grid[1:])),
                 "t_grid must be strictly increasing")
        _require(self.m_horizon >= 1, "m_horizon must be >= 1")
        _require(all(b >= 0 for b in self.beta_list), "beta_list entries must be >= 0")
        _require(self.seed >= 0, "seed must be >= 0")
        _require(self.quadrature_nodes >= 2, "quadrature_nodes must be >= 2")
        _require(1 <= self.duhamel_axis <= spec.d, "duhamel_axis out of range")
        width = self.packet.get("width")
        _require(
            width in ("sqrt_h", "ground") or (isinstance(width, (int, float)) and width > 0),
            "packet.width must be 'sqrt_h', 'ground' or a positive number",
        )
        if self.experiment in ("flow", "duhamel"):
            _require(len(self.t_grid) >= 1, f"{self.experiment} needs a t_grid")
        if self.experiment == "agmon":
            _require(len(self.beta_list) >= 1, "agmon needs a beta_list")
            _require(model.b0 > 0, "agmon requires a model with b0 > 0")
        if self.experiment == "spectrum":
            _require(model.b0 > 0, "spectrum requires a model with b0 > 0")

    def build_grid(self):
        g = self.grid
        return GridSpec(d=int(g["d"]), half_width=float(g["half_width"]),
                        points_per_axis=int(g["points_per_axis"]))

    def build_model(self):
        m = self.model
        kind = m.get("kind")
        try:
            if kind == "constant2d":
                return fields.constant2d(float(m["b"]))
            if kind == "perturbed2d":
                return fields.perturbed2d(
                    float(m["b"]), float(m["eps"]), float(m["omega"]),
                    float(self.grid["half_width"]),
                )
            if kind == "constant4d":
                return fields.constant4d(float(m["b1"]), float(m["b2"]))
            if kind == "free":
                return fields.free(int(self.grid["d"]))
        except KeyError as exc:
            raise ConfigError(f"model.{exc.args[0]} is required for kind {kind!r}") from exc
        raise ConfigError(f"unknown model kind {kind!r}")

    def packet_width(self, h, model):
        w = self.packet.get("width")
        if w == "sqrt_h":
            return math.sqrt(h)
        if w == "ground":
            if model.b0 <= 0:
                raise ConfigError("packet.width 'ground' needs a model with b0 > 0")
            return math.sqrt(2.0 * h / model.b0)
        return float(w)

    def packet_center(self, d):
        c = self.packet.get("center")
        return [0.0] * d if c is None else [float(v) for v in c]

    def packet_momentum(self, d):
        p = self.packet.get("momentum")
        return [0.0] * d if p is None else [float(v) for v in p]

    def build_propagator_config(self):
        from .propagator import PropagatorConfig

        p = self.propagator
        return PropagatorConfig(
            krylov_dim=int(p.get("krylov_dim", 30)),
            dt=None if p.get("dt") is None else float(p["dt"]),
            tol=float(p.get("tol", 1e-10)),
            max_steps=int(p.get("max_steps", 200000)),
        )
