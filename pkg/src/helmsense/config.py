"""JSON experiment configuration with named presets for data and velocity fields."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry as geo
from . import states as st
from .errors import ConfigError

SUBCOMMANDS = ("direct", "adjoint", "shape", "topo-source", "topo-hole", "oracle1d", "convergence")


def _req(block, key, where):
    if key not in block:
        raise ConfigError(f"missing '{key}' in {where}")
    return block[key]


def parse_domain(spec) -> geo.Domain:
    kind = _req(spec, "kind", "domain")
    try:
        if kind == "interval":
            return geo.Domain.interval(float(spec.get("a", -1.0)), float(spec.get("b", 1.0)))
        if kind == "rectangle":
            return geo.Domain.rectangle(tuple(spec.get("lower", (0.0, 0.0))), tuple(spec.get("upper", (1.0, 1.0))))
        if kind == "disk":
            return geo.Domain.disk(tuple(spec.get("center", (0.0, 0.0))), float(spec.get("radius", 1.0)))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc
    raise ConfigError(f"unknown domain kind {kind!r}")


def parse_function(spec, dim) -> st.Func:
    if isinstance(spec, str):
        spec = {"preset": spec}
    name = _req(spec, "preset", "function")
    if name == "zero":
        return st.zero(dim)
    if name == "constant":
        return st.constant(float(spec.get("value", 0.0)), dim)
    if name == "linear":
        a = np.asarray(spec.get("a", [0.0] * dim), dtype=float)
        if a.shape != (dim,):
            raise ConfigError(f"linear preset needs {dim} coefficients")
        return st.linear(a, float(spec.get("c", 0.0)))
    if name == "quadratic":
        Q = np.asarray(_req(spec, "Q", "quadratic preset"), dtype=float)
        if Q.shape != (dim, dim):
            raise ConfigError(f"quadratic preset needs a {dim}x{dim} matrix")
        return st.quadratic(Q, spec.get("b"), float(spec.get("c", 0.0)))
    if name == "sine_product":
        return st.sine_product(dim, float(spec.get("freq", math.pi)), float(spec.get("amplitude", 1.0)),
                               float(spec.get("shift", 0.0)))
    if dim == 1:
        if name == "ramp":
            return st.ramp_source_1d()
        if name == "eta_d_linear":
            return st.eta_d_linear(float(_req(spec, "k", "eta_d_linear")))
        if name == "eta_d_matched":
            return st.eta_d_matched(float(_req(spec, "k", "eta_d_matched")))
    raise ConfigError(f"unknown function preset {name!r} in dimension {dim}")


def parse_velocity(spec, dim) -> geo.VelocityField:
    if isinstance(spec, str):
        spec = {"preset": spec}
    name = _req(spec, "preset", "velocity")
    if name == "zero":
        return geo.zero_field(dim)
    if name == "dilation":
        return geo.dilation_field(dim, spec.get("center"))
    if name == "affine":
        M = np.asarray(_req(spec, "M", "affine velocity"), dtype=float)
        if M.shape != (dim, dim):
            raise ConfigError(f"affine velocity needs a {dim}x{dim} matrix")
        return geo.affine_field(M, spec.get("c"))
    if name == "rotation" and dim == 2:
        return geo.rotation_field(tuple(spec.get("center", (0.0, 0.0))), float(spec.get("omega", 1.0)))
    if name == "bubble" and dim == 1:
        return geo.bubble_field_1d(float(spec.get("a", -1.0)), float(spec.get("b", 1.0)),
                                   float(spec.get("amplitude", 1.0)))
    if name == "quadratic" and dim == 2:
        return geo.quadratic_field_2d(_req(spec, "coeffs", "quadratic velocity"))
    raise ConfigError(f"unknown velocity preset {name!r} in dimension {dim}")


def parse_set(spec, dim) -> geo.RectifiableSet:
    kind = _req(spec, "kind", "set")
    if kind == "point":
        x0 = np.atleast_1d(np.asarray(_req(spec, "x0", "point set"), dtype=float))
        if x0.shape != (dim,):
            raise ConfigError(f"point needs {dim} coordinates")
        return geo.RectifiableSet.point(x0)
    if kind == "polyline":
        V = np.asarray(_req(spec, "vertices", "polyline set"), dtype=float)
        if V.ndim != 2 or V.shape[1] != dim:
            raise ConfigError("polyline vertices have the wrong shape")
        return geo.RectifiableSet.polyline(V)
    raise ConfigError(f"unknown set kind {kind!r}")


def parse_grid(values, name):
    if values is None:
        return None
    g = [float(v) for v in values]
    if not g or any(v <= 0 for v in g) or any(b >= a for a, b in zip(g, g[1:])):
        raise ConfigError(f"{name} must be positive and strictly decreasing")
    return g


@dataclass
class ExperimentConfig:
    domain: geo.Domain
    data: st.ProblemData
    h: float
    outdir: str
    velocity: Optional[geo.VelocityField] = None
    s_grid: Optional[list] = None
    E: Optional[geo.RectifiableSet] = None
    r_grid: Optional[list] = None
    bc: str = "dirichlet"
    levels: Optional[list] = None
    tracking: str = "matched"
    raw: dict = field(default_factory=dict)


def load_config(path, h=None, outdir=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return build_config(raw, h, outdir)


def build_config(raw, h=None, outdir=None) -> ExperimentConfig:
    prob = _req(raw, "problem", "config")
    domain = parse_domain(_req(prob, "domain", "problem"))
    dim = domain.dim
    k = float(_req(prob, "k", "problem"))
    tracking = prob.get("tracking", "matched")
    if prob.get("preset") == "example_1d":
        if dim != 1:
            raise ConfigError("example_1d needs an interval domain")
        if tracking not in ("matched", "linear"):
            raise ConfigError(f"unknown tracking {tracking!r}")
        data = st.example_1d(k, float(prob.get("A", 0.0)), tracking, float(prob.get("gamma", 1.0)))
    else:
        data = st.ProblemData(k, parse_function(prob.get("f", "zero"), dim),
                              parse_function(prob.get("target", "zero"), dim),
                              parse_function(prob.get("eta_d", "zero"), dim),
                              float(prob.get("gamma", 1.0)))
    pert = raw.get("perturbation", {})
    disc = raw.get("discretization", {})
    out = raw.get("output", {})
    h = float(h if h is not None else disc.get("h", 0.1))
    if not h > 0:
        raise ConfigError("h must be positive")
    bc = pert.get("bc", "dirichlet")
    if bc not in ("dirichlet", "neumann"):
        raise ConfigError(f"unknown hole condition {bc!r}")
    return ExperimentConfig(
        domain=domain, data=data, h=h,
        outdir=outdir if outdir is not None else out.get("outdir", "out"),
        velocity=parse_velocity(pert["velocity"], dim) if "velocity" in pert else None,
        s_grid=parse_grid(pert.get("s_grid"), "s_grid"),
        E=parse_set(pert["set"], dim) if "set" in pert else None,
        r_grid=parse_grid(pert.get("r_grid"), "r_grid"),
        bc=bc,
        levels=parse_grid(disc.get("levels"), "levels"),
        tracking=tracking,
        raw=raw,
    )
