"""helmsense <subcommand> --config <path> [--h H] [--outdir DIR]

Writes <outdir>/<subcommand>.csv and <outdir>/summary.txt.  Exit codes:
0 success, 2 configuration error, 3 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys

from . import fem, oracle1d, shape, states, topo
from .config import SUBCOMMANDS, ExperimentConfig, load_config
from .errors import ConfigError, DomainError, HelmsenseError, MeshError, NumericalError
from .mesh import generate_mesh, HoleTooCloseError
from .util import try_fit_slope

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
SEED = 0


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_summary(path, items):
    with open(path, "w") as fh:
        for key, value in items:
            fh.write(f"{key} = {_fmt(value) if not isinstance(value, str) else value}\n")


def _need(cfg, attr, sub):
    if getattr(cfg, attr) is None:
        raise ConfigError(f"'{sub}' needs perturbation/discretization field '{attr}'")
    return getattr(cfg, attr)


def _field_rows(f):
    return [[i, *f.mesh.nodes[i], v] for i, v in enumerate(f.values)]


def _field_header(f):
    return ["node_index"] + ["x", "y"][: f.mesh.dim] + ["value"]


def run_direct(cfg: ExperimentConfig):
    mesh = generate_mesh(cfg.domain, cfg.h)
    eta0 = states.solve_direct(mesh, cfg.data)
    l2, h1 = fem.norms(eta0)
    return _field_header(eta0), _field_rows(eta0), [
        ("J", shape.eval_J(mesh, eta0, cfg.data)), ("l2_norm", l2), ("h1_seminorm", h1),
        ("n_nodes", str(mesh.n_nodes))]


def run_adjoint(cfg):
    mesh = generate_mesh(cfg.domain, cfg.h)
    eta0 = states.solve_direct(mesh, cfg.data)
    p0 = states.solve_adjoint(mesh, cfg.data, eta0)
    l2, h1 = fem.norms(p0)
    return _field_header(p0), _field_rows(p0), [("l2_norm", l2), ("h1_seminorm", h1),
                                                 ("n_nodes", str(mesh.n_nodes))]


def run_shape(cfg):
    V = _need(cfg, "velocity", "shape")
    s_grid = cfg.s_grid or []
    mesh = generate_mesh(cfg.domain, cfg.h)
    rep = shape.shape_derivative(mesh, cfg.data, V, s_grid, cfg.domain)
    rows = [[s, fd, R, c] for (s, fd), (_, R), (_, c) in zip(rep.finite_difference, rep.remainder, rep.continuity)]
    summary = [("dJ", rep.dJ)] + [(f"term_{k}", v) for k, v in rep.breakdown.items()]
    summary += [(f"slope_{k}", v) for k, v in rep.slopes.items()]
    summary += [("coercivity_margin", rep.coercivity_margin), ("poincare_constant", rep.poincare_constant),
                ("beta", rep.beta)]
    return ["s", "fd_quotient", "remainder", "state_h1_distance"], rows, summary


def run_topo_source(cfg):
    E = _need(cfg, "E", "topo-source")
    r_grid = _need(cfg, "r_grid", "topo-source")
    mesh = generate_mesh(cfg.domain, cfg.h)
    rep = topo.topo_source(mesh, cfg.data, E, r_grid)
    rows = [[r, s, R, q] for r, (s, R), (_, q) in zip(sorted(r_grid, reverse=True), rep.remainder,
                                                      rep.finite_difference)]
    probe = topo.corrector_bound_probe(mesh, cfg.data, topo.SourceFamily(E, tuple(r_grid)))
    summary = [("D_T_J", rep.closed_form)] + [(f"slope_{k}", v) for k, v in rep.slopes.items()]
    summary += [("corrector_ratio", probe.ratio), ("corrector_verdict", probe.verdict)]
    return ["r", "s", "remainder", "fd_quotient"], rows, summary


def run_topo_hole(cfg):
    E = _need(cfg, "E", "topo-hole")
    r_grid = _need(cfg, "r_grid", "topo-hole")
    rep = topo.topo_hole(cfg.domain, cfg.data, E, cfg.bc, r_grid, cfg.h)
    rows = [[r, s, l0, l1, l0 + l1, q] for (r, l0, l1), (s, q) in zip(rep.l_series, rep.finite_difference)]
    summary = [("variant", rep.variant), ("closed_form", rep.closed_form), ("limit", rep.limit),
               ("limit_status", rep.limit_status), ("dJ", rep.dJ), ("diverged", str(rep.diverged))]
    summary += [(f"slope_{k}", v) for k, v in rep.slopes.items()]
    return ["r", "s", "l0", "l1", "l0_plus_l1", "fd_quotient"], rows, summary


def _oracle_cfg(cfg):
    if cfg.domain.kind != "interval" or tuple(cfg.domain.params) != (-1.0, 1.0):
        raise ConfigError("the 1D oracle is defined on (-1, 1)")
    return oracle1d.Oracle1DConfig(cfg.data.k, 0.5, cfg.tracking)


def run_oracle1d(cfg):
    r_grid = _need(cfg, "r_grid", "oracle1d")
    ocfg = _oracle_cfg(cfg)
    rep = oracle1d.remainder_series_exact(ocfg, r_grid)
    rows = [[row.r, row.l0, row.l1, row.R, row.l0_printed, row.l1_printed] for row in rep.rows]
    summary = [("trend", rep.trend), ("limit", rep.limit),
               ("printed_claim", "R(r) diverges as r -> 0"),
               ("agrees_with_printed_claim", str(rep.agrees_with_divergence_claim)),
               ("printed_norm_display_disagrees", str(rep.display_disagreement)),
               ("printed_l1_disagrees", str(rep.l1_disagreement))]
    return ["r", "l0", "l1", "R", "l0_printed", "l1_printed"], rows, summary


def run_convergence(cfg):
    levels = _need(cfg, "levels", "convergence")
    ocfg = _oracle_cfg(cfg)
    if cfg.data.f.name != "ramp":
        raise ConfigError("convergence runs the 1D example (problem preset example_1d)")
    rows = []
    for h in levels:
        mesh = generate_mesh(cfg.domain, h)
        eta0 = states.solve_direct(mesh, cfg.data)
        p0 = states.solve_adjoint(mesh, cfg.data, eta0)
        e = fem.error_norms(eta0, lambda X: oracle1d.eta0_exact(ocfg, X[:, 0]),
                            lambda X: oracle1d.eta0_prime(ocfg, X[:, 0])[:, None])
        p = fem.error_norms(p0, lambda X: oracle1d.p0_exact(ocfg, X[:, 0])[0],
                            lambda X: oracle1d.p0_exact(ocfg, X[:, 0])[1][:, None])
        rows.append([h, e[0], e[1], p[0], p[1]])
    summary = []
    for j, name in enumerate(["eta0_l2", "eta0_h1", "p0_l2", "p0_h1"], start=1):
        summary.append((f"slope_{name}", try_fit_slope([r[0] for r in rows], [r[j] for r in rows],
                                                       min_decades=1.0)))
    return ["h", "eta0_l2_error", "eta0_h1_error", "p0_l2_error", "p0_h1_error"], rows, summary


RUNNERS = {
    "direct": run_direct, "adjoint": run_adjoint, "shape": run_shape, "topo-source": run_topo_source,
    "topo-hole": run_topo_hole, "oracle1d": run_oracle1d, "convergence": run_convergence,
}


def run(subcommand, config_path, h=None, outdir=None):
    """Execute one subcommand; returns the process exit code."""
    if subcommand not in SUBCOMMANDS:
        print(f"unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(config_path, h, outdir)
        cfg.data.check(cfg.domain, seed=SEED)
        header, rows, summary = RUNNERS[subcommand](cfg)
    except (ConfigError, DomainError, HoleTooCloseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, HelmsenseError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    os.makedirs(cfg.outdir, exist_ok=True)
    _write_csv(os.path.join(cfg.outdir, f"{subcommand}.csv"), header, rows)
    _write_summary(os.path.join(cfg.outdir, "summary.txt"),
                   [("subcommand", subcommand), ("h", cfg.h), ("seed", str(SEED)), ("rows", str(len(rows)))]
                   + summary)
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="helmsense", description="Shape and topological sensitivities "
                                     "of a Helmholtz tracking functional.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--h", type=float, default=None, help="override discretization.h")
    parser.add_argument("--outdir", default=None, help="override output.outdir")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.h, args.outdir)


if __name__ == "__main__":
    sys.exit(main())
