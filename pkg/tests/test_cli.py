import csv
import json

import pytest

from helmsense import cli

EXAMPLE_1D = {"preset": "example_1d", "domain": {"kind": "interval", "a": -1, "b": 1}, "k": 2.0}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def summary(outdir):
    out = {}
    for line in (outdir / "summary.txt").read_text().splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_shape_with_zero_velocity(tmp_path):
    cfg = {"problem": dict(EXAMPLE_1D, A=0.5),
           "perturbation": {"velocity": "zero", "s_grid": [0.1, 0.01, 0.001]},
           "discretization": {"h": 0.0625}}
    out = tmp_path / "o"
    assert cli.main(["shape", "--config", write(tmp_path, cfg), "--outdir", str(out)]) == 0
    assert float(summary(out)["dJ"]) == 0.0
    table = rows(out / "shape.csv")
    assert table[0] == ["s", "fd_quotient", "remainder", "state_h1_distance"]
    assert len(table) == 4


def test_oracle1d_table(tmp_path):
    cfg = {"problem": EXAMPLE_1D, "perturbation": {"r_grid": [0.2, 0.1, 0.05, 0.025]}}
    out = tmp_path / "o"
    assert cli.main(["oracle1d", "--config", write(tmp_path, cfg), "--outdir", str(out)]) == 0
    table = rows(out / "oracle1d.csv")
    assert table[0][:4] == ["r", "l0", "l1", "R"]
    assert len(table) == 5
    assert all(float(row[5]) == 0.0 for row in table[1:])  # printed l1 chain
    s = summary(out)
    assert s["agrees_with_printed_claim"] in ("True", "False")
    assert s["trend"] in ("converged", "divergent", "inconclusive")


def test_topo_source_with_gamma_one(tmp_path):
    cfg = {"problem": EXAMPLE_1D,
           "perturbation": {"set": {"kind": "point", "x0": [0.5]}, "r_grid": [0.04, 0.02]},
           "discretization": {"h": 2.0 ** -6}}
    out = tmp_path / "o"
    assert cli.main(["topo-source", "--config", write(tmp_path, cfg), "--outdir", str(out)]) == 0
    assert float(summary(out)["D_T_J"]) == 0.0
    assert len(rows(out / "topo-source.csv")) == 3


def test_every_subcommand_runs(tmp_path):
    cfg = {"problem": dict(EXAMPLE_1D, A=0.2),
           "perturbation": {"velocity": "dilation", "s_grid": [0.1, 0.01],
                            "set": {"kind": "point", "x0": [0.0]}, "r_grid": [0.2, 0.1]},
           "discretization": {"h": 2.0 ** -5, "levels": [0.25, 0.125, 0.0625, 0.03125]}}
    path = write(tmp_path, cfg)
    for sub in cli.SUBCOMMANDS:
        out = tmp_path / sub
        assert cli.main([sub, "--config", path, "--outdir", str(out)]) == 0, sub
        assert (out / f"{sub}.csv").exists()
        assert summary(out)["seed"] == "0"


def test_output_is_deterministic(tmp_path):
    cfg = {"problem": dict(EXAMPLE_1D, A=0.5, gamma=0.5),
           "perturbation": {"set": {"kind": "point", "x0": [0.5]}, "r_grid": [0.04, 0.02]},
           "discretization": {"h": 2.0 ** -6}}
    path = write(tmp_path, cfg)
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["topo-source", "--config", path, "--outdir", str(a)])
    cli.main(["topo-source", "--config", path, "--outdir", str(b), "--h", str(2.0 ** -6)])
    assert (a / "topo-source.csv").read_bytes() == (b / "topo-source.csv").read_bytes()


def test_h_override_is_recorded(tmp_path):
    cfg = {"problem": EXAMPLE_1D, "discretization": {"h": 0.1}}
    out = tmp_path / "o"
    assert cli.main(["direct", "--config", write(tmp_path, cfg), "--outdir", str(out), "--h", "0.25"]) == 0
    assert float(summary(out)["h"]) == 0.25
    assert len(rows(out / "direct.csv")) == 1 + 9


@pytest.mark.parametrize("cfg", [
    {"problem": {"domain": {"kind": "blob"}, "k": 1}},
    {"problem": dict(EXAMPLE_1D), "perturbation": {"s_grid": [0.01, 0.1]}},
    {"problem": dict(EXAMPLE_1D), "perturbation": {"velocity": "whirl"}},
    {"problem": {"domain": {"kind": "interval"}, "k": 1, "f": "nonsense"}},
    {"problem": dict(EXAMPLE_1D)},  # shape without a velocity
])
def test_config_errors_exit_2(tmp_path, cfg):
    assert cli.main(["shape", "--config", write(tmp_path, cfg), "--outdir", str(tmp_path / "o")]) == 2


def test_unreadable_config_exits_2(tmp_path):
    assert cli.main(["direct", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.main(["direct", "--config", str(tmp_path / "bad.json")]) == 2


def test_resonance_exits_3(tmp_path, capsys):
    cfg = {"problem": {"domain": {"kind": "interval"}, "k": 1.5707963267948966, "f": "ramp"},
           "discretization": {"h": 2.0 ** -6}}
    assert cli.main(["direct", "--config", write(tmp_path, cfg), "--outdir", str(tmp_path / "o")]) == 3
    assert "solve" in capsys.readouterr().err
