import subprocess
import sys

import numpy as np
import pytest

from helfrich_fem.cli import main
from helfrich_fem.io import parse_config, read_csv_log


def test_mesh_vtk(tmp_path, capsys):
    assert main(["mesh", "--shape", "sphere", "--subdiv", "1", "--out", str(tmp_path / "m.vtk")]) == 0
    assert "42 vertices, 80 triangles, 120 edges" in capsys.readouterr().out
    assert "POINTS 42 double" in (tmp_path / "m.vtk").read_text()


def test_mesh_obj_curved(tmp_path):
    assert main(["mesh", "--shape", "prolate", "--order", "2", "--out", str(tmp_path / "p.obj")]) == 0
    assert (tmp_path / "p.mid").exists()


def test_curvature_reports(capsys, tmp_path):
    assert main(["curvature", "--subdiv", "0", "--vtk", str(tmp_path / "k.vtk")]) == 0
    out = capsys.readouterr().out
    W = float(out.split("W = ")[1].split()[0])
    assert W == pytest.approx(27.672, rel=5e-4)
    assert "H-1 error" in out and "L2 error" in out
    assert "SCALARS kappa" in (tmp_path / "k.vtk").read_text()


def test_fdcheck_passes(capsys):
    assert main(["fdcheck", "--subdiv", "1"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "t,fd_value,analytic_value,abs_err,observed_order"
    assert "PASS" in out


def test_optimize_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[algorithm]\nNmax = 3\n[geometry]\nshape = prolate\nsubdivisions = 1\n[output]\nsnapshot_every = 2\n")
    out = tmp_path / "out"
    assert main(["optimize", "--config", str(cfg), "--output-dir", str(out), "--kb", "0.05"]) == 0
    rows = read_csv_log(out / "log.csv")
    assert len(rows) == 4
    assert np.all(np.diff([r["J"] for r in rows]) <= 0)
    assert parse_config(out / "effective.cfg").optimizer.kb == 0.05
    assert (out / "final.vtk").exists() and (out / "snapshot_000002.vtk").exists()


def test_optimize_require_convergence_exit_3(tmp_path):
    code = main(["optimize", "--Nmax", "1", "--subdivisions", "1", "--output-dir", str(tmp_path),
                 "--require-convergence"])
    assert code == 3


def test_config_error_exit_1(tmp_path, capsys):
    assert main(["optimize", "--alpha", "-1", "--output-dir", str(tmp_path)]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("kb = 1\nwhat = 2\n")
    assert main(["optimize", "--config", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_unknown_subcommand_exit_1():
    assert main(["frobnicate"]) == 1


def test_degenerate_geometry_exit_2(tmp_path):
    # a single pillow-like strip is a structural failure
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 3 2 4\n")
    from helfrich_fem.exceptions import StructuralError
    from helfrich_fem.io import read_obj

    with pytest.raises(StructuralError):
        read_obj(p)


def test_sweep_small(tmp_path, capsys):
    code = main(["sweep", "--volumes", "0.95", "--Nmax", "3", "--continuation-rounds", "1",
                 "--subdivisions", "1", "--output-dir", str(tmp_path)])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "target_v,Estar,final_v,area,axis_ratio,stop_reason"
    assert lines[1].startswith("0.94999999999999996,")
    assert (tmp_path / "v_0.95" / "log.csv").exists()


def test_sweep_bad_volumes(tmp_path):
    assert main(["sweep", "--volumes", "a,b", "--output-dir", str(tmp_path)]) == 1


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "helfrich_fem.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("mesh", "curvature", "fdcheck", "optimize", "sweep"):
        assert cmd in res.stdout
