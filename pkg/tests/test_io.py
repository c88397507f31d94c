import numpy as np
import pytest

from helfrich_fem import DeformationState, generate_icosphere
from helfrich_fem.exceptions import ConfigurationError
from helfrich_fem.io import (
    CsvLogWriter,
    curvature_fields,
    fmt,
    format_config,
    parse_config,
    parse_config_text,
    read_csv_log,
    read_obj,
    write_config_echo,
    write_csv_log,
    write_obj,
    write_vtk,
)
from helfrich_fem.mesh import generate_benchmark_shape


def test_empty_config_defaults():
    run = parse_config_text("")
    c = run.optimizer
    assert (c.kb, c.H0, c.alpha, c.alpha_max, c.alpha_factor) == (0.01, 0.0, 0.025, 0.1, 1.0)
    # multipliers of the normalized residuals: c_V = 1/V0, c_A = 2/A0, c_Aloc = 1/|T0|
    assert (c.cV, c.cA, c.cAloc, c.normalization) == (1.0, 2.0, 1.0, "supplementary")
    assert (c.tol_step, c.tol_grad, c.tol_cost, c.M) == (1e-11, 1e-12, 1e-10, 0)
    assert c.gradient_mode == "h1"


def test_window_key():
    assert parse_config_text("M = 5").optimizer.M == 5


def test_sections_and_comments():
    text = """
    # run file
    [physics]
    kb = 0.02   # bending modulus
    [algorithm]
    alpha = 0.05
    gradient_mode = stokes
    order = 2
    [geometry]
    shape = oblate
    subdivisions = 3
    """
    run = parse_config_text(text)
    assert run.optimizer.kb == 0.02 and run.optimizer.alpha == 0.05
    assert run.optimizer.gradient_mode == "stokes"
    assert run.geometry.shape == "oblate" and run.geometry.subdivisions == 3


@pytest.mark.parametrize(
    "text,line",
    [
        ("alpha = -1", 1),
        ("kb = 0.1\nfoo = 3", 2),
        ("kb = 0.1\n\nalpha = abc", 3),
        ("[physics]\nalpha = 0.01", 2),
        ("[nope]", 1),
        ("kb 0.1", 1),
        ("Nmax = 2.5", 1),
        ("order = 1\ngradient_mode = stokes", 2),
        ("gradient_mode = stokes\norder = 1", 1),  # order 1 is the default anyway
        ("alpha_max = 0.01\nkb = 1", 1),
        ("shape = torus", 1),
    ],
)
def test_config_errors_name_line(text, line):
    with pytest.raises(ConfigurationError) as info:
        parse_config_text(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}: ")


def test_overrides_win_over_file():
    run = parse_config_text("alpha = 0.05\nkb = 2", {"alpha": 0.01, "kb": None})
    assert run.optimizer.alpha == 0.01 and run.optimizer.kb == 2.0
    with pytest.raises(ConfigurationError):
        parse_config_text("", {"bogus": 1})


def test_config_echo_roundtrip(tmp_path):
    run = parse_config_text("kb = 0.0123456789\nreduced_volume = 0.713\nM = 5\nshape = biconcave")
    path = tmp_path / "echo.cfg"
    write_config_echo(path, run)
    again = parse_config(path)
    assert again == run
    assert format_config(again) == path.read_text()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / "absent.cfg")


def test_fmt_is_exact():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(3) == "3" and fmt(np.int64(7)) == "7"


def test_obj_roundtrip(tmp_path):
    mesh = generate_icosphere(0)
    write_obj(tmp_path / "ico.obj", mesh)
    back = read_obj(tmp_path / "ico.obj")
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)


def test_obj_roundtrip_curved(tmp_path, curved_ico2):
    write_obj(tmp_path / "c.obj", curved_ico2)
    back = read_obj(tmp_path / "c.obj")
    assert back.geometry_order == 2
    np.testing.assert_array_equal(back.edge_midpoint_nodes, curved_ico2.edge_midpoint_nodes)


def test_obj_reader_accepts_slashes_and_rejects_quads(tmp_path):
    p = tmp_path / "t.obj"
    tet = ["v 0 0 0", "v 1 0 0", "v 0 1 0", "v 0 0 1"]
    p.write_text("\n".join(tet + ["f 1/1/1 3/2/2 2/3/3", "f 1 2 4", "f 1 4 3", "f 2 3 4"]) + "\n")
    assert read_obj(p).n_edges == 6
    p.write_text("\n".join(tet + ["f 1 2 3 4"]) + "\n")
    with pytest.raises(ValueError):
        read_obj(p)


def test_obj_missing_file_names_path(tmp_path):
    with pytest.raises(OSError, match="absent.obj"):
        read_obj(tmp_path / "absent.obj")


def parse_vtk(path):
    lines = path.read_text().splitlines()
    out = {"arrays": {}}
    for i, line in enumerate(lines):
        head = line.split()
        if not head:
            continue
        if head[0] in ("POINTS", "CELLS", "CELL_TYPES", "POINT_DATA"):
            out[head[0]] = int(head[1])
        if head[0] in ("SCALARS", "VECTORS"):
            n = out["POINT_DATA"]
            start = i + (2 if head[0] == "SCALARS" else 1)
            out["arrays"][head[1]] = np.array([[float(v) for v in l.split()] for l in lines[start : start + n]])
    return out, lines


def test_vtk_icosphere1_counts(tmp_path):
    mesh = generate_icosphere(1)
    write_vtk(tmp_path / "m.vtk", mesh)
    info, lines = parse_vtk(tmp_path / "m.vtk")
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert info["POINTS"] == 42 and info["CELLS"] == 80 and info["CELL_TYPES"] == 80


def test_vtk_fields_and_displacement(tmp_path, curved_ico2):
    state = DeformationState(curved_ico2, 2)
    disp = np.zeros_like(state.displacement)
    disp[:, 2] = 0.5
    state = state.with_displacement(disp)
    k = -2.0 * np.ones(state.space.scalar.dim)
    write_vtk(tmp_path / "s.vtk", curved_ico2, state, curvature_fields(k, 0.5 * k))
    info, lines = parse_vtk(tmp_path / "s.vtk")
    n = curved_ico2.n_vertices
    assert info["POINTS"] == info["POINT_DATA"] == n
    assert set(info["arrays"]) == {"kappa", "mean_curvature", "sigma", "displacement"}
    for arr in info["arrays"].values():
        assert len(arr) == n
    np.testing.assert_allclose(info["arrays"]["mean_curvature"], 1.0)
    pts = np.array([[float(v) for v in l.split()] for l in lines[5 : 5 + n]])
    np.testing.assert_allclose(pts, curved_ico2.vertices + [0, 0, 0.5])


def test_vtk_bit_stable(tmp_path, ico2):
    write_vtk(tmp_path / "a.vtk", ico2, None, {"kappa": np.linspace(0, 1, ico2.n_vertices)})
    write_vtk(tmp_path / "b.vtk", ico2, None, {"kappa": np.linspace(0, 1, ico2.n_vertices)})
    assert (tmp_path / "a.vtk").read_bytes() == (tmp_path / "b.vtk").read_bytes()


def test_csv_log_header_and_roundtrip(tmp_path):
    rows = [dict(iter=i, J=1.0 / (i + 1), W=0.5, Estar=1.1, A=12.0, V=3.0, v=0.9, gradnorm=np.nan,
                 alpha=0.025, rejects=0) for i in range(3)]
    write_csv_log(tmp_path / "log.csv", rows)
    text = (tmp_path / "log.csv").read_text().splitlines()
    assert text[0] == "iter,J,W,Estar,A,V,v,gradnorm,alpha,rejects"
    back = read_csv_log(tmp_path / "log.csv")
    assert back[1]["J"] == 0.5 and back[2]["iter"] == 2 and np.isnan(back[0]["gradnorm"])


def test_csv_writer_incremental(tmp_path):
    with CsvLogWriter(tmp_path / "l.csv") as w:
        w.write(dict(iter=0, J=1, W=1, Estar=1, A=1, V=1, v=1, gradnorm=1, alpha=1, rejects=0))
        assert len((tmp_path / "l.csv").read_text().splitlines()) == 2
