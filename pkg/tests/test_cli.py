import csv
import json

import numpy as np
import pytest

from homd import mean_edge_length
from homd import primitives as prim
from homd.cli import main
from homd.errors import NonFinite
from homd.meshio import load_mesh, save_mesh


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    save_mesh(d / "tri.obj", prim.single_triangle())
    save_mesh(d / "cube.obj", prim.subdivided_cube(16))
    # the sweep below needs a cube whose scale puts alpha in {200..3000} around the optimum
    save_mesh(d / "small_cube.off", prim.subdivided_cube(16, size=0.15))
    return d


def _metrics(capsys, result, clean):
    code, out, _ = run(capsys, "metrics", result, clean, "--json")
    assert code == 0
    return json.loads(out)


# info ------------------------------------------------------------------------------

def test_info_single_triangle(capsys, files):
    code, out, _ = run(capsys, "info", files / "tri.obj", "--json")
    report = json.loads(out)
    assert code == 0
    assert (report["vertices"], report["faces"], report["d_global"]) == (3, 1, 1.0)
    assert set(report) == {"path", "vertices", "faces", "edges", "d_global", "d_local", "mean_edge_length"}
    code, out, _ = run(capsys, "info", files / "tri.obj")
    assert "D_global" in out.splitlines()[0]


def test_info_missing_file(capsys, tmp_path):
    code, out, err = run(capsys, "info", tmp_path / "nope.obj")
    assert code == 2 and "nope.obj" in err and out == ""


def test_info_parse_error(capsys, tmp_path):
    (tmp_path / "bad.obj").write_bytes(b"v 0 0 0\nf 1 2 3\n")
    code, _, err = run(capsys, "info", tmp_path / "bad.obj")
    assert code == 2 and "line 2" in err


# add-noise ---------------------------------------------------------------------------

def test_add_noise_zero_level(capsys, files, tmp_path):
    code, _, _ = run(capsys, "add-noise", files / "cube.obj", tmp_path / "z.obj", "--level", 0)
    assert code == 0
    a, b = load_mesh(files / "cube.obj"), load_mesh(tmp_path / "z.obj")
    np.testing.assert_array_equal(a.vertices, b.vertices)


def test_add_noise_deterministic_and_reports_sigma(capsys, files, tmp_path):
    args = ["--level", "0.15", "--seed", "7", "--json"]
    _, out1, _ = run(capsys, "add-noise", files / "cube.obj", tmp_path / "a.obj", *args)
    _, out2, _ = run(capsys, "add-noise", files / "cube.obj", tmp_path / "b.obj", *args)
    assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()
    sigma = json.loads(out1)["sigma"]
    assert sigma == pytest.approx(0.15 * mean_edge_length(load_mesh(files / "cube.obj")), rel=1e-12)
    assert json.loads(out2)["sigma"] == sigma


# denoise -------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def noisy(files):
    path = files / "noisy.obj"
    main(["add-noise", str(files / "cube.obj"), str(path), "--level", "0.15", "--seed", "1"])
    return path


def test_denoise_end_to_end(capsys, files, noisy, tmp_path):
    out = tmp_path / "out.obj"
    trace, vtrace = tmp_path / "t.csv", tmp_path / "v.csv"
    code, stdout, _ = run(capsys, "denoise", noisy, out, "--alpha", 100, "--rp", 3,
                          "--trace", trace, "--vertex-trace", vtrace, "--json")
    assert code == 0
    report = json.loads(stdout)
    assert report["foldovers"] == 0 and report["filter_converged"]
    before = _metrics(capsys, noisy, files / "cube.obj")["msae"]
    after = _metrics(capsys, out, files / "cube.obj")["msae"]
    assert after * 5 <= before

    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["iter", "energy", "delta_n"]
    assert len(rows) - 1 == report["filter_iterations"]
    rows = list(csv.reader(vtrace.open()))
    assert rows[0] == ["iter", "energy"]
    energies = [float(r[1]) for r in rows[1:]]
    assert all(b < a for a, b in zip(energies, energies[1:]))


def test_denoise_alpha_sweep_has_interior_optimum(capsys, files, tmp_path):
    clean = files / "small_cube.off"
    noisy = tmp_path / "noisy.off"
    run(capsys, "add-noise", clean, noisy, "--level", "0.15", "--seed", "1")
    errors = []
    for alpha in (3000, 1500, 600, 200):
        out = tmp_path / f"a{alpha}.off"
        code, _, _ = run(capsys, "denoise", noisy, out, "--alpha", alpha, "--rp", 3)
        assert code == 0
        errors.append(_metrics(capsys, out, clean)["msae"])
    best = int(np.argmin(errors))
    assert 0 < best < len(errors) - 1, errors


def test_denoise_weights_help(capsys, files, noisy, tmp_path):
    res = {}
    for flag in ("on", "off"):
        out = tmp_path / f"w{flag}.obj"
        code, _, _ = run(capsys, "denoise", noisy, out, "--alpha", 100, "--rp", 3, "--weights", flag)
        assert code == 0
        res[flag] = _metrics(capsys, out, files / "cube.obj")["msae"]
    assert res["on"] <= res["off"]


def test_denoise_laplacian_and_sun(capsys, noisy, tmp_path):
    code, out, _ = run(capsys, "denoise", noisy, tmp_path / "l.obj", "--alpha", 300, "--rp", 3,
                       "--regularizer", "lap", "--vertex-method", "sun", "--json")
    assert code == 0 and json.loads(out)["vertex_method"] == "sun"


@pytest.mark.parametrize(
    "extra",
    [
        [],                                   # alpha and rp are required
        ["--alpha", "1"],
        ["--alpha", "-1", "--rp", "1"],
        ["--alpha", "1", "--rp", "0"],
        ["--alpha", "1", "--rp", "1", "--weights", "maybe"],
        ["--alpha", "1", "--rp", "1", "--max-iter", "0"],
        ["--alpha", "x", "--rp", "1"],
    ],
)
def test_denoise_usage_errors(capsys, noisy, tmp_path, extra):
    code, _, err = run(capsys, "denoise", noisy, tmp_path / "o.obj", *extra)
    assert code == 4 and "error" in err


def test_numeric_failure_exit_code(capsys, noisy, tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise NonFinite("filter diverged at iteration 3")

    monkeypatch.setattr("homd.cli.filter_normals", boom)
    code, _, err = run(capsys, "denoise", noisy, tmp_path / "o.obj", "--alpha", 1, "--rp", 1)
    assert code == 3 and "diverged" in err


def test_usage_errors_without_command(capsys):
    code, _, _ = run(capsys)
    assert code == 4
    code, _, _ = run(capsys, "frobnicate")
    assert code == 4


# metrics ----------------------------------------------------------------------------------

def test_metrics_identical(capsys, files):
    m = _metrics(capsys, files / "cube.obj", files / "cube.obj")
    assert m["msae"] == 0.0 and m["e_v2"] == 0.0
    assert set(m) == {"method", "msae", "e_v2", "seconds"}


def test_metrics_table_layout(capsys, files, noisy):
    code, out, _ = run(capsys, "metrics", noisy, files / "cube.obj", "--method", "noisy",
                       "--seconds", "1.5")
    header, row = out.splitlines()
    assert header.split() == ["method", "MSAE", "(1e-3)", "E_v,2", "(1e-3)", "seconds"]
    name, m, e, s = row.split()
    assert name == "noisy" and float(m) > 0 and float(e) > 0 and s == "1.50"


def test_metrics_face_count_mismatch(capsys, files):
    code, _, err = run(capsys, "metrics", files / "tri.obj", files / "cube.obj")
    assert code == 4 and "differ" in err


# threads ------------------------------------------------------------------------------------

def test_threads_flag_and_env(capsys, files, monkeypatch):
    assert run(capsys, "--threads", 1, "info", files / "tri.obj")[0] == 0
    assert run(capsys, "--threads", 0, "info", files / "tri.obj")[0] == 4
    monkeypatch.setenv("HOMD_THREADS", "2")
    assert run(capsys, "info", files / "tri.obj")[0] == 0
    monkeypatch.setenv("HOMD_THREADS", "many")
    assert run(capsys, "info", files / "tri.obj")[0] == 4
