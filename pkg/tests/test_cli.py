import subprocess
import sys

import pytest

from tpfa.cli import StudyConfig, main, thread_cap
from tpfa.mesh import generate_acute_triangular_grid, generate_square_grid, write_mesh


@pytest.fixture
def tile_file(tmp_path, tri2):
    p = tmp_path / "tile.msh"
    p.write_text(write_mesh(tri2))
    return p


def test_mesh_info_counts(tile_file, capsys):
    assert main(["mesh-info", str(tile_file)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "56 cells, 37 vertices, 92 edges"
    assert out[1] == "h = 0.25"
    assert out[-1] == "admissible: yes"


def test_mesh_info_theta_of_square_grid(tmp_path, capsys):
    p = tmp_path / "g2.msh"
    p.write_text(write_mesh(generate_square_grid(2)))
    assert main(["mesh-info", str(p)]) == 0
    theta = float(capsys.readouterr().out.splitlines()[2].split("=")[1])
    assert theta == pytest.approx(0.35355339059327373, rel=1e-14)


def test_mesh_info_reads_fvca_files(tmp_path, tri2, capsys):
    lines = ["vertices", str(tri2.n_vertices)] + [f"{x!r} {y!r}" for x, y in tri2.vertices.tolist()]
    lines += ["triangles", str(tri2.n_cells)] + [" ".join(str(i + 1) for i in c) for c in tri2.cells]
    p = tmp_path / "mesh1_1.typ1"
    p.write_text("\n".join(lines) + "\n")
    assert main(["mesh-info", str(p)]) == 0
    assert capsys.readouterr().out.startswith("56 cells, 37 vertices, 92 edges")


def test_mesh_info_malformed_file(tmp_path, capsys):
    p = tmp_path / "bad.msh"
    p.write_text("2 4 1\nnot a mesh\n")
    assert main(["mesh-info", str(p)]) == 2
    assert "ParseError" in capsys.readouterr().err


def write_config(tmp_path, text):
    p = tmp_path / "study.ini"
    p.write_text(text)
    return p


def test_config_defaults_and_validation(tmp_path):
    cfg = StudyConfig.parse("[study]\nproblem = manufactured-h2\nfamily = square\nlevels = 4, 8\n", base=tmp_path)
    assert cfg.seed == 42 and cfg.min_order == 0.95 and cfg.levels == [4, 8]
    assert cfg.output == str(tmp_path / "out")
    for bad in ("[study]\nproblem = other\n", "[study]\nfamily = hex\n", "[study]\nlevels = 4\n"):
        with pytest.raises(ValueError):
            StudyConfig.parse(bad)


def test_bad_config_exit_code(tmp_path):
    assert main(["study", str(write_config(tmp_path, "[study]\nlevels = 4\n"))]) == 2
    assert main(["study", str(write_config(tmp_path, "[study\nbroken"))]) == 2


def test_singular_study(tmp_path):
    cfg = write_config(tmp_path, "[study]\nproblem = singular\nfamily = acute\nlevels = 2, 4, 8\noutput = run\n")
    code = main(["study", str(cfg)])
    out = tmp_path / "run"
    summary = (out / "summary.txt").read_text()
    assert "delta_decreasing = pass" in summary
    assert "sandwich_ok = pass" in summary
    assert "zeta_zero = pass" in summary
    assert code == (0 if "status = pass" in summary else 1)
    rows = (out / "benchmark.csv").read_text().splitlines()
    assert rows[0] == "h,e1,e2,e3,e4,e5" and len(rows) == 4
    e4 = [float(r.split(",")[4]) for r in rows[1:]]
    e5 = [float(r.split(",")[5]) for r in rows[1:]]
    assert all(a <= 3 * b for a, b in zip(e4, e5))
    assert len((out / "plot.dat").read_text().splitlines()) == 3


def test_h2_study(tmp_path):
    cfg = write_config(tmp_path, "[study]\nproblem = manufactured-h2\nfamily = square\nlevels = 8, 16, 32\n")
    assert main(["study", str(cfg)]) == 0
    summary = (tmp_path / "out" / "summary.txt").read_text()
    assert "status = pass" in summary
    assert float(summary.split("order_l2_1 = ")[1].split()[0]) >= 0.95


def test_transient_study(tmp_path):
    cfg = write_config(tmp_path, "[study]\nfamily = square\nlevels = 4, 8, 16\n"
                                 "[transient]\nT = 1.0\nN = 4, 8, 16\ncoupling = zero\n")
    assert main(["transient", str(cfg)]) == 0
    out = tmp_path / "out"
    assert (out / "transient.csv").read_text().startswith("h,k,delta,")
    assert (out / "norms_N16.csv").read_text().count("\n") == 18


def test_transient_level_mismatch(tmp_path):
    cfg = write_config(tmp_path, "[study]\nfamily = square\nlevels = 4, 8\n[transient]\nN = 4, 8, 16\n")
    assert main(["transient", str(cfg)]) == 2


def test_bench_singular_from_directory(tmp_path, capsys):
    d = tmp_path / "meshes"
    d.mkdir()
    for i, n in enumerate((2, 4)):
        (d / f"m{i}.msh").write_text(write_mesh(generate_acute_triangular_grid(n)))
    assert main(["bench-singular", "--meshes", str(d)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "h,e1,e2,e3,e4,e5"
    assert [float(ln.split(",")[0]) for ln in lines[1:]] == pytest.approx([0.25, 0.125], rel=1e-14)


def test_study_is_byte_identical(tmp_path):
    text = "[study]\nproblem = singular\nlevels = 2, 4\noutput = {}\n"
    outputs = []
    for name in ("a", "b"):
        main(["study", str(write_config(tmp_path, text.format(name)))])
        outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
    assert outputs[0] == outputs[1]


def test_thread_cap(monkeypatch):
    monkeypatch.delenv("TPFA_THREADS", raising=False)
    assert thread_cap() is None
    monkeypatch.setenv("TPFA_THREADS", "3")
    assert thread_cap() == 3
    monkeypatch.setenv("TPFA_THREADS", "0")
    with pytest.raises(ValueError):
        thread_cap()


def test_module_entry_point(tile_file):
    res = subprocess.run([sys.executable, "-m", "tpfa", "mesh-info", str(tile_file)], capture_output=True, text=True,
                         env={"TPFA_THREADS": "1", "PATH": ""})
    assert res.returncode == 0
    assert res.stdout.startswith("56 cells")
