import csv
import json
import re

import numpy as np
import pytest

from affine_zipper import cli, derham
from affine_zipper.zipper import save_zipper, zipper_to_dict

DR = ["--preset", "derham", "--omega", "0.1"]


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def read_csv(path):
    lines = path.read_text().splitlines()
    assert re.fullmatch(r"# config-hash=[0-9a-f]{64}", lines[-1])
    rows = list(csv.reader(lines[:-1]))
    return rows[0], rows[1:]


def numeric(rows, cols=None):
    return np.array([[float(r[c]) for c in (cols or range(len(r)))] for r in rows])


def test_parse_helpers():
    np.testing.assert_allclose(cli.parse_grid("-1:1:0.5"), [-1, -0.5, 0, 0.5, 1])
    np.testing.assert_allclose(cli.parse_grid("0.1,0.3"), [0.1, 0.3])
    assert len(cli.parse_grid("-4:4:0.05")) == 161
    assert list(cli.parse_depths("4,8,12")) == [4, 8, 12]
    assert cli.parse_scale("2^-16") == 2.0**-16
    with pytest.raises(cli.UsageError):
        cli.parse_grid("1:0:0.1")
    assert cli._merge_values(["pressure", "--t", "-4:4:1"]) == ["pressure", "--t=-4:4:1"]


def test_validate_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", *DR]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True
    bad = zipper_to_dict(derham.build(0.1))
    bad["vertices"][1] = [0.1, -0.2]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert cli.main(["validate", "--zipper", str(path)]) == 1
    assert cli.main(["validate", "--zipper", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "junk.json").write_text("{not json")
    assert cli.main(["validate", "--zipper", str(tmp_path / "junk.json")]) == 2
    assert cli.main(["validate"]) == 2
    assert cli.main(["validate", *DR, "--zipper", str(path)]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_validate_report_file(tmp_path):
    save_zipper(derham.build(0.2), tmp_path / "z.json")
    assert run(tmp_path, "validate", "--zipper", str(tmp_path / "z.json"), "--report") == 0
    data = json.loads((tmp_path / "validate.json").read_text())
    assert data["pass"] and "config_hash" in data


def test_pressure_example(tmp_path):
    assert run(tmp_path, "pressure", *DR, "--t", "-4:4:0.05", "--depths", "4,8,12,16,20") == 0
    header, rows = read_csv(tmp_path / "pressure.csv")
    rows = numeric(rows)
    assert header[:6] == ["t", "P_4", "P_8", "P_12", "P_16", "P_20"]
    assert len(rows) == 161
    zero = rows[np.argmin(np.abs(rows[:, 0]))]
    assert zero[0] == 0.0
    np.testing.assert_allclose(zero[1:7], -1.0, atol=1e-12)
    summary = json.loads((tmp_path / "pressure_summary.json").read_text())
    assert 0.98 <= summary["summary"]["d0"] < 1.1


def test_render_example(tmp_path):
    assert run(tmp_path, "render", *DR, "--depth", "12") == 0
    svg = (tmp_path / "curve.svg").read_text()
    assert svg.count("<polyline") == 1
    pts = re.search(r'points="([^"]*)"', svg).group(1).split()
    assert len(pts) == 4097
    _, rows = read_csv(tmp_path / "curve.csv")
    assert len(rows) == 4097
    vb = [float(v) for v in re.search(r'viewBox="([^"]*)"', svg).group(1).split()]
    # vertex bounding box [0, 1] x [-1, 0] padded by 5%
    np.testing.assert_allclose(vb, [-0.05, -0.05, 1.1, 1.1], atol=1e-9)


def test_spectrum_example(tmp_path):
    assert run(tmp_path, "spectrum", *DR, "--betas", "auto") == 0
    header, raw = read_csv(tmp_path / "spectrum.csv")
    assert header[:2] == ["beta", "D"]
    rows = numeric(raw, [0, 1])
    k = int(np.argmax(rows[:, 1]))
    from affine_zipper.pressure import pressure_curve

    alpha_hat = pressure_curve(derham.build(0.1).system).alpha_hat
    assert rows[k, 0] == pytest.approx(alpha_hat, abs=1e-9)
    assert rows[k, 1] == 1.0
    h2, counts = read_csv(tmp_path / "counting.csv")
    assert h2 == ["beta", "D_count", "bin_count"]
    assert len(counts) == len(raw)


def test_holder_command(tmp_path):
    assert run(tmp_path, "holder", "--preset", "line", "--points", "1/3,2/7", "--scales", "8") == 0
    header, rows = read_csv(tmp_path / "holder.csv")
    assert header == ["x", "symbolic_final", "direct_min", "direct_regression"]
    rows = numeric(rows)
    np.testing.assert_allclose(rows[:, 1:], 1.0, atol=1e-6)
    assert run(tmp_path, "holder", "--preset", "line", "--points", "1/0") == 2


def test_cones_command(tmp_path):
    assert run(tmp_path, "cones", "--preset", "derham", "--omega", "0.2") == 0
    data = json.loads((tmp_path / "cones.json").read_text())
    assert data["conjugation"]["found"] and data["conjugation"]["family"] == "hat"
    assert data["assumption_a"]["pass"]
    assert {c["condition"] for c in data["assumption_a"]["conditions"]} == {"invariance", "inner_product", "chord_direction"}


def test_module_error_exits_one(tmp_path, capsys):
    assert run(tmp_path, "pressure", "--preset", "derham", "--omega", "0.6", "--t", "0:1:0.5") == 1
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("args,files", [
    (["pressure", *DR, "--t", "-2:2:0.5", "--depths", "4,8"], ["pressure.csv", "pressure_summary.json"]),
    (["render", *DR, "--depth", "8"], ["curve.csv", "curve.svg"]),
    (["holder", *DR, "--count", "2", "--scales", "6", "--depth", "10"], ["holder.csv"]),
    (["cones", *DR, "--depth", "6"], ["cones.json"]),
])
def test_reruns_are_byte_identical(tmp_path, args, files):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main([*args, "--out", str(a)]) == 0
    assert cli.main([*args, "--out", str(b)]) == 0
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_config_hash_tracks_options(tmp_path):
    run(tmp_path / "a", "render", *DR, "--depth", "4")
    run(tmp_path / "b", "render", *DR, "--depth", "5")
    tail = [(tmp_path / d / "curve.csv").read_text().splitlines()[-1] for d in "ab"]
    assert tail[0] != tail[1]
