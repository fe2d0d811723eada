import json

import numpy as np
import pytest

from hbnscreen.cli import main

SMALL = ["--supercell", "3", "--scf-grid", "3", "--dense-grid", "5"]


@pytest.fixture(autouse=True)
def _scratch_cwd(tmp_path, monkeypatch):
    # Commands default to writing into the working directory.
    monkeypatch.chdir(tmp_path)


def _records(out):
    return [json.loads(line) for line in out.splitlines() if line and not line.startswith("#")]


@pytest.fixture
def calib(tmp_path):
    path = tmp_path / "cal.txt"
    path.write_text("# empty calibration\n")
    return str(path)


def test_match_default(capsys):
    assert main(["match"]) == 0
    recs = _records(capsys.readouterr().out)
    pairs = {(r["target"], r["defect"]) for r in recs}
    assert ("Telecom-1", "ErN-VN") in pairs and ("Cs-D2", "ErN-VN") in pairs


def test_match_is_deterministic(capsys, tmp_path):
    main(["match", "--write", "--output-dir", str(tmp_path)])
    first = capsys.readouterr().out
    main(["match", "--write", "--output-dir", str(tmp_path)])
    second = capsys.readouterr().out
    strip = lambda s: [l for l in s.splitlines() if not l.startswith("# generated")]
    assert strip(first) == strip(second)
    assert (tmp_path / "match.jsonl").exists()


def test_match_empty_target_record(capsys, tmp_path):
    targets = tmp_path / "t.csv"
    targets.write_text("name,wavelength_nm,category\nFar,2000,telecom band\n")
    assert main(["match", "--targets", str(targets)]) == 0
    (rec,) = _records(capsys.readouterr().out)
    assert rec["defect"] is None


@pytest.mark.parametrize("argv", [
    ["match", "--tolerance", "0"],
    ["match", "--dataset", "/nonexistent.csv"],
    ["frobnicate"],
    ["bands", "sub:B:Xx"] + SMALL,
    ["bands", "vac:#0;sub:#0:C"] + SMALL,
    ["bands", "pristine", "--supercell", "0"],
    ["tune", "pristine", "--target", "600"] + SMALL,
])
def test_input_errors_exit_2(argv, calib, capsys):
    assert main(argv + ["--calibration", calib]) == 2
    assert "error" in capsys.readouterr().err


def test_bands_pristine_writes_files(tmp_path, capsys, calib):
    assert main(["bands", "pristine", "--output-dir", str(tmp_path), "--calibration", calib] + SMALL) == 0
    (gap,) = _records(capsys.readouterr().out)
    assert gap["kind"] == "gap" and gap["direct_at"] == "K"
    assert gap["gap_ev"] == pytest.approx(5.99, abs=0.05)
    data = np.loadtxt(tmp_path / "pristine_bands_up.dat", comments="#")
    assert data.shape[1] == 3 and np.all(np.diff(data[:, 0]) > 0)
    header = (tmp_path / "pristine_bands_up.dat").read_text().splitlines()[:3]
    assert header[0].startswith("# generated") and header[2].startswith("# config")


def test_bands_defect_emits_levels(tmp_path, capsys, calib):
    assert main(["bands", "sub:B:C", "--output-dir", str(tmp_path), "--calibration", calib] + SMALL) == 0
    kinds = [r["kind"] for r in _records(capsys.readouterr().out)]
    assert kinds[0] == "gap" and "level" in kinds
    assert (tmp_path / "CB_bands_down.dat").exists()


def test_screen_isolates_bad_lines(tmp_path, capsys, calib):
    defects = tmp_path / "defects.txt"
    defects.write_text("CB 0 sub:B:C\nbroken line here extra\nXxB 0 sub:B:Xx\nCB-CN 0 sub:B:C;sub:N:C\n")
    assert main(["screen", str(defects), "--output-dir", str(tmp_path), "--calibration", calib] + SMALL) == 0
    recs = _records(capsys.readouterr().out)
    assert len(recs) == 4
    assert recs[1]["kind"] == "error" and recs[1]["line"] == 2
    assert recs[2]["kind"] == "error" and recs[2]["error"] == "UnknownSpeciesError"
    assert recs[3]["kind"] == "transition"
    assert (tmp_path / "screen.jsonl").exists() and (tmp_path / "histogram.dat").exists()


def test_tune_unreachable_exits_1(tmp_path, capsys, calib):
    argv = ["tune", "sub:B:C;sub:N:C", "--target", "5000", "--strain-points", "3",
            "--output-dir", str(tmp_path), "--calibration", calib] + SMALL
    assert main(argv) == 1
    captured = capsys.readouterr()
    assert "achievable range" in captured.err
    assert (tmp_path / "CB-CN_strain.dat").exists()


def test_fit_params_roundtrip(tmp_path, capsys):
    out = tmp_path / "p.txt"
    assert main(["fit-params", "-o", str(out), "--output-dir", str(tmp_path)]) == 0
    (rec,) = _records(capsys.readouterr().out)
    assert rec["gap_ev"] == pytest.approx(5.99, abs=1e-4)
    assert out.exists()


def test_calibrate_small(tmp_path, capsys):
    defects = tmp_path / "d.txt"
    defects.write_text("CB-CN 0 sub:B:C;sub:N:C\nVN 0 vac:N\n")
    dataset = tmp_path / "ds.csv"
    dataset.write_text("name,charge,transition_ev,wavelength_nm,type,deformation,footnote\n"
                       "CB-CN,0,4.1,302.4,radiative,unknown,none\n")
    out = tmp_path / "cal.txt"
    code = main(["calibrate", str(defects), "--dataset", str(dataset), "-o", str(out)] + SMALL)
    recs = _records(capsys.readouterr().out)
    assert code == 0
    cal = next(r for r in recs if r["kind"] == "calibration")
    assert cal["energy_ev"] == pytest.approx(4.1, abs=1e-4)
    assert any(r["kind"] == "error" and r["name"] == "VN" for r in recs)
    assert "CB-CN.onsite.C" in out.read_text()
