import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from symtele.cli import RUN_HEADER, SCALING_HEADER, SWEEP_HEADER, main, write_csv
from symtele.data import write_idx
from symtele.experiments import preset


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def drop_columns(path, names):
    header, rows = read_csv(path)
    keep = [i for i, h in enumerate(header) if h not in names]
    return [[r[i] for i in keep] for r in [header] + rows]


def test_booth_run_outputs(tmp_path, capsys):
    assert main(["run", "--preset", "booth", "--out", str(tmp_path)]) == 0
    for seed in range(20):
        for variant in ("baseline", "teleport"):
            header, rows = read_csv(tmp_path / f"{variant}_seed{seed}.csv")
            assert tuple(header) == RUN_HEADER
            assert len(rows) == 10
    _, rows = read_csv(tmp_path / "teleport_seed0.csv")
    assert [r[4] for r in rows] == ["true" if t == 5 else "false" for t in range(10)]
    header, rows = read_csv(tmp_path / "summary.csv")
    assert "loss_std" in header and len(rows) == 20
    _, rows = read_csv(tmp_path / "teleports.csv")
    assert len(rows) == 20
    assert json.loads((tmp_path / "config.json").read_text())["name"] == "booth"
    assert "final loss" in capsys.readouterr().out


def test_rosenbrock_run_has_1000_rows(tmp_path):
    assert main(["run", "--preset", "rosenbrock", "--out", str(tmp_path)]) == 0
    for variant in ("baseline", "teleport"):
        _, rows = read_csv(tmp_path / f"{variant}_seed0.csv")
        assert len(rows) == 1000


def test_mlp_summary_over_five_seeds(tmp_path):
    assert main(["run", "--preset", "mlp-gd", "--out", str(tmp_path), "--workers", "2"]) == 0
    header, rows = read_csv(tmp_path / "summary.csv")
    n = header.index("n")
    assert {r[n] for r in rows} == {"5"} and len(rows) == 600


def test_rerun_from_config_is_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--preset", "mlp-adagrad", "--seed", "2", "--out", str(a)]) == 0
    assert main(["run", "--config", str(a / "config.json"), "--out", str(b)]) == 0
    assert (a / "config.json").read_bytes() == (b / "config.json").read_bytes()
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    assert "teleport_seed2.csv" in files
    for name in files:
        if name.endswith(".csv"):
            assert drop_columns(a / name, {"wall_time_s"}) == drop_columns(b / name, {"wall_time_s"})


def _small_mnist(tmp_path):
    r = np.random.default_rng(0)
    images = r.integers(0, 256, size=(40, 28, 28), dtype=np.uint8)
    labels = np.arange(40) % 10
    img, lab = tmp_path / "img.gz", tmp_path / "lab.gz"
    write_idx(img, lab, images, labels)
    cfg = preset("mnist").replace(train_size=30, t_max=3, seeds=[0], batch_size=10, batches=2,
                                  ascent_steps=2)
    path = tmp_path / "mnist.json"
    path.write_text(cfg.to_json())
    return img, lab, path


def test_mnist_paths_and_validation_csv(tmp_path):
    img, lab, path = _small_mnist(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out),
                 "--mnist-images", str(img), "--mnist-labels", str(lab)]) == 0
    header, rows = read_csv(out / "teleport_seed0_val.csv")
    assert header == ["epoch", "val_loss"] and len(rows) == 3
    _, rows = read_csv(out / "teleport_seed0.csv")
    assert [r[4] for r in rows] == ["false", "true", "false"]
    saved = json.loads((out / "config.json").read_text())
    assert saved["mnist_images"] == str(img)


def test_sweep_output(tmp_path):
    cfg = preset("sweep-gd").replace(seeds=[0], sweep_lrs=[1e-9, 1e-8], sweep_steps=[1, 2],
                                     timing_repeats=1)
    path = tmp_path / "sweep.json"
    path.write_text(cfg.to_json())
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    header, rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert tuple(header) == SWEEP_HEADER and len(rows) == 4


def test_scaling_output(tmp_path):
    cfg = preset("scaling-depth").replace(depths=[2, 3], t_max=10, schedule=[0],
                                          scaling_width=4, timing_repeats=1)
    path = tmp_path / "s.json"
    path.write_text(cfg.to_json())
    assert main(["scaling", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    header, rows = read_csv(tmp_path / "o" / "scaling.csv")
    assert tuple(header) == SCALING_HEADER and len(rows) == 2
    t = header.index("teleport_wall_time_s")
    assert all(float(r[t]) > 0 for r in rows)


@pytest.mark.parametrize("argv", [
    ["run", "--out", "{o}"],
    ["run", "--preset", "booth", "--config", "x.json", "--out", "{o}"],
    ["run", "--preset", "nope", "--out", "{o}"],
    ["run", "--config", "{o}/missing.json", "--out", "{o}"],
    ["run", "--preset", "booth", "--out", "{o}", "--workers", "0"],
    ["run", "--preset", "mnist", "--out", "{o}", "--mnist-images", "a"],
    ["run", "--preset", "mnist", "--out", "{o}", "--mnist-images", "a", "--mnist-labels", "b"],
    ["sweep", "--preset", "booth", "--out", "{o}"],
    ["scaling", "--preset", "booth", "--out", "{o}"],
])
def test_config_errors_exit_1(tmp_path, argv, capsys):
    argv = [a.replace("{o}", str(tmp_path)) for a in argv]
    assert main(argv) == 1
    assert "error:" in capsys.readouterr().err


def test_malformed_config_exits_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 1
    bad.write_text(json.dumps({**preset("booth").to_dict(), "extra": 1}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_bad_idx_exits_1(tmp_path):
    img, lab = tmp_path / "i", tmp_path / "l"
    img.write_bytes(b"\x00\x00\x08\x01junk")
    lab.write_bytes(b"\x00\x00\x08\x01\x00\x00\x00\x00")
    assert main(["run", "--preset", "mnist", "--out", str(tmp_path / "o"),
                 "--mnist-images", str(img), "--mnist-labels", str(lab)]) == 1


def test_unwritable_output_exits_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--preset", "booth", "--out", str(blocker / "sub")]) == 1


def test_theory_check_exit_codes(capsys):
    assert main(["theory-check"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert main(["theory-check", "--fault"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    names = capsys.readouterr().out.split()
    assert "rosenbrock" in names and "mnist-epoch-<k>" in names


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "symtele", "presets"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0 and "booth" in proc.stdout


def test_write_csv_cells(tmp_path):
    path = tmp_path / "x.csv"
    write_csv(path, ("a", "b", "c"), [(0.1, True, None), {"a": 1, "c": "z"}])
    assert path.read_text() == "a,b,c\n0.1,true,\n1,,z\n"
