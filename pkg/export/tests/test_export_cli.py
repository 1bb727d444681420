import json
import subprocess
import sys

import numpy as np
import pytest

from periscope_export.cli import main


def test_unknown_network_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main(["export", "--network", "resnet99", "--out", "x"])
    assert err.value.code == 2


def test_export_without_selection_fails(tmp_path, capsys):
    assert main(["export", "--out", str(tmp_path)]) == 1
    assert "periscope-export:" in capsys.readouterr().err


def test_reexport_is_checksum_stable(tmp_path):
    # the mangled type names torch bakes into an archive depend on
    # process-global state, so each export runs in a fresh interpreter
    checksums = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = (
            "from periscope_export import export_network; "
            f"r = export_network('r18', {str(out)!r}); print(r.checksum)"
        )
        proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        checksums.append(proc.stdout.strip().splitlines()[-1])
        manifest = json.loads((out / "r18.manifest.json").read_text())
        assert manifest["checksum"] == checksums[-1]
    assert checksums[0] == checksums[1]


def test_dump_one_image_three_taps(export_dir, tmp_path):
    cv2 = pytest.importorskip("cv2")
    out, results = export_dir
    images = tmp_path / "imgs"
    images.mkdir()
    rng = np.random.default_rng(11)
    cv2.imwrite(str(images / "probe.png"), rng.integers(0, 256, (224, 224)).astype(np.uint8))
    dumps = tmp_path / "dumps"
    assert main([
        "dump", "--spec", str(results["r18"].spec_path),
        "--images", str(images), "--out", str(dumps),
        "--taps", "conv1,layer2,layer4",
    ]) == 0
    files = sorted(p.name for p in (dumps / "probe").iterdir())
    assert files == ["conv1.atd", "layer2.atd", "layer4.atd"]


def test_dump_unknown_tap_fails(export_dir, tmp_path, capsys):
    cv2 = pytest.importorskip("cv2")
    _, results = export_dir
    images = tmp_path / "imgs"
    images.mkdir()
    cv2.imwrite(str(images / "probe.png"), np.zeros((224, 224), dtype=np.uint8))
    code = main([
        "dump", "--spec", str(results["r18"].spec_path),
        "--images", str(images), "--out", str(tmp_path / "dumps"),
        "--taps", "nosuchtap",
    ])
    assert code == 1
    assert "nosuchtap" in capsys.readouterr().err
