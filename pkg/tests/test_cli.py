import json
import subprocess
import sys

import numpy as np
import pytest

from polyconsensus.cli import main
from polyconsensus.dataset_io import load_multirater, save_multirater
from polyconsensus.exports import read_pgm
from polyconsensus.geometry import shoelace_area
from polyconsensus.synth import make_shape

from conftest import half_disagreement_raters, ngon, rater_set, square


def write_sample(path, polygons, phase="pre_qa", **kw):
    kw.setdefault("image_size", (64, 64))
    rs = rater_set([p.translated(32, 32) for p in polygons], phase=phase, **kw)
    save_multirater(rs, path)
    return path


def run(*argv):
    return main([str(a) for a in argv])


def read_json(path):
    return json.loads(path.read_text())


def test_two_rater_consensus(tmp_path):
    sample = write_sample(tmp_path / "s.json", [ngon(64, 5), ngon(64, 9)])
    out = tmp_path / "r.json"
    assert run("consensus", "--input", sample, "--out", out) == 0
    doc = read_json(out)
    assert len(doc["d_B_per_rater"]) == 2
    assert doc["d_B"] == pytest.approx(2.0, abs=0.1)
    assert doc["consensus"]["closed"]
    assert "generated_at" not in doc


def test_stamp_is_opt_in(tmp_path):
    sample = write_sample(tmp_path / "s.json", [ngon(32, 5), ngon(32, 6)])
    assert run("consensus", "--input", sample, "--out", tmp_path / "r.json", "--stamp", "run-1") == 0
    assert read_json(tmp_path / "r.json")["generated_at"] == "run-1"


def test_single_rater_rejected(tmp_path, capsys):
    sample = write_sample(tmp_path / "s.json", [ngon(32, 5)])
    assert run("consensus", "--input", sample, "--out", tmp_path / "r.json") == 2
    assert "at least 2" in capsys.readouterr().err
    assert not (tmp_path / "r.json").exists()


@pytest.mark.parametrize("flags", [
    ["--resolution", "0"],
    ["--resolution", "x"],
    ["--step", "-1"],
    ["--phase", "mid_qa"],
])
def test_bad_flags(tmp_path, flags):
    sample = write_sample(tmp_path / "s.json", [ngon(32, 5), ngon(32, 6)])
    assert run("consensus", "--input", sample, "--out", tmp_path / "r.json", *flags) == 2


def test_negative_threshold(tmp_path):
    sample = write_sample(tmp_path / "s.json", [ngon(32, 5), ngon(32, 6)])
    assert run("uncertainty", "--input", sample, "--out", tmp_path / "r.json", "--threshold", "-1") == 2


def test_missing_and_malformed_input(tmp_path):
    assert run("consensus", "--input", tmp_path / "none.json", "--out", tmp_path / "r.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"sample_id": 3}')
    assert run("consensus", "--input", bad, "--out", tmp_path / "r.json") == 2


def test_computation_error_exits_3(tmp_path, monkeypatch):
    sample = write_sample(tmp_path / "s.json", [ngon(32, 5), ngon(32, 6)])
    monkeypatch.setenv("POLYCONSENSUS_CELL_BUDGET", "100")
    assert run("consensus", "--input", sample, "--out", tmp_path / "r.json") == 3


def test_disjoint_raters_warn(tmp_path, capsys):
    sample = write_sample(tmp_path / "s.json", [square(3, (-12, 0)), square(3, (12, 0))])
    code = run("consensus", "--input", sample, "--out", tmp_path / "r.json")
    err = capsys.readouterr().err
    assert code in (0, 3)
    if code == 0:
        assert "warning:" in err
        assert read_json(tmp_path / "r.json")["warnings"]


def test_uncertainty_identical_and_half(tmp_path):
    same = write_sample(tmp_path / "same.json", [ngon(256, 20)] * 4)
    assert run("uncertainty", "--input", same, "--out", tmp_path / "a.json") == 0
    assert read_json(tmp_path / "a.json")["local"]["flagged_length"] == 0.0
    half = tmp_path / "half.json"
    write_sample(half, half_disagreement_raters().polygons("pre_qa"))
    assert run("uncertainty", "--input", half, "--out", tmp_path / "b.json", "--csv", tmp_path / "b.csv",
               "--overlay", tmp_path / "b.svg", "--heatmap", tmp_path / "b.pgm") == 0
    doc = read_json(tmp_path / "b.json")
    assert len(doc["local"]["flagged_segments"]) == 1
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "t,sigma" and len(lines) == len(doc["local"]["sigma_series"]) + 1
    assert "<svg" in (tmp_path / "b.svg").read_text()
    assert read_pgm((tmp_path / "b.pgm").read_bytes()).max() > 0


def cohort_dir(tmp_path, pre_post_same=False):
    d = tmp_path / "cohort"
    d.mkdir()
    for i, r in enumerate((8, 10, 12)):
        pre = [ngon(48, r), ngon(48, r + 1.5), ngon(48, r - 1)]
        post = pre if pre_post_same else [ngon(48, r), ngon(48, r + 0.5), ngon(48, r - 0.25)]
        rs_pre = rater_set([p.translated(32, 32) for p in pre], "pre_qa", f"s{i}", (64, 64))
        rs_post = rater_set([p.translated(32, 32) for p in post], "post_qa", f"s{i}", (64, 64))
        merged = type(rs_pre)(rs_pre.sample_id, rs_pre.annotations + rs_post.annotations, rs_pre.image_size)
        save_multirater(merged, d / f"s{i}.json")
    return d


def test_compare_identical_phases(tmp_path, capsys):
    d = cohort_dir(tmp_path, pre_post_same=True)
    assert run("compare", "--input-dir", d, "--out", tmp_path / "c.json") == 0
    doc = read_json(tmp_path / "c.json")
    assert doc["welch"]["t"] == 0.0
    assert "t = 0.000000" in capsys.readouterr().out


def test_compare_reduction(tmp_path):
    d = cohort_dir(tmp_path)
    assert run("compare", "--input-dir", d, "--out", tmp_path / "c.json", "--csv", tmp_path / "c.csv") == 0
    doc = read_json(tmp_path / "c.json")
    assert doc["welch"]["t"] < 0 and doc["direction"] == "decrease"
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 4
    assert run("compare", "--input-dir", d, "--out", tmp_path / "j.json", "--jobs", "2") == 0
    assert (tmp_path / "j.json").read_bytes() == (tmp_path / "c.json").read_bytes()


def test_compare_input_errors(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("compare", "--input-dir", empty, "--out", tmp_path / "c.json") == 2
    assert run("compare", "--input-dir", tmp_path / "nope", "--out", tmp_path / "c.json") == 2
    pre_only = tmp_path / "pre"
    pre_only.mkdir()
    write_sample(pre_only / "a.json", [ngon(32, 5), ngon(32, 6)])
    assert run("compare", "--input-dir", pre_only, "--out", tmp_path / "c.json") == 2


def test_synth_merge_consensus_between_extremes(tmp_path):
    out = tmp_path / "synth"
    assert run("synth", "--shapes", "diamond,octagon,circle", "--raters", "1", "--noise", "0",
               "--seed", "1", "--merge", "--out-dir", out) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["ground_truth.json", "merged.json", "sample_000.json", "sample_001.json", "sample_002.json"]
    merged = load_multirater(out / "merged.json")
    areas = [shoelace_area(p) for p in merged.polygons("pre_qa")]
    assert run("consensus", "--input", out / "merged.json", "--out", tmp_path / "r.json") == 0
    area = read_json(tmp_path / "r.json")["consensus"]["area"]
    assert min(areas) < area < max(areas)


def test_synth_cohort_feeds_compare(tmp_path):
    out = tmp_path / "synth"
    assert run("synth", "--cohort", "3", "--raters", "3", "--pre-noise", "0.8", "--post-noise", "0.3",
               "--seed", "4", "--out-dir", out) == 0
    assert run("compare", "--input-dir", out, "--out", tmp_path / "c.json") == 0
    assert len(read_json(tmp_path / "c.json")["pre_qa"]["per_image"]) == 3


def test_rasterize_circle(tmp_path):
    out = tmp_path / "c.pgm"
    assert run("rasterize", "--shape", "circle", "--radius", "10", "--resolution", "16", "--out", out,
               "--json", tmp_path / "c.json", "--distance-pgm", tmp_path / "d.pgm") == 0
    cells = read_pgm(out.read_bytes())
    area = np.count_nonzero(cells) / 256
    truth = shoelace_area(make_shape("circle", 10))
    assert abs(area - truth) / truth <= 0.03
    assert read_json(tmp_path / "c.json")["filled_cells"] == np.count_nonzero(cells)
    assert read_pgm((tmp_path / "d.pgm").read_bytes()).shape == cells.shape
    assert run("rasterize", "--shape", "blob", "--out", out) == 2


def coco_file(path):
    path.write_text(json.dumps({
        "images": [{"id": 5, "width": 100, "height": 100}],
        "annotations": [
            {"id": 9, "image_id": 5, "iscrowd": 0, "bbox": [10, 10, 20, 20],
             "segmentation": [[10, 10, 30, 10, 30, 30, 10, 30]]},
            {"id": 10, "image_id": 5, "iscrowd": 1, "segmentation": {"counts": [1], "size": [100, 100]}},
        ],
    }))
    return path


def test_coco_crop(tmp_path):
    coco = coco_file(tmp_path / "coco.json")
    out = tmp_path / "crop.json"
    assert run("coco-crop", "--annotations", coco, "--image-id", 5, "--ann-id", 9, "--out", out) == 0
    rs = load_multirater(out)
    assert rs.sample_id == "coco_5_9" and rs.image_size == (24, 24)
    assert np.allclose(rs.polygons("pre_qa")[0].vertices.min(axis=0), (2, 2))
    assert run("coco-crop", "--annotations", coco, "--image-id", 5, "--ann-id", 99, "--out", out) == 2
    assert run("coco-crop", "--annotations", coco, "--image-id", 5, "--ann-id", 10, "--out", out) == 2


def test_figures_written(tmp_path):
    sample = write_sample(tmp_path / "s.json", [ngon(64, 5), ngon(64, 9)])
    assert run("consensus", "--input", sample, "--out", tmp_path / "r.json", "--figure", tmp_path / "f.png") == 0
    assert (tmp_path / "f.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert run("uncertainty", "--input", sample, "--out", tmp_path / "u.json", "--figure", tmp_path / "u.svg") == 0
    assert b"<svg" in (tmp_path / "u.svg").read_bytes()
    assert run("consensus", "--input", sample, "--out", tmp_path / "r.json", "--figure", tmp_path / "f.gif") == 2


def test_console_script_entry_point(tmp_path):
    sample = write_sample(tmp_path / "s.json", [ngon(32, 5), ngon(32, 6)])
    proc = subprocess.run([sys.executable, "-m", "polyconsensus.cli", "consensus", "--input", str(sample),
                           "--out", str(tmp_path / "r.json")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "polyconsensus.cli", "consensus", "--resolution", "0"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
