import json

import numpy as np
import pytest

from borsuk4 import specfile
from borsuk4.cli import RunReport, main
from borsuk4.geometry import diameter
from borsuk4.optimize import Certificate
from borsuk4.polytope import circumscribed

FAST = ["--descent-steps", "10", "--finetune-budget", "20"]


def read_blocks(path):
    blocks = path.read_text().strip().split("\n\n")
    return [np.loadtxt(b.splitlines()).reshape(-1, 2) for b in blocks]


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    code = main(["demo2d", "--m-lower", "7", "--m-upper", "9", "--restarts", "2", "--out", str(out)])
    return code, out


def test_build_ucs_is_deterministic(tmp_path, capsys):
    assert main(["build-ucs", str(tmp_path / "a")]) == 0
    assert main(["build-ucs", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["U1.json", "U2.json", "U3.json", "U4p.json"]
    for name in names:
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
        spec = specfile.parse(a.decode())
        assert spec.system is None and spec.cover.label == name[:-5]


def test_demo2d_outputs(demo):
    code, out = demo
    assert code == 0
    for label in ("L2", "L2H"):
        spec = specfile.read(out / f"{label}.json")
        assert spec.certificate["pass"] and len(spec.certificate["diameters"]) == 3
        samples = read_blocks(out / f"{label}_samples.txt")
        assert [len(s) for s in samples] == [25, 25, 25]
        polygon = read_blocks(out / f"{label}_polygon.txt")[0]
        np.testing.assert_array_equal(polygon[0], polygon[-1])
        parts = read_blocks(out / f"{label}_parts.txt")
        assert len(parts) == 3
        assert len(read_blocks(out / f"{label}_cover.txt")[0]) == 721


def test_demo2d_polygon_contains_samples(demo):
    _, out = demo
    poly = read_blocks(out / "L2H_polygon.txt")[0][:-1]
    center = poly.mean(axis=0)
    edges = np.roll(poly, -1, axis=0) - poly
    for pts in read_blocks(out / "L2H_samples.txt"):
        # counter-clockwise polygon: every point is left of every edge
        cross = edges[:, 0] * (pts[:, None, 1] - poly[:, 1]) - edges[:, 1] * (pts[:, None, 0] - poly[:, 0])
        assert cross.min() >= -1e-12
    assert np.all(np.linalg.norm(poly - center, axis=1) > 0)


def test_verify_exit_codes(demo, tmp_path, capsys):
    _, out = demo
    assert main(["verify", str(out / "L2H.json")]) == 0
    row = capsys.readouterr().out.splitlines()[-1]
    assert row.startswith("L2H") and row.endswith("PASS")
    # a threshold below the achieved value flips the verdict
    assert main(["verify", str(out / "L2H.json"), "--threshold", "0.5"]) == 1

    data = json.loads((out / "L2H.json").read_text())
    data["directions"]["apex"] = [4.0, 4.0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert main(["verify", str(bad)]) == 2
    (tmp_path / "junk.json").write_text("{")
    assert main(["verify", str(tmp_path / "junk.json")]) == 2
    assert main(["verify", str(tmp_path / "missing.json")]) == 2


def test_verify_needs_a_direction_system(tmp_path):
    main(["build-ucs", str(tmp_path)])
    assert main(["verify", str(tmp_path / "U1.json")]) == 2


def test_search_is_seeded_and_resumable(demo, tmp_path):
    _, out = demo
    spec = str(out / "L2.json")
    args = ["search", spec, "--restarts", "3", "--m-lower", "5", "--m-upper", "7", "--seed", "4", *FAST]
    assert main([*args, "--out", str(tmp_path / "a.json")]) == 0
    assert main([*args, "--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    ckpt = tmp_path / "run.jsonl"
    assert main([*args, "--checkpoint", str(ckpt), "--out", str(tmp_path / "c.json")]) == 0
    lines = ckpt.read_text().splitlines()
    assert len(lines) == 4
    # simulate an interruption after one restart, with a torn last line
    ckpt.write_text("\n".join(lines[:2]) + "\n" + lines[2][:30])
    assert main([*args, "--checkpoint", str(ckpt), "--out", str(tmp_path / "d.json")]) == 0
    assert (tmp_path / "d.json").read_bytes() == (tmp_path / "a.json").read_bytes()


def test_search_rejects_zero_budget(demo, tmp_path):
    _, out = demo
    assert main(["search", str(out / "L2.json"), "--restarts", "0", "--out", str(tmp_path / "x.json")]) == 2


def test_search_beats_one_part_baseline(tmp_path):
    main(["build-ucs", str(tmp_path)])
    spec = specfile.read(tmp_path / "U3.json")
    code = main(["search", str(tmp_path / "U3.json"), "--restarts", "2", "--m-lower", "3",
                 "--m-upper", "5", *FAST, "--out", str(tmp_path / "U3s.json")])
    assert code in (0, 1)
    result = specfile.read(tmp_path / "U3s.json")
    baseline = diameter(circumscribed(spec.cover, 5).vertices)[0]
    assert result.certificate["d_best"] <= baseline


def test_reproduce_smoke(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["reproduce", "--budget", "2", "--m-lower", "3", "--m-upper", "5", *FAST,
                 "--checkpoint", "--out", str(out)])
    report = (out / "report.txt").read_text()
    assert code == 1
    assert report.startswith("best found at budget 2")
    assert "no partition claim" in report
    assert "0.99987" in report and "0.98538" in report
    for label in ("U1", "U2", "U3", "U4p"):
        cert = specfile.read(out / f"{label}.json").certificate
        assert len(cert["diameters"]) == 8
        assert len((out / "checkpoints" / f"{label}.jsonl").read_text().splitlines()) == 3
    # resuming from complete checkpoints reruns nothing and reproduces the report
    first = {p.name: p.read_bytes() for p in out.glob("*.json") if p.name != "timing.json"}
    capsys.readouterr()
    assert main(["reproduce", "--budget", "2", "--m-lower", "3", "--m-upper", "5", *FAST,
                 "--checkpoint", "--out", str(out)]) == 1
    assert "restart" not in capsys.readouterr().err
    assert (out / "report.txt").read_text() == report
    assert {p.name: p.read_bytes() for p in out.glob("*.json") if p.name != "timing.json"} == first


def _cert(label, d):
    return Certificate(label, None, (d,) * 8, d, 9, 0)


def test_global_pass_needs_all_four():
    good = [_cert(lbl, 0.99) for lbl in ("U1", "U2", "U3", "U4p")]
    assert RunReport(good, 10).passed
    assert not RunReport(good[:3] + [_cert("U4p", 1.01)], 10).passed
    assert not RunReport(good[:3], 10).passed
    lines = RunReport(good, 10).lines()
    assert lines[0] == "best found at budget 10 restarts per element"


def test_search_output_does_not_depend_on_workers(demo, tmp_path):
    _, out = demo
    args = ["search", str(out / "L2.json"), "--restarts", "2", "--m-lower", "5", "--m-upper", "7", *FAST]
    assert main([*args, "--workers", "2", "--out", str(tmp_path / "a.json")]) == 0
    assert main([*args, "--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
