"""Command-line surface: outputs, determinism and the exit-code contract."""

import os

import numpy as np
import pytest

from twinmixing import load_config, random_init, save_weights, zero_init
from twinmixing.cli import main, run_bench, run_eval
from twinmixing.imageio import read_pgm, write_mask, write_ppm
from twinmixing.weights_io import read_raw


@pytest.fixture(scope="module")
def tiny_weights(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = load_config("tiny")
    path = str(root / "tiny-zero.twmx")
    save_weights(zero_init(cfg), path)
    rpath = str(root / "tiny-rand.twmx")
    save_weights(random_init(cfg, seed=17), rpath)
    return path, rpath


@pytest.fixture
def ppm_image(tmp_path, rng):
    rgb = rng.integers(0, 256, size=(48, 64, 3)).astype(np.uint8)
    path = str(tmp_path / "input.ppm")
    write_ppm(rgb, path)
    return path


def test_analyze_emits_csv(capsys):
    assert main(["analyze", "--config", "tiny"]) == 0
    out = capsys.readouterr().out
    lines = out.strip().split("\n")
    assert lines[0] == "layer,params,flops"
    assert lines[-1].startswith("total,")


def test_analyze_missing_config_exits_2(capsys):
    assert main(["analyze", "--config", "no-such-config.json"]) == 2


def test_analyze_rejects_bad_shape(capsys):
    assert main(["analyze", "--config", "tiny", "--input-shape", "100x100"]) == 4


def test_usage_error_exits_1(capsys):
    assert main(["analyze"]) == 1            # missing required --config
    assert main([]) == 1                     # no subcommand
    assert main(["bench", "--config", "tiny", "--batch", "zero"]) == 1


def test_infer_zero_weights_all_background(tmp_path, tiny_weights, ppm_image, capsys):
    zero_path, _ = tiny_weights
    out_da = str(tmp_path / "da.pgm")
    out_lane = str(tmp_path / "lane.pgm")
    overlay = str(tmp_path / "overlay.ppm")
    code = main(["infer", "--config", "tiny", "--weights", zero_path,
                 "--input", ppm_image, "--out-da", out_da, "--out-lane", out_lane,
                 "--overlay", overlay])
    assert code == 0
    out = capsys.readouterr().out
    assert "drivable_foreground_fraction=0.000000" in out
    assert "lane_foreground_fraction=0.000000" in out
    da = read_pgm(out_da)
    assert da.shape == (384, 640)            # 640x384 canvas
    assert np.array_equal(da, np.zeros((384, 640), dtype=np.uint8))
    assert os.path.exists(overlay)


def test_infer_is_byte_deterministic(tmp_path, tiny_weights, ppm_image):
    _, rand_path = tiny_weights
    blobs = []
    for tag in ("a", "b"):
        out_da = str(tmp_path / f"da-{tag}.pgm")
        out_lane = str(tmp_path / f"lane-{tag}.pgm")
        assert main(["infer", "--config", "tiny", "--weights", rand_path,
                     "--input", ppm_image, "--out-da", out_da,
                     "--out-lane", out_lane]) == 0
        blobs.append((open(out_da, "rb").read(), open(out_lane, "rb").read()))
    assert blobs[0] == blobs[1]


def test_infer_exit_codes(tmp_path, tiny_weights, ppm_image):
    zero_path, _ = tiny_weights
    args = lambda **kw: ["infer", "--config", "tiny",
                         "--weights", kw.get("weights", zero_path),
                         "--input", kw.get("image", ppm_image),
                         "--out-da", str(tmp_path / "da.pgm"),
                         "--out-lane", str(tmp_path / "lane.pgm")]
    assert main(args(weights=str(tmp_path / "missing.twmx"))) == 2
    assert main(args(image=str(tmp_path / "missing.ppm"))) == 2

    corrupt = str(tmp_path / "bad.twmx")
    open(corrupt, "wb").write(b"XXXX garbage")
    assert main(args(weights=corrupt)) == 3

    not_image = str(tmp_path / "bad.ppm")
    open(not_image, "wb").write(b"hello world")
    assert main(args(image=not_image)) == 3

    # weights from the wrong architecture: validation failure
    base_store = zero_init(load_config("base"))
    wrong = str(tmp_path / "base.twmx")
    save_weights(base_store, wrong)
    assert main(args(weights=wrong)) == 4


def test_bench_report_shape():
    rows = run_bench("tiny", batches=[1, 2], runs=2, warmup=0)
    assert [b for b, _, _ in rows] == [1, 2]
    for _, mean_fps, std_fps in rows:
        assert mean_fps > 0
        assert std_fps >= 0


def test_bench_rejects_bad_args():
    with pytest.raises(ValueError):
        run_bench("tiny", batches=[1], runs=1, warmup=0)
    with pytest.raises(ValueError):
        run_bench("tiny", batches=[], runs=2, warmup=0)


def test_gradcheck_cli(capsys):
    assert main(["gradcheck", "--seed", "3", "--cases", "2"]) == 0
    out = capsys.readouterr().out
    assert "focal max_rel_error" in out and "tversky max_rel_error" in out


def test_quantize_cli(tmp_path, tiny_weights, capsys):
    _, rand_path = tiny_weights
    out_path = str(tmp_path / "quant.twmx")
    report = str(tmp_path / "report.csv")
    assert main(["quantize", "--weights", rand_path, "--out", out_path,
                 "--report", report]) == 0
    stdout = capsys.readouterr().out
    assert stdout.splitlines()[0] == "tensor,scale,max_abs_error"
    assert open(report).read() == stdout

    original = dict(read_raw(rand_path))
    quantized = dict(read_raw(out_path))
    assert set(original) == set(quantized)
    changed = [n for n in original
               if n.endswith(".weight") and original[n].ndim == 4
               and not np.array_equal(original[n], quantized[n])]
    assert changed
    for n in original:
        if not (n.endswith(".weight") and original[n].ndim == 4):
            assert np.array_equal(original[n], quantized[n])


def test_eval_self_comparison(tmp_path, rng):
    pred = tmp_path / "pred"
    pred.mkdir()
    for i in range(2):
        mask = (rng.uniform(size=(6, 8)) < 0.3).astype(np.uint8)
        write_mask(mask, str(pred / f"{i}.pgm"))
    report = run_eval(str(pred), str(pred))
    assert report.miou == 1.0
    assert report.pixel_accuracy == 1.0


def test_eval_hand_fixture(tmp_path):
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    # image 1: the hand-counted 2x2 case; image 2: all background, perfect
    write_mask(np.array([[1, 0], [0, 0]], dtype=np.uint8), str(pred / "a.pgm"))
    write_mask(np.array([[1, 1], [0, 0]], dtype=np.uint8), str(gt / "a.pgm"))
    write_mask(np.zeros((2, 2), dtype=np.uint8), str(pred / "b.pgm"))
    write_mask(np.zeros((2, 2), dtype=np.uint8), str(gt / "b.pgm"))
    report = run_eval(str(pred), str(gt))
    # accumulated: class0 tp=6 fp=1 fn=0, class1 tp=1 fp=0 fn=1
    assert report.per_class_iou == (6 / 7, 1 / 2)
    assert report.confusion[0]["tp"] == 6


def test_eval_unpaired_files_listed(tmp_path, capsys):
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    write_mask(np.zeros((2, 2), dtype=np.uint8), str(pred / "only-pred.pgm"))
    write_mask(np.zeros((2, 2), dtype=np.uint8), str(gt / "only-gt.pgm"))
    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 4
    err = capsys.readouterr().err
    assert "only-pred.pgm" in err and "only-gt.pgm" in err


def test_eval_size_mismatch(tmp_path):
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    write_mask(np.zeros((2, 2), dtype=np.uint8), str(pred / "a.pgm"))
    write_mask(np.zeros((3, 2), dtype=np.uint8), str(gt / "a.pgm"))
    with pytest.raises(ValueError, match="a.pgm"):
        run_eval(str(pred), str(gt))
