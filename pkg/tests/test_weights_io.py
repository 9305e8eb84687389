"""TWMX weight container: round trips and validation."""

import numpy as np
import pytest

from twinmixing import (
    ConfigError,
    ConvWeights,
    ModelConfig,
    WeightFormatError,
    build_model,
    load_weights,
    random_init,
    read_raw,
    save_raw,
    save_weights,
)
from twinmixing.weights_io import flatten_store


@pytest.fixture
def setup(tmp_path):
    cfg = ModelConfig(
        variant="io-test", stem_channels=8, stage_widths=(16, 32),
        epm_repeats=(1, 1), branch_count=4,
        stage_dilations=((1, 2, 4, 8), (1, 4, 8, 16)), group_cap=2,
        decoder_widths=(8, 4, 4),
    )
    graph = build_model(cfg)
    store = random_init(cfg, seed=21)
    path = str(tmp_path / "weights.twmx")
    return cfg, graph, store, path


def test_round_trip_bitwise(setup):
    _, graph, store, path = setup
    save_weights(store, path)
    loaded = load_weights(path, graph)
    assert list(loaded) == list(store)
    for p in store:
        a, b = store[p], loaded[p]
        if isinstance(a, ConvWeights):
            assert np.array_equal(a.weights, b.weights)
            assert (a.bias is None) == (b.bias is None)
            if a.bias is not None:
                assert np.array_equal(a.bias, b.bias)
        else:
            for f in ("gamma", "beta", "mean", "var"):
                assert np.array_equal(getattr(a, f), getattr(b, f))
            assert a.activation == b.activation


def test_save_load_raw_round_trip(tmp_path, rng):
    tensors = [("t.weight", rng.normal(size=(3, 2, 1, 1)).astype(np.float32)),
               ("t.bias", rng.normal(size=3).astype(np.float32))]
    path = str(tmp_path / "raw.twmx")
    save_raw(tensors, path)
    back = read_raw(path)
    assert [n for n, _ in back] == ["t.weight", "t.bias"]
    for (_, a), (_, b) in zip(tensors, back):
        assert np.array_equal(a, b)


def test_bad_magic_rejected(setup):
    _, graph, store, path = setup
    save_weights(store, path)
    blob = bytearray(open(path, "rb").read())
    blob[0] = ord("X")
    open(path, "wb").write(bytes(blob))
    with pytest.raises(WeightFormatError, match="magic"):
        load_weights(path, graph)


def test_truncated_file_rejected(setup):
    _, graph, store, path = setup
    save_weights(store, path)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:len(blob) // 2])
    with pytest.raises(WeightFormatError, match="truncated"):
        load_weights(path, graph)


def test_trailing_garbage_rejected(setup):
    _, graph, store, path = setup
    save_weights(store, path)
    with open(path, "ab") as fh:
        fh.write(b"\x00\x00")
    with pytest.raises(WeightFormatError, match="trailing"):
        load_weights(path, graph)


def test_unsupported_version_rejected(setup, tmp_path):
    _, graph, store, path = setup
    save_weights(store, path)
    blob = bytearray(open(path, "rb").read())
    blob[4] = 2   # version field
    open(path, "wb").write(bytes(blob))
    with pytest.raises(WeightFormatError, match="version"):
        load_weights(path, graph)


def test_orphan_tensor_named(setup, rng):
    _, graph, store, path = setup
    tensors = flatten_store(store)
    tensors.append(("mystery.weight", rng.normal(size=(1, 1, 1, 1)).astype(np.float32)))
    save_raw(tensors, path)
    with pytest.raises(ConfigError, match="mystery.weight"):
        load_weights(path, graph)


def test_missing_tensor_named(setup):
    _, graph, store, path = setup
    tensors = [(n, a) for n, a in flatten_store(store) if n != "stem.conv.weight"]
    save_raw(tensors, path)
    with pytest.raises(ConfigError, match="stem.conv.weight"):
        load_weights(path, graph)


def test_shape_mismatch_reports_layer(setup, rng):
    _, graph, store, path = setup
    tensors = [(n, a) if n != "stem.conv.weight"
               else (n, rng.normal(size=(9, 3, 3, 3)).astype(np.float32))
               for n, a in flatten_store(store)]
    save_raw(tensors, path)
    with pytest.raises(ConfigError, match="stem.conv.weight"):
        load_weights(path, graph)


def test_duplicate_names_rejected_on_save(tmp_path, rng):
    t = rng.normal(size=(1, 1, 1, 1)).astype(np.float32)
    with pytest.raises(ConfigError, match="unique"):
        save_raw([("a", t), ("a", t)], str(tmp_path / "dup.twmx"))
