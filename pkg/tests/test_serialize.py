"""Model container round-trips and strict metadata validation."""

import numpy as np
import pytest

from eegbench.architectures import build
from eegbench.errors import DataFormatError
from eegbench.jsonutil import read_json, write_canonical_json
from eegbench.tensornn.serialize import MODEL_BIN, MODEL_META, load_model, save_model


@pytest.fixture
def saved(tmp_path):
    net = build("eegnet_v2", n_channels=4, n_samples=64, n_classes=2, seed=11)
    save_model(net, tmp_path, architecture="eegnet_v2", seed=11)
    return net, tmp_path


def test_round_trip_bit_exact(saved):
    net, path = saved
    loaded, meta = load_model(path)
    assert meta["architecture"] == "eegnet_v2"
    assert meta["seed"] == 11
    assert loaded.input_shape == net.input_shape
    for (i, name, p), (j, name2, q) in zip(net.parameters(), loaded.parameters()):
        assert (i, name) == (j, name2)
        np.testing.assert_array_equal(p, q)
    for (i, name, s), (j, name2, t) in zip(net.state_buffers(), loaded.state_buffers()):
        assert (i, name) == (j, name2)
        np.testing.assert_array_equal(s, t)


def test_save_is_deterministic(saved, tmp_path):
    net, path = saved
    other = tmp_path / "again"
    other.mkdir()
    save_model(net, other, architecture="eegnet_v2", seed=11)
    assert (other / MODEL_BIN).read_bytes() == (path / MODEL_BIN).read_bytes()
    assert (other / MODEL_META).read_text() == (path / MODEL_META).read_text()


def test_loaded_model_predicts_identically(saved):
    net, path = saved
    loaded, _ = load_model(path)
    x = np.random.default_rng(3).normal(0, 1, (3, 1, 4, 64)).astype(np.float32)
    np.testing.assert_array_equal(net.forward(x), loaded.forward(x))


def test_reject_unknown_meta_key(saved):
    _, path = saved
    meta = read_json(path / MODEL_META)
    meta["vendor"] = "acme"
    write_canonical_json(path / MODEL_META, meta)
    with pytest.raises(DataFormatError) as info:
        load_model(path)
    assert "vendor" in str(info.value)


def test_reject_missing_meta_key(saved):
    _, path = saved
    meta = read_json(path / MODEL_META)
    del meta["n_classes"]
    write_canonical_json(path / MODEL_META, meta)
    with pytest.raises(DataFormatError) as info:
        load_model(path)
    assert "n_classes" in str(info.value)


def test_reject_short_blob(saved):
    _, path = saved
    blob = (path / MODEL_BIN).read_bytes()
    (path / MODEL_BIN).write_bytes(blob[:-8])
    with pytest.raises(DataFormatError):
        load_model(path)


def test_reject_trailing_bytes(saved):
    _, path = saved
    blob = (path / MODEL_BIN).read_bytes()
    (path / MODEL_BIN).write_bytes(blob + b"\x00\x00\x00\x00")
    with pytest.raises(DataFormatError):
        load_model(path)


def test_reject_float64_network(tmp_path):
    net = build("eegnet_v2", n_channels=4, n_samples=64, n_classes=2, seed=1,
                dtype=np.float64)
    with pytest.raises(DataFormatError):
        save_model(net, tmp_path, architecture="eegnet_v2", seed=1)


def test_reject_missing_files(tmp_path):
    with pytest.raises(DataFormatError):
        load_model(tmp_path)
