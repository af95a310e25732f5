"""Checkpoint container: roundtrip fidelity, strictness, corruption."""

import numpy as np
import pytest

from paag import checkpoint
from paag.autograd import Tensor
from paag.errors import CheckpointError


def params_fixture(rng):
    return {
        "layer.weight": Tensor(rng.standard_normal((4, 3)), requires_grad=True),
        "layer.bias": Tensor(rng.standard_normal(3), requires_grad=True),
        "gate.bias": Tensor(rng.standard_normal(()), requires_grad=True),
    }


def test_roundtrip_preserves_values_and_scalars(tmp_path, rng):
    params = params_fixture(rng)
    path = tmp_path / "model.paag"
    checkpoint.save(path, params, meta={"note": "x"})
    arrays, meta = checkpoint.load(path)
    assert meta == {"note": "x"}
    assert arrays["gate.bias"].shape == ()
    for name, p in params.items():
        np.testing.assert_array_equal(arrays[name], p.data)


def test_restore_overwrites_in_place(tmp_path, rng):
    params = params_fixture(rng)
    path = tmp_path / "model.paag"
    checkpoint.save(path, params)
    fresh = params_fixture(np.random.default_rng(99))
    arrays, _ = checkpoint.load(path)
    checkpoint.restore(fresh, arrays)
    for name in params:
        np.testing.assert_array_equal(fresh[name].data, params[name].data)


def test_save_is_byte_deterministic(tmp_path, rng):
    params = params_fixture(rng)
    a, b = tmp_path / "a.paag", tmp_path / "b.paag"
    checkpoint.save(a, params, meta={"k": 1})
    checkpoint.save(b, params, meta={"k": 1})
    assert a.read_bytes() == b.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.paag"
    path.write_bytes(b"NOTAP" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint.load(path)


def test_corrupt_header_rejected(tmp_path, rng):
    params = params_fixture(rng)
    path = tmp_path / "model.paag"
    checkpoint.save(path, params)
    blob = bytearray(path.read_bytes())
    blob[len(checkpoint.MAGIC) + 8] = ord("!")  # break the JSON
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="header"):
        checkpoint.load(path)


def test_truncated_body_rejected(tmp_path, rng):
    params = params_fixture(rng)
    path = tmp_path / "model.paag"
    checkpoint.save(path, params)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        checkpoint.load(path)


def test_unsupported_dtype_rejected(tmp_path, rng):
    params = params_fixture(rng)
    path = tmp_path / "model.paag"
    checkpoint.save(path, params)
    blob = path.read_bytes()
    path.write_bytes(blob.replace(b"<f8", b"<f4"))
    with pytest.raises(CheckpointError, match="dtype"):
        checkpoint.load(path)


def test_restore_rejects_name_mismatch(tmp_path, rng):
    params = params_fixture(rng)
    path = tmp_path / "model.paag"
    checkpoint.save(path, params)
    arrays, _ = checkpoint.load(path)
    del arrays["layer.bias"]
    arrays["other.bias"] = np.zeros(3)
    with pytest.raises(CheckpointError) as err:
        checkpoint.restore(params, arrays)
    assert "layer.bias" in str(err.value) and "other.bias" in str(err.value)


def test_restore_rejects_shape_mismatch(tmp_path, rng):
    params = params_fixture(rng)
    path = tmp_path / "model.paag"
    checkpoint.save(path, params)
    arrays, _ = checkpoint.load(path)
    arrays["layer.weight"] = arrays["layer.weight"][:2]
    with pytest.raises(CheckpointError, match="layer.weight"):
        checkpoint.restore(params, arrays)
