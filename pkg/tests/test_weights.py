import struct

import numpy as np
import pytest

from angioseg.weights import MAGIC, WeightFileError, WeightStore, weightstore_load, weightstore_save


def test_empty_store_round_trip():
    blob = weightstore_save(WeightStore())
    assert blob.startswith(MAGIC)
    (hlen,) = struct.unpack("<Q", blob[len(MAGIC) : len(MAGIC) + 8])
    assert len(blob) == len(MAGIC) + 8 + hlen
    assert len(weightstore_load(blob)) == 0


def test_single_tensor_round_trip():
    s = WeightStore({"a": np.array([[1.0, 2.0], [3.0, 4.0]])})
    t = weightstore_load(weightstore_save(s))
    np.testing.assert_array_equal(t["a"], s["a"])
    assert t["a"].dtype == np.float64


def test_many_tensors_random_order(rng):
    names = [f"layer{i}.w" for i in range(50)]
    rng.shuffle(names)
    s = WeightStore()
    for n in names:
        shape = tuple(rng.integers(1, 4, size=rng.integers(1, 5)))
        s.add(n, rng.normal(size=shape).astype(np.float32))
    t = weightstore_load(weightstore_save(s))
    assert sorted(t) == sorted(names)
    for n in names:
        assert t[n].shape == s[n].shape
        np.testing.assert_array_equal(t[n], s[n])


def test_idempotent_bytes(rng):
    s = WeightStore({"x": rng.normal(size=(3, 2)), "y": rng.normal(size=5)})
    s.add("z", rng.normal(size=(2, 2)), "f64")
    b1 = weightstore_save(s)
    assert weightstore_save(weightstore_load(b1)) == b1


def test_f64_entries_exact(rng):
    v = rng.normal(size=7)
    s = WeightStore()
    s.add("v", v, "f64")
    np.testing.assert_array_equal(weightstore_load(weightstore_save(s))["v"], v)


def test_missing_key_is_named():
    with pytest.raises(KeyError, match="nope"):
        WeightStore()["nope"]


def test_duplicate_add_rejected():
    s = WeightStore({"a": np.ones(2)})
    with pytest.raises(WeightFileError, match="a"):
        s.add("a", np.ones(2))


def _header_blob(lines, payload=b""):
    header = "".join(l + "\n" for l in lines).encode()
    return MAGIC + struct.pack("<Q", len(header)) + header + payload


def test_truncated_payload_names_entry():
    blob = _header_blob(["w\tf32\t4\t0"], b"\0" * 8)
    with pytest.raises(WeightFileError, match="w"):
        weightstore_load(blob)


def test_truncated_header():
    blob = weightstore_save(WeightStore({"a": np.ones(3)}))
    with pytest.raises(WeightFileError):
        weightstore_load(blob[: len(MAGIC) + 4])


def test_duplicate_names_in_file():
    blob = _header_blob(["w\tf32\t1\t0", "w\tf32\t1\t4"], b"\0" * 8)
    with pytest.raises(WeightFileError, match="w"):
        weightstore_load(blob)


def test_overlapping_offsets_name_entry():
    blob = _header_blob(["a\tf32\t2\t0", "b\tf32\t2\t4"], b"\0" * 12)
    with pytest.raises(WeightFileError, match="b"):
        weightstore_load(blob)


def test_bad_magic():
    with pytest.raises(WeightFileError):
        weightstore_load(b"NOTSFD" + b"\0" * 16)
