import numpy as np
import pytest

from conceptmem.errors import CheckpointError
from conceptmem.params import (
    ParamSet,
    glorot_uniform,
    load_checkpoint,
    read_checkpoint_header,
    save_checkpoint,
)
from conceptmem.rng import Xoshiro256


def small_pset(seed=0):
    rng = Xoshiro256(seed)
    ps = ParamSet()
    ps.add("w", rng.uniform_array((3, 4), -1, 1))
    ps.add("b", rng.uniform_array((4,), -1, 1))
    ps.add_state("running", rng.uniform_array((4,), 0, 1))
    return ps


def test_round_trip_bit_exact(tmp_path):
    ps = small_pset(1)
    path = str(tmp_path / "a.ckpt")
    save_checkpoint(path, ps, {"note": "x", "k": 3})
    other = small_pset(2)
    meta = load_checkpoint(path, other)
    assert meta == {"note": "x", "k": 3}
    for name in ps.params:
        assert np.array_equal(ps.params[name].value, other.params[name].value)
    assert np.array_equal(ps.state["running"], other.state["running"])
    # byte-level determinism: saving the same set twice gives identical files
    path2 = str(tmp_path / "b.ckpt")
    save_checkpoint(path2, ps, {"note": "x", "k": 3})
    assert open(path, "rb").read() == open(path2, "rb").read()


def test_header_readable_without_loading(tmp_path):
    ps = small_pset(3)
    path = str(tmp_path / "a.ckpt")
    save_checkpoint(path, ps, {"tag": "t"})
    meta, entries = read_checkpoint_header(path)
    assert meta["tag"] == "t"
    names = {e["name"] for e in entries}
    assert names == {"w", "b", "running"}
    by_name = {e["name"]: e for e in entries}
    assert tuple(by_name["w"]["shape"]) == (3, 4)
    assert by_name["running"]["kind"] == "state"


def test_strict_load_rejects_name_mismatch(tmp_path):
    ps = small_pset(1)
    path = str(tmp_path / "a.ckpt")
    save_checkpoint(path, ps)
    other = ParamSet()
    other.add("w", np.zeros((3, 4)))
    with pytest.raises(CheckpointError):
        load_checkpoint(path, other, strict=True)


def test_nonstrict_load_transplants_intersection(tmp_path):
    ps = small_pset(1)
    path = str(tmp_path / "a.ckpt")
    save_checkpoint(path, ps)
    other = ParamSet()
    other.add("w", np.zeros((3, 4)))
    other.add("extra", np.ones(2))
    load_checkpoint(path, other, strict=False)
    assert np.array_equal(other.params["w"].value, ps.params["w"].value)
    assert np.array_equal(other.params["extra"].value, np.ones(2))


def test_load_rejects_bad_magic(tmp_path):
    path = str(tmp_path / "junk.ckpt")
    with open(path, "wb") as fh:
        fh.write(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, small_pset())


def test_shape_mismatch_rejected(tmp_path):
    ps = small_pset(1)
    path = str(tmp_path / "a.ckpt")
    save_checkpoint(path, ps)
    other = small_pset(2)
    other.params["w"].value = np.zeros((4, 3))
    with pytest.raises(CheckpointError):
        load_checkpoint(path, other)


def test_merge_and_subset_share_storage():
    inner = ParamSet()
    inner.add("w", np.zeros((2, 2)))
    inner.add_state("s", np.zeros(2))
    outer = ParamSet()
    outer.merge(inner, "enc")
    view = outer.subset("enc")
    # same Node object and same state buffer, not copies
    view.params["w"].value[0, 0] = 7.0
    assert outer.params["enc.w"].value[0, 0] == 7.0
    view.state["s"][1] = 3.0
    assert outer.state["enc.s"][1] == 3.0


def test_zero_grad_and_n_scalars():
    ps = small_pset(4)
    assert ps.n_scalars() == 3 * 4 + 4
    from conceptmem import autodiff as ad

    ad.backward(ad.sum_all(ps.params["w"]))
    assert ps.params["w"].grad is not None
    ps.zero_grad()
    assert ps.params["w"].grad is None


def test_glorot_bounds():
    rng = Xoshiro256(8)
    w = glorot_uniform(rng, (64, 32), fan_in=64, fan_out=32)
    a = np.sqrt(6.0 / (64 + 32))
    assert np.all(np.abs(w) <= a)
    assert w.std() > a / 4  # actually spread out, not collapsed
