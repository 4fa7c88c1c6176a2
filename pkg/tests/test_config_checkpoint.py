import struct

import numpy as np
import pytest

from hypekg import checkpoint as ck
from hypekg import model as M
from hypekg.config import RunConfig
from hypekg.errors import DataError, UsageError


def test_text_round_trip():
    cfg = RunConfig(d=8, lr=0.003, query_mix="1t,2i", trainable_curvature=True)
    text = cfg.to_text()
    assert "d: int = 8" in text and "trainable_curvature: bool = true" in text
    back = RunConfig.from_text(text)
    assert back == cfg and back.to_text() == text
    assert back.structures == ("1t", "2i")
    assert RunConfig.from_text("# only a comment\n") == RunConfig()


@pytest.mark.parametrize("text, match", [
    ("d = 3", "expected"),
    ("width: int = 3", "unknown key"),
    ("d: float = 3", "type"),
    ("d: int = three", "cannot read"),
    ("deterministic: bool = yes", "true or false"),
])
def test_text_errors(text, match):
    with pytest.raises(UsageError, match=match):
        RunConfig.from_text(text)


def test_load_checks_dataset(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(f"dataset: str = {tmp_path / 'missing.tsv'}\n")
    with pytest.raises(DataError):
        RunConfig.load(p)
    with pytest.raises(DataError):
        RunConfig.load(tmp_path / "absent.cfg")


def _ckpt(trainable=False):
    cfg = RunConfig(d=3, trainable_curvature=trainable)
    store = M.ParameterStore.init(4, 2, cfg.model_config(), 0)
    return ck.Checkpoint(store, ["a", "b", "c", "d"], ["r", "s"], cfg, 7, {"final_loss": 0.5})


@pytest.mark.parametrize("trainable", [False, True])
def test_checkpoint_round_trip(tmp_path, trainable):
    c = _ckpt(trainable)
    p = tmp_path / "m.ckpt"
    ck.save(p, c)
    back = ck.load(p)
    assert back.entities == c.entities and back.relations == c.relations
    assert back.config == c.config and back.step == 7
    for k, v in c.store.arrays.items():
        assert np.array_equal(back.store.arrays[k], v)
    q = tmp_path / "again.ckpt"
    ck.save(q, back)
    assert p.read_bytes() == q.read_bytes()
    assert (tmp_path / "m.ckpt.json").read_bytes() == (tmp_path / "again.ckpt.json").read_bytes()


def test_checkpoint_rejects_damage(tmp_path):
    p = tmp_path / "m.ckpt"
    ck.save(p, _ckpt())
    raw = bytearray(p.read_bytes())
    newer = raw.copy()
    struct.pack_into("<I", newer, 4, ck.VERSION + 1)
    p.write_bytes(bytes(newer))
    with pytest.raises(DataError, match="newer"):
        ck.load(p)
    p.write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(DataError, match="magic"):
        ck.load(p)
    p.write_bytes(bytes(raw[:-8]))
    with pytest.raises(DataError, match="bytes"):
        ck.load(p)


def test_check_config_warns(caplog):
    c = _ckpt()
    assert ck.check_config(c, c.config)
    assert not ck.check_config(c, c.config.replace(lr=0.5))
    assert "digest" in caplog.text
