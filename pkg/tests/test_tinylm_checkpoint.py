import json
import struct

import numpy as np
import pytest

from capenrich.errors import InputError
from capenrich.tinylm import (
    Checkpoint,
    TinyLMConfig,
    backbone_bytes,
    init_params,
    init_prompts,
    load_checkpoint,
    save_checkpoint,
)

CFG = TinyLMConfig(
    vocab_size=8,
    d_model=16,
    n_heads=2,
    n_layers=1,
    d_ffn=24,
    max_seq=16,
    n_visual=2,
    embed_dim=8,
    seed=1,
)

VOCAB = ["[PAD]", "[BOS]", "[EOS]", "[SEP]", "[MASK]", "dog", "red", "mat"]


def _ckpt(with_prompts=True):
    params = init_params(CFG)
    ck = Checkpoint(config=CFG, params=params, vocab_tokens=list(VOCAB))
    if with_prompts:
        ck.add_prompts(init_prompts(CFG, 2, name="lp-0"))
        ck.add_prompts(init_prompts(CFG, 3, name="attr"))
    return ck


class TestRoundTrip:
    def test_everything_survives(self, tmp_path):
        ck = _ckpt()
        path = tmp_path / "m.tlm1"
        save_checkpoint(ck, str(path))
        back = load_checkpoint(str(path))
        assert back.config == CFG
        assert back.vocab_tokens == VOCAB
        assert set(back.params) == set(ck.params)
        for k in ck.params:
            assert np.array_equal(back.params[k], ck.params[k])
            assert back.params[k].dtype == np.float64
        assert set(back.prompts) == {"lp-0", "attr"}
        for name in back.prompts:
            assert np.array_equal(
                back.prompts[name].vectors, ck.prompts[name].vectors
            )

    def test_resave_is_byte_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.tlm1", tmp_path / "b.tlm1"
        save_checkpoint(_ckpt(), str(p1))
        save_checkpoint(load_checkpoint(str(p1)), str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_backbone_bytes_ignore_prompts(self, tmp_path):
        bare = _ckpt(with_prompts=False)
        full = _ckpt(with_prompts=True)
        assert backbone_bytes(bare) == backbone_bytes(full)

    def test_promptless_checkpoint(self, tmp_path):
        path = tmp_path / "m.tlm1"
        save_checkpoint(_ckpt(with_prompts=False), str(path))
        assert load_checkpoint(str(path)).prompts == {}


def _valid_blob(tmp_path):
    path = tmp_path / "m.tlm1"
    save_checkpoint(_ckpt(), str(path))
    return path, path.read_bytes()


class TestValidation:
    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_checkpoint(str(tmp_path / "nope.tlm1"))

    def test_bad_magic(self, tmp_path):
        path, blob = _valid_blob(tmp_path)
        path.write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(InputError, match="magic"):
            load_checkpoint(str(path))

    def test_truncated_header(self, tmp_path):
        path, blob = _valid_blob(tmp_path)
        path.write_bytes(blob[:10])
        with pytest.raises(InputError):
            load_checkpoint(str(path))

    def test_truncated_payload(self, tmp_path):
        path, blob = _valid_blob(tmp_path)
        path.write_bytes(blob[:-16])
        with pytest.raises(InputError, match="payload"):
            load_checkpoint(str(path))

    def test_trailing_bytes(self, tmp_path):
        path, blob = _valid_blob(tmp_path)
        path.write_bytes(blob + b"\x00" * 8)
        with pytest.raises(InputError, match="payload"):
            load_checkpoint(str(path))

    def test_malformed_header_json(self, tmp_path):
        path, blob = _valid_blob(tmp_path)
        (hlen,) = struct.unpack_from("<I", blob, 4)
        broken = blob[:8] + b"{" * hlen + blob[8 + hlen :]
        path.write_bytes(broken)
        with pytest.raises(InputError, match="header"):
            load_checkpoint(str(path))

    def test_wrong_format_tag(self, tmp_path):
        path, blob = _valid_blob(tmp_path)
        (hlen,) = struct.unpack_from("<I", blob, 4)
        header = json.loads(blob[8 : 8 + hlen])
        header["format"] = "TLM9"
        raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        # keep the byte budget identical by repacking the length field
        path.write_bytes(blob[:4] + struct.pack("<I", len(raw)) + raw + blob[8 + hlen :])
        with pytest.raises(InputError, match="format"):
            load_checkpoint(str(path))

    def test_vocab_digest_mismatch(self, tmp_path):
        path, blob = _valid_blob(tmp_path)
        (hlen,) = struct.unpack_from("<I", blob, 4)
        header = json.loads(blob[8 : 8 + hlen])
        header["vocab"][5] = "cat"
        raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        path.write_bytes(blob[:4] + struct.pack("<I", len(raw)) + raw + blob[8 + hlen :])
        with pytest.raises(InputError, match="digest"):
            load_checkpoint(str(path))

    def test_incomplete_header(self, tmp_path):
        path, blob = _valid_blob(tmp_path)
        (hlen,) = struct.unpack_from("<I", blob, 4)
        header = json.loads(blob[8 : 8 + hlen])
        del header["config"]
        raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        path.write_bytes(blob[:4] + struct.pack("<I", len(raw)) + raw + blob[8 + hlen :])
        with pytest.raises(InputError, match="header"):
            load_checkpoint(str(path))


class TestAddPrompts:
    def test_duplicate_name_rejected(self):
        ck = _ckpt()
        with pytest.raises(InputError, match="lp-0"):
            ck.add_prompts(init_prompts(CFG, 2, name="lp-0"))
