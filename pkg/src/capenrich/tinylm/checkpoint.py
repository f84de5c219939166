"""Binary checkpoint format (magic "TLM1").

Layout: 4-byte magic, little-endian u32 header length, UTF-8 JSON
header, then raw float64 little-endian tensor data in manifest order
(all backbone tensors first, then prompt tables).  The header carries
the model config, the vocabulary (token list plus a sha256 digest for
quick mismatch checks), and the named tensor manifests.  Serialization
is canonical (sorted JSON keys), so identical states produce identical
bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InputError
from .config import TinyLMConfig
from .model import PromptTable

_MAGIC = b"TLM1"


def vocab_digest(tokens: list[str]) -> str:
    return hashlib.sha256("\x00".join(tokens).encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    config: TinyLMConfig
    params: dict[str, np.ndarray]
    prompts: dict[str, PromptTable] = field(default_factory=dict)
    vocab_tokens: list[str] = field(default_factory=list)

    def add_prompts(self, table: PromptTable) -> None:
        """Attach a prompt table; names are unique.  Replace a table by
        assigning into .prompts directly."""
        if table.name in self.prompts:
            raise InputError(f"checkpoint already has a prompt table {table.name!r}")
        self.prompts[table.name] = table


def backbone_bytes(ckpt: Checkpoint) -> bytes:
    """Concatenated raw bytes of every backbone tensor, manifest order.
    Used to assert the freeze guarantee exactly."""
    return b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in ckpt.params.values())


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    header = {
        "format": "TLM1",
        "config": asdict(ckpt.config),
        "vocab": ckpt.vocab_tokens,
        "vocab_sha256": vocab_digest(ckpt.vocab_tokens),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in ckpt.params.items()],
        "prompts": [
            {"name": name, "shape": list(t.vectors.shape)} for name, t in ckpt.prompts.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for v in ckpt.params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
        for t in ckpt.prompts.values():
            fh.write(np.ascontiguousarray(t.vectors, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    """Read and validate a TLM1 file.  Truncation, a bad magic, or a
    size mismatch raises InputError before any state is constructed."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    if len(blob) < 8 or blob[:4] != _MAGIC:
        raise InputError(f"{path}: not a TLM1 checkpoint (bad magic)")
    (hlen,) = struct.unpack_from("<I", blob, 4)
    if 8 + hlen > len(blob):
        raise InputError(f"{path}: truncated header")
    try:
        header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: malformed checkpoint header") from exc
    if header.get("format") != "TLM1":
        raise InputError(f"{path}: unsupported checkpoint format {header.get('format')!r}")

    try:
        config = TinyLMConfig(**header["config"])
        param_manifest = [(e["name"], tuple(e["shape"])) for e in header["params"]]
        prompt_manifest = [(e["name"], tuple(e["shape"])) for e in header["prompts"]]
        vocab_tokens = list(header["vocab"])
        digest = header["vocab_sha256"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: incomplete checkpoint header") from exc
    if vocab_digest(vocab_tokens) != digest:
        raise InputError(f"{path}: vocab digest mismatch")

    need = sum(int(np.prod(s)) for _, s in param_manifest)
    need += sum(int(np.prod(s)) for _, s in prompt_manifest)
    body = blob[8 + hlen :]
    if len(body) != need * 8:
        raise InputError(
            f"{path}: tensor payload is {len(body)} bytes, manifest needs {need * 8}"
        )

    off = 0
    params: dict[str, np.ndarray] = {}
    for name, shape in param_manifest:
        count = int(np.prod(shape))
        params[name] = (
            np.frombuffer(body, dtype="<f8", count=count, offset=off)
            .reshape(shape)
            .astype(np.float64)
        )
        off += count * 8
    prompts: dict[str, PromptTable] = {}
    for name, shape in prompt_manifest:
        count = int(np.prod(shape))
        vectors = (
            np.frombuffer(body, dtype="<f8", count=count, offset=off)
            .reshape(shape)
            .astype(np.float64)
        )
        off += count * 8
        prompts[name] = PromptTable(name, vectors)
    return Checkpoint(config=config, params=params, prompts=prompts, vocab_tokens=vocab_tokens)
