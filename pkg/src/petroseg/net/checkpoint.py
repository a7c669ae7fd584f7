"""Versioned binary checkpoint format for the segmentation network.

Layout:

    bytes 0..7    magic "PSEGCKPT"
    bytes 8..11   format version, little-endian uint32
    bytes 12..15  header length L, little-endian uint32
    bytes 16..    header: canonical JSON (architecture + parameter manifest)
    then          parameter data, little-endian float32, manifest order

Round trips are bit-exact: parameters are stored verbatim as float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import InputError
from .model import SegNet

MAGIC = b"PSEGCKPT"
FORMAT_VERSION = 1


def save_checkpoint(net: SegNet, path) -> None:
    manifest = [[name, list(p.shape)] for name, p in net.named_parameters()]
    header = {
        "format_version": FORMAT_VERSION,
        "arch": {"channels": list(net.channels), "classes": net.classes},
        "params": manifest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for _, p in net.named_parameters():
            f.write(np.ascontiguousarray(p.detach().cpu().numpy(), dtype="<f4").tobytes())


def load_checkpoint(path) -> SegNet:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise InputError(f"checkpoint not found: {path}")
    if len(data) < 16 or data[:8] != MAGIC:
        raise InputError(f"{path}: not a checkpoint file (bad magic)")
    version, header_len = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported checkpoint format version {version}")
    if len(data) < 16 + header_len:
        raise InputError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(data[16 : 16 + header_len].decode("utf-8"))
        channels = tuple(header["arch"]["channels"])
        classes = int(header["arch"]["classes"])
        manifest = [(name, tuple(shape)) for name, shape in header["params"]]
    except (ValueError, KeyError, TypeError):
        raise InputError(f"{path}: malformed checkpoint header")
    net = SegNet(channels=channels, classes=classes)
    expected = [(name, tuple(p.shape)) for name, p in net.named_parameters()]
    if manifest != expected:
        raise InputError(f"{path}: checkpoint layer spec does not match the network definition")
    offset = 16 + header_len
    with torch.no_grad():
        for name, p in net.named_parameters():
            nbytes = p.numel() * 4
            if offset + nbytes > len(data):
                raise InputError(f"{path}: truncated checkpoint data at parameter {name}")
            values = np.frombuffer(data, dtype="<f4", count=p.numel(), offset=offset).reshape(tuple(p.shape))
            p.copy_(torch.from_numpy(values.copy()))
            offset += nbytes
    if offset != len(data):
        raise InputError(f"{path}: {len(data) - offset} trailing bytes after parameter data")
    return net
