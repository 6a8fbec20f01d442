"""Portable binary model files.

Layout (all little-endian): magic b"MGKD", uint32 version, uint8 feature
mode (0=pre, 1=in, 2=both), float64 dropout rate, uint32 encoder layer
count, then per layer (encoder layers first, classifier last) a shape
table entry of two uint32 dims followed by the weight matrix and the bias
vector as float64.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError
from .numcore import Layer, MlpModel

MAGIC = b"MGKD"
VERSION = 1
FEATURE_MODES = ("pre", "in", "both")


def _write_layer(fh, layer: Layer) -> None:
    rows, cols = layer.weights.shape
    fh.write(struct.pack("<II", rows, cols))
    fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def _read_layer(fh, path) -> Layer:
    head = fh.read(8)
    if len(head) != 8:
        raise ParseError(f"{path}: truncated layer header")
    rows, cols = struct.unpack("<II", head)
    wbytes = fh.read(rows * cols * 8)
    bbytes = fh.read(cols * 8)
    if len(wbytes) != rows * cols * 8 or len(bbytes) != cols * 8:
        raise ParseError(f"{path}: truncated layer data")
    weights = np.frombuffer(wbytes, dtype="<f8").reshape(rows, cols).copy()
    bias = np.frombuffer(bbytes, dtype="<f8").copy()
    return Layer(weights, bias)


def save_model(model: MlpModel, path, feature_mode: str = "pre") -> None:
    if feature_mode not in FEATURE_MODES:
        raise ParseError(f"unknown feature mode {feature_mode!r}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IBd", VERSION,
                             FEATURE_MODES.index(feature_mode),
                             model.dropout_rate))
        fh.write(struct.pack("<I", len(model.encoder)))
        for layer in model.encoder:
            _write_layer(fh, layer)
        _write_layer(fh, model.classifier)


def load_model(path) -> tuple[MlpModel, str]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ParseError(f"{path}: bad magic, not a model file")
        version, mode_code, dropout = struct.unpack("<IBd", fh.read(13))
        if version != VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        if mode_code >= len(FEATURE_MODES):
            raise ParseError(f"{path}: bad feature mode {mode_code}")
        (n_layers,) = struct.unpack("<I", fh.read(4))
        encoder = [_read_layer(fh, path) for _ in range(n_layers)]
        classifier = _read_layer(fh, path)
    input_dim = encoder[0].weights.shape[0] if encoder \
        else classifier.weights.shape[0]
    model = MlpModel(encoder, classifier, dropout, input_dim)
    return model, FEATURE_MODES[mode_code]
