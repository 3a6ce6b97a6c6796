"""ONNX protobuf writer for sequential convolutional graphs.

Encodes the wire format directly (no onnx package needed): enough of
ModelProto/GraphProto/NodeProto to express Conv + Relu + MaxPool stacks
with float32 initializers and named outputs. A matching lightweight
reader backs the `verify` subcommand so emitted assets can be inspected
from the file alone.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

# wire types
_VARINT = 0
_LEN = 2

_FLOAT32 = 1  # TensorProto.DataType.FLOAT
_ATTR_INTS = 7  # AttributeProto.AttributeType.INTS


def _varint(value: int) -> bytes:
    out = bytearray()
    while True:
        bits = value & 0x7F
        value >>= 7
        if value:
            out.append(bits | 0x80)
        else:
            out.append(bits)
            return bytes(out)


def _tag(field_no: int, wire_type: int) -> bytes:
    return _varint((field_no << 3) | wire_type)


def _len_field(field_no: int, payload: bytes) -> bytes:
    return _tag(field_no, _LEN) + _varint(len(payload)) + payload


def _str_field(field_no: int, text: str) -> bytes:
    return _len_field(field_no, text.encode("utf-8"))


def _int_field(field_no: int, value: int) -> bytes:
    return _tag(field_no, _VARINT) + _varint(value)


def _attr_ints(name: str, values: list[int]) -> bytes:
    body = _str_field(1, name)
    for v in values:
        body += _int_field(8, v)
    body += _int_field(20, _ATTR_INTS)
    return body


def _tensor(name: str, array: np.ndarray) -> bytes:
    body = b""
    for dim in array.shape:
        body += _int_field(1, dim)
    body += _int_field(2, _FLOAT32)
    body += _str_field(8, name)
    body += _len_field(9, np.ascontiguousarray(array, dtype="<f4").tobytes())
    return body


def _value_info(name: str, dims: list[int | str]) -> bytes:
    shape = b""
    for dim in dims:
        if isinstance(dim, str):
            entry = _str_field(2, dim)  # dim_param (symbolic)
        else:
            entry = _int_field(1, dim)  # dim_value
        shape += _len_field(1, entry)
    tensor_type = _int_field(1, _FLOAT32) + _len_field(2, shape)
    return _str_field(1, name) + _len_field(2, _len_field(1, tensor_type))


@dataclass
class GraphBuilder:
    input_name: str
    input_shape: list[int | str]
    producer: str = "sf-model-export"
    _nodes: list[bytes] = field(default_factory=list)
    _initializers: list[bytes] = field(default_factory=list)
    _outputs: list[bytes] = field(default_factory=list)
    _counter: int = 0

    def _next(self, prefix: str) -> str:
        self._counter += 1
        return f"{prefix}_{self._counter}"

    def _node(self, op: str, inputs: list[str], output: str,
              attrs: list[bytes]) -> str:
        body = b""
        for name in inputs:
            body += _str_field(1, name)
        body += _str_field(2, output)
        body += _str_field(3, f"{op.lower()}_{self._counter}")
        body += _str_field(4, op)
        for attr in attrs:
            body += _len_field(5, attr)
        self._nodes.append(body)
        return output

    def add_conv(self, x: str, weight: np.ndarray, bias: np.ndarray,
                 pads: tuple[int, int] = (1, 1),
                 strides: tuple[int, int] = (1, 1),
                 output: str | None = None) -> str:
        out = output or self._next("conv")
        w_name, b_name = out + "_w", out + "_b"
        self._initializers.append(_tensor(w_name, weight))
        self._initializers.append(_tensor(b_name, bias))
        attrs = [
            _attr_ints("kernel_shape", [weight.shape[2], weight.shape[3]]),
            _attr_ints("pads", [pads[0], pads[1], pads[0], pads[1]]),
            _attr_ints("strides", list(strides)),
            _attr_ints("dilations", [1, 1]),
        ]
        return self._node("Conv", [x, w_name, b_name], out, attrs)

    def add_relu(self, x: str, output: str | None = None) -> str:
        return self._node("Relu", [x], output or self._next("relu"), [])

    def add_maxpool(self, x: str, kernel: int = 2, stride: int = 2,
                    output: str | None = None) -> str:
        attrs = [
            _attr_ints("kernel_shape", [kernel, kernel]),
            _attr_ints("strides", [stride, stride]),
        ]
        return self._node("MaxPool", [x], output or self._next("pool"), attrs)

    def mark_output(self, name: str, dims: list[int | str]) -> None:
        self._outputs.append(_value_info(name, dims))

    def serialize(self, opset: int = 13, ir_version: int = 8) -> bytes:
        graph = b""
        for node in self._nodes:
            graph += _len_field(1, node)
        graph += _str_field(2, "vgg_style_taps")
        for tensor in self._initializers:
            graph += _len_field(5, tensor)
        graph += _len_field(11, _value_info(self.input_name, self.input_shape))
        for out in self._outputs:
            graph += _len_field(12, out)
        opset_import = _str_field(1, "") + _int_field(2, opset)
        return (
            _int_field(1, ir_version)
            + _str_field(2, self.producer)
            + _str_field(3, "0.1.0")
            + _len_field(7, graph)
            + _len_field(8, opset_import)
        )


# ---------------------------------------------------------------------------
# read-back inspection

def _iter_fields(data: bytes):
    pos, n = 0, len(data)
    while pos < n:
        key = 0
        shift = 0
        while True:
            byte = data[pos]
            pos += 1
            key |= (byte & 0x7F) << shift
            if not byte & 0x80:
                break
            shift += 7
        field_no, wire_type = key >> 3, key & 0x07
        if wire_type == _VARINT:
            value = 0
            shift = 0
            while True:
                byte = data[pos]
                pos += 1
                value |= (byte & 0x7F) << shift
                if not byte & 0x80:
                    break
                shift += 7
        elif wire_type == _LEN:
            length = 0
            shift = 0
            while True:
                byte = data[pos]
                pos += 1
                length |= (byte & 0x7F) << shift
                if not byte & 0x80:
                    break
                shift += 7
            value = data[pos:pos + length]
            pos += length
        elif wire_type == 5:
            value = data[pos:pos + 4]
            pos += 4
        elif wire_type == 1:
            value = data[pos:pos + 8]
            pos += 8
        else:
            raise ValueError(f"unsupported wire type {wire_type}")
        yield field_no, wire_type, value


def _read_value_info(data: bytes) -> tuple[str, list[int | str]]:
    name, dims = "", []
    for fno, _, val in _iter_fields(data):
        if fno == 1:
            name = val.decode()
        elif fno == 2:
            for tfno, _, tval in _iter_fields(val):
                if tfno != 1:
                    continue
                for ttfno, _, ttval in _iter_fields(tval):
                    if ttfno != 2:
                        continue
                    for sfno, _, sval in _iter_fields(ttval):
                        if sfno != 1:
                            continue
                        for dfno, _, dval in _iter_fields(sval):
                            if dfno == 1:
                                dims.append(int(dval))
                            elif dfno == 2:
                                dims.append(dval.decode())
    return name, dims


@dataclass
class AssetSummary:
    opset: int
    ir_version: int
    producer: str
    op_counts: Counter
    n_initializers: int
    inputs: list[tuple[str, list[int | str]]]
    outputs: list[tuple[str, list[int | str]]]


def inspect_asset(path: str) -> AssetSummary:
    with open(path, "rb") as fh:
        data = fh.read()
    opset = ir_version = 0
    producer = ""
    ops: Counter = Counter()
    n_init = 0
    inputs: list[tuple[str, list[int | str]]] = []
    outputs: list[tuple[str, list[int | str]]] = []
    for fno, _, val in _iter_fields(data):
        if fno == 1:
            ir_version = val
        elif fno == 2:
            producer = val.decode()
        elif fno == 8:
            for ofno, _, oval in _iter_fields(val):
                if ofno == 2:
                    opset = oval
        elif fno == 7:
            for gfno, _, gval in _iter_fields(val):
                if gfno == 1:
                    for nfno, _, nval in _iter_fields(gval):
                        if nfno == 4:
                            ops[nval.decode()] += 1
                elif gfno == 5:
                    n_init += 1
                elif gfno == 11:
                    inputs.append(_read_value_info(gval))
                elif gfno == 12:
                    outputs.append(_read_value_info(gval))
    return AssetSummary(opset=opset, ir_version=ir_version, producer=producer,
                        op_counts=ops, n_initializers=n_init,
                        inputs=inputs, outputs=outputs)
