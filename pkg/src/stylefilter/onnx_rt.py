"""Self-contained ONNX model loader and CPU executor.

Parses the ONNX protobuf wire format directly and evaluates the small op
set a VGG-style feature stack needs (Conv, Relu, MaxPool), float32 only.
This keeps the inference path free of any external ONNX runtime; models
with other ops are rejected with a clear error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ExtractorError


class OnnxFormatError(ExtractorError):
    """File is not parseable as the supported ONNX subset."""


# ---------------------------------------------------------------------------
# protobuf wire format

_WIRE_VARINT = 0
_WIRE_64BIT = 1
_WIRE_LEN = 2
_WIRE_32BIT = 5


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise OnnxFormatError("truncated varint")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise OnnxFormatError("varint too long")


def _iter_fields(data: bytes):
    """Yield (field_number, wire_type, value) triples of one message.

    value is an int for varint/fixed fields and a bytes slice for
    length-delimited fields.
    """
    pos = 0
    n = len(data)
    while pos < n:
        key, pos = _read_varint(data, pos)
        field_no, wire_type = key >> 3, key & 0x07
        if wire_type == _WIRE_VARINT:
            value, pos = _read_varint(data, pos)
        elif wire_type == _WIRE_LEN:
            length, pos = _read_varint(data, pos)
            if pos + length > n:
                raise OnnxFormatError("truncated length-delimited field")
            value = data[pos:pos + length]
            pos += length
        elif wire_type == _WIRE_32BIT:
            value = int.from_bytes(data[pos:pos + 4], "little")
            pos += 4
        elif wire_type == _WIRE_64BIT:
            value = int.from_bytes(data[pos:pos + 8], "little")
            pos += 8
        else:
            raise OnnxFormatError(f"unsupported wire type {wire_type}")
        yield field_no, wire_type, value


def _varint_list(wire_type: int, value) -> list[int]:
    # repeated ints arrive either packed (one length-delimited blob) or one
    # by one as plain varints
    if wire_type == _WIRE_VARINT:
        return [value]
    out, pos = [], 0
    while pos < len(value):
        v, pos = _read_varint(value, pos)
        out.append(v)
    return out


def _signed(v: int) -> int:
    return v - (1 << 64) if v >= (1 << 63) else v


# ---------------------------------------------------------------------------
# model structure

_FLOAT = 1  # TensorProto.DataType.FLOAT


@dataclass
class OnnxNode:
    op_type: str
    name: str
    inputs: list[str]
    outputs: list[str]
    attrs: dict[str, object]


@dataclass
class OnnxModel:
    ir_version: int
    opset_version: int
    producer: str
    nodes: list[OnnxNode]
    initializers: dict[str, np.ndarray]
    inputs: list[tuple[str, list[object]]]  # (name, dims); dims entries int or str
    outputs: list[tuple[str, list[object]]]

    @property
    def input_names(self) -> list[str]:
        return [name for name, _ in self.inputs if name not in self.initializers]

    @property
    def output_names(self) -> list[str]:
        return [name for name, _ in self.outputs]


def _parse_tensor(data: bytes) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    name = ""
    dtype = _FLOAT
    raw: bytes | None = None
    floats: list[bytes] = []
    for fno, wt, val in _iter_fields(data):
        if fno == 1:
            dims.extend(_varint_list(wt, val))
        elif fno == 2:
            dtype = val
        elif fno == 8:
            name = val.decode("utf-8")
        elif fno == 9:
            raw = val
        elif fno == 4:
            floats.append(
                val if wt == _WIRE_LEN else int(val).to_bytes(4, "little")
            )
    if dtype != _FLOAT:
        raise OnnxFormatError(f"initializer {name!r}: only float32 supported")
    if raw is None:
        raw = b"".join(floats)
    arr = np.frombuffer(raw, dtype="<f4").reshape([int(d) for d in dims])
    return name, arr.astype(np.float32)


def _parse_attribute(data: bytes) -> tuple[str, object]:
    name = ""
    value: object = None
    ints: list[int] = []
    for fno, wt, val in _iter_fields(data):
        if fno == 1:
            name = val.decode("utf-8")
        elif fno == 2:  # single float
            value = np.frombuffer(int(val).to_bytes(4, "little"), "<f4")[0]
        elif fno == 3:  # single int
            value = _signed(val)
        elif fno == 4:  # string
            value = val.decode("utf-8")
        elif fno == 8:  # repeated ints
            ints.extend(_signed(v) for v in _varint_list(wt, val))
    if ints:
        value = ints
    return name, value


def _parse_value_info(data: bytes) -> tuple[str, list[object]]:
    name = ""
    dims: list[object] = []
    for fno, _, val in _iter_fields(data):
        if fno == 1:
            name = val.decode("utf-8")
        elif fno == 2:  # TypeProto
            for tfno, _, tval in _iter_fields(val):
                if tfno != 1:  # tensor_type
                    continue
                for ttfno, _, ttval in _iter_fields(tval):
                    if ttfno != 2:  # shape
                        continue
                    for sfno, _, sval in _iter_fields(ttval):
                        if sfno != 1:  # dim
                            continue
                        entry: object = -1
                        for dfno, _, dval in _iter_fields(sval):
                            if dfno == 1:
                                entry = _signed(dval)
                            elif dfno == 2:
                                entry = dval.decode("utf-8")
                        dims.append(entry)
    return name, dims


def _parse_node(data: bytes) -> OnnxNode:
    inputs: list[str] = []
    outputs: list[str] = []
    op_type = ""
    name = ""
    attrs: dict[str, object] = {}
    for fno, _, val in _iter_fields(data):
        if fno == 1:
            inputs.append(val.decode("utf-8"))
        elif fno == 2:
            outputs.append(val.decode("utf-8"))
        elif fno == 3:
            name = val.decode("utf-8")
        elif fno == 4:
            op_type = val.decode("utf-8")
        elif fno == 5:
            aname, avalue = _parse_attribute(val)
            attrs[aname] = avalue
    return OnnxNode(op_type=op_type, name=name, inputs=inputs,
                    outputs=outputs, attrs=attrs)


def _parse_graph(data: bytes):
    nodes: list[OnnxNode] = []
    initializers: dict[str, np.ndarray] = {}
    inputs: list[tuple[str, list[object]]] = []
    outputs: list[tuple[str, list[object]]] = []
    for fno, _, val in _iter_fields(data):
        if fno == 1:
            nodes.append(_parse_node(val))
        elif fno == 5:
            name, arr = _parse_tensor(val)
            initializers[name] = arr
        elif fno == 11:
            inputs.append(_parse_value_info(val))
        elif fno == 12:
            outputs.append(_parse_value_info(val))
    return nodes, initializers, inputs, outputs


def load_model(path: str) -> OnnxModel:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ExtractorError(f"cannot read model asset {path}: {exc}") from exc
    ir_version = 0
    opset_version = 0
    producer = ""
    graph = None
    try:
        for fno, _, val in _iter_fields(data):
            if fno == 1:
                ir_version = val
            elif fno == 2:
                producer = val.decode("utf-8")
            elif fno == 7:
                graph = val
            elif fno == 8:
                for ofno, _, oval in _iter_fields(val):
                    if ofno == 2:
                        opset_version = oval
        if graph is None:
            raise OnnxFormatError("no graph in model")
        nodes, initializers, inputs, outputs = _parse_graph(graph)
    except OnnxFormatError:
        raise
    except Exception as exc:
        raise OnnxFormatError(f"{path}: cannot parse as ONNX: {exc}") from exc
    return OnnxModel(
        ir_version=ir_version,
        opset_version=opset_version,
        producer=producer,
        nodes=nodes,
        initializers=initializers,
        inputs=inputs,
        outputs=outputs,
    )


# ---------------------------------------------------------------------------
# execution

def _conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None,
            pads: list[int], strides: list[int]) -> np.ndarray:
    n, c, h, wd = x.shape
    m, cw, kh, kw = w.shape
    if cw != c:
        raise ExtractorError(f"Conv channel mismatch: input {c}, weight {cw}")
    ph0, pw0, ph1, pw1 = pads
    sh, sw = strides
    xp = np.pad(x, ((0, 0), (0, 0), (ph0, ph1), (pw0, pw1)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::sh, ::sw]
    oh, ow = windows.shape[2], windows.shape[3]
    # im2col: (n, oh*ow, c*kh*kw) @ (c*kh*kw, m)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * kh * kw)
    kernel = w.reshape(m, c * kh * kw).T
    out = cols @ kernel
    if b is not None:
        out += b
    return out.transpose(0, 2, 1).reshape(n, m, oh, ow)


def _maxpool2d(x: np.ndarray, kernel: list[int], strides: list[int],
               pads: list[int]) -> np.ndarray:
    if any(pads):
        raise ExtractorError("MaxPool with padding not supported")
    kh, kw = kernel
    sh, sw = strides
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::sh, ::sw]
    return windows.max(axis=(4, 5))


def _get_attr(node: OnnxNode, name: str, default):
    return node.attrs.get(name, default)


def run_model(model: OnnxModel, feeds: dict[str, np.ndarray],
              outputs: list[str] | None = None) -> dict[str, np.ndarray]:
    """Evaluate the graph (nodes assumed topologically ordered)."""
    wanted = list(outputs) if outputs is not None else model.output_names
    values: dict[str, np.ndarray] = dict(model.initializers)
    for name in model.input_names:
        if name not in feeds:
            raise ExtractorError(f"missing feed for model input {name!r}")
    for name, arr in feeds.items():
        values[name] = np.asarray(arr, dtype=np.float32)

    for node in model.nodes:
        try:
            ins = [values[i] for i in node.inputs if i]
        except KeyError as exc:
            raise ExtractorError(
                f"node {node.name!r}: missing input {exc.args[0]!r} "
                "(graph not topologically ordered?)"
            ) from exc
        if node.op_type == "Conv":
            if _get_attr(node, "group", 1) != 1:
                raise ExtractorError("grouped Conv not supported")
            dil = _get_attr(node, "dilations", [1, 1])
            if any(d != 1 for d in dil):
                raise ExtractorError("dilated Conv not supported")
            kh, kw = ins[1].shape[2], ins[1].shape[3]
            pads = _get_attr(node, "pads", [0, 0, 0, 0])
            strides = _get_attr(node, "strides", [1, 1])
            bias = ins[2] if len(ins) > 2 else None
            result = _conv2d(ins[0], ins[1], bias, list(pads), list(strides))
        elif node.op_type == "Relu":
            result = np.maximum(ins[0], 0.0)
        elif node.op_type == "MaxPool":
            kernel = _get_attr(node, "kernel_shape", None)
            if kernel is None:
                raise ExtractorError("MaxPool without kernel_shape")
            strides = _get_attr(node, "strides", list(kernel))
            pads = _get_attr(node, "pads", [0, 0, 0, 0])
            result = _maxpool2d(ins[0], list(kernel), list(strides), list(pads))
        else:
            raise ExtractorError(
                f"unsupported op {node.op_type!r} in node {node.name!r}"
            )
        for out_name in node.outputs:
            values[out_name] = result

    missing = [w for w in wanted if w not in values]
    if missing:
        raise ExtractorError(f"model does not produce outputs {missing}")
    return {w: values[w] for w in wanted}
