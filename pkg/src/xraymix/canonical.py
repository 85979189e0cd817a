"""Byte-deterministic JSON rendering.

Keys are sorted, separators fixed, strings UTF-8 and every float printed with
exactly six decimals so that equal values always serialize to equal bytes.
"""

import json
import math

FLOAT_DECIMALS = 6


def _render(value, out):
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(int(value)))
    elif isinstance(value, float):
        if not math.isfinite(value):
            # JSON has no infinities; emit a string sentinel instead.
            out.append(json.dumps("inf" if value > 0 else ("-inf" if value < 0 else "nan")))
        else:
            text = f"{value:.{FLOAT_DECIMALS}f}"
            out.append("0.000000" if text == "-0.000000" else text)
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value, key=str)):
            if i:
                out.append(",")
            out.append(json.dumps(str(key), ensure_ascii=False))
            out.append(":")
            _render(value[key], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _render(item, out)
        out.append("]")
    elif hasattr(value, "item"):
        _render(value.item(), out)
    else:
        raise TypeError(f"cannot canonicalize {type(value).__name__}")


def dumps(value) -> str:
    out = []
    _render(value, out)
    return "".join(out) + "\n"


def dump_bytes(value) -> bytes:
    return dumps(value).encode("utf-8")
