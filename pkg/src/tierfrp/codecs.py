"""Serialization codecs for values crossing the client/session network boundary.

A codec maps between in-memory values and JSON-able forms. Crossing nodes
reference codecs by name; the registry resolves those names when a graph is
finalized, so both engine roles and any foreign client agree on the format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .clients import Connected, Disconnected


class CodecError(ValueError):
    """A value failed to encode or decode under a codec."""


@dataclass(frozen=True)
class Codec:
    name: str
    encode: Callable[[Any], Any]
    decode: Callable[[Any], Any]

    def __repr__(self) -> str:
        return f"Codec({self.name!r})"


def canonical_json(obj: Any) -> str:
    """Canonical textual form: sorted keys, no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_json_bytes(obj: Any) -> bytes:
    return canonical_json(obj).encode("utf-8")


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise CodecError(msg)


def _int_decode(v):
    _check(isinstance(v, int) and not isinstance(v, bool), f"expected integer, got {v!r}")
    return v


def _float_decode(v):
    _check(isinstance(v, (int, float)) and not isinstance(v, bool), f"expected number, got {v!r}")
    return float(v)


def _str_decode(v):
    _check(isinstance(v, str), f"expected string, got {v!r}")
    return v


def _bool_decode(v):
    _check(isinstance(v, bool), f"expected boolean, got {v!r}")
    return v


def _unit_decode(v):
    _check(v is None, f"expected null, got {v!r}")
    return None


# Composite constructors are memoized on the derived name so repeated
# compositions hand back the identical object (the registry insists that one
# name means one codec).
_composites: dict[str, Codec] = {}


def _memo(codec: Codec) -> Codec:
    return _composites.setdefault(codec.name, codec)


INT = Codec("int", lambda v: v, _int_decode)
FLOAT = Codec("float", lambda v: float(v), _float_decode)
STR = Codec("str", lambda v: v, _str_decode)
BOOL = Codec("bool", lambda v: v, _bool_decode)
UNIT = Codec("unit", lambda v: None, _unit_decode)
# Pass-through for values that are already JSON-able; no validation beyond
# what json serialization itself enforces at send time.
JSON = Codec("json", lambda v: v, lambda v: v)
CLIENT = Codec("client", lambda v: str(v), _str_decode)


def list_of(item: Codec) -> Codec:
    def enc(v):
        return [item.encode(x) for x in v]

    def dec(v):
        _check(isinstance(v, list), f"expected list, got {v!r}")
        return [item.decode(x) for x in v]

    return _memo(Codec(f"list<{item.name}>", enc, dec))


def tuple_of(*items: Codec) -> Codec:
    def enc(v):
        _check(len(v) == len(items), f"expected {len(items)}-tuple, got {v!r}")
        return [c.encode(x) for c, x in zip(items, v)]

    def dec(v):
        _check(isinstance(v, list) and len(v) == len(items), f"expected {len(items)}-element list, got {v!r}")
        return tuple(c.decode(x) for c, x in zip(items, v))

    return _memo(Codec("tuple<%s>" % ",".join(c.name for c in items), enc, dec))


def set_of(item: Codec) -> Codec:
    def enc(v):
        return sorted((item.encode(x) for x in v), key=canonical_json)

    def dec(v):
        _check(isinstance(v, list), f"expected list, got {v!r}")
        return frozenset(item.decode(x) for x in v)

    return _memo(Codec(f"set<{item.name}>", enc, dec))


def map_of(key: Codec, value: Codec) -> Codec:
    """Maps encode as [k, v] pairs sorted by encoded key, so any key type works."""

    def enc(v):
        pairs = [[key.encode(k), value.encode(x)] for k, x in v.items()]
        pairs.sort(key=lambda p: canonical_json(p[0]))
        return pairs

    def dec(v):
        _check(isinstance(v, list), f"expected pair list, got {v!r}")
        out = {}
        for p in v:
            _check(isinstance(p, list) and len(p) == 2, f"expected [key, value] pair, got {p!r}")
            out[key.decode(p[0])] = value.decode(p[1])
        return out

    return _memo(Codec(f"map<{key.name},{value.name}>", enc, dec))


def optional_of(item: Codec) -> Codec:
    """None encodes as null; a present value is wrapped in a one-element list."""

    def enc(v):
        return None if v is None else [item.encode(v)]

    def dec(v):
        if v is None:
            return None
        _check(isinstance(v, list) and len(v) == 1, f"expected null or [value], got {v!r}")
        return item.decode(v[0])

    return _memo(Codec(f"option<{item.name}>", enc, dec))


def record_of(name: str, ctor: Callable[..., Any], fields: Mapping[str, Codec]) -> Codec:
    """Codec for a record-like object with named attributes (dataclasses fit)."""
    field_items = tuple(fields.items())

    def enc(v):
        return {fname: c.encode(getattr(v, fname)) for fname, c in field_items}

    def dec(v):
        _check(isinstance(v, dict), f"expected object, got {v!r}")
        kwargs = {}
        for fname, c in field_items:
            _check(fname in v, f"record {name!r} missing field {fname!r}")
            kwargs[fname] = c.decode(v[fname])
        return ctor(**kwargs)

    return Codec(name, enc, dec)


def variant_of(name: str, alternatives: Mapping[str, tuple[type, Codec]]) -> Codec:
    """Tagged-union codec: encodes as {"t": tag, "p": payload}."""
    by_type = {cls: (tag, codec) for tag, (cls, codec) in alternatives.items()}

    def enc(v):
        try:
            tag, codec = by_type[type(v)]
        except KeyError:
            raise CodecError(f"value {v!r} is not an alternative of variant {name!r}")
        return {"t": tag, "p": codec.encode(v)}

    def dec(v):
        _check(isinstance(v, dict) and "t" in v, f"expected tagged object, got {v!r}")
        tag = v["t"]
        _check(tag in alternatives, f"unknown tag {tag!r} for variant {name!r}")
        _, codec = alternatives[tag]
        return codec.decode(v.get("p"))

    return Codec(name, enc, dec)


CLIENT_CHANGE = variant_of(
    "client_change",
    {
        "connected": (Connected, record_of("connected", Connected, {"client": CLIENT})),
        "disconnected": (Disconnected, record_of("disconnected", Disconnected, {"client": CLIENT})),
    },
)


class CodecRegistry:
    """Name-keyed codec table; crossing nodes resolve codecs here at finalization."""

    def __init__(self) -> None:
        self._codecs: dict[str, Codec] = {}

    def register(self, codec: Codec) -> Codec:
        existing = self._codecs.get(codec.name)
        if existing is not None and existing is not codec:
            raise CodecError(f"codec name already registered: {codec.name!r}")
        self._codecs[codec.name] = codec
        return codec

    def get(self, name: str) -> Codec:
        try:
            return self._codecs[name]
        except KeyError:
            raise CodecError(f"no codec registered under name {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._codecs

    def names(self) -> list[str]:
        return sorted(self._codecs)


def standard_registry() -> CodecRegistry:
    reg = CodecRegistry()
    for codec in (INT, FLOAT, STR, BOOL, UNIT, JSON, CLIENT, CLIENT_CHANGE):
        reg.register(codec)
    return reg
