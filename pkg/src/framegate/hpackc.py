"""HPACK header compression (RFC 7541): full decoder, minimal legal encoder.

The decoder supports every representation a peer may emit: indexed fields from
the static and dynamic tables, all literal forms, dynamic table size updates,
and Huffman-coded strings.  The encoder never inserts into the dynamic table
and never Huffman-codes, which is always legal and keeps us stateless.
"""

from __future__ import annotations

from collections import deque

from .hpack_tables import HUFFMAN_CODE_LENGTHS, HUFFMAN_CODES, STATIC_TABLE


class HpackError(Exception):
    pass


# -- integer primitives (RFC 7541 section 5.1) -------------------------------

def encode_integer(value: int, prefix_bits: int, flags: int = 0) -> bytearray:
    """Encode value with an N-bit prefix; flags are ORed into the first byte."""
    limit = (1 << prefix_bits) - 1
    if value < limit:
        return bytearray([flags | value])
    out = bytearray([flags | limit])
    value -= limit
    while value >= 128:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    out.append(value)
    return out


def decode_integer(data: bytes, pos: int, prefix_bits: int) -> tuple[int, int]:
    limit = (1 << prefix_bits) - 1
    if pos >= len(data):
        raise HpackError("truncated integer")
    value = data[pos] & limit
    pos += 1
    if value < limit:
        return value, pos
    shift = 0
    while True:
        if pos >= len(data):
            raise HpackError("truncated integer continuation")
        byte = data[pos]
        pos += 1
        value += (byte & 0x7F) << shift
        shift += 7
        if not byte & 0x80:
            return value, pos
        if shift > 62:
            raise HpackError("integer overflow")


# -- Huffman decoding ---------------------------------------------------------

def _build_huffman_tree() -> list:
    # Node is [left, right]; leaves are symbol ints; 256 symbols + EOS.
    root: list = [None, None]
    for sym in range(256):
        code, length = HUFFMAN_CODES[sym], HUFFMAN_CODE_LENGTHS[sym]
        node = root
        for i in range(length - 1, -1, -1):
            bit = (code >> i) & 1
            if i == 0:
                node[bit] = sym
            else:
                if node[bit] is None:
                    node[bit] = [None, None]
                node = node[bit]
    return root


_HUFFMAN_ROOT = _build_huffman_tree()


def huffman_decode(data: bytes) -> bytes:
    out = bytearray()
    node = _HUFFMAN_ROOT
    path_len = 0  # bits walked since the last emitted symbol
    all_ones = True
    for byte in data:
        for i in range(7, -1, -1):
            bit = (byte >> i) & 1
            path_len += 1
            all_ones = all_ones and bit == 1
            node = node[bit]
            if node is None:
                raise HpackError("invalid Huffman code")
            if not isinstance(node, list):
                out.append(node)
                node = _HUFFMAN_ROOT
                path_len = 0
                all_ones = True
    # Any partial code at the end must be the EOS prefix: up to 7 one-bits.
    if path_len and not (all_ones and path_len <= 7):
        raise HpackError("invalid Huffman padding")
    return bytes(out)


# -- header tables ------------------------------------------------------------

_STATIC_BY_PAIR = {pair: i + 1 for i, pair in enumerate(STATIC_TABLE)}
_STATIC_BY_NAME: dict[bytes, int] = {}
for _i, (_name, _value) in enumerate(STATIC_TABLE):
    _STATIC_BY_NAME.setdefault(_name, _i + 1)

_ENTRY_OVERHEAD = 32


def _entry_size(name: bytes, value: bytes) -> int:
    return _ENTRY_OVERHEAD + len(name) + len(value)


class Decoder:
    """Stateful HPACK decoder; one instance per connection direction."""

    def __init__(self, max_table_size: int = 4096):
        self.max_table_size = max_table_size  # our SETTINGS_HEADER_TABLE_SIZE
        self._limit = max_table_size          # current limit (peer may lower it)
        self._dynamic: deque[tuple[bytes, bytes]] = deque()
        self._dynamic_size = 0

    def _evict(self) -> None:
        while self._dynamic_size > self._limit:
            name, value = self._dynamic.pop()
            self._dynamic_size -= _entry_size(name, value)

    def _insert(self, name: bytes, value: bytes) -> None:
        self._dynamic.appendleft((name, value))
        self._dynamic_size += _entry_size(name, value)
        self._evict()

    def _lookup(self, index: int) -> tuple[bytes, bytes]:
        if index <= 0:
            raise HpackError("zero header index")
        if index <= len(STATIC_TABLE):
            return STATIC_TABLE[index - 1]
        dyn = index - len(STATIC_TABLE) - 1
        if dyn >= len(self._dynamic):
            raise HpackError(f"header index {index} out of range")
        return self._dynamic[dyn]

    def _read_string(self, data: bytes, pos: int) -> tuple[bytes, int]:
        if pos >= len(data):
            raise HpackError("truncated string")
        huffman = bool(data[pos] & 0x80)
        length, pos = decode_integer(data, pos, 7)
        if pos + length > len(data):
            raise HpackError("string overruns block")
        raw = data[pos:pos + length]
        return (huffman_decode(raw) if huffman else raw), pos + length

    def decode(self, block: bytes) -> list[tuple[bytes, bytes]]:
        headers: list[tuple[bytes, bytes]] = []
        pos = 0
        while pos < len(block):
            byte = block[pos]
            if byte & 0x80:  # indexed field
                index, pos = decode_integer(block, pos, 7)
                headers.append(self._lookup(index))
            elif byte & 0x40:  # literal with incremental indexing
                index, pos = decode_integer(block, pos, 6)
                name = self._lookup(index)[0] if index else None
                if name is None:
                    name, pos = self._read_string(block, pos)
                value, pos = self._read_string(block, pos)
                self._insert(name, value)
                headers.append((name, value))
            elif byte & 0x20:  # dynamic table size update
                size, pos = decode_integer(block, pos, 5)
                if size > self.max_table_size:
                    raise HpackError(f"table size {size} above limit")
                self._limit = size
                self._evict()
            else:  # literal without indexing (0000) / never indexed (0001)
                index, pos = decode_integer(block, pos, 4)
                name = self._lookup(index)[0] if index else None
                if name is None:
                    name, pos = self._read_string(block, pos)
                value, pos = self._read_string(block, pos)
                headers.append((name, value))
        return headers


class Encoder:
    """Stateless encoder: indexed fields for exact static matches, literals otherwise.

    Being stateless makes encoded blocks reusable, so frequently sent header
    lists are memoized.
    """

    def __init__(self):
        self._memo: dict[tuple, bytes] = {}

    @staticmethod
    def _literal_string(value: bytes) -> bytearray:
        out = encode_integer(len(value), 7)  # H bit clear: raw bytes
        out.extend(value)
        return out

    def encode(self, headers: list[tuple[bytes, bytes]]) -> bytes:
        key = tuple(headers)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        out = bytearray()
        for name, value in headers:
            index = _STATIC_BY_PAIR.get((name, value))
            if index is not None:
                out.extend(encode_integer(index, 7, 0x80))
                continue
            name_index = _STATIC_BY_NAME.get(name, 0)
            out.extend(encode_integer(name_index, 4))  # literal without indexing
            if not name_index:
                out.extend(self._literal_string(name))
            out.extend(self._literal_string(value))
        block = bytes(out)
        if len(self._memo) > 64:
            self._memo.clear()
        self._memo[key] = block
        return block
