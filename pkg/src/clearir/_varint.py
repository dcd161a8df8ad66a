"""LEB128-style unsigned varints, used for delta-coded postings."""


def encode(values, out: bytearray) -> bytearray:
    for v in values:
        v = int(v)
        if v < 0:
            raise ValueError("varint values must be non-negative")
        while v >= 0x80:
            out.append((v & 0x7F) | 0x80)
            v >>= 7
        out.append(v)
    return out


def decode(buf, pos: int, count: int) -> tuple[list[int], int]:
    """Decode ``count`` varints from ``buf`` starting at ``pos``."""
    values = []
    for _ in range(count):
        shift = 0
        v = 0
        while True:
            try:
                byte = buf[pos]
            except IndexError:
                raise ValueError("truncated varint") from None
            pos += 1
            v |= (byte & 0x7F) << shift
            if byte < 0x80:
                break
            shift += 7
        values.append(v)
    return values, pos
