"""Bit-string helpers.

Bit strings are plain ``str`` of ``'0'``/``'1'``. A hex input is read byte by
byte (two digits at a time, in string order) and each byte contributes its
bits least-significant first, so ``"41"`` becomes ``"10000010"``.
"""

from .errors import InputError

_BYTE_BITS = [format(b, "08b")[::-1] for b in range(256)]
_BITS_BYTE = {s: b for b, s in enumerate(_BYTE_BITS)}


def check_bits(bits: str) -> str:
    if any(c not in "01" for c in bits):
        raise InputError("bit string may only contain '0' and '1'")
    return bits


def hex_to_bits(hexstr: str) -> str:
    hexstr = hexstr.strip()
    if len(hexstr) % 2:
        raise InputError("hex input must have an even number of digits")
    try:
        raw = bytes.fromhex(hexstr)
    except ValueError:
        raise InputError("input is not a hex string") from None
    return "".join(_BYTE_BITS[b] for b in raw)


def bits_to_hex(bits: str) -> str:
    if len(bits) % 8:
        raise InputError("bit string length must be a multiple of 8")
    return bytes(_BITS_BYTE[bits[i:i + 8]] for i in range(0, len(bits), 8)).hex()


def twos_complement(bits: str) -> int:
    """Decode an MSB-first bit string as a signed integer."""
    value = int(bits, 2)
    if bits[0] == "1":
        value -= 1 << len(bits)
    return value


def to_signed(value: int, width: int) -> int:
    value &= (1 << width) - 1
    return value - (1 << width) if value >> (width - 1) else value
