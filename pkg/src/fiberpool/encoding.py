"""Canonical byte encoding shared by every commitment in the system.

All digests (share headers, batch signatures, distribution leaves, storage
beacons) are computed over byte strings produced here, so the layout is part
of the protocol: two honest nodes must serialize identically bit for bit.

Layout rules:
  * integers: fixed-width big-endian (``u32`` / ``u64``);
  * byte fields: ``u32`` length prefix followed by the raw bytes;
  * rationals: numerator then denominator, each as a length-prefixed
    big-endian magnitude of the value in lowest terms (``Fraction``
    normalizes on construction, so the encoding is canonical);
  * strings: UTF-8 bytes, length-prefixed.
"""

from __future__ import annotations

from fractions import Fraction


def u32(value: int) -> bytes:
    if not 0 <= value < 1 << 32:
        raise ValueError(f"u32 out of range: {value}")
    return value.to_bytes(4, "big")


def u64(value: int) -> bytes:
    if not 0 <= value < 1 << 64:
        raise ValueError(f"u64 out of range: {value}")
    return value.to_bytes(8, "big")


def blob(data: bytes) -> bytes:
    # len() is never negative and to_bytes raises on overflow, so no pre-check.
    return len(data).to_bytes(4, "big") + data


def text(value: str) -> bytes:
    return blob(value.encode("utf-8"))


def rational(value: Fraction) -> bytes:
    num = value.numerator
    den = value.denominator
    if num < 0:
        raise ValueError(f"negative rational not encodable: {value}")
    return blob(num.to_bytes((num.bit_length() + 7) // 8 or 1, "big")) + blob(
        den.to_bytes((den.bit_length() + 7) // 8 or 1, "big")
    )
