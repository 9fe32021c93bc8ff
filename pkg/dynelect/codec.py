"""Binary wire encoding of protocol messages.

Layout, most significant bit first and left-aligned in whole bytes::

    Rank: tag=0 | owner (40) | p (16) | U (b)
    Beep: tag=1 | leader (40) | timestamp (32)
"""

from __future__ import annotations

from .const import (
    DEFAULT_UNIFORM_BITS,
    ID_BITS,
    PHASE_COUNT_BITS,
    TAG_BEEP,
    TAG_BITS,
    TAG_RANK,
    TIMESTAMP_BITS,
)
from .exceptions import ParameterError
from .protocol import Beep, Message, Rank


def message_bits(message: Message) -> int:
    """Return the encoded size of ``message`` in bits, before byte padding."""
    if isinstance(message, Rank):
        return TAG_BITS + ID_BITS + PHASE_COUNT_BITS + message.bits
    return TAG_BITS + ID_BITS + TIMESTAMP_BITS


def bit_budget(horizon: int, uniform_bits: int = DEFAULT_UNIFORM_BITS) -> int:
    """Return the per-message budget 2 * id width + b + ceil(log2 horizon)."""
    if horizon < 1:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    return 2 * ID_BITS + uniform_bits + (horizon - 1).bit_length()


def _check_width(name: str, value: int, width: int) -> None:
    if value < 0 or value >= 1 << width:
        raise ParameterError(f"{name}={value} does not fit in {width} bits")


def _pack(fields: list[tuple[str, int, int]]) -> bytes:
    value = 0
    total = 0
    for name, field_value, width in fields:
        _check_width(name, field_value, width)
        value = (value << width) | field_value
        total += width
    size = (total + 7) // 8
    return (value << (size * 8 - total)).to_bytes(size, "big")


def encode(message: Message) -> bytes:
    """Encode ``message``; a field that overflows its width is rejected."""
    if isinstance(message, Rank):
        return _pack(
            [
                ("tag", TAG_RANK, TAG_BITS),
                ("owner", message.owner, ID_BITS),
                ("p", message.p, PHASE_COUNT_BITS),
                ("U", message.uniform, message.bits),
            ]
        )
    if isinstance(message, Beep):
        return _pack(
            [
                ("tag", TAG_BEEP, TAG_BITS),
                ("leader", message.leader, ID_BITS),
                ("timestamp", message.timestamp, TIMESTAMP_BITS),
            ]
        )
    raise ParameterError(f"Cannot encode {message!r}")


def decode(data: bytes, uniform_bits: int = DEFAULT_UNIFORM_BITS) -> Message:
    """Decode a message produced by ``encode``."""
    if not data:
        raise ParameterError("Cannot decode an empty message")
    raw = int.from_bytes(data, "big")
    size = len(data) * 8
    tag = raw >> (size - TAG_BITS)

    def take(offset: int, width: int) -> int:
        return (raw >> (size - offset - width)) & ((1 << width) - 1)

    if tag == TAG_RANK:
        total = TAG_BITS + ID_BITS + PHASE_COUNT_BITS + uniform_bits
        if (total + 7) // 8 != len(data):
            raise ParameterError(
                f"Rank with {uniform_bits} uniform bits needs {(total + 7) // 8} "
                f"bytes, got {len(data)}"
            )
        owner = take(TAG_BITS, ID_BITS)
        p = take(TAG_BITS + ID_BITS, PHASE_COUNT_BITS)
        uniform = take(TAG_BITS + ID_BITS + PHASE_COUNT_BITS, uniform_bits)
        return Rank(p, uniform, owner, uniform_bits)

    total = TAG_BITS + ID_BITS + TIMESTAMP_BITS
    if (total + 7) // 8 != len(data):
        raise ParameterError(f"Beep needs {(total + 7) // 8} bytes, got {len(data)}")
    return Beep(take(TAG_BITS, ID_BITS), take(TAG_BITS + ID_BITS, TIMESTAMP_BITS))


def to_hex(message: Message | None) -> str | None:
    """Return the hex rendering used in trace files."""
    if message is None:
        return None
    return encode(message).hex()


def from_hex(
    text: str | None, uniform_bits: int = DEFAULT_UNIFORM_BITS
) -> Message | None:
    """Parse the hex rendering used in trace files."""
    if text is None:
        return None
    try:
        data = bytes.fromhex(text)
    except ValueError as err:
        raise ParameterError(f"Invalid message hex {text!r}: {err}") from err
    return decode(data, uniform_bits)


def fits_budget(
    message: Message, horizon: int, uniform_bits: int = DEFAULT_UNIFORM_BITS
) -> bool:
    """Return True if ``message`` encodes within the budget of a run."""
    try:
        encode(message)
    except ParameterError:
        return False
    return message_bits(message) <= bit_budget(horizon, uniform_bits)
