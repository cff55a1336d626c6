"""Wire format for the five message kinds exchanged by clients and facilities.

Every payload has a fixed-width bit layout determined by the network size:

========== ==== ===============================================
kind       tag  fields (after the 3-bit tag)
========== ==== ===============================================
alpha      0    exponent (alpha_bits), client status (1)
draw       1    draw (draw_bits), facility status (2)
relay      2    present (1), draw (draw_bits), owner (id_bits), client status (1)
open       3    facility status (2), opened this iteration (1)
ack        4    client status (1)
========== ==== ===============================================
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Union

from .instance import ceil_log2

TAG_BITS = 3


class EncodingError(ValueError):
    """A field does not fit its declared width, or a bit string is malformed."""


class ClientStatus(IntEnum):
    NOT_CONNECTED = 0
    CONNECTED = 1


class FacilityStatus(IntEnum):
    CLOSED = 0
    CURRENTLY_PAID = 1
    OPEN = 2


@dataclass(frozen=True)
class AlphaAnnounce:
    alpha_exponent: int
    status: ClientStatus


@dataclass(frozen=True)
class RandomDraw:
    draw: int
    status: FacilityStatus


@dataclass(frozen=True)
class MaxRelay:
    """Largest (draw, facility id) a client sees; ``None`` when it sees none."""

    max_draw: int | None
    owner: int | None
    status: ClientStatus

    @property
    def key(self) -> tuple[int, int] | None:
        if self.max_draw is None:
            return None
        return (self.max_draw, self.owner)


@dataclass(frozen=True)
class OpenAnnounce:
    status: FacilityStatus
    opened_now: bool


@dataclass(frozen=True)
class StatusAck:
    status: ClientStatus


Payload = Union[AlphaAnnounce, RandomDraw, MaxRelay, OpenAnnounce, StatusAck]

_TAGS = {AlphaAnnounce: 0, RandomDraw: 1, MaxRelay: 2, OpenAnnounce: 3, StatusAck: 4}


def default_bit_budget(n: int) -> int:
    return 4 * ceil_log2(n) + 16


@dataclass(frozen=True)
class MessageFormat:
    """Field widths for a network of ``n`` nodes."""

    n: int
    alpha_bits: int
    draw_bits: int
    id_bits: int

    @classmethod
    def for_network(cls, n: int, alpha_bits: int | None = None) -> "MessageFormat":
        log_n = ceil_log2(n)
        return cls(n=n, alpha_bits=alpha_bits or 2 * log_n, draw_bits=3 * log_n, id_bits=log_n)

    def bit_size(self, payload: Payload) -> int:
        match payload:
            case AlphaAnnounce():
                return TAG_BITS + self.alpha_bits + 1
            case RandomDraw():
                return TAG_BITS + self.draw_bits + 2
            case MaxRelay():
                return TAG_BITS + 1 + self.draw_bits + self.id_bits + 1
            case OpenAnnounce():
                return TAG_BITS + 3
            case StatusAck():
                return TAG_BITS + 1
        raise EncodingError(f"unknown payload {payload!r}")

    def encode(self, payload: Payload) -> str:
        fields: list[tuple[int, int]]
        match payload:
            case AlphaAnnounce(t, status):
                fields = [(t, self.alpha_bits), (int(status), 1)]
            case RandomDraw(draw, status):
                fields = [(draw, self.draw_bits), (int(status), 2)]
            case MaxRelay(draw, owner, status):
                present = draw is not None
                if present != (owner is not None):
                    raise EncodingError("relay draw and owner must both be set or both unset")
                fields = [
                    (int(present), 1),
                    (draw if present else 0, self.draw_bits),
                    (owner if present else 0, self.id_bits),
                    (int(status), 1),
                ]
            case OpenAnnounce(status, opened_now):
                fields = [(int(status), 2), (int(opened_now), 1)]
            case StatusAck(status):
                fields = [(int(status), 1)]
            case _:
                raise EncodingError(f"unknown payload {payload!r}")
        bits = [format(_TAGS[type(payload)], f"0{TAG_BITS}b")]
        for value, width in fields:
            if not 0 <= value < (1 << width):
                raise EncodingError(
                    f"{type(payload).__name__}: value {value} does not fit in {width} bits"
                )
            bits.append(format(value, f"0{width}b"))
        return "".join(bits)

    def decode(self, bits: str) -> Payload:
        if len(bits) < TAG_BITS or set(bits) - {"0", "1"}:
            raise EncodingError(f"not a bit string: {bits!r}")
        pos = TAG_BITS

        def take(width: int) -> int:
            nonlocal pos
            if pos + width > len(bits):
                raise EncodingError("truncated message")
            value = int(bits[pos : pos + width], 2) if width else 0
            pos += width
            return value

        tag = int(bits[:TAG_BITS], 2)
        payload: Payload
        if tag == 0:
            payload = AlphaAnnounce(take(self.alpha_bits), ClientStatus(take(1)))
        elif tag == 1:
            draw = take(self.draw_bits)
            payload = RandomDraw(draw, _facility_status(take(2)))
        elif tag == 2:
            present = take(1)
            draw, owner = take(self.draw_bits), take(self.id_bits)
            status = ClientStatus(take(1))
            payload = MaxRelay(draw if present else None, owner if present else None, status)
        elif tag == 3:
            status = _facility_status(take(2))
            payload = OpenAnnounce(status, bool(take(1)))
        elif tag == 4:
            payload = StatusAck(ClientStatus(take(1)))
        else:
            raise EncodingError(f"unknown tag {tag}")
        if pos != len(bits):
            raise EncodingError(f"{len(bits) - pos} trailing bits")
        return payload


def _facility_status(code: int) -> FacilityStatus:
    try:
        return FacilityStatus(code)
    except ValueError as exc:
        raise EncodingError(f"bad facility status code {code}") from exc
