import pytest
from hypothesis import given
from hypothesis import strategies as st

from congest_fl.messages import (
    AlphaAnnounce,
    ClientStatus,
    EncodingError,
    FacilityStatus,
    MaxRelay,
    MessageFormat,
    OpenAnnounce,
    RandomDraw,
    StatusAck,
    default_bit_budget,
)

NC = ClientStatus.NOT_CONNECTED


def test_alpha_announce_fits_small_network():
    fmt = MessageFormat.for_network(2)
    msg = AlphaAnnounce(3, NC)
    assert len(fmt.encode(msg)) == fmt.bit_size(msg) <= default_bit_budget(2) == 20


def test_alpha_width_overflow():
    fmt = MessageFormat.for_network(2)
    with pytest.raises(EncodingError):
        fmt.encode(AlphaAnnounce(2 ** (2 * 1), NC))


def test_every_kind_within_budget():
    for n in (2, 3, 17, 1000, 2**20):
        fmt = MessageFormat.for_network(n)
        biggest = max(
            fmt.bit_size(p)
            for p in (AlphaAnnounce(0, NC), RandomDraw(0, FacilityStatus.CLOSED), MaxRelay(None, None, NC),
                      OpenAnnounce(FacilityStatus.OPEN, True), StatusAck(NC))
        )
        assert biggest <= default_bit_budget(n)


def _payloads(fmt: MessageFormat):
    cs = st.sampled_from(list(ClientStatus))
    fs = st.sampled_from(list(FacilityStatus))
    draw = st.integers(0, 2**fmt.draw_bits - 1)
    owner = st.integers(0, 2**fmt.id_bits - 1)
    return st.one_of(
        st.builds(AlphaAnnounce, st.integers(0, 2**fmt.alpha_bits - 1), cs),
        st.builds(RandomDraw, draw, fs),
        st.builds(MaxRelay, draw, owner, cs),
        st.builds(MaxRelay, st.none(), st.none(), cs),
        st.builds(OpenAnnounce, fs, st.booleans()),
        st.builds(StatusAck, cs),
    )


FMT = MessageFormat.for_network(50)


@given(_payloads(FMT))
def test_round_trip(payload):
    bits = FMT.encode(payload)
    assert len(bits) == FMT.bit_size(payload)
    assert FMT.decode(bits) == payload


def test_relay_half_set_rejected():
    with pytest.raises(EncodingError):
        FMT.encode(MaxRelay(3, None, NC))


@pytest.mark.parametrize("bits", ["", "01", "111000", "0000", "10" * 40, "00a"])
def test_decode_malformed(bits):
    with pytest.raises(EncodingError):
        FMT.decode(bits)


def test_relay_key():
    assert MaxRelay(5, 2, NC).key == (5, 2)
    assert MaxRelay(None, None, NC).key is None
