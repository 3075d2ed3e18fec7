import pytest

from aodvsim.protocol import (
    Data,
    Hello,
    NotRelayable,
    ReversePathEntry,
    RoutingEntry,
    Rrep,
    RreqId,
    Rreq,
    is_duplicate,
    packet_kind,
    relay_transform,
    summarize,
)


def make_rreq(num=1, hop=0, ttl=5):
    return Rreq(rreq_id=RreqId(0, num), origin=0, origin_seq=1, dest=9,
                dest_seq_known=None, hop_count=hop, ttl=ttl)


def test_rreq_id_equality_and_hashing():
    assert RreqId(3, 7) == RreqId(3, 7)
    assert RreqId(3, 7) != RreqId(3, 8)
    assert len({RreqId(1, 1), RreqId(1, 1), RreqId(2, 1)}) == 2


def test_is_duplicate_tracks_seen_ids():
    seen = set()
    r = make_rreq(num=4)
    assert not is_duplicate(seen, r)
    seen.add(r.rreq_id)
    assert is_duplicate(seen, r)
    assert not is_duplicate(seen, make_rreq(num=5))


def test_is_duplicate_rejects_non_requests():
    with pytest.raises(TypeError):
        is_duplicate(set(), Hello(sender=1, seq=0))


def test_relay_transform_decrements_ttl_and_bumps_hop():
    out = relay_transform(make_rreq(hop=2, ttl=3))
    assert (out.hop_count, out.ttl) == (3, 2)
    # rest of the request is untouched
    assert out.rreq_id == RreqId(0, 1)
    assert out.dest == 9


def test_relay_transform_allows_ttl_one():
    # a ttl-1 request may still be sent; the receiver discards it
    out = relay_transform(make_rreq(ttl=1))
    assert out.ttl == 0


def test_relay_transform_refuses_exhausted_ttl():
    with pytest.raises(NotRelayable):
        relay_transform(make_rreq(ttl=0))


def test_relay_transform_reply_only_grows_hop():
    rep = Rrep(origin=0, dest=9, dest_seq=4, hop_count=1, rreq_id=RreqId(0, 1))
    out = relay_transform(rep)
    assert out.hop_count == 2
    assert out.dest_seq == 4


def test_relay_transform_rejects_other_packets():
    with pytest.raises(TypeError):
        relay_transform(Data(src=0, dst=1, payload_id=0))


def test_reverse_path_entry_keeps_sender_order_without_repeats():
    entry = ReversePathEntry(rreq_id=RreqId(0, 1), previous_hops=[2], created_at=0)
    entry.add_sender(5)
    entry.add_sender(2)
    entry.add_sender(3)
    assert entry.previous_hops == [2, 5, 3]


def test_routing_entry_defaults_inactive():
    e = RoutingEntry(dest=9, next_hop=1, hop_count=4, dest_seq=2, expires_at=50)
    assert not e.active


def test_packet_kind_names():
    assert packet_kind(make_rreq()) == "RREQ"
    assert packet_kind(Hello(sender=0, seq=1)) == "HELLO"


def test_summaries_are_single_line():
    packets = [
        make_rreq(),
        Rrep(origin=0, dest=9, dest_seq=4, hop_count=1, rreq_id=RreqId(0, 1)),
        Hello(sender=3, seq=9),
        Data(src=0, dst=9, payload_id=2),
    ]
    for p in packets:
        text = summarize(p)
        assert "\n" not in text and text
