import pytest

from blocklace.simnet import AddressTable, Datagram, NetConfig, SimError, SimNet, Trace


def _net(**overrides):
    defaults = dict(loss_prob=0.0, dup_prob=0.0, delay_min=1, delay_max=1, seed=0)
    defaults.update(overrides)
    trace = Trace()
    net = SimNet(NetConfig(**defaults), trace)
    return net, trace


def _drain(net, upto):
    delivered = []
    for now in range(upto):
        delivered.extend((now, agent, payload) for agent, payload, _ in net.step(now))
    return delivered


def test_config_validation():
    for bad in (
        dict(loss_prob=1.5),
        dict(dup_prob=-0.1),
        dict(delay_min=0),
        dict(delay_min=4, delay_max=2),
        dict(tick_interval=0),
    ):
        with pytest.raises(SimError):
            _net(**bad)


def test_exactly_once_next_tick():
    net, _ = _net()
    net.bind("alice", "a/0")
    net.submit(Datagram("b/0", "a/0", b"payload", 0), 0)
    delivered = _drain(net, 5)
    assert delivered == [(1, "alice", b"payload")]
    assert net.in_flight() == 0


def test_total_loss():
    net, trace = _net(loss_prob=1.0)
    net.bind("alice", "a/0")
    for i in range(50):
        net.submit(Datagram("b/0", "a/0", b"x", i), i)
    assert _drain(net, 60) == []
    assert sum("DROP_LOSS" in line for line in trace.lines) == 50


def test_duplication():
    net, trace = _net(dup_prob=1.0)
    net.bind("alice", "a/0")
    net.submit(Datagram("b/0", "a/0", b"x", 0), 0)
    delivered = _drain(net, 5)
    assert len(delivered) == 2
    assert sum("DUP" in line for line in trace.lines) == 1


def test_delivery_byte_identity():
    net, _ = _net(dup_prob=0.5, delay_max=3)
    net.bind("alice", "a/0")
    payload = bytes(range(256))
    for i in range(20):
        net.submit(Datagram("b/0", "a/0", payload, 0), 0)
    for _, _, got in _drain(net, 10):
        assert got == payload


def test_seeded_schedule_reproducible():
    def run(seed):
        net, trace = _net(loss_prob=0.4, dup_prob=0.2, delay_max=5, seed=seed)
        net.bind("alice", "a/0")
        for i in range(30):
            net.submit(Datagram("b/0", "a/0", b"m%d" % i, i), i)
            net.step(i)
        for i in range(30, 45):
            net.step(i)
        return "\n".join(trace.lines)

    assert run(3) == run(3)
    assert run(3) != run(4)


def test_fair_lossy_resubmission():
    # Heavy loss, many resubmissions: at least one must get through.
    net, _ = _net(loss_prob=0.9, seed=1)
    net.bind("alice", "a/0")
    for i in range(10_000):
        net.submit(Datagram("b/0", "a/0", b"persistent", i), i)
    delivered = _drain(net, 10_005)
    assert len(delivered) >= 1


def test_rebind_drops_in_flight():
    net, trace = _net(delay_min=3, delay_max=3)
    net.bind("alice", "a/0")
    net.submit(Datagram("b/0", "a/0", b"late", 0), 0)
    net.rebind("alice", "a/1", 1)
    assert _drain(net, 6) == []
    assert any("DROP_STALE" in line for line in trace.lines)
    assert any("REBIND" in line for line in trace.lines)


def test_rebind_then_new_address_delivers():
    net, _ = _net()
    net.bind("alice", "a/0")
    net.rebind("alice", "a/1", 0)
    net.submit(Datagram("b/0", "a/1", b"hello", 1), 1)
    assert _drain(net, 4) == [(2, "alice", b"hello")]


def test_rebind_collision_rejected():
    net, _ = _net()
    net.bind("alice", "a/0")
    net.bind("bob", "b/0")
    with pytest.raises(SimError):
        net.rebind("bob", "a/0", 1)


def test_rebind_same_address_noop():
    net, trace = _net()
    net.bind("alice", "a/0")
    net.rebind("alice", "a/0", 1)
    assert not any("REBIND" in line for line in trace.lines)


def test_address_reuse_is_stale_for_old_traffic():
    # bob claims alice's abandoned address; datagrams aimed at alice's
    # tenure must not reach bob.
    net, trace = _net(delay_min=5, delay_max=5)
    net.bind("alice", "a/0")
    net.bind("bob", "b/0")
    net.submit(Datagram("x/0", "a/0", b"for-alice", 0), 0)
    net.rebind("alice", "a/1", 1)
    net.rebind("bob", "a/0", 2)
    assert _drain(net, 8) == []
    assert any("DROP_STALE" in line for line in trace.lines)


def test_owner_at_history():
    table = AddressTable()
    table.bind("alice", "a/0", 0)
    table.bind("alice", "a/1", 5)
    table.bind("bob", "a/0", 7)
    assert table.owner_at("a/0", 0) == "alice"
    assert table.owner_at("a/0", 6) is None
    assert table.owner_at("a/0", 7) == "bob"
    assert table.owner_at("a/1", 9) == "alice"


def test_same_tick_deliveries_shuffled_deterministically():
    def order(seed):
        net, _ = _net(seed=seed)
        net.bind("alice", "a/0")
        for i in range(10):
            net.submit(Datagram("b/0", "a/0", b"%d" % i, 0), 0)
        return [payload for _, payload, _ in net.step(1)]

    assert order(0) == order(0)
    assert sorted(order(0)) == [b"%d" % i for i in range(10)]
