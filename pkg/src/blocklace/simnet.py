"""Deterministic simulation of an unreliable datagram network.

Faults are loss, duplication, reordering (via random per-datagram delay),
and address churn; every random draw comes from one seeded generator, so a
(config, scenario) pair fully determines the delivery schedule.  Corruption
is deliberately not modeled: signed blocks make a corrupted datagram
indistinguishable from a lost one.

Addresses bind to at most one agent at a time.  A datagram is delivered
only if its destination address is still bound to the same agent it was
bound to at submission; anything else is a stale-address drop.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .blocks import NetAddress, peek_digest_hex


class SimError(Exception):
    pass


@dataclass(frozen=True)
class NetConfig:
    loss_prob: float = 0.3
    dup_prob: float = 0.0
    delay_min: int = 1
    delay_max: int = 5
    seed: int = 0
    tick_interval: int = 1

    def validate(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise SimError("loss_prob out of range")
        if not 0.0 <= self.dup_prob <= 1.0:
            raise SimError("dup_prob out of range")
        if self.delay_min < 1:
            raise SimError("delay_min must be >= 1 (same-tick delivery is not modeled)")
        if self.delay_min > self.delay_max:
            raise SimError("delay_min > delay_max")
        if self.tick_interval < 1:
            raise SimError("tick_interval must be >= 1")


@dataclass(frozen=True)
class Datagram:
    src: NetAddress
    dst: NetAddress
    payload: bytes
    inject_time: int


class Trace:
    """Line-delimited event log; the oracles' input.  Also accumulates the
    lines in memory so a run can hand them over without re-reading."""

    def __init__(self):
        self.lines: list[str] = []

    def record(self, tick: int, event: str, **fields):
        parts = [str(tick), event]
        parts.extend(f"{key}={value}" for key, value in fields.items())
        self.lines.append("\t".join(parts))

    def text(self) -> str:
        return "\n".join(self.lines) + "\n" if self.lines else ""


class AddressTable:
    """Current and historical address ownership."""

    def __init__(self):
        self._current: dict[NetAddress, str] = {}
        self._owner_address: dict[str, NetAddress] = {}
        self.history: list[tuple[str, NetAddress, int]] = []

    def bind(self, agent: str, address: NetAddress, now: int):
        if self._current.get(address, agent) != agent:
            raise SimError(f"address {address!r} already bound")
        old = self._owner_address.get(agent)
        if old == address:
            return
        if old is not None:
            del self._current[old]
        self._current[address] = agent
        self._owner_address[agent] = address
        self.history.append((agent, address, now))

    def owner(self, address: NetAddress) -> Optional[str]:
        return self._current.get(address)

    def address_of(self, agent: str) -> Optional[NetAddress]:
        return self._owner_address.get(agent)

    def owner_at(self, address: NetAddress, tick: int) -> Optional[str]:
        # History is append-only and an agent holds one address at a time,
        # so replaying bindings up to `tick` is the simplest correct answer.
        held: dict[str, NetAddress] = {}
        current: dict[NetAddress, str] = {}
        for agent, addr, since in self.history:
            if since > tick:
                break
            old = held.get(agent)
            if old is not None:
                current.pop(old, None)
            held[agent] = addr
            current[addr] = agent
        return current.get(address)


class SimNet:
    def __init__(self, config: NetConfig, trace: Trace):
        config.validate()
        self.config = config
        self.trace = trace
        self.table = AddressTable()
        # str seeds hash deterministically (unlike tuples, which go through
        # PYTHONHASHSEED-dependent hash()).
        self._rng = random.Random(f"simnet:{config.seed}")
        self._schedule: dict[int, list[Datagram]] = {}
        self._in_flight = 0

    # --- bindings -----------------------------------------------------------

    def bind(self, agent: str, address: NetAddress, now: int = 0):
        self.table.bind(agent, address, now)

    def rebind(self, agent: str, new_address: NetAddress, now: int):
        current_owner = self.table.owner(new_address)
        if current_owner not in (None, agent):
            raise SimError(f"address {new_address!r} already bound")
        if self.table.address_of(agent) == new_address:
            return
        self.table.bind(agent, new_address, now)
        self.trace.record(now, "REBIND", agent=agent, address=new_address)

    # --- traffic ----------------------------------------------------------------

    def submit(self, datagram: Datagram, now: int):
        digest = peek_digest_hex(datagram.payload)
        self.trace.record(
            now,
            "SUBMIT",
            src=datagram.src,
            dst=datagram.dst,
            id=digest,
            bytes=datagram.payload.hex(),
        )
        copies = 0
        if self._rng.random() < self.config.loss_prob:
            self.trace.record(now, "DROP_LOSS", src=datagram.src, dst=datagram.dst, id=digest)
        else:
            copies = 1
        if self._rng.random() < self.config.dup_prob:
            copies += 1
            self.trace.record(now, "DUP", src=datagram.src, dst=datagram.dst, id=digest)
        for _ in range(copies):
            when = now + self._rng.randint(self.config.delay_min, self.config.delay_max)
            self._schedule.setdefault(when, []).append(datagram)
            self._in_flight += 1

    def step(self, now: int) -> list[tuple[str, bytes, NetAddress]]:
        """Deliver everything scheduled for `now`, in seeded-shuffle order.
        Returns (agent, payload, source address) triples."""
        batch = self._schedule.pop(now, [])
        self._in_flight -= len(batch)
        self._rng.shuffle(batch)
        out = []
        for datagram in batch:
            digest = peek_digest_hex(datagram.payload)
            owner = self.table.owner(datagram.dst)
            owner_at_submit = self.table.owner_at(datagram.dst, datagram.inject_time)
            if owner is None or owner != owner_at_submit:
                self.trace.record(
                    now, "DROP_STALE", src=datagram.src, dst=datagram.dst, id=digest
                )
                continue
            self.trace.record(
                now, "DELIVER", dst=datagram.dst, agent=owner, id=digest
            )
            out.append((owner, datagram.payload, datagram.src))
        return out

    def in_flight(self) -> int:
        return self._in_flight
