"""Safety, liveness, and privacy oracles.

Every oracle is a pure function of (scenario, parsed trace); final agent
states travel inside the trace as FINAL records, so a saved trace file can
be re-checked offline and must reproduce the verdict.

Verdicts: PASS, FAIL (witness names the offending evidence), and
PRECONDITION_UNSATISFIED when the scenario does not establish what the
property assumes (a broken path is not a protocol failure).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .. import blocks as b
from ..blocks import Block, BlockId, Invite
from ..lace import Blocklace
from ..wl import compute_member, group_partition, is_genesis
from .scenario import Scenario

PASS = "PASS"
FAIL = "FAIL"
PRECONDITION_UNSATISFIED = "PRECONDITION_UNSATISFIED"


@dataclass
class OracleResult:
    name: str
    verdict: str
    witness: list[str] = field(default_factory=list)
    detail: str = ""

    def __post_init__(self):
        assert self.verdict != FAIL or self.witness, "failure requires a witness"


@dataclass
class TraceEvent:
    tick: int
    type: str
    fields: dict[str, str]


class TraceData:
    """Parsed trace: header metadata, event stream, final states."""

    def __init__(self):
        self.meta: dict[str, str] = {}
        self.agents: dict[str, dict[str, str]] = {}
        self.events: list[TraceEvent] = []
        self.finals: dict[str, dict[str, list[Block]]] = {}
        self._laces: dict[str, tuple[Blocklace, list[str]]] = {}

    def agent_id(self, name: str) -> bytes:
        return bytes.fromhex(self.agents[name]["id"])

    def events_of(self, *types: str) -> list[TraceEvent]:
        return [e for e in self.events if e.type in types]

    def final_blocks(self, name: str, kind: str = "lace") -> list[Block]:
        return self.finals.get(name, {}).get(kind, [])

    def lace_of(self, name: str) -> tuple[Blocklace, list[str]]:
        """Rebuild an agent's final blocklace, re-verifying every block.
        Returns (lace, list of blocks that failed verification)."""
        cached = self._laces.get(name)
        if cached is None:
            lace = Blocklace()
            bad = []
            for block in self.final_blocks(name, "lace"):
                if not b.verify_block(block):
                    bad.append(block.id.hex())
                lace.insert(block, verified=True)
            cached = (lace, bad)
            self._laces[name] = cached
        return cached

    def union_lace(self) -> Blocklace:
        """Every valid block seen anywhere: all finals plus all submitted
        datagrams that decode and verify."""
        union = Blocklace()
        for name in self.finals:
            for kind in ("lace", "pending"):
                for block in self.final_blocks(name, kind):
                    if block.id not in union and b.verify_block(block):
                        union.insert(block, verified=True)
        for event in self.events_of("SUBMIT"):
            raw = bytes.fromhex(event.fields.get("bytes", ""))
            try:
                block = b.decode_block(raw)
            except b.WireError:
                continue
            if block.id not in union and b.verify_block(block):
                union.insert(block, verified=True)
        return union


def parse_trace(text: str) -> TraceData:
    data = TraceData()
    for line in text.splitlines():
        if not line:
            continue
        if line.startswith("# "):
            body = line[2:]
            if body.startswith("agent "):
                fields = dict(part.split("=", 1) for part in body[6:].split(" "))
                data.agents[fields["name"]] = fields
            elif "=" in body:
                key, value = body.split("=", 1)
                data.meta[key] = value
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t")
        tick, event_type = int(parts[0]), parts[1]
        fields = dict(part.split("=", 1) for part in parts[2:])
        if event_type == "FINAL":
            block = b.decode_block(bytes.fromhex(fields["hex"]))
            data.finals.setdefault(fields["agent"], {}).setdefault(
                fields["kind"], []
            ).append(block)
        else:
            data.events.append(TraceEvent(tick, event_type, fields))
    return data


# --- oracle helpers -----------------------------------------------------------


def _scripted_follow_edges(scenario: Scenario) -> set[tuple[str, str]]:
    return {
        (e.agent, e.command["target"])
        for e in scenario.events
        if e.command["cmd"] == "follow"
    }


def _find_genesis(lace: Blocklace, founder_id: bytes, name: bytes) -> Optional[Block]:
    for block in lace.by_creator(founder_id):
        if is_genesis(block) and block.payload.name == name:
            return block
    return None


def _group_labels(scenario: Scenario) -> dict[str, tuple[str, str]]:
    """Group label -> (founder, group name)."""
    return {
        e.command["label"]: (e.agent, e.command["name"])
        for e in scenario.events
        if e.command["cmd"] == "create_group"
    }


def _texts_of_group(scenario: Scenario, founder: str, group_name: str) -> list[bytes]:
    """All plaintexts scripted into one group, responds included."""
    group_labels = {
        label
        for label, (f, n) in _group_labels(scenario).items()
        if f == founder and n == group_name
    }
    texts = []
    label_to_group: dict[str, str] = {}
    for event in scenario.events:
        command = event.command
        cmd = command["cmd"]
        if cmd == "say_group" and command["group"] in group_labels:
            texts.append(command["text"].encode("utf-8"))
            if command.get("label"):
                label_to_group[command["label"]] = command["group"]
        elif cmd == "respond_group" and label_to_group.get(command["re"]) in group_labels:
            texts.append(command["text"].encode("utf-8"))
            if command.get("label"):
                label_to_group[command["label"]] = label_to_group[command["re"]]
        elif cmd == "equivocate" and command.get("group") in group_labels:
            texts.append(command["text_a"].encode("utf-8"))
            texts.append(command["text_b"].encode("utf-8"))
    return texts


def _members_by_name(
    scenario: Scenario, data: TraceData, lace: Blocklace, gid: BlockId
) -> list[str]:
    return [
        spec.name
        for spec in scenario.agents
        if compute_member(lace, data.agent_id(spec.name), gid)
    ]


# --- the oracles ------------------------------------------------------------


def oracle_tl_liveness(scenario: Scenario, data: TraceData, params: dict) -> OracleResult:
    author, follower = params["author"], params["follower"]
    roles = scenario.roles()
    follows = _scripted_follow_edges(scenario)

    def follows_author(x: str) -> bool:
        return x == author or (x, author) in follows

    eligible = {
        spec.name
        for spec in scenario.agents
        if roles[spec.name] == "correct" and follows_author(spec.name)
    }
    if author not in eligible or follower not in eligible:
        return OracleResult(
            "tl_liveness",
            PRECONDITION_UNSATISFIED,
            detail=f"{author} or {follower} is not a correct author-following agent",
        )
    frontier, reached = [author], {author}
    while frontier:
        current = frontier.pop()
        for other in eligible - reached:
            if (current, other) in follows and (other, current) in follows:
                reached.add(other)
                frontier.append(other)
    if follower not in reached:
        return OracleResult(
            "tl_liveness",
            PRECONDITION_UNSATISFIED,
            detail="no path of correct mutual friends who all follow the author",
        )

    author_lace, _ = data.lace_of(author)
    follower_lace, _ = data.lace_of(follower)
    author_id = data.agent_id(author)
    utterances = [
        blk for blk in author_lace.by_creator(author_id) if b.is_utterance(blk.payload)
    ]
    missing = [blk.id.hex() for blk in utterances if blk.id not in follower_lace]
    if missing:
        return OracleResult(
            "tl_liveness",
            FAIL,
            witness=missing,
            detail=f"{len(missing)}/{len(utterances)} utterances missing at {follower}",
        )
    return OracleResult(
        "tl_liveness", PASS, detail=f"{len(utterances)} utterances reached {follower}"
    )


def oracle_wl_liveness(scenario: Scenario, data: TraceData, params: dict) -> OracleResult:
    founder, group_name = params["founder"], params["group_name"]
    founder_lace, _ = data.lace_of(founder)
    genesis = _find_genesis(founder_lace, data.agent_id(founder), group_name.encode())
    if genesis is None:
        return OracleResult(
            "wl_liveness", PRECONDITION_UNSATISFIED, detail="group was never created"
        )
    roles = scenario.roles()
    members = [
        m
        for m in _members_by_name(scenario, data, founder_lace, genesis.id)
        if roles[m] == "correct"
    ]
    if not members:
        return OracleResult(
            "wl_liveness", PRECONDITION_UNSATISFIED, detail="no correct members"
        )
    partitions = {}
    for member in members:
        lace, _ = data.lace_of(member)
        partitions[member] = {blk.id for blk in group_partition(lace, genesis.id)}
    union = set().union(*partitions.values())
    witness = []
    for member, ids in sorted(partitions.items()):
        missing = union - ids
        if missing:
            witness.append(
                f"{member} missing {sorted(i.hex()[:12] for i in missing)}"
            )
    if witness:
        return OracleResult("wl_liveness", FAIL, witness=witness)
    return OracleResult(
        "wl_liveness",
        PASS,
        detail=f"{len(members)} members agree on {len(union)} blocks",
    )


def oracle_attribution(scenario: Scenario, data: TraceData, params: dict) -> OracleResult:
    witness = []
    for name in scenario.correct_agents():
        lace, bad = data.lace_of(name)
        witness.extend(f"{name} stored unverifiable block {h}" for h in bad)
    for event in data.events_of("FORGE"):
        raw = bytes.fromhex(event.fields["bytes"])
        try:
            forged = b.decode_block(raw)
        except b.WireError:
            continue
        if b.verify_block(forged):
            witness.append(f"forgery {forged.id.hex()[:12]} unexpectedly verifies")
            continue
        for name in scenario.correct_agents():
            lace, _ = data.lace_of(name)
            stored = lace.get(forged.id)
            if stored is not None and b.encode_block(stored) == raw:
                witness.append(f"{name} inserted forged bytes {forged.id.hex()[:12]}")
    if witness:
        return OracleResult("attribution", FAIL, witness=witness)
    forged_count = len(data.events_of("FORGE"))
    return OracleResult(
        "attribution", PASS, detail=f"{forged_count} forgeries, none inserted"
    )


def oracle_equivocation_visibility(
    scenario: Scenario, data: TraceData, params: dict
) -> OracleResult:
    culprit = params["culprit"]
    founder, group_name = params["founder"], params["group_name"]
    culprit_id = data.agent_id(culprit)
    founder_lace, _ = data.lace_of(founder)
    genesis = _find_genesis(founder_lace, data.agent_id(founder), group_name.encode())
    if genesis is None:
        return OracleResult(
            "equivocation_visibility",
            PRECONDITION_UNSATISFIED,
            detail="group was never created",
        )
    roles = scenario.roles()
    members = [
        m
        for m in _members_by_name(scenario, data, founder_lace, genesis.id)
        if roles[m] == "correct" and m != culprit
    ]
    expected_pairs = {
        tuple(sorted((e.fields["id_a"], e.fields["id_b"])))
        for e in data.events_of("EQUIVOCATE")
        if e.fields["agent"] == culprit
    }
    reported: dict[str, set[tuple[str, str]]] = {}
    for member in members:
        lace, _ = data.lace_of(member)
        pairs = lace.detect_equivocations(culprit_id)
        reported[member] = {
            tuple(sorted((x.id.hex(), y.id.hex()))) for x, y in pairs
        }
    witness = []
    reference = reported[members[0]] if members else set()
    for member, pairs in sorted(reported.items()):
        if pairs != reference:
            witness.append(f"{member} reports a different fork set")
        if expected_pairs and not expected_pairs <= pairs:
            witness.append(f"{member} missing an injected fork pair")
        if expected_pairs and not pairs:
            witness.append(f"{member} sees no equivocation")
    if witness:
        return OracleResult("equivocation_visibility", FAIL, witness=witness)
    detail = (
        f"{len(members)} members agree on {len(reference)} fork pair(s)"
        if expected_pairs
        else "no equivocation scripted, none reported"
    )
    if expected_pairs and not reference:
        return OracleResult(
            "equivocation_visibility",
            FAIL,
            witness=["fork invisible to every member"],
        )
    return OracleResult("equivocation_visibility", PASS, detail=detail)


def oracle_privacy(scenario: Scenario, data: TraceData, params: dict) -> OracleResult:
    founder, group_name = params["founder"], params["group_name"]
    founder_lace, _ = data.lace_of(founder)
    genesis = _find_genesis(founder_lace, data.agent_id(founder), group_name.encode())
    if genesis is None:
        return OracleResult(
            "privacy", PRECONDITION_UNSATISFIED, detail="group was never created"
        )
    texts = [t for t in _texts_of_group(scenario, founder, group_name) if t]
    members = set(_members_by_name(scenario, data, founder_lace, genesis.id))
    witness = []
    for event in data.events_of("SUBMIT", "FORGE"):
        raw = bytes.fromhex(event.fields.get("bytes", ""))
        for text in texts:
            if text in raw:
                witness.append(
                    f"plaintext {text[:24]!r} on the wire at tick {event.tick}"
                )
    for spec in scenario.agents:
        if spec.name in members:
            continue
        for kind, blocks_list in data.finals.get(spec.name, {}).items():
            for block in blocks_list:
                raw = b.encode_block(block)
                for text in texts:
                    if text in raw:
                        witness.append(
                            f"plaintext {text[:24]!r} in non-member {spec.name} ({kind})"
                        )
    if witness:
        return OracleResult("privacy", FAIL, witness=sorted(set(witness)))
    return OracleResult(
        "privacy",
        PASS,
        detail=f"{len(texts)} plaintexts absent from wire and non-member state",
    )


def oracle_partition_integrity(
    scenario: Scenario, data: TraceData, params: dict
) -> OracleResult:
    witness = [
        f"violation at tick {e.tick}: {e.fields['agent']} {e.fields['kind']}"
        for e in data.events_of("VIOLATION")
    ]
    for name in scenario.correct_agents():
        lace, _ = data.lace_of(name)
        if not lace.is_closed():
            witness.append(f"{name} final blocklace not closed")
        genesis_bits = 0
        for block in lace.blocks():
            if is_genesis(block):
                genesis_bits |= lace.bit_of(block.id)
        for block in lace.blocks():
            if is_genesis(block):
                continue
            hits = lace.mask_of(block.id) & genesis_bits
            if hits == 0 or hits & (hits - 1):
                witness.append(f"{name} block {block.id.hex()[:12]} in {bin(hits).count('1')} partitions")

    union = data.union_lace()
    geneses = [blk for blk in union.blocks() if is_genesis(blk)]
    membership: dict[BlockId, set[bytes]] = {}
    for genesis in geneses:
        allowed = {
            data.agent_id(m)
            for m in _members_by_name(scenario, data, union, genesis.id)
        }
        for invite in union.by_creator(genesis.id.creator):
            if isinstance(invite.payload, Invite) and invite.pointers == frozenset(
                [genesis.id]
            ):
                allowed.add(invite.payload.target)
        membership[genesis.id] = allowed
    ids_by_name = {name: data.agent_id(name) for name in data.agents}
    by_digest = {blk.id.digest.hex(): blk for blk in union.blocks()}
    deliveries = sorted(
        {(e.fields["id"], e.fields["agent"]) for e in data.events_of("DELIVER")}
    )
    for digest, agent_name in deliveries:
        block = by_digest.get(digest)
        if block is None or isinstance(block.payload, b.Ack):
            continue
        target_id = ids_by_name.get(agent_name)
        for genesis in geneses:
            if union.observes_ids(block.id, genesis.id):
                if target_id not in membership[genesis.id]:
                    witness.append(
                        f"group block {digest[:12]} delivered to non-member {agent_name}"
                    )
    if witness:
        return OracleResult("partition_integrity", FAIL, witness=sorted(set(witness)))
    return OracleResult(
        "partition_integrity",
        PASS,
        detail=f"{len(geneses)} groups, partitions disjoint and closed throughout",
    )


ORACLES = {
    "tl_liveness": oracle_tl_liveness,
    "wl_liveness": oracle_wl_liveness,
    "attribution": oracle_attribution,
    "equivocation_visibility": oracle_equivocation_visibility,
    "privacy": oracle_privacy,
    "partition_integrity": oracle_partition_integrity,
}


def evaluate(scenario: Scenario, data: TraceData) -> list[OracleResult]:
    """Every oracle listed by the scenario, in order; none skipped."""
    results = []
    for spec in scenario.oracles:
        results.append(ORACLES[spec.name](scenario, data, spec.params))
    return results
