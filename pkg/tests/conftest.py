import random

import pytest

from blocklace import blocks as b
from blocklace import crypto
from blocklace.lace import Blocklace

KEYPAIRS = [crypto.keygen(i) for i in range(6)]


@pytest.fixture
def kp():
    return KEYPAIRS[0]


@pytest.fixture
def kp2():
    return KEYPAIRS[1]


def make_block(kp, payload=None, pointers=(), address="addr/0"):
    return b.new_block(kp, address, payload if payload is not None else b.Empty(), pointers)


def random_blocklace(rng: random.Random, max_blocks: int = 20, creators: int = 4):
    """A random valid block DAG: real keys, random pointer subsets (so forks
    and multi-parent joins both occur), returned in creation order.  A
    blocklace is a set, so identical re-creations are skipped."""
    n = rng.randint(1, max_blocks)
    out = []
    seen = set()
    for i in range(n):
        keypair = KEYPAIRS[rng.randrange(creators)]
        pool = [blk.id for blk in out]
        pointers = rng.sample(pool, rng.randint(0, min(3, len(pool))))
        kind = rng.randrange(3)
        if kind == 0:
            payload = b.Say(f"s{i}".encode())
        elif kind == 1:
            payload = b.Empty()
        else:
            payload = b.Ack()
        blk = b.new_block(keypair, f"addr/{rng.randrange(3)}", payload, pointers)
        if blk.id not in seen:
            seen.add(blk.id)
            out.append(blk)
    return out


def lace_of(blocks_list, shuffle_rng=None):
    """Insert blocks (optionally out of order) into a fresh Blocklace."""
    order = list(blocks_list)
    if shuffle_rng is not None:
        shuffle_rng.shuffle(order)
    lace = Blocklace()
    for blk in order:
        lace.insert(blk)
    return lace
