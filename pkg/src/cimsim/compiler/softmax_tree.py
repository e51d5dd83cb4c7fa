"""Multi-core gather trees for the softmax maxima and sums.

Partial values live one per core; levels pair cores at stride 2^k so the
root finishes after ceil(log2 C) levels.  Within a tile a transfer is a
store/barrier/load through shared memory; across tiles it is a
send/receive pair.  Slots ping-pong on row parity so consecutive rows
never race on the same scratch location.
"""

from __future__ import annotations

import math

from ..isa import Block, Flag, MemSpace, Opcode, VfuOp, block_tag


def gather_depth(n_cores):
    return max(0, math.ceil(math.log2(n_cores))) if n_cores > 1 else 0


def tree_levels(n_cores):
    """Levels of (dst_index, src_index) pairs reducing everything into index 0."""
    levels = []
    step = 1
    while step < n_cores:
        pairs = [(i, i + step) for i in range(0, n_cores - step, 2 * step)]
        levels.append(pairs)
        step *= 2
    return levels


class TreeScratch:
    """Per-(group, purpose) shared-memory slots and message tags."""

    def __init__(self, builder, group, purpose, nbytes):
        self.builder = builder
        self.group = group
        self.purpose = purpose
        self.nbytes = nbytes
        self.slots = {}     # (dst_core_idx, src_core_idx, parity) -> (rid, addr)
        self.tags = {}      # (dst_core_idx, src_core_idx) -> tag
        self.bcast = {}     # (tile, parity) -> (rid, addr)
        self.bcast_tags = {}

    def slot(self, di, si, parity):
        key = (di, si, parity)
        if key not in self.slots:
            tile = self.group[di][0]
            self.slots[key] = self.builder.sm_alloc(
                tile, self.nbytes, "stage", f"{self.purpose}_p{di}_{si}_{parity}")
        return self.slots[key]

    def tag(self, di, si):
        key = (di, si)
        if key not in self.tags:
            self.tags[key] = self.builder.new_tag()
        return self.tags[key]

    def bcast_slot(self, tile, parity):
        key = (tile, parity)
        if key not in self.bcast:
            self.bcast[key] = self.builder.sm_alloc(
                tile, self.nbytes, "stage", f"{self.purpose}_bc{tile}_{parity}")
        return self.bcast[key]

    def bcast_tag(self, tile):
        if tile not in self.bcast_tags:
            self.bcast_tags[tile] = self.builder.new_tag()
        return self.bcast_tags[tile]


def emit_reduce(b, scratch, group, rf_addr, parity, op, n, ebits, blk, marker=True):
    """Tree-reduce the per-core value at ``rf_addr`` into cores[0].

    ``group`` is the ordered list of core keys; every core holds ``n``
    elements of ``ebits`` at the same RF address.  Returns the number of
    levels emitted.
    """
    levels = tree_levels(len(group))
    if marker and group:
        b.ins(group[0], Opcode.TREE_GATHER, vfu=op, n=n,
              imm=len(levels), blk=blk)
    nbytes = n * ebits // 8
    for pairs in levels:
        for di, si in pairs:
            dst, src = group[di], group[si]
            if dst[0] == src[0]:
                rid, addr = scratch.slot(di, si, parity)
                b.ins(src, Opcode.STORE, n=n, ebits=ebits,
                      dsp=MemSpace.SM, dad=addr, drg=rid,
                      s1s=MemSpace.RF, s1a=rf_addr, s1e=ebits, blk=blk)
                b.barrier(dst[0], [dst[1], src[1]], blk=blk)
                b.ins(dst, Opcode.LOAD, n=n, ebits=ebits,
                      dsp=MemSpace.RF, dad=b.scratch_rf(dst, nbytes),
                      s1s=MemSpace.SM, s1a=addr, s1r=rid, s1e=ebits, blk=blk)
            else:
                tag = scratch.tag(di, si)
                b.ins(src, Opcode.SEND, n=n, s1s=MemSpace.RF, s1a=rf_addr,
                      s1e=ebits, ptile=dst[0], pcore=dst[1], tag=tag, blk=blk)
                b.ins(dst, Opcode.RECV, n=n, ebits=ebits,
                      dsp=MemSpace.RF, dad=b.scratch_rf(dst, nbytes),
                      ptile=src[0], pcore=src[1], tag=tag, blk=blk)
            b.ins(dst, Opcode.VFU_OP, vfu=op, flags=Flag.REDUCE, n=n,
                  ebits=ebits, dsp=MemSpace.RF, dad=rf_addr,
                  s1s=MemSpace.RF, s1a=b.scratch_rf(dst, nbytes), s1e=ebits,
                  s2s=MemSpace.RF, s2a=rf_addr, s2e=ebits, blk=blk)
    return len(levels)


def emit_broadcast(b, scratch, group, rf_addr, parity, n, ebits, blk):
    """Copy cores[0]'s value at ``rf_addr`` to every core of the group."""
    if len(group) <= 1:
        return
    root = group[0]
    nbytes = n * ebits // 8
    tiles = {}
    for key in group:
        tiles.setdefault(key[0], []).append(key)
    for tile, members in sorted(tiles.items()):
        lead = members[0] if tile != root[0] else root
        if tile != root[0]:
            tag = scratch.bcast_tag(tile)
            b.ins(root, Opcode.SEND, n=n, s1s=MemSpace.RF, s1a=rf_addr,
                  s1e=ebits, ptile=lead[0], pcore=lead[1], tag=tag, blk=blk)
            b.ins(lead, Opcode.RECV, n=n, ebits=ebits, dsp=MemSpace.RF,
                  dad=rf_addr, ptile=root[0], pcore=root[1], tag=tag, blk=blk)
        others = [k for k in members if k != lead]
        if not others:
            continue
        rid, addr = scratch.bcast_slot(tile, parity)
        b.ins(lead, Opcode.STORE, n=n, ebits=ebits, dsp=MemSpace.SM, dad=addr,
              drg=rid, s1s=MemSpace.RF, s1a=rf_addr, s1e=ebits, blk=blk)
        b.barrier(tile, [k[1] for k in members], blk=blk)
        for k in others:
            b.ins(k, Opcode.LOAD, n=n, ebits=ebits, dsp=MemSpace.RF, dad=rf_addr,
                  s1s=MemSpace.SM, s1a=addr, s1r=rid, s1e=ebits, blk=blk)
        # second fence so the next row's store cannot overtake slow readers
        b.barrier(tile, [k[1] for k in members], blk=blk)
