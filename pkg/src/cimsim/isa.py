"""Instruction set and compiled-program container.

Instruction streams are kept as numpy structured arrays (multi-million
instruction programs are routine), with a small dataclass view for
construction and inspection.  Operand addresses are byte offsets into the
owning space; element widths are 8 (signed), 16 (unsigned exponent
values) or 32 (signed accumulators).

Field conventions per opcode:

LOAD/STORE   dst <- src1, ``n`` elements of ``ebits`` (dst) / ``s1e`` (src).
             XBAR destinations write weight cells of UCLM ``uclm`` starting
             at element offset ``dad`` (row-major).
TRANSPOSE    like STORE to XBAR but column-order (address-remapped write).
MVM          dst(acc32) <- uclm weights x src1(vec8); ``n`` input rows,
             ``imm`` output columns; flag ACC accumulates into dst.
EXP_SIMD     dst(u16) <- exp(src1), table lookups on ``imm>>8`` consecutive
             lookup-mode UCLMs starting at ``uclm``; ``imm&0xff`` selects
             the residual policy.
LUT_SWITCH   flip UCLM ``uclm`` mode; ``imm`` 0=compute 1=lookup.
VFU_OP       lane-parallel ops, sub-op in ``vfu``.  SHIFT uses ``imm`` as
             the shift count, or derives it from the scalar src2 when flag
             DYN is set (``imm`` 0: src2 is the count; 1: src2 is a softmax
             denominator and the per-row output scale rule applies).
             DIV divides src1 by the scalar denominator src2 via
             reciprocal-multiply.  EXP evaluates the residual policy in
             ``imm`` entirely on the vector unit.  GELU/LNORM carry packed
             (in_scale, out_scale) bytes in ``imm``.
TREE_GATHER  zero-cost marker recording a gather level (vfu MAX or ADD).
SEND/RECV    move ``n`` elements to/from core (ptile, pcore) under ``tag``.
BARRIER      synchronize the cores of the owning tile named by the bit
             mask in ``imm``; ``tag`` is the barrier instance.
HALT         end of stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from enum import IntEnum

import numpy as np


class Opcode(IntEnum):
    LOAD = 1
    STORE = 2
    MVM = 3
    EXP_SIMD = 4
    LUT_SWITCH = 5
    VFU_OP = 6
    TREE_GATHER = 7
    TRANSPOSE = 8
    SEND = 9
    RECV = 10
    BARRIER = 11
    HALT = 12


class VfuOp(IntEnum):
    NONE = 0
    MAX = 1
    ADD = 2
    SUB = 3
    MUL = 4
    DIV = 5
    SHIFT = 6
    GELU = 7
    LNORM = 8
    EXP = 9


class MemSpace(IntEnum):
    NONE = 0
    RF = 1
    SM = 2
    GB = 3
    DRAM = 4
    XBAR = 5


class Flag(IntEnum):
    ACC = 1        # MVM accumulates into dst
    COL = 2        # XBAR write in column order
    DYN = 4        # shift amount derived from scalar src2
    SCALAR2 = 8    # src2 is a broadcast scalar


class Block(IntEnum):
    OTHER = 0
    QKV = 1
    LOGITS = 2
    SOFTMAX = 3
    SV = 4
    OUT_PROJ = 5
    FFN = 6


def block_tag(block, layer=0):
    return int(block) | (min(layer, 31) << 3)


def tag_block(blk):
    return Block(blk & 0x7)


def tag_layer(blk):
    return blk >> 3


INSTR_DTYPE = np.dtype([
    ("op", "<u1"), ("vfu", "<u1"), ("flags", "<u1"), ("ebits", "<u1"),
    ("n", "<u4"), ("uclm", "<i2"), ("ptile", "<i2"), ("pcore", "<i2"),
    ("tag", "<i4"), ("imm", "<i8"), ("blk", "<u1"),
    ("dsp", "<i1"), ("dad", "<i4"), ("drg", "<i4"),
    ("s1s", "<i1"), ("s1a", "<i4"), ("s1r", "<i4"), ("s1e", "<u1"),
    ("s2s", "<i1"), ("s2a", "<i4"), ("s2r", "<i4"), ("s2e", "<u1"),
])


@dataclass
class Instruction:
    """Friendly view of one instruction row."""

    op: Opcode
    vfu: VfuOp = VfuOp.NONE
    flags: int = 0
    ebits: int = 8
    n: int = 0
    uclm: int = -1
    ptile: int = -1
    pcore: int = -1
    tag: int = 0
    imm: int = 0
    blk: int = 0
    dsp: int = MemSpace.NONE
    dad: int = 0
    drg: int = -1
    s1s: int = MemSpace.NONE
    s1a: int = 0
    s1r: int = -1
    s1e: int = 8
    s2s: int = MemSpace.NONE
    s2a: int = 0
    s2r: int = -1
    s2e: int = 8

    def to_row(self):
        return tuple(int(getattr(self, f.name)) for f in fields(self))

    @classmethod
    def from_row(cls, row):
        vals = {name: int(row[name]) for name in INSTR_DTYPE.names}
        vals["op"] = Opcode(vals["op"])
        vals["vfu"] = VfuOp(vals["vfu"])
        return cls(**vals)


def pack_instructions(instrs):
    """List of Instruction (or row tuples) -> structured array."""
    rows = [i.to_row() if isinstance(i, Instruction) else tuple(i) for i in instrs]
    return np.array(rows, dtype=INSTR_DTYPE)


def empty_stream():
    return np.empty(0, dtype=INSTR_DTYPE)


@dataclass
class UclmImage:
    """Initial contents and mode of one UCLM's weight block."""

    weights: np.ndarray            # int8, (array_dim, array_dim)
    mode: int = 0                  # 0 = compute, 1 = lookup

    def __eq__(self, other):
        return (isinstance(other, UclmImage) and self.mode == other.mode
                and np.array_equal(self.weights, other.weights))


@dataclass
class Program:
    """Per-core instruction streams plus initial UCLM state and metadata."""

    streams: dict = field(default_factory=dict)   # (tile, core) -> structured array
    images: dict = field(default_factory=dict)    # (tile, core, uclm) -> UclmImage
    metadata: dict = field(default_factory=dict)

    def cores(self):
        return sorted(self.streams)

    def instruction_count(self):
        return sum(len(s) for s in self.streams.values())

    def opcode_counts(self):
        counts = {}
        for stream in self.streams.values():
            ops, cnt = np.unique(stream["op"], return_counts=True)
            for o, c in zip(ops, cnt):
                name = Opcode(int(o)).name
                counts[name] = counts.get(name, 0) + int(c)
        return counts

    def __eq__(self, other):
        if not isinstance(other, Program):
            return NotImplemented
        if sorted(self.streams) != sorted(other.streams):
            return False
        for key, arr in self.streams.items():
            if not np.array_equal(arr, other.streams[key]):
                return False
        return self.images == other.images and self.metadata == other.metadata


# ---------------------------------------------------------------------------
# Static validation
# ---------------------------------------------------------------------------

_SPACE_NAMES = {int(s): s.name for s in MemSpace}


def _capacity(space, hw):
    return {
        int(MemSpace.RF): hw.rf_bytes,
        int(MemSpace.SM): hw.shared_mem_bytes,
        int(MemSpace.GB): hw.gb_bytes,
    }.get(int(space))


def validate(prog, hw):
    """Static diagnostics: empty list iff the program is well formed.

    Checks opcode closure, operand capacity bounds, UCLM references and
    compute/lookup mode consistency in program order, and SEND/RECV
    pairing.  Diagnostics are deterministic and name the offending core
    and instruction index.
    """
    diags = []
    sends = {}
    recvs = {}
    for (tile, core) in sorted(prog.streams):
        arr = prog.streams[(tile, core)]
        where = f"tile {tile} core {core}"
        if len(arr) == 0:
            continue
        ops = arr["op"]
        bad = ~np.isin(ops, [int(o) for o in Opcode])
        for i in np.nonzero(bad)[0]:
            diags.append(f"{where} [{i}]: unknown opcode {int(ops[i])}")
        _check_capacity(arr, tile, core, hw, diags)
        _check_uclm_modes(prog, arr, tile, core, hw, diags)
        # collect message endpoints
        for kind, table in ((Opcode.SEND, sends), (Opcode.RECV, recvs)):
            idx = np.nonzero(ops == int(kind))[0]
            for i in idx:
                r = arr[i]
                if kind is Opcode.SEND:
                    key = (tile, core, int(r["ptile"]), int(r["pcore"]), int(r["tag"]))
                else:
                    key = (int(r["ptile"]), int(r["pcore"]), tile, core, int(r["tag"]))
                table.setdefault(key, []).append((tile, core, int(i)))
    for key in sorted(set(sends) | set(recvs)):
        ns, nr = len(sends.get(key, ())), len(recvs.get(key, ()))
        if ns != nr:
            src = f"tile {key[0]} core {key[1]}"
            dst = f"tile {key[2]} core {key[3]}"
            diags.append(
                f"message {src} -> {dst} tag {key[4]}: {ns} SEND vs {nr} RECV")
    return diags


def _operand_extents(arr):
    """(space, addr, nbytes) triples for dst/src1/src2 of every row."""
    n = arr["n"].astype(np.int64)
    out = []
    for sp, ad, eb in (("dsp", "dad", "ebits"), ("s1s", "s1a", "s1e"), ("s2s", "s2a", "s2e")):
        nbytes = n * (arr[eb].astype(np.int64) // 8)
        out.append((arr[sp].astype(np.int64), arr[ad].astype(np.int64), nbytes))
    return out


def _check_capacity(arr, tile, core, hw, diags):
    where = f"tile {tile} core {core}"
    for name, (space, addr, nbytes) in zip(("dst", "src1", "src2"), _operand_extents(arr)):
        for sp in (MemSpace.RF, MemSpace.SM, MemSpace.GB):
            cap = _capacity(sp, hw)
            mask = space == int(sp)
            over = mask & ((addr < 0) | (addr + nbytes > cap))
            for i in np.nonzero(over)[0]:
                diags.append(
                    f"{where} [{i}]: {name} {sp.name} range "
                    f"[{int(addr[i])}, {int(addr[i] + nbytes[i])}) exceeds {cap} bytes")


def _check_uclm_modes(prog, arr, tile, core, hw, diags):
    where = f"tile {tile} core {core}"
    ops = arr["op"]
    touch = np.isin(ops, [int(Opcode.MVM), int(Opcode.EXP_SIMD),
                          int(Opcode.LUT_SWITCH), int(Opcode.STORE), int(Opcode.TRANSPOSE)])
    idx = np.nonzero(touch)[0]
    modes = {u: prog.images[(tile, core, u)].mode
             for u in range(hw.uclms_per_core) if (tile, core, u) in prog.images}
    for i in idx:
        r = arr[i]
        op = int(r["op"])
        if op == int(Opcode.LUT_SWITCH):
            modes[int(r["uclm"])] = int(r["imm"])
            continue
        if op in (int(Opcode.STORE), int(Opcode.TRANSPOSE)) and int(r["dsp"]) != int(MemSpace.XBAR):
            continue
        if op == int(Opcode.EXP_SIMD):
            base, cnt = int(r["uclm"]), max(1, int(r["imm"]) >> 8)
            units = range(base, base + cnt)
        else:
            units = (int(r["uclm"]),)
        for u in units:
            if u < 0 or u >= hw.uclms_per_core:
                diags.append(f"{where} [{i}]: UCLM id {u} out of range")
                continue
            if op == int(Opcode.MVM) and (tile, core, u) not in prog.images:
                diags.append(f"{where} [{i}]: MVM references unmapped UCLM {u}")
                continue
            mode = modes.get(u, 0)
            if op == int(Opcode.MVM) and mode != 0:
                diags.append(f"{where} [{i}]: MVM on UCLM {u} while in lookup mode")
            if op == int(Opcode.EXP_SIMD) and mode != 1:
                diags.append(f"{where} [{i}]: EXP_SIMD on UCLM {u} not in lookup mode")
