"""Flat little-endian program container with a section table, plus disassembly.

Layout: magic 'CIMP', u16 version, u16 section count, then section entries
(8-byte name, u64 offset, u64 size) and raw section payloads.  Sections:
'meta' (UTF-8 JSON), 'streams' (per-core packed instruction rows) and
'images' (initial UCLM weight blocks).  Round trips are byte exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .isa import INSTR_DTYPE, Instruction, MemSpace, Opcode, Program, UclmImage, VfuOp

MAGIC = b"CIMP"
VERSION = 1

_HDR = struct.Struct("<4sHH")
_SECT = struct.Struct("<8sQQ")


class ProgramFormatError(ValueError):
    """Malformed container: bad magic/version, truncation, unknown opcode."""


def serialize(prog: Program) -> bytes:
    sections = []

    meta = json.dumps(prog.metadata, sort_keys=True, separators=(",", ":")).encode()
    sections.append((b"meta", meta))

    parts = [struct.pack("<I", len(prog.streams))]
    for (tile, core) in sorted(prog.streams):
        arr = np.ascontiguousarray(prog.streams[(tile, core)], dtype=INSTR_DTYPE)
        parts.append(struct.pack("<HHI", tile, core, len(arr)))
        parts.append(arr.tobytes())
    sections.append((b"streams", b"".join(parts)))

    parts = [struct.pack("<I", len(prog.images))]
    for key in sorted(prog.images):
        img = prog.images[key]
        parts.append(struct.pack("<HHHBB", *key, img.mode, 0))
        parts.append(np.ascontiguousarray(img.weights, dtype=np.int8).tobytes())
    sections.append((b"images", b"".join(parts)))

    header = _HDR.pack(MAGIC, VERSION, len(sections))
    offset = len(header) + len(sections) * _SECT.size
    table = b""
    body = b""
    for name, payload in sections:
        table += _SECT.pack(name.ljust(8, b"\0"), offset, len(payload))
        offset += len(payload)
        body += payload
    return header + table + body


def deserialize(blob: bytes) -> Program:
    if len(blob) < _HDR.size:
        raise ProgramFormatError("truncated header")
    magic, version, nsect = _HDR.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ProgramFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProgramFormatError(f"unsupported version {version}")
    table_end = _HDR.size + nsect * _SECT.size
    if len(blob) < table_end:
        raise ProgramFormatError("truncated section table")
    sections = {}
    for i in range(nsect):
        name, off, size = _SECT.unpack_from(blob, _HDR.size + i * _SECT.size)
        if off + size > len(blob):
            raise ProgramFormatError(f"section {name!r} extends past end of stream")
        sections[name.rstrip(b"\0")] = blob[off:off + size]
    for required in (b"meta", b"streams", b"images"):
        if required not in sections:
            raise ProgramFormatError(f"missing section {required!r}")

    metadata = json.loads(sections[b"meta"].decode())

    raw = sections[b"streams"]
    pos = 4
    (nstreams,) = struct.unpack_from("<I", raw, 0)
    streams = {}
    for _ in range(nstreams):
        tile, core, n = struct.unpack_from("<HHI", raw, pos)
        pos += 8
        nbytes = n * INSTR_DTYPE.itemsize
        if pos + nbytes > len(raw):
            raise ProgramFormatError("truncated instruction stream")
        arr = np.frombuffer(raw[pos:pos + nbytes], dtype=INSTR_DTYPE).copy()
        pos += nbytes
        bad = ~np.isin(arr["op"], [int(o) for o in Opcode])
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise ProgramFormatError(
                f"unknown opcode {int(arr['op'][i])} in tile {tile} core {core}")
        streams[(tile, core)] = arr

    raw = sections[b"images"]
    (nimages,) = struct.unpack_from("<I", raw, 0)
    pos = 4
    images = {}
    dim_bytes = 64 * 64
    for _ in range(nimages):
        tile, core, uclm, mode, _pad = struct.unpack_from("<HHHBB", raw, pos)
        pos += 8
        if pos + dim_bytes > len(raw):
            raise ProgramFormatError("truncated UCLM image")
        weights = np.frombuffer(raw[pos:pos + dim_bytes], dtype=np.int8).reshape(64, 64).copy()
        pos += dim_bytes
        images[(tile, core, uclm)] = UclmImage(weights=weights, mode=mode)

    return Program(streams=streams, images=images, metadata=metadata)


# ---------------------------------------------------------------------------
# Disassembly
# ---------------------------------------------------------------------------

def _operand(space, addr, region, ebits):
    if int(space) == int(MemSpace.NONE):
        return "-"
    name = MemSpace(int(space)).name.lower()
    s = f"{name}[{int(addr)}]x{int(ebits)}"
    if int(region) >= 0:
        s += f"@r{int(region)}"
    return s


def format_instruction(row):
    op = Opcode(int(row["op"]))
    parts = [op.name]
    if int(row["vfu"]) != int(VfuOp.NONE):
        parts[0] += f".{VfuOp(int(row['vfu'])).name.lower()}"
    parts.append(f"n={int(row['n'])}")
    parts.append("dst=" + _operand(row["dsp"], row["dad"], row["drg"], row["ebits"]))
    parts.append("src1=" + _operand(row["s1s"], row["s1a"], row["s1r"], row["s1e"]))
    parts.append("src2=" + _operand(row["s2s"], row["s2a"], row["s2r"], row["s2e"]))
    if int(row["uclm"]) >= 0:
        parts.append(f"uclm={int(row['uclm'])}")
    if op in (Opcode.SEND, Opcode.RECV):
        parts.append(f"peer=({int(row['ptile'])},{int(row['pcore'])})")
    if int(row["tag"]) != 0:
        parts.append(f"tag={int(row['tag'])}")
    if int(row["imm"]) != 0:
        parts.append(f"imm={int(row['imm'])}")
    if int(row["flags"]) != 0:
        parts.append(f"flags={int(row['flags']):#x}")
    parts.append(f"blk={int(row['blk'])}")
    return " ".join(parts)


def disassemble(prog: Program) -> str:
    lines = []
    for (tile, core) in sorted(prog.streams):
        lines.append(f"; tile {tile} core {core}")
        for i, row in enumerate(prog.streams[(tile, core)]):
            lines.append(f"{i:8d}: {format_instruction(row)}")
    return "\n".join(lines) + "\n"
