import numpy as np
import pytest

from cimsim.hwconfig import HardwareConfig
from cimsim.isa import (
    INSTR_DTYPE,
    Instruction,
    MemSpace,
    Opcode,
    Program,
    UclmImage,
    VfuOp,
    pack_instructions,
    validate,
)
from cimsim.progbin import ProgramFormatError, deserialize, disassemble, serialize


@pytest.fixture
def hw():
    return HardwareConfig(tiles=2)


def make_program(instrs=(), images=None, meta=None):
    streams = {(0, 0): pack_instructions(list(instrs))} if instrs else {}
    return Program(streams=streams, images=images or {}, metadata=meta or {})


def test_empty_program_validates_clean(hw):
    assert validate(make_program(), hw) == []


def test_send_without_recv_flagged(hw):
    send = Instruction(Opcode.SEND, n=4, s1s=MemSpace.RF, s1a=0, s1e=8,
                       ptile=0, pcore=1, tag=7)
    diags = validate(make_program([send]), hw)
    assert len(diags) == 1 and "tag 7" in diags[0] and "1 SEND vs 0 RECV" in diags[0]


def test_matched_send_recv_clean(hw):
    send = Instruction(Opcode.SEND, n=4, s1s=MemSpace.RF, s1a=0, s1e=8,
                       ptile=0, pcore=1, tag=7)
    recv = Instruction(Opcode.RECV, n=4, dsp=MemSpace.RF, dad=0, ebits=8,
                       ptile=0, pcore=0, tag=7)
    prog = Program(streams={(0, 0): pack_instructions([send]),
                            (0, 1): pack_instructions([recv])})
    assert validate(prog, hw) == []


def test_register_file_capacity_diagnostic(hw):
    # one byte past the 4 KB register file
    load = Instruction(Opcode.LOAD, n=8, dsp=MemSpace.RF, dad=4089, ebits=8,
                       s1s=MemSpace.SM, s1a=0, s1e=8)
    diags = validate(make_program([load]), hw)
    assert len(diags) == 1 and "RF" in diags[0] and "4096" in diags[0]


def test_shared_mem_capacity_ok_at_edge(hw):
    load = Instruction(Opcode.LOAD, n=64, dsp=MemSpace.RF, dad=0, ebits=8,
                       s1s=MemSpace.SM, s1a=hw.shared_mem_bytes - 64, s1e=8)
    assert validate(make_program([load]), hw) == []


def test_mvm_requires_mapped_compute_mode_uclm(hw):
    mvm = Instruction(Opcode.MVM, n=64, imm=64, uclm=3, dsp=MemSpace.RF, dad=0,
                      ebits=32, s1s=MemSpace.RF, s1a=2048, s1e=8)
    diags = validate(make_program([mvm]), hw)
    assert any("unmapped UCLM 3" in d for d in diags)

    images = {(0, 0, 3): UclmImage(np.zeros((64, 64), np.int8), mode=1)}
    diags = validate(make_program([mvm], images=images), hw)
    assert any("lookup mode" in d for d in diags)

    switch = Instruction(Opcode.LUT_SWITCH, uclm=3, imm=0)
    assert validate(make_program([switch, mvm], images=images), hw) == []


def test_exp_simd_requires_lookup_mode(hw):
    images = {(0, 0, 0): UclmImage(np.zeros((64, 64), np.int8), mode=0)}
    exp = Instruction(Opcode.EXP_SIMD, n=8, uclm=0, imm=(1 << 8) | 1,
                      dsp=MemSpace.RF, dad=0, ebits=16,
                      s1s=MemSpace.RF, s1a=1024, s1e=8)
    diags = validate(make_program([exp], images=images), hw)
    assert any("not in lookup mode" in d for d in diags)
    switch = Instruction(Opcode.LUT_SWITCH, uclm=0, imm=1)
    assert validate(make_program([switch, exp], images=images), hw) == []


def test_validate_deterministic(hw):
    bad = Instruction(Opcode.LOAD, n=9000, dsp=MemSpace.RF, dad=0, ebits=8,
                      s1s=MemSpace.SM, s1a=0, s1e=8)
    send = Instruction(Opcode.SEND, n=1, s1s=MemSpace.RF, s1a=0, s1e=8,
                       ptile=1, pcore=0, tag=3)
    prog = make_program([bad, send])
    assert validate(prog, hw) == validate(prog, hw)


# ------------------------------------------------------------ serialization

def random_program(rng, n_instr=20):
    ops = [Opcode.LOAD, Opcode.STORE, Opcode.MVM, Opcode.VFU_OP, Opcode.SEND,
           Opcode.RECV, Opcode.BARRIER, Opcode.EXP_SIMD, Opcode.HALT]
    streams = {}
    for tile in range(int(rng.integers(1, 3))):
        for core in range(int(rng.integers(1, 3))):
            instrs = []
            for _ in range(int(rng.integers(1, n_instr))):
                instrs.append(Instruction(
                    op=ops[int(rng.integers(0, len(ops)))],
                    vfu=VfuOp(int(rng.integers(0, 10))),
                    flags=int(rng.integers(0, 16)),
                    ebits=int(rng.choice([8, 16, 32])),
                    n=int(rng.integers(0, 1 << 16)),
                    uclm=int(rng.integers(-1, 16)),
                    ptile=int(rng.integers(-1, 4)),
                    pcore=int(rng.integers(-1, 8)),
                    tag=int(rng.integers(0, 1 << 20)),
                    imm=int(rng.integers(-(1 << 40), 1 << 40)),
                    blk=int(rng.integers(0, 256)),
                    dsp=int(rng.integers(0, 6)), dad=int(rng.integers(0, 1 << 18)),
                    drg=int(rng.integers(-1, 1000)),
                    s1s=int(rng.integers(0, 6)), s1a=int(rng.integers(0, 1 << 18)),
                    s1r=int(rng.integers(-1, 1000)), s1e=int(rng.choice([8, 16, 32])),
                    s2s=int(rng.integers(0, 6)), s2a=int(rng.integers(0, 1 << 18)),
                    s2r=int(rng.integers(-1, 1000)), s2e=int(rng.choice([8, 16, 32])),
                ))
            streams[(tile, core)] = pack_instructions(instrs)
    images = {}
    for u in range(int(rng.integers(0, 4))):
        images[(0, 0, u)] = UclmImage(
            rng.integers(-128, 128, (64, 64)).astype(np.int8),
            mode=int(rng.integers(0, 2)))
    meta = {"seed": int(rng.integers(0, 1 << 30)), "name": "random", "opts": [1, 2]}
    return Program(streams=streams, images=images, metadata=meta)


def test_roundtrip_small_program():
    instrs = [
        Instruction(Opcode.LOAD, n=64, dsp=MemSpace.RF, dad=0, ebits=8,
                    s1s=MemSpace.SM, s1a=128, s1e=8),
        Instruction(Opcode.VFU_OP, vfu=VfuOp.ADD, n=64, dsp=MemSpace.RF, dad=64,
                    ebits=32, s1s=MemSpace.RF, s1a=0, s1e=32,
                    s2s=MemSpace.RF, s2a=256, s2e=32),
        Instruction(Opcode.HALT),
    ]
    prog = make_program(instrs, meta={"k": 1})
    assert deserialize(serialize(prog)) == prog


def test_roundtrip_corpus_of_random_programs():
    rng = np.random.default_rng(42)
    for _ in range(100):
        prog = random_program(rng)
        blob = serialize(prog)
        back = deserialize(blob)
        assert back == prog
        assert serialize(back) == blob


def test_truncated_stream_rejected():
    prog = make_program([Instruction(Opcode.HALT)])
    blob = serialize(prog)
    with pytest.raises(ProgramFormatError):
        deserialize(blob[:10])
    with pytest.raises(ProgramFormatError):
        deserialize(blob[:-5])


def test_bad_magic_and_version_rejected():
    blob = serialize(make_program([Instruction(Opcode.HALT)]))
    with pytest.raises(ProgramFormatError, match="magic"):
        deserialize(b"XXXX" + blob[4:])
    with pytest.raises(ProgramFormatError, match="version"):
        deserialize(blob[:4] + b"\x63\x00" + blob[6:])


def test_unknown_opcode_rejected_on_load():
    prog = make_program([Instruction(Opcode.HALT)])
    arr = prog.streams[(0, 0)]
    arr["op"][0] = 200
    with pytest.raises(ProgramFormatError, match="opcode"):
        deserialize(serialize(prog))


def test_disassembly_deterministic_one_line_per_instruction():
    rng = np.random.default_rng(0)
    prog = random_program(rng)
    text = disassemble(prog)
    assert text == disassemble(prog)
    n_lines = sum(1 for line in text.splitlines() if not line.startswith(";"))
    assert n_lines == prog.instruction_count()
