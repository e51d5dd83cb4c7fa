"""Weight-to-UCLM placement across tiles and cores.

Each UCLM holds one 64x64 8-bit weight block (its eight arrays store the
eight bit planes).  Static matrices are split into column strips and
placed segment-wise, round-robin over cores within a tile and then over
tiles.  Attention heads get contiguous core groups sized by both UCLM
count and, in block-sequential mode, the shared-memory footprint of their
score matrices; their key/value regions are reserved but written at run
time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

BLOCK = 64
MAX_SEG_BLOCKS = 8           # accumulator buffers for one segment must fit RF
MAX_CB_PER_CORE = 2          # score-column groups one attention core owns
SM_RESERVE = 49152           # per-tile bytes kept for staging and scalars
RING_DEPTH = 2               # per-row double buffering in pipelined mode
ATTN_CORE_RF = 2600          # softmax chunk buffers per attention core
ATTN_CB_RF = 448             # per score-column working set (per d_k block)


class CapacityExceeded(RuntimeError):
    pass


def blocks(n):
    return (n + BLOCK - 1) // BLOCK


@dataclass
class CoreSlot:
    tile: int
    core: int
    free_uclms: list = field(default_factory=list)
    rf_free: int = 0
    role: str = ""

    @property
    def key(self):
        return (self.tile, self.core)


@dataclass
class TileSlot:
    tile: int
    sm_free: int
    cores: list = field(default_factory=list)


@dataclass
class Segment:
    """Rows [rb0*64, (rb0+nrb)*64) of column strip cb, on one core."""

    matrix: str
    cb: int
    rb0: int
    nrb: int
    tile: int
    core: int
    uclms: list = field(default_factory=list)


@dataclass
class HeadPlan:
    head: int
    cores: list = field(default_factory=list)            # ordered (tile, core)
    cb_owner: dict = field(default_factory=dict)         # cb -> (tile, core)
    kt_uclms: dict = field(default_factory=dict)         # cb -> [uclm per rbk]
    v_uclms: dict = field(default_factory=dict)
    lookup_uclms: dict = field(default_factory=dict)     # (tile,core) -> [ids]

    def cbs_of(self, key):
        return sorted(cb for cb, owner in self.cb_owner.items() if owner == key)


@dataclass
class LayerPlan:
    layer: int
    tiles: list = field(default_factory=list)
    router: tuple = None
    heads: list = field(default_factory=list)
    segments: dict = field(default_factory=dict)         # matrix -> [Segment]

    def strip_segments(self, matrix, cb):
        return [s for s in self.segments[matrix] if s.cb == cb]


@dataclass
class MappingPlan:
    layers: list
    tiles_used: int
    uclms_used: int
    lookup_reserved: int

    def occupancy_report(self):
        lines = ["tile core layer occupancy"]
        for lp in self.layers:
            per_core = {}
            for segs in lp.segments.values():
                for s in segs:
                    per_core.setdefault((s.tile, s.core), []).extend(
                        f"{s.matrix}[{s.cb}]" for _ in s.uclms)
            for hp in lp.heads:
                for cb, owner in sorted(hp.cb_owner.items()):
                    per_core.setdefault(owner, []).extend(
                        [f"kt{hp.head}[{cb}]"] * len(hp.kt_uclms[cb])
                        + [f"v{hp.head}[{cb}]"] * len(hp.v_uclms[cb]))
            for (tile, core), names in sorted(per_core.items()):
                lines.append(f"{tile:4d} {core:4d} {lp.layer:5d} {len(names):2d}: "
                             + " ".join(names))
        return "\n".join(lines) + "\n"


def plan_head_sm_bytes(seq_len, sequential):
    """Shared-memory bytes one score-column group (64 columns) needs."""
    if sequential:
        return seq_len * BLOCK            # score matrix slice; output reuses it
    return RING_DEPTH * 2 * BLOCK         # logits ring + probability ring


class _LayerAlloc:
    """Tile/core bookkeeping for one layer."""

    def __init__(self, hw, weight_uclms, next_tile):
        self.hw = hw
        self.weight_uclms = weight_uclms
        self.next_tile = next_tile
        self.tiles = []
        self.tile_of = {}
        self.cores = []          # allocation order, router excluded

    def grow(self, reason):
        if self.next_tile >= self.hw.tiles:
            raise CapacityExceeded(
                f"out of tiles ({self.hw.tiles}) while placing {reason}")
        t = TileSlot(tile=self.next_tile,
                     sm_free=self.hw.shared_mem_bytes - SM_RESERVE)
        for c in range(self.hw.cores_per_tile):
            t.cores.append(CoreSlot(tile=t.tile, core=c,
                                    free_uclms=list(range(self.weight_uclms)),
                                    rf_free=self.hw.rf_bytes - 512))
        self.tiles.append(t)
        self.tile_of[t.tile] = t
        self.next_tile += 1
        self.cores.extend(t.cores)
        return t

    def take_uclms(self, slot, count, reason):
        if len(slot.free_uclms) < count:
            raise CapacityExceeded(f"core {slot.key} out of UCLMs for {reason}")
        ids, slot.free_uclms = slot.free_uclms[:count], slot.free_uclms[count:]
        return ids


def map_weights(cfg, hw, uclm_lookup=True, pipeline=True):
    """Place every layer's weights; raises CapacityExceeded when they don't fit."""
    lookup_reserve = hw.lookup_uclms_per_core if uclm_lookup else 0
    weight_uclms = hw.uclms_per_core - lookup_reserve
    if weight_uclms < 2:
        raise CapacityExceeded("lookup reservation leaves no weight UCLMs")
    layers = []
    uclms_used = 0
    next_tile = 0
    sequential = not pipeline
    for ell in range(cfg.n_layers):
        la = _LayerAlloc(hw, weight_uclms, next_tile)
        lp = LayerPlan(layer=ell)
        first = la.grow(f"layer {ell}")
        router = first.cores[0]
        router.role = "router"
        la.cores.remove(router)
        lp.router = router.key

        # ---- attention head groups (contiguous cores, tiles grown on demand)
        ncb = blocks(cfg.seq_len)
        rbk = blocks(cfg.d_k)
        sm_per_cb = plan_head_sm_bytes(cfg.seq_len, sequential)
        cursor = 0
        for head in range(cfg.h):
            hp = HeadPlan(head=head)
            cur = None
            q_mat_charged = set()
            for cb in range(ncb):
                while True:
                    if cur is not None:
                        tile = la.tile_of[cur.tile]
                        ok = (len(hp.cbs_of(cur.key)) < MAX_CB_PER_CORE
                              and len(cur.free_uclms) >= 2 * rbk
                              and cur.rf_free >= ATTN_CB_RF * rbk
                              and tile.sm_free >= sm_per_cb)
                        if ok:
                            break
                        cur = None
                    while cursor < len(la.cores) and (
                            la.cores[cursor].role
                            or len(la.cores[cursor].free_uclms) < 2 * rbk):
                        cursor += 1
                    if cursor >= len(la.cores):
                        la.grow(f"head {head} of layer {ell}")
                        continue
                    cur = la.cores[cursor]
                    cur.role = f"attn{head}"
                    cur.rf_free -= ATTN_CORE_RF
                    hp.cores.append(cur.key)
                    if cur.tile not in q_mat_charged:
                        # query rows buffer once per tile the head touches
                        la.tile_of[cur.tile].sm_free -= cfg.seq_len * BLOCK * rbk
                        q_mat_charged.add(cur.tile)
                tile = la.tile_of[cur.tile]
                tile.sm_free -= sm_per_cb
                cur.rf_free -= ATTN_CB_RF * rbk
                hp.cb_owner[cb] = cur.key
                hp.kt_uclms[cb] = la.take_uclms(cur, rbk, f"K^T head {head}")
                hp.v_uclms[cb] = la.take_uclms(cur, rbk, f"V head {head}")
                uclms_used += 2 * rbk
            if uclm_lookup:
                for key in hp.cores:
                    hp.lookup_uclms[key] = list(range(weight_uclms, hw.uclms_per_core))
            lp.heads.append(hp)

        # ---- static matrices: column strips split into row segments
        shapes = [("wq", cfg.d, cfg.d), ("wk", cfg.d, cfg.d), ("wv", cfg.d, cfg.d),
                  ("wo", cfg.d, cfg.d), ("w1", cfg.d, cfg.h_ff), ("w2", cfg.h_ff, cfg.d)]
        rr = 0
        for name, K, N in shapes:
            segs = []
            nrb_total = blocks(K)
            for cb in range(blocks(N)):
                rb0 = 0
                while rb0 < nrb_total:
                    nrb = min(MAX_SEG_BLOCKS, weight_uclms, nrb_total - rb0)
                    rf_need = nrb * (256 + 64) + 384
                    placed = None
                    probes = 0
                    while placed is None:
                        if probes >= len(la.cores):
                            t = la.grow(f"{name} strip {cb} of layer {ell}")
                            placed = t.cores[0]
                            break
                        cand = la.cores[rr % len(la.cores)]
                        rr += 1
                        probes += 1
                        if cand.role.startswith("attn"):
                            continue
                        if len(cand.free_uclms) >= nrb and cand.rf_free >= rf_need:
                            placed = cand
                    placed.role = placed.role or "mm"
                    placed.rf_free -= rf_need
                    ids = la.take_uclms(placed, nrb, f"{name} strip {cb}")
                    uclms_used += nrb
                    segs.append(Segment(matrix=name, cb=cb, rb0=rb0, nrb=nrb,
                                        tile=placed.tile, core=placed.core, uclms=ids))
                    rb0 += nrb
            lp.segments[name] = segs
        lp.tiles = [t.tile for t in la.tiles]
        layers.append(lp)
        next_tile = la.next_tile
    return MappingPlan(layers=layers, tiles_used=next_tile,
                       uclms_used=uclms_used, lookup_reserved=lookup_reserve)
