"""Block-level def-use chains restricted to values derived from function parameters."""

from __future__ import annotations

from .cfg import BasicBlockList, Instr

_PARAM_SITE = -1  # pseudo block holding the incoming scalar parameters


def _value_operands(ins: Instr) -> tuple:
    if ins.op == "load":
        return ()
    if ins.op == "store":
        return ins.srcs[1:]
    return ins.srcs


def _reaching_definitions(bbl: BasicBlockList) -> dict[int, dict[str, frozenset]]:
    """IN sets: block id -> {var: frozenset of def sites (block, position)}."""
    gen: dict[int, dict[str, tuple]] = {}
    for b in bbl.blocks:
        last = {}
        for k, ins in enumerate(b.instrs):
            if ins.op == "mov":
                last[ins.dest] = (b.id, k)
        gen[b.id] = last
    preds = bbl.preds()
    entry = bbl.entry.id
    params = {p.name: frozenset({(_PARAM_SITE, 0)}) for p in bbl.function.params if not p.is_array}
    in_sets: dict[int, dict[str, frozenset]] = {b.id: {} for b in bbl.blocks}
    out_sets: dict[int, dict[str, frozenset]] = {b.id: {} for b in bbl.blocks}
    changed = True
    while changed:
        changed = False
        for b in bbl.blocks:
            merged: dict[str, set] = {}
            sources = [out_sets[p] for p in preds[b.id]]
            if b.id == entry:
                sources.append(params)
            for src in sources:
                for var, sites in src.items():
                    merged.setdefault(var, set()).update(sites)
            new_in = {v: frozenset(s) for v, s in merged.items()}
            new_out = dict(new_in)
            for var, site in gen[b.id].items():
                new_out[var] = frozenset({site})
            if new_in != in_sets[b.id] or new_out != out_sets[b.id]:
                in_sets[b.id], out_sets[b.id] = new_in, new_out
                changed = True
    return in_sets


def build_dfg(bbl: BasicBlockList) -> list[tuple[int, int]]:
    """Deduplicated (def_block, use_block) pairs carrying parameter-derived values.

    Loaded values (every array is a parameter) and scalar parameters seed the
    derivation; arithmetic, copies and call results propagate it. Addresses
    are not values, so index computations never seed an edge.
    """
    in_sets = _reaching_definitions(bbl)
    temp_block: dict[str, int] = {}
    for b in bbl.blocks:
        for ins in b.instrs:
            if ins.dest is not None and ins.op != "mov":
                temp_block[ins.dest] = b.id

    derived_temp: dict[str, bool] = {}
    derived_site: dict[tuple, bool] = {(_PARAM_SITE, 0): True}

    def resolve(operand, local, block_id):
        """Def sites (block id, derived) an operand reads from."""
        tag, name = operand
        if tag == "t":
            return [(temp_block[name], derived_temp.get(name, False))]
        if tag == "v":
            sites = [local[name]] if name in local else in_sets[block_id].get(name, ())
            return [(site[0], derived_site.get(site, False)) for site in sites]
        return []

    def sweep(collect: set | None) -> bool:
        changed = False
        for b in bbl.blocks:
            local: dict[str, tuple] = {}
            for k, ins in enumerate(b.instrs):
                flag = False
                for operand in _value_operands(ins):
                    if operand[0] == "a":
                        flag = True
                        continue
                    for def_block, derived in resolve(operand, local, b.id):
                        flag = flag or derived
                        if collect is not None and derived and def_block not in (b.id, _PARAM_SITE):
                            collect.add((def_block, b.id))
                if ins.op == "load":
                    flag = True
                elif ins.op in ("index", "loop", "store"):
                    flag = False
                if ins.op == "mov":
                    site = (b.id, k)
                    if flag and not derived_site.get(site, False):
                        derived_site[site] = True
                        changed = True
                    local[ins.dest] = site
                elif ins.dest is not None and flag and not derived_temp.get(ins.dest, False):
                    derived_temp[ins.dest] = True
                    changed = True
        return changed

    while sweep(None):
        pass
    pairs: set[tuple[int, int]] = set()
    sweep(pairs)
    return sorted(pairs)
