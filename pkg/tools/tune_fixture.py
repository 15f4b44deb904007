#!/usr/bin/env python3
"""Fixture tuning harness (development tool, not part of the package).

Collects counters from one unit-latency sweep per profile set, then
evaluates candidate latency/energy schedules analytically (counters do not
depend on latencies or energies) and checks the structural targets:

  compacts: HCP=(32K,64K)  LCE=(16K,32K)   -> L1 range [16,32], L2 [32,64]
  wides:    HCP=(128K,128K) LCE=(64K,128K) -> L1 range [64,128], L2 [128,128]
  kept L1 {16,32,64,128}, kept L2 {32,64,128} -> 12 candidates
  survivors: 5 incl. baseline (32,64); chosen (16,64)
"""
import pickle
import sys
import time
from fractions import Fraction as F
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import cachescape as cs

KB = 1024
L1_SIZES = [4 * KB, 8 * KB, 16 * KB, 32 * KB, 64 * KB, 128 * KB]
L2_SIZES = [16 * KB, 32 * KB, 64 * KB, 128 * KB, 256 * KB, 512 * KB]
L1_ASSOC, L1_LINE = 2, 64
L2_ASSOC, L2_LINE = 4, 64
BASE = (32 * KB, 64 * KB)

CACHE_DIR = Path(__file__).resolve().parent / "_tune_cache"
CACHE_DIR.mkdir(exist_ok=True)

PROFILE_TAG = "v2"


def profiles():
    out = []
    small = dict(load_fraction=0.26, store_fraction=0.12)
    large = dict(load_fraction=0.19, store_fraction=0.08)
    out.append(("compact_a", cs.WorkloadProfile(instr_working_set=10*KB, data_working_set=26*KB,
                locality_alpha=14.0, length=14000, seed=101, **small)))
    out.append(("compact_b", cs.WorkloadProfile(instr_working_set=12*KB, data_working_set=25*KB,
                locality_alpha=12.0, length=13000, seed=102, **small)))
    out.append(("compact_c", cs.WorkloadProfile(instr_working_set=8*KB, data_working_set=27*KB,
                locality_alpha=16.0, length=15000, seed=103, **small)))
    out.append(("wide_a", cs.WorkloadProfile(instr_working_set=12*KB, data_working_set=80*KB,
                locality_alpha=10.0, length=16000, seed=201, **large)))
    out.append(("wide_b", cs.WorkloadProfile(instr_working_set=10*KB, data_working_set=88*KB,
                locality_alpha=11.0, length=17000, seed=202, **large)))
    out.append(("wide_c", cs.WorkloadProfile(instr_working_set=14*KB, data_working_set=76*KB,
                locality_alpha=9.0, length=15000, seed=203, **large)))
    return out


def unit_table():
    rows = {}
    one = F(1)
    for s in L1_SIZES:
        rows[("L1I", s, L1_ASSOC, L1_LINE)] = cs.EnergyParams(one, one, one, 1)
        rows[("L1D", s, L1_ASSOC, L1_LINE)] = cs.EnergyParams(one, one, one, 1)
    for s in L2_SIZES:
        rows[("L2", s, L2_ASSOC, L2_LINE)] = cs.EnergyParams(one, one, one, 1)
    return cs.EnergyTable(rows=rows, mem_params=cs.EnergyParams(one, one, one, 1))


def collect_counters():
    cache = CACHE_DIR / f"counters_{PROFILE_TAG}.pkl"
    if cache.exists():
        return pickle.loads(cache.read_bytes())
    table = unit_table()
    grid = cs.SweepGrid(tuple(L1_SIZES), tuple(L2_SIZES), L1_ASSOC, L1_LINE, L2_ASSOC, L2_LINE)
    core = cs.CoreConfig(fetch_width=2, regfile_size=96, commit_latency=4, num_threads=1)
    traces = [cs.generate_trace(p, name=n) for n, p in profiles()]
    out = {}
    t0 = time.time()
    for cfg in grid.configs():
        h = grid.hierarchy_for(table, cfg)
        for tr in traces:
            st = cs.run_single(core, h, tr)
            assert st.regfile_stall_cycles == 0, (cfg, tr.name)
            u = st.underlying
            i1, d1, l2 = u.per_level["L1I"], u.per_level["L1D"], u.per_level["L2"]
            a1i = i1.n_read + i1.n_write
            a1d = d1.n_read + d1.n_write
            d2 = i1.n_miss + d1.n_miss
            d3 = st.total_cycles - a1i - a1d - d2
            out[(tr.name, cfg)] = dict(
                a1i=a1i, rd1=d1.n_read, wd1=d1.n_write, a1d=a1d,
                d2=d2, d3=d3, miss_i=i1.n_miss, miss_d=d1.n_miss,
                r2=l2.n_read, w2=l2.n_write, miss2=l2.n_miss,
                mr=u.mem_reads, mw=u.mem_writes,
            )
    print(f"sweep collected in {time.time()-t0:.1f}s")
    cache.write_bytes(pickle.dumps(out))
    return out


def schedule():
    """Candidate latency + energy schedule. Values are exact decimals."""
    lat1 = {4*KB: 1, 8*KB: 1, 16*KB: 1, 32*KB: 1, 64*KB: 1, 128*KB: 1}
    lat2 = {16*KB: 2, 32*KB: 2, 64*KB: 2, 128*KB: 3, 256*KB: 4, 512*KB: 5}
    latm = 60
    d = lambda s: F(s)  # decimal string to exact fraction
    r1 = {4*KB: d("0.18"), 8*KB: d("0.21"), 16*KB: d("0.24"), 32*KB: d("0.30"),
          64*KB: d("0.32"), 128*KB: d("0.60")}
    w1 = {k: v * F("1.2") for k, v in r1.items()}
    s1 = {4*KB: d("0.0010"), 8*KB: d("0.0011"), 16*KB: d("0.0012"), 32*KB: d("0.0040"),
          64*KB: d("0.0042"), 128*KB: d("0.020")}
    r2 = {16*KB: d("0.7"), 32*KB: d("0.8"), 64*KB: d("1.0"), 128*KB: d("1.1"),
          256*KB: d("1.5"), 512*KB: d("2.0")}
    w2 = {k: v * F("1.2") for k, v in r2.items()}
    s2 = {16*KB: d("0.0009"), 32*KB: d("0.0012"), 64*KB: d("0.0030"), 128*KB: d("0.0035"),
          256*KB: d("0.010"), 512*KB: d("0.012")}
    rm, wm = d("2.0"), d("2.4")
    return dict(lat1=lat1, lat2=lat2, latm=latm, r1=r1, w1=w1, s1=s1, r2=r2, w2=w2, s2=s2,
                rm=rm, wm=wm)


def evaluate(counters, sch):
    """Analytic (cycles, e_td, e_t) per (workload, config)."""
    pts = {}
    for (wname, cfg), c in counters.items():
        l1, l2 = cfg
        li = ld = sch["lat1"][l1]
        l2l = sch["lat2"][l2]
        latm = sch["latm"]
        cycles = c["a1i"] * li + c["a1d"] * ld + c["d2"] * l2l + c["d3"] * latm
        idle_i = cycles - c["a1i"] * li
        idle_d = cycles - c["a1d"] * ld
        idle_2 = cycles - c["d2"] * l2l
        e_dr = c["a1i"] * sch["r1"][l1] + c["rd1"] * sch["r1"][l1] \
            + c["r2"] * sch["r2"][l2] + c["mr"] * sch["rm"]
        e_dw = c["wd1"] * sch["w1"][l1] + c["w2"] * sch["w2"][l2] + c["mw"] * sch["wm"]
        e_td = e_dr + e_dw
        e_ts = (c["miss_i"] + idle_i) * sch["s1"][l1] * l2l \
            + (c["miss_d"] + idle_d) * sch["s1"][l1] * l2l \
            + (c["miss2"] + idle_2) * sch["s2"][l2] * latm
        pts[(wname, cfg)] = (cycles, e_td, e_td + e_ts)
    return pts


def area(cfg):
    return (cfg[0] + cfg[1], cfg[0])


def check(counters, sch, verbose=True):
    pts = evaluate(counters, sch)
    names = [n for n, _ in profiles()]
    configs = [(a, b) for a in L1_SIZES for b in L2_SIZES]

    summaries = {}
    ok = True
    for w in names:
        cyc = {c: pts[(w, c)][0] for c in configs}
        et = {c: pts[(w, c)][2] for c in configs}
        hcp = min(configs, key=lambda c: (cyc[c], area(c)))
        lce = min(configs, key=lambda c: (et[c], area(c)))
        summaries[w] = (hcp, lce)
        want_hcp = (32*KB, 64*KB) if w.startswith("compact") else (128*KB, 128*KB)
        want_lce = (16*KB, 32*KB) if w.startswith("compact") else (64*KB, 128*KB)
        flag = "OK " if (hcp, lce) == (want_hcp, want_lce) else "BAD"
        if flag == "BAD":
            ok = False
        if verbose:
            print(f"{flag} {w:<10} hcp={hcp[0]//KB:>3}K/{hcp[1]//KB:>3}K (want {want_hcp[0]//KB}/{want_hcp[1]//KB})"
                  f"  lce={lce[0]//KB:>3}K/{lce[1]//KB:>3}K (want {want_lce[0]//KB}/{want_lce[1]//KB})")

    # overlap
    r1 = {w: tuple(sorted((summaries[w][1][0], summaries[w][0][0]))) for w in names}
    r2_ = {w: tuple(sorted((summaries[w][1][1], summaries[w][0][1]))) for w in names}
    kept1 = _kept(L1_SIZES, list(r1.values()))
    kept2 = _kept(L2_SIZES, list(r2_.values()))
    cands = [(a, b) for a in kept1 for b in kept2]
    if verbose:
        print(f"kept L1: {[s//KB for s in kept1]}  kept L2: {[s//KB for s in kept2]}"
              f"  candidates: {len(cands)}")
    if sorted(kept1) != [16*KB, 32*KB, 64*KB, 128*KB] or sorted(kept2) != [32*KB, 64*KB, 128*KB]:
        ok = False

    # averaged pp / es_dyn / es over the candidate set
    avg = {}
    for cfg in configs:
        pp = es = esd = F(0)
        for w in names:
            b_cyc, b_td, b_t = pts[(w, BASE)]
            cyc, td, tt = pts[(w, cfg)]
            pp += F(b_cyc, cyc) - 1
            es += 1 - F(tt, b_t)
            esd += 1 - F(td, b_td)
        avg[cfg] = (pp / 6, es / 6, esd / 6)

    tol = F(3, 100)
    survivors = set()
    for cfg in cands:
        pp, es, esd = avg[cfg]
        if cfg == BASE or (esd > 0 and pp >= -tol):
            survivors.add(cfg)
    chosen = min(survivors, key=lambda c: (c[0] + c[1], -avg[c][1], c[0])) if survivors else None
    if verbose:
        print("\ncandidate metrics (pp%, es_dyn%, es%):")
        for cfg in sorted(cands, key=area):
            pp, es, esd = avg[cfg]
            mark = "SURV" if cfg in survivors else "    "
            print(f"  {mark} ({cfg[0]//KB:>3}K,{cfg[1]//KB:>3}K)  pp={float(pp)*100:>7.2f}  "
                  f"es_dyn={float(esd)*100:>7.2f}  es={float(es)*100:>7.2f}")
        print(f"survivors: {len(survivors)}  chosen: "
              f"{None if chosen is None else (chosen[0]//KB, chosen[1]//KB)}")
    if len(survivors) != 5 or chosen != (16*KB, 64*KB):
        ok = False
    return ok


def _kept(sizes, ranges):
    cov = {s: sum(lo <= s <= hi for lo, hi in ranges) for s in sizes}
    best = max(cov.values())
    return [s for s, c in cov.items() if c == best]


def dump_bands(counters):
    names = [n for n, _ in profiles()]
    print("\nd2 across l1 (l2=64K):")
    print("workload   " + "".join(f"{s//KB:>7}K" for s in L1_SIZES))
    for w in names:
        row = [counters[(w, (s, 64*KB))]["d2"] for s in L1_SIZES]
        print(f"{w:<11}" + "".join(f"{v:>8}" for v in row))
    print("\nd3 across l2 (rows: l1=16/32/64K):")
    for w in names:
        print(f"-- {w}   " + "".join(f"{s//KB:>7}K" for s in L2_SIZES))
        for s1_ in (16*KB, 32*KB, 64*KB, 128*KB):
            row = [counters[(w, (s1_, s2_))]["d3"] for s2_ in L2_SIZES]
            print(f"{s1_//KB:>4}K" + "".join(f"{v:>8}" for v in row))


def main():
    counters = collect_counters()
    if "--bands" in sys.argv:
        dump_bands(counters)
    ok = check(counters, schedule())
    print("\nALL TARGETS MET" if ok else "\ntargets not met yet")


if __name__ == "__main__":
    main()
