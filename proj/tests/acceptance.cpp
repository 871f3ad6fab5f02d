// Acceptance gate: one line per criterion, pass/fail, tolerances pinned in
// code. Run with no arguments for all criteria or --only N for a single one.
// Exit status 0 iff every selected criterion passes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "curesim/capability.hpp"
#include "curesim/instrument.hpp"
#include "curesim/ir.hpp"
#include "curesim/machine.hpp"
#include "curesim/taint.hpp"
#include "curesim/uarch.hpp"

#include "support/refinterp.hpp"

namespace fs = std::filesystem;
using namespace curesim;

namespace {

struct Criterion {
    int id;
    std::string detail; // filled by the check
    bool (*check)(Criterion&);
};

std::string readFile(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Program parseFile(const fs::path& p) {
    return parseProgram(readFile(p), p.filename().string());
}

RunOutcome runMode(const Program& prog, ProtectMode mode, bool taint = false,
                   unsigned cmtWays = 4, bool uarch = false) {
    InstrumentOptions iopt;
    iopt.mode = mode;
    TaintResult tres;
    if (taint) {
        tres = analyzeTaint(prog);
        iopt.plan = tres.plan();
        iopt.gepOwners = &tres.gepOwners;
    }
    Program inst = instrument(prog, iopt);
    MachineConfig cfg;
    cfg.enableDpt = mode != ProtectMode::Off;
    cfg.cmtWays = cmtWays;
    cfg.uarchEnabled = uarch;
    Machine m(inst, cfg);
    return m.run();
}

uint64_t detections(const RunOutcome& o) {
    return o.stats.spatialViolations + o.stats.temporalViolations;
}

// ---------------------------------------------------------------- C1
// Detection matrix over the program corpus: every buggy program is caught
// under field-granular protection, every bug-free twin stays silent, and
// heap-only protection catches exactly the heap-lifecycle categories.
bool c1(Criterion& c) {
    const std::set<std::string> heapLife = {"heap_overflow", "double_free", "uaf"};
    const std::set<std::string> core = {"stack_overflow", "heap_overflow", "underwrite",
                                        "overread",       "underread",     "double_free",
                                        "uaf"};
    std::map<std::string, int> buggyPerCat;
    int buggy = 0, twins = 0, fails = 0;
    std::ostringstream why;

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(CORPUS_DIR))
        if (e.path().extension() == ".mir")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());

    for (const auto& f : files) {
        fs::path ex = fs::path(f).replace_extension(".expect");
        if (!fs::exists(ex))
            continue;
        auto meta = nlohmann::json::parse(readFile(ex));
        std::string cat = meta.value("category", "");
        bool isBuggy = meta.value("buggy", false);
        Program prog = parseFile(f);
        RunOutcome ff = runMode(prog, ProtectMode::Field);
        RunOutcome hh = runMode(prog, ProtectMode::Heap);
        if (ff.aborted || hh.aborted) {
            ++fails;
            why << " " << f.filename().string() << ":aborted";
            continue;
        }
        if (isBuggy) {
            ++buggy;
            ++buggyPerCat[cat];
            if (detections(ff) == 0) {
                ++fails;
                why << " " << f.filename().string() << ":missed-by-dpt-f";
            }
            bool heapCat = heapLife.count(cat) != 0;
            if (heapCat && detections(hh) == 0) {
                ++fails;
                why << " " << f.filename().string() << ":missed-by-dpt-h";
            }
            if (!heapCat && detections(hh) != 0) {
                ++fails;
                why << " " << f.filename().string() << ":dpt-h-false-alarm";
            }
            fs::path twin = f.parent_path() / (f.stem().string() + "_ok.mir");
            if (!fs::exists(twin)) {
                ++fails;
                why << " " << f.filename().string() << ":no-twin";
            }
        } else {
            ++twins;
            if (detections(ff) != 0 || detections(hh) != 0) {
                ++fails;
                why << " " << f.filename().string() << ":false-alarm";
            }
        }
    }
    for (const auto& cat : core)
        if (buggyPerCat[cat] < 3) {
            ++fails;
            why << " category-" << cat << "-count=" << buggyPerCat[cat];
        }
    if (buggy < 21) {
        ++fails;
        why << " total-buggy=" << buggy;
    }

    // The shipped tool must agree with its expectation files end to end.
    std::string cmd = std::string("\"") + CLI_PATH + "\" corpus \"" + CORPUS_DIR +
                      "\" > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    bool cliOk = rc == 0;
    if (!cliOk) {
        ++fails;
        why << " cli-corpus-exit=" << rc;
    }

    std::ostringstream d;
    d << buggy << " buggy + " << twins << " twins; field mode caught all, heap mode "
      << "caught exactly heap-lifecycle bugs; tool corpus check "
      << (cliOk ? "clean" : "FAILED");
    if (fails)
        d << ";" << why.str();
    c.detail = d.str();
    return fails == 0;
}

// ---------------------------------------------------------------- C2
// Metadata word encoding and slot addressing agree with independently
// coded oracles on 100000 random draws.
bool c2(Criterion& c) {
    std::mt19937_64 rng(0xC0FFEE5EEDull);
    const unsigned wayChoices[] = {1, 2, 4, 8, 16};
    uint64_t trials = 100000;
    for (uint64_t t = 0; t < trials; ++t) {
        uint64_t base = rng() & ADDR_MASK;
        uint16_t tag = static_cast<uint16_t>(rng());
        unsigned ways = wayChoices[rng() % 5];
        unsigned way = static_cast<unsigned>(rng() % ways);

        // Oracle in multiplication form, vs the shifted implementation.
        uint64_t want = base + static_cast<uint64_t>(tag) * 8u * ways +
                        static_cast<uint64_t>(way) * 8u;
        uint64_t got = capAddr(base, tag, ways, way);
        if (got != want) {
            c.detail = "slot address mismatch at trial " + std::to_string(t);
            return false;
        }

        // Size encoding oracle: exact below 32768, else KiB ceiling.
        uint64_t size = 1 + rng() % CapMeta::MAX_SIZE;
        uint64_t obase = rng() & ((uint64_t{1} << 40) - 1);
        CapMeta m = CapMeta::encode(obase, size);
        uint64_t wantSize =
            size <= CapMeta::MAX_EXACT ? size : ((size + 1023) / 1024) * 1024;
        uint64_t wantWord =
            (obase << 16) |
            (size <= CapMeta::MAX_EXACT ? size : (0x8000u | ((size + 1023) / 1024)));
        if (m.word != wantWord || m.base() != obase || m.size() != wantSize) {
            c.detail = "metadata word mismatch at trial " + std::to_string(t);
            return false;
        }
        uint64_t probe = obase + rng() % (wantSize + 8);
        unsigned width = 1u << (rng() % 4);
        bool wantCovers = obase <= probe && probe + width <= obase + wantSize;
        if (m.covers(probe, width) != wantCovers) {
            c.detail = "coverage mismatch at trial " + std::to_string(t);
            return false;
        }
    }
    c.detail = std::to_string(trials) + " random draws bit-exact against both oracles";
    return true;
}

// ---------------------------------------------------------------- C3
// Tag-collision arithmetic: the smallest n with 1-(1-2^-16)^n >= 0.5,
// required here to equal 45425.
bool c3(Criterion& c) {
    const long double q = 1.0L - std::pow(2.0L, -16); // exactly representable
    auto missProb = [&](uint64_t n) { return std::pow(q, static_cast<long double>(n)); };
    uint64_t n = static_cast<uint64_t>(
        std::ceil(std::log(0.5L) / std::log1p(-std::pow(2.0L, -16))));
    while (1.0L - missProb(n) >= 0.5L)
        --n; // walk to the boundary
    while (1.0L - missProb(n) < 0.5L)
        ++n; // first n at or above one half
    uint64_t computed = n;
    const uint64_t required = 45425;
    long double root = std::log(0.5L) / std::log1p(-std::pow(2.0L, -16));
    std::ostringstream d;
    d << "smallest n with collision probability >= 0.5 computes to " << computed
      << " (real-valued crossing at " << static_cast<double>(root)
      << "); the required value " << required
      << " is that crossing rounded down and is never reached by the exact "
         "integer threshold";
    c.detail = d.str();
    return computed == required;
}

// ---------------------------------------------------------------- C4
// Head buffers on a LIFO allocate/release trace: average probe iterations
// for both metadata stores and clears are exactly 1.00 with the buffers on,
// and strictly worse with them off, on the identical trace.
bool c4(Criterion& c) {
    const uint16_t TAG = 0x00A5;
    const uint64_t SEED_BASE = 0x20000000;   // heap-class
    const uint64_t PAIR_BASE = 0x10000000;   // heap-class
    const unsigned WAYS = 1024;
    const int PAIRS = 1000;

    auto runTrace = [&](bool headsOn, SimStats& out) {
        MemStore mem;
        Cmt cmt(mem, CMT_DEFAULT_BASE, WAYS);
        UarchModel uar;
        uar.enabled = true;
        uar.headBuffersEnabled = headsOn;
        // Eight long-lived colliding entries ahead of the scan.
        for (unsigned j = 0; j < 8; ++j) {
            unsigned sw = uar.cstrStartWay(TAG, WAYS);
            CmtProbe pr = cmt.cstr(TAG, SEED_BASE + j * 0x100, 16, sw);
            uar.noteCstr(TAG, pr.way, pr.iterations, pr.fault == CapFault::None,
                         pr.word, WAYS);
        }
        auto pairOnce = [&]() {
            unsigned sw = uar.cstrStartWay(TAG, WAYS);
            CmtProbe pr = cmt.cstr(TAG, PAIR_BASE, 32, sw);
            uar.noteCstr(TAG, pr.way, pr.iterations, pr.fault == CapFault::None,
                         pr.word, WAYS);
            unsigned cw = uar.cclrStartWay(TAG, WAYS);
            CmtProbe pc = cmt.cclr(TAG, PAIR_BASE, cw);
            uar.noteCclr(TAG, PAIR_BASE, pc.way, pc.iterations,
                         pc.fault == CapFault::None, isStackClass(PAIR_BASE), WAYS);
        };
        pairOnce();              // warm the predictors
        uar.stats = SimStats{};  // measure steady state only
        for (int i = 0; i < PAIRS; ++i)
            pairOnce();
        out = uar.stats;
    };

    SimStats on{}, off{};
    runTrace(true, on);
    runTrace(false, off);

    bool onExact = on.cstrCount == PAIRS && on.cclrCount == PAIRS &&
                   on.cstrIterations == static_cast<uint64_t>(PAIRS) &&
                   on.cclrIterations == static_cast<uint64_t>(PAIRS);
    bool offWorse = off.cstrIterations > on.cstrIterations &&
                    off.cclrIterations > on.cclrIterations;
    std::ostringstream d;
    d << "with buffers avg cstr=" << static_cast<double>(on.cstrIterations) / PAIRS
      << " cclr=" << static_cast<double>(on.cclrIterations) / PAIRS
      << "; without avg cstr=" << static_cast<double>(off.cstrIterations) / PAIRS
      << " cclr=" << static_cast<double>(off.cclrIterations) / PAIRS;
    c.detail = d.str();
    return onExact && offWorse;
}

// ---------------------------------------------------------------- C5
// Capability cache on a loop touching 8 live objects 10^4 times each:
// hit rate at least 0.99.
bool c5(Criterion& c) {
    Program prog = parseFile(fs::path(CORPUS_DIR) / "ccache_loop.mir");
    RunOutcome o = runMode(prog, ProtectMode::Field, false, 4, /*uarch=*/true);
    uint64_t hits = o.uarch.ccacheHits, misses = o.uarch.ccacheMisses;
    double rate = hits + misses == 0 ? 0.0 : double(hits) / double(hits + misses);
    std::ostringstream d;
    d << "hit rate " << rate << " (" << hits << "/" << (hits + misses) << ")";
    c.detail = d.str();
    return !o.aborted && detections(o) == 0 && rate >= 0.99;
}

// ---------------------------------------------------------------- C6
// Five live objects forced into one table row: exactly one resize 4 -> 8,
// then every object passes its checks.
bool c6(Criterion& c) {
    Program prog = parseFile(fs::path(CORPUS_DIR) / "cmt_resize_collide.mir");

    // Guard: the five arrays really do share one tag under type derivation.
    auto layout = Machine::layoutGlobals(prog);
    std::set<uint16_t> tags;
    uint64_t tid = typeId("[16 x i8]");
    for (int i = 1; i <= 5; ++i) {
        uint64_t addr = layout.at("g" + std::to_string(i));
        tags.insert(tagOf(tagd(addr, TagModifier::type(tid), 0)));
    }
    if (tags.size() != 1) {
        c.detail = "collision construction broke: " + std::to_string(tags.size()) +
                   " distinct tags";
        return false;
    }

    RunOutcome o = runMode(prog, ProtectMode::Object, false, /*cmtWays=*/4);
    std::ostringstream d;
    d << "five colliding entries, resizes=" << o.stats.resizes
      << ", ways 4 -> " << o.finalCmtWays << ", violations="
      << detections(o) << ", output " << (o.output == "ok\n" ? "intact" : "WRONG");
    c.detail = d.str();
    return !o.aborted && o.stats.resizes == 1 && o.finalCmtWays == 8 &&
           detections(o) == 0 && o.output == "ok\n";
}

// ---------------------------------------------------------------- C7
// Card marking: 100 repeated pointer mutations store metadata once;
// scanning the dying object clears it and later sub-pointer checks fail.
bool c7(Criterion& c) {
    MemStore mem;
    Cmt cmt(mem, CMT_DEFAULT_BASE, 4);
    CardTables cards;
    uint64_t cstrCalls = 0, cclrCalls = 0;
    SubObjectOps ops;
    ops.cstr = [&](uint64_t tagged, uint64_t size) {
        ++cstrCalls;
        cmt.cstr(tagOf(tagged), addrOf(tagged), size, 0);
    };
    ops.cclr = [&](uint64_t tagged) {
        ++cclrCalls;
        return cmt.cclr(tagOf(tagged), addrOf(tagged), 0).fault == CapFault::None;
    };

    const uint64_t objBase = 0x40000000, objSize = 64;
    uint64_t fieldPtr = withTag(objBase + 16, 0x1234); // owning object's tag
    uint64_t sub = 0;
    for (int i = 0; i < 100; ++i)
        sub = mutatePtr(fieldPtr, 8, cards, ops);
    bool oneStore = cstrCalls == 1;
    bool passBefore = cmt.check(tagOf(sub), addrOf(sub), 1, 0).fault == CapFault::None;

    size_t cleared = scanAndClear(objBase, objSize, cards, ops);
    bool failAfter = cmt.check(tagOf(sub), addrOf(sub), 1, 0).fault == CapFault::CheckFail;

    std::ostringstream d;
    d << "100 mutations -> " << cstrCalls << " metadata store(s); scan cleared "
      << cleared << "; sub-pointer check " << (passBefore ? "passed" : "FAILED")
      << " before and " << (failAfter ? "fails" : "STILL PASSES") << " after";
    c.detail = d.str();
    return oneStore && passBefore && cleared == 1 && cclrCalls == 1 && failAfter &&
           cards.level1Count() == 0;
}

// ---------------------------------------------------------------- C8
// Semantics preservation on every bug-free corpus program: instrumented
// output equals uninstrumented output, and the unprotected machine matches
// an independently written reference interpreter, memory included.
bool c8(Criterion& c) {
    int programs = 0, fails = 0;
    std::ostringstream why;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(CORPUS_DIR))
        if (e.path().extension() == ".mir")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());

    for (const auto& f : files) {
        fs::path ex = fs::path(f).replace_extension(".expect");
        if (!fs::exists(ex))
            continue;
        auto meta = nlohmann::json::parse(readFile(ex));
        if (meta.value("buggy", false))
            continue;
        ++programs;
        Program prog = parseFile(f);

        InstrumentOptions off;
        off.mode = ProtectMode::Off;
        MachineConfig cfg;
        cfg.enableDpt = false;
        Machine moff(instrument(prog, off), cfg);
        RunOutcome base = moff.run();

        for (ProtectMode m : {ProtectMode::Heap, ProtectMode::Object, ProtectMode::Field}) {
            RunOutcome o = runMode(prog, m);
            if (o.aborted != base.aborted || o.output != base.output ||
                detections(o) != 0) {
                ++fails;
                why << " " << f.filename().string() << ":" << protectModeName(m);
            }
        }

        refinterp::Result ref = refinterp::run(prog, refinterp::Options{});
        std::map<uint64_t, uint8_t> machineBytes;
        moff.forEachDataByte([&](uint64_t a, uint8_t b) {
            if (b != 0)
                machineBytes.emplace(a, b);
        });
        if (ref.aborted != base.aborted || ref.output != base.output ||
            machineBytes != ref.nonzeroBytes()) {
            ++fails;
            why << " " << f.filename().string() << ":reference-divergence";
        }
    }
    std::ostringstream d;
    d << programs << " bug-free programs agree across all modes and with the "
      << "reference interpreter";
    if (fails)
        d << "; mismatches:" << why.str();
    c.detail = d.str();
    return programs > 0 && fails == 0;
}

// ---------------------------------------------------------------- C9
// Selective protection on the two-array example: the analysis protects the
// input-receiving array only, instruments exactly one tag/store pair, and
// the overflow is still caught.
bool c9(Criterion& c) {
    Program prog = parseFile(fs::path(CORPUS_DIR) / "fig1_overflow.mir");
    TaintResult tres = analyzeTaint(prog);
    bool planExact = tres.protectedSites == std::set<std::string>{"main/vulArr#1"};

    InstrumentOptions iopt;
    iopt.mode = ProtectMode::Object;
    iopt.plan = tres.plan();
    iopt.gepOwners = &tres.gepOwners;
    Program inst = instrument(prog, iopt);
    int tagds = 0, cstrs = 0;
    for (const auto& fn : inst.functions)
        for (const auto& b : fn.blocks)
            for (const auto& ins : b.instrs) {
                tagds += ins.op == Opcode::Tagd;
                cstrs += ins.op == Opcode::Cstr;
            }

    RunOutcome o = runMode(prog, ProtectMode::Object, /*taint=*/true);
    std::ostringstream d;
    d << "plan={" << (planExact ? "main/vulArr#1" : "WRONG") << "}, instrumented "
      << tagds << " tagd / " << cstrs << " cstr, selective run flagged "
      << o.stats.spatialViolations << " out-of-bounds bytes";
    c.detail = d.str();
    return planExact && tagds == 1 && cstrs == 1 && !o.aborted &&
           o.stats.spatialViolations == 10 && o.stats.temporalViolations == 0;
}

// ---------------------------------------------------------------- C10
// Use after reallocation under the pinned default tag-generator seed: the
// recycled block gets a different tag, so the stale pointer fails its check.
bool c10(Criterion& c) {
    Program prog = parseFile(fs::path(CORPUS_DIR) / "uaf_3.mir");
    RunOutcome o = runMode(prog, ProtectMode::Heap);
    // The stale store is suppressed, so the new owner's byte survives.
    bool intact = o.output == "Z";
    std::ostringstream d;
    d << "seed 0xACE1: stale-pointer store failed its check ("
      << o.stats.spatialViolations << " spatial), recycled block "
      << (intact ? "unharmed" : "CORRUPTED");
    c.detail = d.str();
    return !o.aborted && o.stats.spatialViolations == 1 &&
           o.stats.temporalViolations == 0 && intact;
}

// ---------------------------------------------------------------- C11
// The timing model is observation-only: enabling it changes no functional
// result, and the out-of-scope paper-scale measurements stay out of scope.
bool c11(Criterion& c) {
    const char* names[] = {"stack_overflow_1.mir", "uaf_3.mir", "fig1_overflow.mir",
                           "cmt_resize_collide.mir"};
    int fails = 0;
    std::ostringstream why;
    for (const char* n : names) {
        Program prog = parseFile(fs::path(CORPUS_DIR) / n);
        RunOutcome plain = runMode(prog, ProtectMode::Field, false, 4, false);
        RunOutcome timed = runMode(prog, ProtectMode::Field, false, 4, true);
        bool same = plain.output == timed.output && plain.aborted == timed.aborted &&
                    plain.stats.steps == timed.stats.steps &&
                    plain.stats.spatialViolations == timed.stats.spatialViolations &&
                    plain.stats.temporalViolations == timed.stats.temporalViolations &&
                    plain.stats.resizes == timed.stats.resizes;
        if (!same || timed.uarch.cycles == 0 || plain.uarch.cycles != 0) {
            ++fails;
            why << " " << n;
        }
    }
    c.detail = fails == 0
                   ? "timing model on/off leaves every functional result identical; "
                     "wall-clock slowdown, instruction overhead and silicon figures "
                     "are model-external by design"
                   : "divergence:" + why.str();
    return fails == 0;
}

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--only" && i + 1 < argc)
            only = std::atoi(argv[++i]);
    }

    std::vector<Criterion> cs = {
        {1, "", c1}, {2, "", c2}, {3, "", c3}, {4, "", c4},
        {5, "", c5}, {6, "", c6}, {7, "", c7}, {8, "", c8},
        {9, "", c9}, {10, "", c10}, {11, "", c11},
    };

    bool allOk = true;
    for (auto& c : cs) {
        if (only != 0 && c.id != only)
            continue;
        bool ok = false;
        try {
            ok = c.check(c);
        } catch (const std::exception& e) {
            c.detail = std::string("exception: ") + e.what();
        }
        std::printf("C%-2d %s — %s\n", c.id, ok ? "PASS" : "FAIL", c.detail.c_str());
        allOk = allOk && ok;
    }
    return allOk ? 0 : 1;
}
