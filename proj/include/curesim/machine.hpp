#pragma once
// Executable machine for the mini-IR: memory layout, stack/heap allocators,
// the interpreter, capability enforcement (checks on tagged accesses, cstr /
// cclr with resize and fault handling), runtime intrinsics, and an optional
// dynamic external-data provenance oracle used to cross-check the static
// protection analysis.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "curesim/capability.hpp"
#include "curesim/ir.hpp"
#include "curesim/memstore.hpp"
#include "curesim/tagging.hpp"
#include "curesim/uarch.hpp"

namespace curesim {

// Data memory map (48-bit addresses). The stack band is always mapped so
// unprotected runs of out-of-bounds programs corrupt neighbours instead of
// crashing; the capability layer is what turns them into violations.
inline constexpr uint64_t GLOBAL_BASE = 0x10000;
inline constexpr uint64_t HEAP_BASE = 0x1000000000ull;        // 64 GiB
inline constexpr uint64_t STACK_TOP = 0x7FFFFFFF0000ull;
inline constexpr uint64_t STACK_SPAN = uint64_t{1} << 30;     // always-mapped band
inline constexpr uint64_t CMT_DEFAULT_BASE = 0x200000000000ull;

struct MachineConfig {
    bool enableDpt = true;
    unsigned cmtWays = 4;
    unsigned maxCmtWays = 1024;
    uint64_t cmtBase = CMT_DEFAULT_BASE;
    uint16_t lfsrSeed = 0xACE1;
    bool uarchEnabled = false;
    bool headBuffersEnabled = true;
    ChbPolicy chbPolicy = ChbPolicy::Adaptive;
    std::string inputBytes;             // cycled; empty -> 'A'..'Z' pattern
    uint64_t maxSteps = 50'000'000;
    bool trackProvenance = false;
};

struct ViolationRecord {
    enum class Kind { Spatial, Temporal };
    Kind kind;
    int line;      // source line of the faulting instruction
    uint64_t addr; // 48-bit address involved
};

struct MachineStats {
    uint64_t steps = 0;
    uint64_t spatialViolations = 0;  // failed checks (access suppressed)
    uint64_t temporalViolations = 0; // cclr found nothing to clear
    uint64_t resizes = 0;
    uint64_t cstrExecuted = 0;
    uint64_t cclrExecuted = 0;
    uint64_t subCapsCreated = 0; // first-time mutate_ptr registrations
    uint64_t subCapsCleared = 0; // scan_clear removals
};

struct RunOutcome {
    bool aborted = false;
    std::string abortReason;
    std::string output;
    MachineStats stats;
    SimStats uarch;
    unsigned finalCmtWays = 0;
    // Objects that dynamically received external bytes (provenance oracle).
    std::set<std::string> taintedSites;
};

class Machine {
public:
    // The machine keeps its own copy of the program, so callers may pass a
    // freshly instrumented temporary without lifetime concerns.
    Machine(Program prog, MachineConfig cfg);

    RunOutcome run();

    const MemStore& memory() const { return mem_; }
    const Cmt& cmt() const { return cmt_; }
    const CardTables& cards() const { return cards_; }
    const UarchModel& uarch() const { return uarch_; }
    const std::vector<ViolationRecord>& violations() const { return violations_; }
    uint16_t lfsrState() const { return lfsr_.state(); }
    uint64_t globalAddress(const std::string& name) const;

    // Final bytes of the program-visible regions, in address order (the
    // capability table is machine-internal and excluded).
    void forEachDataByte(const std::function<void(uint64_t, uint8_t)>& fn) const;

    // Deterministic global placement, usable without running: sequential,
    // 16-byte aligned, in declaration order from GLOBAL_BASE.
    static std::map<std::string, uint64_t> layoutGlobals(const Program& prog);

private:
    struct MachineError : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    enum class ObjKind { Stack, Heap, Global };
    struct ObjRecord {
        uint64_t base = 0, size = 0;
        std::string site;
        ObjKind kind = ObjKind::Stack;
        bool live = false;
    };

    struct Frame {
        const Function* fn = nullptr;
        size_t blockIdx = 0, instrIdx = 0;
        std::map<std::string, uint64_t> regs;
        std::map<std::string, bool> taint;
        std::string retDest; // caller register receiving the return value
        uint64_t savedStackPtr = 0;
        std::vector<uint64_t> allocaBases;
    };

    void setupGlobals();
    void indexSites();
    void stepOnce();
    void exec(const Instr& ins);

    uint64_t evalOperand(const Operand& a) const;
    bool operandTaint(const Operand& a) const;
    void setReg(const std::string& name, uint64_t value, bool taint = false);

    // Capability check for a tagged access; false means the access is
    // suppressed (stores dropped, loads yield zero).
    bool checkAccess(uint64_t ptr, unsigned width, bool isStore, int line);
    uint64_t doLoad(uint64_t ptr, unsigned width, int line, bool* taintOut);
    bool doStore(uint64_t ptr, unsigned width, uint64_t value, bool valueTaint, int line);
    void requireMapped(uint64_t addr, unsigned width) const;

    void execCstr(uint64_t tagged, uint64_t size, int line);
    void execCclr(uint64_t tagged, int line);
    void execCall(const Instr& ins);
    void execIntrinsic(const Instr& ins);
    void execRet(const Instr& ins);
    void resizeCmt();
    SubObjectOps scanOps(int line, bool countTemporal);

    void reclaimRange(uint64_t base, uint64_t size);
    const ObjRecord* objectContaining(uint64_t addr) const;
    void recordExternalWrite(uint64_t addr, unsigned width);
    uint8_t nextInputByte();

    bool dptOn() const { return cfg_.enableDpt; }

    const Program prog_;
    MachineConfig cfg_;
    MemStore mem_;
    Cmt cmt_;
    CardTables cards_;
    UarchModel uarch_;
    Lfsr16 lfsr_;

    std::vector<Frame> frames_;
    std::map<uint64_t, ObjRecord> objects_; // keyed by base
    std::map<std::string, uint64_t> globalAddr_;
    std::map<const Instr*, std::string> siteIds_;
    uint64_t globalEnd_ = GLOBAL_BASE;
    uint64_t stackPtr_ = STACK_TOP;
    uint64_t heapPtr_ = HEAP_BASE;
    uint64_t heapHighWater_ = HEAP_BASE;
    std::map<uint64_t, std::vector<uint64_t>> freeLists_; // size -> LIFO bases
    uint64_t cmtNextBase_ = 0;

    MachineStats stats_;
    std::vector<ViolationRecord> violations_;
    std::string output_;
    uint64_t inputCursor_ = 0;
    std::set<uint64_t> taintedBytes_;
    std::set<std::string> taintedSites_;
};

} // namespace curesim
