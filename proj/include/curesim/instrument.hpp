#pragma once
// Protection pass: rewrites a program so selected objects carry capability
// metadata. Heap mode covers malloc/free, Object mode adds stack allocas and
// globals, Field mode adds intra-object sub-pointers via mutate_ptr and
// scan_clear. Free sites are instrumented unconditionally: clearing through
// an untagged pointer is a no-op, so blanket coverage is safe.

#include <map>
#include <set>
#include <string>

#include "curesim/ir.hpp"

namespace curesim {

enum class ProtectMode { Off, Heap, Object, Field };

const char* protectModeName(ProtectMode m); // "off", "dpt-h", "dpt-c", "dpt-f"
ProtectMode protectModeFromName(const std::string& name); // throws on junk

// Which allocation sites get metadata. Default: all of them. A selective
// plan (from the external-data analysis) names sites "func/reg#ord" and
// globals "@name".
struct ProtectionPlan {
    bool protectAll = true;
    std::set<std::string> sites;

    bool has(const std::string& site) const {
        return protectAll || sites.count(site) != 0;
    }
    static ProtectionPlan all() { return {}; }
    static ProtectionPlan only(std::set<std::string> s) {
        return ProtectionPlan{false, std::move(s)};
    }
};

struct InstrumentOptions {
    ProtectMode mode = ProtectMode::Field;
    ProtectionPlan plan = ProtectionPlan::all();
    // Field mode: owning roots per gep instruction (pointer into the input
    // program). A gep whose owners are all known and all unprotected is not
    // wrapped; unknown owners are wrapped conservatively. Null wraps all.
    const std::map<const Instr*, std::set<std::string>>* gepOwners = nullptr;
};

Program instrument(const Program& in, const InstrumentOptions& opt);

} // namespace curesim
