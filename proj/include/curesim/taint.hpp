#pragma once
// Static external-data analysis: a flow-insensitive, unification-based
// points-to graph over registers, globals and allocation sites, plus a
// closure marking every object whose storage can receive bytes that
// originate outside the program (the input() intrinsic and extern-
// initialized globals). Protection plans and gep ownership come from here.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "curesim/instrument.hpp"
#include "curesim/ir.hpp"

namespace curesim {

struct TaintResult {
    std::vector<std::string> allSites;      // program order: globals, then functions
    std::set<std::string> protectedSites;   // sites whose storage may hold external bytes
    // Owning allocation sites per gep instruction (pointers into the
    // analyzed program). Empty set = owner unknown.
    std::map<const Instr*, std::set<std::string>> gepOwners;

    ProtectionPlan plan() const { return ProtectionPlan::only(protectedSites); }
};

TaintResult analyzeTaint(const Program& prog);

} // namespace curesim
