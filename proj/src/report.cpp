#include "curesim/report.hpp"

#include "json.hpp"

namespace curesim {

std::string RunReport::toJsonText() const {
    nlohmann::ordered_json j;
    j["program"] = program;
    j["mode"] = mode;
    j["taint"] = taint;
    j["aborted"] = outcome.aborted;
    j["abort_reason"] = outcome.abortReason;
    j["output"] = outcome.output;
    j["violations"] = {
        {"spatial", outcome.stats.spatialViolations},
        {"temporal", outcome.stats.temporalViolations},
    };
    j["machine"] = {
        {"steps", outcome.stats.steps},
        {"resizes", outcome.stats.resizes},
        {"cstr_executed", outcome.stats.cstrExecuted},
        {"cclr_executed", outcome.stats.cclrExecuted},
        {"sub_caps_created", outcome.stats.subCapsCreated},
        {"sub_caps_cleared", outcome.stats.subCapsCleared},
        {"final_cmt_ways", outcome.finalCmtWays},
    };
    const SimStats& u = outcome.uarch;
    j["uarch"] = {
        {"total_mem_insts", u.totalMemInsts},
        {"tagged_mem_insts", u.taggedMemInsts},
        {"ccache_hits", u.ccacheHits},
        {"ccache_misses", u.ccacheMisses},
        {"cap_requests", u.capRequests},
        {"cstr_iterations", u.cstrIterations},
        {"cstr_count", u.cstrCount},
        {"cclr_iterations", u.cclrIterations},
        {"cclr_count", u.cclrCount},
        {"check_iterations", u.checkIterations},
        {"check_count", u.checkCount},
        {"dep_stall_cycles", u.depStallCycles},
        {"port_conflict_cycles", u.portConflictCycles},
        {"cycles", u.cycles},
    };
    return j.dump(2) + "\n";
}

std::string taintReportText(const TaintResult& res) {
    nlohmann::ordered_json j;
    j["sites"] = nlohmann::ordered_json::array();
    for (const auto& s : res.allSites)
        j["sites"].push_back({{"site", s}, {"protected", res.protectedSites.count(s) != 0}});
    j["protected_count"] = res.protectedSites.size();
    j["total_count"] = res.allSites.size();
    return j.dump(2) + "\n";
}

} // namespace curesim
