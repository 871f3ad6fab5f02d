#pragma once
// Byte-stable JSON reports for runs and analyses: fixed key order, no
// timestamps or environment-dependent fields, newline-terminated.

#include <string>

#include "curesim/machine.hpp"
#include "curesim/taint.hpp"

namespace curesim {

struct RunReport {
    std::string program; // path as given on the command line
    std::string mode;    // "off", "dpt-h", "dpt-c", "dpt-f"
    bool taint = false;  // selective plan in use

    RunOutcome outcome;

    std::string toJsonText() const;
};

std::string taintReportText(const TaintResult& res);

} // namespace curesim
