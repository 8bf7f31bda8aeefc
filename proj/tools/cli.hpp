#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "morbo/engine.hpp"

namespace morbo::cli {

/// Parses and executes one command line. Returns the process exit code:
/// 0 success, 1 run aborted (partial outputs flagged), 2 bad input.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct BoundaryStats {
    long evaluations = 0;
    std::size_t count = 0;  // records reaching this boundary
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
};

struct MethodSummary {
    std::string method;
    std::vector<BoundaryStats> rows;
};

/// Linear-interpolation quantile (p in [0, 1]) of a nonempty sample.
double quantile(std::vector<double> values, double p);

/// Median and quartiles of the hypervolume trace per method at every batch
/// boundary. Throws InvalidArgument when the records mix problems.
std::vector<MethodSummary> aggregate(const std::vector<engine::RunRecord>& records);

/// Accepts a record base or any of its file names and returns the base.
std::string record_base(const std::string& path);

}  // namespace morbo::cli
