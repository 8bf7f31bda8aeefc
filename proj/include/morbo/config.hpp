#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "morbo/engine.hpp"

namespace morbo::config {

/// A problem served by an external command (see SubprocessProblem).
struct ExternalProblem {
    std::string command;  // run through /bin/sh -c
    problems::ProblemSpec spec;
    bool minimize = false;
};

struct Experiment {
    std::string method = "morbo";  // morbo or sobol
    engine::RunConfig run;
    std::optional<ExternalProblem> external;
    /// Empty means: MORBO_OUTPUT_DIR if set, else the working directory.
    std::string output_dir;
};

/// Sets one key given as "section.key". Throws InvalidConfig for unknown
/// keys or malformed values.
void set_value(Experiment& exp, const std::string& key, const std::string& value);

/// Parses INI text. Keys outside a section and unknown keys are rejected.
Experiment parse(std::istream& in, const std::string& origin = "<config>");
Experiment load(const std::string& path);

/// Checks required fields and cross-field constraints.
void validate(const Experiment& exp);

/// Full INI rendering of every key; parse(to_ini(e)) reproduces e.
std::string to_ini(const Experiment& exp);

std::unique_ptr<problems::Problem> make_problem(const Experiment& exp);

/// Every accepted "section.key".
std::vector<std::string> known_keys();

}  // namespace morbo::config
