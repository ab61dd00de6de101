#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ledgerstack/bytes.hpp"
#include "ledgerstack/chain.hpp"

/*! \file
 * \brief JSON-lines scenario runner.
 *
 * Each non-blank line is {"op": name, "args": {...}, "expected": {...}}.
 * Ops run in order against one fresh engine. `expected` is matched as a
 * subset of the op's result; {"expected": {"error": "Overdraft"}} asserts
 * that the op fails with that error and lets the run continue. Any other
 * failure stops the run.
 *
 * Blank lines and lines starting with '#' are skipped.
 */

namespace ledgerstack::scenario {

struct ScenarioOp {
    std::size_t line = 0;
    std::string op;
    Json args = Json::object();
    std::optional<Json> expected;
};

/// Throws Error(ParseError) naming the line.
[[nodiscard]] std::vector<ScenarioOp> parse_scenario(std::istream& in);

/// True iff every key of `expected` is present in `actual` with a matching
/// value; objects match recursively, everything else by equality.
[[nodiscard]] bool json_subset(const Json& expected, const Json& actual);

[[nodiscard]] const std::vector<std::string>& op_vocabulary();

class Engine {
public:
    Engine();
    ~Engine();
    Engine(Engine&&) noexcept;
    Engine& operator=(Engine&&) noexcept;

    /// Applies one op and returns its result. Throws Error on failure.
    Json apply(const std::string& op, const Json& args);

    /// Deterministic end-of-run state of every module the scenario touched.
    [[nodiscard]] Json summary() const;

    /// A chain declared with chain_config. Throws Error(UnknownEntity).
    [[nodiscard]] const chain::Chain& chain(const std::string& name) const;

    /// The treasury main chain; Error(UnknownEntity) if no treasury was used.
    [[nodiscard]] const chain::Chain& tsa_chain() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct RunResult {
    bool ok = true;
    Json report; ///< {"steps": [...], "summary": {...}, "error"?: {...}}
    std::size_t failed_line = 0;
    std::string failed_op;
    std::string error_name;
    std::string message;
};

/// `engine`, when given, receives the final engine state.
[[nodiscard]] RunResult run_scenario(std::istream& in, Engine* engine = nullptr);
[[nodiscard]] RunResult run_scenario_file(const std::filesystem::path& path);

/// Pretty JSON with a trailing newline; the byte format of every report file.
[[nodiscard]] std::string report_text(const Json& report);

} // namespace ledgerstack::scenario
