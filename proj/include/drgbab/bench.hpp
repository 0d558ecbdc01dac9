#pragma once

#include "drgbab/bab.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace drgbab {

// ---- instance generation ---------------------------------------------------

struct GenOptions {
    std::uint64_t seed = 0;
    int input_dim = 4;
    std::vector<int> widths{8, 8};  // hidden layers
    int outputs = 3;
    int count = 10;
    double eps = 0.05;
    double weight_scale = 1.0;
};

/// Random ReLU network with a box of half-width `eps` around a random anchor
/// in [-1, 1]^n and a robustness spec for the anchor's predicted class.
VerificationTask random_instance(std::mt19937_64& rng, int input_dim, std::span<const int> widths, int outputs,
                                 double eps, double weight_scale);

std::vector<VerificationTask> generate_instances(const GenOptions& opts);

/// Throws InputError on nonsensical shapes.
void validate_gen_options(const GenOptions& opts);

/// Writes inst_NNNN.model.json / inst_NNNN.spec.json into `dir` (created if needed).
void write_suite(const std::string& dir, const GenOptions& opts);

struct SuiteEntry {
    std::string name;
    std::string model_path;
    std::string spec_path;
};

/// Pairs *.model.json with *.spec.json, sorted by name.
std::vector<SuiteEntry> list_suite(const std::string& dir);

// ---- benchmark harness -----------------------------------------------------

struct BenchRow {
    std::string instance;
    std::string heuristic;
    Verdict verdict = Verdict::unknown;
    long branches = 0;
    long splits = 0;
    double time_s = 0.0;
};

/// Every heuristic on every instance. Rows are ordered instance-major
/// regardless of `jobs`.
std::vector<BenchRow> run_bench(std::span<const SuiteEntry> suite, std::span<const HeuristicKind> heuristics,
                                const BabConfig& base, int jobs = 1);

std::string bench_csv(std::span<const BenchRow> rows);
/// Parses what bench_csv writes.
std::vector<BenchRow> parse_bench_csv(const std::string& text);

struct HeadToHead {
    int wins = 0;    // candidate used fewer branches
    int ties = 0;
    int losses = 0;  // baseline used fewer branches
    /// wins / (wins + losses); unset when there are no decisive instances.
    std::optional<double> dominance;
};

struct HeuristicSummary {
    std::string heuristic;
    int instances = 0;
    double mean_branches = 0.0;
    double median_branches = 0.0;
    double mean_time = 0.0;
    double median_time = 0.0;
    double pct_timeout = 0.0;
    /// Percentage of instances where this heuristic is <= the baseline; unset for the baseline.
    std::optional<double> win_rate_branches;
    std::optional<double> win_rate_time;
    std::optional<HeadToHead> head_to_head;
};

double median(std::vector<double> values);

std::vector<HeuristicSummary> summarize(std::span<const BenchRow> rows, const std::string& baseline);
std::string summary_json_text(std::span<const HeuristicSummary> summary, const std::string& baseline);
std::string summary_markdown(std::span<const HeuristicSummary> summary, const std::string& baseline);

// ---- result emission -------------------------------------------------------

std::string config_json_text(const BabConfig& config);
/// Parses the config keys accepted on the command line from a JSON object; unknown keys are rejected.
BabConfig config_from_json_text(const std::string& text, BabConfig base = {});
std::string result_json_text(const RunStats& stats, const BabConfig& config);
/// One JSON object per processed node.
std::string trace_jsonl(const RunStats& stats);

}  // namespace drgbab
