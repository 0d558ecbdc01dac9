#pragma once

#include "drgbab/heuristics.hpp"
#include "drgbab/witness.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace drgbab {

enum class Verdict { safe, unsafe, unknown };
enum class Fallback { babsr, bisect };

const char* to_string(Verdict v);
const char* to_string(Fallback f);
Fallback parse_fallback(const std::string& name);

struct BabConfig {
    HeuristicKind heuristic = HeuristicKind::drg;
    /// Unset budgets fall back to the task's own values.
    std::optional<double> timeout_seconds;
    std::optional<long> max_branches;
    int batch = 1;
    int alpha_iters = 20;
    double alpha_step = 0.1;
    bool realpha_per_node = false;
    Fallback fallback = Fallback::babsr;
    bool trace = false;
    std::uint64_t seed = 0;
    /// Re-propagate later-layer bounds after a neuron split instead of clamp-only reuse.
    bool recompute_intermediate = false;
    /// Worker threads for evaluating a batch; results are merged in pop order.
    int threads = 1;
};

struct SubDomain {
    Box box;
    std::vector<SplitConstraint> splits;
    NeuronBounds bounds;
    int depth = 0;
    int bisections = 0;
    double parent_lower_bound = -std::numeric_limits<double>::infinity();
    /// Per spec row, the bound the parent settled on (valid on this sub-domain too).
    std::vector<std::shared_ptr<const BoundResult>> inherited;
    long id = 0;
    long parent_id = -1;

    bool infeasible() const { return !bounds.feasible(); }
    bool is_split(int layer, int neuron) const;
};

struct TraceEntry {
    long node_id = 0;
    long parent_id = -1;
    int depth = 0;
    double parent_lower_bound = 0.0;
    /// Bound after keeping the better of the fresh and inherited results.
    double lower_bound = 0.0;
    /// Fresh bound of this node alone.
    double raw_lower_bound = 0.0;
    std::string action;  // prune | infeasible | unsafe | split | bisect | unknown
    std::optional<NeuronId> split;
    int bisect_dim = -1;
    std::string score_source;
    int candidates = 0;
    int nonzero_scores = 0;
    double max_score = 0.0;
    int clamp_events = 0;
    int unstable = 0;
};

struct RunStats {
    Verdict verdict = Verdict::unknown;
    /// Nodes processed below the root.
    long branches_visited = 0;
    /// Branching operations (neuron splits plus input bisections).
    long splits_made = 0;
    long input_bisections = 0;
    long babsr_fallbacks = 0;
    long infeasible_pruned = 0;
    long unknown_leaves = 0;
    long clamp_events = 0;
    double wall_time_s = 0.0;
    double root_lower_bound = 0.0;
    std::optional<Witness> witness;
    std::vector<TraceEntry> trace;
};

/// Two children with +1 / -1 added for (layer, neuron). Bounds are the
/// parent's clamped by the new split (optionally re-propagating later layers).
/// Throws std::logic_error when the neuron is already split or not unstable.
std::pair<SubDomain, SubDomain> split_subdomain(const Network& net, const SubDomain& d, NeuronId target,
                                                bool recompute_intermediate = false);

/// Halves the widest input dimension (lowest index on ties) and recomputes
/// bounds over each half, intersected with the parent's. Throws
/// std::logic_error when the box cannot be split any further.
std::pair<SubDomain, SubDomain> input_bisect(const Network& net, const SubDomain& d);

/// Widest dimension, lowest index on ties; -1 if the box has zero width everywhere.
int widest_dimension(const Box& box);
/// True when input_bisect can make progress on this box.
bool can_bisect(const Box& box);

/// Best-first queue: lowest parent_lower_bound first, then lowest id.
class Worklist {
public:
    void push(SubDomain d);
    SubDomain pop();
    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }

private:
    std::vector<SubDomain> heap_;
};

/// Runs the abstraction / safety check / witness validation / refinement loop.
class BabEngine {
public:
    BabEngine(const VerificationTask& task, BabConfig config);

    /// Pops up to `batch` nodes, processes each, pushes children. Returns
    /// false once a verdict is reached.
    bool worklist_step(int batch);
    const RunStats& stats() const { return stats_; }
    const Worklist& worklist() const { return worklist_; }
    RunStats run();

private:
    struct Outcome;
    Outcome evaluate(const SubDomain& d) const;
    void finish(Verdict v);

    const VerificationTask& task_;
    BabConfig config_;
    double timeout_s_;
    long max_branches_;
    std::vector<RelaxationParams> root_alpha_;
    Worklist worklist_;
    RunStats stats_;
    long next_id_ = 0;
    bool done_ = false;
    bool root_processed_ = false;
    double started_ = 0.0;
};

RunStats verify(const VerificationTask& task, const BabConfig& config = {});

}  // namespace drgbab
