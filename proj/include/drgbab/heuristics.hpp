#pragma once

#include "drgbab/relax.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drgbab {

enum class HeuristicKind { drg, drg_symmetric, babsr, center, intercept, grad, width };

const char* to_string(HeuristicKind k);
/// Throws InputError listing the valid names.
HeuristicKind parse_heuristic(const std::string& name);
std::vector<HeuristicKind> all_heuristics();

struct NeuronId {
    int layer = 0;
    int neuron = 0;

    bool operator==(const NeuronId&) const = default;
};

struct BranchScore {
    int layer = 0;
    int neuron = 0;
    double score = 0.0;
};

struct ScoreSet {
    std::vector<BranchScore> scores;
    /// Gaps that came out negative (witness outside [l, u]) and were clamped to 0.
    int clamp_events = 0;
};

/// Gap between the static upper line and ReLU at z_star, masked to A < 0 and clamped at 0.
/// Requires l < 0 < u.
double directional_gap(double a, double z_star, double l, double u);

/// Same, but reports whether the clamp fired.
double directional_gap(double a, double z_star, double l, double u, bool& clamped);

/// Everything the scoring rules may consult. `candidates` are the
/// splittable neurons (unstable, unsplit); `bound.neuron_bounds` supplies l, u.
struct ScoringInput {
    const Network* net = nullptr;
    const BoundResult* bound = nullptr;
    const RelaxationParams* params = nullptr;
    Eigen::VectorXd spec_row;
    Eigen::VectorXd x_star;
    Box box;
    std::span<const NeuronId> candidates;
};

/// |A| * directional_gap at the witness pre-activations.
ScoreSet drg_score(const BoundResult& bound, std::span<const Eigen::VectorXd> witness_preacts,
                   std::span<const NeuronId> candidates);
/// Two-sided gap: upper gap where A < 0, ReLU minus alpha line where A >= 0.
ScoreSet symmetric_score(const BoundResult& bound, std::span<const Eigen::VectorXd> witness_preacts,
                         const RelaxationParams& params, std::span<const NeuronId> candidates);
ScoreSet intercept_score(const BoundResult& bound, std::span<const NeuronId> candidates);
ScoreSet babsr_score(const BoundResult& bound, std::span<const NeuronId> candidates);
ScoreSet width_score(const NeuronBounds& bounds, std::span<const NeuronId> candidates);
/// |dm/dz| * gap, with the sign of the concrete partial standing in for A.
ScoreSet grad_score(const NeuronBounds& bounds, std::span<const Eigen::VectorXd> witness_preacts,
                    std::span<const Eigen::VectorXd> preact_gradient, std::span<const NeuronId> candidates);

/// d(spec_row . f)/dz^(i) at x for i = 1..L-1 (index i; index 0 left empty).
/// ReLU subgradient at 0 is 0.
std::vector<Eigen::VectorXd> preactivation_gradient(const Network& net, const Eigen::VectorXd& spec_row,
                                                    const Eigen::VectorXd& x);

/// Dispatches on kind. drg and friends evaluate the network at x_star (or
/// the box center for `center`).
ScoreSet score_neurons(HeuristicKind kind, const ScoringInput& in);

/// argmax; ties go to the lower layer, then the lower neuron index.
/// nullopt for an empty list.
std::optional<NeuronId> select_branch(std::span<const BranchScore> scores);

/// True when every score is below 1e-12.
bool all_scores_zero(std::span<const BranchScore> scores);

}  // namespace drgbab
