#include "drgbab/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace drgbab {

namespace {

constexpr double kZeroScore = 1e-12;

const char* const kNames[] = {"drg", "drg_symmetric", "babsr", "center", "intercept", "grad", "width"};

double relu(double z) { return z > 0.0 ? z : 0.0; }

double upper_line(double z, double l, double u) {
    const ReluRelaxation rl = relu_relaxation(l, u, 0.0);
    return rl.upper_slope * z + rl.upper_intercept;
}

double z_at(std::span<const Eigen::VectorXd> preacts, const NeuronId& n) {
    // preacts[i-1] holds layer i
    return preacts[static_cast<std::size_t>(n.layer - 1)][n.neuron];
}

template <typename F>
ScoreSet score_each(std::span<const NeuronId> candidates, F&& f) {
    ScoreSet out;
    out.scores.reserve(candidates.size());
    for (const NeuronId& n : candidates) {
        bool clamped = false;
        const double s = f(n, clamped);
        if (clamped) ++out.clamp_events;
        out.scores.push_back({n.layer, n.neuron, s});
    }
    return out;
}

}  // namespace

const char* to_string(HeuristicKind k) {
    return kNames[static_cast<int>(k)];
}

HeuristicKind parse_heuristic(const std::string& name) {
    for (int k = 0; k < 7; ++k)
        if (name == kNames[k]) return static_cast<HeuristicKind>(k);
    std::string valid;
    for (const char* n : kNames) valid += std::string(valid.empty() ? "" : ", ") + n;
    throw InputError("unknown heuristic '" + name + "' (valid: " + valid + ")");
}

std::vector<HeuristicKind> all_heuristics() {
    return {HeuristicKind::drg,       HeuristicKind::drg_symmetric, HeuristicKind::babsr, HeuristicKind::center,
            HeuristicKind::intercept, HeuristicKind::grad,          HeuristicKind::width};
}

double directional_gap(double a, double z_star, double l, double u, bool& clamped) {
    clamped = false;
    if (a >= 0.0) return 0.0;
    const double gap = upper_line(z_star, l, u) - relu(z_star);
    if (gap < 0.0) {
        clamped = true;
        return 0.0;
    }
    return gap;
}

double directional_gap(double a, double z_star, double l, double u) {
    bool clamped = false;
    return directional_gap(a, z_star, l, u, clamped);
}

ScoreSet drg_score(const BoundResult& bound, std::span<const Eigen::VectorXd> witness_preacts,
                   std::span<const NeuronId> candidates) {
    const NeuronBounds& nb = bound.neuron_bounds;
    return score_each(candidates, [&](const NeuronId& n, bool& clamped) {
        const double a = bound.sensitivity[n.layer][n.neuron];
        return std::abs(a) *
               directional_gap(a, z_at(witness_preacts, n), nb.lower[n.layer][n.neuron], nb.upper[n.layer][n.neuron],
                               clamped);
    });
}

ScoreSet symmetric_score(const BoundResult& bound, std::span<const Eigen::VectorXd> witness_preacts,
                         const RelaxationParams& params, std::span<const NeuronId> candidates) {
    const NeuronBounds& nb = bound.neuron_bounds;
    return score_each(candidates, [&](const NeuronId& n, bool& clamped) {
        const double a = bound.sensitivity[n.layer][n.neuron];
        const double z = z_at(witness_preacts, n);
        const double l = nb.lower[n.layer][n.neuron];
        const double u = nb.upper[n.layer][n.neuron];
        if (a < 0.0) return std::abs(a) * directional_gap(a, z, l, u, clamped);
        const double gap = relu(z) - params.alpha[n.layer][n.neuron] * z;
        if (gap < 0.0) {
            clamped = true;
            return 0.0;
        }
        return std::abs(a) * gap;
    });
}

ScoreSet intercept_score(const BoundResult& bound, std::span<const NeuronId> candidates) {
    const NeuronBounds& nb = bound.neuron_bounds;
    return score_each(candidates, [&](const NeuronId& n, bool&) {
        const double a = bound.sensitivity[n.layer][n.neuron];
        if (a >= 0.0) return 0.0;
        const ReluRelaxation rl = relu_relaxation(nb.lower[n.layer][n.neuron], nb.upper[n.layer][n.neuron], 0.0);
        return std::abs(a) * rl.upper_intercept;
    });
}

ScoreSet babsr_score(const BoundResult& bound, std::span<const NeuronId> candidates) {
    const NeuronBounds& nb = bound.neuron_bounds;
    return score_each(candidates, [&](const NeuronId& n, bool&) {
        const double l = nb.lower[n.layer][n.neuron];
        const double u = nb.upper[n.layer][n.neuron];
        return std::abs(bound.sensitivity[n.layer][n.neuron] * u * l / (u - l));
    });
}

ScoreSet width_score(const NeuronBounds& bounds, std::span<const NeuronId> candidates) {
    return score_each(candidates, [&](const NeuronId& n, bool&) {
        return bounds.upper[n.layer][n.neuron] - bounds.lower[n.layer][n.neuron];
    });
}

ScoreSet grad_score(const NeuronBounds& bounds, std::span<const Eigen::VectorXd> witness_preacts,
                    std::span<const Eigen::VectorXd> preact_gradient, std::span<const NeuronId> candidates) {
    return score_each(candidates, [&](const NeuronId& n, bool& clamped) {
        const double g = preact_gradient[static_cast<std::size_t>(n.layer)][n.neuron];
        return std::abs(g) * directional_gap(g, z_at(witness_preacts, n), bounds.lower[n.layer][n.neuron],
                                             bounds.upper[n.layer][n.neuron], clamped);
    });
}

std::vector<Eigen::VectorXd> preactivation_gradient(const Network& net, const Eigen::VectorXd& spec_row,
                                                    const Eigen::VectorXd& x) {
    const ForwardResult fr = forward(net, x);
    const int depth = net.num_layers();
    std::vector<Eigen::VectorXd> grad(static_cast<std::size_t>(depth));
    // gradient with respect to z^(L) is the spec row (last layer is linear)
    Eigen::VectorXd g = spec_row;
    for (int i = depth; i >= 2; --i) {
        Eigen::VectorXd post = net.layer(i).weights.transpose() * g;  // d/d ẑ^(i-1)
        const Eigen::VectorXd& z = fr.preacts[static_cast<std::size_t>(i - 2)];
        if (net.layer(i - 1).activation == Activation::relu)
            for (Eigen::Index j = 0; j < post.size(); ++j)
                if (!(z[j] > 0.0)) post[j] = 0.0;
        grad[static_cast<std::size_t>(i - 1)] = post;
        g = std::move(post);
    }
    return grad;
}

ScoreSet score_neurons(HeuristicKind kind, const ScoringInput& in) {
    const BoundResult& bound = *in.bound;
    switch (kind) {
    case HeuristicKind::drg:
        return drg_score(bound, forward(*in.net, in.x_star).preacts, in.candidates);
    case HeuristicKind::drg_symmetric:
        return symmetric_score(bound, forward(*in.net, in.x_star).preacts, *in.params, in.candidates);
    case HeuristicKind::center:
        return drg_score(bound, forward(*in.net, in.box.center()).preacts, in.candidates);
    case HeuristicKind::intercept:
        return intercept_score(bound, in.candidates);
    case HeuristicKind::babsr:
        return babsr_score(bound, in.candidates);
    case HeuristicKind::width:
        return width_score(bound.neuron_bounds, in.candidates);
    case HeuristicKind::grad:
        return grad_score(bound.neuron_bounds, forward(*in.net, in.x_star).preacts,
                          preactivation_gradient(*in.net, in.spec_row, in.x_star), in.candidates);
    }
    throw std::logic_error("score_neurons: unknown heuristic");
}

std::optional<NeuronId> select_branch(std::span<const BranchScore> scores) {
    if (scores.empty()) return std::nullopt;
    const BranchScore* best = &scores.front();
    for (const BranchScore& s : scores) {
        if (s.score > best->score ||
            (s.score == best->score && std::tie(s.layer, s.neuron) < std::tie(best->layer, best->neuron)))
            best = &s;
    }
    return NeuronId{best->layer, best->neuron};
}

bool all_scores_zero(std::span<const BranchScore> scores) {
    return std::all_of(scores.begin(), scores.end(), [](const BranchScore& s) { return s.score < kZeroScore; });
}

}  // namespace drgbab
