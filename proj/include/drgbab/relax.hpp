#pragma once

#include "drgbab/model.hpp"

#include <optional>
#include <span>
#include <vector>

namespace drgbab {

enum class Stability { active, inactive, unstable };

/// l = 0 counts as active, u = 0 as inactive.
Stability classify(double l, double u);

/// A neuron split: sign +1 fixes z >= 0, -1 fixes z < 0 (closed to z <= 0 for bounding).
struct SplitConstraint {
    int layer = 0;
    int neuron = 0;
    int sign = +1;

    bool operator==(const SplitConstraint&) const = default;
};

/// Pre-activation intervals. Index i holds layer i for i = 1..L-1 (hidden
/// layers); index 0 holds the input box itself, so `lower[i][j]` lines up with
/// 1-based layer numbering everywhere.
struct NeuronBounds {
    std::vector<Eigen::VectorXd> lower;
    std::vector<Eigen::VectorXd> upper;

    int num_layers() const { return static_cast<int>(lower.size()); }
    Box box() const { return Box{lower.front(), upper.front()}; }
    Stability stability(int layer, int neuron) const { return classify(lower[layer][neuron], upper[layer][neuron]); }
    bool feasible() const;
    /// Unstable neurons across hidden layers with ReLU activation.
    int unstable_count(const Network& net) const;
};

/// Lower-line slopes alpha for each hidden neuron; index layout as NeuronBounds.
struct RelaxationParams {
    std::vector<Eigen::VectorXd> alpha;
};

struct ReluRelaxation {
    double upper_slope;
    double upper_intercept;
    double lower_slope;
};

/// Triangle relaxation of an unstable ReLU (l < 0 < u). Throws std::logic_error otherwise.
ReluRelaxation relu_relaxation(double l, double u, double alpha);

struct BoundResult {
    Eigen::VectorXd w;
    double b = 0.0;
    double lower_bound = 0.0;
    /// sensitivity[0] == w; sensitivity[i] (1 <= i < L) is the backward
    /// coefficient multiplying the post-activation of layer i, captured before
    /// that layer's relaxation is traversed.
    std::vector<Eigen::VectorXd> sensitivity;
    /// Line ẑ = slope * z + intercept chosen for every hidden neuron in the backward pass.
    std::vector<Eigen::VectorXd> line_slope;
    std::vector<Eigen::VectorXd> line_intercept;
    NeuronBounds neuron_bounds;
};

/// min over the box of w.x + b, summed left to right over dimensions.
double concretize_lower(const Eigen::VectorXd& w, double b, const Box& box);

/// Adaptive initial slopes: 1 where u >= |l|, else 0.
RelaxationParams initial_alpha(const Network& net, const NeuronBounds& bounds);

/// Sound linear lower bound of spec_row . f(x) over the region described by
/// `bounds` (input box plus clamped hidden intervals). nullopt when the
/// bounds are infeasible (some l > u).
std::optional<BoundResult> compute_bounds(const Network& net, const Eigen::VectorXd& spec_row,
                                          const NeuronBounds& bounds, const RelaxationParams& params);

/// Applies l := max(l, 0) for +1 splits and u := min(u, 0) for -1 splits.
void clamp_splits(NeuronBounds& bounds, std::span<const SplitConstraint> splits);

/// Layer-by-layer CROWN bounds of every hidden pre-activation, clamped by
/// `splits` before moving to the next layer. When `params` is null each layer
/// uses the adaptive slopes of the bounds computed so far.
NeuronBounds compute_intermediate_bounds(const Network& net, const Box& box, std::span<const SplitConstraint> splits,
                                         const RelaxationParams* params = nullptr);

/// Recomputes layers `from_layer`..L-1 starting from `start` (earlier layers
/// kept), intersecting with `start` and re-clamping by `splits`.
NeuronBounds refine_intermediate_bounds(const Network& net, const NeuronBounds& start,
                                        std::span<const SplitConstraint> splits, int from_layer,
                                        const RelaxationParams* params = nullptr);

/// d lower_bound / d alpha for each hidden neuron (zero for neurons whose
/// lower line was not used). Valid wherever the bound is differentiable.
std::vector<Eigen::VectorXd> alpha_gradient(const Network& net, const BoundResult& result);

struct AlphaOptimization {
    RelaxationParams params;
    double lower_bound;
};

/// Projected gradient ascent on alpha in [0,1]^n; returns the best iterate seen.
/// `init` defaults to the adaptive slopes.
AlphaOptimization optimize_alpha(const Network& net, const Eigen::VectorXd& spec_row, const NeuronBounds& bounds,
                                 int iters, double step, const RelaxationParams* init = nullptr);

}  // namespace drgbab
