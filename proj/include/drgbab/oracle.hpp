#pragma once

#include "drgbab/model.hpp"

#include <cstdint>
#include <stdexcept>

namespace drgbab {

/// Instance too large for exhaustive enumeration.
class OracleBudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OracleLimits {
    int max_unstable = 14;
    int max_input_dim = 6;
};

enum class LpStatus { optimal, infeasible };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    double value = 0.0;
    Eigen::VectorXd x;
};

/// min c.x  s.t.  A x <= b,  lower <= x <= upper.
/// Dense two-phase tableau simplex with Bland's rule; meant for a handful of variables.
LpSolution minimize_over_polytope(const Eigen::VectorXd& c, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

/// Which activation regions take part in the enumeration.
enum class RegionFilter {
    /// every region whose closure meets the box
    closure,
    /// only regions with a non-empty interior
    interior,
};

struct ExactMinimum {
    double min_value = 0.0;
    Eigen::VectorXd argmin;
    int unstable_neurons = 0;
    long regions_visited = 0;
    long regions_feasible = 0;
};

/// Global minimum over the box of min_r (C f(x))_r, by enumerating ReLU
/// activation patterns of the neurons that interval arithmetic cannot fix.
/// min_value <= 0 iff the task is Unsafe. Throws OracleBudgetExceeded.
ExactMinimum exact_min_margin(const VerificationTask& task, RegionFilter filter = RegionFilter::closure,
                              OracleLimits limits = {});

/// Interval-arithmetic pre-activation bounds of hidden layers, index i for layer i (0 = box).
void interval_bounds(const Network& net, const Box& box, std::vector<Eigen::VectorXd>& lower,
                     std::vector<Eigen::VectorXd>& upper);

struct AttackResult {
    Eigen::VectorXd best_x;
    double best_margin = 0.0;  // min over spec rows at best_x
    long evaluated = 0;

    bool violation() const { return best_margin <= 0.0; }
};

/// Uniform samples plus every box corner when n_0 <= 16.
AttackResult grid_attack(const VerificationTask& task, long samples, std::uint64_t seed);

}  // namespace drgbab
