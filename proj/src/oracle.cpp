#include "drgbab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace drgbab {

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-10;

using Index = Eigen::Index;

class Tableau {
public:
    // rows: a_r . y (+/-) slack = rhs_r >= 0
    Tableau(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs) {
        rows_ = a.rows();
        vars_ = a.cols();
        Index artificial = 0;
        for (Index r = 0; r < rows_; ++r)
            if (rhs[r] < 0.0) ++artificial;
        first_art_ = vars_ + rows_;
        cols_ = first_art_ + artificial;
        t_ = Eigen::MatrixXd::Zero(rows_, cols_ + 1);
        scale_ = std::max(1.0, rhs.size() > 0 ? rhs.cwiseAbs().maxCoeff() : 0.0);
        basis_.resize(static_cast<std::size_t>(rows_));
        Index next_art = first_art_;
        for (Index r = 0; r < rows_; ++r) {
            const double sgn = rhs[r] < 0.0 ? -1.0 : 1.0;
            t_.row(r).head(vars_) = sgn * a.row(r);
            t_(r, vars_ + r) = sgn;
            t_(r, cols_) = sgn * rhs[r];
            if (sgn < 0.0) {
                t_(r, next_art) = 1.0;
                basis_[static_cast<std::size_t>(r)] = next_art++;
            } else {
                basis_[static_cast<std::size_t>(r)] = vars_ + r;
            }
        }
    }

    bool phase_one() {
        if (cols_ == first_art_) return true;
        Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols_);
        cost.tail(cols_ - first_art_).setOnes();
        const double value = optimize(cost, cols_);
        if (value > 1e-9 * scale_) return false;
        // drive remaining artificials out of the basis where possible
        for (Index r = 0; r < rows_; ++r) {
            if (basis_[static_cast<std::size_t>(r)] < first_art_) continue;
            for (Index j = 0; j < first_art_; ++j) {
                if (std::abs(t_(r, j)) > kPivotTol) {
                    pivot(r, j);
                    break;
                }
            }
        }
        return true;
    }

    /// Minimizes cost . y over the original columns; returns the objective.
    double phase_two(const Eigen::VectorXd& cost_y) {
        Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols_);
        cost.head(vars_) = cost_y;
        return optimize(cost, first_art_);
    }

    Eigen::VectorXd solution() const {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(vars_);
        for (Index r = 0; r < rows_; ++r) {
            const Index b = basis_[static_cast<std::size_t>(r)];
            if (b < vars_) y[b] = t_(r, cols_);
        }
        return y;
    }

private:
    void pivot(Index r, Index j) {
        t_.row(r) /= t_(r, j);
        for (Index k = 0; k < rows_; ++k) {
            if (k == r) continue;
            const double f = t_(k, j);
            if (f != 0.0) t_.row(k) -= f * t_.row(r);
        }
        basis_[static_cast<std::size_t>(r)] = j;
    }

    // Bland's rule on columns [0, allowed).
    double optimize(const Eigen::VectorXd& cost, Index allowed) {
        for (;;) {
            // reduced costs d = c - c_B B^-1 A
            Eigen::RowVectorXd d = cost.transpose();
            for (Index r = 0; r < rows_; ++r) {
                const double cb = cost[basis_[static_cast<std::size_t>(r)]];
                if (cb != 0.0) d -= cb * t_.row(r).head(cols_);
            }
            Index enter = -1;
            for (Index j = 0; j < allowed; ++j) {
                if (d[j] < -kCostTol) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) {
                double value = 0.0;
                for (Index r = 0; r < rows_; ++r) value += cost[basis_[static_cast<std::size_t>(r)]] * t_(r, cols_);
                return value;
            }
            Index leave = -1;
            double best_ratio = std::numeric_limits<double>::infinity();
            for (Index r = 0; r < rows_; ++r) {
                const double coef = t_(r, enter);
                if (coef <= kPivotTol) continue;
                const double ratio = t_(r, cols_) / coef;
                const bool smaller = leave < 0 || ratio < best_ratio - 1e-12;
                const bool tie_lower_index = leave >= 0 && std::abs(ratio - best_ratio) <= 1e-12 &&
                                             basis_[static_cast<std::size_t>(r)] < basis_[static_cast<std::size_t>(leave)];
                if (smaller || tie_lower_index) {
                    if (smaller) best_ratio = ratio;
                    leave = r;
                }
            }
            if (leave < 0) return -std::numeric_limits<double>::infinity();  // unbounded; not reachable over a box
            pivot(leave, enter);
        }
    }

    Index rows_ = 0, vars_ = 0, cols_ = 0, first_art_ = 0;
    double scale_ = 1.0;
    Eigen::MatrixXd t_;
    std::vector<Index> basis_;
};

struct Affine {
    Eigen::MatrixXd g;  // rows x n_0
    Eigen::VectorXd c;
};

struct Constraint {
    Eigen::VectorXd a;
    double beta;  // a . x <= beta
};

class Enumerator {
public:
    Enumerator(const VerificationTask& task, RegionFilter filter, std::vector<Eigen::VectorXd> ibp_lower,
               std::vector<Eigen::VectorXd> ibp_upper)
        : task_(task), net_(task.network), filter_(filter), lower_(std::move(ibp_lower)), upper_(std::move(ibp_upper)) {
        best_.min_value = std::numeric_limits<double>::infinity();
    }

    ExactMinimum run() {
        const Layer& first = net_.layer(1);
        Affine pre{first.weights, first.bias};
        Affine post{Eigen::MatrixXd::Zero(first.weights.rows(), net_.input_dim()),
                    Eigen::VectorXd::Zero(first.weights.rows())};
        visit(1, 0, pre, post);
        return best_;
    }

private:
    bool region_ok() {
        const Index n = net_.input_dim();
        const Eigen::VectorXd& lo = task_.domain.lower;
        const Eigen::VectorXd& hi = task_.domain.upper;
        const Index m = static_cast<Index>(cons_.size());
        if (filter_ == RegionFilter::closure) {
            Eigen::MatrixXd a(m, n);
            Eigen::VectorXd b(m);
            for (Index r = 0; r < m; ++r) {
                a.row(r) = cons_[static_cast<std::size_t>(r)].a.transpose();
                b[r] = cons_[static_cast<std::size_t>(r)].beta;
            }
            return minimize_over_polytope(Eigen::VectorXd::Zero(n), a, b, lo, hi).status == LpStatus::optimal;
        }
        // variables (x, t): a.x/|a| + t <= beta/|a|, lo + t <= x <= hi - t, maximize t
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m + 2 * n, n + 1);
        Eigen::VectorXd b(m + 2 * n);
        for (Index r = 0; r < m; ++r) {
            const Constraint& k = cons_[static_cast<std::size_t>(r)];
            const double norm = k.a.norm();
            if (norm == 0.0) {
                if (!(k.beta > 0.0)) return false;
                b[r] = 1.0;  // trivially slack
                continue;
            }
            a.row(r).head(n) = k.a.transpose() / norm;
            a(r, n) = 1.0;
            b[r] = k.beta / norm;
        }
        for (Index k = 0; k < n; ++k) {
            a(m + k, k) = -1.0;
            a(m + k, n) = 1.0;
            b[m + k] = -lo[k];
            a(m + n + k, k) = 1.0;
            a(m + n + k, n) = 1.0;
            b[m + n + k] = hi[k];
        }
        Eigen::VectorXd lo_t(n + 1), hi_t(n + 1), cost = Eigen::VectorXd::Zero(n + 1);
        lo_t << lo, 0.0;
        hi_t << hi, 1.0;
        cost[n] = -1.0;
        const LpSolution sol = minimize_over_polytope(cost, a, b, lo_t, hi_t);
        return sol.status == LpStatus::optimal && -sol.value > 1e-9;
    }

    void leaf(const Affine& logits) {
        ++best_.regions_feasible;
        const Index n = net_.input_dim();
        const Index m = static_cast<Index>(cons_.size());
        Eigen::MatrixXd a(m, n);
        Eigen::VectorXd b(m);
        for (Index r = 0; r < m; ++r) {
            a.row(r) = cons_[static_cast<std::size_t>(r)].a.transpose();
            b[r] = cons_[static_cast<std::size_t>(r)].beta;
        }
        const Eigen::MatrixXd mg = task_.spec * logits.g;
        const Eigen::VectorXd mc = task_.spec * logits.c;
        for (Index r = 0; r < mg.rows(); ++r) {
            const LpSolution sol =
                minimize_over_polytope(mg.row(r).transpose(), a, b, task_.domain.lower, task_.domain.upper);
            if (sol.status != LpStatus::optimal) continue;
            const double value = sol.value + mc[r];
            if (value < best_.min_value) {
                best_.min_value = value;
                best_.argmin = sol.x;
            }
        }
    }

    // `pre` is z^(layer) as an affine map of x; `post` collects ẑ^(layer) rows as they get fixed.
    void visit(int layer, int j, const Affine& pre, Affine& post) {
        const int depth = net_.num_layers();
        if (layer == depth) {
            ++best_.regions_visited;
            if (filter_ == RegionFilter::interior && !region_ok()) return;
            leaf(pre);
            return;
        }
        if (j == net_.width(layer)) {
            const Layer& next = net_.layer(layer + 1);
            Affine next_pre{next.weights * post.g, next.weights * post.c + next.bias};
            Affine next_post{Eigen::MatrixXd::Zero(next.weights.rows(), net_.input_dim()),
                             Eigen::VectorXd::Zero(next.weights.rows())};
            visit(layer + 1, 0, next_pre, next_post);
            return;
        }
        auto set_active = [&](bool active) {
            if (active) {
                post.g.row(j) = pre.g.row(j);
                post.c[j] = pre.c[j];
            } else {
                post.g.row(j).setZero();
                post.c[j] = 0.0;
            }
        };
        if (net_.layer(layer).activation == Activation::linear || lower_[layer][j] >= 0.0) {
            set_active(true);
            visit(layer, j + 1, pre, post);
            return;
        }
        if (upper_[layer][j] <= 0.0) {
            set_active(false);
            visit(layer, j + 1, pre, post);
            return;
        }
        for (int sign : {+1, -1}) {
            // s * z >= 0  <=>  -s * g . x <= s * c
            const double s = static_cast<double>(sign);
            cons_.push_back({-s * pre.g.row(j).transpose(), s * pre.c[j]});
            if (region_ok()) {
                set_active(sign > 0);
                visit(layer, j + 1, pre, post);
            }
            cons_.pop_back();
        }
    }

    const VerificationTask& task_;
    const Network& net_;
    RegionFilter filter_;
    std::vector<Eigen::VectorXd> lower_, upper_;
    std::vector<Constraint> cons_;
    ExactMinimum best_;
};

}  // namespace

LpSolution minimize_over_polytope(const Eigen::VectorXd& c, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    const Index n = c.size();
    const Index m = a.rows();
    Eigen::MatrixXd rows(m + n, n);
    Eigen::VectorXd rhs(m + n);
    if (m > 0) {
        rows.topRows(m) = a;
        rhs.head(m) = b - a * lower;
    }
    rows.bottomRows(n).setIdentity();
    rhs.tail(n) = upper - lower;

    LpSolution out;
    if ((rhs.tail(n).array() < 0.0).any()) return out;
    Tableau tab(rows, rhs);
    if (!tab.phase_one()) return out;
    const double value = tab.phase_two(c);
    out.status = LpStatus::optimal;
    // rounding in the tableau can leave a coordinate an ulp past its bound
    out.x = (lower + tab.solution()).cwiseMax(lower).cwiseMin(upper);
    out.value = value + c.dot(lower);
    return out;
}

void interval_bounds(const Network& net, const Box& box, std::vector<Eigen::VectorXd>& lower,
                     std::vector<Eigen::VectorXd>& upper) {
    lower.assign(1, box.lower);
    upper.assign(1, box.upper);
    Eigen::VectorXd lo = box.lower, hi = box.upper;
    for (int i = 1; i < net.num_layers(); ++i) {
        const Layer& ly = net.layer(i);
        const Eigen::MatrixXd pos = ly.weights.cwiseMax(0.0);
        const Eigen::MatrixXd neg = ly.weights.cwiseMin(0.0);
        Eigen::VectorXd zl = pos * lo + neg * hi + ly.bias;
        Eigen::VectorXd zu = pos * hi + neg * lo + ly.bias;
        lower.push_back(zl);
        upper.push_back(zu);
        if (ly.activation == Activation::relu) {
            lo = zl.cwiseMax(0.0);
            hi = zu.cwiseMax(0.0);
        } else {
            lo = zl;
            hi = zu;
        }
    }
}

ExactMinimum exact_min_margin(const VerificationTask& task, RegionFilter filter, OracleLimits limits) {
    const Network& net = task.network;
    if (net.input_dim() > limits.max_input_dim)
        throw OracleBudgetExceeded("oracle: input dimension " + std::to_string(net.input_dim()) + " exceeds " +
                                   std::to_string(limits.max_input_dim));
    std::vector<Eigen::VectorXd> lower, upper;
    interval_bounds(net, task.domain, lower, upper);
    int unstable = 0;
    for (int i = 1; i < net.num_layers(); ++i) {
        if (net.layer(i).activation != Activation::relu) continue;
        for (Index j = 0; j < lower[i].size(); ++j)
            if (lower[i][j] < 0.0 && upper[i][j] > 0.0) ++unstable;
    }
    if (unstable > limits.max_unstable)
        throw OracleBudgetExceeded("oracle: " + std::to_string(unstable) + " unstable neurons exceed " +
                                   std::to_string(limits.max_unstable));
    Enumerator en(task, filter, std::move(lower), std::move(upper));
    ExactMinimum out = en.run();
    out.unstable_neurons = unstable;
    return out;
}

AttackResult grid_attack(const VerificationTask& task, long samples, std::uint64_t seed) {
    const Network& net = task.network;
    const int n = net.input_dim();
    AttackResult out;
    out.best_margin = std::numeric_limits<double>::infinity();
    auto consider = [&](const Eigen::VectorXd& x) {
        const double m = margin(net, task.spec, x).minCoeff();
        ++out.evaluated;
        if (m < out.best_margin) {
            out.best_margin = m;
            out.best_x = x;
        }
    };
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::VectorXd x(n);
    for (long s = 0; s < samples; ++s) {
        for (int k = 0; k < n; ++k)
            x[k] = task.domain.lower[k] + unit(rng) * (task.domain.upper[k] - task.domain.lower[k]);
        consider(x);
    }
    if (n <= 16) {
        for (long mask = 0; mask < (1L << n); ++mask) {
            for (int k = 0; k < n; ++k) x[k] = (mask >> k) & 1 ? task.domain.upper[k] : task.domain.lower[k];
            consider(x);
        }
    }
    return out;
}

}  // namespace drgbab
