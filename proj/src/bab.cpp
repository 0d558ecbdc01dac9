#include "drgbab/bab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <stdexcept>
#include <tuple>

namespace drgbab {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

bool heap_before(const SubDomain& a, const SubDomain& b) {
    // std heap keeps the "largest" on top; invert so the lowest bound pops first
    return std::tie(a.parent_lower_bound, a.id) > std::tie(b.parent_lower_bound, b.id);
}

struct WidthMeasure {
    int unstable;
    double max_width;
    int at_max;

    auto key() const { return std::make_tuple(unstable, max_width, at_max); }
};

WidthMeasure measure(const Network& net, const SubDomain& d) {
    const Eigen::VectorXd widths = d.box.upper - d.box.lower;
    const double mx = widths.size() > 0 ? widths.maxCoeff() : 0.0;
    const int at_max = static_cast<int>((widths.array() == mx).count());
    return {d.bounds.unstable_count(net), mx, at_max};
}

}  // namespace

const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::safe: return "Safe";
    case Verdict::unsafe: return "Unsafe";
    case Verdict::unknown: return "Unknown";
    }
    return "Unknown";
}

const char* to_string(Fallback f) {
    return f == Fallback::babsr ? "babsr" : "bisect";
}

Fallback parse_fallback(const std::string& name) {
    if (name == "babsr") return Fallback::babsr;
    if (name == "bisect") return Fallback::bisect;
    throw InputError("unknown fallback '" + name + "' (valid: babsr, bisect)");
}

bool SubDomain::is_split(int layer, int neuron) const {
    return std::any_of(splits.begin(), splits.end(),
                       [&](const SplitConstraint& s) { return s.layer == layer && s.neuron == neuron; });
}

std::pair<SubDomain, SubDomain> split_subdomain(const Network& net, const SubDomain& d, NeuronId target,
                                                bool recompute_intermediate) {
    if (d.is_split(target.layer, target.neuron)) throw std::logic_error("split_subdomain: neuron already split");
    if (target.layer < 1 || target.layer >= net.num_layers() ||
        d.bounds.stability(target.layer, target.neuron) != Stability::unstable)
        throw std::logic_error("split_subdomain: neuron is not unstable");

    const int before = d.bounds.unstable_count(net);
    auto make_child = [&](int sign) {
        SubDomain c;
        c.box = d.box;
        c.splits = d.splits;
        c.splits.push_back({target.layer, target.neuron, sign});
        c.bisections = d.bisections;
        c.depth = d.depth + 1;
        c.parent_id = d.id;
        NeuronBounds nb = d.bounds;
        const SplitConstraint added{target.layer, target.neuron, sign};
        clamp_splits(nb, std::span<const SplitConstraint>(&added, 1));
        if (recompute_intermediate && nb.feasible())
            nb = refine_intermediate_bounds(net, nb, c.splits, target.layer + 1);
        c.bounds = std::move(nb);
        if (!c.infeasible() && c.bounds.unstable_count(net) >= before)
            throw std::logic_error("split_subdomain: unstable count did not decrease");
        return c;
    };
    return {make_child(+1), make_child(-1)};
}

int widest_dimension(const Box& box) {
    int best = -1;
    double best_width = 0.0;
    for (int k = 0; k < box.dim(); ++k) {
        const double wdt = box.upper[k] - box.lower[k];
        if (wdt > best_width) {
            best_width = wdt;
            best = k;
        }
    }
    return best;
}

bool can_bisect(const Box& box) {
    const int k = widest_dimension(box);
    if (k < 0) return false;
    const double mid = 0.5 * (box.lower[k] + box.upper[k]);
    return mid > box.lower[k] && mid < box.upper[k];
}

std::pair<SubDomain, SubDomain> input_bisect(const Network& net, const SubDomain& d) {
    if (!can_bisect(d.box)) throw std::logic_error("input_bisect: box cannot be split further");
    const int k = widest_dimension(d.box);
    const double mid = 0.5 * (d.box.lower[k] + d.box.upper[k]);

    const WidthMeasure before = measure(net, d);
    auto make_child = [&](bool upper_half) {
        SubDomain c;
        c.box = d.box;
        if (upper_half)
            c.box.lower[k] = mid;
        else
            c.box.upper[k] = mid;
        c.splits = d.splits;
        c.bisections = d.bisections + 1;
        c.depth = d.depth + 1;
        c.parent_id = d.id;
        NeuronBounds start = d.bounds;
        start.lower[0] = c.box.lower;
        start.upper[0] = c.box.upper;
        c.bounds = refine_intermediate_bounds(net, start, c.splits, 1);
        if (!c.infeasible() && !(measure(net, c).key() < before.key()))
            throw std::logic_error("input_bisect: termination measure did not decrease");
        return c;
    };
    return {make_child(false), make_child(true)};
}

void Worklist::push(SubDomain d) {
    heap_.push_back(std::move(d));
    std::push_heap(heap_.begin(), heap_.end(), heap_before);
}

SubDomain Worklist::pop() {
    std::pop_heap(heap_.begin(), heap_.end(), heap_before);
    SubDomain d = std::move(heap_.back());
    heap_.pop_back();
    return d;
}

struct BabEngine::Outcome {
    enum class Kind { prune, infeasible, unsafe, split, bisect, unknown } kind = Kind::prune;
    double lower_bound = 0.0;
    double raw_lower_bound = 0.0;
    std::vector<std::shared_ptr<const BoundResult>> rows;
    std::optional<Witness> witness;
    NeuronId branch;
    TraceEntry trace;
};

BabEngine::BabEngine(const VerificationTask& task, BabConfig config)
    : task_(task),
      config_(std::move(config)),
      timeout_s_(config_.timeout_seconds.value_or(task.timeout_seconds)),
      max_branches_(config_.max_branches.value_or(task.max_branches)) {
    validate_task(task_);
    started_ = now_seconds();

    SubDomain root;
    root.box = task_.domain;
    root.bounds = compute_intermediate_bounds(task_.network, root.box, {});
    root.id = next_id_++;
    root.inherited.resize(static_cast<std::size_t>(task_.spec.rows()));

    if (root.bounds.feasible()) {
        for (Eigen::Index r = 0; r < task_.spec.rows(); ++r) {
            const Eigen::VectorXd row = task_.spec.row(r).transpose();
            root_alpha_.push_back(
                optimize_alpha(task_.network, row, root.bounds, config_.alpha_iters, config_.alpha_step).params);
        }
    } else {
        root_alpha_.assign(static_cast<std::size_t>(task_.spec.rows()), initial_alpha(task_.network, root.bounds));
    }
    worklist_.push(std::move(root));
}

BabEngine::Outcome BabEngine::evaluate(const SubDomain& d) const {
    Outcome out;
    TraceEntry& tr = out.trace;
    tr.node_id = d.id;
    tr.parent_id = d.parent_id;
    tr.depth = d.depth;
    tr.parent_lower_bound = d.parent_lower_bound;
    tr.unstable = d.bounds.feasible() ? d.bounds.unstable_count(task_.network) : 0;

    const Network& net = task_.network;
    const auto nrows = static_cast<std::size_t>(task_.spec.rows());
    out.rows.resize(nrows);
    std::vector<RelaxationParams> used_alpha(nrows);
    double lower = std::numeric_limits<double>::infinity();
    double raw = std::numeric_limits<double>::infinity();
    std::size_t worst = 0;

    // Step 1: abstraction (per spec row)
    for (std::size_t r = 0; r < nrows; ++r) {
        const auto& inherited = d.inherited[r];
        if (inherited && inherited->lower_bound > 0.0) {
            // already proved on an enclosing region
            out.rows[r] = inherited;
            used_alpha[r] = root_alpha_[r];
        } else {
            const Eigen::VectorXd row = task_.spec.row(static_cast<Eigen::Index>(r)).transpose();
            RelaxationParams alpha = root_alpha_[r];
            if (config_.realpha_per_node && d.id != 0)
                alpha = optimize_alpha(net, row, d.bounds, config_.alpha_iters, config_.alpha_step, &alpha).params;
            std::optional<BoundResult> fresh = compute_bounds(net, row, d.bounds, alpha);
            if (!fresh) {
                out.kind = Outcome::Kind::infeasible;
                tr.action = "infeasible";
                return out;
            }
            raw = std::min(raw, fresh->lower_bound);
            if (inherited && inherited->lower_bound > fresh->lower_bound)
                out.rows[r] = inherited;
            else
                out.rows[r] = std::make_shared<const BoundResult>(std::move(*fresh));
            used_alpha[r] = std::move(alpha);
        }
        if (out.rows[r]->lower_bound < lower) {
            lower = out.rows[r]->lower_bound;
            worst = r;
        }
    }
    out.lower_bound = lower;
    out.raw_lower_bound = std::isinf(raw) ? lower : raw;
    tr.lower_bound = out.lower_bound;
    tr.raw_lower_bound = out.raw_lower_bound;

    // Step 2: safety check
    if (lower > 0.0) {
        out.kind = Outcome::Kind::prune;
        tr.action = "prune";
        return out;
    }

    // Step 3: counterexample validation
    const BoundResult& bound = *out.rows[worst];
    Eigen::VectorXd x_star = construct_witness(bound, d.box);
    Witness wit = validate_witness(net, task_.spec, x_star, evaluate_linear(bound.w, bound.b, x_star));
    if (wit.kind == WitnessKind::concrete_violation) {
        out.kind = Outcome::Kind::unsafe;
        out.witness = std::move(wit);
        tr.action = "unsafe";
        return out;
    }

    // Step 4: refinement
    std::vector<NeuronId> candidates;
    for (int i = 1; i < net.num_layers(); ++i) {
        if (net.layer(i).activation != Activation::relu) continue;
        for (int j = 0; j < net.width(i); ++j) {
            if (d.bounds.stability(i, j) != Stability::unstable) continue;
            if (bound.neuron_bounds.stability(i, j) != Stability::unstable) continue;
            if (d.is_split(i, j)) continue;
            candidates.push_back({i, j});
        }
    }
    tr.candidates = static_cast<int>(candidates.size());

    auto bisect_or_unknown = [&] {
        if (!can_bisect(d.box)) {
            out.kind = Outcome::Kind::unknown;
            tr.action = "unknown";
        } else {
            out.kind = Outcome::Kind::bisect;
            tr.action = "bisect";
            tr.bisect_dim = widest_dimension(d.box);
        }
    };

    if (candidates.empty()) {
        tr.score_source = "none";
        bisect_or_unknown();
        return out;
    }

    ScoringInput in;
    in.net = &net;
    in.bound = &bound;
    in.params = &used_alpha[worst];
    in.spec_row = task_.spec.row(static_cast<Eigen::Index>(worst)).transpose();
    in.x_star = x_star;
    in.box = d.box;
    in.candidates = candidates;
    ScoreSet scores = score_neurons(config_.heuristic, in);
    tr.score_source = to_string(config_.heuristic);
    tr.clamp_events = scores.clamp_events;

    if (all_scores_zero(scores.scores) && config_.fallback == Fallback::babsr &&
        config_.heuristic != HeuristicKind::babsr) {
        scores = babsr_score(bound, candidates);
        tr.score_source = "babsr_fallback";
    }
    for (const BranchScore& s : scores.scores) {
        if (s.score >= 1e-12) ++tr.nonzero_scores;
        tr.max_score = std::max(tr.max_score, s.score);
    }
    if (all_scores_zero(scores.scores)) {
        bisect_or_unknown();
        return out;
    }
    out.branch = *select_branch(scores.scores);
    out.kind = Outcome::Kind::split;
    tr.action = "split";
    return out;
}

void BabEngine::finish(Verdict v) {
    stats_.verdict = v;
    stats_.wall_time_s = now_seconds() - started_;
    done_ = true;
}

bool BabEngine::worklist_step(int batch) {
    if (done_) return false;
    if (worklist_.empty()) {
        finish(stats_.unknown_leaves > 0 ? Verdict::unknown : Verdict::safe);
        return false;
    }
    if (root_processed_ && (stats_.branches_visited >= max_branches_ || now_seconds() - started_ > timeout_s_)) {
        finish(Verdict::unknown);
        return false;
    }

    long budget = std::max(1, batch);
    if (root_processed_) budget = std::min<long>(budget, max_branches_ - stats_.branches_visited);
    std::vector<SubDomain> nodes;
    while (!worklist_.empty() && static_cast<long>(nodes.size()) < budget) nodes.push_back(worklist_.pop());

    std::vector<Outcome> outcomes(nodes.size());
    if (config_.threads > 1 && nodes.size() > 1) {
        std::vector<std::future<Outcome>> futures;
        for (const SubDomain& d : nodes)
            futures.push_back(std::async(std::launch::async, [this, &d] { return evaluate(d); }));
        for (std::size_t k = 0; k < nodes.size(); ++k) outcomes[k] = futures[k].get();
    } else {
        for (std::size_t k = 0; k < nodes.size(); ++k) outcomes[k] = evaluate(nodes[k]);
    }

    const Network& net = task_.network;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        SubDomain& d = nodes[k];
        Outcome& o = outcomes[k];
        if (d.id == 0) {
            root_processed_ = true;
            stats_.root_lower_bound = o.lower_bound;
        } else {
            ++stats_.branches_visited;
        }
        stats_.clamp_events += o.trace.clamp_events;
        if (o.trace.score_source == "babsr_fallback") ++stats_.babsr_fallbacks;

        auto push_children = [&](std::pair<SubDomain, SubDomain> kids) {
            for (SubDomain* c : {&kids.first, &kids.second}) {
                if (c->infeasible()) {
                    ++stats_.infeasible_pruned;
                    continue;
                }
                c->id = next_id_++;
                c->parent_lower_bound = o.lower_bound;
                c->inherited = o.rows;
                worklist_.push(std::move(*c));
            }
        };

        switch (o.kind) {
        case Outcome::Kind::prune:
            break;
        case Outcome::Kind::infeasible:
            ++stats_.infeasible_pruned;
            break;
        case Outcome::Kind::unknown:
            ++stats_.unknown_leaves;
            break;
        case Outcome::Kind::unsafe:
            stats_.witness = std::move(o.witness);
            if (config_.trace) stats_.trace.push_back(o.trace);
            finish(Verdict::unsafe);
            return false;
        case Outcome::Kind::split:
            o.trace.split = o.branch;
            push_children(split_subdomain(net, d, o.branch, config_.recompute_intermediate));
            ++stats_.splits_made;
            break;
        case Outcome::Kind::bisect:
            push_children(input_bisect(net, d));
            ++stats_.splits_made;
            ++stats_.input_bisections;
            break;
        }
        if (config_.trace) stats_.trace.push_back(std::move(o.trace));
    }
    return true;
}

RunStats BabEngine::run() {
    while (worklist_step(config_.batch)) {
    }
    return stats_;
}

RunStats verify(const VerificationTask& task, const BabConfig& config) {
    BabEngine engine(task, config);
    return engine.run();
}

}  // namespace drgbab
