#include "drgbab/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace drgbab {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;
namespace fs = std::filesystem;

VerificationTask random_instance(std::mt19937_64& rng, int input_dim, std::span<const int> widths, int outputs,
                                 double eps, double weight_scale) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), widths.begin(), widths.end());
    dims.push_back(outputs);

    std::vector<Layer> layers;
    for (std::size_t i = 1; i < dims.size(); ++i) {
        Layer layer;
        layer.weights.resize(dims[i], dims[i - 1]);
        layer.bias.resize(dims[i]);
        const double std_w = weight_scale / std::sqrt(static_cast<double>(dims[i - 1]));
        // Draw row by row so the stream order does not depend on Eigen's storage order.
        for (int r = 0; r < dims[i]; ++r)
            for (int c = 0; c < dims[i - 1]; ++c) layer.weights(r, c) = std_w * gauss(rng);
        for (int r = 0; r < dims[i]; ++r) layer.bias(r) = 0.1 * weight_scale * gauss(rng);
        layer.activation = (i + 1 == dims.size()) ? Activation::linear : Activation::relu;
        layers.push_back(std::move(layer));
    }
    Network net(input_dim, std::move(layers));

    VectorXd anchor(input_dim);
    for (int k = 0; k < input_dim; ++k) anchor(k) = unit(rng);
    const VectorXd logits = forward(net, anchor).logits;
    Eigen::Index label = 0;
    logits.maxCoeff(&label);

    MatrixXd spec = MatrixXd::Zero(outputs - 1, outputs);
    int row = 0;
    for (int k = 0; k < outputs; ++k) {
        if (k == label) continue;
        spec(row, label) = 1.0;
        spec(row, k) = -1.0;
        ++row;
    }
    Box box{(anchor.array() - eps).matrix(), (anchor.array() + eps).matrix()};
    return VerificationTask{std::move(net), std::move(box), std::move(spec)};
}

void validate_gen_options(const GenOptions& opts) {
    if (opts.input_dim < 1) throw InputError("--input-dim must be at least 1");
    if (opts.outputs < 2) throw InputError("--outputs must be at least 2 (a robustness spec needs a competing class)");
    if (opts.count < 0) throw InputError("--count must be non-negative");
    if (!(opts.eps > 0.0) || !std::isfinite(opts.eps)) throw InputError("--eps must be a positive finite number");
    if (!(opts.weight_scale > 0.0) || !std::isfinite(opts.weight_scale))
        throw InputError("--weight-scale must be a positive finite number");
    for (int w : opts.widths)
        if (w < 1) throw InputError("--widths entries must be at least 1, got " + std::to_string(w));
}

std::vector<VerificationTask> generate_instances(const GenOptions& opts) {
    validate_gen_options(opts);
    std::mt19937_64 rng(opts.seed);
    std::vector<VerificationTask> out;
    out.reserve(opts.count);
    for (int i = 0; i < opts.count; ++i)
        out.push_back(random_instance(rng, opts.input_dim, opts.widths, opts.outputs, opts.eps, opts.weight_scale));
    return out;
}

namespace {

std::string instance_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "inst_%04d", i);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    // Write to a sibling file and rename so readers never see half a file.
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw InputError("cannot write " + tmp.string());
        out << text;
        if (!out) throw InputError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

void write_suite(const std::string& dir, const GenOptions& opts) {
    const auto tasks = generate_instances(opts);
    fs::create_directories(dir);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const std::string base = (fs::path(dir) / instance_name(static_cast<int>(i))).string();
        write_text(base + ".model.json", network_to_json_text(tasks[i].network));
        write_text(base + ".spec.json", spec_to_json_text(tasks[i]));
    }
}

std::vector<SuiteEntry> list_suite(const std::string& dir) {
    if (!fs::is_directory(dir)) throw InputError("suite directory not found: " + dir);
    const std::string model_suffix = ".model.json";
    std::vector<SuiteEntry> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string file = entry.path().filename().string();
        if (file.size() <= model_suffix.size() ||
            file.compare(file.size() - model_suffix.size(), model_suffix.size(), model_suffix) != 0)
            continue;
        const std::string name = file.substr(0, file.size() - model_suffix.size());
        const fs::path spec = fs::path(dir) / (name + ".spec.json");
        if (!fs::exists(spec)) throw InputError("model " + entry.path().string() + " has no matching " + spec.string());
        out.push_back({name, entry.path().string(), spec.string()});
    }
    std::sort(out.begin(), out.end(), [](const SuiteEntry& a, const SuiteEntry& b) { return a.name < b.name; });
    return out;
}

std::vector<BenchRow> run_bench(std::span<const SuiteEntry> suite, std::span<const HeuristicKind> heuristics,
                                const BabConfig& base, int jobs) {
    std::vector<VerificationTask> tasks;
    tasks.reserve(suite.size());
    for (const auto& e : suite) tasks.push_back(load_task(e.model_path, e.spec_path));

    const std::size_t total = suite.size() * heuristics.size();
    std::vector<BenchRow> rows(total);
    auto run_one = [&](std::size_t idx) {
        const std::size_t inst = idx / heuristics.size();
        BabConfig cfg = base;
        cfg.heuristic = heuristics[idx % heuristics.size()];
        cfg.trace = false;
        const RunStats stats = verify(tasks[inst], cfg);
        rows[idx] = BenchRow{suite[inst].name,      to_string(cfg.heuristic), stats.verdict,
                             stats.branches_visited, stats.splits_made,        stats.wall_time_s};
    };

    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(total)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < total; ++i) run_one(i);
        return rows;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> pool;
    for (int w = 0; w < workers; ++w)
        pool.push_back(std::async(std::launch::async, [&] {
            for (std::size_t i = next++; i < total; i = next++) run_one(i);
        }));
    for (auto& f : pool) f.get();
    return rows;
}

std::string bench_csv(std::span<const BenchRow> rows) {
    std::string out = "instance,heuristic,verdict,branches,splits,time_s\n";
    for (const auto& r : rows) {
        out += r.instance + ',' + r.heuristic + ',' + to_string(r.verdict) + ',' + std::to_string(r.branches) + ',' +
               std::to_string(r.splits) + ',' + format_double(r.time_s) + '\n';
    }
    return out;
}

std::vector<BenchRow> parse_bench_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "instance,heuristic,verdict,branches,splits,time_s")
        throw InputError("bench CSV: unexpected header");
    std::vector<BenchRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw InputError("bench CSV line " + std::to_string(lineno) + ": expected 6 fields");
        BenchRow r;
        r.instance = cells[0];
        r.heuristic = cells[1];
        if (cells[2] == "Safe") r.verdict = Verdict::safe;
        else if (cells[2] == "Unsafe") r.verdict = Verdict::unsafe;
        else if (cells[2] == "Unknown") r.verdict = Verdict::unknown;
        else throw InputError("bench CSV line " + std::to_string(lineno) + ": bad verdict '" + cells[2] + "'");
        r.branches = std::stol(cells[3]);
        r.splits = std::stol(cells[4]);
        r.time_s = std::stod(cells[5]);
        rows.push_back(std::move(r));
    }
    return rows;
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<HeuristicSummary> summarize(std::span<const BenchRow> rows, const std::string& baseline) {
    std::vector<std::string> order;
    std::map<std::string, std::map<std::string, const BenchRow*>> by_heuristic;
    for (const auto& r : rows) {
        if (!by_heuristic.count(r.heuristic)) order.push_back(r.heuristic);
        by_heuristic[r.heuristic][r.instance] = &r;
    }
    if (!by_heuristic.count(baseline)) throw InputError("baseline heuristic '" + baseline + "' has no results");
    const auto& base_rows = by_heuristic.at(baseline);

    std::vector<HeuristicSummary> out;
    for (const auto& name : order) {
        const auto& mine = by_heuristic.at(name);
        HeuristicSummary s;
        s.heuristic = name;
        s.instances = static_cast<int>(mine.size());
        std::vector<double> branches, times;
        int timeouts = 0;
        for (const auto& [inst, r] : mine) {
            branches.push_back(static_cast<double>(r->branches));
            times.push_back(r->time_s);
            if (r->verdict == Verdict::unknown) ++timeouts;
        }
        const double n = static_cast<double>(mine.size());
        s.mean_branches = std::accumulate(branches.begin(), branches.end(), 0.0) / n;
        s.mean_time = std::accumulate(times.begin(), times.end(), 0.0) / n;
        s.median_branches = median(branches);
        s.median_time = median(times);
        s.pct_timeout = 100.0 * timeouts / n;

        if (name != baseline) {
            int shared = 0, le_branches = 0, le_time = 0;
            HeadToHead h;
            for (const auto& [inst, r] : mine) {
                auto it = base_rows.find(inst);
                if (it == base_rows.end()) continue;
                const BenchRow& b = *it->second;
                ++shared;
                if (r->branches <= b.branches) ++le_branches;
                if (r->time_s <= b.time_s) ++le_time;
                if (r->verdict == Verdict::unknown && b.verdict == Verdict::unknown) continue;
                if (r->branches < b.branches) ++h.wins;
                else if (r->branches == b.branches) ++h.ties;
                else ++h.losses;
            }
            if (shared > 0) {
                s.win_rate_branches = 100.0 * le_branches / shared;
                s.win_rate_time = 100.0 * le_time / shared;
            }
            if (h.wins + h.losses > 0) h.dominance = 100.0 * h.wins / (h.wins + h.losses);
            s.head_to_head = h;
        }
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string percent_or_dash(const std::optional<double>& v) { return v ? fixed(*v, 1) + "%" : "-"; }

}  // namespace

std::string summary_json_text(std::span<const HeuristicSummary> summary, const std::string& baseline) {
    json arr = json::array();
    for (const auto& s : summary) {
        json j{{"heuristic", s.heuristic},
               {"instances", s.instances},
               {"mean_branches", s.mean_branches},
               {"median_branches", s.median_branches},
               {"mean_time_s", s.mean_time},
               {"median_time_s", s.median_time},
               {"pct_timeout", s.pct_timeout},
               {"win_rate_branches", optional_json(s.win_rate_branches)},
               {"win_rate_time", optional_json(s.win_rate_time)}};
        if (s.head_to_head) {
            const auto& h = *s.head_to_head;
            j["head_to_head"] = {{"wins", h.wins},
                                 {"ties", h.ties},
                                 {"losses", h.losses},
                                 {"dominance", optional_json(h.dominance)}};
        } else {
            j["head_to_head"] = nullptr;
        }
        arr.push_back(std::move(j));
    }
    return json{{"baseline", baseline}, {"heuristics", arr}}.dump(2) + "\n";
}

std::string summary_markdown(std::span<const HeuristicSummary> summary, const std::string& baseline) {
    std::ostringstream md;
    md << "Baseline: " << baseline << "\n\n";
    md << "| Heuristic | Branches | Time (s) | Timeout | Win (branches) | Win (time) |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const auto& s : summary) {
        md << "| " << s.heuristic << " | " << fixed(s.mean_branches, 1) << " (" << fixed(s.median_branches, 1)
           << ") | " << fixed(s.mean_time, 3) << " (" << fixed(s.median_time, 3) << ") | "
           << fixed(s.pct_timeout, 1) << "% | " << percent_or_dash(s.win_rate_branches) << " | "
           << percent_or_dash(s.win_rate_time) << " |\n";
    }
    md << "\nHead-to-head on branches against " << baseline << " (instances where both time out excluded):\n\n";
    md << "| Heuristic | Wins | Ties | Losses | Dominance |\n|---|---|---|---|---|\n";
    for (const auto& s : summary) {
        if (!s.head_to_head) continue;
        const auto& h = *s.head_to_head;
        md << "| " << s.heuristic << " | " << h.wins << " | " << h.ties << " | " << h.losses << " | "
           << percent_or_dash(h.dominance) << " |\n";
    }
    return md.str();
}

std::string config_json_text(const BabConfig& c) {
    json j{{"heuristic", to_string(c.heuristic)},
           {"timeout_seconds", c.timeout_seconds ? json(*c.timeout_seconds) : json(nullptr)},
           {"max_branches", c.max_branches ? json(*c.max_branches) : json(nullptr)},
           {"batch", c.batch},
           {"alpha_iters", c.alpha_iters},
           {"alpha_step", c.alpha_step},
           {"realpha_per_node", c.realpha_per_node},
           {"fallback", to_string(c.fallback)},
           {"trace", c.trace},
           {"seed", c.seed},
           {"recompute_intermediate", c.recompute_intermediate},
           {"threads", c.threads}};
    return j.dump();
}

BabConfig config_from_json_text(const std::string& text, BabConfig c) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw InputError("config: expected a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "heuristic") c.heuristic = parse_heuristic(v.get<std::string>());
            else if (key == "timeout_seconds") c.timeout_seconds = v.is_null() ? std::nullopt : std::optional(v.get<double>());
            else if (key == "max_branches") c.max_branches = v.is_null() ? std::nullopt : std::optional(v.get<long>());
            else if (key == "batch") c.batch = v.get<int>();
            else if (key == "alpha_iters") c.alpha_iters = v.get<int>();
            else if (key == "alpha_step") c.alpha_step = v.get<double>();
            else if (key == "realpha_per_node") c.realpha_per_node = v.get<bool>();
            else if (key == "fallback") c.fallback = parse_fallback(v.get<std::string>());
            else if (key == "trace") c.trace = v.get<bool>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "recompute_intermediate") c.recompute_intermediate = v.get<bool>();
            else if (key == "threads") c.threads = v.get<int>();
            else throw InputError("config: unknown key '" + key + "'");
        }
    } catch (const json::type_error& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    if (c.batch < 1) throw InputError("config: batch must be at least 1");
    if (c.alpha_iters < 0) throw InputError("config: alpha_iters must be non-negative");
    if (c.threads < 1) throw InputError("config: threads must be at least 1");
    return c;
}

namespace {

json vector_json(const VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string result_json_text(const RunStats& s, const BabConfig& config) {
    json j{{"verdict", to_string(s.verdict)},
           {"branches", s.branches_visited},
           {"splits", s.splits_made},
           {"time_s", s.wall_time_s},
           {"heuristic", to_string(config.heuristic)},
           {"config_echo", json::parse(config_json_text(config))},
           {"stats",
            {{"input_bisections", s.input_bisections},
             {"babsr_fallbacks", s.babsr_fallbacks},
             {"infeasible_pruned", s.infeasible_pruned},
             {"unknown_leaves", s.unknown_leaves},
             {"clamp_events", s.clamp_events},
             {"root_lower_bound", finite_or_null(s.root_lower_bound)}}}};
    if (s.witness) {
        j["witness"] = {{"x", vector_json(s.witness->x_star)},
                        {"concrete_margin", vector_json(s.witness->concrete_margin)},
                        {"abstract_margin", finite_or_null(s.witness->abstract_margin)},
                        {"kind", to_string(s.witness->kind)}};
    }
    return j.dump(2) + "\n";
}

std::string trace_jsonl(const RunStats& s) {
    std::string out;
    for (const auto& t : s.trace) {
        json j{{"node", t.node_id},
               {"parent", t.parent_id},
               {"depth", t.depth},
               {"parent_lower_bound", finite_or_null(t.parent_lower_bound)},
               {"lower_bound", finite_or_null(t.lower_bound)},
               {"raw_lower_bound", finite_or_null(t.raw_lower_bound)},
               {"action", t.action},
               {"score_source", t.score_source},
               {"candidates", t.candidates},
               {"nonzero_scores", t.nonzero_scores},
               {"max_score", t.max_score},
               {"clamp_events", t.clamp_events},
               {"unstable", t.unstable}};
        if (t.split) j["split"] = {{"layer", t.split->layer}, {"neuron", t.split->neuron}};
        if (t.bisect_dim >= 0) j["bisect_dim"] = t.bisect_dim;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace drgbab
