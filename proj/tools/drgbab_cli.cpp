// drgbab: verify | bench | gen | oracle
#include "drgbab/bench.hpp"
#include "drgbab/oracle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace drgbab;
namespace fs = std::filesystem;

constexpr int kExitInput = 3;

struct ConfigFlags {
    std::string heuristic = "drg";
    std::optional<double> timeout;
    std::optional<long> max_branches;
    int batch = 1;
    int alpha_iters = 20;
    double alpha_step = 0.1;
    bool realpha = false;
    std::string fallback = "babsr";
    std::uint64_t seed = 0;
    bool recompute = false;
    int threads = 1;
    std::string config_file;
};

void add_config_flags(CLI::App* app, ConfigFlags& f, bool with_heuristic) {
    if (with_heuristic)
        app->add_option("--heuristic", f.heuristic, "Branching rule: drg, drg_symmetric, babsr, center, intercept, grad, width");
    app->add_option("--timeout", f.timeout, "Per-instance wall-clock budget in seconds");
    app->add_option("--max-branches", f.max_branches, "Per-instance node budget");
    app->add_option("--batch", f.batch, "Sub-domains popped per step")->check(CLI::PositiveNumber);
    app->add_option("--alpha-iters", f.alpha_iters, "Projected-ascent steps for alpha")->check(CLI::NonNegativeNumber);
    app->add_option("--alpha-step", f.alpha_step, "Alpha ascent step size");
    app->add_flag("--realpha-per-node", f.realpha, "Re-optimize alpha at every node");
    app->add_option("--fallback", f.fallback, "What to do when every score is zero: babsr or bisect");
    app->add_option("--seed", f.seed, "Seed echoed into the run config");
    app->add_flag("--recompute-intermediate", f.recompute, "Re-propagate later-layer bounds after each split");
    app->add_option("--threads", f.threads, "Worker threads per batch")->check(CLI::PositiveNumber);
    app->add_option("--config", f.config_file, "JSON file with config keys; command-line flags override it");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << text;
}

BabConfig build_config(const ConfigFlags& f, const CLI::App& app) {
    BabConfig c;
    if (!f.config_file.empty()) c = config_from_json_text(read_file(f.config_file));
    auto given = [&](const char* name) {
        const CLI::Option* opt = app.get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (given("--heuristic") || f.config_file.empty()) c.heuristic = parse_heuristic(f.heuristic);
    if (given("--timeout")) c.timeout_seconds = f.timeout;
    if (given("--max-branches")) c.max_branches = f.max_branches;
    if (given("--batch") || f.config_file.empty()) c.batch = f.batch;
    if (given("--alpha-iters") || f.config_file.empty()) c.alpha_iters = f.alpha_iters;
    if (given("--alpha-step") || f.config_file.empty()) c.alpha_step = f.alpha_step;
    if (given("--realpha-per-node")) c.realpha_per_node = true;
    if (given("--fallback") || f.config_file.empty()) c.fallback = parse_fallback(f.fallback);
    if (given("--seed") || f.config_file.empty()) c.seed = f.seed;
    if (given("--recompute-intermediate")) c.recompute_intermediate = true;
    if (given("--threads") || f.config_file.empty()) c.threads = f.threads;
    if (c.timeout_seconds && !(*c.timeout_seconds > 0.0)) throw InputError("--timeout must be positive");
    if (c.max_branches && *c.max_branches < 0) throw InputError("--max-branches must be non-negative");
    return c;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int exit_code(Verdict v) {
    switch (v) {
        case Verdict::safe: return 0;
        case Verdict::unsafe: return 1;
        case Verdict::unknown: return 2;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Branch-and-bound verifier for ReLU networks"};
    app.require_subcommand(1);

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "Verify one (model, spec) pair");
    std::string model_path, spec_path, output_path, trace_path;
    ConfigFlags vflags;
    verify_cmd->add_option("--model", model_path, "Model JSON")->required();
    verify_cmd->add_option("--spec", spec_path, "Spec JSON")->required();
    verify_cmd->add_option("--output", output_path, "Also write the result JSON here");
    verify_cmd->add_option("--trace", trace_path, "Write one JSON line per processed node");
    add_config_flags(verify_cmd, vflags, true);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Run heuristics over a suite and summarize");
    std::string suite_dir, heuristics_list = "drg,babsr", baseline = "babsr", bench_out = "bench_out";
    int jobs = 1;
    ConfigFlags bflags;
    bench_cmd->add_option("--suite", suite_dir, "Directory of *.model.json / *.spec.json pairs")->required();
    bench_cmd->add_option("--heuristics", heuristics_list, "Comma-separated heuristics");
    bench_cmd->add_option("--baseline", baseline, "Heuristic the win rates are measured against");
    bench_cmd->add_option("--output", bench_out, "Directory for results.csv, summary.json, summary.md");
    bench_cmd->add_option("--jobs", jobs, "Instances run concurrently")->check(CLI::PositiveNumber);
    add_config_flags(bench_cmd, bflags, false);

    // gen
    auto* gen_cmd = app.add_subcommand("gen", "Write seeded random instances");
    GenOptions gen;
    std::string widths_arg = "8,8", gen_out = "suite";
    std::optional<int> layers;
    gen_cmd->add_option("--seed", gen.seed, "RNG seed");
    gen_cmd->add_option("--layers", layers, "Number of hidden layers (repeats a single --widths value)");
    gen_cmd->add_option("--widths", widths_arg, "Comma-separated hidden widths");
    gen_cmd->add_option("--count", gen.count, "Number of instances");
    gen_cmd->add_option("--eps", gen.eps, "Box half-width around the anchor");
    gen_cmd->add_option("--weight-scale", gen.weight_scale, "Weight standard deviation multiplier");
    gen_cmd->add_option("--input-dim", gen.input_dim, "Input dimension");
    gen_cmd->add_option("--outputs", gen.outputs, "Number of output classes");
    gen_cmd->add_option("--output", gen_out, "Suite directory");

    // oracle
    auto* oracle_cmd = app.add_subcommand("oracle", "Exact minimum margin by activation-pattern enumeration");
    std::string omodel, ospec, ofilter = "closure";
    oracle_cmd->add_option("--model", omodel, "Model JSON")->required();
    oracle_cmd->add_option("--spec", ospec, "Spec JSON")->required();
    oracle_cmd->add_option("--regions", ofilter, "closure or interior");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (*verify_cmd) {
            BabConfig config = build_config(vflags, *verify_cmd);
            if (!trace_path.empty()) config.trace = true;
            const VerificationTask task = load_task(model_path, spec_path);
            const RunStats stats = verify(task, config);
            const std::string text = result_json_text(stats, config);
            std::cout << text;
            if (!output_path.empty()) write_file(output_path, text);
            if (!trace_path.empty()) write_file(trace_path, trace_jsonl(stats));
            return exit_code(stats.verdict);
        }

        if (*bench_cmd) {
            BabConfig config = build_config(bflags, *bench_cmd);
            std::vector<HeuristicKind> kinds;
            for (const auto& name : split_commas(heuristics_list)) kinds.push_back(parse_heuristic(name));
            if (kinds.empty()) throw InputError("--heuristics is empty");
            const HeuristicKind base_kind = parse_heuristic(baseline);
            if (std::find(kinds.begin(), kinds.end(), base_kind) == kinds.end()) kinds.push_back(base_kind);
            const auto suite = list_suite(suite_dir);
            if (suite.empty()) throw InputError("suite " + suite_dir + " contains no *.model.json / *.spec.json pairs");

            const auto rows = run_bench(suite, kinds, config, jobs);
            const auto summary = summarize(rows, to_string(base_kind));
            fs::create_directories(bench_out);
            write_file((fs::path(bench_out) / "results.csv").string(), bench_csv(rows));
            write_file((fs::path(bench_out) / "summary.json").string(), summary_json_text(summary, to_string(base_kind)));
            const std::string md = summary_markdown(summary, to_string(base_kind));
            write_file((fs::path(bench_out) / "summary.md").string(), md);
            std::cout << md;
            return 0;
        }

        if (*gen_cmd) {
            gen.widths.clear();
            try {
                for (const auto& w : split_commas(widths_arg)) gen.widths.push_back(std::stoi(w));
            } catch (const std::exception&) {
                throw InputError("--widths must be a comma-separated list of integers, got '" + widths_arg + "'");
            }
            if (layers) {
                if (*layers < 0) throw InputError("--layers must be non-negative");
                if (gen.widths.size() == 1) {
                    gen.widths.assign(*layers, gen.widths.front());
                } else if (static_cast<int>(gen.widths.size()) != *layers) {
                    throw InputError("--layers " + std::to_string(*layers) + " does not match " +
                                     std::to_string(gen.widths.size()) + " --widths entries");
                }
            }
            write_suite(gen_out, gen);
            std::cout << "wrote " << gen.count << " instances to " << gen_out << "\n";
            return 0;
        }

        if (*oracle_cmd) {
            RegionFilter filter;
            if (ofilter == "closure") filter = RegionFilter::closure;
            else if (ofilter == "interior") filter = RegionFilter::interior;
            else throw InputError("--regions must be closure or interior, got '" + ofilter + "'");
            const VerificationTask task = load_task(omodel, ospec);
            const ExactMinimum m = exact_min_margin(task, filter);
            nlohmann::json arg = nlohmann::json::array();
            for (Eigen::Index i = 0; i < m.argmin.size(); ++i) arg.push_back(m.argmin(i));
            nlohmann::json j{{"min_value", m.min_value},
                             {"verdict", m.min_value > 0.0 ? "Safe" : "Unsafe"},
                             {"argmin", arg},
                             {"unstable_neurons", m.unstable_neurons},
                             {"regions_visited", m.regions_visited},
                             {"regions_feasible", m.regions_feasible}};
            std::cout << j.dump(2) << "\n";
            return m.min_value > 0.0 ? 0 : 1;
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const OracleBudgetExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return 0;
}
