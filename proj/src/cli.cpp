#include "sdec/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "sdec/bellman.hpp"
#include "sdec/checks.hpp"
#include "sdec/config.hpp"
#include "sdec/metrics.hpp"
#include "sdec/plot.hpp"
#include "sdec/train.hpp"

namespace sdec {

namespace {

namespace fs = std::filesystem;

int cmd_solve(const std::string& env_name, int n, double lambda, double tol, double gamma,
              std::uint64_t mdp_seed) {
    nlohmann::json params = nlohmann::json::object();
    if (env_name == "chain") params["n"] = n;
    if (env_name == "random_mdp") {
        params["n_states"] = n;
        params["seed"] = mdp_seed;
    }
    if (gamma > 0.0) params["gamma"] = gamma;
    AnyEnv env = make_benchmark_env(env_name, params);
    if (!std::holds_alternative<TabularMdp>(env))
        throw InvalidValue("solve needs a tabular environment, got '" + env_name + "'");
    const TabularMdp& mdp = std::get<TabularMdp>(env);

    FixedPointResult fp = solve_fixed_point(mdp, lambda, tol);
    nlohmann::json out;
    out["env"] = env_name;
    out["lambda"] = lambda;
    out["gamma"] = mdp.gamma;
    out["iterations"] = fp.iterations;
    out["V"] = std::vector<double>(fp.v.data(), fp.v.data() + fp.v.size());
    if (lambda > 0.0) {
        TabularPolicy pi = smoothed_optimal_policy(mdp, fp.v, lambda);
        nlohmann::json rows = nlohmann::json::array();
        for (int s = 0; s < mdp.n_states; ++s) {
            nlohmann::json row = nlohmann::json::array();
            for (int a = 0; a < mdp.n_actions; ++a) row.push_back(pi.probs(s, a));
            rows.push_back(std::move(row));
        }
        out["policy"] = std::move(rows);
        out["residual"] = consistency_residual(mdp, fp.v, pi, lambda).max_abs;
    } else {
        out["policy"] = greedy_policy(mdp, fp.v);
        out["residual"] = fp.residual;
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

void write_train_outputs(const TrainResult& result, const SdecConfig& cfg,
                         const std::string& out_dir, bool svg) {
    fs::create_directories(out_dir);
    write_metrics(result.metrics, out_dir + "/metrics.csv");
    write_text_file(out_dir + "/checkpoint.json",
                    checkpoint_to_json(result, cfg).dump(2) + "\n");
    nlohmann::json rj;
    rj["gradient_steps"] = result.gradient_steps;
    rj["wall_ms_total"] = result.wall_ms_total;
    rj["final_avg_return"] = result.final_avg_return;
    rj["final_return_half_width"] = result.final_return_half_width;
    if (std::isfinite(result.final_consistency_residual))
        rj["final_consistency_residual"] = result.final_consistency_residual;
    rj["v_error_per_episode"] = result.v_error_per_episode;
    rj["dual_param_norm"] = result.dual_param_norm;
    write_text_file(out_dir + "/result.json", rj.dump(2) + "\n");
    if (svg) {
        std::string column = cfg.eval_every > 0 ? "avg_return" : "objective_L_eta";
        write_text_file(out_dir + "/metrics.svg", metrics_svg(result.metrics, column));
    }
}

// Failures after input validation are runtime failures (exit 2).
struct RuntimePhase {
    template <class F>
    static int run(F&& f) {
        try {
            return f();
        } catch (const NonFiniteLoss& e) {
            std::cerr << "runtime failure: " << e.what() << "\n";
            return 2;
        } catch (const IoError& e) {
            std::cerr << "i/o failure: " << e.what() << "\n";
            return 2;
        }
    }
};

int cmd_train(const std::string& config_path, const std::string& out_dir, bool svg) {
    SdecConfig cfg = load_config(config_path);  // input errors bubble as exit 1
    return RuntimePhase::run([&] {
        TrainResult result = sdec_train(cfg);
        write_train_outputs(result, cfg, out_dir, svg);
        std::cout << nlohmann::json{{"out", out_dir},
                                    {"gradient_steps", result.gradient_steps},
                                    {"final_avg_return", result.final_avg_return}}
                         .dump(2)
                  << "\n";
        return 0;
    });
}

int cmd_check(const std::string& selector, std::uint64_t seed, int n_seeds,
              bool inject_fault) {
    std::vector<CheckResult> results = run_checks(selector, seed, n_seeds, inject_fault);
    std::cout << check_results_to_json(results).dump(2) << "\n";
    return all_pass(results) ? 0 : 2;
}

int cmd_bench_run(const SdecConfig& base, const std::string& out_dir, int seeds, bool svg);

int cmd_bench(const std::string& config_path, const std::string& out_dir, int seeds,
              bool svg) {
    SdecConfig base = load_config(config_path);
    if (seeds < 1) throw InvalidValue("bench needs at least one seed");
    return RuntimePhase::run([&] { return cmd_bench_run(base, out_dir, seeds, svg); });
}

int cmd_bench_run(const SdecConfig& base, const std::string& out_dir, int seeds, bool svg) {
    fs::create_directories(out_dir);
    std::vector<TrainResult> runs;
    std::vector<double> finals;
    for (int i = 0; i < seeds; ++i) {
        SdecConfig cfg = base;
        cfg.seed = base.seed + static_cast<std::uint64_t>(i);
        TrainResult result = sdec_train(cfg);
        write_train_outputs(result, cfg, out_dir + "/seed_" + std::to_string(i), false);
        finals.push_back(result.final_avg_return);
        runs.push_back(std::move(result));
    }
    // reporting convention: mean across seeds with 50% confidence half-width
    const double z50 = 0.6744897501960817;
    double mean = 0.0;
    for (double f : finals) mean += f;
    mean /= finals.size();
    double var = 0.0;
    for (double f : finals) var += (f - mean) * (f - mean);
    var = finals.size() > 1 ? var / (finals.size() - 1) : 0.0;
    double half = z50 * std::sqrt(var / finals.size());

    PlotSeries series;
    series.label = "avg_return (mean of " + std::to_string(seeds) + " seeds)";
    nlohmann::json curve = nlohmann::json::array();
    for (std::size_t k = 0; k < runs[0].metrics.size(); ++k) {
        if (!std::isfinite(runs[0].metrics[k].avg_return)) continue;
        double m = 0.0;
        for (const auto& r : runs) m += r.metrics[k].avg_return;
        m /= runs.size();
        double v = 0.0;
        for (const auto& r : runs) v += (r.metrics[k].avg_return - m) *
                                        (r.metrics[k].avg_return - m);
        v = runs.size() > 1 ? v / (runs.size() - 1) : 0.0;
        double hw = z50 * std::sqrt(v / runs.size());
        series.x.push_back(static_cast<double>(runs[0].metrics[k].iteration));
        series.y.push_back(m);
        series.band.push_back(hw);
        curve.push_back({{"iteration", runs[0].metrics[k].iteration},
                         {"mean", m},
                         {"half_width", hw}});
    }
    nlohmann::json bj;
    bj["seeds"] = seeds;
    bj["final_avg_return_mean"] = mean;
    bj["final_avg_return_half_width"] = half;
    bj["curve"] = std::move(curve);
    write_text_file(out_dir + "/bench.json", bj.dump(2) + "\n");
    if (svg && !series.x.empty())
        write_text_file(out_dir + "/bench.svg",
                        render_svg({series}, "average return during training"));
    std::cout << bj.dump(2) << "\n";
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"smoothed dual embedding control"};
    app.require_subcommand(1);

    auto* solve = app.add_subcommand("solve", "tabular fixed-point oracle");
    std::string solve_env = "chain";
    int solve_n = 5;
    double solve_lambda = 0.01, solve_tol = 1e-10, solve_gamma = -1.0;
    std::uint64_t solve_seed = 0;
    solve->add_option("--env", solve_env, "environment name");
    solve->add_option("--n", solve_n, "chain length / random_mdp state count");
    solve->add_option("--lambda", solve_lambda, "entropy weight (0 = hard max)");
    solve->add_option("--tol", solve_tol, "sup-norm tolerance");
    solve->add_option("--gamma", solve_gamma, "discount override");
    solve->add_option("--seed", solve_seed, "random_mdp seed");

    auto* train = app.add_subcommand("train", "run the full training loop");
    std::string train_config, train_out = "out";
    bool train_svg = false;
    train->add_option("--config", train_config, "config JSON path")->required();
    train->add_option("--out", train_out, "output directory");
    train->add_flag("--svg", train_svg, "emit an SVG chart from metrics.csv");

    auto* check = app.add_subcommand("check", "run the property-check suites");
    std::string check_selector = "all";
    std::uint64_t check_seed = 0;
    int check_seeds = 100;
    bool inject_fault = false;
    check->add_option("selector", check_selector,
                      "all|contraction|bias|consistency|variance|gradients|reductions");
    check->add_option("--seed", check_seed, "base seed");
    check->add_option("--seeds", check_seeds, "number of random instances");
    check->add_flag("--inject-fault", inject_fault,
                    "corrupt one gradient coordinate (detector sanity)");

    auto* bench = app.add_subcommand("bench", "train across seeds and aggregate");
    std::string bench_config, bench_out = "bench_out";
    int bench_seeds = 5;
    bool bench_svg = false;
    bench->add_option("--config", bench_config, "config JSON path")->required();
    bench->add_option("--out", bench_out, "output directory");
    bench->add_option("--seeds", bench_seeds, "number of seeds");
    bench->add_flag("--svg", bench_svg, "emit an SVG chart");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (*solve)
            return cmd_solve(solve_env, solve_n, solve_lambda, solve_tol, solve_gamma,
                             solve_seed);
        if (*train) return cmd_train(train_config, train_out, train_svg);
        if (*check) return cmd_check(check_selector, check_seed, check_seeds, inject_fault);
        if (*bench) return cmd_bench(bench_config, bench_out, bench_seeds, bench_svg);
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const NonFiniteLoss& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace sdec
