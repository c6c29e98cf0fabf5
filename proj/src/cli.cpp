#include "nestack/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <ostream>
#include <random>

#include "nestack/error.hpp"
#include "nestack/json_io.hpp"
#include "nestack/nested_models.hpp"
#include "nestack/simulation.hpp"
#include "nestack/stacking.hpp"

namespace nestack::cli {

namespace {

struct WeightOptions {
    std::string method = "penalized";
    double tau = 0.5;
    double lambda = 2.0;
    double eta = 0.5;
    std::size_t m = 2;
    std::size_t draws = 0;
    std::uint64_t seed = 0;
    CLI::Option* draws_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    bool value_weighted = false;
};

struct SimOptions {
    std::string config;
    std::uint64_t seed = 0;
    std::size_t reps = 1000;
    std::string format = "json";
    std::size_t threads = 0;
    CLI::Option* seed_opt = nullptr;
};

std::uint64_t fresh_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
}

void add_weight_flags(CLI::App* app, WeightOptions& w, bool with_method) {
    if (with_method)
        app->add_option("--method", w.method, "penalized | l0 | qagg | ensemble")
            ->check(CLI::IsMember({"penalized", "l0", "qagg", "ensemble"}));
    app->add_option("--tau", w.tau, "shrinkage parameter tau > 0");
    app->add_option("--lambda", w.lambda, "model-size penalty lambda > 0");
    if (with_method) app->add_option("--eta", w.eta, "Q-aggregation parameter in (0, 1)");
    app->add_option("--m", w.m, "ensemble subset size plus one, 2..M+1");
    w.draws_opt = app->add_option("--B", w.draws, "ensemble draws; omit to enumerate every subset");
    w.seed_opt = app->add_option("--seed", w.seed, "random seed for ensemble sampling");
    if (with_method) app->add_flag("--value-weighted", w.value_weighted, "l0: charge each jump by its level");
}

StackWeights compute_weights(const NestedModelSequence& seq, WeightOptions& w, std::ostream& err) {
    StackWeights out;
    const auto method = parse_weight_method(w.method);
    switch (method) {
        case WeightMethod::penalized: out = stack_weights(seq, w.tau, w.lambda); break;
        case WeightMethod::l0: out = l0_stack_weights(seq, w.value_weighted); break;
        case WeightMethod::qagg: out = qagg_weights(seq, w.eta); break;
        case WeightMethod::ensemble: {
            std::optional<std::size_t> draws;
            if (w.draws_opt->count()) {
                draws = w.draws;
                if (!w.seed_opt->count()) {
                    w.seed = fresh_seed();
                    err << "no --seed given; using generated seed " << w.seed << "\n";
                }
            }
            out = randomized_ensemble(seq, w.m, draws, w.lambda, w.seed);
            break;
        }
        default: fail_validation("unsupported method '" + w.method + "'");
    }
    out.m_hat = best_single(seq, w.lambda).m_hat;
    return out;
}

std::vector<double> response_vector(const Eigen::MatrixXd& m) {
    if (m.cols() == 1) return {m.data(), m.data() + m.rows()};
    if (m.rows() == 1) {
        Eigen::VectorXd v = m.row(0).transpose();
        return {v.data(), v.data() + v.size()};
    }
    fail_validation("response file must hold a single column or a single row");
}

std::uint64_t resolve_seed(SimOptions& s, std::ostream& err) {
    if (!s.seed_opt->count()) {
        s.seed = fresh_seed();
        err << "no --seed given; using generated seed " << s.seed << "\n";
    }
    return s.seed;
}

SimulationConfig load_config(const std::string& path) {
    const auto base = std::filesystem::path(path).parent_path().string();
    return config_from_json(read_json_file(path), base.empty() ? "." : base);
}

void add_sim_flags(CLI::App* app, SimOptions& s, bool with_format) {
    app->add_option("--config", s.config, "scenario/estimator JSON file")->required();
    s.seed_opt = app->add_option("--seed", s.seed, "base seed; generated and echoed when omitted");
    app->add_option("--reps", s.reps, "number of replications");
    app->add_option("--threads", s.threads, "worker threads; overrides the config, output does not depend on it")
        ->check(CLI::PositiveNumber);
    if (with_format) app->add_option("--format", s.format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stacking weights for nested least-squares regressions", "nestack"};
    app.require_subcommand(1);

    // weights
    auto* weights = app.add_subcommand("weights", "weights for a model sequence JSON");
    std::string weights_input;
    WeightOptions wopt;
    weights->add_option("--input", weights_input, "model sequence JSON")->required();
    add_weight_flags(weights, wopt, true);

    // ensemble
    auto* ensemble = app.add_subcommand("ensemble", "randomized-ensemble coefficients for a model sequence JSON");
    std::string ensemble_input;
    WeightOptions eopt;
    eopt.method = "ensemble";
    ensemble->add_option("--input", ensemble_input, "model sequence JSON")->required();
    add_weight_flags(ensemble, eopt, false);

    // fit
    auto* fit = app.add_subcommand("fit", "fit nested least-squares models and learn weights");
    std::string design_path, response_path, output_path, nested_from = "columns";
    double sigma2 = 0.0;
    WeightOptions fopt;
    fit->add_option("--design", design_path, "headerless CSV; last column is the response unless --response")
        ->required();
    fit->add_option("--response", response_path, "headerless single-column CSV");
    auto* sigma2_opt = fit->add_option("--sigma2", sigma2, "known noise variance");
    fit->add_option("--nested-from", nested_from, "columns (prefix order) | stepwise")
        ->check(CLI::IsMember({"columns", "stepwise"}));
    fit->add_option("--output", output_path, "also write the model sequence JSON here");
    add_weight_flags(fit, fopt, true);

    SimOptions simulate_opt, riskgap_opt, df_opt;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo risks for the configured estimators");
    add_sim_flags(simulate, simulate_opt, true);
    auto* riskgap = app.add_subcommand("riskgap", "paired best-vs-stack risk gap experiment");
    add_sim_flags(riskgap, riskgap_opt, true);
    auto* dfcmd = app.add_subcommand("df", "Monte Carlo degrees of freedom");
    add_sim_flags(dfcmd, df_opt, false);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    try {
        if (weights->parsed()) {
            const auto seq = sequence_from_json(read_json_file(weights_input));
            out << dump(to_json(compute_weights(seq, wopt, err)));
        } else if (ensemble->parsed()) {
            const auto seq = sequence_from_json(read_json_file(ensemble_input));
            out << dump(to_json(compute_weights(seq, eopt, err)));
        } else if (fit->parsed()) {
            if (!sigma2_opt->count())
                fail_validation("--sigma2 is required: the weights assume the noise variance is known");
            Eigen::MatrixXd x = read_csv_matrix(design_path);
            std::vector<double> y;
            if (response_path.empty()) {
                if (x.cols() < 2) fail_validation("design CSV needs at least one feature column plus the response");
                const Eigen::VectorXd last = x.col(x.cols() - 1);
                y.assign(last.data(), last.data() + last.size());
                x.conservativeResize(Eigen::NoChange, x.cols() - 1);
            } else {
                y = response_vector(read_csv_matrix(response_path));
            }
            DesignMatrix design{x};
            if (y.size() != design.rows()) fail_validation("response length does not match design rows");
            NestedIndexSets sets;
            if (nested_from == "stepwise") {
                sets = stepwise_deletion_order(design, y);
            } else {
                for (std::size_t k = 1; k <= design.cols(); ++k) {
                    std::vector<std::size_t> s(k);
                    for (std::size_t j = 0; j < k; ++j) s[j] = j;
                    sets.sets.push_back(std::move(s));
                }
            }
            const auto [basis, prefix] = nested_basis(design, sets);
            const auto seq = fit_nested(basis, y, prefix, sigma2);
            if (!output_path.empty()) write_text_file(output_path, dump(to_json(seq)));
            Json j;
            j["sequence"] = to_json(seq);
            j["column_order"] = basis.source_column;
            j["weights"] = to_json(compute_weights(seq, fopt, err));
            out << dump(j);
        } else if (simulate->parsed() || riskgap->parsed()) {
            auto& opt = simulate->parsed() ? simulate_opt : riskgap_opt;
            const auto cfg = load_config(opt.config);
            const auto scenario = make_scenario(cfg.scenario);
            ExperimentOptions eo;
            eo.reps = opt.reps;
            eo.seed = resolve_seed(opt, err);
            eo.threads = opt.threads ? opt.threads : cfg.threads;
            RiskReport report;
            if (simulate->parsed()) {
                auto specs = cfg.estimators;
                if (specs.empty()) {
                    EstimatorSpec best, stack;
                    best.kind = EstimatorKind::best;
                    best.lambda = cfg.lambda;
                    stack.kind = EstimatorKind::stack;
                    stack.tau = cfg.tau;
                    stack.lambda = cfg.lambda;
                    specs = {best, stack};
                }
                report = monte_carlo(scenario, specs, eo);
            } else {
                report = risk_gap_experiment(scenario, cfg.tau, cfg.lambda, eo, cfg.estimators);
            }
            for (const auto& w : report.warnings) err << "warning: " << w << "\n";
            if (opt.format == "csv") {
                out << report_to_csv(report);
            } else {
                out << dump(to_json(report));
            }
        } else if (dfcmd->parsed()) {
            const auto cfg = load_config(df_opt.config);
            const auto scenario = make_scenario(cfg.scenario);
            ExperimentOptions eo;
            eo.reps = df_opt.reps;
            eo.seed = resolve_seed(df_opt, err);
            eo.threads = df_opt.threads ? df_opt.threads : cfg.threads;
            auto specs = cfg.estimators;
            if (specs.empty()) {
                EstimatorSpec proj;
                proj.kind = EstimatorKind::fixed_projection;
                proj.k = scenario.models();
                specs = {proj};
            }
            Json j;
            j["scenario"] = scenario.name;
            j["seed"] = eo.seed;
            j["reps"] = eo.reps;
            Json estimates = Json::array();
            for (const auto& spec : specs) estimates.push_back(to_json(estimate_df(scenario, spec, eo)));
            j["estimates"] = std::move(estimates);
            out << dump(j);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::degeneracy ? kExitDegenerate : kExitValidation;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}

}  // namespace nestack::cli
