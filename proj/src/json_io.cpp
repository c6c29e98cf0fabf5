#include "nestack/json_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "nestack/error.hpp"

namespace nestack {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) fail_validation(where + " must be a JSON object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items())
        if (!ok.count(item.key())) fail_validation("unknown key '" + item.key() + "' in " + where);
}

template <typename T>
T get(const Json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) fail_validation(where + " is missing \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail_validation(where + ": \"" + key + "\" has the wrong type");
    }
}

template <typename T>
std::optional<T> get_opt(const Json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) return std::nullopt;
    return get<T>(j, key, where);
}

std::string g17(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Json optional_summary(const std::optional<Summary>& s) { return s ? to_json(*s) : Json(nullptr); }

}  // namespace

Json parse_json(const std::string& text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail_validation("cannot parse " + what + " as JSON: " + e.what());
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_validation("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail_validation("cannot write '" + path + "'");
    out << text;
}

Json read_json_file(const std::string& path) { return parse_json(read_text_file(path), "'" + path + "'"); }

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json to_json(const NestedModelSequence& seq) {
    Json j;
    j["sigma2"] = seq.sigma2;
    j["n"] = seq.n;
    j["d"] = seq.d;
    j["R0"] = seq.r0;
    j["R"] = seq.r;
    if (seq.coef_blocks) {
        Json coefs = Json::array();
        Json index = Json::array();
        bool indexed = true;
        for (const auto& b : *seq.coef_blocks) {
            coefs.push_back(b.coef);
            index.push_back(b.index);
            indexed = indexed && b.index.size() == b.coef.size();
        }
        j["coef_blocks"] = coefs;
        if (indexed) j["block_indices"] = index;
    }
    return j;
}

NestedModelSequence sequence_from_json(const Json& j) {
    const std::string where = "model sequence";
    check_keys(j, {"sigma2", "n", "d", "R0", "R", "coef_blocks", "block_indices"}, where);
    if (!j.contains("sigma2"))
        fail_validation("model sequence is missing \"sigma2\": the noise variance must be supplied "
                        "(the method assumes it is known)");
    NestedModelSequence seq;
    seq.sigma2 = get<double>(j, "sigma2", where);
    const auto n = get<long long>(j, "n", where);
    if (n < 1) fail_validation("n must be at least 1");
    seq.n = static_cast<std::size_t>(n);
    seq.d = get<std::vector<long>>(j, "d", where);
    seq.r0 = get<double>(j, "R0", where);
    seq.r = get<std::vector<double>>(j, "R", where);
    if (auto coefs = get_opt<std::vector<std::vector<double>>>(j, "coef_blocks", where)) {
        auto index = get_opt<std::vector<std::vector<std::size_t>>>(j, "block_indices", where);
        if (index && index->size() != coefs->size()) fail_validation("block_indices must match coef_blocks");
        std::vector<CoefBlock> blocks(coefs->size());
        for (std::size_t k = 0; k < coefs->size(); ++k) {
            blocks[k].coef = (*coefs)[k];
            if (index) blocks[k].index = (*index)[k];
        }
        seq.coef_blocks = std::move(blocks);
    } else if (j.contains("block_indices")) {
        fail_validation("block_indices given without coef_blocks");
    }
    validate(seq);
    return seq;
}

Json to_json(const StackWeights& w) {
    Json j;
    j["method"] = to_string(w.method);
    j["alpha"] = w.alpha;
    j["sum"] = w.sum;
    j["l0"] = w.l0;
    j["dim"] = w.dim;
    j["df"] = w.df;
    j["gamma"] = w.gamma;
    if (!w.gamma_check.empty()) j["gamma_check"] = w.gamma_check;
    j["m_hat"] = w.m_hat ? Json(*w.m_hat) : Json(nullptr);
    if (!w.beta.empty()) j["beta"] = w.beta;
    if (w.method == WeightMethod::ensemble) {
        j["exact"] = w.exact;
        j["inclusion"] = w.inclusion;
        j["inclusion_se"] = w.inclusion_se;
        if (w.draws) j["draws"] = *w.draws;
    }
    if (w.seed) j["seed"] = *w.seed;
    return j;
}

Json to_json(const Summary& s) {
    Json j;
    j["mean"] = s.mean;
    j["se"] = s.se;
    j["ci_low"] = s.ci_low;
    j["ci_high"] = s.ci_high;
    j["count"] = s.count;
    return j;
}

Json to_json(const RiskReport& r) {
    Json j;
    j["scenario"] = r.scenario;
    j["seed"] = r.seed;
    j["reps"] = r.reps;
    j["ci_level"] = r.ci_level;
    Json ests = Json::array();
    for (const auto& e : r.estimators) {
        Json x;
        x["label"] = e.label;
        x["loss"] = to_json(e.loss);
        x["train"] = to_json(e.train);
        x["df"] = to_json(e.df);
        x["known_df"] = e.known_df ? Json(*e.known_df) : Json(nullptr);
        x["exact_risk"] = e.exact_risk ? Json(*e.exact_risk) : Json(nullptr);
        x["identity_known"] = to_json(e.identity_known);
        x["identity_mc"] = to_json(e.identity_mc);
        x["adaptive_residual"] = optional_summary(e.adaptive);
        x["js_plugin"] = optional_summary(e.js_plugin);
        x["js_gap_minus_plugin"] = optional_summary(e.js_gap_minus_plugin);
        x["failures"] = e.failures;
        if (e.failures) x["first_error"] = e.first_error;
        ests.push_back(std::move(x));
    }
    j["estimators"] = std::move(ests);
    Json gaps = Json::array();
    for (const auto& g : r.gaps) {
        Json x;
        x["first"] = g.first;
        x["second"] = g.second;
        x["gap"] = to_json(g.gap);
        gaps.push_back(std::move(x));
    }
    j["gaps"] = std::move(gaps);
    j["improve_first_term"] = optional_summary(r.improve_first_term);
    j["gap_minus_plugin"] = optional_summary(r.gap_minus_plugin);
    if (r.oracle) {
        Json o;
        o["alpha"] = r.oracle->alpha;
        o["risk"] = r.oracle->risk;
        o["tolerance"] = r.oracle->tolerance;
        o["sweeps"] = r.oracle->sweeps;
        j["oracle"] = std::move(o);
    } else {
        j["oracle"] = nullptr;
    }
    j["warnings"] = r.warnings;
    return j;
}

Json to_json(const DfEstimate& d) {
    Json j;
    j["label"] = d.label;
    j["df"] = to_json(d.df);
    j["known_df"] = d.known_df ? Json(*d.known_df) : Json(nullptr);
    j["identity_known"] = to_json(d.identity_known);
    j["identity_mc"] = to_json(d.identity_mc);
    return j;
}

Json to_json(const BreimanStats& b) {
    Json j;
    j["reps"] = b.reps;
    Json entries = Json::array();
    for (const auto& e : b.entries) {
        Json x;
        x["label"] = e.label;
        x["l0"] = to_json(e.l0);
        x["sum"] = to_json(e.sum);
        x["dim_stack"] = to_json(e.dim_stack);
        x["dim_best"] = to_json(e.dim_best);
        x["sum_violations"] = e.sum_violations;
        x["l0_violations"] = e.l0_violations;
        x["dim_violations"] = e.dim_violations;
        x["null_solutions"] = e.null_solutions;
        entries.push_back(std::move(x));
    }
    j["entries"] = std::move(entries);
    return j;
}

std::string report_to_csv(const RiskReport& r) {
    std::ostringstream out;
    out << "label,loss_mean,loss_se,loss_ci_low,loss_ci_high,count,train_mean,df_mean,df_se,known_df,"
           "exact_risk,identity_known_mean,identity_known_se,failures\n";
    for (const auto& e : r.estimators) {
        out << '"' << e.label << '"' << ',' << g17(e.loss.mean) << ',' << g17(e.loss.se) << ','
            << g17(e.loss.ci_low) << ',' << g17(e.loss.ci_high) << ',' << e.loss.count << ','
            << g17(e.train.mean) << ',' << g17(e.df.mean) << ',' << g17(e.df.se) << ','
            << (e.known_df ? g17(*e.known_df) : "") << ',' << (e.exact_risk ? g17(*e.exact_risk) : "") << ','
            << g17(e.identity_known.mean) << ',' << g17(e.identity_known.se) << ',' << e.failures << '\n';
    }
    return out.str();
}

EstimatorSpec estimator_from_json(const Json& j) {
    const std::string where = "estimator";
    check_keys(j, {"kind", "tau", "lambda", "eta", "m", "B", "k", "positive_part", "value_weighted", "alpha"}, where);
    EstimatorSpec e;
    e.kind = parse_estimator_kind(get<std::string>(j, "kind", where));
    if (auto v = get_opt<double>(j, "tau", where)) e.tau = *v;
    if (auto v = get_opt<double>(j, "lambda", where)) e.lambda = *v;
    if (auto v = get_opt<double>(j, "eta", where)) e.eta = *v;
    if (auto v = get_opt<std::size_t>(j, "m", where)) e.m = *v;
    if (auto v = get_opt<std::size_t>(j, "B", where)) e.draws = *v;
    if (auto v = get_opt<std::size_t>(j, "k", where)) e.k = *v;
    if (auto v = get_opt<bool>(j, "positive_part", where)) e.positive_part = *v;
    if (auto v = get_opt<bool>(j, "value_weighted", where)) e.value_weighted = *v;
    if (auto v = get_opt<std::vector<double>>(j, "alpha", where)) e.alpha = *v;
    return e;
}

SimulationConfig config_from_json(const Json& j, const std::string& base_dir) {
    check_keys(j, {"scenario", "estimators", "tau", "lambda", "threads"}, "config");
    SimulationConfig cfg;
    if (j.contains("scenario")) {
        const auto& s = j.at("scenario");
        const std::string where = "scenario";
        check_keys(s, {"preset", "n", "sigma", "M", "d", "d_step", "coefficients", "signal_scale", "decay_rate",
                       "basis_csv"},
                   where);
        auto& sc = cfg.scenario;
        sc.preset = get_opt<std::string>(s, "preset", where);
        sc.n = get_opt<std::size_t>(s, "n", where);
        sc.sigma = get_opt<double>(s, "sigma", where);
        sc.models = get_opt<std::size_t>(s, "M", where);
        sc.d = get_opt<std::vector<long>>(s, "d", where);
        sc.d_step = get_opt<long>(s, "d_step", where);
        sc.coefficients = get_opt<std::vector<double>>(s, "coefficients", where);
        sc.signal_scale = get_opt<double>(s, "signal_scale", where);
        sc.decay_rate = get_opt<double>(s, "decay_rate", where);
        if (auto path = get_opt<std::string>(s, "basis_csv", where)) {
            std::filesystem::path p(*path);
            if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
            sc.basis = read_csv_matrix(p.string());
        }
    }
    if (j.contains("estimators")) {
        if (!j.at("estimators").is_array()) fail_validation("\"estimators\" must be an array");
        for (const auto& e : j.at("estimators")) cfg.estimators.push_back(estimator_from_json(e));
    }
    if (auto v = get_opt<double>(j, "tau", "config")) cfg.tau = *v;
    if (auto v = get_opt<double>(j, "lambda", "config")) cfg.lambda = *v;
    if (auto v = get_opt<std::size_t>(j, "threads", "config")) cfg.threads = *v;
    if (cfg.threads < 1) fail_validation("threads must be at least 1");
    return cfg;
}

Eigen::MatrixXd read_csv_matrix(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            const char* begin = cell.c_str();
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(begin, &end);
            while (end && (*end == ' ' || *end == '\t')) ++end;
            if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v))
                fail_validation("'" + path + "' line " + std::to_string(line_no) + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            fail_validation("'" + path + "' line " + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) fail_validation("'" + path + "' has no data");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < rows[i].size(); ++c)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    return m;
}

}  // namespace nestack
