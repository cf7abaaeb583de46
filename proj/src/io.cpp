#include "epimpc/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace epimpc {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_strict_double(const std::string& token, const std::string& context) {
    std::string t = token;
    // trim
    size_t a = t.find_first_not_of(" \t\r");
    size_t b = t.find_last_not_of(" \t\r");
    if (a == std::string::npos) throw ConfigError(context + ": empty field");
    t = t.substr(a, b - a + 1);
    double value = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw ConfigError(context + ": cannot parse '" + t + "' as a number");
    if (!std::isfinite(value))
        throw ConfigError(context + ": non-finite value '" + t + "'");
    return value;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) throw ConfigError(path.string() + ": empty file");
    return lines;
}

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Eigen::VectorXd load_populations_csv(const std::filesystem::path& path) {
    std::vector<std::string> lines = read_lines(path);
    if (split_csv_line(lines[0]).size() != 2)
        throw ConfigError(path.string() + ": expected header 'node_id,population'");
    std::vector<double> values;
    for (size_t r = 1; r < lines.size(); ++r) {
        std::vector<std::string> fields = split_csv_line(lines[r]);
        if (fields.size() != 2)
            throw ConfigError(path.string() + ": ragged row " + std::to_string(r));
        double pop = parse_strict_double(fields[1], path.string());
        if (pop <= 0)
            throw ConfigError(path.string() + ": population must be positive");
        values.push_back(pop);
    }
    return Eigen::Map<Eigen::VectorXd>(values.data(),
                                       static_cast<Eigen::Index>(values.size()));
}

Eigen::MatrixXd load_flow_csv(const std::filesystem::path& path) {
    std::vector<std::string> lines = read_lines(path);
    const size_t n = split_csv_line(lines[0]).size();  // header row of node ids
    if (n == 0 || lines.size() != n + 1)
        throw ConfigError(path.string() + ": expected an n x n matrix under the header");
    Eigen::MatrixXd flow(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (size_t r = 0; r < n; ++r) {
        std::vector<std::string> fields = split_csv_line(lines[r + 1]);
        if (fields.size() != n)
            throw ConfigError(path.string() + ": ragged row " + std::to_string(r + 1));
        for (size_t c = 0; c < n; ++c) {
            double v = parse_strict_double(fields[c], path.string());
            if (v < 0) throw ConfigError(path.string() + ": negative flow entry");
            flow(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    }
    return flow;
}

LoadedConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }

    // "resolved" appears in config echoes written by the CLI; tolerated so
    // that an echoed config can be fed back in.
    require_keys(doc, "config",
                 {"name", "controller", "policy_mode", "forecast_mode",
                  "duration_weeks", "dt_days", "substeps", "network", "params",
                  "calibration", "shock", "seed_infection", "mpc", "solver",
                  "resolved"});

    LoadedConfig out;
    Scenario& sc = out.scenario;
    try {
        sc.name = doc.at("name").get<std::string>();
        std::string ctrl = doc.at("controller").get<std::string>();
        if (ctrl == "mpc") sc.controller = ControllerKind::mpc;
        else if (ctrl == "myopic") sc.controller = ControllerKind::myopic;
        else throw ConfigError("controller must be 'mpc' or 'myopic'");

        std::string pm = doc.value("policy_mode", "pure");
        if (pm == "pure") sc.policy_mode = PolicyMode::pure;
        else if (pm == "smoothing") sc.policy_mode = PolicyMode::smoothing;
        else if (pm == "rate_limited") sc.policy_mode = PolicyMode::rate_limited;
        else throw ConfigError("policy_mode must be pure|smoothing|rate_limited");

        std::string fm = doc.value("forecast_mode", "perfect");
        if (fm == "perfect") sc.forecast_mode = ForecastMode::perfect;
        else if (fm == "persistence") sc.forecast_mode = ForecastMode::persistence;
        else throw ConfigError("forecast_mode must be perfect|persistence");

        sc.duration_weeks = doc.at("duration_weeks").get<int>();
        sc.dt_days = doc.value("dt_days", 7.0);
        sc.substeps = doc.value("substeps", 7);

        const json& jp = doc.at("params");
        require_keys(jp, "params", {"eps", "r_a", "r_s", "r_q"});
        EpiParams params;
        params.eps = jp.at("eps").get<double>();
        params.r_a = jp.at("r_a").get<double>();
        params.r_s = jp.at("r_s").get<double>();
        params.r_q = jp.value("r_q", 0.2);

        const json& jm = doc.at("mpc");
        require_keys(jm, "mpc",
                     {"horizon", "alpha", "rho", "b_max", "rho_smooth", "rate_limit",
                      "terminal_cost_diag"});
        sc.mpc.horizon = jm.value("horizon", 7);
        sc.mpc.alpha = jm.value("alpha", 0.023);
        sc.mpc.rho = jm.value("rho", 0.1);
        sc.mpc.b_max = jm.value("b_max", 2.0);
        sc.mpc.rho_smooth =
            jm.value("rho_smooth", sc.policy_mode == PolicyMode::smoothing ? 1.0 : 0.0);
        sc.mpc.rate_limit =
            jm.value("rate_limit",
                     sc.policy_mode == PolicyMode::rate_limited ? 0.2 : 0.0);
        if (jm.contains("terminal_cost_diag")) {
            std::vector<double> d = jm.at("terminal_cost_diag").get<std::vector<double>>();
            sc.mpc.terminal_cost_diag =
                Eigen::Map<Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
        }
        if (doc.contains("solver")) {
            const json& js = doc.at("solver");
            require_keys(js, "solver",
                         {"max_outer", "max_inner", "fd_step", "penalty_init",
                          "penalty_growth", "tol"});
            sc.mpc.solver.max_outer = js.value("max_outer", sc.mpc.solver.max_outer);
            sc.mpc.solver.max_inner = js.value("max_inner", sc.mpc.solver.max_inner);
            sc.mpc.solver.fd_step = js.value("fd_step", sc.mpc.solver.fd_step);
            sc.mpc.solver.penalty_init =
                js.value("penalty_init", sc.mpc.solver.penalty_init);
            sc.mpc.solver.penalty_growth =
                js.value("penalty_growth", sc.mpc.solver.penalty_growth);
            sc.mpc.solver.tol = js.value("tol", sc.mpc.solver.tol);
        }
        sc.mpc.step = StepConfig{sc.dt_days, sc.substeps};

        if (doc.contains("seed_infection")) {
            const json& jseed = doc.at("seed_infection");
            require_keys(jseed, "seed_infection", {"fraction", "nodes"});
            sc.seed.fraction = jseed.value("fraction", 0.001);
            sc.seed.nodes = jseed.value("nodes", 2);
        }

        const json& jn = doc.at("network");
        require_keys(jn, "network", {"type", "n", "seed", "populations", "flow"});
        std::string ntype = jn.at("type").get<std::string>();
        if (ntype == "synthetic") {
            out.model = synth_network(jn.at("n").get<int>(),
                                      jn.value("seed", std::uint64_t{0}), params);
        } else if (ntype == "csv") {
            std::filesystem::path base = path.parent_path();
            Eigen::VectorXd pops =
                load_populations_csv(base / jn.at("populations").get<std::string>());
            Eigen::MatrixXd flow =
                load_flow_csv(base / jn.at("flow").get<std::string>());
            out.model = make_network(pops, flow, params);
        } else {
            throw ConfigError("network.type must be 'synthetic' or 'csv'");
        }

        const json& jc = doc.at("calibration");
        require_keys(jc, "calibration", {"growth_target", "ratio"});
        TransmissionRate base_beta =
            calibrate(out.model, jc.at("growth_target").get<double>(),
                      jc.value("ratio", 0.67));

        int shock_week = -1;
        double multiplier = 1.0;
        if (doc.contains("shock")) {
            const json& jshock = doc.at("shock");
            require_keys(jshock, "shock", {"week", "multiplier"});
            shock_week = jshock.at("week").get<int>();
            multiplier = jshock.at("multiplier").get<double>();
            if (!(multiplier > 0)) throw ConfigError("shock.multiplier must be > 0");
            if (shock_week < 0 || shock_week >= sc.duration_weeks)
                throw ConfigError("shock.week must lie within the run duration");
        }

        const int schedule_len = sc.duration_weeks + sc.mpc.horizon;
        sc.beta_schedule.reserve(static_cast<size_t>(schedule_len));
        for (int w = 0; w < schedule_len; ++w) {
            TransmissionRate b = base_beta;
            if (shock_week >= 0 && w >= shock_week) {
                b.beta_a *= multiplier;
                b.beta_s *= multiplier;
            }
            sc.beta_schedule.push_back(b);
        }
        sc.beta_max = base_beta;
        for (const TransmissionRate& b : sc.beta_schedule) {
            sc.beta_max.beta_a = std::max(sc.beta_max.beta_a, b.beta_a);
            sc.beta_max.beta_s = std::max(sc.beta_max.beta_s, b.beta_s);
        }
        out.model.params.beta_max_a = sc.beta_max.beta_a;
        out.model.params.beta_max_s = sc.beta_max.beta_s;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }

    out.scenario.validate();
    out.echo = doc;
    out.echo["resolved"] = {
        {"beta_base_a", out.scenario.beta_schedule.front().beta_a},
        {"beta_base_s", out.scenario.beta_schedule.front().beta_s},
        {"beta_max_a", out.scenario.beta_max.beta_a},
        {"beta_max_s", out.scenario.beta_max.beta_s},
    };
    return out;
}

void write_timeseries_csv(const std::filesystem::path& path, const RunRecord& rec,
                          const NetworkModel& model) {
    const Eigen::Index n = model.n;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());

    out << "t";
    auto cols = [&](const char* prefix) {
        for (Eigen::Index i = 0; i < n; ++i) out << "," << prefix << "_" << (i + 1);
    };
    cols("s");
    cols("xa");
    cols("xs");
    cols("k");
    cols("qa");
    cols("qs");
    out << ",beta_a,beta_s,lambda_max,y_norm1,burden_cum\n";

    double burden = 0.0;
    const size_t rows = rec.trace.states.size();
    for (size_t r = 0; r < rows; ++r) {
        const EpiState& x = rec.trace.states[r];
        size_t step = std::min(r, rec.trace.controls.size() - 1);
        const ControlVector& q = rec.trace.controls[step];
        const TransmissionRate& beta = rec.trace.betas[step];
        if (r > 0) {
            double a = model.weights.dot(rec.trace.states[r - 1].k);
            double b = model.weights.dot(x.k);
            burden += 0.5 * (a + b) * (rec.trace.times[r] - rec.trace.times[r - 1]);
        }
        InfectedMatrix m = build_infected_matrix(x.s, q, beta, model);
        double lambda = spectral_abscissa(m).lambda_max;

        out << fmt17(rec.trace.times[r]);
        auto vec = [&](const Eigen::VectorXd& v) {
            for (Eigen::Index i = 0; i < n; ++i) out << "," << fmt17(v(i));
        };
        vec(x.s);
        vec(x.xa);
        vec(x.xs);
        vec(x.k);
        vec(q.qa);
        vec(q.qs);
        out << "," << fmt17(beta.beta_a) << "," << fmt17(beta.beta_s) << ","
            << fmt17(lambda) << "," << fmt17(x.infected_norm1()) << ","
            << fmt17(burden) << "\n";
    }
}

ClosedLoopTrace read_timeseries_csv(const std::filesystem::path& path) {
    std::vector<std::string> lines = read_lines(path);
    std::vector<std::string> header = split_csv_line(lines[0]);
    Eigen::Index n = 0;
    for (const std::string& h : header)
        if (h.rfind("s_", 0) == 0) ++n;
    const size_t expected = 1 + 6 * static_cast<size_t>(n) + 5;
    if (n == 0 || header.size() != expected || header[0] != "t")
        throw ConfigError(path.string() + ": missing provenance columns");

    ClosedLoopTrace trace;
    for (size_t r = 1; r < lines.size(); ++r) {
        std::vector<std::string> f = split_csv_line(lines[r]);
        if (f.size() != expected)
            throw ConfigError(path.string() + ": ragged row " + std::to_string(r));
        size_t c = 0;
        auto next = [&]() { return parse_strict_double(f[c++], path.string()); };
        double t = next();
        auto vec = [&]() {
            Eigen::VectorXd v(n);
            for (Eigen::Index i = 0; i < n; ++i) v(i) = next();
            return v;
        };
        EpiState x{vec(), vec(), vec(), vec()};
        ControlVector q{vec(), vec()};
        TransmissionRate beta{next(), next()};
        trace.times.push_back(t);
        trace.states.push_back(std::move(x));
        trace.controls.push_back(std::move(q));
        trace.betas.push_back(beta);
    }
    if (trace.states.size() < 2)
        throw ConfigError(path.string() + ": need at least two rows");
    // The final row repeats the last applied inputs; drop them so that
    // controls/betas carry exactly one entry per sampling interval.
    trace.controls.pop_back();
    trace.betas.pop_back();
    return trace;
}

nlohmann::json certificate_json(const DecayCertificate& cert) {
    return json{{"alpha", cert.alpha},
                {"v_floor", cert.v_floor},
                {"c_t", cert.c_t},
                {"steps", cert.steps},
                {"per_step_margins", cert.per_step_margins},
                {"valid", cert.valid},
                {"bound_satisfied", cert.bound_satisfied}};
}

nlohmann::json summary_json(const RunRecord& rec) {
    int fallbacks = 0;
    for (Provenance p : rec.provenance)
        if (p == Provenance::warm_start_fallback) ++fallbacks;
    bool candidates_ok = true;
    for (bool ok : rec.candidate_feasible) candidates_ok = candidates_ok && ok;
    return json{
        {"name", rec.name},
        {"metrics",
         {{"peak_prevalence_persons", rec.metrics.peak_prevalence_persons},
          {"cumulative_burden", rec.metrics.cumulative_burden},
          {"certificate_valid", rec.metrics.certificate_valid},
          {"violation_count", rec.metrics.violation_count}}},
        {"certificate", certificate_json(rec.certificate)},
        {"margins", rec.margins},
        {"shifted_candidates_feasible", candidates_ok},
        {"warm_start_fallbacks", fallbacks},
    };
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::ostringstream os;
    os << "name,peak_prevalence,cumulative_burden,certificate_valid,"
          "violation_count,relative_burden\n";
    for (const ComparisonRow& r : rows) {
        os << r.name << "," << fmt17(r.peak_prevalence) << ","
           << fmt17(r.cumulative_burden) << "," << (r.certificate_valid ? 1 : 0) << ","
           << r.violation_count << "," << fmt17(r.relative_burden) << "\n";
    }
    return os.str();
}

nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows) {
    json arr = json::array();
    for (const ComparisonRow& r : rows)
        arr.push_back({{"name", r.name},
                       {"peak_prevalence", r.peak_prevalence},
                       {"cumulative_burden", r.cumulative_burden},
                       {"certificate_valid", r.certificate_valid},
                       {"violation_count", r.violation_count},
                       {"relative_burden", r.relative_burden}});
    return arr;
}

}  // namespace epimpc
