// bathlab-cli - file-driven experiment runner over the bathlab modules.
//
// Every subcommand reads a flat key = value (or JSON) config, runs the
// corresponding pipeline and writes plot-ready CSV tables plus a JSON report
// into the output directory, together with a resolved-config copy.  Unknown
// config keys are rejected.  Identical config and seed produce byte-identical
// CSV output no matter how many worker threads run the scan.
//
// Exit codes: 0 success, 2 config error, 3 numerical or I/O failure.

#include "bathlab/common.hpp"
#include "bathlab/eigencorr.hpp"
#include "bathlab/ensemble.hpp"
#include "bathlab/env_model.hpp"
#include "bathlab/eth_synth.hpp"
#include "bathlab/fitkit.hpp"
#include "bathlab/io.hpp"
#include "bathlab/master_eq.hpp"
#include "bathlab/oracles.hpp"
#include "bathlab/parallel.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using bathlab::CorrelationSeries;
using bathlab::TimeGrid;
using bathlab::io::ordered_json;
namespace eigencorr = bathlab::eigencorr;
namespace ensemble = bathlab::ensemble;
namespace env_model = bathlab::env_model;
namespace eth_synth = bathlab::eth_synth;
namespace fitkit = bathlab::fitkit;
namespace io = bathlab::io;
namespace master_eq = bathlab::master_eq;
namespace oracles = bathlab::oracles;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Infinities and NaN are not representable in JSON; keep them readable.
ordered_json json_number(double v)
{
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

std::string trim(const std::string& s)
{
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Flat config document.  Getters resolve a key against the file (or its
// default), record the resolved value, and mark the key as belonging to the
// command's schema; reject_unknown() then names the first leftover key.
class Config {
public:
    static Config load(const fs::path& path)
    {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file " + path.string());
        std::stringstream buf;
        buf << f.rdbuf();
        const std::string text = buf.str();
        const std::size_t first = text.find_first_not_of(" \t\r\n");
        Config cfg;
        if (first != std::string::npos && text[first] == '{')
            cfg.parse_json(text);
        else
            cfg.parse_kv(text);
        return cfg;
    }

    double get_double(const std::string& key, double def, double lo = -bathlab::inf_d,
                      double hi = bathlab::inf_d)
    {
        Entry* e = find(key);
        double v = def;
        if (e) {
            std::size_t used = 0;
            try {
                v = std::stod(e->value, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != e->value.size())
                throw ConfigError("config key '" + key + "'" + where(e) + ": cannot parse '"
                                  + e->value + "' as a number");
        }
        if (v < lo || v > hi)
            throw ConfigError("config key '" + key + "'" + where(e) + ": value "
                              + io::format_double(v) + " outside [" + io::format_double(lo) + ", "
                              + io::format_double(hi) + "]");
        resolved_[key] = json_number(v);
        return v;
    }

    int get_int(const std::string& key, int def, int lo, int hi)
    {
        Entry* e = find(key);
        long long v = def;
        if (e) {
            std::size_t used = 0;
            try {
                v = std::stoll(e->value, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != e->value.size())
                throw ConfigError("config key '" + key + "'" + where(e) + ": cannot parse '"
                                  + e->value + "' as an integer");
        }
        if (v < lo || v > hi)
            throw ConfigError("config key '" + key + "'" + where(e) + ": value "
                              + std::to_string(v) + " outside [" + std::to_string(lo) + ", "
                              + std::to_string(hi) + "]");
        resolved_[key] = static_cast<int>(v);
        return static_cast<int>(v);
    }

    bool get_bool(const std::string& key, bool def)
    {
        Entry* e = find(key);
        bool v = def;
        if (e) {
            if (e->value == "true" || e->value == "1")
                v = true;
            else if (e->value == "false" || e->value == "0")
                v = false;
            else
                throw ConfigError("config key '" + key + "'" + where(e) + ": expected true or false, got '"
                                  + e->value + "'");
        }
        resolved_[key] = v;
        return v;
    }

    std::string get_string(const std::string& key, const std::string& def)
    {
        Entry* e = find(key);
        const std::string v = e ? e->value : def;
        resolved_[key] = v;
        return v;
    }

    std::string get_required_string(const std::string& key)
    {
        Entry* e = find(key);
        if (!e) throw ConfigError("config key '" + key + "' is required");
        resolved_[key] = e->value;
        return e->value;
    }

    std::string get_choice(const std::string& key, const std::string& def,
                           std::initializer_list<const char*> allowed)
    {
        const std::string v = get_string(key, def);
        for (const char* a : allowed)
            if (v == a) return v;
        std::string opts;
        for (const char* a : allowed) opts += (opts.empty() ? "" : ", ") + std::string(a);
        Entry* e = find(key);
        throw ConfigError("config key '" + key + "'" + where(e) + ": '" + v + "' is not one of: " + opts);
    }

    void reject_unknown() const
    {
        for (const auto& e : entries_)
            if (!e.used)
                throw ConfigError("unknown config key '" + e.key + "'" + where(&e));
    }

    const ordered_json& params() const { return resolved_; }

private:
    struct Entry {
        std::string key;
        std::string value;
        int line{-1};
        mutable bool used{false};
    };

    Entry* find(const std::string& key)
    {
        for (auto& e : entries_)
            if (e.key == key) {
                e.used = true;
                return &e;
            }
        return nullptr;
    }

    static std::string where(const Entry* e)
    {
        if (!e || e->line < 0) return "";
        return " (line " + std::to_string(e->line) + ")";
    }

    void add(std::string key, std::string value, int line)
    {
        for (const auto& e : entries_)
            if (e.key == key)
                throw ConfigError("duplicate config key '" + key + "'"
                                  + (line >= 0 ? " (line " + std::to_string(line) + ")" : ""));
        entries_.push_back(Entry{std::move(key), std::move(value), line, false});
    }

    void parse_kv(const std::string& text)
    {
        std::stringstream ss(text);
        std::string line;
        int lineno = 0;
        while (std::getline(ss, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            add(key, trim(line.substr(eq + 1)), lineno);
        }
    }

    void parse_json(const std::string& text)
    {
        ordered_json j;
        try {
            j = ordered_json::parse(text);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config JSON parse failure: ") + e.what());
        }
        if (!j.is_object()) throw ConfigError("config JSON must be a flat object");
        for (const auto& item : j.items()) {
            const auto& v = item.value();
            std::string s;
            if (v.is_string())
                s = v.get<std::string>();
            else if (v.is_boolean())
                s = v.get<bool>() ? "true" : "false";
            else if (v.is_number())
                s = v.dump();
            else
                throw ConfigError("config key '" + item.key()
                                  + "': nested values are not supported");
            add(item.key(), s, -1);
        }
    }

    std::vector<Entry> entries_;
    ordered_json resolved_ = ordered_json::object();
};

struct RunContext {
    fs::path out;
    std::string format{"both"};
    unsigned jobs{1};
    std::uint64_t seed{0};

    bool want_csv() const { return format != "json"; }
    bool want_json() const { return format != "csv"; }
};

// Validates the key set and writes the resolved-config copy; call once all
// keys have been read and before any heavy work starts.
void finish_config(const Config& cfg, const RunContext& ctx, const std::string& command)
{
    cfg.reject_unknown();
    ordered_json j;
    j["schema_version"] = io::schema_version;
    j["command"] = command;
    j["seed"] = ctx.seed;
    j["jobs"] = ctx.jobs;
    j["format"] = ctx.format;
    j["params"] = cfg.params();
    io::write_json(ctx.out / "resolved_config.json", j);
}

void write_series(const RunContext& ctx, const std::string& name, const CorrelationSeries& s,
                  const std::vector<io::Column>& extra = {})
{
    if (!ctx.want_csv()) return;
    std::vector<io::Column> cols(3);
    cols[0].name = "t";
    cols[1].name = "re_c";
    cols[2].name = "im_c";
    for (auto& c : cols) c.values.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        cols[0].values[i] = s.grid.t(i);
        cols[1].values[i] = s.values[i].real();
        cols[2].values[i] = s.values[i].imag();
    }
    for (const auto& c : extra) cols.push_back(c);
    io::write_csv(ctx.out / name, cols);
}

void write_report(const RunContext& ctx, const ordered_json& j, const std::string& name = "report.json")
{
    if (ctx.want_json()) io::write_json(ctx.out / name, j);
}

std::vector<double> linspace(double lo, double hi, int n)
{
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = n > 1 ? lo + (hi - lo) * i / (n - 1) : lo;
    return v;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Windowed trailing mean of Re C over [0, t_i] for every row, so the table
// carries its own long-time average; the last row matches the report value.
std::vector<double> running_long_average(const CorrelationSeries& s, double window_fraction)
{
    std::vector<double> out(s.size());
    std::vector<double> prefix(s.size() + 1, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) prefix[i + 1] = prefix[i] + s.values[i].real();
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t n = i + 1;
        const std::size_t span = std::min(
            n, std::max<std::size_t>(2, static_cast<std::size_t>(
                                            std::ceil(window_fraction * static_cast<double>(n)))));
        const std::size_t first = n - span;
        out[i] = (prefix[n] - prefix[first]) / static_cast<double>(n - first);
    }
    return out;
}

env_model::MoleculeParams molecule_keys(Config& cfg)
{
    env_model::MoleculeParams p;
    p.Delta = cfg.get_double("Delta", 1.0);
    p.eps = cfg.get_double("eps", 1.0);
    p.r = cfg.get_double("r", 0.5, 0.0, 1e6);
    p.omega_c = cfg.get_double("omega_c", 1.0, 1e-12, 1e12);
    p.L = cfg.get_int("L", 1, 0, 64);
    p.n_max = cfg.get_int("n_max", -1, -1, 4096);
    p.beta = cfg.get_double("beta", 1.0, 1e-12, 1e12);
    return p;
}

// ---- subcommands ----

void run_correlation(Config& cfg, const RunContext& ctx)
{
    const auto params = molecule_keys(cfg);
    const double t_max = cfg.get_double("t_max", -1.0);
    const int n_points = cfg.get_int("n_points", 2048, 2, 1 << 24);
    const double window = cfg.get_double("window_fraction", 0.2, 1e-6, 1.0);
    const double tol_deg = cfg.get_double("tol_deg", -1.0);
    const int dim_cap = cfg.get_int("dim_cap", 4096, 2, 1 << 20);
    finish_config(cfg, ctx, "correlation");

    const auto model = env_model::build_molecule(params, dim_cap);
    const auto sys = eigencorr::diagonalize(model.H, model.B);
    const auto th = eigencorr::thermal_weights(sys, params.beta);
    const auto sp = eigencorr::collect_spectral_pairs(sys, th, tol_deg);
    const TimeGrid grid = t_max > 0.0
                              ? bathlab::make_time_grid(t_max, static_cast<std::size_t>(n_points))
                              : eigencorr::default_time_grid(sp, static_cast<std::size_t>(n_points));

    CorrelationSeries series;
    series.grid = grid;
    series.values = eigencorr::evaluate_pair_sum(sp, grid, ctx.jobs);
    series.b_mean = sp.b_mean;
    series.c0 = sp.c0;
    series.min_nonzero_freq = sp.min_nonzero_freq;

    const auto rep = eigencorr::offset(sys, th, tol_deg);
    const auto avg = eigencorr::long_time_average(series, window);

    io::Column avg_col;
    avg_col.name = "re_c_long_avg";
    avg_col.values = running_long_average(series, window);
    write_series(ctx, "correlation.csv", series, {avg_col});

    ordered_json j = io::make_report("correlation");
    j["dim"] = model.dim;
    j["n_max_effective"] = model.n_max;
    j["c0"] = rep.c0;
    j["diag_variance"] = rep.diag_variance;
    j["d0"] = rep.d0;
    j["b_mean"] = rep.b_mean;
    j["tol_deg"] = rep.tol_deg;
    j["n_deg_pairs"] = rep.n_deg_pairs;
    j["condition_degenerate"] = rep.condition_degenerate;
    j["condition_multi_diag"] = rep.condition_multi_diag;
    j["long_time_average"] = {{"value", avg.value},
                              {"window_start", avg.window_start},
                              {"window_length", avg.window_length},
                              {"window_short", avg.window_short}};
    j["grid"] = {{"dt", grid.dt}, {"n_points", grid.n}, {"t_max", grid.t_max()}};
    write_report(ctx, j);
}

void run_offset_scan(Config& cfg, const RunContext& ctx)
{
    env_model::MoleculeParams base;
    base.Delta = cfg.get_double("Delta", 1.0);
    base.eps = cfg.get_double("eps", 1.0);
    base.omega_c = cfg.get_double("omega_c", 1.0, 1e-12, 1e12);
    base.L = cfg.get_int("L", 1, 0, 64);
    base.n_max = cfg.get_int("n_max", -1, -1, 4096);
    const double beta_min = cfg.get_double("beta_min", 0.25, 1e-12, 1e12);
    const double beta_max = cfg.get_double("beta_max", 5.0, 1e-12, 1e12);
    const int n_beta = cfg.get_int("n_beta", 5, 1, 10000);
    const double r_min = cfg.get_double("r_min", 0.1, 0.0, 1e6);
    const double r_max = cfg.get_double("r_max", 1.0, 0.0, 1e6);
    const int n_r = cfg.get_int("n_r", 5, 1, 10000);
    const double tol_deg = cfg.get_double("tol_deg", -1.0);
    const int dim_cap = cfg.get_int("dim_cap", 4096, 2, 1 << 20);
    finish_config(cfg, ctx, "offset-scan");

    const auto betas = linspace(beta_min, beta_max, n_beta);
    const auto rs = linspace(r_min, r_max, n_r);
    const std::size_t n_cells = betas.size() * rs.size();
    std::vector<eigencorr::OffsetReport> cells(n_cells);

    bathlab::parallel_for(n_cells, ctx.jobs, [&](std::size_t i) {
        env_model::MoleculeParams p = base;
        p.beta = betas[i / rs.size()];
        p.r = rs[i % rs.size()];
        const auto model = env_model::build_molecule(p, dim_cap);
        const auto sys = eigencorr::diagonalize(model.H, model.B);
        const auto th = eigencorr::thermal_weights(sys, p.beta);
        cells[i] = eigencorr::offset(sys, th, tol_deg);
    });

    if (ctx.want_csv()) {
        std::vector<io::Column> cols(5);
        cols[0].name = "beta";
        cols[1].name = "r";
        cols[2].name = "c0";
        cols[3].name = "diag_variance";
        cols[4].name = "d0";
        for (auto& c : cols) c.values.resize(n_cells);
        for (std::size_t i = 0; i < n_cells; ++i) {
            cols[0].values[i] = betas[i / rs.size()];
            cols[1].values[i] = rs[i % rs.size()];
            cols[2].values[i] = cells[i].c0;
            cols[3].values[i] = cells[i].diag_variance;
            cols[4].values[i] = cells[i].d0;
        }
        io::write_csv(ctx.out / "heatmap.csv", cols);
    }

    auto cell = [&](std::size_t ib, std::size_t ir) -> const eigencorr::OffsetReport& {
        return cells[ib * rs.size() + ir];
    };
    std::size_t arg_max = 0;
    for (std::size_t i = 1; i < n_cells; ++i)
        if (cells[i].c0 > cells[arg_max].c0) arg_max = i;

    ordered_json j = io::make_report("offset-scan");
    j["n_beta"] = n_beta;
    j["n_r"] = n_r;
    j["corners"] = {{"beta_min_r_min", cell(0, 0).c0},
                    {"beta_min_r_max", cell(0, rs.size() - 1).c0},
                    {"beta_max_r_min", cell(betas.size() - 1, 0).c0},
                    {"beta_max_r_max", cell(betas.size() - 1, rs.size() - 1).c0}};
    j["c0_max"] = cells[arg_max].c0;
    j["c0_max_at"] = {{"beta", betas[arg_max / rs.size()]}, {"r", rs[arg_max % rs.size()]}};
    write_report(ctx, j);
}

void run_bkk_stats(Config& cfg, const RunContext& ctx)
{
    const auto params = molecule_keys(cfg);
    const int n_bins = cfg.get_int("n_bins", 64, 1, 100000);
    const int dim_cap = cfg.get_int("dim_cap", 4096, 2, 1 << 20);
    finish_config(cfg, ctx, "bkk-stats");

    const auto model = env_model::build_molecule(params, dim_cap);
    const auto sys = eigencorr::diagonalize(model.H, model.B);
    const auto th = eigencorr::thermal_weights(sys, params.beta);
    const auto stats = eigencorr::bkk_statistics(sys, th, n_bins);

    if (ctx.want_csv()) {
        std::vector<io::Column> cols(4);
        cols[0] = io::Column{"eps_rescaled", stats.eps_rescaled};
        cols[1] = io::Column{"bkk", stats.bkk};
        cols[2] = io::Column{"eta", stats.eta};
        cols[3] = io::Column{"f_beta", stats.f_beta};
        io::write_csv(ctx.out / "states.csv", cols);

        std::vector<io::Column> hist(3);
        const std::size_t nb = stats.hist_count.size();
        hist[0].name = "bkk_center";
        hist[0].values.resize(nb);
        for (std::size_t b = 0; b < nb; ++b)
            hist[0].values[b] = 0.5 * (stats.hist_edges[b] + stats.hist_edges[b + 1]);
        hist[1] = io::Column{"count", stats.hist_count};
        hist[2] = io::Column{"mass", stats.hist_mass};
        io::write_csv(ctx.out / "hist.csv", hist);
    }

    ordered_json j = io::make_report("bkk-stats");
    j["dim"] = model.dim;
    j["b_mean"] = stats.b_mean;
    j["delta_e_beta"] = stats.delta_e_beta;
    j["n_bins"] = n_bins;
    write_report(ctx, j);
}

void run_oracle(Config& cfg, const RunContext& ctx)
{
    const std::string kind =
        cfg.get_choice("kind", "spin", {"spin", "dephasing", "harmonic", "fit-model"});
    const double eps = cfg.get_double("eps", 1.0);
    const double Delta = cfg.get_double("Delta", 1.0);
    const double beta = cfg.get_double("beta", 1.0, 1e-12, 1e12);
    const double r = cfg.get_double("r", 0.5, 0.0, 1e6);
    const double omega_c = cfg.get_double("omega_c", 1.0, 1e-12, 1e12);
    const int L = cfg.get_int("L", 1, 1, 1 << 20);
    const double t_max = cfg.get_double("t_max", 20.0, 1e-12, 1e12);
    const int n_points = cfg.get_int("n_points", 2048, 2, 1 << 24);
    const double amp = cfg.get_double("amp", 0.5);
    const double omega = cfg.get_double("omega", 2.7, 0.0, 1e12);
    const double rate = cfg.get_double("rate", 0.3, 0.0, 1e12);
    const double exponent = cfg.get_double("exponent", 1.0, 0.5, 3.0);
    const double slow_amp = cfg.get_double("slow_amp", 0.3);
    const double slow_time = cfg.get_double("slow_time", bathlab::inf_d, 1e-12, bathlab::inf_d);
    finish_config(cfg, ctx, "oracle");

    const TimeGrid grid = bathlab::make_time_grid(t_max, static_cast<std::size_t>(n_points));
    CorrelationSeries series;
    ordered_json j = io::make_report("oracle");
    j["oracle"] = kind;
    if (kind == "spin") {
        const auto res = oracles::spin_coherence_correlation(eps, Delta, beta, grid);
        series = res.series;
        j["mean_sx"] = res.mean_sx;
        j["c0"] = res.c0;
    } else if (kind == "dephasing") {
        const auto modes = env_model::discretize_spectral_density(r, omega_c, L);
        series = oracles::pure_dephasing_correlation(eps, beta, modes, grid);
        j["c0"] = 0.0;
        j["sum_g2"] = modes.sum_g2();
    } else if (kind == "harmonic") {
        const auto modes = env_model::discretize_spectral_density(r, omega_c, L);
        series = oracles::harmonic_correlation(modes, beta, grid);
        j["c0"] = 0.0;
        j["sum_g2"] = modes.sum_g2();
    } else {
        series = oracles::fit_model_series(amp, omega, rate, exponent, slow_amp, slow_time, grid);
        j["c0"] = series.c0;
    }
    write_series(ctx, "oracle.csv", series);
    write_report(ctx, j);
}

void run_eth_demo(Config& cfg, const RunContext& ctx)
{
    eth_synth::EthSpec spec;
    spec.dim = cfg.get_int("dim", 100, 2, 20000);
    spec.e_center = cfg.get_double("e_center", 0.0);
    spec.sigma_e = cfg.get_double("sigma_e", 1.0, 1e-12, 1e12);
    spec.b_smooth = cfg.get_double("b_smooth", 1.0);
    spec.f0_amp = cfg.get_double("f0_amp", 1.0);
    spec.f0_width = cfg.get_double("f0_width", 1.0, 1e-12, 1e12);
    const double beta = cfg.get_double("beta", 1.0, 1e-12, 1e12);
    const int n_seeds = cfg.get_int("n_seeds", 1, 1, 10000);
    const double t_max = cfg.get_double("t_max", 50.0, 1e-12, 1e12);
    const int n_points = cfg.get_int("n_points", 2048, 8, 1 << 24);
    const int n_decay = cfg.get_int("n_decay", 1, 0, 16);
    const double tol_deg = cfg.get_double("tol_deg", -1.0);
    finish_config(cfg, ctx, "eth-demo");

    std::vector<double> c0s(static_cast<std::size_t>(n_seeds));
    bathlab::parallel_for(c0s.size(), ctx.jobs, [&](std::size_t k) {
        eth_synth::EthSpec s = spec;
        s.seed = ctx.seed + k;
        const auto env = eth_synth::generate_eth_environment(s);
        const auto sys = env.to_eigensystem();
        const auto th = eigencorr::thermal_weights(sys, beta);
        c0s[k] = eigencorr::offset(sys, th, tol_deg).c0;
    });

    eth_synth::EthSpec s0 = spec;
    s0.seed = ctx.seed;
    const auto env = eth_synth::generate_eth_environment(s0);
    const auto sys = env.to_eigensystem();
    const auto th = eigencorr::thermal_weights(sys, beta);
    const TimeGrid grid = bathlab::make_time_grid(t_max, static_cast<std::size_t>(n_points));
    const auto series = eigencorr::correlation_function(sys, th, grid, tol_deg, 1e-14, ctx.jobs);
    const auto decay = eth_synth::verify_polynomial_decay(series, n_decay);

    write_series(ctx, "correlation.csv", series);

    ordered_json j = io::make_report("eth-demo");
    j["dim"] = spec.dim;
    j["n_seeds"] = n_seeds;
    j["c0_by_seed"] = c0s;
    j["c0_median"] = median(c0s);
    j["decay_bound"] = {{"n", decay.n},
                        {"c_n", decay.c_n},
                        {"tail_ratio", decay.tail_ratio},
                        {"pass", decay.pass}};
    write_report(ctx, j);
}

void run_master_eq(Config& cfg, const RunContext& ctx)
{
    const std::string system = cfg.get_choice("system", "two-level", {"two-level", "random"});
    const double omega_q = cfg.get_double("omega_q", 1.0, 1e-12, 1e12);
    const int dim = cfg.get_int("dim", 4, 2, 64);
    const double e_span = cfg.get_double("e_span", 1.5, 1e-12, 1e12);
    const std::string bath_kind = cfg.get_choice("bath", "ohmic", {"ohmic", "exponential"});
    const double r = cfg.get_double("r", 0.5, 0.0, 1e6);
    const double omega_c = cfg.get_double("omega_c", 1.0, 1e-12, 1e12);
    const double beta = cfg.get_double("beta", 1.0, 1e-12, 1e12);
    const double amp = cfg.get_double("amp", 0.05);
    const double kappa = cfg.get_double("kappa", 1.0, 1e-12, 1e12);
    const double c0 = cfg.get_double("c0", 0.0);
    const std::string variant =
        cfg.get_choice("variant", "time-local", {"time-local", "convoluted", "rates"});
    const std::string init = cfg.get_choice("init", "excited", {"ground", "excited", "mixed", "plus"});
    master_eq::MasterEqOptions opts;
    opts.dt = cfg.get_double("dt", 0.01, 1e-9, 1.0);
    opts.t_max = cfg.get_double("t_max", 100.0, 1e-6, 1e9);
    opts.store_stride = static_cast<std::size_t>(cfg.get_int("store_stride", 10, 1, 1 << 24));
    opts.finite_time_coefficients = cfg.get_bool("finite_time", false);
    opts.history_damping = cfg.get_double("history_damping", 0.0, 0.0, 1e12);
    finish_config(cfg, ctx, "master-eq");

    const master_eq::SystemSpec sys = system == "two-level"
                                          ? master_eq::make_two_level(omega_q)
                                          : master_eq::make_random_system(dim, ctx.seed, e_span);
    const master_eq::BathInput bath = bath_kind == "ohmic"
                                          ? master_eq::BathInput::ohmic(r, omega_c, beta, c0)
                                          : master_eq::BathInput::exponential(amp, kappa, c0);
    const Eigen::Index d = sys.dim();

    ordered_json j = io::make_report("master-eq");
    j["system"] = system;
    j["bath"] = bath_kind;
    j["variant"] = variant;

    if (variant == "rates") {
        Eigen::VectorXd p0 = Eigen::VectorXd::Zero(d);
        if (init == "ground")
            p0(0) = 1.0;
        else if (init == "excited")
            p0(d - 1) = 1.0;
        else if (init == "mixed")
            p0.setConstant(1.0 / static_cast<double>(d));
        else {
            p0(0) = 0.5;
            p0(1) = 0.5;
        }
        const auto run = master_eq::secular_rate_equations(sys, bath, p0, opts);
        const auto steady = master_eq::steady_state_report(run, beta);

        if (ctx.want_csv()) {
            std::vector<io::Column> cols(1 + static_cast<std::size_t>(d));
            cols[0].name = "t";
            cols[0].values.assign(run.t.begin(), run.t.end());
            for (Eigen::Index k = 0; k < d; ++k) {
                auto& c = cols[1 + static_cast<std::size_t>(k)];
                c.name = "p_" + std::to_string(k);
                c.values.resize(run.p.size());
                for (std::size_t i = 0; i < run.p.size(); ++i) c.values[i] = run.p[i](k);
            }
            io::write_csv(ctx.out / "trajectory.csv", cols);
        }

        j["conservation_drift"] = run.conservation_drift;
        j["secular_gap"] = json_number(run.secular_gap);
        j["max_rate"] = run.max_rate;
        j["secular_warning"] = run.secular_warning;
        j["history_damping"] = run.history_damping;
        j["window_resolved"] = run.window_resolved;
        j["steady"] = {{"converged", steady.converged},
                       {"plateau_delta", steady.plateau_delta},
                       {"gibbs_distance", steady.gibbs_distance}};
        ordered_json pf = ordered_json::array();
        for (Eigen::Index k = 0; k < d; ++k) pf.push_back(run.p.back()(k));
        j["final_populations"] = pf;
    } else {
        Eigen::MatrixXcd rho0 = Eigen::MatrixXcd::Zero(d, d);
        if (init == "ground")
            rho0(0, 0) = 1.0;
        else if (init == "excited")
            rho0(d - 1, d - 1) = 1.0;
        else if (init == "mixed")
            rho0 = Eigen::MatrixXcd::Identity(d, d) / static_cast<double>(d);
        else
            rho0(0, 0) = rho0(0, 1) = rho0(1, 0) = rho0(1, 1) = 0.5;
        const auto run = variant == "convoluted"
                             ? master_eq::evolve_convoluted(sys, bath, rho0, opts)
                             : master_eq::evolve_time_local(sys, bath, rho0, opts);
        const auto steady = master_eq::steady_state_report(run, beta);

        if (ctx.want_csv()) {
            const std::size_t d2 = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
            std::vector<io::Column> cols(1 + 2 * d2);
            cols[0].name = "t";
            cols[0].values.assign(run.t.begin(), run.t.end());
            for (Eigen::Index a = 0; a < d; ++a)
                for (Eigen::Index b = 0; b < d; ++b) {
                    const std::size_t k = static_cast<std::size_t>(a * d + b);
                    const std::string suffix = std::to_string(a) + "_" + std::to_string(b);
                    cols[1 + 2 * k].name = "re_rho_" + suffix;
                    cols[2 + 2 * k].name = "im_rho_" + suffix;
                    cols[1 + 2 * k].values.resize(run.t.size());
                    cols[2 + 2 * k].values.resize(run.t.size());
                }
            for (std::size_t i = 0; i < run.t.size(); ++i) {
                const Eigen::MatrixXcd rho = run.schrodinger(i);
                for (Eigen::Index a = 0; a < d; ++a)
                    for (Eigen::Index b = 0; b < d; ++b) {
                        const std::size_t k = static_cast<std::size_t>(a * d + b);
                        cols[1 + 2 * k].values[i] = rho(a, b).real();
                        cols[2 + 2 * k].values[i] = rho(a, b).imag();
                    }
            }
            io::write_csv(ctx.out / "trajectory.csv", cols);
        }

        j["trace_drift"] = run.trace_drift;
        j["herm_drift"] = run.herm_drift;
        j["min_eigenvalue"] = run.min_eigenvalue;
        j["rate_scale"] = run.rate_scale;
        j["max_offset_coeff"] = run.max_offset_coeff;
        j["unstable"] = run.unstable;
        j["steady"] = {{"converged", steady.converged},
                       {"plateau_delta", steady.plateau_delta},
                       {"gibbs_distance", steady.gibbs_distance}};
        ordered_json pf = ordered_json::array();
        for (Eigen::Index k = 0; k < d; ++k) pf.push_back(run.rho.back()(k, k).real());
        j["final_populations"] = pf;
    }
    write_report(ctx, j);
}

void run_ensemble(Config& cfg, const RunContext& ctx)
{
    ensemble::EnsembleSpec spec;
    spec.n_molecules = cfg.get_int("n_molecules", 16, 1, 100000);
    spec.delta_mean = cfg.get_double("delta_mean", 1.0, 1e-12, 1e12);
    spec.delta_sd = cfg.get_double("delta_sd", 0.1, 0.0, 1e12);
    spec.eps_mean = cfg.get_double("eps_mean", 1.0, 1e-12, 1e12);
    spec.eps_sd = cfg.get_double("eps_sd", 0.1, 0.0, 1e12);
    spec.r = cfg.get_double("r", 0.5, 0.0, 1e6);
    spec.omega_c = cfg.get_double("omega_c", 1.0, 1e-12, 1e12);
    spec.L = cfg.get_int("L", 1, 0, 64);
    spec.beta = cfg.get_double("beta", 1.0, 1e-12, 1e12);
    spec.dim_cap = cfg.get_int("dim_cap", 4096, 2, 1 << 20);
    spec.seed = ctx.seed;
    const double t_max = cfg.get_double("t_max", 50.0, 1e-12, 1e12);
    const int n_points = cfg.get_int("n_points", 1024, 2, 1 << 24);
    const double nu_min = cfg.get_double("nu_min", 1e-4, 1e-300, 1e12);
    const double nu_max = cfg.get_double("nu_max", 1.0, 1e-300, 1e12);
    const int n_rates = cfg.get_int("n_rates", 64, 1, 1 << 20);
    const std::string weights = cfg.get_choice("weights", "equal", {"equal", "offsets"});
    const bool include_static = cfg.get_bool("include_static", false);
    const double static_weight = cfg.get_double("static_weight", 0.0, 0.0, 1e12);
    const double w_min = cfg.get_double("w_min", 1e-5, 1e-300, 1e12);
    const double w_max = cfg.get_double("w_max", 10.0, 1e-300, 1e12);
    const int n_omega = cfg.get_int("n_omega", 256, 2, 1 << 22);
    const double slope_w_lo = cfg.get_double("slope_w_lo", 1e-3, 1e-300, 1e12);
    const double slope_w_hi = cfg.get_double("slope_w_hi", 1e-1, 1e-300, 1e12);
    finish_config(cfg, ctx, "ensemble");

    const TimeGrid grid = bathlab::make_time_grid(t_max, static_cast<std::size_t>(n_points));
    const auto result = ensemble::ensemble_correlation(spec, grid, ctx.jobs);

    std::vector<ensemble::LorentzComponent> comps;
    if (weights == "equal") {
        comps = ensemble::log_uniform_mixture(nu_min, nu_max, static_cast<std::size_t>(n_rates));
    } else {
        const std::size_t m = result.c0.size();
        const auto rates =
            m > 1 ? ensemble::log_spaced(nu_min, nu_max, m) : std::vector<double>{nu_min};
        comps.resize(m);
        for (std::size_t k = 0; k < m; ++k)
            comps[k] = ensemble::LorentzComponent{result.c0[k], rates[k]};
    }
    if (include_static) comps.push_back(ensemble::LorentzComponent{static_weight, 0.0});

    const auto omega_grid = ensemble::log_spaced(w_min, w_max, static_cast<std::size_t>(n_omega));
    const auto spectrum = ensemble::susceptibility(comps, omega_grid);
    const double slope = ensemble::loglog_slope(spectrum.omega, spectrum.chi, slope_w_lo, slope_w_hi);

    write_series(ctx, "mean_correlation.csv", result.mean_series);
    if (ctx.want_csv()) {
        std::vector<io::Column> cols(2);
        cols[0] = io::Column{"omega", spectrum.omega};
        cols[1] = io::Column{"chi", spectrum.chi};
        io::write_csv(ctx.out / "spectrum.csv", cols);
    }

    ordered_json j = io::make_report("ensemble");
    j["n_molecules"] = spec.n_molecules;
    j["c0_mean"] = result.c0_mean;
    j["c0"] = result.c0;
    j["delta"] = result.delta;
    j["eps"] = result.eps;
    j["loglog_slope"] = slope;
    j["slope_window"] = {{"w_lo", slope_w_lo}, {"w_hi", slope_w_hi}};
    j["static_weight"] = spectrum.static_weight;
    j["n_components"] = comps.size();
    write_report(ctx, j);
}

void run_fit(Config& cfg, const RunContext& ctx)
{
    const std::string input = cfg.get_required_string("input");
    const std::string value_name = cfg.get_string("value", "c");
    fitkit::FitOptions opts;
    opts.n_starts = cfg.get_int("n_starts", 3, 1, 64);
    opts.max_iterations = cfg.get_int("max_iterations", 400, 1, 1000000);
    finish_config(cfg, ctx, "fit");
    if (!fs::exists(input)) throw ConfigError("config key 'input': no such file: " + input);

    const CorrelationSeries series = io::read_series_csv(input, value_name);
    const fitkit::FitResult res = fitkit::fit_correlation(series, opts);

    if (ctx.want_csv()) {
        std::vector<io::Column> cols(3);
        cols[0].name = "t";
        cols[1].name = "data";
        cols[2].name = "model";
        for (auto& c : cols) c.values.resize(series.size());
        for (std::size_t i = 0; i < series.size(); ++i) {
            const double t = series.grid.t(i);
            cols[0].values[i] = t;
            cols[1].values[i] = series.values[i].real();
            cols[2].values[i] = oracles::fit_model_value(t, res.amp, res.omega, res.rate,
                                                         res.exponent, res.slow_amp, res.slow_time);
        }
        io::write_csv(ctx.out / "fit_curve.csv", cols);
    }

    ordered_json j = io::make_report("fit");
    j["input"] = input;
    j["amp"] = res.amp;
    j["omega"] = res.omega;
    j["rate"] = res.rate;
    j["exponent"] = res.exponent;
    j["slow_amp"] = res.slow_amp;
    j["slow_time"] = json_number(res.slow_time);
    j["rms"] = json_number(res.rms);
    j["iterations"] = res.iterations;
    j["converged"] = res.converged;
    j["slow_static"] = res.slow_static;
    j["constant_input"] = res.constant_input;
    j["start_index"] = res.start_index;
    if (res.covariance.size() == 36 && res.covariance.allFinite()) {
        ordered_json cov = ordered_json::array();
        for (Eigen::Index a = 0; a < 6; ++a) {
            ordered_json row = ordered_json::array();
            for (Eigen::Index b = 0; b < 6; ++b) row.push_back(res.covariance(a, b));
            cov.push_back(row);
        }
        j["covariance"] = cov;
    } else {
        j["covariance"] = nullptr;
    }
    write_report(ctx, j);
}

void run_davies(Config& cfg, const RunContext& ctx)
{
    const std::string input = cfg.get_string("input", "");
    const std::string value_name = cfg.get_string("value", "c");
    const std::string kind =
        cfg.get_choice("kind", "exponential", {"exponential", "constant", "power"});
    const double amp = cfg.get_double("amp", 1.0);
    const double rate = cfg.get_double("rate", 1.0, 0.0, 1e12);
    const double level = cfg.get_double("level", 0.3);
    const double exponent = cfg.get_double("exponent", 1.0, 0.0, 64.0);
    const double epsilon = cfg.get_double("epsilon", 0.5, 0.0, 16.0);
    const double horizon = cfg.get_double("horizon", -1.0);
    const double t_max = cfg.get_double("t_max", 40.0, 1e-12, 1e12);
    const int n_points = cfg.get_int("n_points", 4096, 64, 1 << 24);
    finish_config(cfg, ctx, "davies");

    CorrelationSeries series;
    if (!input.empty()) {
        if (!fs::exists(input)) throw ConfigError("config key 'input': no such file: " + input);
        series = io::read_series_csv(input, value_name);
    } else {
        const TimeGrid grid = bathlab::make_time_grid(t_max, static_cast<std::size_t>(n_points));
        if (kind == "exponential")
            series = oracles::exponential_decay(amp, rate, grid);
        else if (kind == "constant")
            series = oracles::constant_series(level, grid);
        else
            series = oracles::power_law_decay(amp, exponent, grid);
    }

    const auto rep = eigencorr::davies_diagnostic(series, epsilon, horizon);

    if (ctx.want_csv()) {
        std::vector<io::Column> cols(2);
        cols[0] = io::Column{"t", rep.horizons};
        cols[1] = io::Column{"i_value", rep.i_values};
        io::write_csv(ctx.out / "ladder.csv", cols);
    }

    ordered_json j = io::make_report("davies");
    j["classification"] = eigencorr::to_string(rep.classification);
    j["epsilon"] = rep.epsilon_exp;
    j["i_final"] = rep.i_final;
    j["doubling_change"] = rep.doubling_change;
    j["p_fit"] = json_number(rep.p_fit);
    write_report(ctx, j);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"bathlab: thermal bath correlation functions, offsets and master equations"};
    app.require_subcommand(1);

    std::string config_path, out_dir, format = "both";
    unsigned jobs = 0;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "config file (key = value with # comments, or flat JSON)");
    app.add_option("--seed", seed, "base RNG seed");
    app.add_option("--out", out_dir, "output directory (default: out_<command>)");
    app.add_option("--jobs", jobs, "worker threads for scans; 0 = all cores");
    app.add_option("--format", format, "output formats: csv, json or both")
        ->check(CLI::IsMember({"csv", "json", "both"}));

    using Handler = std::function<void(Config&, const RunContext&)>;
    const std::vector<std::pair<std::string, Handler>> commands = {
        {"correlation", run_correlation}, {"offset-scan", run_offset_scan},
        {"bkk-stats", run_bkk_stats},     {"oracle", run_oracle},
        {"eth-demo", run_eth_demo},       {"master-eq", run_master_eq},
        {"ensemble", run_ensemble},       {"fit", run_fit},
        {"davies", run_davies}};
    const std::vector<std::string> descriptions = {
        "single-molecule bath correlation function and offset",
        "offset heatmap over an inverse-temperature x coupling grid",
        "eigenstate-diagonal probe statistics and thermal weights",
        "closed-form reference curves",
        "synthetic eigenstate-thermalization environment pipeline",
        "second-order master equation and secular rate-equation runs",
        "disordered molecule ensemble and its low-frequency noise spectrum",
        "damped-oscillation model fit of a correlation series",
        "integrability diagnostic of a correlation series"};
    for (std::size_t k = 0; k < commands.size(); ++k)
        app.add_subcommand(commands[k].first, descriptions[k])->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    std::string command;
    for (const auto* sub : app.get_subcommands()) command = sub->get_name();

    RunContext ctx;
    ctx.format = format;
    ctx.seed = seed;
    ctx.jobs = jobs > 0 ? jobs : std::max(1u, std::thread::hardware_concurrency());
    ctx.out = out_dir.empty() ? fs::path("out_" + command) : fs::path(out_dir);

    Config cfg;
    try {
        if (!config_path.empty()) cfg = Config::load(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) {
        std::cerr << "cannot create output directory " << ctx.out.string() << ": " << ec.message()
                  << "\n";
        return 3;
    }

    try {
        for (const auto& [name, handler] : commands)
            if (name == command) {
                handler(cfg, ctx);
                return 0;
            }
        std::cerr << "unknown command " << command << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        ordered_json err = io::make_report("error");
        err["command"] = command;
        err["message"] = e.what();
        try {
            io::write_json(ctx.out / "error.json", err);
        } catch (...) {
        }
        return 3;
    }
}
