// cesfit command line: batch estimation of the nested CES production
// function from CSV data, grid search over the substitution parameters,
// synthetic data generation and group-by output totals.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cesfit/cesfit.hpp"

namespace {

using namespace cesfit;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;        // bad input, bad flags, inadmissible start
constexpr int kExitUnconverged = 2;  // fit produced but not converged

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read input file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write output file: " + path);
    out << text;
}

Scale parse_scale(const std::string& name) {
    if (name == "levels") return Scale::Levels;
    if (name == "logs") return Scale::Logs;
    throw Error("unknown scale: " + name);
}

ReportFormat parse_format(const std::string& name) {
    if (name == "text") return ReportFormat::Text;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw Error("unknown format: " + name);
}

std::pair<std::string, double> parse_assignment(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw Error("expected name=value, got: " + text);
    const auto value = detail::parse_double(detail::trim(text.substr(eq + 1)));
    if (!value) throw Error("bad numeric value in: " + text);
    return {std::string(detail::trim(text.substr(0, eq))), *value};
}

RhoGridSegment parse_triple(const std::string& text) {
    const auto parts = detail::split(text, ':');
    if (parts.size() != 3) throw Error("expected start:stop:step, got: " + text);
    const auto start = detail::parse_double(detail::trim(parts[0]));
    const auto stop = detail::parse_double(detail::trim(parts[1]));
    const auto step = detail::parse_double(detail::trim(parts[2]));
    if (!start || !stop || !step) throw Error("bad grid triple: " + text);
    return {*start, *stop, *step};
}

std::pair<double, double> parse_range(const std::string& text) {
    const auto parts = detail::split(text, ':');
    if (parts.size() != 2) throw Error("expected low:high, got: " + text);
    const auto lo = detail::parse_double(detail::trim(parts[0]));
    const auto hi = detail::parse_double(detail::trim(parts[1]));
    if (!lo || !hi) throw Error("bad range: " + text);
    return {*lo, *hi};
}

/// Index in the fixed parameter order, accepting "A" or "a" for efficiency.
int param_index(const std::string& name) {
    if (name == "A" || name == "a") return 0;
    if (name == "delta") return 1;
    if (name == "delta1") return 2;
    if (name == "rho") return 3;
    if (name == "rho1") return 4;
    throw Error("unknown parameter: " + name + " (expected A, delta, delta1, rho, rho1)");
}

double& param_slot(CesParams& p, int index) {
    switch (index) {
        case 0: return p.efficiency_a;
        case 1: return p.share_delta;
        case 2: return p.share_delta1;
        case 3: return p.rho;
        default: return p.rho1;
    }
}

/// Mean-ratio scaling for A: with every other parameter at its start value,
/// pick A so the mean prediction matches the mean output.
double default_efficiency(const CesParams& init, std::span<const Observation> data) {
    CesParams unit = init;
    unit.efficiency_a = 1.0;
    double mean_output = 0.0;
    double mean_model = 0.0;
    for (const auto& obs : data) {
        mean_output += obs.output;
        const auto v = try_eval_ces(unit, obs.capital, obs.labor);
        if (!v) return 1.0;
        mean_model += *v;
    }
    return mean_model > 0.0 && mean_output > 0.0 ? mean_output / mean_model : 1.0;
}

/// Single industry tag shared by every row, if the column carries one.
std::string industry_label(const Dataset& data) {
    if (!data.industry || data.industry->empty()) return "-";
    const std::string& first = data.industry->front();
    for (const auto& tag : *data.industry)
        if (tag != first) return "-";
    return first.empty() ? "-" : first;
}

struct LmFlags {
    LmOptions options;
    void attach(CLI::App* cmd) {
        cmd->add_option("--max-iterations", options.max_iterations, "Iteration cap")
            ->capture_default_str();
        cmd->add_option("--lambda-init", options.lambda_init, "Initial damping factor")
            ->capture_default_str();
        cmd->add_option("--lambda-factor", options.lambda_factor,
                        "Damping multiplier on reject, divisor on accept")
            ->capture_default_str();
        cmd->add_option("--rss-rel-tol", options.rss_rel_tol,
                        "Stop when the relative RSS drop falls below this")
            ->capture_default_str();
        cmd->add_option("--grad-tol", options.grad_tol,
                        "Stop when the gradient infinity norm falls below this")
            ->capture_default_str();
        cmd->add_option("--step-tol", options.step_tol,
                        "Stop when the relative step infinity norm falls below this")
            ->capture_default_str();
        cmd->add_option("--lambda-max", options.lambda_max,
                        "Give up when damping exceeds this")
            ->capture_default_str();
    }
};

int exit_code_for(LmStatus status) {
    if (is_converged(status)) return kExitOk;
    if (status == LmStatus::InadmissibleStart) return kExitUsage;
    return kExitUnconverged;
}

// ---------------------------------------------------------------- fit

struct FitConfig {
    std::string input;
    std::string scale = "levels";
    std::string format = "text";
    std::vector<std::string> fixes;
    std::vector<std::string> inits;
    double tolerance = 0.2;
    std::string industry;
    std::string rho_set = "-";
    LmFlags lm;
};

int run_fit(const FitConfig& config) {
    const Dataset data = load_csv(read_file(config.input));
    const Scale scale = parse_scale(config.scale);

    FreeMask mask = FreeMask::all();
    CesParams init{1.0, 0.5, 0.5, 0.5, 0.5};
    bool have_a_init = false;

    for (const auto& text : config.inits) {
        const auto [name, value] = parse_assignment(text);
        const int index = param_index(name);
        param_slot(init, index) = value;
        if (index == 0) have_a_init = true;
    }
    for (const auto& text : config.fixes) {
        const auto [name, value] = parse_assignment(text);
        const int index = param_index(name);
        param_slot(init, index) = value;
        if (index == 0) have_a_init = true;
        switch (index) {
            case 0: mask.efficiency_a = false; break;
            case 1: mask.share_delta = false; break;
            case 2: mask.share_delta1 = false; break;
            case 3: mask.rho = false; break;
            case 4: mask.rho1 = false; break;
        }
    }
    if (mask.count() == 0) throw Error("no free parameters");
    if (mask.efficiency_a && !have_a_init)
        init.efficiency_a = default_efficiency(init, data.observations);
    if (init.efficiency_a <= 0.0) throw Error("efficiency A must start > 0");

    const LmOutcome outcome =
        lm_fit(data.observations, init, mask, scale, config.lm.options);
    if (outcome.status == LmStatus::InadmissibleStart)
        throw Error("initial parameters are inadmissible on this data");

    const FitStats stats =
        compute_stats(data.observations, outcome, scale, data.size(),
                      static_cast<std::size_t>(mask.count()), config.tolerance);
    ReportMeta meta;
    meta.industry_code = config.industry.empty() ? industry_label(data) : config.industry;
    meta.rho_set_label = config.rho_set;
    std::cout << render_report(stats, meta, parse_format(config.format));
    return exit_code_for(outcome.status);
}

// ---------------------------------------------------------------- grid

struct GridConfig {
    std::string input;
    std::string scale = "levels";
    std::string format = "text";
    std::vector<std::string> rho_triples;
    std::vector<std::string> rho1_triples;
    std::string preset = "rhoVec1";
    std::string sigma_source = "outer";
    double tolerance = 0.2;
    std::string industry;
    std::string surface_path;
    std::string surface_format = "long";
    bool parallel = false;
    bool no_warm_start = false;
    unsigned threads = 0;
    LmFlags lm;
};

int run_grid(const GridConfig& config) {
    const Dataset data = load_csv(read_file(config.input));
    const Scale scale = parse_scale(config.scale);

    RhoGrid preset_grid;
    if (config.preset == "rhoVec1") preset_grid = rho_vec1();
    else if (config.preset == "rhoVec2") preset_grid = rho_vec2();
    else throw Error("unknown preset: " + config.preset);

    RhoGrid rho_grid = preset_grid;
    RhoGrid rho1_grid = preset_grid;
    std::string label = config.preset;
    if (!config.rho_triples.empty() || !config.rho1_triples.empty()) {
        label = "custom";
        if (!config.rho_triples.empty()) {
            rho_grid.segments.clear();
            for (const auto& text : config.rho_triples)
                rho_grid.segments.push_back(parse_triple(text));
        }
        if (!config.rho1_triples.empty()) {
            rho1_grid.segments.clear();
            for (const auto& text : config.rho1_triples)
                rho1_grid.segments.push_back(parse_triple(text));
        }
    }

    SigmaSource sigma_source;
    if (config.sigma_source == "outer") sigma_source = SigmaSource::Outer;
    else if (config.sigma_source == "inner") sigma_source = SigmaSource::Inner;
    else throw Error("unknown sigma source: " + config.sigma_source);

    const CellInit init_mode = config.parallel || config.no_warm_start
                                   ? CellInit::Independent
                                   : CellInit::WarmStart;
    unsigned threads = 1;
    if (config.parallel) {
        threads = config.threads > 0 ? config.threads : std::thread::hardware_concurrency();
        if (threads == 0) threads = 1;
    }

    const GridFitResult result =
        grid_search(data.observations, rho_grid, rho1_grid, scale, config.lm.options,
                    sigma_source, init_mode, threads);

    if (!config.surface_path.empty()) {
        const SurfaceFormat fmt = config.surface_format == "matrix" ? SurfaceFormat::Matrix
                                                                    : SurfaceFormat::LongCsv;
        write_file(config.surface_path, export_surface(result.surface, fmt));
    }

    const GridSelection* selected = result.best_reasonable ? &*result.best_reasonable
                                                           : &result.best_unconstrained;
    if (!result.best_reasonable)
        std::cerr << "warning: no grid cell has sigma in [0, 1]; "
                     "reporting the unconstrained best\n";
    std::cerr << "selected cell: rho1=" << detail::format_double(selected->rho1)
              << " rho=" << detail::format_double(selected->rho) << "\n";

    const FitStats stats = compute_stats(data.observations, selected->outcome, scale,
                                         data.size(), 3, config.tolerance);
    ReportMeta meta;
    meta.industry_code = config.industry.empty() ? industry_label(data) : config.industry;
    meta.rho_set_label = label;
    std::cout << render_report(stats, meta, parse_format(config.format));
    return exit_code_for(selected->outcome.status);
}

// ---------------------------------------------------------------- simulate

struct SimulateConfig {
    std::size_t n = 200;
    std::uint64_t seed = 0;
    double a = 2.0;
    double delta = 0.6;
    double delta1 = 0.4;
    double rho = 0.5;
    double rho1 = 1.2;
    std::string k_range = "0.5:50";
    std::string l_range = "0.5:50";
    double noise = 0.0;
    std::string noise_kind = "lognormal";
    std::string output = "-";
};

int run_simulate(const SimulateConfig& config) {
    SynthSpec spec;
    spec.true_params = {config.a, config.delta, config.delta1, config.rho, config.rho1};
    spec.n = config.n;
    spec.seed = config.seed;
    spec.k_range = parse_range(config.k_range);
    spec.l_range = parse_range(config.l_range);
    spec.noise_sigma = config.noise;
    if (config.noise_kind == "lognormal") spec.noise_kind = NoiseKind::LogNormal;
    else if (config.noise_kind == "additive") spec.noise_kind = NoiseKind::Additive;
    else throw Error("unknown noise kind: " + config.noise_kind);

    const std::string csv = render_csv(generate(spec));
    if (config.output == "-") std::cout << csv;
    else write_file(config.output, csv);
    return kExitOk;
}

// ---------------------------------------------------------------- aggregate

struct AggregateConfig {
    std::string input;
    std::string by = "state";
    std::string format = "text";
};

int run_aggregate(const AggregateConfig& config) {
    const Dataset data = load_csv(read_file(config.input));
    GroupBy by;
    if (config.by == "state") by = GroupBy::State;
    else if (config.by == "industry") by = GroupBy::Industry;
    else if (config.by == "state-industry") by = GroupBy::StateAndIndustry;
    else throw Error("unknown grouping: " + config.by);

    const auto rows = aggregate_output(data, by);
    const bool with_state = by != GroupBy::Industry;
    const bool with_industry = by != GroupBy::State;

    if (config.format == "csv") {
        std::string out;
        if (with_state) out += "state,";
        if (with_industry) out += "industry,";
        out += "total_output\n";
        for (const auto& row : rows) {
            if (with_state) out += row.state + ',';
            if (with_industry) out += row.industry + ',';
            out += detail::format_double(row.total_output) + '\n';
        }
        std::cout << out;
    } else if (config.format == "json") {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& row : rows) {
            nlohmann::ordered_json item;
            if (with_state) item["state"] = row.state;
            if (with_industry) item["industry"] = row.industry;
            item["total_output"] = row.total_output;
            j.push_back(item);
        }
        std::cout << j.dump(2) << "\n";
    } else if (config.format == "text") {
        std::string out;
        if (with_state) out += detail::pad("state", 12);
        if (with_industry) out += detail::pad("industry", 12);
        out += "total_output\n";
        for (const auto& row : rows) {
            if (with_state) out += detail::pad(row.state, 12);
            if (with_industry) out += detail::pad(row.industry, 12);
            out += detail::format_double(row.total_output) + '\n';
        }
        std::cout << out;
    } else {
        throw Error("unknown format: " + config.format);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nested CES production function estimation"};
    app.require_subcommand(1);

    FitConfig fit;
    auto* fit_cmd = app.add_subcommand(
        "fit", "Fit the nested CES model to a CSV of (output, capital, labor)");
    fit_cmd->add_option("--input", fit.input, "Input CSV path")->required();
    fit_cmd->add_option("--scale", fit.scale, "Residual scale: levels or logs")
        ->capture_default_str();
    fit_cmd->add_option("--fix", fit.fixes,
                        "Hold a parameter fixed, e.g. --fix rho=0.5 (repeatable)");
    fit_cmd->add_option("--init", fit.inits,
                        "Starting value for a free parameter, e.g. --init delta=0.7 "
                        "(repeatable; defaults: delta=0.5 delta1=0.5 rho=0.5 rho1=0.5, "
                        "A scaled to match mean output)");
    fit_cmd->add_option("--tolerance", fit.tolerance,
                        "Capital-intensity tolerance around 1 for delta and delta1")
        ->capture_default_str();
    fit_cmd->add_option("--format", fit.format, "Report format: text, csv or json")
        ->capture_default_str();
    fit_cmd->add_option("--industry", fit.industry,
                        "Industry label for the report (default: the input's single "
                        "industry tag, if any)");
    fit_cmd->add_option("--rho-set", fit.rho_set, "Rho-set label for the report")
        ->capture_default_str();
    fit.lm.attach(fit_cmd);

    GridConfig grid;
    auto* grid_cmd = app.add_subcommand(
        "grid", "Grid search over (rho1, rho) with a per-cell fit of A, delta, delta1");
    grid_cmd->add_option("--input", grid.input, "Input CSV path")->required();
    grid_cmd->add_option("--scale", grid.scale, "Residual scale: levels or logs")
        ->capture_default_str();
    grid_cmd->add_option("--rho", grid.rho_triples,
                         "Rho grid segment start:stop:step (repeatable; default: the "
                         "selected preset)");
    grid_cmd->add_option("--rho1", grid.rho1_triples,
                         "Rho1 grid segment start:stop:step (repeatable; default: the "
                         "selected preset)");
    grid_cmd->add_option("--preset", grid.preset,
                         "Preset grid for both axes: rhoVec1 = "
                         "[-0.9:1.25:0.64, 1.68:1.72:0.88, 1.86:10:0.94], rhoVec2 = "
                         "[-1:1:0.4, 1.68:2:0.64, 10:11.51:0.88]")
        ->capture_default_str();
    grid_cmd->add_option("--sigma-source", grid.sigma_source,
                         "Which substitution parameter defines the reported sigma "
                         "band: outer (rho) or inner (rho1)")
        ->capture_default_str();
    grid_cmd->add_option("--tolerance", grid.tolerance,
                         "Capital-intensity tolerance around 1 for delta and delta1")
        ->capture_default_str();
    grid_cmd->add_option("--format", grid.format, "Report format: text, csv or json")
        ->capture_default_str();
    grid_cmd->add_option("--industry", grid.industry, "Industry label for the report");
    grid_cmd->add_option("--surface", grid.surface_path,
                         "Write the negative-SSR surface to this file");
    grid_cmd->add_option("--surface-format", grid.surface_format,
                         "Surface file layout: long or matrix")
        ->capture_default_str();
    grid_cmd->add_flag("--parallel", grid.parallel,
                       "Fit grid cells on several threads; disables warm-starting, so "
                       "results match a sequential --no-warm-start run byte for byte");
    grid_cmd->add_option("--threads", grid.threads,
                         "Thread count for --parallel (default: hardware concurrency)");
    grid_cmd->add_flag("--no-warm-start", grid.no_warm_start,
                       "Seed every cell independently instead of from its best "
                       "completed neighbor");
    grid.lm.attach(grid_cmd);

    SimulateConfig sim;
    auto* sim_cmd = app.add_subcommand(
        "simulate", "Generate a deterministic synthetic dataset as CSV");
    sim_cmd->add_option("--n", sim.n, "Number of observations")->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed, "Generator seed")->capture_default_str();
    sim_cmd->add_option("--A", sim.a, "True efficiency A")->capture_default_str();
    sim_cmd->add_option("--delta", sim.delta, "True delta")->capture_default_str();
    sim_cmd->add_option("--delta1", sim.delta1, "True delta1")->capture_default_str();
    sim_cmd->add_option("--rho", sim.rho, "True rho")->capture_default_str();
    sim_cmd->add_option("--rho1", sim.rho1, "True rho1")->capture_default_str();
    sim_cmd->add_option("--k-range", sim.k_range, "Log-uniform capital range low:high")
        ->capture_default_str();
    sim_cmd->add_option("--l-range", sim.l_range, "Log-uniform labor range low:high")
        ->capture_default_str();
    sim_cmd->add_option("--noise", sim.noise, "Noise standard deviation")
        ->capture_default_str();
    sim_cmd->add_option("--noise-kind", sim.noise_kind,
                        "Noise model: lognormal (multiplicative) or additive")
        ->capture_default_str();
    sim_cmd->add_option("--output", sim.output, "Output path, or - for stdout")
        ->capture_default_str();

    AggregateConfig agg;
    auto* agg_cmd =
        app.add_subcommand("aggregate", "Total output per state and/or industry group");
    agg_cmd->add_option("--input", agg.input, "Input CSV path")->required();
    agg_cmd->add_option("--by", agg.by, "Grouping: state, industry or state-industry")
        ->capture_default_str();
    agg_cmd->add_option("--format", agg.format, "Table format: text, csv or json")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (fit_cmd->parsed()) return run_fit(fit);
        if (grid_cmd->parsed()) return run_grid(grid);
        if (sim_cmd->parsed()) return run_simulate(sim);
        return run_aggregate(agg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
    }
    return kExitUsage;
}
