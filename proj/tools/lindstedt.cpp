#include <lindstedt/pipelines.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

using namespace lindstedt;

namespace {

enum Exit { kPass = 0, kConfig = 2, kModel = 3, kAssertion = 4, kNumeric = 5 };

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string command;
    std::string model;
    int order = -1;
    int precision = 256;
    std::string kernel = "exact";
    std::optional<int> scale;
    bool force_localize = false;
    int jobs = 1;
    std::string out;
    unsigned seed = 1;
    std::optional<int> radius;
    std::vector<std::string> c;
    std::vector<std::string> eps;
    int grid = 64;
    bool embed = false;
    bool allow_complex = false;
};

int env_precision() {
    const char* v = std::getenv("LINDSTEDT_PRECISION_BITS");
    if (!v || !*v) return 256;
    try {
        size_t used = 0;
        int bits = std::stoi(v, &used);
        if (used != std::string(v).size()) throw std::invalid_argument(v);
        return bits;
    } catch (const std::exception&) {
        throw config_error(std::string("LINDSTEDT_PRECISION_BITS is not an integer: ") + v);
    }
}

void write_text(const RunConfig& cfg, const std::string& text) {
    if (cfg.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(cfg.out, std::ios::binary);
    if (!f) throw config_error("cannot write " + cfg.out);
    f << text;
}

int emit(const RunConfig& cfg, const Outcome& o) {
    write_text(cfg, o.report.dump(2) + "\n");
    return o.ok ? kPass : kAssertion;
}

template <class F> Model<F> load(const RunConfig& cfg) {
    ModelOptions o;
    o.embed_zw = cfg.embed;
    o.allow_complex_real = cfg.allow_complex;
    return load_model_file<F>(cfg.model, o);
}

LocalizeOptions localize_options(const RunConfig& cfg) {
    LocalizeOptions o;
    o.force = cfg.force_localize;
    return o;
}

int order_or(const RunConfig& cfg, int fallback) { return cfg.order >= 0 ? cfg.order : fallback; }

FC parse_amplitude(const std::string& s) {
    auto z = parse_scalar(s);
    return FC(z.re.to_bigfloat(), z.im.to_bigfloat());
}

int residual(const RunConfig& cfg) {
    auto m = load<BigFloat>(cfg);
    int K = order_or(cfg, 2);
    std::vector<FC> c;
    for (auto& s : cfg.c) c.push_back(parse_amplitude(s));
    if (c.empty()) c.assign(m.d(), FC(BigFloat("0.3")));
    if (static_cast<int>(c.size()) != m.d()) throw config_error("--c needs " + std::to_string(m.d()) + " amplitudes");
    std::vector<BigFloat> grid;
    for (auto& s : cfg.eps) {
        try {
            grid.push_back(BigFloat(s));
        } catch (const std::exception&) {
            throw config_error("bad --eps value " + s);
        }
    }
    if (grid.empty()) grid = log_eps_grid(-2, -3.5, 4);
    auto t = solve_up_to(m, K);
    auto rep = residual_sweep(m, t, c, grid, cfg.grid, cfg.jobs);
    write_text(cfg, residual_csv(rep));
    for (auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
    if (rep.slope) std::cerr << "slope " << *rep.slope << " (expected " << K + 1 << ")\n";
    return kPass;
}

template <class F> int dispatch(const RunConfig& cfg) {
    const std::string& cmd = cfg.command;
    if (cmd == "expand") return emit(cfg, run_expand(load<F>(cfg), order_or(cfg, 4)));
    if (cmd == "eta") return emit(cfg, run_eta(load<F>(cfg), order_or(cfg, 6)));
    if (cmd == "verify-trees") return emit(cfg, run_verify_trees(load<F>(cfg), order_or(cfg, 3), cfg.seed));
    if (cmd == "verify-symmetry") return emit(cfg, run_verify_symmetry(load<F>(cfg), order_or(cfg, 2), cfg.scale.value_or(3), localize_options(cfg)));
    if (cmd == "verify-cancellation")
        return emit(cfg, run_verify_cancellation(load<F>(cfg), load<BigFloat>(cfg), order_or(cfg, 2), cfg.scale.value_or(7), localize_options(cfg)));
    if (cmd == "verify-counting") return emit(cfg, run_verify_counting(load<F>(cfg), order_or(cfg, 3)));
    if (cmd == "divisors") {
        auto m = load<F>(cfg);
        return emit(cfg, run_divisors(m, cfg.radius.value_or(m.spec.nu_scan_radius), cfg.scale.value_or(8)));
    }
    if (cmd == "residual") return residual(cfg);
    throw config_error("unknown command " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lindstedt series expansion and verification tool"};
    app.require_subcommand(1);
    RunConfig cfg;
    try {
        cfg.precision = env_precision();
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    }

    auto common = [&](CLI::App* sub, bool with_scale, bool with_localize) {
        sub->add_option("--model", cfg.model, "model JSON file")->required()->check(CLI::ExistingFile);
        sub->add_option("--order", cfg.order, "maximal perturbative order K")->check(CLI::NonNegativeNumber);
        sub->add_option("--precision", cfg.precision, "big-float precision in bits (>= 64)");
        sub->add_option("--kernel", cfg.kernel, "scalar kernel")->check(CLI::IsMember({"exact", "float"}));
        sub->add_option("--out", cfg.out, "output file (default stdout)");
        sub->add_option("--jobs", cfg.jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--embed", cfg.embed, "run a real model through the zw equations");
        sub->add_flag("--allow-complex", cfg.allow_complex, "admit complex coefficients in a real model");
        if (with_scale) sub->add_option("--scale", cfg.scale, "scale bound n");
        if (with_localize) sub->add_flag("--force-localize", cfg.force_localize, "localize regardless of the cluster size cutoff");
    };

    common(app.add_subcommand("expand", "solve the series order by order and write the coefficient table"), false, false);
    common(app.add_subcommand("eta", "counterterms and their symmetry checks"), false, false);
    auto* vt = app.add_subcommand("verify-trees", "tree sums against the direct solver");
    common(vt, false, false);
    vt->add_option("--seed", cfg.seed, "seed for the sibling-shuffle check");
    common(app.add_subcommand("verify-symmetry", "family identities on self-energy clusters"), true, true);
    common(app.add_subcommand("verify-cancellation", "matrix chains and propagator-pair gain"), true, true);
    common(app.add_subcommand("verify-counting", "non-resonant line counts and displacement bounds"), true, true);
    auto* dv = app.add_subcommand("divisors", "small-divisor lattice scans");
    common(dv, true, false);
    dv->add_option("--radius", cfg.radius, "lattice radius |nu| <= N")->check(CLI::PositiveNumber);
    auto* rs = app.add_subcommand("residual", "residual of the equations of motion along the truncated series (CSV)");
    common(rs, false, false);
    rs->add_option("--c", cfg.c, "amplitudes c_j, one per component (e.g. 0.3 or 0.2+0.1i)")->delimiter(',');
    rs->add_option("--eps", cfg.eps, "epsilon grid")->delimiter(',');
    rs->add_option("--grid", cfg.grid, "torus points per direction")->check(CLI::Range(4, 4096));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kPass : kConfig;
    }
    cfg.command = app.get_subcommands().front()->get_name();

    try {
        if (cfg.precision < 64) throw config_error("precision must be at least 64 bits");
        set_bigfloat_precision(cfg.precision);
        if (cfg.command == "residual" || cfg.kernel == "float") return dispatch<BigFloat>(cfg);
        return dispatch<QuadNum>(cfg);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const model_error& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return kModel;
    } catch (const field_error& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return kModel;
    } catch (const resonance_error& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "assertion failure: " << e.what() << "\n";
        return kAssertion;
    }
}
