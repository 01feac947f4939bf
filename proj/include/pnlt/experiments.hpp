#pragma once

// Typed experiment configuration, validation and the runners behind the command-line driver.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pnlt/config.hpp"
#include "pnlt/energy.hpp"
#include "pnlt/envelope.hpp"
#include "pnlt/error.hpp"
#include "pnlt/fields.hpp"
#include "pnlt/kernel.hpp"
#include "pnlt/limits.hpp"
#include "pnlt/linetension.hpp"
#include "pnlt/parallel.hpp"
#include "pnlt/recovery.hpp"

namespace pnlt {

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds{"psi-table",         "envelope",    "energy", "minimize",
                                                "sweep-linetension", "sweep-gamma"};
    return kinds;
}

struct KernelSpec {
    std::string type = "cubic";
    double mu = 4.0 * std::numbers::pi;
    double nu = 0.0;
    std::string path;

    AnisotropyKernel build() const {
        if (type == "cubic") return AnisotropyKernel::cubic(mu, nu);
        if (type == "tabulated") return AnisotropyKernel::load(path);
        throw ConfigError("kernel type must be 'cubic' or 'tabulated', got '" + type + "'");
    }
};

struct FieldSpec {
    std::string type = "random";  // random | constant | strip | polyhedral | file
    double amplitude = 1.0;
    std::vector<double> value;
    double sigma = 1.0;
    double lower = 0.25;
    double upper = 0.75;
    std::vector<int> inside;
    std::vector<int> outside;
    std::string path;
};

struct ExperimentConfig {
    std::string kind;
    std::uint64_t seed = 0;
    std::string source;
    std::vector<std::pair<std::string, std::string>> echo;

    KernelSpec kernel;
    DomainSpec domain;
    int m1 = 64;
    int m2 = 64;

    std::string b_set = "unit";  // unit | box | explicit groups
    std::vector<Burgers> b_list;
    RelaxationOptions relax;
    int quad_nodes = kDefaultQuadNodes;

    std::vector<double> matrix;  // row-major N x 2

    double eps = 0.01;
    std::string method = "convolution";
    MinimizeOptions minimize;
    FieldSpec field;

    std::vector<double> eps_list;
    int samples_per_eps = 4;

    double rho = 0.04;
    double alpha = 1.0 / 3.0;
    std::optional<Vec2> zeta;  // empty: choose automatically
    int zeta_candidates = 16;
    std::optional<double> margin;
};

namespace detail {

/// Relative paths in a config file are taken relative to the file's directory.
inline std::string resolve_path(const Config& c, const std::string& path) {
    if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
    const auto base = std::filesystem::path(c.source()).parent_path();
    if (base.empty() || !std::filesystem::exists(base)) return path;
    return (base / path).lexically_normal().string();
}

} // namespace detail

inline ExperimentConfig parse_experiment(const Config& c) {
    ExperimentConfig e;
    e.source = c.source();
    for (const auto& k : c.keys()) e.echo.emplace_back(k, c.find(k)->value);
    e.kind = c.get_string("experiment.kind");
    e.seed = static_cast<std::uint64_t>(c.get_int("experiment.seed", 0));

    e.kernel.type = c.get_string("kernel.type", std::string("cubic"));
    e.kernel.mu = c.get_double("kernel.mu", 4.0 * std::numbers::pi);
    e.kernel.nu = c.get_double("kernel.nu", 0.0);
    e.kernel.path = detail::resolve_path(c, c.get_string("kernel.path", std::string()));

    const std::string dk = c.get_string("domain.kind", std::string("torus"));
    if (dk != "torus" && dk != "box") throw ConfigError(c.where("domain.kind") + ": expected 'torus' or 'box'");
    e.domain = {dk == "torus" ? DomainKind::torus : DomainKind::box, c.get_double("domain.side1", 1.0),
                c.get_double("domain.side2", 1.0)};
    e.m1 = c.get_int("grid.m1", 64);
    e.m2 = c.get_int("grid.m2", e.m1);

    e.relax.b_max = c.get_int("linetension.b_max", 1);
    e.relax.n_directions = c.get_int("linetension.directions", 32);
    e.relax.max_iterations = c.get_int("linetension.max_iterations", 1000);
    e.relax.tolerance = c.get_double("linetension.tolerance", 1e-12);
    e.quad_nodes = c.get_int("linetension.quad_nodes", kDefaultQuadNodes);
    const std::string bs = c.get_string("linetension.b_set", std::string("unit"));
    if (bs == "unit" || bs == "box") {
        e.b_set = bs;
    } else {
        e.b_set = "explicit";
        for (auto& g : c.get_int_groups("linetension.b_set")) e.b_list.push_back(std::move(g));
    }

    e.matrix = c.get_doubles("envelope.matrix");

    e.eps = c.get_double("energy.eps", 0.01);
    e.method = c.get_string("energy.method", std::string("convolution"));
    e.minimize.max_iter = c.get_int("minimize.max_iter", 500);
    e.minimize.grad_tol = c.get_double("minimize.grad_tol", 1e-10);
    e.minimize.initial_step = c.get_double("minimize.initial_step", 0.0);

    e.field.type = c.get_string("field.type", std::string("random"));
    e.field.amplitude = c.get_double("field.amplitude", 1.0);
    e.field.value = c.get_doubles("field.value");
    e.field.sigma = c.get_double("field.sigma", 1.0);
    e.field.lower = c.get_double("field.lower", 0.25);
    e.field.upper = c.get_double("field.upper", 0.75);
    for (double v : c.get_doubles("field.inside")) e.field.inside.push_back(static_cast<int>(v));
    for (double v : c.get_doubles("field.outside")) e.field.outside.push_back(static_cast<int>(v));
    e.field.path = detail::resolve_path(c, c.get_string("field.path", std::string()));

    if (c.has("sweep.eps")) {
        e.eps_list = c.get_doubles("sweep.eps");
    } else if (c.has("sweep.p_min") || c.has("sweep.p_max")) {
        const int lo = c.get_int("sweep.p_min"), hi = c.get_int("sweep.p_max");
        for (int p = lo; p <= hi; ++p) e.eps_list.push_back(std::ldexp(1.0, -p));
    }
    e.samples_per_eps = c.get_int("sweep.samples_per_eps", 4);

    e.rho = c.get_double("recovery.rho", 0.04);
    e.alpha = c.get_double("recovery.alpha", 1.0 / 3.0);
    const std::string z = c.get_string("recovery.zeta", std::string("auto"));
    if (z != "auto") {
        const auto v = c.get_doubles("recovery.zeta");
        if (v.size() != 2) throw ConfigError(c.where("recovery.zeta") + ": expected 'auto' or two numbers");
        e.zeta = Vec2(v[0], v[1]);
    }
    e.zeta_candidates = c.get_int("recovery.zeta_candidates", 16);
    if (c.has("recovery.margin")) e.margin = c.get_double("recovery.margin");
    return e;
}

namespace detail {

inline Burgers to_burgers(const std::vector<int>& v) { return Burgers(v.begin(), v.end()); }

inline std::vector<Burgers> resolve_b_set(const ExperimentConfig& e, int n) {
    if (e.b_set == "explicit") return e.b_list;
    std::vector<Burgers> out;
    if (e.b_set == "unit") {
        for (int k = 0; k < n; ++k)
            for (int s : {1, -1}) {
                Burgers b(static_cast<std::size_t>(n), 0);
                b[static_cast<std::size_t>(k)] = s;
                out.push_back(b);
            }
        return out;
    }
    for (auto& b : burgers_box(n, e.relax.b_max))
        if (!is_zero(b)) out.push_back(b);
    return out;
}

inline PolyhedralField build_polyhedral(const FieldSpec& f, const DomainSpec& domain, int n) {
    if (f.type == "strip") {
        const Burgers in = f.inside.empty() ? Burgers([&] {
            Burgers b(static_cast<std::size_t>(n), 0);
            b[0] = 1;
            return b;
        }())
                                            : to_burgers(f.inside);
        const Burgers out = f.outside.empty() ? Burgers(static_cast<std::size_t>(n), 0) : to_burgers(f.outside);
        if (static_cast<int>(in.size()) != n || static_cast<int>(out.size()) != n)
            throw ConfigError("strip field values must have " + std::to_string(n) + " components");
        if (!domain.periodic()) throw ConfigError("strip fields need a torus domain");
        return strip_field(f.sigma, domain, f.lower * domain.side2, f.upper * domain.side2, in, out);
    }
    if (f.type == "polyhedral") {
        std::ifstream in(f.path);
        if (!in) throw ConfigError("cannot open polyhedral field '" + f.path + "'");
        return read_polyhedral_field(in, f.path);
    }
    throw ConfigError("field type '" + f.type + "' is not a polyhedral field (use 'strip' or 'polyhedral')");
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline GridField build_grid_field(const ExperimentConfig& e, int n) {
    const auto& f = e.field;
    if (f.type == "random") {
        std::mt19937_64 rng(e.seed);
        GridField g(e.domain, e.m1, e.m2, n);
        for (double& v : g.values()) v = f.amplitude * (2.0 * unit_uniform(rng) - 1.0);
        return g;
    }
    if (f.type == "constant") {
        if (static_cast<int>(f.value.size()) != n) throw ConfigError("field.value needs " + std::to_string(n) + " numbers");
        return GridField::constant(e.domain, e.m1, e.m2, Eigen::Map<const Vector>(f.value.data(), n));
    }
    if (f.type == "file") {
        std::ifstream in(f.path, std::ios::binary);
        if (!in) throw ConfigError("cannot open field file '" + f.path + "'");
        GridField g = read_grid_field(in, f.path);
        if (g.components() != n) throw ConfigError("field file has the wrong number of components");
        return g;
    }
    return rasterize(build_polyhedral(f, e.domain, n), e.domain, e.m1, e.m2);
}

inline int kernel_components(const ExperimentConfig& e) {
    if (e.kernel.type == "cubic") return 2;
    return e.kernel.build().components();
}

} // namespace detail

/// Every violated constraint, without running anything.
inline std::vector<std::string> validate(const ExperimentConfig& e) {
    std::vector<std::string> d;
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), e.kind) == kinds.end()) d.push_back("unknown experiment kind '" + e.kind + "'");

    int n = 2;
    if (e.kernel.type == "cubic") {
        try {
            (void)AnisotropyKernel::cubic(e.kernel.mu, e.kernel.nu);
        } catch (const Error& err) {
            d.emplace_back(err.what());
        }
    } else if (e.kernel.type == "tabulated") {
        if (!std::filesystem::exists(e.kernel.path)) {
            d.push_back("kernel table '" + e.kernel.path + "' does not exist");
        } else {
            try {
                n = AnisotropyKernel::load(e.kernel.path).components();
            } catch (const Error& err) {
                d.emplace_back(err.what());
            }
        }
    } else {
        d.push_back("kernel type must be 'cubic' or 'tabulated'");
    }

    if (!(e.domain.side1 > 0.0) || !(e.domain.side2 > 0.0)) d.emplace_back("domain sides must be positive");
    if (e.m1 <= 0 || e.m2 <= 0) d.emplace_back("grid dimensions must be positive");

    const bool lt = e.kind == "psi-table" || e.kind == "envelope";
    if (lt) {
        if (e.relax.b_max < 1) d.emplace_back("linetension.b_max must be >= 1");
        if (e.relax.n_directions < 4 || e.relax.n_directions % 2 != 0)
            d.emplace_back("linetension.directions must be an even integer >= 4");
        if (e.quad_nodes < 16) d.emplace_back("linetension.quad_nodes must be >= 16");
        for (const auto& b : e.b_list) {
            if (static_cast<int>(b.size()) != n) d.emplace_back("b_set entry has the wrong number of components");
            else if (max_norm(b) > e.relax.b_max) d.emplace_back("b_set entry exceeds linetension.b_max");
        }
        if (e.b_set == "explicit" && e.b_list.empty()) d.emplace_back("linetension.b_set is empty");
    }
    if (e.kind == "envelope" && !e.matrix.empty() && static_cast<int>(e.matrix.size()) != 2 * n)
        d.push_back("envelope.matrix needs " + std::to_string(2 * n) + " entries");

    if (e.kind == "energy" || e.kind == "minimize") {
        if (!(e.eps > 0.0)) d.emplace_back("energy.eps must be positive");
        if (e.method != "direct" && e.method != "convolution") d.emplace_back("energy.method must be 'direct' or 'convolution'");
        if (e.method == "convolution" && !e.domain.periodic()) d.emplace_back("convolution method requires a torus domain");
        if (e.kind == "minimize" && !e.domain.periodic()) d.emplace_back("minimize requires a torus domain");
        if (e.field.type == "file" && !std::filesystem::exists(e.field.path))
            d.push_back("field file '" + e.field.path + "' does not exist");
    }

    const bool sweep = e.kind == "sweep-linetension" || e.kind == "sweep-gamma";
    if (sweep) {
        if (e.eps_list.empty()) d.emplace_back("sweep eps list is empty");
        try {
            detail::check_dyadic_decreasing(e.eps_list);
        } catch (const Error& err) {
            d.emplace_back(err.what());
        }
        if (e.samples_per_eps < 4) d.emplace_back("grid policy violated: sweep.samples_per_eps must be >= 4 (h <= eps/4)");
        if (e.field.type != "strip" && e.field.type != "polyhedral")
            d.emplace_back("sweeps need field.type 'strip' or 'polyhedral'");
        if (e.field.type == "polyhedral" && !std::filesystem::exists(e.field.path))
            d.push_back("polyhedral field '" + e.field.path + "' does not exist");
        if (e.kind == "sweep-linetension" && e.field.sigma != 1.0) d.emplace_back("line-tension sweeps need field.sigma = 1");
    }
    if (e.kind == "sweep-gamma") {
        RecoveryParams p{0.0, e.rho, e.alpha, e.zeta.value_or(Vec2(0.0, 0.0)), e.margin};
        const double sigma = e.field.sigma;
        std::vector<std::string> seen;
        for (double eps : e.eps_list.empty() ? std::vector<double>{0.5} : e.eps_list) {
            p.eps = eps;
            for (auto& msg : p.diagnostics(sigma, e.domain))
                if (std::find(seen.begin(), seen.end(), msg) == seen.end()) seen.push_back(msg);
        }
        for (auto& msg : seen) d.push_back(msg);
        if (e.zeta_candidates < 1) d.emplace_back("recovery.zeta_candidates must be >= 1");
    }
    return d;
}

struct RunResult {
    std::vector<std::string> artifacts;
    nlohmann::ordered_json summary;
};

namespace detail {

inline std::string write_text(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write '" + (dir / name).string() + "'");
    out << text;
    return name;
}

inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

inline LineTensionTable experiment_table(const ExperimentConfig& e, const AnisotropyKernel& k,
                                         const std::vector<Burgers>& b_set) {
    RelaxationOptions opts = e.relax;
    return build_linetension_table(k, b_set, e.relax.n_directions, opts);
}

} // namespace detail

inline RunResult run_experiment(const ExperimentConfig& e, const std::filesystem::path& out_dir) {
    const auto diags = validate(e);
    if (!diags.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& s : diags) msg += "\n  " + s;
        throw ConfigError(msg);
    }
    std::filesystem::create_directories(out_dir);
    const AnisotropyKernel kernel = e.kernel.build();
    const int n = kernel.components();
    RunResult r;

    if (e.kind == "psi-table") {
        const auto table = detail::experiment_table(e, kernel, detail::resolve_b_set(e, n));
        std::ostringstream csv;
        write_table_csv(table, csv);
        r.artifacts.push_back(detail::write_text(out_dir, "psi_table.csv", csv.str()));
        r.summary["rows"] = table.rows.size();
        r.summary["directions"] = table.directions;
    } else if (e.kind == "envelope") {
        std::vector<Burgers> box;
        for (auto& b : burgers_box(n, e.relax.b_max))
            if (!is_zero(b)) box.push_back(b);
        const auto table = detail::experiment_table(e, kernel, box);
        const AtomSet atoms = build_atoms(table, e.relax.b_max, e.relax.n_directions);
        const double lambda_star = coercivity_constant(kernel, e.relax.n_directions, e.quad_nodes);
        const EnvelopeBounds bounds = envelope_bounds(atoms, lambda_star);
        nlohmann::ordered_json j;
        j["atoms"] = atoms.size();
        j["lambda_star"] = bounds.lambda_star;
        j["s_k"] = bounds.s_k;
        j["c_up"] = bounds.c_up;
        if (!e.matrix.empty()) {
            Matrix a(n, 2);
            for (int k = 0; k < n; ++k) {
                a(k, 0) = e.matrix[static_cast<std::size_t>(2 * k)];
                a(k, 1) = e.matrix[static_cast<std::size_t>(2 * k + 1)];
            }
            const EnvelopeValue v = g_eval(atoms, a);
            j["g"] = v.value;
            j["support_size"] = v.support.size();
            std::ostringstream csv;
            write_decomposition_csv(atoms, v, csv);
            r.artifacts.push_back(detail::write_text(out_dir, "decomposition.csv", csv.str()));
        }
        r.artifacts.push_back(detail::write_text(out_dir, "envelope.json", detail::dump(j)));
        r.summary = j;
    } else if (e.kind == "energy") {
        const GridField f = detail::build_grid_field(e, n);
        const auto method = e.method == "direct" ? EnergyMethod::direct : EnergyMethod::convolution;
        const EnergyBreakdown b = energy_eps(f, kernel, e.eps, method);
        nlohmann::ordered_json j = b.to_json();
        r.artifacts.push_back(detail::write_text(out_dir, "energy.json", detail::dump(j)));
        r.summary = j;
    } else if (e.kind == "minimize") {
        const GridField f = detail::build_grid_field(e, n);
        const MinimizeResult m = minimize(f, kernel, e.eps, e.minimize);
        std::ostringstream csv;
        csv << "iteration,energy,grad_norm,step\n";
        for (const auto& s : m.trace.steps)
            csv << s.iteration << ',' << detail::format_double(s.energy) << ',' << detail::format_double(s.grad_norm) << ','
                << detail::format_double(s.step) << '\n';
        r.artifacts.push_back(detail::write_text(out_dir, "trace.csv", csv.str()));
        nlohmann::ordered_json j = energy_eps(m.field, kernel, e.eps).to_json();
        j["converged"] = m.trace.converged;
        j["iterations"] = m.trace.steps.empty() ? 0 : m.trace.steps.back().iteration;
        r.artifacts.push_back(detail::write_text(out_dir, "minimize.json", detail::dump(j)));
        std::ostringstream field;
        write_grid_field(m.field, field);
        r.artifacts.push_back(detail::write_text(out_dir, "field.pnf", field.str()));
        r.summary = j;
    } else {
        const PolyhedralField pf = detail::build_polyhedral(e.field, e.domain, n);
        SweepOptions so;
        so.samples_per_eps = e.samples_per_eps;
        ScalingSweep s;
        nlohmann::ordered_json j;
        if (e.kind == "sweep-linetension") {
            s = sweep_linetension(pf, e.domain, e.eps_list, kernel, so);
        } else {
            RecoveryParams p{e.eps_list.front(), e.rho, e.alpha, e.zeta.value_or(Vec2(0.0, 1.0)), e.margin};
            if (!e.zeta) {
                const ZetaChoice zc = choose_zeta(pf, e.domain, p, kernel, dims_for_eps(e.domain, p.eps, so.samples_per_eps),
                                                  e.zeta_candidates);
                p.zeta = zc.zeta;
                j["zeta_proxy"] = zc.proxy;
                j["zeta_mean_proxy"] = zc.mean_proxy;
            }
            s = sweep_gamma(pf, e.domain, e.eps_list, kernel, p, so);
            j["zeta"] = {p.zeta.x(), p.zeta.y()};
        }
        std::ostringstream csv;
        write_sweep_csv(s, csv);
        r.artifacts.push_back(detail::write_text(out_dir, "sweep.csv", csv.str()));
        j["fit_a"] = s.fit.a;
        j["fit_b"] = s.fit.b;
        j["fit_residual"] = s.fit.residual;
        if (!s.records.empty()) j["target"] = s.records.back().target;
        r.artifacts.push_back(detail::write_text(out_dir, "sweep.json", detail::dump(j)));
        r.summary = j;
    }
    return r;
}

/// Config echo, versions and timing.
inline void write_manifest(const ExperimentConfig& e, const RunResult& r, double wall_seconds,
                           const std::filesystem::path& out_dir) {
    nlohmann::ordered_json m;
    m["experiment"] = e.kind;
    m["version"] = kVersion;
    m["config_source"] = e.source;
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : e.echo) cfg[k] = v;
    m["config"] = cfg;
    m["seed"] = e.seed;
    m["workers"] = workers();
    m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    m["fftw"] = std::string(fftw_version);
    m["wall_time_s"] = wall_seconds;
    m["artifacts"] = r.artifacts;
    m["summary"] = r.summary;
    detail::write_text(out_dir, "manifest.json", detail::dump(m));
}

} // namespace pnlt
