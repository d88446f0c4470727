#pragma once

// Report-producing pipelines shared by the command-line tool and the acceptance run.

#include "selfenergy.hpp"
#include "validator.hpp"

#include <json.hpp>

#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace lindstedt {

using Json = nlohmann::json;

struct Outcome {
    Json report;
    bool ok = true;
};

// cap on the number of failure strings copied into a report
inline constexpr size_t kMaxListed = 50;

inline Json listed(const std::vector<std::string>& v) {
    Json a = Json::array();
    for (size_t i = 0; i < v.size() && i < kMaxListed; ++i) a.push_back(v[i]);
    return a;
}

inline Json mode_json(const Mode& nu) {
    Json a = Json::array();
    for (int x : nu) a.push_back(x);
    return a;
}

inline std::string sign_str(int s) { return s > 0 ? "+" : "-"; }

template <class F> Json table_json(const Model<F>& m, const SeriesTable<F>& t) {
    Json js;
    js["model"] = m.name;
    js["variant"] = variant_name(t.variant);
    js["kernel"] = field_traits<F>::exact ? "exact" : "float";
    js["d"] = t.d;
    js["K"] = t.K;
    Json x = Json::array();
    for (int k = 0; k <= t.K; ++k)
        for (int f = 0; f < t.nfields(); ++f)
            for (auto& [nu, p] : t.x[k][f]) {
                Json e{{"k", k}, {"nu", mode_json(nu)}, {"value", p.str()}};
                if (t.variant == Variant::real) {
                    e["j"] = f + 1;
                } else {
                    e["j"] = f / 2 + 1;
                    e["sigma"] = sign_str(f % 2 == 0 ? 1 : -1);
                }
                x.push_back(std::move(e));
            }
    js["x"] = std::move(x);
    Json eta = Json::array();
    for (int k = 1; k <= t.K; ++k)
        for (int j = 0; j < t.d; ++j)
            for (int s = 0; s < 2; ++s) eta.push_back({{"k", k}, {"j", j + 1}, {"sigma", sign_str(s == 0 ? 1 : -1)}, {"value", t.eta[k][j][s].str()}});
    js["eta"] = std::move(eta);
    js["consistency_failures"] = listed(t.consistency_failures);
    return js;
}

template <class F> Outcome run_expand(const Model<F>& m, int K) {
    auto t = solve_up_to(m, K);
    return {table_json(m, t), t.consistency_failures.empty()};
}

// Counterterm structure: modulus-only real polynomials, and eta+ = eta- (real) or eta+ = conj(eta-) (zw).
template <class F> Outcome run_eta(const Model<F>& m, int K) {
    auto t = solve_up_to(m, K);
    Outcome out;
    Json rows = Json::array();
    std::vector<std::string> failures = t.consistency_failures;
    for (int k = 1; k <= K; ++k)
        for (int j = 0; j < t.d; ++j) {
            const auto& ep = t.eta[k][j][0];
            const auto& em = t.eta[k][j][1];
            bool modulus = ep.is_modulus_only() && em.is_modulus_only();
            bool real = ep == ep.conj();
            bool pair = t.variant == Variant::real ? ep == em : ep == em.conj();
            std::string at = "k=" + std::to_string(k) + " j=" + std::to_string(j + 1);
            if (!modulus) failures.push_back(at + ": not a polynomial in c+ c- products");
            if (!real) failures.push_back(at + ": coefficients not real");
            if (!pair) failures.push_back(at + (t.variant == Variant::real ? ": eta+ != eta-" : ": eta+ != conj(eta-)"));
            rows.push_back({{"k", k}, {"j", j + 1}, {"eta_plus", ep.str()}, {"eta_minus", em.str()}, {"modulus_only", modulus}, {"real", real}, {"paired", pair}});
        }
    out.report = {{"model", m.name}, {"variant", variant_name(t.variant)}, {"K", K}, {"eta", rows}, {"failures", listed(failures)}, {"failure_count", failures.size()}};
    out.ok = failures.empty();
    return out;
}

// Tree sums against the direct solver for every (k, j, nu) with |nu| <= 3k, plus a sibling-shuffle check of the canonical form.
template <class F> Outcome run_verify_trees(const Model<F>& m, int K, unsigned seed) {
    auto table = solve_up_to(m, K);
    TreeEnumerator<F> e(m);
    int d = m.d();
    bool real = m.variant == Variant::real;
    std::vector<int> signs = real ? std::vector<int>{0} : std::vector<int>{1, -1};
    std::vector<std::string> mismatches, canon;
    long checked = 0, shuffled = 0;
    Json classes = Json::object();
    std::mt19937 rng(seed);
    for (int k = 1; k <= K; ++k) {
        long count = 0;
        for (int j = 0; j < d; ++j)
            for (int s : signs)
                for (auto& nu : modes_within(d, 3 * k)) {
                    auto tree = coefficient_from_trees(e, m, k, j, nu, s);
                    CoeffPoly<F> want(d);
                    if (real) {
                        want = nu == unit(d, j, 1) ? table.eta_plus(k, j) : nu == unit(d, j, -1) ? table.eta_minus(k, j) : table.coeff(k, j, nu);
                    } else {
                        int field = 2 * j + (s > 0 ? 0 : 1);
                        want = nu == unit(d, j, s) ? table.eta[k][j][s > 0 ? 0 : 1] : table.coeff(k, field, nu);
                    }
                    ++checked;
                    if (tree != want) {
                        std::string at = "k=" + std::to_string(k) + " j=" + std::to_string(j + 1) + (real ? "" : " sigma=" + sign_str(s)) + " nu=" + mode_str(nu);
                        mismatches.push_back(at + ": trees " + tree.str() + " vs solver " + want.str());
                    }
                    int sigma = real ? minimizer_sign(m.spec, j, nu) : s;
                    for (auto& c : e.trees(k, j, nu, sigma)) {
                        ++count;
                        auto again = canonicalize(shuffle_children(c.root, rng));
                        ++shuffled;
                        if (again->key != c.key()) canon.push_back("class " + c.key() + " changed key after a sibling shuffle");
                    }
                }
        classes[std::to_string(k)] = count;
    }
    Outcome out;
    out.ok = mismatches.empty() && canon.empty();
    out.report = {{"model", m.name},
                  {"variant", variant_name(m.variant)},
                  {"K", K},
                  {"checked", checked},
                  {"match", mismatches.empty() ? "all (k,j,nu)" : std::to_string(mismatches.size()) + " mismatches"},
                  {"mismatches", listed(mismatches)},
                  {"tree_classes", classes},
                  {"seed", seed},
                  {"shuffled_classes", shuffled},
                  {"canonical_form_failures", listed(canon)}};
    return out;
}

inline Json identity_json(const IdentityReport& r) {
    return {{"name", r.name}, {"checked", r.checked}, {"nontrivial", r.nontrivial}, {"failure_count", r.failures.size()}, {"failures", listed(r.failures)}, {"ok", r.ok()}};
}

template <class F> Outcome run_verify_symmetry(const Model<F>& m, int K, int n, const LocalizeOptions& opt) {
    auto rep = verify_symmetry_lemmas(m, K, n, opt);
    Json ids = Json::array();
    for (auto& r : rep.identities) ids.push_back(identity_json(r));
    Outcome out;
    out.ok = rep.ok();
    out.report = {{"model", m.name},
                  {"variant", variant_name(m.variant)},
                  {"K", K},
                  {"scale", n},
                  {"force_localize", opt.force},
                  {"clusters", rep.clusters},
                  {"identities", ids},
                  {"membership_failures", listed(rep.membership_failures)}};
    return out;
}

inline Json pair_gain_json(const PairGainReport& r, int j) {
    Json rows = Json::array();
    for (auto& x : r.rows)
        rows.push_back({{"n", x.n}, {"samples", x.samples}, {"max_pair_sum", x.max_sum}, {"min_single", x.min_single}, {"ratio", x.ratio},
                        {"identity_error", x.max_identity}, {"derivative_identity_error", x.max_didentity}});
    return {{"j", j + 1}, {"bound", r.bound}, {"gain_const", r.gain_const}, {"rows", rows}, {"failures", listed(r.failures)}, {"ok", r.ok()}};
}

// Matrix chains (zw models only) over scales [0, n_hi] and the propagator-pair sweep for every component.
template <class F> Outcome run_verify_cancellation(const Model<F>& m, const Model<BigFloat>& mf, int K, int n_hi, const LocalizeOptions& opt, int gain_lo = 4,
                                                   int gain_hi = 12, int samples = 1000) {
    Outcome out;
    out.report = {{"model", m.name}, {"variant", variant_name(m.variant)}, {"K", K}, {"scale", n_hi}, {"force_localize", opt.force}};
    if (m.variant == Variant::zw && !m.embedded_real) {
        auto rep = verify_matrix_cancellation(m, K, 0, n_hi, opt);
        out.report["matrix"] = {{"products", rep.products}, {"nontrivial", rep.nontrivial}, {"failures", listed(rep.failures)}, {"ok", rep.ok()}};
        out.ok = out.ok && rep.ok() && rep.nontrivial > 0;
    } else {
        out.report["matrix"] = {{"skipped", "matrix chains are defined for Hamiltonian (zw) models"}};
    }
    Json gains = Json::array();
    for (int j = 0; j < mf.d(); ++j) {
        auto g = verify_pair_gain(mf, j, gain_lo, gain_hi, samples);
        gains.push_back(pair_gain_json(g, j));
        out.ok = out.ok && g.ok();
    }
    out.report["propagator_pair"] = gains;
    return out;
}

template <class F> Outcome run_verify_counting(const Model<F>& m, int K) {
    auto rep = verify_counting(m, K);
    Json by = Json::object();
    for (auto& [k, v] : rep.sup_by_order) by[std::to_string(k)] = v;
    Outcome out;
    out.ok = rep.ok() && std::isfinite(rep.sup_ratio);
    out.report = {{"model", m.name},
                  {"K", K},
                  {"scaled_trees", rep.trees},
                  {"self_energy_clusters", rep.self_energy_clusters},
                  {"resonant_lines", rep.resonant_lines},
                  {"sup_ratio", rep.sup_ratio},
                  {"sup_scale", rep.sup_n},
                  {"sup_by_order", by},
                  {"resonant_support", {{"checked", rep.resonant_support_checked}, {"failures", listed(rep.resonant_support_failures)}}},
                  {"path_displacement", {{"checked", rep.path_displacement_checked}, {"E1", 4}, {"failures", listed(rep.path_displacement_failures)}}},
                  {"chain_displacement", {{"checked", rep.chain_displacement_checked}, {"E2", 7}, {"failures", listed(rep.chain_displacement_failures)}}}};
    return out;
}

inline Json scan_json(const ScanReport& r) {
    return {{"lemma", r.lemma}, {"scanned_count", r.scanned_count}, {"violations", listed(r.violations)}, {"violation_count", r.violations.size()}};
}

template <class F> Outcome run_divisors(const Model<F>& m, int radius, int n_max) {
    auto sep = check_lemma_3_1(m.spec, radius);
    auto sc = check_lemma_3_2_3_4(m.spec, m.partition_gamma(), radius, n_max);
    Outcome out;
    out.ok = sep.ok() && sc.separation.ok() && sc.chains.ok();
    size_t total = sep.violations.size() + sc.separation.violations.size() + sc.chains.violations.size();
    out.report = {{"model", m.name},
                  {"radius", radius},
                  {"n_max", n_max},
                  {"gamma", field_traits<F>::str(m.partition_gamma())},
                  {"scans", Json::array({scan_json(sep), scan_json(sc.separation), scan_json(sc.chains)})},
                  {"violations", total}};
    return out;
}

inline std::string residual_csv(const ResidualReport& r) {
    std::ostringstream os;
    os << "epsilon,residual";
    size_t nc = r.per_component.empty() ? 0 : r.per_component[0].size();
    for (size_t i = 0; i < nc; ++i) {
        if (r.equations == "real")
            os << ",x" << i + 1;
        else
            os << "," << (i % 2 == 0 ? "z" : "w") << i / 2 + 1;
    }
    os << "\n";
    for (size_t g = 0; g < r.eps.size(); ++g) {
        os << r.eps[g].str(20, std::ios_base::scientific) << "," << r.residual[g].str(20, std::ios_base::scientific);
        for (auto& v : r.per_component[g]) os << "," << v.str(20, std::ios_base::scientific);
        os << "\n";
    }
    return os.str();
}

}  // namespace lindstedt
