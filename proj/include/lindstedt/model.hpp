#pragma once

#include "coeffpoly.hpp"
#include "frequency.hpp"

#include <json.hpp>

#include <array>
#include <fstream>
#include <functional>
#include <optional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace lindstedt {

struct model_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// real: x-equations with counterterm eta x; zw: complex Hamiltonian form with eta z, eta w.
enum class Variant { real, zw };

inline std::string variant_name(Variant v) { return v == Variant::real ? "real" : "zw"; }

// One monomial of a force component. slots has length d (real) or 2d (zw, interleaved s+_1, s-_1, ...).
template <class F> struct ForceTerm {
    int p = 1;
    std::vector<int> slots;
    Complex<F> coeff;
};

template <class F> struct ForceTable {
    Variant variant = Variant::real;
    int d = 1;
    // terms[j][0]: f (real) or f+ (zw); terms[j][1]: f- (zw only)
    std::vector<std::array<std::vector<ForceTerm<F>>, 2>> terms;

    int nslots() const { return variant == Variant::real ? d : 2 * d; }
    int slot_component(int t) const { return variant == Variant::real ? t : t / 2; }
    int slot_sign(int t) const { return variant == Variant::real ? 0 : (t % 2 == 0 ? 1 : -1); }
    static int slot_of(Variant v, int j, int sigma) { return v == Variant::real ? j : 2 * j + (sigma > 0 ? 0 : 1); }

    const std::vector<ForceTerm<F>>& component(int j, int sigma) const {
        return terms[j][variant == Variant::zw && sigma < 0 ? 1 : 0];
    }

    int max_p() const {
        int m = 0;
        for (auto& tj : terms)
            for (auto& side : tj)
                for (auto& t : side) m = std::max(m, t.p);
        return m;
    }

    void add(int j, int sigma, int p, std::vector<int> slots, const Complex<F>& c) {
        auto& side = terms[j][variant == Variant::zw && sigma < 0 ? 1 : 0];
        for (auto& t : side) {
            if (t.slots == slots) {
                t.coeff += c;
                return;
            }
        }
        if (!c.is_zero()) side.push_back({p, std::move(slots), c});
    }

    Complex<F> lookup(int j, int sigma, const std::vector<int>& slots) const {
        for (auto& t : component(j, sigma))
            if (t.slots == slots) return t.coeff;
        return Complex<F>(0);
    }

    void prune() {
        for (auto& tj : terms)
            for (auto& side : tj)
                side.erase(std::remove_if(side.begin(), side.end(), [](const ForceTerm<F>& t) { return t.coeff.is_zero(); }), side.end());
    }
};

// a-coefficient of the Hamiltonian perturbation, |s+| + |s-| = p + 3.
template <class F> struct HamTerm {
    int p = 0;
    std::vector<int> s_plus, s_minus;
    Complex<F> coeff;
};

template <class F> struct Model {
    std::string name;
    Variant variant = Variant::real;
    bool hamiltonian = false;
    // zw table obtained from a real system: the counterterm acts as eta (z + w) / (2 omega_j) in both equations
    bool embedded_real = false;
    FrequencySpec<F> spec;
    PsiShape psi_shape = PsiShape::smoothstep;
    std::optional<F> gamma;  // scale-partition gamma; default gamma0 / 2
    ForceTable<F> force;
    std::vector<HamTerm<F>> aterms;

    int d() const { return spec.d; }
    F partition_gamma() const { return gamma ? *gamma : spec.gamma0 / F(2); }
    ScalePartition<F> partition() const { return ScalePartition<F>(partition_gamma(), psi_shape); }
};

template <class F> ForceTable<F> derive_force_table(int d, const std::vector<HamTerm<F>>& aterms) {
    ForceTable<F> t;
    t.variant = Variant::zw;
    t.d = d;
    t.terms.resize(d);
    auto interleave = [d](const std::vector<int>& sp, const std::vector<int>& sm) {
        std::vector<int> s(2 * d);
        for (int i = 0; i < d; ++i) {
            s[2 * i] = sp[i];
            s[2 * i + 1] = sm[i];
        }
        return s;
    };
    for (auto& a : aterms) {
        for (int j = 0; j < d; ++j) {
            // f+_{j,s+,s-} = (s-_j + 1) a_{s+, s- + e_j}
            if (a.s_minus[j] > 0) {
                auto sm = a.s_minus;
                --sm[j];
                t.add(j, 1, a.p + 1, interleave(a.s_plus, sm), a.coeff * Complex<F>(long(a.s_minus[j])));
            }
            if (a.s_plus[j] > 0) {
                auto sp = a.s_plus;
                --sp[j];
                t.add(j, -1, a.p + 1, interleave(sp, a.s_minus), a.coeff * Complex<F>(long(a.s_plus[j])));
            }
        }
    }
    t.prune();
    return t;
}

inline long binomial(int n, int k) {
    long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// x_j = z_j + w_j, z_j = (x_j + x_j'/(i omega_j))/2; then f+_j = f-_j = f_j(z + w) / (2 omega_j).
template <class F> ForceTable<F> embed_real_force(const ForceTable<F>& real, const std::vector<F>& omega) {
    if (real.variant != Variant::real) throw std::invalid_argument("embedding expects a real-variant table");
    int d = real.d;
    ForceTable<F> t;
    t.variant = Variant::zw;
    t.d = d;
    t.terms.resize(d);
    for (int j = 0; j < d; ++j) {
        for (auto& term : real.terms[j][0]) {
            Complex<F> base = term.coeff / Complex<F>(F(2) * omega[j]);
            std::vector<int> a(d, 0);
            std::function<void(int, Complex<F>)> rec = [&](int i, Complex<F> c) {
                if (i == d) {
                    std::vector<int> s(2 * d);
                    for (int q = 0; q < d; ++q) {
                        s[2 * q] = a[q];
                        s[2 * q + 1] = term.slots[q] - a[q];
                    }
                    t.add(j, 1, term.p, s, c);
                    t.add(j, -1, term.p, s, c);
                    return;
                }
                for (a[i] = 0; a[i] <= term.slots[i]; ++a[i]) rec(i + 1, c * Complex<F>(binomial(term.slots[i], a[i])));
            };
            rec(0, base);
        }
    }
    t.prune();
    return t;
}

struct SymmetryReport {
    long checked = 0;
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

template <class F> SymmetryReport validate_force_symmetries(const ForceTable<F>& t) {
    SymmetryReport rep;
    if (t.variant != Variant::zw) throw std::invalid_argument("force symmetries apply to the zw variant");
    int d = t.d;
    auto split = [d](const std::vector<int>& s) {
        std::vector<int> sp(d), sm(d);
        for (int i = 0; i < d; ++i) {
            sp[i] = s[2 * i];
            sm[i] = s[2 * i + 1];
        }
        return std::make_pair(sp, sm);
    };
    auto join = [d](const std::vector<int>& sp, const std::vector<int>& sm) {
        std::vector<int> s(2 * d);
        for (int i = 0; i < d; ++i) {
            s[2 * i] = sp[i];
            s[2 * i + 1] = sm[i];
        }
        return s;
    };
    auto f = [&](int sigma, int j, const std::vector<int>& sp, const std::vector<int>& sm) { return t.lookup(j, sigma, join(sp, sm)); };
    auto key = [](const std::vector<int>& v) {
        std::string s;
        for (int x : v) s += std::to_string(x) + ",";
        return s;
    };
    auto cnt = [](int v) { return Complex<F>(long(v + 1)); };

    // conjugation: f-_{j, s+, s-} = conj(f+_{j, s-, s+})
    std::set<std::string> seen_a;
    for (int j = 0; j < d; ++j) {
        for (int sig : {1, -1}) {
            for (auto& term : t.component(j, sig)) {
                auto [sp, sm] = split(term.slots);
                auto fp = sig > 0 ? term.slots : join(sm, sp);
                if (!seen_a.insert(std::to_string(j) + "|" + key(fp)).second) continue;
                auto [pp, pm] = split(fp);
                ++rep.checked;
                if (!(f(-1, j, pm, pp) == f(1, j, pp, pm).conj()))
                    rep.violations.push_back("conjugate j=" + std::to_string(j + 1) + " s+=" + key(pp) + " s-=" + key(pm));
            }
        }
    }
    // exchange: (s+_{j2}+1) f+_{j1, s+ + e_j2, s-} = (s-_{j1}+1) f-_{j2, s+, s- + e_j1}
    std::set<std::string> seen_b;
    auto check_b = [&](int j1, int j2, std::vector<int> sp, std::vector<int> sm) {
        if (!seen_b.insert(std::to_string(j1) + "|" + std::to_string(j2) + "|" + key(sp) + "|" + key(sm)).second) return;
        ++rep.checked;
        auto spp = sp;
        ++spp[j2];
        auto smm = sm;
        ++smm[j1];
        if (!(cnt(sp[j2]) * f(1, j1, spp, sm) == cnt(sm[j1]) * f(-1, j2, sp, smm)))
            rep.violations.push_back("exchange j1=" + std::to_string(j1 + 1) + " j2=" + std::to_string(j2 + 1) + " s+=" + key(sp) + " s-=" + key(sm));
    };
    for (int j1 = 0; j1 < d; ++j1) {
        for (auto& term : t.component(j1, 1)) {
            auto [sp, sm] = split(term.slots);
            for (int j2 = 0; j2 < d; ++j2) {
                if (sp[j2] == 0) continue;
                auto q = sp;
                --q[j2];
                check_b(j1, j2, q, sm);
            }
        }
    }
    for (int j2 = 0; j2 < d; ++j2) {
        for (auto& term : t.component(j2, -1)) {
            auto [sp, sm] = split(term.slots);
            for (int j1 = 0; j1 < d; ++j1) {
                if (sm[j1] == 0) continue;
                auto q = sm;
                --q[j1];
                check_b(j1, j2, sp, q);
            }
        }
    }
    // same-sign exchange relations
    for (int sig : {1, -1}) {
        std::set<std::string> seen;
        for (int jA = 0; jA < d; ++jA) {
            for (auto& term : t.component(jA, sig)) {
                auto [sp, sm] = split(term.slots);
                auto& moved = sig > 0 ? sm : sp;
                for (int jB = 0; jB < d; ++jB) {
                    if (moved[jB] == 0) continue;
                    // term is f^sig_{jA, base + e_jB}; pair it with f^sig_{jB, base + e_jA}
                    auto bp = sp, bm = sm;
                    (sig > 0 ? bm : bp)[jB]--;
                    int j1 = std::min(jA, jB), j2 = std::max(jA, jB);
                    if (!seen.insert(std::to_string(j1) + "|" + std::to_string(j2) + "|" + key(bp) + "|" + key(bm)).second) continue;
                    ++rep.checked;
                    auto base = sig > 0 ? bm : bp;
                    auto with = [&](int jj) {
                        auto xp = bp, xm = bm;
                        (sig > 0 ? xm : xp)[jj]++;
                        return f(sig, jj == j2 ? j1 : j2, xp, xm);
                    };
                    // (base_{j2}+1) f_{j1, base+e_j2} = (base_{j1}+1) f_{j2, base+e_j1}
                    if (!(cnt(base[j2]) * with(j2) == cnt(base[j1]) * with(j1)))
                        rep.violations.push_back(std::string(sig > 0 ? "same-sign+" : "same-sign-") + " j1=" + std::to_string(j1 + 1) + " j2=" +
                                                 std::to_string(j2 + 1) + " s+=" + key(bp) + " s-=" + key(bm));
                }
            }
        }
    }
    return rep;
}

// ---- loading ----

struct ModelOptions {
    bool allow_complex_real = false;
    bool embed_zw = false;
};

template <class F> Complex<F> lift(const ExactComplex& z) { return convert<F>(z); }

inline std::vector<int> json_ints(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) throw model_error(std::string(what) + " must be an array of integers");
    std::vector<int> v;
    for (auto& x : j) {
        if (!x.is_number_integer() || x.get<int>() < 0) throw model_error(std::string(what) + " entries must be non-negative integers");
        v.push_back(x.get<int>());
    }
    return v;
}

inline ExactComplex json_scalar(const nlohmann::json& j, const char* what) {
    try {
        if (j.is_string()) return parse_scalar(j.get<std::string>());
        if (j.is_number_integer()) return ExactComplex(QuadNum(j.get<long>()));
    } catch (const std::invalid_argument& e) {
        throw model_error(std::string(what) + ": " + e.what());
    }
    throw model_error(std::string(what) + " must be a scalar string");
}

template <class F> Model<F> load_model(const nlohmann::json& js, const ModelOptions& opt = {}) {
    Model<F> m;
    try {
        m.name = js.value("name", std::string("model"));
        std::string kind = js.value("variant", std::string("real"));
        if (kind != "real" && kind != "hamiltonian") throw model_error("variant must be 'real' or 'hamiltonian'");
        m.hamiltonian = kind == "hamiltonian";
        if (!js.contains("d") || !js["d"].is_number_integer()) throw model_error("missing integer field d");
        int d = js["d"].get<int>();
        if (d < 1) throw model_error("d must be positive");
        m.spec.d = d;
        if (!js.contains("omega") || !js["omega"].is_array() || static_cast<int>(js["omega"].size()) != d)
            throw model_error("omega must list d scalars");
        for (auto& w : js["omega"]) {
            ExactComplex z = json_scalar(w, "omega");
            if (!z.im.is_zero()) throw model_error("omega must be real");
            m.spec.omega.push_back(field_traits<F>::from_quad(z.re));
        }
        m.spec.tau = js.contains("tau") ? json_scalar(js["tau"], "tau").re.rational_part() : Rational(d);
        m.spec.nu_scan_radius = js.value("nu_scan_radius", 8);
        m.spec.validate();
        if (js.contains("gamma0") && !(js["gamma0"].is_string() && js["gamma0"].get<std::string>() == "estimate")) {
            m.spec.gamma0 = field_traits<F>::from_quad(json_scalar(js["gamma0"], "gamma0").re);
            m.spec.gamma0_estimated = false;
        } else {
            m.spec.gamma0 = m.spec.estimate_gamma0(m.spec.nu_scan_radius);
        }
        if (js.contains("gamma")) m.gamma = field_traits<F>::from_quad(json_scalar(js["gamma"], "gamma").re);
        if (js.contains("psi_shape")) m.psi_shape = parse_psi_shape(js["psi_shape"].get<std::string>());
        bool allow_complex = js.value("allow_complex", opt.allow_complex_real);

        if (!js.contains("terms") || !js["terms"].is_array()) throw model_error("missing terms array");
        if (!m.hamiltonian) {
            ForceTable<F> t;
            t.variant = Variant::real;
            t.d = d;
            t.terms.resize(d);
            for (auto& term : js["terms"]) {
                int j = term.at("j").get<int>() - 1;
                int p = term.at("p").get<int>();
                auto s = json_ints(term.at("s"), "s");
                if (j < 0 || j >= d) throw model_error("term component out of range");
                if (p < 1) throw model_error("term order p must be >= 1");
                if (static_cast<int>(s.size()) != d) throw model_error("s must have d entries");
                int tot = 0;
                for (int v : s) tot += v;
                if (tot != p + 1) throw model_error("degree constraint violated: |s| = " + std::to_string(tot) + " but p + 1 = " + std::to_string(p + 1));
                ExactComplex c = json_scalar(term.at("coeff"), "coeff");
                if (!c.im.is_zero() && !allow_complex) throw model_error("complex coefficient in a real system (set allow_complex to admit it)");
                t.add(j, 1, p, s, lift<F>(c));
            }
            t.prune();
            if (opt.embed_zw) {
                m.force = embed_real_force(t, m.spec.omega);
                m.variant = Variant::zw;
                m.embedded_real = true;
            } else {
                m.force = t;
                m.variant = Variant::real;
            }
        } else {
            std::map<std::pair<std::vector<int>, std::vector<int>>, ExactComplex> table;
            for (auto& term : js["terms"]) {
                int p = term.at("p").get<int>();
                auto sp = json_ints(term.at("s_plus"), "s_plus");
                auto sm = json_ints(term.at("s_minus"), "s_minus");
                if (p < 0) throw model_error("term order p must be >= 0");
                if (static_cast<int>(sp.size()) != d || static_cast<int>(sm.size()) != d) throw model_error("s_plus/s_minus must have d entries");
                int tot = 0;
                for (int v : sp) tot += v;
                for (int v : sm) tot += v;
                if (tot != p + 3) throw model_error("degree constraint violated: |s+|+|s-| = " + std::to_string(tot) + " but p + 3 = " + std::to_string(p + 3));
                ExactComplex c = json_scalar(term.at("coeff"), "coeff");
                auto key = std::make_pair(sp, sm);
                if (table.count(key)) throw model_error("duplicate Hamiltonian term");
                table[key] = c;
                m.aterms.push_back({p, sp, sm, lift<F>(c)});
            }
            for (auto& [key, c] : table) {
                auto it = table.find({key.second, key.first});
                if (it == table.end() || !(it->second == c.conj()))
                    throw model_error("reality relation a_{s+,s-} = conj(a_{s-,s+}) violated");
            }
            m.force = derive_force_table(d, m.aterms);
            m.variant = Variant::zw;
            auto rep = validate_force_symmetries(m.force);
            if (!rep.ok()) throw std::logic_error("derived force table breaks " + rep.violations.front());
        }
    } catch (const nlohmann::json::exception& e) {
        throw model_error(std::string("malformed model: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw model_error(e.what());
    }
    return m;
}

template <class F> Model<F> load_model_file(const std::string& path, const ModelOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw model_error("cannot open model file " + path);
    nlohmann::json js;
    try {
        in >> js;
    } catch (const nlohmann::json::exception& e) {
        throw model_error("model file " + path + " is not valid JSON: " + e.what());
    }
    return load_model<F>(js, opt);
}

// Normalized JSON form of a model (exact kernel).
inline nlohmann::json serialize_model(const Model<QuadNum>& m) {
    nlohmann::json js;
    js["name"] = m.name;
    js["variant"] = m.hamiltonian ? "hamiltonian" : "real";
    js["d"] = m.spec.d;
    js["omega"] = nlohmann::json::array();
    for (auto& w : m.spec.omega) js["omega"].push_back(w.str());
    js["tau"] = m.spec.tau.str();
    js["nu_scan_radius"] = m.spec.nu_scan_radius;
    js["gamma0"] = m.spec.gamma0_estimated ? std::string("estimate") : m.spec.gamma0.str();
    if (m.gamma) js["gamma"] = m.gamma->str();
    js["psi_shape"] = m.psi_shape == PsiShape::smoothstep ? "smoothstep" : "exp-bump";
    js["terms"] = nlohmann::json::array();
    if (m.hamiltonian) {
        auto sorted = m.aterms;
        std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return std::tie(a.s_plus, a.s_minus) < std::tie(b.s_plus, b.s_minus); });
        for (auto& a : sorted) js["terms"].push_back({{"p", a.p}, {"s_plus", a.s_plus}, {"s_minus", a.s_minus}, {"coeff", a.coeff.str()}});
    } else {
        if (m.variant != Variant::real) throw model_error("cannot serialize an embedded model");
        for (int j = 0; j < m.spec.d; ++j) {
            auto terms = m.force.terms[j][0];
            std::sort(terms.begin(), terms.end(), [](auto& a, auto& b) { return a.slots < b.slots; });
            for (auto& t : terms) js["terms"].push_back({{"j", j + 1}, {"p", t.p}, {"s", t.slots}, {"coeff", t.coeff.str()}});
        }
    }
    return js;
}

}  // namespace lindstedt
