#pragma once

#include "scalar.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lindstedt {

using Mode = std::vector<int>;

inline int norm1(const Mode& nu) {
    int s = 0;
    for (int v : nu) s += v < 0 ? -v : v;
    return s;
}

inline Mode unit(int d, int j, int sigma = 1) {
    Mode e(d, 0);
    e[j] = sigma;
    return e;
}

inline Mode operator+(const Mode& a, const Mode& b) {
    Mode r(a);
    for (size_t i = 0; i < r.size(); ++i) r[i] += b[i];
    return r;
}
inline Mode operator-(const Mode& a, const Mode& b) {
    Mode r(a);
    for (size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
    return r;
}
inline Mode operator-(const Mode& a) {
    Mode r(a);
    for (auto& v : r) v = -v;
    return r;
}

inline std::string mode_str(const Mode& nu) {
    std::string s = "(";
    for (size_t i = 0; i < nu.size(); ++i) s += (i ? "," : "") + std::to_string(nu[i]);
    return s + ")";
}

// All integer vectors of dimension d with |nu| <= r, in lexicographic order.
inline std::vector<Mode> modes_within(int d, int r) {
    std::vector<Mode> out;
    Mode cur(d, 0);
    std::function<void(int, int)> rec = [&](int i, int left) {
        if (i == d) {
            out.push_back(cur);
            return;
        }
        for (int v = -left; v <= left; ++v) {
            cur[i] = v;
            rec(i + 1, left - (v < 0 ? -v : v));
        }
    };
    rec(0, r);
    return out;
}

// Exact test |x| > 2^(e/tau) for integer x >= 0, tau = p/q > 0.
inline bool exceeds_pow2(int x, int e, const Rational& tau) {
    // x^p > 2^(e q)
    BigInt p = numerator(tau), q = denominator(tau);
    unsigned pu = p.convert_to<unsigned>();
    BigInt lhs = boost::multiprecision::pow(BigInt(x), pu);
    long eq = static_cast<long>(e) * q.convert_to<long>();
    if (eq >= 0) return lhs > (BigInt(1) << static_cast<unsigned>(eq));
    return (lhs << static_cast<unsigned>(-eq)) > 1;
}

template <class F> struct FrequencySpec {
    int d = 1;
    std::vector<F> omega;
    F gamma0{1};
    bool gamma0_estimated = true;
    Rational tau{1};
    int nu_scan_radius = 8;

    F dot(const Mode& nu) const {
        F s(0);
        for (int i = 0; i < d; ++i)
            if (nu[i] != 0) s += F(nu[i]) * omega[i];
        return s;
    }

    void validate() const {
        if (d < 1 || static_cast<int>(omega.size()) != d) throw std::invalid_argument("omega must have d entries");
        for (int i = 0; i < d; ++i) {
            if (field_traits<F>::sign(omega[i]) <= 0) throw std::invalid_argument("omega entries must be positive");
            for (int k = 0; k < i; ++k)
                if (field_traits<F>::is_zero(omega[i] - omega[k])) throw std::invalid_argument("omega entries must be distinct");
        }
        if (tau <= Rational(d - 1) || tau <= 0) throw std::invalid_argument("tau must exceed d-1");
    }

    // min over 0 < |nu| <= N of |omega.nu| |nu|^tau, rounded down to a dyadic rational.
    F estimate_gamma0(int N) const {
        BigFloat best = -1;
        double t = tau.template convert_to<double>();
        for (const Mode& nu : modes_within(d, N)) {
            int n1 = norm1(nu);
            if (n1 == 0) continue;
            BigFloat v = boost::multiprecision::abs(field_traits<F>::to_bigfloat(dot(nu))) * boost::multiprecision::pow(BigFloat(n1), BigFloat(t));
            if (best < 0 || v < best) best = v;
        }
        if (best <= 0) throw std::invalid_argument("omega is resonant within the scan radius");
        BigFloat scaled = boost::multiprecision::floor(boost::multiprecision::ldexp(best, 20));
        return field_traits<F>::from_rational(Rational(scaled.convert_to<BigInt>(), BigInt(1) << 20));
    }
};

template <class F> struct SmallDivisor {
    F delta;
    int sigma;
};

// delta_j(omega.nu) with the minimizing sign; ties (omega.nu == 0) go to +.
template <class F> SmallDivisor<F> small_divisor(const FrequencySpec<F>& spec, int j, const Mode& nu) {
    using T = field_traits<F>;
    F x = spec.dot(nu);
    F a = x - spec.omega[j], b = x + spec.omega[j];
    if (T::sign(a) < 0) a = -a;
    if (T::sign(b) < 0) b = -b;
    if (T::sign(a - b) <= 0) return {a, 1};
    return {b, -1};
}

template <class F> int minimizer_sign(const FrequencySpec<F>& spec, int j, const Mode& nu) {
    return small_divisor(spec, j, nu).sigma;
}

// bar-nu = nu - sigma(nu,j) e_j.
template <class F> Mode bar_mode(const FrequencySpec<F>& spec, int j, const Mode& nu) {
    Mode b(nu);
    b[j] -= minimizer_sign(spec, j, nu);
    return b;
}

// Equal small divisors decided on the lattice: bar-nu == +-bar-nu'.
template <class F> bool equal_divisors(const FrequencySpec<F>& spec, int j, const Mode& nu, int jp, const Mode& nup) {
    Mode b = bar_mode(spec, j, nu), bp = bar_mode(spec, jp, nup);
    return b == bp || b == -bp;
}

enum class PsiShape { smoothstep, exp_bump };

inline PsiShape parse_psi_shape(const std::string& s) {
    if (s == "smoothstep" || s == "smoothstep-C1") return PsiShape::smoothstep;
    if (s == "exp-bump" || s == "exp-bump-Cinf") return PsiShape::exp_bump;
    throw std::invalid_argument("unknown psi shape '" + s + "'");
}

template <class F> struct ScaleWeight {
    int n;
    F weight;
};

template <class F> class ScalePartition {
public:
    ScalePartition() = default;
    ScalePartition(F gamma, PsiShape shape = PsiShape::smoothstep) : gamma_(std::move(gamma)), shape_(shape) {
        if (shape_ == PsiShape::exp_bump && field_traits<F>::exact)
            throw std::invalid_argument("exp-bump cutoff needs the big-float kernel");
    }

    const F& gamma() const { return gamma_; }
    PsiShape shape() const { return shape_; }

    F lo() const { return gamma_ * F(5) / F(8); }
    F hi() const { return gamma_ * F(7) / F(8); }

    F psi(const F& u) const {
        using T = field_traits<F>;
        if (T::sign(u - hi()) >= 0) return F(1);
        if (T::sign(u - lo()) <= 0) return F(0);
        F t = (u - lo()) / (hi() - lo());
        if (shape_ == PsiShape::smoothstep) return t * t * (F(3) - F(2) * t);
        return exp_bump(t);
    }

    F psi_prime(const F& u) const {
        using T = field_traits<F>;
        if (T::sign(u - hi()) >= 0 || T::sign(u - lo()) <= 0) return F(0);
        F w = hi() - lo();
        F t = (u - lo()) / w;
        if (shape_ == PsiShape::smoothstep) return F(6) * t * (F(1) - t) / w;
        return exp_bump_prime(t) / w;
    }

    F psi_n(int n, const F& u) const { return psi(pow2(n) * u); }
    F chi_n(int n, const F& u) const { return n < 0 ? F(1) : F(1) - psi_n(n, u); }
    F Psi(int n, const F& u) const { return chi_n(n - 1, u) * psi_n(n, u); }

    F Psi_prime(int n, const F& u) const {
        F dpsi = pow2(n) * psi_prime(pow2(n) * u);
        if (n == 0) return dpsi;
        F dchi = -pow2(n - 1) * psi_prime(pow2(n - 1) * u);
        return dchi * psi_n(n, u) + chi_n(n - 1, u) * dpsi;
    }

    // All n with Psi_n(delta) != 0; scale -1 when the caller flags nu = sigma e_j.
    std::vector<ScaleWeight<F>> scale_weights(const F& delta, bool resonant_flag = false) const {
        using T = field_traits<F>;
        if (resonant_flag) return {{-1, F(1)}};
        if (T::sign(delta) <= 0) throw std::domain_error("zero small divisor on a line not flagged resonant");
        int n = 0;
        while (T::sign(pow2(n) * delta - lo()) <= 0) ++n;
        std::vector<ScaleWeight<F>> out;
        for (int m = n; m <= n + 1; ++m) {
            F w = Psi(m, delta);
            if (!T::is_zero(w)) out.push_back({m, w});
        }
        return out;
    }

    static F pow2(int n) {
        F r(1);
        for (int i = 0; i < (n < 0 ? -n : n); ++i) r *= F(2);
        return n < 0 ? F(1) / r : r;
    }

private:
    static F exp_bump(const F& t) {
        if constexpr (field_traits<F>::exact) {
            throw std::logic_error("exp-bump in exact kernel");
        } else {
            F a = boost::multiprecision::exp(F(-1) / t), b = boost::multiprecision::exp(F(-1) / (F(1) - t));
            return a / (a + b);
        }
    }
    static F exp_bump_prime(const F& t) {
        if constexpr (field_traits<F>::exact) {
            throw std::logic_error("exp-bump in exact kernel");
        } else {
            F s = F(1) - t;
            F a = boost::multiprecision::exp(F(-1) / t), b = boost::multiprecision::exp(F(-1) / s);
            F da = a / (t * t), db = -b / (s * s);
            return (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
        }
    }

    F gamma_{1};
    PsiShape shape_ = PsiShape::smoothstep;
};

struct ScanReport {
    std::string lemma;
    long scanned_count = 0;
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

template <class F> ScanReport check_lemma_3_1(const FrequencySpec<F>& spec, int N) {
    ScanReport rep{"mode-separation", 0, {}};
    auto modes = modes_within(spec.d, N);
    for (const Mode& nu : modes) {
        for (const Mode& nup : modes) {
            if (nu == nup) continue;
            for (int j = 0; j < spec.d; ++j) {
                for (int jp = 0; jp < spec.d; ++jp) {
                    if (!equal_divisors(spec, j, nu, jp, nup)) continue;
                    ++rep.scanned_count;
                    int dn = norm1(nu - nup);
                    if (dn >= norm1(nu) + norm1(nup) - 2 || dn == 2) continue;
                    rep.violations.push_back("nu=" + mode_str(nu) + " j=" + std::to_string(j + 1) + " nu'=" + mode_str(nup) +
                                             " j'=" + std::to_string(jp + 1));
                }
            }
        }
    }
    return rep;
}

template <class F> struct DivisorScans {
    ScanReport separation, chains;
};

template <class F>
DivisorScans<F> check_lemma_3_2_3_4(const FrequencySpec<F>& spec, const F& gamma, int N, int n_max) {
    using T = field_traits<F>;
    DivisorScans<F> out{{"divisor-separation", 0, {}}, {"divisor-chains", 0, {}}};
    auto modes = modes_within(spec.d, N);
    struct Pt {
        Mode nu;
        int j;
        F delta;
    };
    std::vector<Pt> pts;
    for (const Mode& nu : modes)
        for (int j = 0; j < spec.d; ++j) pts.push_back({nu, j, small_divisor(spec, j, nu).delta});

    for (int n = 0; n <= n_max; ++n) {
        F bound = gamma * ScalePartition<F>::pow2(-n);
        std::vector<const Pt*> small;
        for (auto& p : pts)
            if (T::sign(p.delta - bound) <= 0) small.push_back(&p);
        for (const Pt* a : small) {
            for (const Pt* b : small) {
                if (a->nu == b->nu) continue;
                ++out.separation.scanned_count;
                int dn = norm1(a->nu - b->nu);
                if (exceeds_pow2(dn, n - 2, spec.tau)) continue;
                if (dn == 2 && equal_divisors(spec, a->j, a->nu, b->j, b->nu)) continue;
                out.separation.violations.push_back("n=" + std::to_string(n) + " nu=" + mode_str(a->nu) + " j=" + std::to_string(a->j + 1) +
                                                   " nu'=" + mode_str(b->nu) + " j'=" + std::to_string(b->j + 1));
            }
        }
    }

    // chains: connected components of the "|dnu| <= 2, equal divisor, delta <= gamma" graph
    std::vector<const Pt*> small;
    for (auto& p : pts)
        if (T::sign(p.delta - gamma) <= 0) small.push_back(&p);
    std::vector<size_t> parent(small.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<size_t(size_t)> find = [&](size_t x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    for (size_t a = 0; a < small.size(); ++a)
        for (size_t b = a + 1; b < small.size(); ++b)
            if (norm1(small[a]->nu - small[b]->nu) <= 2 && equal_divisors(spec, small[a]->j, small[a]->nu, small[b]->j, small[b]->nu))
                parent[find(a)] = find(b);
    for (size_t a = 0; a < small.size(); ++a) {
        for (size_t b = a + 1; b < small.size(); ++b) {
            if (find(a) != find(b)) continue;
            ++out.chains.scanned_count;
            if (norm1(small[a]->nu - small[b]->nu) > 2)
                out.chains.violations.push_back("nu1=" + mode_str(small[a]->nu) + " nup=" + mode_str(small[b]->nu));
        }
    }
    return out;
}

struct PartitionSweepReport {
    long points = 0;
    double max_deviation = 0;  // max |sum_{n <= n*} Psi_n(u) - 1|
    int max_multiplicity = 0;
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

// u_i = (7 gamma / 8) * (i / points) * 2^-(i mod 12), so the sweep covers twelve octaves of (0, 7 gamma / 8].
template <class F> PartitionSweepReport check_partition_of_unity(const ScalePartition<F>& part, long points, const F& tol) {
    using T = field_traits<F>;
    PartitionSweepReport rep;
    for (long i = 1; i <= points; ++i) {
        F u = part.hi() * F(i) / F(points) * ScalePartition<F>::pow2(-static_cast<int>(i % 12));
        auto ws = part.scale_weights(u);
        ++rep.points;
        rep.max_multiplicity = std::max(rep.max_multiplicity, static_cast<int>(ws.size()));
        std::string at = "u=" + T::str(u);
        if (ws.empty() || ws.size() > 2) rep.failures.push_back(at + " carries " + std::to_string(ws.size()) + " scales");
        for (auto& w : ws) {
            F lo = part.gamma() * ScalePartition<F>::pow2(-(w.n + 1)), hi = part.gamma() * ScalePartition<F>::pow2(-(w.n - 1));
            if (T::sign(u - lo) < 0 || T::sign(hi - u) < 0) rep.failures.push_back(at + " outside the window of scale " + std::to_string(w.n));
        }
        if (ws.empty()) continue;
        F sum(0);
        for (int n = 0; n <= ws.back().n; ++n) sum += part.Psi(n, u);
        F dev = abs(sum - F(1));
        rep.max_deviation = std::max(rep.max_deviation, T::to_double(dev));
        if (dev > tol) rep.failures.push_back(at + " partition deviation " + T::str(dev));
    }
    return rep;
}

// Modes nu' != nu with |nu'-nu| <= 2 sharing the small divisor of (nu, j) for some j'.
template <class F> std::vector<Mode> equal_divisor_neighbours(const FrequencySpec<F>& spec, int j, const Mode& nu) {
    std::vector<Mode> out;
    for (const Mode& dv : modes_within(spec.d, 2)) {
        if (norm1(dv) == 0) continue;
        Mode nup = nu + dv;
        for (int jp = 0; jp < spec.d; ++jp) {
            if (equal_divisors(spec, j, nu, jp, nup)) {
                out.push_back(nup);
                break;
            }
        }
    }
    return out;
}

}  // namespace lindstedt
