#include <lindstedt/validator.hpp>

#include <gtest/gtest.h>

using namespace lindstedt;

namespace {

std::string src(const std::string& rel) { return std::string(LINDSTEDT_SOURCE_DIR) + "/" + rel; }

Model<BigFloat> load(const std::string& name, ModelOptions o = {}) { return load_model_file<BigFloat>(src("models/" + name), o); }

std::vector<FC> amplitudes(int d) {
    std::vector<FC> c{FC(BigFloat("0.3"))};
    if (d > 1) c.push_back(FC(BigFloat("0.2"), BigFloat("0.1")));
    return c;
}

const std::vector<BigFloat>& default_grid() {
    static std::vector<BigFloat> g = log_eps_grid(-2, -3.5, 4);
    return g;
}

}  // namespace

TEST(Residual, SysASecondOrderSlope) {
    auto m = load("sysA.json");
    auto r = residual_sweep(m, solve_up_to(m, 2), amplitudes(1), default_grid());
    ASSERT_TRUE(r.slope.has_value());
    EXPECT_NEAR(*r.slope, 3.0, 0.2);
    EXPECT_TRUE(r.warnings.empty());
    ASSERT_EQ(r.residual.size(), 4u);
    for (size_t i = 1; i < r.residual.size(); ++i) EXPECT_LT(r.residual[i], r.residual[i - 1]);
}

TEST(Residual, ZeroEpsilonIsExactlyZero) {
    for (std::string name : {"sysA.json", "golden2.json", "ham1.json", "ham2.json"}) {
        auto m = load(name);
        auto r = residual_sweep(m, solve_up_to(m, 2), amplitudes(m.d()), {BigFloat(0)}, 16);
        EXPECT_EQ(r.residual[0], 0) << name;
        EXPECT_FALSE(r.slope.has_value());
    }
}

TEST(Residual, OneMoreOrderGainsAFactorEpsilon) {
    auto m = load("sysA.json");
    BigFloat eps("1e-3");
    auto r1 = residual_sweep(m, solve_up_to(m, 1), amplitudes(1), {eps});
    auto r2 = residual_sweep(m, solve_up_to(m, 2), amplitudes(1), {eps});
    BigFloat ratio = r2.residual[0] / r1.residual[0];
    EXPECT_GT(ratio, eps / 10);
    EXPECT_LT(ratio, eps * 10);
}

TEST(Residual, SlopesOnCorpus) {
    for (std::string name : {"sysA.json", "golden2.json", "ham1.json", "ham2.json"}) {
        auto m = load(name);
        int Kmax = m.d() == 1 ? 4 : 2;
        for (int K = 1; K <= Kmax; ++K) {
            auto r = residual_sweep(m, solve_up_to(m, K), amplitudes(m.d()), default_grid(), 32);
            ASSERT_TRUE(r.slope.has_value());
            EXPECT_NEAR(*r.slope, K + 1.0, 0.3) << name << " K=" << K;
        }
    }
}

TEST(Residual, EmbeddedTableMatchesRealResidual) {
    for (std::string name : {"sysA.json", "golden2.json"}) {
        auto real = load(name);
        ModelOptions o;
        o.embed_zw = true;
        auto emb = load(name, o);
        auto tr = solve_up_to(real, 3);
        auto te = solve_up_to(emb, 3);
        auto a = residual_sweep(real, tr, amplitudes(real.d()), default_grid(), 16);
        auto b = residual_sweep(real, real_view(te), amplitudes(real.d()), default_grid(), 16);
        for (size_t i = 0; i < a.residual.size(); ++i) {
            BigFloat rel = boost::multiprecision::abs(a.residual[i] - b.residual[i]) / a.residual[i];
            EXPECT_LT(rel, BigFloat("1e-60")) << name << " eps index " << i;
        }
        // and the embedded first-order equations themselves carry the same truncation order
        auto z = residual_sweep(emb, te, amplitudes(real.d()), default_grid(), 16);
        ASSERT_TRUE(z.slope.has_value());
        EXPECT_EQ(z.equations, "zw");
        EXPECT_NEAR(*z.slope, 4.0, 0.3) << name;
    }
}

TEST(Residual, WindowWarning) {
    auto m = load("sysA.json");
    auto r = residual_sweep(m, solve_up_to(m, 1), {FC(BigFloat(2))}, {BigFloat("1e-2")}, 8);
    EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Residual, SlopeNeedsFourPoints) {
    EXPECT_FALSE(loglog_slope({BigFloat(1), BigFloat(2), BigFloat(3)}, {BigFloat(1), BigFloat(4), BigFloat(9)}).has_value());
    auto s = loglog_slope({BigFloat(1), BigFloat(2), BigFloat(3), BigFloat(4)}, {BigFloat(1), BigFloat(4), BigFloat(9), BigFloat(16)});
    ASSERT_TRUE(s.has_value());
    EXPECT_NEAR(*s, 2.0, 1e-12);
}

TEST(Growth, SysARootsStayBounded) {
    auto m = load("sysA.json");
    auto t = solve_up_to(m, 6);
    auto g = growth_diagnostics(t, {FC(BigFloat("0.5"))});
    ASSERT_EQ(g.root.size(), 6u);
    for (double r : g.root) {
        EXPECT_GT(r, 0.0);
        EXPECT_LT(r, 2.0);
    }
    // no factorial trend: the late roots do not outgrow the early ones
    EXPECT_LT(g.root[5], 2 * g.root[2]);
}

TEST(Growth, ZeroTableGivesZeros) {
    SeriesTable<BigFloat> t;
    t.variant = Variant::real;
    t.d = 1;
    t.K = 3;
    t.x.assign(4, std::vector<FourierPoly<BigFloat>>(1));
    auto g = growth_diagnostics(t, {FC(BigFloat(1))});
    for (auto& a : g.a) EXPECT_EQ(a, 0);
    for (double r : g.root) EXPECT_EQ(r, 0.0);
}

TEST(Growth, DoublingAmplitudeStaysWithinGammaCubedShape) {
    auto m = load("sysA.json");
    auto t = solve_up_to(m, 6);
    auto g1 = growth_diagnostics(t, {FC(BigFloat("0.5"))});
    auto g2 = growth_diagnostics(t, {FC(BigFloat(1))});
    for (int k = 1; k <= 6; ++k) {
        BigFloat ratio = g2.a[k - 1] / g1.a[k - 1];
        EXPECT_LE(ratio, boost::multiprecision::pow(BigFloat(8), k) * BigFloat("1.000001")) << k;
    }
}
