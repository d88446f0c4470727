#include <lindstedt/selfenergy.hpp>

#include <gtest/gtest.h>

#include <map>

using namespace lindstedt;
using Q = QuadNum;
using C = ExactComplex;
using P = CoeffPoly<Q>;

namespace {

std::string src(const std::string& rel) { return std::string(LINDSTEDT_SOURCE_DIR) + "/" + rel; }

template <class F = Q> Model<F> load(const std::string& name) { return load_model_file<F>(src("models/" + name)); }

P sym(int d, int j, int s) { return P::symbol(d, j, s); }

LocalizeOptions forced() {
    LocalizeOptions o;
    o.force = true;
    return o;
}

// d = 1 node with a formal scale label
NodePtr node(NodeKind kind, int nu, int scale, std::vector<NodePtr> children = {}, int sigma_node = 0) {
    TreeNode n;
    n.kind = kind;
    n.j = 0;
    n.nu = Mode{nu};
    n.sigma_node = sigma_node;
    n.sigma_line = nu < 0 ? -1 : 1;
    n.k = kind == NodeKind::internal ? 1 : 0;
    n.scale = scale;
    n.children = std::move(children);
    return finish_node(std::move(n));
}

NodePtr end(int s, int scale) { return node(NodeKind::end, s, scale, {}, s); }

int line_with(const ClusterDecomposition& dec, int nu, int scale) {
    for (size_t v = 0; v < dec.flat.size(); ++v)
        if (dec.flat[v].node->nu == Mode{nu} && dec.flat[v].node->scale == scale) return static_cast<int>(v);
    return -1;
}

// Root line nu=1 (scale 5) over a node whose subtree holds a scale-3 line with nu=0, a scale-2 end line,
// and a second nu=1 line on scale 5 entering from below.
NodePtr stacked_tree(int inner_end_scale) {
    auto bottom = node(NodeKind::internal, 1, 5, {end(1, -1), node(NodeKind::internal, 0, -1, {end(1, -1), end(-1, -1)})});
    auto mid = node(NodeKind::internal, 0, 3, {bottom, end(-1, inner_end_scale)});
    return node(NodeKind::internal, 1, 5, {mid, end(1, -1)});
}

Q q(const char* s) { return parse_scalar(s).re; }

// key of the E-class cluster built over a resonant tree
std::string theta_key(const NodePtr& theta, int j, int s) {
    int d = static_cast<int>(theta->nu.size());
    TreeNode leg;
    leg.kind = NodeKind::leg;
    leg.j = j;
    leg.sigma_node = leg.sigma_line = s;
    leg.nu = Mode(d, 0);
    TreeNode z;
    z.kind = NodeKind::zero;
    z.j = j;
    z.sigma_node = z.sigma_line = s;
    z.nu = Mode(d, 0);
    z.children = {theta, finish_node(std::move(leg))};
    return finish_node(std::move(z))->key;
}

}  // namespace

TEST(Clusters, SingleScaleTreeHasOneClusterAndNoSelfEnergy) {
    auto m = load("sysA.json");
    auto t = node(NodeKind::internal, 2, 1, {end(1, -1), end(1, -1)});
    auto dec = detect_clusters(m, t);
    ASSERT_EQ(dec.clusters.size(), 1u);
    EXPECT_EQ(dec.clusters[0].scale, -1);
    EXPECT_EQ(dec.clusters[0].nodes.size(), 3u);
    EXPECT_TRUE(dec.clusters[0].entering.empty());
    EXPECT_TRUE(dec.self_energy.empty());
    EXPECT_TRUE(dec.resonant_lines.empty());
}

TEST(Clusters, StackedScalesGiveOneSelfEnergyClusterWithOnePathLine) {
    auto m = load("sysA.json");
    auto dec = detect_clusters(m, stacked_tree(2));
    std::map<int, int> per_scale;
    for (auto& c : dec.clusters) ++per_scale[c.scale];
    // scale -1: root pair and the bottom block; 2: the end-line pair; 3: root, mid and their ends; 5: everything
    EXPECT_EQ(per_scale[-1], 2);
    EXPECT_EQ(per_scale[2], 1);
    EXPECT_EQ(per_scale[3], 1);
    EXPECT_EQ(per_scale[5], 1);
    ASSERT_EQ(dec.self_energy.size(), 1u);
    const Cluster& T = dec.clusters[dec.self_energy[0]];
    EXPECT_EQ(T.scale, 3);
    EXPECT_EQ(T.n_T, 5);
    EXPECT_EQ(T.nodes.size(), 4u);
    EXPECT_EQ(T.exiting, 0);
    ASSERT_EQ(T.entering.size(), 1u);
    EXPECT_NE(T.entering[0], 0);
    EXPECT_EQ(dec.flat[T.entering[0]].node->nu, Mode{1});
    EXPECT_EQ(dec.flat[T.entering[0]].node->scale, 5);
    ASSERT_EQ(T.path.size(), 1u);
    EXPECT_EQ(T.path[0], line_with(dec, 0, 3));
    EXPECT_FALSE(T.e_class);
    EXPECT_EQ(T.depth, 1);
    EXPECT_EQ(ring_order(dec, T), 2);
    // l_T and l_T' bound only this one cluster, so neither is shared between two
    EXPECT_TRUE(dec.resonant_lines.empty());
}

TEST(Clusters, InternalLineTooCloseToExternalScaleBreaksSelfEnergy) {
    auto m = load("sysA.json");
    // the scale-4 end line sits inside the would-be cluster and exceeds n_T - 2 = 3
    auto dec = detect_clusters(m, stacked_tree(4));
    EXPECT_TRUE(dec.self_energy.empty());
    bool found = false;
    for (auto& c : dec.clusters)
        if (c.scale == 4 && c.entering.size() == 1) found = true;
    EXPECT_TRUE(found);
}

TEST(Clusters, UnscaledTreeRejected) {
    auto m = load("sysA.json");
    auto t = make_end(1, 0, 1);
    auto root = node(NodeKind::internal, 2, 1, {t, t});
    EXPECT_THROW(detect_clusters(m, root), std::invalid_argument);
}

TEST(SelfEnergy, SysAHasNoOddOrderClusters) {
    auto m = load("sysA.json");
    for (int k : {1, 3})
        for (int s : {1, -1})
            for (int sp : {1, -1}) EXPECT_TRUE(enumerate_self_energy(m, k, 0, s, 0, sp).empty()) << "k=" << k;
    EXPECT_FALSE(enumerate_self_energy(m, 2, 0, 1, 0, 1).empty());
}

TEST(SelfEnergy, EClassValueIsMinusHalfThetaOverAmplitude) {
    for (std::string name : {"sysA.json", "golden2.json", "ham1.json", "ham2.json"}) {
        auto m = load(name);
        int d = m.d();
        long seen = 0;
        for (int j = 0; j < d; ++j)
            for (int s : {1, -1})
                for (auto& T : enumerate_self_energy(m, 2, j, s, j, s)) {
                    if (!T.e_class) continue;
                    ++seen;
                    auto theta = theta_of(T);
                    P expect = tree_value(m, theta).divide_symbol(j, s).scaled(C(parse_scalar("-1/2")));
                    P v1 = se_value(m, T, q("1/3"), kNoCutoff);
                    P v2 = se_value(m, T, q("-7/5"), kNoCutoff);
                    EXPECT_EQ(v1, expect) << name << " " << T.key();
                    EXPECT_EQ(v1, v2) << name << " " << T.key();
                    EXPECT_TRUE(regularize(m, T, q("2/7"), 3, forced()).is_zero());
                }
        EXPECT_GT(seen, 0) << name;
    }
}

TEST(SelfEnergy, LocalizedPlusRegularizedIsValue) {
    auto m = load("golden2.json");
    Q u = q("9/10");
    for (int sp : {1, -1})
        for (auto& T : enumerate_self_energy(m, 2, 0, 1, 1, sp)) {
            for (auto opt : {forced(), LocalizeOptions{}}) {
                P L = localize(m, T, 3, opt), R = regularize(m, T, u, 3, opt);
                EXPECT_EQ(L + R, se_value(m, T, u, 3));
            }
        }
}

TEST(SelfEnergy, SizeCutoffBoundaryIsExact) {
    auto m = load("sysA.json");  // tau = 1
    // 4k > 2^(n_T - 8) decides; k = 2 flips between n_T = 10 and 11
    EXPECT_FALSE(within_size_cutoff(m, 2, 10));
    EXPECT_TRUE(within_size_cutoff(m, 2, 11));
    EXPECT_FALSE(within_size_cutoff(m, 3, 11));
    auto cls = enumerate_self_energy(m, 2, 0, 1, 0, 1);
    bool nonzero = false;
    for (auto& T : cls) {
        LocalizeOptions lo, hi;
        lo.n_T = 10;
        hi.n_T = 11;
        EXPECT_TRUE(localize(m, T, 3, lo).is_zero());
        EXPECT_EQ(localize(m, T, 3, hi), localize(m, T, 3, forced()));
        if (!localize(m, T, 3, hi).is_zero()) nonzero = true;
    }
    EXPECT_TRUE(nonzero);
}

TEST(SelfEnergy, ResonantPathLineAtConcreteLegMomentumKillsLocalization) {
    auto m = load("sysA.json");
    const SECluster<Q>* target = nullptr;
    auto cls = enumerate_self_energy(m, 2, 0, 1, 0, 1);
    for (auto& T : cls)
        if (T.key().find("v1k1|(-1)+[L1+") != std::string::npos) target = &T;
    ASSERT_NE(target, nullptr);
    LocalizeOptions o = forced();
    P plain = localize(m, *target, 3, o);
    EXPECT_FALSE(plain.is_zero());
    o.leg_momentum = Mode{1};
    EXPECT_EQ(localize(m, *target, 3, o), plain);
    // offset -1 plus leg momentum 2 puts the interior path line on e_1
    o.leg_momentum = Mode{2};
    EXPECT_TRUE(path_has_resonant_line(*target, Mode{2}));
    EXPECT_TRUE(localize(m, *target, 3, o).is_zero());
}

TEST(SelfEnergy, RegularizationMatchesQuadratureOfDerivative) {
    auto m = load<BigFloat>("sysA.json");
    BigFloat u = BigFloat(1) - boost::multiprecision::ldexp(BigFloat(1), -6);
    int checked = 0;
    for (auto& T : enumerate_self_energy(m, 2, 0, 1, 0, 1)) {
        auto q = regularize_by_quadrature(m, T, u, 3);
        if (q.direct == 0) continue;
        ++checked;
        EXPECT_LT(q.rel_error, BigFloat("1e-20")) << T.key();
    }
    EXPECT_GE(checked, 2);
}

TEST(SelfEnergy, ExactAndFloatKernelsAgree) {
    auto mq = load("golden2.json");
    auto mb = load<BigFloat>("golden2.json");
    auto cq = enumerate_self_energy(mq, 2, 0, 1, 1, -1);
    auto cb = enumerate_self_energy(mb, 2, 0, 1, 1, -1);
    ASSERT_EQ(cq.size(), cb.size());
    ASSERT_FALSE(cq.empty());
    std::vector<FloatComplex> c{{BigFloat("0.3"), BigFloat("0.1")}, {BigFloat("-0.2"), BigFloat("0.5")}};
    for (size_t i = 0; i < cq.size(); ++i) {
        ASSERT_EQ(cq[i].key(), cb[i].key());
        auto a = localize(mq, cq[i], 2, forced()).eval(c);
        auto b = localize(mb, cb[i], 2, forced()).eval(c);
        EXPECT_LT(abs(a - b), BigFloat("1e-60")) << cq[i].key();
    }
}

// Sewing a non-E-class cluster back gives a resonant tree with a marked end node; cutting every admissible
// marked end node of every resonant tree must reproduce those clusters with the same multiplicities.
// E-class clusters are a zero node over a resonant tree and the leg, one per resonant tree.
TEST(SelfEnergy, EnumerationMatchesCuttingResonantTrees) {
    for (std::string name : {"sysA.json", "golden2.json", "ham1.json", "ham2.json"}) {
        auto m = load(name);
        int d = m.d();
        TreeEnumerator<Q> te(m);
        int kmax = d == 1 ? 3 : 2;
        for (int k = 1; k <= kmax; ++k)
            for (int j = 0; j < d; ++j)
                for (int s : {1, -1})
                    for (int jp = 0; jp < d; ++jp)
                        for (int sp : {1, -1}) {
                            std::map<std::string, long> want, want_e;
                            for (auto& T : enumerate_self_energy(m, k, j, s, jp, sp)) (T.e_class ? want_e : want)[T.key()] += T.multiplicity;
                            std::map<std::string, long> got, got_e;
                            Mode shift = unit(d, jp, sp);
                            const auto& resonant = te.subtrees(k, j, s, unit(d, j, s));
                            if (j == jp && s == sp)
                                for (auto& cls : resonant) got_e[theta_key(cls.root, j, s)] += 2 * cls.multiplicity;
                            for (auto& cls : resonant)
                                for (auto& pos : pruned_end_positions(cls.root, jp, sp)) {
                                    auto T = cut<Q>(cls.root, pos);
                                    bool ok = true;
                                    std::function<void(const TreeNode&, bool)> walk = [&](const TreeNode& n, bool top) {
                                        if (!n.path || n.kind == NodeKind::leg) return;
                                        Mode mu = n.nu + shift;
                                        if (!top && (mu == unit(d, n.j, 1) || mu == unit(d, n.j, -1))) ok = false;
                                        if (!top && n.kind == NodeKind::zero)
                                            for (auto& c : n.children)
                                                if (c->kind == NodeKind::leg) ok = false;
                                        for (auto& c : n.children) walk(*c, false);
                                    };
                                    walk(*T.top, true);
                                    if (ok) got[T.key()] += cls.multiplicity;
                                }
                            std::map<std::string, long> want_theta;
                            for (auto& [key, mult] : want_e) want_theta[key] = mult;
                            std::string at = name + " k=" + std::to_string(k) + " j=" + std::to_string(j) + " s=" + std::to_string(s) +
                                             " jp=" + std::to_string(jp) + " sp=" + std::to_string(sp);
                            EXPECT_EQ(got, want) << at;
                            EXPECT_EQ(got_e, want_theta) << at;
                        }
    }
}

TEST(SelfEnergy, EndNodeBalance) {
    for (std::string name : {"sysA.json", "golden2.json", "ham1.json", "ham2.json"}) {
        auto m = load(name);
        int d = m.d();
        for (int j = 0; j < d; ++j)
            for (int s : {1, -1})
                for (int jp = 0; jp < d; ++jp)
                    for (int sp : {1, -1})
                        for (auto& T : enumerate_self_energy(m, 2, j, s, jp, sp)) EXPECT_EQ(check_end_node_relations(T, d), "") << name << " " << T.key();
    }
}

TEST(SelfEnergy, EmbeddedRealSystemRejected) {
    auto m = load("sysA.json");
    ModelOptions o;
    o.embed_zw = true;
    auto e = load_model_file<Q>(src("models/sysA.json"), o);
    ASSERT_TRUE(e.embedded_real);
    EXPECT_THROW(enumerate_self_energy(e, 2, 0, 1, 0, 1), std::invalid_argument);
}

TEST(Families, IdentitiesOnD2RealModel) {
    auto m = load("golden2.json");
    auto rep = verify_symmetry_lemmas(m, 2, 3, forced());
    EXPECT_TRUE(rep.membership_failures.empty());
    for (auto& r : rep.identities) {
        EXPECT_TRUE(r.ok()) << r.name << ": " << (r.failures.empty() ? "" : r.failures[0]);
        EXPECT_GT(r.nontrivial, 0) << r.name;
    }
}

TEST(Families, IdentitiesOnD2Hamiltonian) {
    auto m = load("ham2.json");
    auto rep = verify_symmetry_lemmas(m, 2, 3, forced());
    EXPECT_TRUE(rep.membership_failures.empty());
    std::map<std::string, const IdentityReport*> by;
    for (auto& r : rep.identities) by[r.name] = &r;
    for (std::string name : {"E-class single cut", "E-class F1/F2", "leg flip G1/G2", "G1/G3 conjugated", "G1/G3 summed over labels"}) {
        ASSERT_TRUE(by.count(name)) << name;
        EXPECT_TRUE(by[name]->ok()) << name << ": " << (by[name]->failures.empty() ? "" : by[name]->failures[0]);
        EXPECT_GT(by[name]->nontrivial, 0) << name;
    }
}

// Cluster by cluster the G1/G3 sides are complex conjugates, not equal; only the label-summed form is exact.
TEST(Families, G1G3PerClusterHoldsOnlyUpToConjugation) {
    auto m = load("ham2.json");
    auto rep = verify_symmetry_lemmas(m, 2, 3, forced());
    const IdentityReport* r = nullptr;
    for (auto& x : rep.identities)
        if (x.name == "G1/G3") r = &x;
    ASSERT_NE(r, nullptr);
    EXPECT_EQ(r->checked, 48);
    EXPECT_EQ(r->failures.size(), 16u);
}

TEST(Families, IdentitiesOnD1Models) {
    for (std::string name : {"sysA.json", "ham1.json"}) {
        auto rep = verify_symmetry_lemmas(load(name), 2, 3, forced());
        EXPECT_TRUE(rep.membership_failures.empty()) << name;
        for (auto& r : rep.identities)
            if (r.name.rfind("E-class", 0) == 0) EXPECT_TRUE(r.ok()) << name << " " << r.name;
    }
}

TEST(Matrices, LocalizedEntriesFactorize) {
    for (std::string name : {"sysA.json", "golden2.json", "ham1.json", "ham2.json"}) {
        auto m = load(name);
        for (int n : {0, 3}) {
            auto M = build_matrix(m, 2, n, forced());
            EXPECT_TRUE(M.factorizes()) << name << " " << (M.factorization_failures.empty() ? "" : M.factorization_failures[0]);
            for (auto& row : M.reduced)
                for (auto& e : row) EXPECT_TRUE(e.is_modulus_only()) << name << " " << e.str();
        }
    }
}

TEST(Matrices, OneDimensionalHamiltonianShape) {
    auto m = load("ham1.json");
    auto M = build_matrix(m, 2, 3, forced());
    ASSERT_TRUE(M.factorizes());
    const P& r = M.reduced[0][0];
    EXPECT_FALSE(r.is_zero());
    P cp = sym(1, 0, 1), cm = sym(1, 0, -1);
    EXPECT_EQ(M.entries[0][0], r * cp * cm);
    EXPECT_EQ(M.entries[0][1], r * cp * cp);
    EXPECT_EQ(M.entries[1][0], r * cm * cm);
    EXPECT_EQ(M.entries[1][1], r * cp * cm);
}

TEST(Matrices, ChainsOfTwoVanish) {
    for (std::string name : {"ham1.json", "ham2.json"}) {
        auto rep = verify_matrix_cancellation(load(name), 2, 0, 7, forced());
        EXPECT_TRUE(rep.ok()) << name << " " << (rep.failures.empty() ? "" : rep.failures[0]);
        EXPECT_GT(rep.nontrivial, 0) << name;
    }
}

TEST(Matrices, SignMatrixIsNeeded) {
    // without diag(sigma) the same product does not vanish
    auto m = load("ham1.json");
    auto M = build_matrix(m, 2, 0, forced());
    P plain(1);
    for (int c = 0; c < 2; ++c) plain += M.entries[0][c] * M.entries[c][0];
    EXPECT_FALSE(plain.is_zero());
    auto chained = chain_product(M, M, Q(1));
    EXPECT_TRUE(chained[0][0].is_zero());
}

TEST(PropagatorPair, SumEqualsSingleFractionExactly) {
    auto m = load("golden2.json");
    auto part = m.partition();
    const Q& w = m.spec.omega[1];
    for (int n : {2, 5})
        for (int sigma : {1, -1})
            for (const char* frac : {"5/8", "3/4", "7/8", "1", "5/4", "3/2", "27/16"})
                for (int side : {1, -1}) {
                    Q delta = part.gamma() * ScalePartition<Q>::pow2(-n) * q(frac);
                    Q x = Q(sigma) * w + Q(side) * delta;
                    auto r = propagator_pair(part, n, w, sigma, x);
                    EXPECT_EQ(r.sum, r.collapsed) << n << " " << frac;
                    EXPECT_EQ(r.dsum, r.dcollapsed) << n << " " << frac;
                }
}

TEST(PropagatorPair, GainGrowsLikeTwoToTheN) {
    for (std::string name : {"sysA.json", "golden2.json"}) {
        auto m = load<BigFloat>(name);
        auto rep = verify_pair_gain(m, 0, 4, 12, 1000);
        EXPECT_TRUE(rep.ok()) << name << " " << (rep.failures.empty() ? "" : rep.failures[0]);
        ASSERT_EQ(rep.rows.size(), 9u);
        for (auto& r : rep.rows) EXPECT_LE(r.max_sum, rep.bound);
        EXPECT_GT(rep.rows.back().min_single / rep.rows.front().min_single, 200.0);
    }
}

TEST(Counting, SmallOrderStatistics) {
    for (std::string name : {"sysA.json", "golden2.json"}) {
        auto rep = verify_counting(load(name), 3);
        EXPECT_TRUE(rep.ok()) << name;
        EXPECT_GT(rep.trees, 0);
        EXPECT_GT(rep.sup_ratio, 0.0);
        EXPECT_TRUE(std::isfinite(rep.sup_ratio));
    }
}
