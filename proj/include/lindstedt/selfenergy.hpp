#pragma once

#include "trees.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <climits>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace lindstedt {

// ---------------------------------------------------------------------------
// Clusters of a scaled tree
// ---------------------------------------------------------------------------

struct FlatNode {
    const TreeNode* node = nullptr;
    int parent = -1;
    std::vector<int> children;
};

// Preorder flattening; line id == id of the node it exits, 0 is the root line.
inline std::vector<FlatNode> flatten(const NodePtr& t) {
    std::vector<FlatNode> out;
    std::function<int(const TreeNode*, int)> rec = [&](const TreeNode* n, int parent) {
        int id = static_cast<int>(out.size());
        out.push_back({n, parent, {}});
        for (auto& c : n->children) {
            int cid = rec(c.get(), id);
            out[id].children.push_back(cid);
        }
        return id;
    };
    rec(t.get(), -1);
    return out;
}

struct Cluster {
    int scale = 0;
    std::vector<int> nodes;     // sorted
    std::vector<int> lines;     // internal lines
    std::vector<int> entering;  // lines entering a node of the cluster from outside
    int exiting = -1;           // line leaving the top node
    bool self_energy = false;
    std::vector<int> path;      // P_T, from the entering line upwards
    int n_T = 0;
    int depth = 0;
    bool e_class = false;
};

struct ClusterDecomposition {
    NodePtr root;  // keeps the nodes behind flat alive
    std::vector<FlatNode> flat;
    std::vector<Cluster> clusters;
    std::vector<int> self_energy;   // indices into clusters
    std::vector<int> resonant_lines;
};

template <class F> bool same_divisor_class(const Model<F>& m, const TreeNode& a, const TreeNode& b) {
    int d = m.d();
    if (m.variant == Variant::real) return equal_divisors(m.spec, a.j, a.nu, b.j, b.nu);
    // |sigma omega.nu - omega_j| on the lattice: sigma nu - e_j
    Mode x = a.nu, y = b.nu;
    for (int i = 0; i < d; ++i) {
        x[i] *= a.sigma_line;
        y[i] *= b.sigma_line;
    }
    x[a.j] -= 1;
    y[b.j] -= 1;
    return x == y || x == -y;
}

template <class F> ClusterDecomposition detect_clusters(const Model<F>& m, const NodePtr& t) {
    ClusterDecomposition out;
    out.root = t;
    out.flat = flatten(t);
    const auto& fl = out.flat;
    int N = static_cast<int>(fl.size());
    std::set<int> scales;
    for (int v = 1; v < N; ++v) {
        if (fl[v].node->scale == kUnscaled) throw std::invalid_argument("detect_clusters needs scale labels");
        scales.insert(fl[v].node->scale);
    }
    for (int s : scales) {
        std::vector<int> parent(N);
        for (int v = 0; v < N; ++v) parent[v] = v;
        std::function<int(int)> find = [&](int v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
        for (int v = 1; v < N; ++v)
            if (fl[v].node->scale <= s) parent[find(v)] = find(fl[v].parent);
        std::map<int, Cluster> comp;
        for (int v = 0; v < N; ++v) comp[find(v)].nodes.push_back(v);
        for (auto& [root, c] : comp) {
            std::set<int> in(c.nodes.begin(), c.nodes.end());
            bool has_s = false;
            for (int v : c.nodes) {
                if (v != 0 && in.count(fl[v].parent)) {
                    c.lines.push_back(v);
                    if (fl[v].node->scale == s) has_s = true;
                } else {
                    c.exiting = v;
                }
                for (int ch : fl[v].children)
                    if (!in.count(ch)) c.entering.push_back(ch);
            }
            if (!has_s) continue;
            c.scale = s;
            out.clusters.push_back(std::move(c));
        }
    }
    // self-energy conditions
    for (size_t i = 0; i < out.clusters.size(); ++i) {
        Cluster& c = out.clusters[i];
        if (c.entering.size() != 1) continue;
        const TreeNode& lo = *fl[c.exiting].node;
        const TreeNode& li = *fl[c.entering[0]].node;
        c.n_T = std::min(lo.scale, li.scale);
        bool ok = true;
        for (int l : c.lines)
            if (fl[l].node->scale > c.n_T - 2) ok = false;
        if (!ok || norm1(lo.nu - li.nu) > 2 || !same_divisor_class(m, lo, li)) continue;
        c.self_energy = true;
        for (int w = fl[c.entering[0]].parent; w != c.exiting; w = fl[w].parent) c.path.push_back(w);
        c.e_class = fl[c.entering[0]].parent == c.exiting && lo.kind == NodeKind::zero;
        out.self_energy.push_back(static_cast<int>(i));
    }
    // depth: one plus the number of self-energy clusters strictly containing T
    for (int a : out.self_energy) {
        Cluster& c = out.clusters[a];
        c.depth = 1;
        for (int b : out.self_energy) {
            if (a == b) continue;
            const auto& o = out.clusters[b].nodes;
            if (o.size() > c.nodes.size() && std::includes(o.begin(), o.end(), c.nodes.begin(), c.nodes.end())) ++c.depth;
        }
    }
    std::set<int> exits, enters;
    for (int a : out.self_energy) {
        exits.insert(out.clusters[a].exiting);
        enters.insert(out.clusters[a].entering[0]);
    }
    for (int l : exits)
        if (enters.count(l)) out.resonant_lines.push_back(l);
    return out;
}

// Sum of k_v over the nodes of a cluster lying in no self-energy cluster strictly inside it.
inline int ring_order(const ClusterDecomposition& dec, const Cluster& c) {
    std::set<int> inner;
    for (int b : dec.self_energy) {
        const auto& o = dec.clusters[b].nodes;
        if (o.size() < c.nodes.size() && std::includes(c.nodes.begin(), c.nodes.end(), o.begin(), o.end())) inner.insert(o.begin(), o.end());
    }
    int k = 0;
    for (int v : c.nodes)
        if (!inner.count(v)) k += dec.flat[v].node->k;
    return k;
}

// ---------------------------------------------------------------------------
// Detached self-energy clusters
// ---------------------------------------------------------------------------

// interior bound meaning "no cutoff"
constexpr int kNoCutoff = INT_MIN;

// A cluster whose top node is exited by l_T and which holds one leg node (the entering line l_T').
// Path lines store momenta as offsets from the leg momentum.
template <class F> struct SECluster {
    NodePtr top;
    long multiplicity = 1;
    int j = 0, sigma = 1;    // exiting line
    int jp = 0, sigmap = 1;  // entering line
    bool e_class = false;
    int order() const { return top->order; }
    const std::string& key() const { return top->key; }
};

template <class F> class ClusterRules {
public:
    ClusterRules(const Model<F>& m, int n) : m_(m), tr_(m), part_(m.partition()), n_(n) {}

    int bound() const { return n_; }

    F x_of(const TreeNode& l, const F& u) const { return l.path ? m_.spec.dot(l.nu) + u : m_.spec.dot(l.nu); }

    bool line_resonant(const TreeNode& l) const { return !l.path && is_resonant_line(l); }

    F delta(const TreeNode& l, const F& x) const {
        using T = field_traits<F>;
        const F& w = m_.spec.omega[l.j];
        if (m_.variant == Variant::real) {
            F a = x - w, b = x + w;
            if (T::sign(a) < 0) a = -a;
            if (T::sign(b) < 0) b = -b;
            return T::sign(a - b) <= 0 ? a : b;
        }
        F a = F(l.sigma_line) * x - w;
        return T::sign(a) < 0 ? -a : a;
    }

    F den(const TreeNode& l, const F& x) const {
        const F& w = m_.spec.omega[l.j];
        if (m_.variant == Variant::real) return x * x - w * w;
        return F(l.sigma_line) * x - w;
    }

    F cutoff(const F& delta) const { return n_ == kNoCutoff ? F(1) : part_.psi_n(n_, delta); }
    F cutoff_prime(const F& delta) const {
        if (n_ == kNoCutoff) return F(0);
        F p = ScalePartition<F>::pow2(n_);
        return p * part_.psi_prime(p * delta);
    }

    F G(const TreeNode& l, const F& u) const {
        if (line_resonant(l)) return F(1);
        F x = x_of(l, u);
        F w = cutoff(delta(l, x));
        if (field_traits<F>::is_zero(w)) return F(0);
        F dn = den(l, x);
        if (denominator_vanishes(dn)) throw resonance_error("pole on a cluster line at offset mode " + mode_str(l.nu));
        return w / dn;
    }

    // d/du of a path propagator
    F dG(const TreeNode& l, const F& u) const {
        using T = field_traits<F>;
        if (!l.path) return F(0);
        F x = x_of(l, u);
        F dl = delta(l, x);
        F w = cutoff(dl), wp = cutoff_prime(dl);
        if (T::is_zero(w) && T::is_zero(wp)) return F(0);
        F dn = den(l, x);
        const F& om = m_.spec.omega[l.j];
        F ddelta, dden;
        if (m_.variant == Variant::real) {
            F a = x - om, b = x + om;
            F aa = T::sign(a) < 0 ? -a : a, bb = T::sign(b) < 0 ? -b : b;
            const F& near = T::sign(aa - bb) <= 0 ? a : b;
            ddelta = F(T::sign(near) < 0 ? -1 : 1);
            dden = F(2) * x;
        } else {
            F a = F(l.sigma_line) * x - om;
            ddelta = F(T::sign(a) < 0 ? -l.sigma_line : l.sigma_line);
            dden = F(l.sigma_line);
        }
        return wp * ddelta / dn - w * dden / (dn * dn);
    }

    // product of node factors; the leg contributes 1
    CoeffPoly<F> nodes(const TreeNode& n) const {
        int d = m_.d();
        if (n.kind == NodeKind::leg) return CoeffPoly<F>::constant(d, Complex<F>(1));
        if (n.kind == NodeKind::end) return CoeffPoly<F>::symbol(d, n.j, n.sigma_node);
        CoeffPoly<F> prod = CoeffPoly<F>::constant(d, Complex<F>(1));
        for (auto& c : n.children) prod = prod * nodes(*c);
        if (n.kind == NodeKind::internal) return prod.scaled(tr_.internal_factor(n.j, n.sigma_line, tr_.slots_of(n.children)));
        return prod.divide_symbol(n.j, n.sigma_node).scaled(Complex<F>(F(-1) / F(2)));
    }

    // internal lines of the cluster: everything below the top except the leg
    static void lines(const TreeNode& top, std::vector<const TreeNode*>& out) {
        std::function<void(const TreeNode&)> rec = [&](const TreeNode& n) {
            for (auto& c : n.children) {
                if (c->kind == NodeKind::leg) continue;
                out.push_back(c.get());
                rec(*c);
            }
        };
        rec(top);
    }

    F propagators(const TreeNode& top, const F& u) const {
        std::vector<const TreeNode*> ls;
        lines(top, ls);
        F p(1);
        for (auto* l : ls) p *= G(*l, u);
        return p;
    }

    F propagators_du(const TreeNode& top, const F& u) const {
        std::vector<const TreeNode*> ls;
        lines(top, ls);
        F s(0);
        for (size_t i = 0; i < ls.size(); ++i) {
            if (!ls[i]->path) continue;
            F p = dG(*ls[i], u);
            for (size_t k = 0; k < ls.size() && !field_traits<F>::is_zero(p); ++k)
                if (k != i) p *= G(*ls[k], u);
            s += p;
        }
        return s;
    }

    const Model<F>& model() const { return m_; }
    const TreeRules<F>& tree_rules() const { return tr_; }

private:
    const Model<F>& m_;
    TreeRules<F> tr_;
    ScalePartition<F> part_;
    int n_;
};

// Val(T, u): node factors times internal propagators, path lines taken at omega.nu0 + u.
template <class F> CoeffPoly<F> se_value(const Model<F>& m, const SECluster<F>& T, const F& u, int n) {
    ClusterRules<F> r(m, n);
    return r.nodes(*T.top).scaled(Complex<F>(r.propagators(*T.top, u)));
}

template <class F> CoeffPoly<F> se_value_du(const Model<F>& m, const SECluster<F>& T, const F& u, int n) {
    ClusterRules<F> r(m, n);
    return r.nodes(*T.top).scaled(Complex<F>(r.propagators_du(*T.top, u)));
}

struct LocalizeOptions {
    int n_T = 0;                     // min of the external scales
    bool force = false;              // ignore the size cutoff
    std::optional<Mode> leg_momentum;  // concrete nu' of the entering line, if any
};

// K0 = 2^(-8/tau) / 4: the cutoff k <= K0 2^(n_T/tau) fails iff 4k > 2^((n_T - 8)/tau)
template <class F> bool within_size_cutoff(const Model<F>& m, int k, int n_T) { return !exceeds_pow2(4 * k, n_T - 8, m.spec.tau); }

template <class F> bool path_has_resonant_line(const SECluster<F>& T, const Mode& leg) {
    bool found = false;
    std::function<void(const TreeNode&, bool)> rec = [&](const TreeNode& n, bool top) {
        if (!n.path || n.kind == NodeKind::leg) return;
        if (!top) {
            Mode e(n.nu.size(), 0);
            e[n.j] = n.sigma_line;
            if (n.nu + leg == e) found = true;
        }
        for (auto& c : n.children) rec(*c, false);
    };
    rec(*T.top, true);
    return found;
}

template <class F> CoeffPoly<F> localize(const Model<F>& m, const SECluster<F>& T, int n, const LocalizeOptions& opt) {
    int d = m.d();
    // k of the cluster stands in for k of its ring: detached clusters carry no inner scale structure
    if (!opt.force && !within_size_cutoff(m, T.order(), opt.n_T)) return CoeffPoly<F>(d);
    if (opt.leg_momentum && path_has_resonant_line(T, *opt.leg_momentum)) return CoeffPoly<F>(d);
    return se_value(m, T, F(T.sigmap) * m.spec.omega[T.jp], n);
}

template <class F> CoeffPoly<F> regularize(const Model<F>& m, const SECluster<F>& T, const F& u, int n, const LocalizeOptions& opt) {
    return se_value(m, T, u, n) - localize(m, T, n, opt);
}

// ---------------------------------------------------------------------------
// Enumeration: trees with one marked entering leg
// ---------------------------------------------------------------------------

template <class F> class SelfEnergyEnumerator {
public:
    SelfEnergyEnumerator(const Model<F>& m, TreeEnumerator<F>& te, int jp, int sigmap) : m_(m), te_(te), jp_(jp), sp_(sigmap) {
        if (m.embedded_real) throw std::invalid_argument("self-energy enumeration does not support embedded real systems");
    }

    struct Sub {
        NodePtr node;
        long multiplicity;
    };

    // R^k_{j,sigma,j',sigma'}: clusters of order k with exit labels (j, sigma)
    std::vector<SECluster<F>> clusters(int k, int j, int sigma) {
        int d = m_.d();
        Mode nu0 = unit(d, j, sigma) - unit(d, jp_, sp_);
        std::vector<Sub> subs;
        if (k >= 1) build(k, j, sigma, nu0, true, subs);
        std::vector<SECluster<F>> out;
        for (auto& s : subs) {
            SECluster<F> c;
            c.top = s.node;
            c.multiplicity = s.multiplicity;
            c.j = j;
            c.sigma = sigma;
            c.jp = jp_;
            c.sigmap = sp_;
            c.e_class = is_e_class(*s.node);
            out.push_back(std::move(c));
        }
        std::sort(out.begin(), out.end(), [](const SECluster<F>& a, const SECluster<F>& b) { return a.key() < b.key(); });
        return out;
    }

    static bool is_e_class(const TreeNode& top) {
        if (top.kind != NodeKind::zero) return false;
        for (auto& c : top.children)
            if (c->kind == NodeKind::leg) return true;
        return false;
    }

private:
    NodePtr leg() const {
        TreeNode n;
        n.kind = NodeKind::leg;
        n.j = jp_;
        n.sigma_node = sp_;
        n.sigma_line = sp_;
        n.nu = Mode(m_.d(), 0);
        return finish_node(std::move(n));
    }

    // interior path line: its localized momentum nu0 + sigma' e_j' fixes the sign (real) and must not be resonant
    bool path_line_ok(int j, int sigma, const Mode& nu0) const {
        int d = m_.d();
        Mode mu = nu0 + unit(d, jp_, sp_);
        if (m_.variant == Variant::real && minimizer_sign(m_.spec, j, mu) != sigma) return false;
        return mu != unit(d, j, sigma) && mu != unit(d, j, -sigma);
    }

    const std::vector<Sub>& legsub(int k, int j, int sigma, const Mode& nu0) {
        auto key = std::make_tuple(k, j, sigma, nu0);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        std::vector<Sub> out;
        if (k == 0) {
            if (j == jp_ && sigma == sp_ && norm1(nu0) == 0) out.push_back({leg(), 1});
        } else if (norm1(nu0) <= k + 2 && path_line_ok(j, sigma, nu0)) {
            build(k, j, sigma, nu0, false, out);
        }
        return memo_.emplace(key, std::move(out)).first->second;
    }

    void build(int k, int j, int sigma, const Mode& nu0, bool top, std::vector<Sub>& out) {
        using Item = typename TreeEnumerator<F>::Item;
        int d = m_.d();
        const auto& rules = te_.rules();
        for (auto& term : m_.force.component(j, sigma)) {
            if (term.p > k) continue;
            int R = k - term.p;
            for (size_t ls = 0; ls < term.slots.size(); ++ls) {
                if (term.slots[ls] == 0) continue;
                int i = m_.force.slot_component(static_cast<int>(ls));
                std::vector<int> signs = m_.variant == Variant::real ? std::vector<int>{1, -1} : std::vector<int>{m_.force.slot_sign(static_cast<int>(ls))};
                ForceTerm<F> rest = term;
                rest.slots[ls] -= 1;
                for (int kl = 0; kl <= R; ++kl) {
                    int Rr = R - kl;
                    std::vector<std::vector<Item>> cand(rest.slots.size());
                    for (size_t t = 0; t < rest.slots.size(); ++t)
                        if (rest.slots[t] > 0) cand[t] = te_.candidates(static_cast<int>(t), Rr);
                    for (int s : signs) {
                        for (auto& off : modes_within(d, kl + 2)) {
                            for (auto& lsub : legsub(kl, i, s, off)) {
                                Item legitem{nullptr, lsub.node, kl};
                                std::vector<const Item*> picked;
                                TreeEnumerator<F>::choose(rest, cand, nu0 - off, 0, 0, 0, Rr, Mode(d, 0), picked, [&](const std::vector<const Item*>& ch) {
                                    if (!(TreeEnumerator<F>::sum_mode(ch, d) + off == nu0)) return;
                                    TreeNode n;
                                    n.kind = NodeKind::internal;
                                    n.j = j;
                                    n.k = term.p;
                                    n.nu = nu0;
                                    n.sigma_line = sigma;
                                    std::vector<const Item*> all = ch;
                                    all.push_back(&legitem);
                                    long mult = TreeEnumerator<F>::orderings(all) * lsub.multiplicity;
                                    for (auto* it : ch) {
                                        n.children.push_back(it->node);
                                        if (it->cls) mult *= it->cls->multiplicity;
                                    }
                                    n.children.push_back(lsub.node);
                                    auto node = finish_node(std::move(n));
                                    if (rules.internal_factor(j, sigma, rules.slots_of(node->children)).is_zero()) return;
                                    out.push_back({node, mult});
                                });
                            }
                        }
                    }
                }
            }
        }
        // zero node on the path: resonant tree plus a leg subtree with the same momentum
        if (m_.variant == Variant::real && !top && minimizer_sign(m_.spec, j, nu0 + unit(d, jp_, sp_)) != sigma) return;
        Mode e = unit(d, j, sigma);
        for (int k1 = 1; k1 <= k; ++k1) {
            int kb = k - k1;
            if (kb == 0 && !top) continue;
            const auto& A = te_.subtrees(k1, j, sigma, e);
            if (A.empty()) continue;
            const auto& B = legsub(kb, j, sigma, nu0);
            for (auto& a : A)
                for (auto& b : B) {
                    TreeNode n;
                    n.kind = NodeKind::zero;
                    n.j = j;
                    n.k = 0;
                    n.sigma_node = sigma;
                    n.sigma_line = sigma;
                    n.nu = nu0;
                    n.children = {a.root, b.node};
                    out.push_back({finish_node(std::move(n)), 2 * a.multiplicity * b.multiplicity});
                }
        }
    }

    const Model<F>& m_;
    TreeEnumerator<F>& te_;
    int jp_, sp_;
    std::map<std::tuple<int, int, int, Mode>, std::vector<Sub>> memo_;
};

template <class F> std::vector<SECluster<F>> enumerate_self_energy(const Model<F>& m, int k, int j, int sigma, int jp, int sigmap) {
    TreeEnumerator<F> te(m);
    SelfEnergyEnumerator<F> se(m, te, jp, sigmap);
    return se.clusters(k, j, sigma);
}

// ---------------------------------------------------------------------------
// Sewing and cutting: the label transformations behind the cluster families
// ---------------------------------------------------------------------------

// Replace the leg by an end node (j', sigma'); path momenta become absolute.
inline NodePtr sew(const NodePtr& t, int jp, int sigmap) {
    int d = static_cast<int>(t->nu.size());
    Mode shift = unit(d, jp, sigmap);
    std::function<NodePtr(const NodePtr&)> rec = [&](const NodePtr& p) -> NodePtr {
        if (!p->path) return p;
        if (p->kind == NodeKind::leg) return make_end(d, jp, sigmap);
        TreeNode n = *p;
        n.nu = n.nu + shift;
        for (auto& c : n.children) c = rec(c);
        return finish_node(std::move(n));
    };
    return rec(t);
}

// End nodes with labels (j, sigma) in the pruned tree, as child-index paths from the root.
inline std::vector<std::vector<int>> pruned_end_positions(const NodePtr& t, int j, int sigma) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    std::function<void(const TreeNode&)> rec = [&](const TreeNode& n) {
        if (n.kind == NodeKind::end) {
            if (n.j == j && n.sigma_node == sigma) out.push_back(cur);
            return;
        }
        for (size_t i = 0; i < n.children.size(); ++i) {
            const auto& c = n.children[i];
            if (n.kind == NodeKind::zero && c->kind != NodeKind::end && !c->path && is_resonant_line(*c)) continue;
            cur.push_back(static_cast<int>(i));
            rec(*c);
            cur.pop_back();
        }
    };
    rec(*t);
    return out;
}

// Replace the end node at pos by a leg with its labels; lines above it get offset momenta.
template <class F> SECluster<F> cut(const NodePtr& t, const std::vector<int>& pos) {
    int d = static_cast<int>(t->nu.size());
    const TreeNode* v = t.get();
    for (int i : pos) v = v->children[i].get();
    if (v->kind != NodeKind::end) throw std::logic_error("cut: position is not an end node");
    int jv = v->j, sv = v->sigma_node;
    Mode shift = unit(d, jv, sv);
    std::function<NodePtr(const NodePtr&, size_t)> rec = [&](const NodePtr& p, size_t depth) -> NodePtr {
        if (depth == pos.size()) {
            TreeNode n;
            n.kind = NodeKind::leg;
            n.j = jv;
            n.sigma_node = sv;
            n.sigma_line = sv;
            n.nu = Mode(d, 0);
            return finish_node(std::move(n));
        }
        TreeNode n = *p;
        n.nu = n.nu - shift;
        n.children[pos[depth]] = rec(p->children[pos[depth]], depth + 1);
        return finish_node(std::move(n));
    };
    SECluster<F> c;
    c.top = rec(t, 0);
    c.j = t->j;
    c.sigma = t->sigma_line;
    c.jp = jv;
    c.sigmap = sv;
    c.e_class = SelfEnergyEnumerator<F>::is_e_class(*c.top);
    return c;
}

// theta_T of an E-class cluster: the resonant child of the top node
template <class F> NodePtr theta_of(const SECluster<F>& T) {
    for (auto& c : T.top->children)
        if (c->kind != NodeKind::leg) return c;
    throw std::logic_error("theta_of: malformed E-class cluster");
}

// Pruned cluster: E-class clusters are pruned through theta_T.
template <class F> NodePtr pruned_cluster(const SECluster<F>& T) { return prune(T.e_class ? theta_of(T) : T.top); }

template <class F> std::vector<SECluster<F>> cut_all(const NodePtr& theta, int j, int sigma) {
    std::vector<SECluster<F>> out;
    for (auto& p : pruned_end_positions(theta, j, sigma)) out.push_back(cut<F>(theta, p));
    return out;
}

template <class F> std::vector<SECluster<F>> family_F1(const SECluster<F>& T) { return cut_all<F>(theta_of(T), T.j, T.sigma); }
template <class F> std::vector<SECluster<F>> family_F2(const SECluster<F>& T) { return cut_all<F>(theta_of(T), T.j, -T.sigma); }
template <class F> std::vector<SECluster<F>> family_G1(const SECluster<F>& T) { return cut_all<F>(sew(T.top, T.jp, T.sigmap), T.jp, T.sigmap); }
template <class F> std::vector<SECluster<F>> family_G2(const SECluster<F>& T) { return cut_all<F>(sew(T.top, T.jp, T.sigmap), T.jp, -T.sigmap); }
// G3: flip node signs (and, through sign_flip, line signs and momenta); cut at the images of the sigma' end nodes
template <class F> std::vector<SECluster<F>> family_G3(const SECluster<F>& T) {
    return cut_all<F>(sign_flip(sew(T.top, T.jp, T.sigmap)), T.jp, -T.sigmap);
}

// ---------------------------------------------------------------------------
// Localized self-energy matrices
// ---------------------------------------------------------------------------

inline int se_index(int j, int sigma) { return 2 * j + (sigma > 0 ? 0 : 1); }

template <class F> struct SelfEnergyMatrix {
    int d = 1, k = 0, n = 0;
    // entries[se_index(j,s)][se_index(j',s')] = L M^(k)_{j,s,j',s'}(n)
    std::vector<std::vector<CoeffPoly<F>>> entries;
    // M^(k)_{j,j'}(n) after removing c_j^s c_j'^-s'
    std::vector<std::vector<CoeffPoly<F>>> reduced;
    std::vector<std::string> factorization_failures;
    long clusters = 0;
    bool factorizes() const { return factorization_failures.empty(); }
};

template <class F> CoeffPoly<F> sum_localized(const Model<F>& m, const std::vector<SECluster<F>>& cls, int n, const LocalizeOptions& opt) {
    CoeffPoly<F> s(m.d());
    for (auto& c : cls) s += localize(m, c, n, opt).scaled(Complex<F>(F(c.multiplicity)));
    return s;
}

template <class F> SelfEnergyMatrix<F> build_matrix(const Model<F>& m, int k, int n, const LocalizeOptions& opt) {
    int d = m.d();
    SelfEnergyMatrix<F> M;
    M.d = d;
    M.k = k;
    M.n = n;
    M.entries.assign(2 * d, std::vector<CoeffPoly<F>>(2 * d, CoeffPoly<F>(d)));
    M.reduced.assign(d, std::vector<CoeffPoly<F>>(d, CoeffPoly<F>(d)));
    TreeEnumerator<F> te(m);
    for (int jp = 0; jp < d; ++jp)
        for (int sp : {1, -1}) {
            SelfEnergyEnumerator<F> se(m, te, jp, sp);
            for (int j = 0; j < d; ++j)
                for (int s : {1, -1}) {
                    auto cls = se.clusters(k, j, s);
                    M.clusters += static_cast<long>(cls.size());
                    M.entries[se_index(j, s)][se_index(jp, sp)] = sum_localized(m, cls, n, opt);
                }
        }
    for (int j = 0; j < d; ++j)
        for (int jp = 0; jp < d; ++jp) {
            std::optional<CoeffPoly<F>> ref;
            for (int s : {1, -1})
                for (int sp : {1, -1}) {
                    const auto& e = M.entries[se_index(j, s)][se_index(jp, sp)];
                    std::string at = "(" + std::to_string(j + 1) + (s > 0 ? "+" : "-") + "," + std::to_string(jp + 1) + (sp > 0 ? "+" : "-") + ")";
                    CoeffPoly<F> q(d);
                    try {
                        q = e.divide_symbol(j, s).divide_symbol(jp, -sp);
                    } catch (const std::logic_error&) {
                        M.factorization_failures.push_back("entry " + at + " lacks the prefactor");
                        continue;
                    }
                    if (!ref) ref = q;
                    else if (q != *ref) M.factorization_failures.push_back("entry " + at + " differs from the (+,+) reduction");
                }
            if (ref) M.reduced[j][jp] = *ref;
        }
    return M;
}

// Product LM1 * diag(sigma) * LM2 (the scalar propagator factor is irrelevant to vanishing and left out).
template <class F> std::vector<std::vector<CoeffPoly<F>>> chain_product(const SelfEnergyMatrix<F>& A, const SelfEnergyMatrix<F>& B, const F& scalar) {
    int D = 2 * A.d;
    std::vector<std::vector<CoeffPoly<F>>> P(D, std::vector<CoeffPoly<F>>(D, CoeffPoly<F>(A.d)));
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
            for (int c = 0; c < D; ++c) {
                int sign = c % 2 == 0 ? 1 : -1;
                if (A.entries[a][c].is_zero() || B.entries[c][b].is_zero()) continue;
                P[a][b] += (A.entries[a][c] * B.entries[c][b]).scaled(Complex<F>(F(sign) * scalar));
            }
    return P;
}

// ---------------------------------------------------------------------------
// Family identities
// ---------------------------------------------------------------------------

struct IdentityReport {
    std::string name;
    long checked = 0;
    long nontrivial = 0;  // instances with a nonzero side
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

template <class F> struct ClusterSymmetryReport {
    std::vector<IdentityReport> identities;
    std::vector<std::string> membership_failures;  // family members outside the enumerated sets
    long clusters = 0;
    bool ok() const {
        if (!membership_failures.empty()) return false;
        for (auto& r : identities)
            if (!r.ok()) return false;
        return true;
    }
};

template <class F> CoeffPoly<F> sum_loc(const Model<F>& m, const std::vector<SECluster<F>>& cls, int n, const LocalizeOptions& opt) {
    CoeffPoly<F> s(m.d());
    for (auto& c : cls) s += localize(m, c, n, opt);
    return s;
}

template <class F> ClusterSymmetryReport<F> verify_symmetry_lemmas(const Model<F>& m, int k_max, int n, const LocalizeOptions& opt) {
    int d = m.d();
    ClusterSymmetryReport<F> rep;
    bool zw = m.variant != Variant::real;
    IdentityReport r_single{"E-class single cut"}, r_pair{"E-class F1/F2"}, r_flip{"leg flip G1/G2"}, r_conj{"G1/G3"};
    // zw only: the G1/G3 identity summed over all clusters with the same labels, and its per-cluster conjugate form
    IdentityReport rsum{"G1/G3 summed over labels"}, rconj{"G1/G3 conjugated"};
    std::map<std::tuple<int, int, int, int, int>, std::pair<CoeffPoly<F>, CoeffPoly<F>>> sums;
    TreeEnumerator<F> te(m);
    std::map<std::tuple<int, int, int>, std::unique_ptr<SelfEnergyEnumerator<F>>> ens;
    auto enumerator = [&](int jp, int sp) -> SelfEnergyEnumerator<F>& {
        auto& p = ens[{jp, sp, 0}];
        if (!p) p = std::make_unique<SelfEnergyEnumerator<F>>(m, te, jp, sp);
        return *p;
    };
    std::map<std::tuple<int, int, int, int, int>, std::set<std::string>> keys;
    auto member = [&](int k, const SECluster<F>& c) {
        auto key = std::make_tuple(k, c.j, c.sigma, c.jp, c.sigmap);
        auto it = keys.find(key);
        if (it == keys.end()) {
            std::set<std::string> s;
            for (auto& x : enumerator(c.jp, c.sigmap).clusters(k, c.j, c.sigma)) s.insert(x.key());
            it = keys.emplace(key, std::move(s)).first;
        }
        return it->second.count(c.key()) > 0;
    };
    auto check_members = [&](int k, const std::vector<SECluster<F>>& fam, const std::string& what) {
        for (auto& c : fam)
            if (!member(k, c)) rep.membership_failures.push_back(what + ": " + c.key().substr(0, 60));
    };
    auto sym = [&](int j, int s) { return CoeffPoly<F>::symbol(d, j, s); };
    auto record = [](IdentityReport& r, const CoeffPoly<F>& lhs, const CoeffPoly<F>& rhs, const std::string& at) {
        ++r.checked;
        if (!lhs.is_zero() || !rhs.is_zero()) ++r.nontrivial;
        if (lhs != rhs) r.failures.push_back(at);
    };

    for (int k = 1; k <= k_max; ++k)
        for (int j = 0; j < d; ++j)
            for (int s : {1, -1})
                for (int jp = 0; jp < d; ++jp)
                    for (int sp : {1, -1}) {
                        for (auto& T : enumerator(jp, sp).clusters(k, j, s)) {
                            ++rep.clusters;
                            std::string at = "k=" + std::to_string(k) + " " + T.key().substr(0, 60);
                            if (T.e_class) {
                                auto f1 = family_F1(T), f2 = family_F2(T);
                                check_members(k, f1, "F1");
                                check_members(k, f2, "F2");
                                CoeffPoly<F> lv = localize(m, T, n, opt);
                                auto eplus = end_node_counts(pruned_cluster(T), d);
                                if (eplus[2 * j + (s > 0 ? 1 : 0)] == 0) {
                                    if (f1.size() != 1) {
                                        r_single.failures.push_back(at + ": F1 has " + std::to_string(f1.size()) + " members");
                                    } else {
                                        record(r_single, lv.scaled(Complex<F>(F(-2))), localize(m, f1[0], n, opt), at);
                                    }
                                }
                                CoeffPoly<F> lhs = (sym(j, s) * lv).scaled(Complex<F>(F(2))) + sym(j, s) * sum_loc(m, f1, n, opt);
                                CoeffPoly<F> rhs = sym(j, -s) * sum_loc(m, f2, n, opt);
                                record(r_pair, lhs, rhs, at);
                            }
                            if (j != jp) {
                                auto g1 = family_G1(T), g2 = family_G2(T), g3 = family_G3(T);
                                check_members(k, g1, "G1");
                                check_members(k, g2, "G2");
                                check_members(k, g3, "G3");
                                CoeffPoly<F> s1 = sum_loc(m, g1, n, opt);
                                record(r_flip, sym(jp, sp) * s1, sym(jp, -sp) * sum_loc(m, g2, n, opt), at);
                                CoeffPoly<F> lhs = sym(j, -s) * sym(jp, sp) * s1, rhs = sym(j, s) * sym(jp, -sp) * sum_loc(m, g3, n, opt);
                                record(r_conj, lhs, rhs, at);
                                if (zw) {
                                    record(rconj, lhs, rhs.conj(), at);
                                    auto& acc = sums.try_emplace({k, j, s, jp, sp}, CoeffPoly<F>(d), CoeffPoly<F>(d)).first->second;
                                    Complex<F> w(F(T.multiplicity));
                                    acc.first += lhs.scaled(w);
                                    acc.second += rhs.scaled(w);
                                }
                            }
                        }
                    }
    rep.identities = {r_single, r_pair, r_flip, r_conj};
    if (zw) {
        for (auto& [key, v] : sums) {
            auto [k, j, s, jp, sp] = key;
            std::string at = "k=" + std::to_string(k) + " (" + std::to_string(j + 1) + (s > 0 ? "+" : "-") + "," + std::to_string(jp + 1) + (sp > 0 ? "+" : "-") + ")";
            record(rsum, v.first, v.second, at);
        }
        rep.identities.push_back(rconj);
        rep.identities.push_back(rsum);
    }
    return rep;
}

// End-node balance of a pruned cluster; returns a description of the violated case or "".
template <class F> std::string check_end_node_relations(const SECluster<F>& T, int d) {
    auto c = end_node_counts(pruned_cluster(T), d);
    auto E = [&](int i, int s) { return c[2 * i + (s > 0 ? 0 : 1)]; };
    int j = T.j, s = T.sigma, jp = T.jp, sp = T.sigmap;
    for (int i = 0; i < d; ++i) {
        if (i == j || i == jp) continue;
        if (E(i, 1) != E(i, -1)) return "balance of component " + std::to_string(i + 1);
    }
    if (T.e_class) return E(j, s) == E(j, -s) + 1 ? "" : "E-class";
    if (j != jp) return E(j, s) == E(j, -s) + 1 && E(jp, -sp) == E(jp, sp) + 1 ? "" : "j != j'";
    if (s == sp) return E(j, 1) == E(j, -1) ? "" : "R-bar";
    return E(j, s) == E(j, -s) + 2 ? "" : "sigma = -sigma'";
}

// ---------------------------------------------------------------------------
// Propagator pairs
// ---------------------------------------------------------------------------

// G^[n](x) = Psi_n(delta) / (x^2 - omega^2) in the real variant
template <class F> F pair_propagator(const ScalePartition<F>& part, int n, const F& omega, const F& x) {
    using T = field_traits<F>;
    F a = x - omega, b = x + omega;
    F da = T::sign(a) < 0 ? -a : a, db = T::sign(b) < 0 ? -b : b;
    F delta = T::sign(da - db) <= 0 ? da : db;
    F w = part.Psi(n, delta);
    if (T::is_zero(w)) return F(0);
    return w / (x * x - omega * omega);
}

// d/dx of the same
template <class F> F pair_propagator_du(const ScalePartition<F>& part, int n, const F& omega, const F& x) {
    using T = field_traits<F>;
    F a = x - omega, b = x + omega;
    F da = T::sign(a) < 0 ? -a : a, db = T::sign(b) < 0 ? -b : b;
    bool near_a = T::sign(da - db) <= 0;
    F delta = near_a ? da : db;
    F sgn = F(T::sign(near_a ? a : b) < 0 ? -1 : 1);
    F den = x * x - omega * omega;
    return part.Psi_prime(n, delta) * sgn / den - part.Psi(n, delta) * F(2) * x / (den * den);
}

template <class F> struct PairSample {
    F sum;         // G(x) + G(x')
    F collapsed;   // 2 Psi / ((x + s w)(x' - s w))
    F dsum;        // derivative of the pair, term by term
    F dcollapsed;  // derivative of the single fraction
    F single;      // |G(x)|
};

// x near sigma omega; x' = x - 2 sigma omega
template <class F> PairSample<F> propagator_pair(const ScalePartition<F>& part, int n, const F& omega, int sigma, const F& x) {
    F s = F(sigma);
    F xp = x - F(2) * s * omega;
    F delta = x - s * omega;
    int sg = field_traits<F>::sign(delta);
    F adelta = sg < 0 ? -delta : delta;
    F a = x + s * omega, b = xp - s * omega;
    F Psi = part.Psi(n, adelta);
    F dPsi = part.Psi_prime(n, adelta) * F(sg < 0 ? -1 : 1);
    PairSample<F> r;
    F g = pair_propagator(part, n, omega, x);
    r.single = field_traits<F>::sign(g) < 0 ? -g : g;
    r.sum = g + pair_propagator(part, n, omega, xp);
    r.collapsed = F(2) * Psi / (a * b);
    r.dsum = pair_propagator_du(part, n, omega, x) + pair_propagator_du(part, n, omega, xp);
    r.dcollapsed = F(2) * dPsi / (a * b) - F(4) * delta * Psi / (a * a * b * b);
    return r;
}

struct CancellationReport {
    long products = 0;
    long nontrivial = 0;  // both factors nonzero
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

// LM^(k1)(n1) G^[nl] LM^(k2)(n2) over all n1, n2 <= n_hi - 2 and n_l in [max(n1,n2) + 2, n_hi], zw variant.
template <class F> CancellationReport verify_matrix_cancellation(const Model<F>& m, int k_max, int n_lo, int n_hi, const LocalizeOptions& opt) {
    if (m.variant == Variant::real) throw std::invalid_argument("matrix cancellation is stated for the zw variant");
    CancellationReport rep;
    std::map<std::pair<int, int>, SelfEnergyMatrix<F>> mats;
    for (int k = 1; k <= k_max; ++k)
        for (int n = n_lo; n <= n_hi - 2; ++n) {
            auto M = build_matrix(m, k, n, opt);
            if (!M.factorizes())
                for (auto& f : M.factorization_failures) rep.failures.push_back("k=" + std::to_string(k) + " n=" + std::to_string(n) + " " + f);
            mats.emplace(std::make_pair(k, n), std::move(M));
        }
    auto part = m.partition();
    auto nonzero = [](const SelfEnergyMatrix<F>& M) {
        for (auto& r : M.entries)
            for (auto& e : r)
                if (!e.is_zero()) return true;
        return false;
    };
    for (auto& [ka, A] : mats)
        for (auto& [kb, B] : mats) {
            int nmin = std::max(ka.second, kb.second) + 2;
            for (int nl = nmin; nl <= n_hi; ++nl) {
                // resonant line on its own scale: delta = 2^-nl gamma sits where Psi_nl = 1
                F delta = part.gamma() * ScalePartition<F>::pow2(-nl);
                F g = part.Psi(nl, delta) / delta;
                auto P = chain_product(A, B, g);
                ++rep.products;
                if (nonzero(A) && nonzero(B)) ++rep.nontrivial;
                for (auto& row : P)
                    for (auto& e : row)
                        if (!e.is_zero()) {
                            rep.failures.push_back("k=(" + std::to_string(ka.first) + "," + std::to_string(kb.first) + ") n=(" + std::to_string(ka.second) + "," +
                                                   std::to_string(kb.second) + "," + std::to_string(nl) + ")");
                            goto next;
                        }
            next:;
            }
        }
    return rep;
}

struct PairGainReport {
    struct Row {
        int n;
        long samples;
        double max_sum;        // max |G + G'|
        double min_single;     // min |G| where Psi_n = 1
        double max_identity;   // max |sum - collapsed| / |collapsed|
        double max_didentity;  // same for the u-derivative
        double ratio;          // max_sum / min_single
    };
    std::vector<Row> rows;
    double bound = 0;      // 2 / omega^2
    double gain_const = 0;  // median of ratio * 2^n
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

// Sweep x = sigma omega_j +- delta across the support of Psi_n, for n in [n_lo, n_hi].
inline PairGainReport verify_pair_gain(const Model<BigFloat>& m, int j, int n_lo, int n_hi, int samples) {
    PairGainReport rep;
    auto part = m.partition();
    const BigFloat& w = m.spec.omega[j];
    BigFloat bound = BigFloat(2) / (w * w);
    rep.bound = bound.convert_to<double>();
    BigFloat tol = boost::multiprecision::ldexp(BigFloat(1), -bigfloat_precision_bits() / 2);
    for (int n = n_lo; n <= n_hi; ++n) {
        BigFloat unit = part.gamma() * ScalePartition<BigFloat>::pow2(-n);
        BigFloat lo = unit * BigFloat(5) / BigFloat(8), hi = unit * BigFloat(7) / BigFloat(4);
        PairGainReport::Row row{n, samples, 0, -1, 0, 0, 0};
        BigFloat max_sum = 0, min_single = -1, max_id = 0, max_did = 0;
        for (int i = 0; i < samples; ++i) {
            BigFloat delta = lo + (hi - lo) * (BigFloat(i) + BigFloat(1) / 2) / BigFloat(samples);
            int sigma = (i % 2 == 0) ? 1 : -1;
            int side = (i / 2) % 2 == 0 ? 1 : -1;
            BigFloat x = BigFloat(sigma) * w + BigFloat(side) * delta;
            auto r = propagator_pair(part, n, w, sigma, x);
            BigFloat as = boost::multiprecision::abs(r.sum);
            if (as > max_sum) max_sum = as;
            if (as > bound) rep.failures.push_back("n=" + std::to_string(n) + ": |G+G'| above 2/omega^2");
            if (!field_traits<BigFloat>::is_zero(r.collapsed)) max_id = std::max(max_id, BigFloat(boost::multiprecision::abs(r.sum - r.collapsed) / boost::multiprecision::abs(r.collapsed)));
            BigFloat dscale = boost::multiprecision::abs(r.dcollapsed) + boost::multiprecision::abs(r.dsum);
            if (dscale > 0) max_did = std::max(max_did, BigFloat(boost::multiprecision::abs(r.dsum - r.dcollapsed) / dscale));
            if (part.Psi(n, delta) == 1 && (min_single < 0 || r.single < min_single)) min_single = r.single;
        }
        row.max_sum = max_sum.convert_to<double>();
        row.min_single = min_single.convert_to<double>();
        row.max_identity = max_id.convert_to<double>();
        row.max_didentity = max_did.convert_to<double>();
        row.ratio = row.max_sum / row.min_single;
        if (max_id > tol) rep.failures.push_back("n=" + std::to_string(n) + ": pair sum differs from the single-fraction form");
        if (max_did > tol) rep.failures.push_back("n=" + std::to_string(n) + ": derivative pair differs from the single-fraction form");
        rep.rows.push_back(row);
    }
    std::vector<double> scaled;
    for (auto& r : rep.rows) scaled.push_back(r.ratio * std::ldexp(1.0, r.n));
    std::vector<double> sorted = scaled;
    std::sort(sorted.begin(), sorted.end());
    rep.gain_const = sorted[sorted.size() / 2];
    for (size_t i = 0; i < rep.rows.size(); ++i) {
        if (scaled[i] > 4 * rep.gain_const || scaled[i] < rep.gain_const / 4) rep.failures.push_back("n=" + std::to_string(rep.rows[i].n) + ": gain ratio off the 2^-n trend");
        // min |G| grows like 2^n
        double g = rep.rows[i].min_single * std::ldexp(1.0, -rep.rows[i].n), g0 = rep.rows[0].min_single * std::ldexp(1.0, -rep.rows[0].n);
        if (g > 4 * g0 || g < g0 / 4) rep.failures.push_back("n=" + std::to_string(rep.rows[i].n) + ": min |G| off the 2^n trend");
    }
    return rep;
}

// Val(T,u) - Val(T,sigma' omega_j') against (u - sigma' omega_j') times the integral of d/du Val over the segment.
struct QuadratureCheck {
    BigFloat direct, quadrature, rel_error;
};

inline QuadratureCheck regularize_by_quadrature(const Model<BigFloat>& m, const SECluster<BigFloat>& T, const BigFloat& u, int n) {
    ClusterRules<BigFloat> r(m, n);
    BigFloat u0 = BigFloat(T.sigmap) * m.spec.omega[T.jp];
    QuadratureCheck q;
    q.direct = r.propagators(*T.top, u) - r.propagators(*T.top, u0);
    BigFloat h = u - u0;
    auto f = [&](const BigFloat& t) { return r.propagators_du(*T.top, u0 + t * h); };
    q.quadrature = h * boost::math::quadrature::gauss<BigFloat, 40>::integrate(f, BigFloat(0), BigFloat(1));
    BigFloat scale = boost::multiprecision::abs(q.direct);
    q.rel_error = scale > 0 ? BigFloat(boost::multiprecision::abs(q.direct - q.quadrature) / scale) : boost::multiprecision::abs(q.quadrature);
    return q;
}

// ---------------------------------------------------------------------------
// Counting statistics on scaled trees
// ---------------------------------------------------------------------------

struct CountingReport {
    long trees = 0;
    long self_energy_clusters = 0;
    long resonant_lines = 0;
    double sup_ratio = 0;  // max N_n / (2^(-n/tau) k)
    int sup_n = 0;
    std::map<int, double> sup_by_order;
    long resonant_support_checked = 0, path_displacement_checked = 0, chain_displacement_checked = 0;
    std::vector<std::string> resonant_support_failures, path_displacement_failures, chain_displacement_failures;
    bool ok() const { return resonant_support_failures.empty() && path_displacement_failures.empty() && chain_displacement_failures.empty(); }
};

template <class F> void count_tree(const Model<F>& m, const NodePtr& t, CountingReport& rep, int E1 = 4, int E2 = 7) {
    auto dec = detect_clusters(m, t);
    const auto& fl = dec.flat;
    int N = static_cast<int>(fl.size());
    int k = t->order;
    double tau = m.spec.tau.template convert_to<double>();
    ++rep.trees;
    rep.self_energy_clusters += static_cast<long>(dec.self_energy.size());
    rep.resonant_lines += static_cast<long>(dec.resonant_lines.size());
    std::set<int> resonant(dec.resonant_lines.begin(), dec.resonant_lines.end());

    int nmax = 0;
    for (int v = 0; v < N; ++v) nmax = std::max(nmax, fl[v].node->scale);
    for (int n = 0; n <= nmax; ++n) {
        int cnt = 0;
        for (int v = 0; v < N; ++v)
            if (!resonant.count(v) && fl[v].node->scale >= n) ++cnt;
        double ratio = cnt / (std::pow(2.0, -n / tau) * k);
        if (ratio > rep.sup_ratio) {
            rep.sup_ratio = ratio;
            rep.sup_n = n;
        }
        auto& s = rep.sup_by_order[k];
        s = std::max(s, ratio);
    }

    // deepest self-energy cluster having l as an internal line
    auto deepest = [&](int l) -> const Cluster* {
        const Cluster* best = nullptr;
        for (int a : dec.self_energy) {
            const Cluster& c = dec.clusters[a];
            if (std::binary_search(c.nodes.begin(), c.nodes.end(), l) && std::binary_search(c.nodes.begin(), c.nodes.end(), fl[l].parent))
                if (!best || c.depth > best->depth) best = &c;
        }
        return best;
    };

    for (int l : dec.resonant_lines) {
        const Cluster* c = deepest(l);
        if (!c) continue;
        ++rep.resonant_support_checked;
        bool found = false;
        for (int x : c->lines)
            if (!resonant.count(x) && fl[x].node->scale >= fl[l].node->scale - 1) found = true;
        if (!found) rep.resonant_support_failures.push_back(t->key.substr(0, 80));
    }

    for (int l = 1; l < N; ++l) {
        const Cluster* c = deepest(l);
        if (!c) continue;
        auto it = std::find(c->path.begin(), c->path.end(), l);
        if (it == c->path.end()) continue;
        bool blocked = false;
        for (auto p = c->path.begin(); p != it; ++p)
            if (fl[*p].node->scale == -1) blocked = true;
        if (blocked) continue;
        ++rep.path_displacement_checked;
        Mode nu0 = fl[l].node->nu - fl[c->entering[0]].node->nu;
        int kr = ring_order(dec, *c);
        int bound = kr >= 1 ? E1 * kr : 2;
        if (norm1(nu0) > bound) rep.path_displacement_failures.push_back(t->key.substr(0, 80));
    }

    for (int l = 1; l < N; ++l) {
        if (fl[l].node->kind == NodeKind::end) continue;
        std::set<int> below;
        std::function<void(int)> mark = [&](int v) {
            below.insert(v);
            for (int c : fl[v].children) mark(c);
        };
        mark(l);
        std::set<int> removed;
        for (int a : dec.self_energy) {
            const auto& ns = dec.clusters[a].nodes;
            bool inside = true;
            for (int v : ns)
                if (below.count(v)) inside = false;
            if (inside) removed.insert(ns.begin(), ns.end());
        }
        int kg = 0;
        for (int v = 0; v < N; ++v)
            if (!below.count(v) && !removed.count(v)) kg += fl[v].node->k;
        if (kg < 1) continue;
        ++rep.chain_displacement_checked;
        if (norm1(fl[0].node->nu - fl[l].node->nu) > E2 * kg) rep.chain_displacement_failures.push_back(t->key.substr(0, 80));
    }
}

template <class F> CountingReport verify_counting(const Model<F>& m, int k_max) {
    CountingReport rep;
    int d = m.d();
    TreeEnumerator<F> te(m);
    std::vector<int> signs = m.variant == Variant::real ? std::vector<int>{0} : std::vector<int>{1, -1};
    for (int k = 1; k <= k_max; ++k)
        for (int j = 0; j < d; ++j)
            for (auto& nu : modes_within(d, k + 1))
                for (int s : signs) {
                    int sigma = m.variant == Variant::real ? minimizer_sign(m.spec, j, nu) : s;
                    for (auto& cls : te.subtrees(k, j, sigma, nu))
                        for (auto& t : expand_scales(m, cls.root)) count_tree(m, t, rep);
                }
    return rep;
}

}  // namespace lindstedt
