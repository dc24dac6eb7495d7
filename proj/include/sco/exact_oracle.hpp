#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sco/graph.hpp"
#include "sco/rng.hpp"

namespace sco {

// ---------------------------------------------------------------------------
// Brute-force spectral reference. Dense eigensolves only; capped at desk
// scale. The sublinear pipeline never calls into this module — it exists to
// provide exact embeddings, cluster centers and executable inequality checks
// against which the sketch-based oracle is validated.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDenseEigenCap = 2000;

// Walk-consistent normalized Laplacian of the d-regularized view:
// L = (D - A) / d. The lazy walk operator is exactly M = I - L/2, and the
// spectrum satisfies 0 <= lambda_1 <= ... <= lambda_n <= 2.
inline Eigen::MatrixXd regular_view_laplacian(const RegularView& rv) {
    const Graph& g = *rv.base;
    const double d = g.d();
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(g.n(), g.n());
    for (Vertex v = 0; v < g.n(); ++v) {
        L(v, v) = g.degree(v) / d;
        for (std::uint32_t i = 1; i <= g.degree(v); ++i) L(v, g.neighbor_uncounted(v, i)) = -1.0 / d;
    }
    return L;
}

// Regularized Laplacian in the self-loop bookkeeping form used by the
// perturbation analysis: diagonal 1 - w_self(x)/d, off-diagonal -1/d on
// edges. Deleting one edge changes this matrix by a perturbation of
// Frobenius norm exactly sqrt(10)/(2d).
inline Eigen::MatrixXd self_loop_laplacian(const RegularView& rv) {
    const Graph& g = *rv.base;
    const double d = g.d();
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(g.n(), g.n());
    for (Vertex v = 0; v < g.n(); ++v) {
        L(v, v) = 1.0 - rv.self_loop_weight(v) / d;
        for (std::uint32_t i = 1; i <= g.degree(v); ++i) L(v, g.neighbor_uncounted(v, i)) = -1.0 / d;
    }
    return L;
}

struct EmbeddingMatrix {
    std::uint32_t n = 0;
    int k = 0;
    Eigen::MatrixXd u_k;                  // n x k, bottom-k orthonormal eigenvectors
    std::vector<double> eigenvalues;      // bottom-k, ascending
    std::vector<double> full_spectrum;    // all eigenvalues when n <= 500, else empty
    double lambda_max = 0;
    bool spectrally_ambiguous = false;    // lambda_k ~ lambda_{k+1}

    Eigen::RowVectorXd embedding(Vertex x) const { return u_k.row(x); }
};

inline double exact_dot(const EmbeddingMatrix& emb, Vertex x, Vertex y) {
    return emb.u_k.row(x).dot(emb.u_k.row(y));
}

namespace detail {

// Deterministic sign: first coordinate with magnitude above tolerance is
// made positive, so repeated solves return identical matrices.
inline void fix_eigenvector_signs(Eigen::MatrixXd& vecs) {
    for (Eigen::Index c = 0; c < vecs.cols(); ++c) {
        double scale = vecs.col(c).cwiseAbs().maxCoeff();
        double tol = 1e-9 * std::max(scale, 1.0);
        for (Eigen::Index r = 0; r < vecs.rows(); ++r) {
            double v = vecs(r, c);
            if (std::abs(v) > tol) {
                if (v < 0) vecs.col(c) = -vecs.col(c);
                break;
            }
        }
    }
}

}  // namespace detail

/// Exact spectral embedding: rows of the bottom-k eigenvector matrix of the
/// regularized-view Laplacian.
inline EmbeddingMatrix exact_embeddings(const RegularView& rv, int k,
                                        std::uint32_t cap = kDenseEigenCap) {
    const std::uint32_t n = rv.n();
    if (n > cap) throw std::invalid_argument("exact_embeddings: n exceeds dense eigensolve cap");
    if (k < 1 || static_cast<std::uint32_t>(k) > n)
        throw std::invalid_argument("exact_embeddings: k out of range");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(regular_view_laplacian(rv));
    if (solver.info() != Eigen::Success) throw Error("exact_embeddings: eigensolve failed");

    EmbeddingMatrix emb;
    emb.n = n;
    emb.k = k;
    Eigen::MatrixXd vecs = solver.eigenvectors().leftCols(k);
    detail::fix_eigenvector_signs(vecs);
    emb.u_k = vecs;
    emb.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + k);
    emb.lambda_max = solver.eigenvalues()(n - 1);
    if (n <= 500)
        emb.full_spectrum.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    if (static_cast<std::uint32_t>(k) < n)
        emb.spectrally_ambiguous = (solver.eigenvalues()(k) - solver.eigenvalues()(k - 1)) < 1e-9;
    return emb;
}

struct CenterSet {
    Eigen::MatrixXd mu;                 // k x k, row i = center of cluster i
    std::vector<std::uint64_t> sizes;   // |C_i|
};

inline CenterSet cluster_centers(const EmbeddingMatrix& emb, const Partition& part) {
    if (part.assign.size() != emb.n) throw std::invalid_argument("cluster_centers: partition size mismatch");
    CenterSet cs;
    cs.mu = Eigen::MatrixXd::Zero(part.k, emb.k);
    cs.sizes.assign(part.k, 0);
    for (Vertex x = 0; x < emb.n; ++x) {
        cs.mu.row(part.assign[x]) += emb.u_k.row(x);
        ++cs.sizes[part.assign[x]];
    }
    for (int i = 0; i < part.k; ++i) {
        if (cs.sizes[i] == 0) throw std::invalid_argument("cluster_centers: empty cluster");
        cs.mu.row(i) /= static_cast<double>(cs.sizes[i]);
    }
    return cs;
}

// Good/bad classification. A vertex is good with respect to (alpha, beta)
// when it passes all three embedding tests:
//   norm:    ||f_x||^2        <= (1/alpha) (k/n)
//   center:  ||f_x - mu_x||^2 <= 4 k eps / (beta phi^2 n)
//   angle:   <f_x, mu_x>      >= 0.96 ||mu_x||^2
struct GoodBadReport {
    double alpha = 0, beta = 0;
    std::vector<std::uint8_t> in_norm_set;    // V-hat
    std::vector<std::uint8_t> in_center_set;  // V-tilde
    std::vector<std::uint8_t> in_angle_set;   // union of the per-cluster C-tilde sets
    std::vector<std::uint8_t> good;
    std::uint64_t bad_count = 0;
    double bad_fraction = 0;  // kappa
};

inline double default_alpha_beta(int k, double eps, double phi) {
    return 2.0 * std::sqrt(static_cast<double>(k)) * std::cbrt(eps / (phi * phi));
}

inline GoodBadReport classify_good_bad(const EmbeddingMatrix& emb, const CenterSet& centers,
                                       const Partition& part, double alpha, double beta, double eps,
                                       double phi) {
    const std::uint32_t n = emb.n;
    const int k = emb.k;
    GoodBadReport rep;
    rep.alpha = alpha;
    rep.beta = beta;
    rep.in_norm_set.assign(n, 0);
    rep.in_center_set.assign(n, 0);
    rep.in_angle_set.assign(n, 0);
    rep.good.assign(n, 0);
    const double norm_bound = (1.0 / alpha) * (static_cast<double>(k) / n);
    const double center_bound = 4.0 * k * eps / (beta * phi * phi * n);
    for (Vertex x = 0; x < n; ++x) {
        int c = part.assign[x];
        const auto fx = emb.u_k.row(x);
        double fx2 = fx.squaredNorm();
        double dev2 = (fx - centers.mu.row(c)).squaredNorm();
        double angle = fx.dot(centers.mu.row(c));
        rep.in_norm_set[x] = fx2 <= norm_bound;
        rep.in_center_set[x] = dev2 <= center_bound;
        rep.in_angle_set[x] = angle >= 0.96 * centers.mu.row(c).squaredNorm();
        rep.good[x] = rep.in_norm_set[x] && rep.in_center_set[x] && rep.in_angle_set[x];
        if (!rep.good[x]) ++rep.bad_count;
    }
    rep.bad_fraction = static_cast<double>(rep.bad_count) / n;
    return rep;
}

// Measured clustering quality: eps is the worst outer conductance over the
// clusters; phi is the worst inner conductance, brute-forced when the
// cluster is small enough and otherwise lower-bounded through the spectral
// gap (lambda_2 / 2), in which case the audit is conservative.
struct MeasuredQuality {
    double eps = 0;
    double phi = 0;
    bool phi_is_cheeger_bound = false;
};

inline double cluster_lambda2(const Graph& g, const std::vector<Vertex>& cluster) {
    Graph sub = induced_subgraph(g, cluster);
    RegularView rv(sub);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(regular_view_laplacian(rv));
    return solver.eigenvalues()(std::min<Eigen::Index>(1, solver.eigenvalues().size() - 1));
}

inline MeasuredQuality measure_quality(const Graph& g, const Partition& part,
                                       std::uint32_t brute_cap = kInnerConductanceCap) {
    MeasuredQuality q;
    q.phi = std::numeric_limits<double>::infinity();
    for (const auto& cluster : part.clusters()) {
        q.eps = std::max(q.eps, outer_conductance(g, cluster));
        if (cluster.size() <= brute_cap) {
            Graph sub = induced_subgraph(g, cluster);
            q.phi = std::min(q.phi, graph_conductance_exact(sub, brute_cap));
        } else {
            q.phi = std::min(q.phi, cluster_lambda2(g, cluster) / 2.0);
            q.phi_is_cheeger_bound = true;
        }
    }
    return q;
}

// ---------------------------------------------------------------------------
// Executable lemma audit: evaluates the embedding inequalities over all
// applicable vertices / pairs and reports worst-case slack (rhs - lhs for
// upper bounds, lhs - rhs for lower bounds; nonnegative means the
// inequality holds).
// ---------------------------------------------------------------------------

struct LemmaCheck {
    std::string name;
    std::uint64_t instances = 0;
    double worst_slack = std::numeric_limits<double>::infinity();
    bool pass = true;

    void record(double slack) {
        ++instances;
        if (slack < worst_slack) worst_slack = slack;
        if (slack < 0) pass = false;
    }
};

struct LemmaAudit {
    std::vector<LemmaCheck> checks;
    double eps = 0, phi = 0;
    bool conservative_phi = false;
    bool spectrally_ambiguous = false;

    bool all_pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const LemmaCheck& c) { return c.pass; });
    }
};

inline LemmaAudit check_lemma_bounds(const EmbeddingMatrix& emb, const CenterSet& centers,
                                     const Partition& part, const GoodBadReport& report, double eps,
                                     double phi, bool conservative_phi = false,
                                     std::uint64_t unit_vector_seed = 17) {
    const std::uint32_t n = emb.n;
    const int k = emb.k;
    const double ratio = eps / (phi * phi);
    LemmaAudit audit;
    audit.eps = eps;
    audit.phi = phi;
    audit.conservative_phi = conservative_phi;
    audit.spectrally_ambiguous = emb.spectrally_ambiguous;

    // Aggregate center deviation: sum_x ||f_x - mu_x||^2 <= 4 k eps / phi^2.
    LemmaCheck agg{.name = "center-deviation-total"};
    double total_dev = 0;
    for (Vertex x = 0; x < n; ++x)
        total_dev += (emb.u_k.row(x) - centers.mu.row(part.assign[x])).squaredNorm();
    agg.record(4.0 * k * ratio - total_dev);
    audit.checks.push_back(agg);

    // Directional deviation: for unit vectors a,
    // sum_i sum_{x in C_i} <f_x - mu_i, a>^2 <= 4 eps / phi^2.
    LemmaCheck dir{.name = "center-deviation-directional"};
    auto eng = StreamKey::root(unit_vector_seed).child("lemma-unit").engine();
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXd a(k);
        // Gaussian via Box-Muller on our deterministic uniforms, then normalize.
        for (int i = 0; i < k; ++i) {
            double u1 = std::max(uniform01(eng), 1e-300);
            double u2 = uniform01(eng);
            a(i) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        }
        a.normalize();
        double acc = 0;
        for (Vertex x = 0; x < n; ++x) {
            double proj = (emb.u_k.row(x) - centers.mu.row(part.assign[x])).dot(a.transpose());
            acc += proj * proj;
        }
        dir.record(4.0 * ratio - acc);
    }
    audit.checks.push_back(dir);

    // Center norms: | ||mu_i||^2 - 1/|C_i| | <= (4 sqrt(eps)/phi) / |C_i|.
    LemmaCheck norms{.name = "center-norms"};
    const double sqrt_ratio = 4.0 * std::sqrt(eps) / phi;
    for (int i = 0; i < part.k; ++i) {
        double inv = 1.0 / static_cast<double>(centers.sizes[i]);
        norms.record(sqrt_ratio * inv - std::abs(centers.mu.row(i).squaredNorm() - inv));
    }
    audit.checks.push_back(norms);

    // Center orthogonality: |<mu_i, mu_j>| <= (8 sqrt(eps)/phi) / sqrt(|C_i||C_j|).
    LemmaCheck ortho{.name = "center-orthogonality"};
    for (int i = 0; i < part.k; ++i)
        for (int j = i + 1; j < part.k; ++j) {
            double bound = 2.0 * sqrt_ratio /
                           std::sqrt(static_cast<double>(centers.sizes[i]) * static_cast<double>(centers.sizes[j]));
            ortho.record(bound - std::abs(centers.mu.row(i).dot(centers.mu.row(j))));
        }
    audit.checks.push_back(ortho);

    // Pairwise dot-product bounds over good vertices.
    LemmaCheck intra{.name = "good-intra-dot-lower"};
    LemmaCheck inter{.name = "good-inter-dot-upper"};
    const double cross_term = (std::sqrt(static_cast<double>(k)) / n) * std::pow(ratio, 1.0 / 6.0);
    std::vector<Vertex> good_vertices;
    for (Vertex x = 0; x < n; ++x)
        if (report.good[x]) good_vertices.push_back(x);
    for (std::size_t ix = 0; ix < good_vertices.size(); ++ix) {
        Vertex x = good_vertices[ix];
        int cx = part.assign[x];
        for (std::size_t iy = ix + 1; iy < good_vertices.size(); ++iy) {
            Vertex y = good_vertices[iy];
            int cy = part.assign[y];
            double dot = exact_dot(emb, x, y);
            if (cx == cy) {
                double lower = 0.96 * (1.0 - 4.0 * std::sqrt(eps) / phi) / static_cast<double>(centers.sizes[cx]) -
                               cross_term;
                intra.record(dot - lower);
            } else {
                // bound is asymmetric in (i, j); both orderings are valid
                // statements, so audit each
                for (auto [ci, cj] : {std::pair<int, int>{cx, cy}, std::pair<int, int>{cy, cx}}) {
                    double upper =
                        cross_term +
                        (std::sqrt(2.0) * std::pow(static_cast<double>(k), 0.25) / std::sqrt(static_cast<double>(n))) *
                            std::cbrt(ratio) *
                            std::sqrt((1.0 + 4.0 * std::sqrt(eps) / phi) / static_cast<double>(centers.sizes[cj])) +
                        8.0 * std::sqrt(eps) / phi /
                            std::sqrt(static_cast<double>(centers.sizes[ci]) * static_cast<double>(centers.sizes[cj]));
                    inter.record(upper - dot);
                }
            }
        }
    }
    audit.checks.push_back(intra);
    audit.checks.push_back(inter);

    // Set-size guarantees from the three defining lemmas.
    LemmaCheck sizes{.name = "good-set-sizes"};
    std::uint64_t nhat = 0, ntilde = 0;
    for (Vertex x = 0; x < n; ++x) {
        nhat += report.in_norm_set[x];
        ntilde += report.in_center_set[x];
    }
    sizes.record(static_cast<double>(nhat) - (1.0 - report.alpha) * n);
    sizes.record(static_cast<double>(ntilde) - (1.0 - report.beta) * n);
    std::vector<std::uint64_t> angle_ok(part.k, 0);
    for (Vertex x = 0; x < n; ++x)
        if (report.in_angle_set[x]) ++angle_ok[part.assign[x]];
    for (int i = 0; i < part.k; ++i) {
        double missing_allowed = 1e4 * ratio * static_cast<double>(centers.sizes[i]);
        sizes.record(missing_allowed - static_cast<double>(centers.sizes[i] - angle_ok[i]));
    }
    audit.checks.push_back(sizes);
    return audit;
}

// ---------------------------------------------------------------------------
// Perturbation audit (edge-deletion robustness).
// ---------------------------------------------------------------------------

struct ClusterPerturbation {
    int cluster = 0;
    std::uint64_t deleted_edges = 0;       // c
    double lambda2_before = 0, lambda2_after = 0;  // self-loop form
    double weyl_bound = 0;                 // sqrt(10)/(2d) * c
    bool weyl_pass = true;
    std::optional<double> phi_in_after;    // brute force, if |C| small enough
    double cheeger_lower_after = 0;        // lambda2(walk form)/2
    bool cheeger_pass = true;
};

struct PerturbAudit {
    std::vector<ClusterPerturbation> clusters;
    bool all_pass() const {
        return std::all_of(clusters.begin(), clusters.end(),
                           [](const ClusterPerturbation& c) { return c.weyl_pass && c.cheeger_pass; });
    }
};

/// Audits per-cluster spectral stability after edge deletion: the second
/// eigenvalue of the regularized cluster Laplacian moves by at most
/// sqrt(10)/(2d) per deleted edge, and the (brute-force) inner conductance
/// stays above the spectral lower bound lambda_2 / 2.
inline PerturbAudit check_perturbation_bounds(const RegularView& before, const RegularView& after,
                                              const Partition& part,
                                              std::uint32_t cap = kDenseEigenCap) {
    if (before.n() != after.n()) throw std::invalid_argument("perturbation audit: vertex sets differ");
    const double d = before.d();
    PerturbAudit audit;
    for (int i = 0; i < part.k; ++i) {
        std::vector<Vertex> cluster;
        for (Vertex v = 0; v < before.n(); ++v)
            if (part.assign[v] == i) cluster.push_back(v);
        if (cluster.empty()) continue;
        if (cluster.size() > cap) throw std::invalid_argument("perturbation audit: cluster exceeds eigensolve cap");

        Graph sub_before = induced_subgraph(*before.base, cluster);
        Graph sub_after = induced_subgraph(*after.base, cluster);
        ClusterPerturbation cp;
        cp.cluster = i;
        cp.deleted_edges = sub_before.edge_count() - sub_after.edge_count();

        RegularView rv_b(sub_before), rv_a(sub_after);
        auto lambda2_of = [](const Eigen::MatrixXd& L) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L);
            return solver.eigenvalues()(std::min<Eigen::Index>(1, solver.eigenvalues().size() - 1));
        };
        cp.lambda2_before = lambda2_of(self_loop_laplacian(rv_b));
        cp.lambda2_after = lambda2_of(self_loop_laplacian(rv_a));
        cp.weyl_bound = std::sqrt(10.0) / (2.0 * d) * static_cast<double>(cp.deleted_edges);
        cp.weyl_pass = std::abs(cp.lambda2_after - cp.lambda2_before) <= cp.weyl_bound + 1e-12;

        cp.cheeger_lower_after = lambda2_of(regular_view_laplacian(rv_a)) / 2.0;
        if (cluster.size() <= kInnerConductanceCap) {
            cp.phi_in_after = graph_conductance_exact(sub_after);
            cp.cheeger_pass = *cp.phi_in_after >= cp.cheeger_lower_after - 1e-12;
        }
        audit.clusters.push_back(cp);
    }
    return audit;
}

}  // namespace sco
