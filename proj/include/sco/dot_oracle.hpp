#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sco/errors.hpp"
#include "sco/graph.hpp"
#include "sco/parallel.hpp"
#include "sco/rng.hpp"
#include "sco/walks.hpp"

namespace sco {

// All tunable quantities of the sketch-based dot-product oracle and the
// clustering layer above it. The asymptotic formulas behind R_init, R_query
// and s_oracle hide constants; here they are explicit fields with defaults
// produced by default_params() and normally overridden with values found by
// the density-gap tuning procedure.
struct OracleParams {
    int k = 2;
    double phi = 1.0;
    double eps = 0.0;
    double gamma = 1.0;
    double delta = 0.5;
    double xi = 0.0;

    std::uint32_t t = 1;          // walk length
    std::uint32_t s = 1;          // clustering sample size |S|
    std::uint32_t s_oracle = 1;   // |I_S|
    std::uint64_t r_init = 1;
    std::uint64_t r_query = 1;
    int reps = 1;                 // median repetitions

    std::uint64_t master_seed = 0;
    bool cache_alpha = false;     // reuse query vectors across dot products

    void validate(std::uint32_t n) const {
        if (k < 2) throw std::invalid_argument("params: k must be >= 2");
        if (!(phi > 0 && phi <= 1)) throw std::invalid_argument("params: phi out of (0,1]");
        if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("params: gamma out of (0,1]");
        if (eps < 0) throw std::invalid_argument("params: eps must be >= 0");
        if (!(delta > 0 && delta < 1)) throw std::invalid_argument("params: delta out of (0,1)");
        double n5 = std::pow(static_cast<double>(n), 5.0);
        if (!(xi > 1.0 / n5 && xi < 1)) throw std::invalid_argument("params: xi out of (1/n^5, 1)");
        if (s < 1 || s_oracle < 1 || r_init < 1 || r_query < 1 || reps < 1 || t < 1)
            throw std::invalid_argument("params: sampling quantities must be >= 1");
    }
};

struct ParamOverrides {
    std::optional<std::uint32_t> t, s, s_oracle;
    std::optional<std::uint64_t> r_init, r_query;
    std::optional<int> reps;
    std::optional<double> delta, xi;
    std::optional<std::uint64_t> master_seed;
    std::optional<bool> cache_alpha;
};

inline std::uint32_t walk_length_for(double n, double phi) {
    return static_cast<std::uint32_t>(std::ceil(20.0 * std::log(n) / (phi * phi)));
}

// Hard cap on the formula-derived sampling quantities; anything beyond it is
// far outside the desk-scale regime and should come from tuning instead.
inline constexpr std::uint64_t kParamCap = 1'000'000;

/// Concrete parameters from (n, k, phi, eps, gamma):
///   xi       = sqrt(gamma)/1000
///   t        = ceil(20 ln n / phi^2)
///   s        = max(ceil(10 k ln k / gamma), 10 k)
///   s_oracle = n^(480 eps/phi^2) * ln n * k^8 / xi^2        (capped)
///   R_init   = n^(1 - delta + 980 eps/phi^2) * k^17 / xi^2  (capped)
///   R_query  = n^(delta + 500 eps/phi^2) * k^9 / xi^2       (capped)
///   reps     = ceil(log2 n)
/// Every field can be overridden; the formulas are initial guesses with all
/// O-constants set to 1.
inline OracleParams default_params(std::uint32_t n, int k, double phi, double eps, double gamma,
                                   const ParamOverrides& o = {}) {
    if (n < 2 || k < 2) throw std::invalid_argument("default_params: need n >= 2, k >= 2");
    OracleParams p;
    p.k = k;
    p.phi = phi;
    p.eps = eps;
    p.gamma = gamma;
    p.delta = o.delta.value_or(0.5);
    p.xi = o.xi.value_or(std::sqrt(gamma) / 1000.0);
    p.master_seed = o.master_seed.value_or(0);
    p.cache_alpha = o.cache_alpha.value_or(false);

    const double nd = static_cast<double>(n);
    const double kd = static_cast<double>(k);
    const double ratio = eps / (phi * phi);
    auto capped = [](double v) {
        if (!(v > 0)) return std::uint64_t{1};
        return v >= static_cast<double>(kParamCap) ? kParamCap
                                                   : static_cast<std::uint64_t>(std::ceil(v));
    };

    p.t = o.t.value_or(walk_length_for(nd, phi));
    p.s = o.s.value_or(static_cast<std::uint32_t>(
        std::max(std::ceil(10.0 * kd * std::log(kd) / gamma), std::ceil(10.0 * kd))));
    p.s_oracle = o.s_oracle.value_or(static_cast<std::uint32_t>(std::min<std::uint64_t>(
        n, capped(std::pow(nd, 480.0 * ratio) * std::log(nd) * std::pow(kd, 8) / (p.xi * p.xi)))));
    p.r_init = o.r_init.value_or(
        capped(std::pow(nd, 1.0 - p.delta + 980.0 * ratio) * std::pow(kd, 17) / (p.xi * p.xi)));
    p.r_query = o.r_query.value_or(
        capped(std::pow(nd, p.delta + 500.0 * ratio) * std::pow(kd, 9) / (p.xi * p.xi)));
    p.reps = o.reps.value_or(static_cast<int>(std::ceil(std::log2(nd))));
    p.validate(n);
    return p;
}

// Preprocessed sketch: the bilinear form Psi over the oracle sample I_S plus
// the stored per-repetition distribution matrices the query phase projects
// against.
struct SketchD {
    Eigen::MatrixXd psi;                       // s_oracle x s_oracle, PSD, rank <= k
    std::vector<DistributionMatrix> q_mats;    // Q_1 .. Q_reps
    std::vector<Vertex> sample_ids;            // I_S
    OracleParams params;
    std::uint32_t graph_n = 0, graph_d = 0;
    std::uint64_t graph_edges = 0;
};

// Eigenvalues at or below this fraction of the largest count as
// non-invertible when building Psi.
inline constexpr double kSpectrumFloor = 1e-12;

/// Builds the sketch: samples I_S with replacement, stores `reps` fresh
/// distribution matrices, estimates the collision-probability Gram matrix,
/// and inverts its top-k spectrum into Psi. Throws DegenerateSpectrum when
/// the top-k eigenvalues are not safely positive.
inline SketchD initialize_oracle(const RegularView& rv, AccessCounter& counter,
                                 const OracleParams& params) {
    const std::uint32_t n = rv.n();
    params.validate(n);
    StreamKey root = StreamKey::root(params.master_seed).child("init");

    SketchD sketch;
    sketch.params = params;
    sketch.graph_n = n;
    sketch.graph_d = rv.d();
    sketch.graph_edges = rv.base->edge_count();

    auto sample_eng = root.child("sample").engine();
    sketch.sample_ids.resize(params.s_oracle);
    for (auto& v : sketch.sample_ids) v = static_cast<Vertex>(uniform_index(sample_eng, n));

    sketch.q_mats.resize(params.reps);
    StreamKey q_stream = root.child("q-mats");
    for (int i = 0; i < params.reps; ++i)
        sketch.q_mats[i] = estimate_transition_matrix(rv, counter, sketch.sample_ids, params.r_init,
                                                      params.t, q_stream.child(static_cast<std::uint64_t>(i)));

    GramEstimate gram = estimate_collision_probabilities(rv, counter, sketch.sample_ids, params.r_init,
                                                         params.t, params.reps, root.child("gram"));

    const std::size_t s = sketch.sample_ids.size();
    const double scale = static_cast<double>(n) / static_cast<double>(s);
    Eigen::MatrixXd G(s, s);
    for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b) G(a, b) = scale * gram.at(a, b);
    Eigen::MatrixXd sym = 0.5 * (G + G.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw Error("initialize_oracle: eigensolve failed");

    // eigenvalues ascending; take the k largest
    const auto& evals = solver.eigenvalues();
    double top = evals(static_cast<Eigen::Index>(s) - 1);
    if (!(top > 0)) throw DegenerateSpectrum("collision spectrum has no positive eigenvalue");
    for (int i = 0; i < params.k; ++i) {
        double lambda = evals(static_cast<Eigen::Index>(s) - 1 - i);
        if (!(lambda > kSpectrumFloor * top))
            throw DegenerateSpectrum("top-" + std::to_string(params.k) +
                                     " collision eigenvalue not invertible; raise R_init or s_oracle");
    }
    Eigen::MatrixXd w_k(s, params.k);
    Eigen::VectorXd inv_sq(params.k);
    for (int i = 0; i < params.k; ++i) {
        Eigen::Index col = static_cast<Eigen::Index>(s) - 1 - i;
        w_k.col(i) = solver.eigenvectors().col(col);
        double lambda = evals(col);
        inv_sq(i) = 1.0 / (lambda * lambda);
    }
    sketch.psi = scale * w_k * inv_sq.asDiagonal() * w_k.transpose();
    return sketch;
}

/// Query vector alpha_x: for each stored repetition, runs fresh walks from x,
/// projects the endpoint distribution against that repetition's stored
/// columns, and takes the entrywise lower median across repetitions.
/// Deterministic per (x, sketch): substreams are keyed by (seed, "query",
/// x, rep), independent of call order.
inline Eigen::VectorXd query_vector(const RegularView& rv, AccessCounter& counter, Vertex x,
                                    const SketchD& sketch) {
    const auto& p = sketch.params;
    const std::size_t s = sketch.sample_ids.size();
    StreamKey base = StreamKey::root(p.master_seed).child("query").child(x);
    Eigen::MatrixXd per_rep(p.reps, s);
    for (int i = 0; i < p.reps; ++i) {
        EmpiricalDistribution mx =
            run_random_walks(rv, counter, p.r_query, p.t, x, base.child(static_cast<std::uint64_t>(i)));
        const DistributionMatrix& Q = sketch.q_mats[i];
        for (std::size_t a = 0; a < s; ++a) per_rep(i, a) = sparse_dot(Q.columns[a], mx);
    }
    Eigen::VectorXd alpha(s);
    std::vector<double> buf(p.reps);
    for (std::size_t a = 0; a < s; ++a) {
        for (int i = 0; i < p.reps; ++i) buf[static_cast<std::size_t>(i)] = per_rep(i, a);
        alpha(static_cast<Eigen::Index>(a)) = lower_median(buf);
    }
    return alpha;
}

/// Approximate spectral dot product <f_x, f_y> = alpha_x^T Psi alpha_y.
/// Always runs 2 * reps * R_query walk simulations (two query vectors),
/// also when x == y.
inline double spectral_dot_product(const RegularView& rv, AccessCounter& counter, Vertex x, Vertex y,
                                   const SketchD& sketch) {
    Eigen::VectorXd ax = query_vector(rv, counter, x, sketch);
    Eigen::VectorXd ay = query_vector(rv, counter, y, sketch);
    return ax.dot(sketch.psi * ay);
}

// Optional cache of query vectors. Because query_vector is deterministic per
// (x, sketch), caching never changes a result — only the number of walks
// charged to the counter. Off by default so the per-query cost profile
// matches the uncached algorithm.
class AlphaCache {
public:
    explicit AlphaCache(const SketchD& sketch) : sketch_(&sketch) {}

    const Eigen::VectorXd& get(const RegularView& rv, AccessCounter& counter, Vertex x) {
        auto it = cache_.find(x);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(x, query_vector(rv, counter, x, *sketch_)).first->second;
    }

    // Precompute vectors for a batch of vertices in parallel.
    void warm(const RegularView& rv, AccessCounter& counter, const std::vector<Vertex>& xs) {
        std::vector<Vertex> missing;
        for (Vertex x : xs)
            if (!cache_.count(x)) missing.push_back(x);
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::vector<Eigen::VectorXd> vecs(missing.size());
        parallel_for(missing.size(),
                     [&](std::size_t i) { vecs[i] = query_vector(rv, counter, missing[i], *sketch_); });
        for (std::size_t i = 0; i < missing.size(); ++i) cache_.emplace(missing[i], std::move(vecs[i]));
    }

    double dot(const RegularView& rv, AccessCounter& counter, Vertex x, Vertex y) {
        const Eigen::VectorXd& ax = get(rv, counter, x);
        const Eigen::VectorXd& ay = get(rv, counter, y);
        return ax.dot(sketch_->psi * ay);
    }

private:
    const SketchD* sketch_;
    std::unordered_map<Vertex, Eigen::VectorXd> cache_;
};

// ---------------------------------------------------------------------------
// Sketch persistence: versioned little-endian binary container.
// Header: magic, version, n, d, edge_count, all parameters. Body: Psi
// row-major float64, then each stored distribution matrix column by column.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kSketchMagic[8] = {'S', 'C', 'O', 'S', 'K', 'T', 'C', 'H'};
inline constexpr std::uint32_t kSketchVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("sketch: truncated file");
    return v;
}

inline void write_params(std::ostream& out, const OracleParams& p) {
    write_pod<std::int32_t>(out, p.k);
    write_pod<double>(out, p.phi);
    write_pod<double>(out, p.eps);
    write_pod<double>(out, p.gamma);
    write_pod<double>(out, p.delta);
    write_pod<double>(out, p.xi);
    write_pod<std::uint32_t>(out, p.t);
    write_pod<std::uint32_t>(out, p.s);
    write_pod<std::uint32_t>(out, p.s_oracle);
    write_pod<std::uint64_t>(out, p.r_init);
    write_pod<std::uint64_t>(out, p.r_query);
    write_pod<std::int32_t>(out, p.reps);
    write_pod<std::uint64_t>(out, p.master_seed);
    write_pod<std::uint8_t>(out, p.cache_alpha ? 1 : 0);
}

inline OracleParams read_params(std::istream& in) {
    OracleParams p;
    p.k = read_pod<std::int32_t>(in);
    p.phi = read_pod<double>(in);
    p.eps = read_pod<double>(in);
    p.gamma = read_pod<double>(in);
    p.delta = read_pod<double>(in);
    p.xi = read_pod<double>(in);
    p.t = read_pod<std::uint32_t>(in);
    p.s = read_pod<std::uint32_t>(in);
    p.s_oracle = read_pod<std::uint32_t>(in);
    p.r_init = read_pod<std::uint64_t>(in);
    p.r_query = read_pod<std::uint64_t>(in);
    p.reps = read_pod<std::int32_t>(in);
    p.master_seed = read_pod<std::uint64_t>(in);
    p.cache_alpha = read_pod<std::uint8_t>(in) != 0;
    return p;
}

}  // namespace detail

inline void save_sketch(const SketchD& sketch, std::ostream& out) {
    out.write(detail::kSketchMagic, sizeof(detail::kSketchMagic));
    detail::write_pod<std::uint32_t>(out, detail::kSketchVersion);
    detail::write_pod<std::uint32_t>(out, sketch.graph_n);
    detail::write_pod<std::uint32_t>(out, sketch.graph_d);
    detail::write_pod<std::uint64_t>(out, sketch.graph_edges);
    detail::write_params(out, sketch.params);

    detail::write_pod<std::uint64_t>(out, sketch.sample_ids.size());
    for (Vertex v : sketch.sample_ids) detail::write_pod<std::uint64_t>(out, v);

    const auto rows = static_cast<std::uint64_t>(sketch.psi.rows());
    detail::write_pod<std::uint64_t>(out, rows);
    for (std::uint64_t r = 0; r < rows; ++r)
        for (std::uint64_t c = 0; c < rows; ++c)
            detail::write_pod<double>(out, sketch.psi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));

    detail::write_pod<std::uint64_t>(out, sketch.q_mats.size());
    for (const auto& mat : sketch.q_mats) {
        detail::write_pod<std::uint64_t>(out, mat.columns.size());
        for (const auto& col : mat.columns) {
            detail::write_pod<std::uint64_t>(out, col.origin);
            detail::write_pod<std::uint64_t>(out, col.walks);
            detail::write_pod<std::uint32_t>(out, col.length);
            detail::write_pod<std::uint64_t>(out, col.support.size());
            for (auto [v, f] : col.support) {
                detail::write_pod<std::uint64_t>(out, v);
                detail::write_pod<double>(out, f);
            }
        }
    }
    if (!out) throw IoError("sketch: write failed");
}

inline SketchD load_sketch(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kSketchMagic, sizeof(magic)) != 0)
        throw IoError("sketch: bad magic (not a sketch file or wrong version)");
    auto version = detail::read_pod<std::uint32_t>(in);
    if (version != detail::kSketchVersion)
        throw IoError("sketch: unsupported version " + std::to_string(version));

    SketchD sketch;
    sketch.graph_n = detail::read_pod<std::uint32_t>(in);
    sketch.graph_d = detail::read_pod<std::uint32_t>(in);
    sketch.graph_edges = detail::read_pod<std::uint64_t>(in);
    sketch.params = detail::read_params(in);

    auto s = detail::read_pod<std::uint64_t>(in);
    sketch.sample_ids.resize(s);
    for (auto& v : sketch.sample_ids) v = static_cast<Vertex>(detail::read_pod<std::uint64_t>(in));

    auto rows = detail::read_pod<std::uint64_t>(in);
    sketch.psi.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rows));
    for (std::uint64_t r = 0; r < rows; ++r)
        for (std::uint64_t c = 0; c < rows; ++c)
            sketch.psi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = detail::read_pod<double>(in);

    auto reps = detail::read_pod<std::uint64_t>(in);
    sketch.q_mats.resize(reps);
    for (auto& mat : sketch.q_mats) {
        auto cols = detail::read_pod<std::uint64_t>(in);
        mat.sample_ids = sketch.sample_ids;
        mat.columns.resize(cols);
        for (auto& col : mat.columns) {
            col.origin = static_cast<Vertex>(detail::read_pod<std::uint64_t>(in));
            col.walks = detail::read_pod<std::uint64_t>(in);
            col.length = detail::read_pod<std::uint32_t>(in);
            auto sup = detail::read_pod<std::uint64_t>(in);
            col.support.resize(sup);
            for (auto& [v, f] : col.support) {
                v = static_cast<Vertex>(detail::read_pod<std::uint64_t>(in));
                f = detail::read_pod<double>(in);
            }
        }
    }
    return sketch;
}

inline void save_sketch_file(const SketchD& sketch, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    save_sketch(sketch, out);
}

/// Loads a sketch and validates its header against the target graph.
inline SketchD load_sketch_file(const std::string& path, const Graph& g) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    SketchD sketch = load_sketch(in);
    if (sketch.graph_n != g.n() || sketch.graph_d != g.d() || sketch.graph_edges != g.edge_count())
        throw IoError("sketch: graph fingerprint mismatch (built for a different graph)");
    return sketch;
}

}  // namespace sco
