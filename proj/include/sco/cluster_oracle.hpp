#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sco/dot_oracle.hpp"
#include "sco/errors.hpp"
#include "sco/graph.hpp"
#include "sco/union_find.hpp"

namespace sco {

/// Analytic similarity threshold
///   theta = 0.96 (1 - 4 sqrt(eps)/phi) (gamma k / n)
///           - (sqrt(k)/n) (eps/phi^2)^(1/6) - xi/n.
/// Positive only under the conductance-gap assumption; in practice theta is
/// usually taken from the density-gap tuning procedure instead.
inline double threshold_theta(std::uint32_t n, int k, double gamma, double eps, double phi,
                              double xi) {
    const double nd = static_cast<double>(n);
    double theta = 0.96 * (1.0 - 4.0 * std::sqrt(eps) / phi) * (gamma * k / nd) -
                   (std::sqrt(static_cast<double>(k)) / nd) * std::pow(eps / (phi * phi), 1.0 / 6.0) -
                   xi / nd;
    if (!(theta > 0))
        throw NonpositiveTheta("analytic theta is nonpositive for these parameters (conductance gap too small)");
    return theta;
}

// Preprocessing result: the sketch, the clustering sample S, the similarity
// graph H on the distinct sample vertices, component labels, and the
// threshold. The full pairwise dot-product matrix is kept so that threshold
// sweeps and audits need no re-walking.
struct OracleState {
    SketchD sketch;
    double theta = 0;
    int k = 0;

    std::vector<Vertex> sample_multiset;        // S as drawn, size s
    std::vector<Vertex> nodes;                  // distinct sample vertices, sorted
    std::vector<std::uint32_t> multiplicity;    // per distinct node
    std::vector<double> pair_apx;               // dense |nodes| x |nodes|, symmetric
    std::vector<std::pair<std::uint32_t, std::uint32_t>> h_edges;  // indices into nodes
    std::vector<int> labels;                    // per distinct node, component in [0, k)

    double apx(std::size_t a, std::size_t b) const { return pair_apx[a * nodes.size() + b]; }

    std::vector<std::vector<std::uint32_t>> components() const {
        std::vector<std::vector<std::uint32_t>> out(k);
        for (std::uint32_t i = 0; i < nodes.size(); ++i) out[labels[i]].push_back(i);
        return out;
    }
};

namespace detail {

// Component labels induced by thresholding a stored pairwise matrix.
inline std::vector<int> components_at_threshold(const std::vector<Vertex>& nodes,
                                                const std::vector<double>& pair_apx, double theta,
                                                int* count_out) {
    UnionFind uf(nodes.size());
    for (std::size_t a = 0; a < nodes.size(); ++a)
        for (std::size_t b = a + 1; b < nodes.size(); ++b)
            if (pair_apx[a * nodes.size() + b] >= theta) uf.unite(a, b);
    return uf.component_labels(count_out);
}

}  // namespace detail

/// Preprocessing: samples S, builds the sketch, links sample pairs whose
/// approximate spectral dot product reaches theta, and requires the
/// similarity graph to split into exactly k connected components.
/// Throws ConstructFailed otherwise.
inline OracleState construct_oracle(const RegularView& rv, AccessCounter& counter,
                                    const OracleParams& params,
                                    std::optional<double> theta_override = std::nullopt) {
    const std::uint32_t n = rv.n();
    params.validate(n);

    OracleState state;
    state.k = params.k;
    state.theta = theta_override ? *theta_override
                                 : threshold_theta(n, params.k, params.gamma, params.eps, params.phi,
                                                   params.xi);
    if (!(state.theta > 0)) throw NonpositiveTheta("theta must be positive");

    auto eng = StreamKey::root(params.master_seed).child("construct").child("sample").engine();
    state.sample_multiset.resize(params.s);
    for (auto& v : state.sample_multiset) v = static_cast<Vertex>(uniform_index(eng, n));

    // duplicates collapse to one node of H, with multiplicity recorded
    state.nodes = state.sample_multiset;
    std::sort(state.nodes.begin(), state.nodes.end());
    state.nodes.erase(std::unique(state.nodes.begin(), state.nodes.end()), state.nodes.end());
    state.multiplicity.assign(state.nodes.size(), 0);
    for (Vertex v : state.sample_multiset) {
        auto it = std::lower_bound(state.nodes.begin(), state.nodes.end(), v);
        ++state.multiplicity[static_cast<std::size_t>(it - state.nodes.begin())];
    }

    state.sketch = initialize_oracle(rv, counter, params);

    const std::size_t m = state.nodes.size();
    state.pair_apx.assign(m * m, 0.0);
    if (params.cache_alpha) {
        AlphaCache cache(state.sketch);
        cache.warm(rv, counter, state.nodes);
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a; b < m; ++b) {
                double v = cache.dot(rv, counter, state.nodes[a], state.nodes[b]);
                state.pair_apx[a * m + b] = v;
                state.pair_apx[b * m + a] = v;
            }
    } else {
        // literal per-pair evaluation; results are identical to the cached
        // path because query vectors are deterministic per vertex
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
        for (std::uint32_t a = 0; a < m; ++a)
            for (std::uint32_t b = a; b < m; ++b) pairs.emplace_back(a, b);
        parallel_for(pairs.size(), [&](std::size_t i) {
            auto [a, b] = pairs[i];
            double v = spectral_dot_product(rv, counter, state.nodes[a], state.nodes[b], state.sketch);
            state.pair_apx[a * m + b] = v;
            state.pair_apx[b * m + a] = v;
        });
    }

    int comps = 0;
    state.labels = detail::components_at_threshold(state.nodes, state.pair_apx, state.theta, &comps);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b)
            if (state.apx(a, b) >= state.theta)
                state.h_edges.emplace_back(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b));
    if (comps != params.k) throw ConstructFailed(comps, params.k);
    return state;
}

inline constexpr int kOutlier = -1;

/// Membership search: x belongs to component i iff its approximate dot
/// product with every sample vertex of component i reaches theta. Returns
/// the unique such index, or kOutlier when none or several qualify.
inline int search_index(const RegularView& rv, AccessCounter& counter, const OracleState& state,
                        Vertex x, AlphaCache* cache = nullptr) {
    const std::size_t m = state.nodes.size();
    std::vector<double> apx(m);
    if (cache) {
        for (std::size_t a = 0; a < m; ++a) apx[a] = cache->dot(rv, counter, x, state.nodes[a]);
    } else {
        for (std::size_t a = 0; a < m; ++a)
            apx[a] = spectral_dot_product(rv, counter, x, state.nodes[a], state.sketch);
    }
    int found = kOutlier;
    for (int i = 0; i < state.k; ++i) {
        bool all = true, any = false;
        for (std::size_t a = 0; a < m; ++a) {
            if (state.labels[a] != i) continue;
            any = true;
            if (apx[a] < state.theta) {
                all = false;
                break;
            }
        }
        if (any && all) {
            if (found != kOutlier) return kOutlier;  // not unique
            found = i;
        }
    }
    return found;
}

/// Query answer: the search index when one exists, otherwise a uniform
/// random component index drawn from the provided query substream.
inline int which_cluster(const RegularView& rv, AccessCounter& counter, const OracleState& state,
                         Vertex x, StreamKey outlier_stream, AlphaCache* cache = nullptr) {
    int idx = search_index(rv, counter, state, x, cache);
    if (idx != kOutlier) return idx;
    auto eng = outlier_stream.engine();
    return static_cast<int>(uniform_index(eng, static_cast<std::uint64_t>(state.k)));
}

/// Labels every vertex of the graph. The outlier fallback substream is
/// derived per vertex, so serial and parallel sweeps agree.
inline std::vector<int> query_all(const RegularView& rv, AccessCounter& counter,
                                  const OracleState& state, bool use_cache = true) {
    std::vector<int> labels(rv.n());
    StreamKey outlier_root = StreamKey::root(state.sketch.params.master_seed).child("outlier");
    if (use_cache) {
        AlphaCache cache(state.sketch);
        std::vector<Vertex> all(rv.n());
        std::iota(all.begin(), all.end(), 0);
        cache.warm(rv, counter, state.nodes);
        cache.warm(rv, counter, all);
        parallel_for(rv.n(), [&](std::size_t x) {
            labels[x] = which_cluster(rv, counter, state, static_cast<Vertex>(x),
                                      outlier_root.child(static_cast<std::uint64_t>(x)), &cache);
        });
    } else {
        parallel_for(rv.n(), [&](std::size_t x) {
            labels[x] = which_cluster(rv, counter, state, static_cast<Vertex>(x),
                                      outlier_root.child(static_cast<std::uint64_t>(x)));
        });
    }
    return labels;
}

// ---------------------------------------------------------------------------
// State persistence: sketch container plus a sidecar holding S, the pairwise
// dot-product matrix, theta and the component labels.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kStateMagic[8] = {'S', 'C', 'O', 'S', 'T', 'A', 'T', 'E'};
inline constexpr std::uint32_t kStateVersion = 1;

}  // namespace detail

inline std::string state_sidecar_path(const std::string& sketch_path) { return sketch_path + ".state"; }

inline void save_state(const OracleState& state, const std::string& path) {
    save_sketch_file(state.sketch, path);
    std::ofstream out(state_sidecar_path(path), std::ios::binary);
    if (!out) throw IoError("cannot write " + state_sidecar_path(path));
    out.write(detail::kStateMagic, sizeof(detail::kStateMagic));
    detail::write_pod<std::uint32_t>(out, detail::kStateVersion);
    detail::write_pod<std::uint32_t>(out, state.sketch.graph_n);
    detail::write_pod<std::uint32_t>(out, state.sketch.graph_d);
    detail::write_pod<std::uint64_t>(out, state.sketch.graph_edges);
    detail::write_pod<std::int32_t>(out, state.k);
    detail::write_pod<double>(out, state.theta);
    detail::write_pod<std::uint64_t>(out, state.sample_multiset.size());
    for (Vertex v : state.sample_multiset) detail::write_pod<std::uint64_t>(out, v);
    detail::write_pod<std::uint64_t>(out, state.nodes.size());
    for (Vertex v : state.nodes) detail::write_pod<std::uint64_t>(out, v);
    for (auto mult : state.multiplicity) detail::write_pod<std::uint32_t>(out, mult);
    for (double v : state.pair_apx) detail::write_pod<double>(out, v);
    for (int l : state.labels) detail::write_pod<std::int32_t>(out, l);
    detail::write_pod<std::uint64_t>(out, state.h_edges.size());
    for (auto [a, b] : state.h_edges) {
        detail::write_pod<std::uint32_t>(out, a);
        detail::write_pod<std::uint32_t>(out, b);
    }
    if (!out) throw IoError("state: write failed");
}

inline OracleState load_state(const std::string& path, const Graph& g) {
    OracleState state;
    state.sketch = load_sketch_file(path, g);
    std::ifstream in(state_sidecar_path(path), std::ios::binary);
    if (!in) throw PreprocessingFailed("missing oracle state sidecar: " + state_sidecar_path(path));
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kStateMagic, sizeof(magic)) != 0)
        throw IoError("state: bad magic");
    auto version = detail::read_pod<std::uint32_t>(in);
    if (version != detail::kStateVersion) throw IoError("state: unsupported version");
    auto n = detail::read_pod<std::uint32_t>(in);
    auto d = detail::read_pod<std::uint32_t>(in);
    auto m = detail::read_pod<std::uint64_t>(in);
    if (n != g.n() || d != g.d() || m != g.edge_count())
        throw IoError("state: graph fingerprint mismatch");
    state.k = detail::read_pod<std::int32_t>(in);
    state.theta = detail::read_pod<double>(in);
    auto s = detail::read_pod<std::uint64_t>(in);
    state.sample_multiset.resize(s);
    for (auto& v : state.sample_multiset) v = static_cast<Vertex>(detail::read_pod<std::uint64_t>(in));
    auto nodes = detail::read_pod<std::uint64_t>(in);
    state.nodes.resize(nodes);
    for (auto& v : state.nodes) v = static_cast<Vertex>(detail::read_pod<std::uint64_t>(in));
    state.multiplicity.resize(nodes);
    for (auto& mult : state.multiplicity) mult = detail::read_pod<std::uint32_t>(in);
    state.pair_apx.resize(nodes * nodes);
    for (auto& v : state.pair_apx) v = detail::read_pod<double>(in);
    state.labels.resize(nodes);
    for (auto& l : state.labels) l = detail::read_pod<std::int32_t>(in);
    auto edges = detail::read_pod<std::uint64_t>(in);
    state.h_edges.resize(edges);
    for (auto& [a, b] : state.h_edges) {
        a = detail::read_pod<std::uint32_t>(in);
        b = detail::read_pod<std::uint32_t>(in);
    }

    // integrity: stored edges and labels must match a replay of the stored
    // pairwise matrix against theta
    int comps = 0;
    auto labels = detail::components_at_threshold(state.nodes, state.pair_apx, state.theta, &comps);
    if (comps != state.k || labels != state.labels) throw IoError("state: stored labels fail replay check");
    return state;
}

}  // namespace sco
