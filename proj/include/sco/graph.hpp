#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sco/errors.hpp"
#include "sco/rng.hpp"

namespace sco {

using Vertex = std::uint32_t;
using EdgeId = std::uint32_t;

class Graph;
struct AccessCounter;

/// Counted adjacency access: returns the i-th neighbor of x (1-indexed over
/// the sorted adjacency list) and charges one probe to the counter.
inline Vertex neighbor(const Graph& g, AccessCounter& counter, Vertex x, std::uint32_t i);

// Simple undirected graph with maximum degree at most d. Adjacency lists are
// stored sorted so that "the i-th neighbor of x" is well defined and
// deterministic. Immutable after construction; safe for concurrent readers.
class Graph {
public:
    Graph() = default;

    // Edges are undirected {u, v} pairs, u != v, no duplicates.
    // If d_override == 0 the degree bound is max(1, max observed degree).
    static Graph from_edges(std::uint32_t n, std::vector<std::pair<Vertex, Vertex>> edges,
                            std::uint32_t d_override = 0) {
        if (n == 0) throw std::invalid_argument("graph: n must be positive");
        for (auto& [u, v] : edges) {
            if (u >= n || v >= n) throw std::invalid_argument("graph: vertex id out of range");
            if (u == v) throw std::invalid_argument("graph: self-edge rejected");
            if (u > v) std::swap(u, v);
        }
        std::sort(edges.begin(), edges.end());
        if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
            throw std::invalid_argument("graph: duplicate edge rejected");

        Graph g;
        g.n_ = n;
        g.m_ = static_cast<std::uint64_t>(edges.size());
        std::vector<std::uint32_t> deg(n, 0);
        for (auto [u, v] : edges) {
            ++deg[u];
            ++deg[v];
        }
        std::uint32_t max_deg = deg.empty() ? 0 : *std::max_element(deg.begin(), deg.end());
        if (d_override > 0 && d_override < max_deg)
            throw std::invalid_argument("graph: degree bound below max observed degree");
        g.d_ = d_override > 0 ? d_override : std::max<std::uint32_t>(1, max_deg);

        g.offsets_.assign(n + 1, 0);
        for (Vertex v = 0; v < n; ++v) g.offsets_[v + 1] = g.offsets_[v] + deg[v];
        g.adj_.resize(2 * g.m_);
        g.eid_.resize(2 * g.m_);
        std::vector<std::uint64_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
        // Edge ids follow the (u < v) lexicographic order, matching the file
        // format; sorted insertion order keeps each adjacency list sorted.
        for (EdgeId id = 0; id < edges.size(); ++id) {
            auto [u, v] = edges[id];
            g.adj_[cursor[u]] = v;
            g.eid_[cursor[u]++] = id;
            g.adj_[cursor[v]] = u;
            g.eid_[cursor[v]++] = id;
        }
        for (Vertex v = 0; v < n; ++v) {
            auto lo = g.offsets_[v], hi = g.offsets_[v + 1];
            // neighbors were appended in increasing edge order; the list at v
            // is sorted except possibly interleaving of (smaller, larger) ids.
            std::vector<std::pair<Vertex, EdgeId>> tmp;
            tmp.reserve(hi - lo);
            for (auto i = lo; i < hi; ++i) tmp.emplace_back(g.adj_[i], g.eid_[i]);
            std::sort(tmp.begin(), tmp.end());
            for (auto i = lo; i < hi; ++i) {
                g.adj_[i] = tmp[i - lo].first;
                g.eid_[i] = tmp[i - lo].second;
            }
        }
        return g;
    }

    std::uint32_t n() const { return n_; }
    std::uint32_t d() const { return d_; }
    std::uint64_t edge_count() const { return m_; }

    std::uint32_t degree(Vertex x) const { return static_cast<std::uint32_t>(offsets_[x + 1] - offsets_[x]); }

    // Uncounted access, for verification paths and I/O only. The sublinear
    // pipeline must go through neighbor() so the counter sees every probe.
    Vertex neighbor_uncounted(Vertex x, std::uint32_t i) const { return adj_[offsets_[x] + (i - 1)]; }
    EdgeId edge_id(Vertex x, std::uint32_t i) const { return eid_[offsets_[x] + (i - 1)]; }

    bool has_edge(Vertex u, Vertex v) const {
        auto lo = adj_.begin() + static_cast<std::ptrdiff_t>(offsets_[u]);
        auto hi = adj_.begin() + static_cast<std::ptrdiff_t>(offsets_[u + 1]);
        return std::binary_search(lo, hi, v);
    }

    // Undirected edges as (u, v) with u < v, in edge-id order.
    std::vector<std::pair<Vertex, Vertex>> edges() const {
        std::vector<std::pair<Vertex, Vertex>> out(m_);
        for (Vertex u = 0; u < n_; ++u)
            for (auto i = offsets_[u]; i < offsets_[u + 1]; ++i)
                if (u < adj_[i]) out[eid_[i]] = {u, adj_[i]};
        return out;
    }

private:
    std::uint32_t n_ = 0;
    std::uint32_t d_ = 1;
    std::uint64_t m_ = 0;
    std::vector<std::uint64_t> offsets_;
    std::vector<Vertex> adj_;
    std::vector<EdgeId> eid_;
};

// d-regularized view of a d-bounded graph: every vertex gets self-loops of
// total weight w_self(x) = (d - deg(x)) / 2. The lazy walk on the view moves
// to each neighbor with probability 1/(2d) and stays put otherwise, so a
// step from x moves with probability deg(x)/(2d).
struct RegularView {
    const Graph* base;

    explicit RegularView(const Graph& g) : base(&g) {}

    double self_loop_weight(Vertex x) const { return (base->d() - base->degree(x)) * 0.5; }
    double move_probability(Vertex x) const {
        return static_cast<double>(base->degree(x)) / (2.0 * base->d());
    }
    std::uint32_t n() const { return base->n(); }
    std::uint32_t d() const { return base->d(); }
};

// Tracks adjacency probes and the set of distinct edges touched. Atomic
// accumulation lets concurrent walk batches share one counter; the final
// tallies do not depend on the thread schedule. Probes are sharded across
// cache lines to keep concurrent walks from serializing on one counter word.
struct AccessCounter {
    explicit AccessCounter(const Graph& g) : touched_(g.edge_count()), edge_capacity_(g.edge_count()) {
        for (auto& t : touched_) t.store(0, std::memory_order_relaxed);
    }

    std::uint64_t probes() const {
        std::uint64_t total = 0;
        for (const auto& s : shards_) total += s.count.load(std::memory_order_relaxed);
        return total;
    }
    std::uint64_t distinct_edges() const { return distinct_.load(std::memory_order_relaxed); }
    std::uint64_t walks_started() const { return walks_.load(std::memory_order_relaxed); }

    void record_probe(EdgeId e) {
        shard().count.fetch_add(1, std::memory_order_relaxed);
        if (!touched_[e].exchange(1, std::memory_order_relaxed))
            distinct_.fetch_add(1, std::memory_order_relaxed);
    }
    void record_walk() { walks_.fetch_add(1, std::memory_order_relaxed); }

    void reset() {
        for (auto& s : shards_) s.count.store(0, std::memory_order_relaxed);
        distinct_.store(0, std::memory_order_relaxed);
        walks_.store(0, std::memory_order_relaxed);
        for (auto& t : touched_) t.store(0, std::memory_order_relaxed);
    }

    std::uint64_t edge_capacity() const { return edge_capacity_; }

    AccessCounter(const AccessCounter&) = delete;
    AccessCounter& operator=(const AccessCounter&) = delete;

private:
    struct alignas(64) Shard {
        std::atomic<std::uint64_t> count{0};
    };
    Shard& shard() {
        thread_local const std::uint64_t id =
            std::hash<std::thread::id>{}(std::this_thread::get_id());
        return shards_[id % kShards];
    }
    static constexpr std::size_t kShards = 16;
    Shard shards_[kShards];
    std::atomic<std::uint64_t> distinct_{0};
    std::atomic<std::uint64_t> walks_{0};
    std::vector<std::atomic<std::uint8_t>> touched_;
    std::uint64_t edge_capacity_ = 0;
};

inline Vertex neighbor(const Graph& g, AccessCounter& counter, Vertex x, std::uint32_t i) {
    if (i < 1 || i > g.degree(x)) throw std::out_of_range("neighbor: index out of range");
    counter.record_probe(g.edge_id(x, i));
    return g.neighbor_uncounted(x, i);
}

// Ground-truth or predicted k-partition: assign[v] in [0, k).
struct Partition {
    int k = 0;
    std::vector<int> assign;

    std::vector<std::vector<Vertex>> clusters() const {
        std::vector<std::vector<Vertex>> out(k);
        for (Vertex v = 0; v < assign.size(); ++v) {
            if (assign[v] < 0 || assign[v] >= k) throw std::invalid_argument("partition: label out of range");
            out[assign[v]].push_back(v);
        }
        return out;
    }

    void validate_ground_truth() const {
        auto cs = clusters();
        for (const auto& c : cs)
            if (c.empty()) throw std::invalid_argument("partition: empty cluster in ground truth");
    }
};

struct PerturbationSpec {
    enum class Mode { PerClusterVertex, GlobalRandom };
    Mode mode = Mode::PerClusterVertex;
    std::uint32_t del_num = 0;   // per chosen vertex, PerClusterVertex mode
    std::uint64_t total = 0;     // GlobalRandom mode
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Stochastic block model generation.
//
// Every intra-cluster pair is adjacent independently with probability p and
// every inter-cluster pair with probability q. Pair enumeration uses
// geometric gap sampling, so the cost is O(n + edges) rather than O(n^2).
// The degree bound d is recorded as the maximum observed degree.
// ---------------------------------------------------------------------------

namespace detail {

// Appends edges for the ordered pair stream (pairs of `count` items mapped
// through `emit`) where each pair is kept independently with probability p.
template <typename Emit>
void sample_pairs(std::uint64_t count, double p, std::mt19937_64& eng, Emit emit) {
    if (p <= 0.0 || count == 0) return;
    if (p >= 1.0) {
        for (std::uint64_t idx = 0; idx < count; ++idx) emit(idx);
        return;
    }
    const double log1mp = std::log1p(-p);
    std::uint64_t idx = 0;
    while (true) {
        double u = 1.0 - uniform01(eng);  // (0, 1]
        double jump = std::floor(std::log(u) / log1mp);
        if (jump >= static_cast<double>(count - idx)) break;
        idx += static_cast<std::uint64_t>(jump);
        if (idx >= count) break;
        emit(idx);
        ++idx;
        if (idx >= count) break;
    }
}

}  // namespace detail

inline std::pair<Graph, Partition> generate_sbm(std::uint32_t n, int k, double p, double q,
                                                std::vector<std::uint32_t> sizes, std::uint64_t seed) {
    if (n == 0 || k <= 0) throw std::invalid_argument("sbm: n and k must be positive");
    if (!(0.0 <= q && q <= p && p <= 1.0)) throw std::invalid_argument("sbm: need 0 <= q <= p <= 1");
    if (sizes.empty()) {
        sizes.assign(k, n / k);
        for (std::uint32_t i = 0; i < n % k; ++i) ++sizes[i];
    }
    if (static_cast<int>(sizes.size()) != k) throw std::invalid_argument("sbm: sizes.size() != k");
    if (std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0}) != n)
        throw std::invalid_argument("sbm: sizes must sum to n");

    Partition truth;
    truth.k = k;
    truth.assign.resize(n);
    std::vector<std::uint32_t> start(k + 1, 0);
    for (int i = 0; i < k; ++i) start[i + 1] = start[i] + sizes[i];
    for (int i = 0; i < k; ++i)
        for (std::uint32_t v = start[i]; v < start[i + 1]; ++v) truth.assign[v] = i;

    std::vector<std::pair<Vertex, Vertex>> edges;
    auto eng = StreamKey::root(seed).child("sbm").engine();
    for (int a = 0; a < k; ++a) {
        // intra-cluster block: triangular pair index -> (u, v); indices arrive
        // in increasing order, so the row cursor advances monotonically
        std::uint32_t m = sizes[a];
        std::uint64_t pairs = m > 0 ? static_cast<std::uint64_t>(m) * (m - 1) / 2 : 0;
        std::uint64_t row = 0, row_base = 0;
        detail::sample_pairs(pairs, p, eng, [&](std::uint64_t idx) {
            while (idx - row_base >= m - 1 - row) {
                row_base += m - 1 - row;
                ++row;
            }
            edges.emplace_back(start[a] + static_cast<Vertex>(row),
                               start[a] + static_cast<Vertex>(row + 1 + (idx - row_base)));
        });
        for (int b = a + 1; b < k; ++b) {
            std::uint64_t cross = static_cast<std::uint64_t>(sizes[a]) * sizes[b];
            detail::sample_pairs(cross, q, eng, [&](std::uint64_t idx) {
                edges.emplace_back(start[a] + static_cast<Vertex>(idx / sizes[b]),
                                   start[b] + static_cast<Vertex>(idx % sizes[b]));
            });
        }
    }
    return {Graph::from_edges(n, std::move(edges)), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Conductance.
// ---------------------------------------------------------------------------

/// Outer conductance |E(C, V \ C)| / (d |C|).
inline double outer_conductance(const Graph& g, const std::vector<Vertex>& C) {
    if (C.empty()) throw std::invalid_argument("outer_conductance: empty set");
    std::vector<std::uint8_t> in(g.n(), 0);
    for (Vertex v : C) in[v] = 1;
    std::uint64_t cut = 0;
    for (Vertex v : C)
        for (std::uint32_t i = 1; i <= g.degree(v); ++i)
            if (!in[g.neighbor_uncounted(v, i)]) ++cut;
    return static_cast<double>(cut) / (static_cast<double>(g.d()) * C.size());
}

inline constexpr std::uint32_t kInnerConductanceCap = 20;

/// Inner conductance of C: min over S subset C, 0 < |S| <= |C|/2, of
/// |E(S, C \ S)| / (d |S|); 1 when |C| = 1. Brute force, |C| <= cap.
inline double inner_conductance_exact(const Graph& g, const std::vector<Vertex>& C,
                                      std::uint32_t cap = kInnerConductanceCap) {
    if (C.empty()) throw std::invalid_argument("inner_conductance: empty set");
    if (C.size() > cap) throw std::invalid_argument("inner_conductance: set exceeds brute-force cap");
    const std::size_t m = C.size();
    if (m == 1) return 1.0;
    // adjacency restricted to C, as bitmasks over C's index space
    std::vector<std::uint32_t> mask(m, 0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j && g.has_edge(C[i], C[j])) mask[i] |= (1u << j);
    double best = std::numeric_limits<double>::infinity();
    const std::uint32_t full = (m == 32) ? ~0u : ((1u << m) - 1);
    for (std::uint32_t S = 1; S < full; ++S) {
        std::uint32_t size = static_cast<std::uint32_t>(__builtin_popcount(S));
        if (2 * size > m) continue;
        std::uint64_t cut = 0;
        for (std::uint32_t rest = S; rest;) {
            std::uint32_t i = static_cast<std::uint32_t>(__builtin_ctz(rest));
            rest &= rest - 1;
            cut += __builtin_popcount(mask[i] & (full & ~S));
        }
        best = std::min(best, static_cast<double>(cut) / (static_cast<double>(g.d()) * size));
    }
    return best;
}

/// Conductance of the whole graph: min over C, 0 < |C| <= n/2, of
/// outer conductance. Equals inner_conductance_exact on the full vertex set.
inline double graph_conductance_exact(const Graph& g, std::uint32_t cap = kInnerConductanceCap) {
    std::vector<Vertex> all(g.n());
    std::iota(all.begin(), all.end(), 0);
    return inner_conductance_exact(g, all, cap);
}

// Induced subgraph on C (vertices re-indexed by position in C), keeping the
// parent degree bound so conductance and Laplacian normalizations agree.
inline Graph induced_subgraph(const Graph& g, const std::vector<Vertex>& C) {
    std::vector<std::int64_t> pos(g.n(), -1);
    for (std::size_t i = 0; i < C.size(); ++i) pos[C[i]] = static_cast<std::int64_t>(i);
    std::vector<std::pair<Vertex, Vertex>> edges;
    for (std::size_t i = 0; i < C.size(); ++i) {
        Vertex v = C[i];
        for (std::uint32_t j = 1; j <= g.degree(v); ++j) {
            Vertex w = g.neighbor_uncounted(v, j);
            if (v < w && pos[w] >= 0)
                edges.emplace_back(static_cast<Vertex>(i), static_cast<Vertex>(pos[w]));
        }
    }
    return Graph::from_edges(static_cast<std::uint32_t>(C.size()), std::move(edges), g.d());
}

// ---------------------------------------------------------------------------
// Edge deletion (robustness experiments). Vertex set and degree bound are
// kept; the RegularView absorbs degree loss into the self-loop weights.
// ---------------------------------------------------------------------------

inline Graph delete_edges(const Graph& g, const PerturbationSpec& spec,
                          const Partition* truth = nullptr) {
    auto edges = g.edges();
    auto eng = StreamKey::root(spec.seed).child("delete").engine();
    std::vector<std::uint8_t> dropped(edges.size(), 0);

    if (spec.mode == PerturbationSpec::Mode::GlobalRandom) {
        std::uint64_t want = std::min<std::uint64_t>(spec.total, edges.size());
        std::vector<std::uint32_t> order(edges.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::uint64_t i = 0; i < want; ++i) {
            std::uint64_t j = i + uniform_index(eng, order.size() - i);
            std::swap(order[i], order[j]);
            dropped[order[i]] = 1;
        }
    } else {
        if (!truth) throw std::invalid_argument("delete_edges: per-cluster mode needs a partition");
        auto clusters = truth->clusters();
        for (const auto& cluster : clusters) {
            if (cluster.empty()) continue;
            Vertex x = cluster[uniform_index(eng, cluster.size())];
            // intra-cluster incident edges of x
            std::vector<EdgeId> intra;
            for (std::uint32_t i = 1; i <= g.degree(x); ++i) {
                Vertex y = g.neighbor_uncounted(x, i);
                if (truth->assign[y] == truth->assign[x]) intra.push_back(g.edge_id(x, i));
            }
            std::uint32_t want = std::min<std::uint32_t>(spec.del_num, static_cast<std::uint32_t>(intra.size()));
            for (std::uint32_t i = 0; i < want; ++i) {
                std::uint64_t j = i + uniform_index(eng, intra.size() - i);
                std::swap(intra[i], intra[j]);
                dropped[intra[i]] = 1;
            }
        }
    }

    std::vector<std::pair<Vertex, Vertex>> kept;
    kept.reserve(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i)
        if (!dropped[i]) kept.push_back(edges[i]);
    return Graph::from_edges(g.n(), std::move(kept), g.d());
}

// ---------------------------------------------------------------------------
// Plain-text formats.
//   Graph:      line 1 "n d edge_count", then one "u v" per line, 0-indexed,
//               u < v, sorted lexicographically.
//   Partition:  one label per line, 0-indexed clusters.
// ---------------------------------------------------------------------------

inline void save_graph(const Graph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << g.n() << ' ' << g.d() << ' ' << g.edge_count() << '\n';
    for (auto [u, v] : g.edges()) out << u << ' ' << v << '\n';
    if (!out) throw IoError("write failed: " + path);
}

inline Graph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::uint32_t n = 0, d = 0;
    std::uint64_t m = 0;
    if (!(in >> n >> d >> m)) throw IoError("bad graph header: " + path);
    std::vector<std::pair<Vertex, Vertex>> edges;
    edges.reserve(m);
    Vertex u, v;
    while (in >> u >> v) edges.emplace_back(u, v);
    if (edges.size() != m) throw IoError("edge count mismatch in " + path);
    return Graph::from_edges(n, std::move(edges), d);
}

inline void save_partition(const Partition& part, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (int label : part.assign) out << label << '\n';
    if (!out) throw IoError("write failed: " + path);
}

inline Partition load_partition(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    Partition p;
    int label;
    while (in >> label) p.assign.push_back(label);
    p.k = p.assign.empty() ? 0 : *std::max_element(p.assign.begin(), p.assign.end()) + 1;
    return p;
}

// Full BFS through the counted interface; touches every edge of the graph
// reachable from the start set. Used to sanity-check access accounting.
inline void bfs_all(const Graph& g, AccessCounter& counter) {
    std::vector<std::uint8_t> seen(g.n(), 0);
    for (Vertex s = 0; s < g.n(); ++s) {
        if (seen[s]) continue;
        std::queue<Vertex> q;
        q.push(s);
        seen[s] = 1;
        while (!q.empty()) {
            Vertex v = q.front();
            q.pop();
            for (std::uint32_t i = 1; i <= g.degree(v); ++i) {
                Vertex w = neighbor(g, counter, v, i);
                if (!seen[w]) {
                    seen[w] = 1;
                    q.push(w);
                }
            }
        }
    }
}

}  // namespace sco
