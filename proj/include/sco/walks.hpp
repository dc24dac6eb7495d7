#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "sco/graph.hpp"
#include "sco/parallel.hpp"
#include "sco/rng.hpp"

namespace sco {

// Endpoint distribution of R lazy random walks of length t from one vertex.
// Sparse: support size is at most min(R, n), and every fraction is an exact
// multiple of 1/R.
struct EmpiricalDistribution {
    Vertex origin = 0;
    std::uint64_t walks = 0;   // R
    std::uint32_t length = 0;  // t
    std::vector<std::pair<Vertex, double>> support;  // sorted by vertex

    double at(Vertex v) const {
        auto it = std::lower_bound(support.begin(), support.end(), v,
                                   [](const auto& a, Vertex b) { return a.first < b; });
        return (it != support.end() && it->first == v) ? it->second : 0.0;
    }

    double sum() const {
        double s = 0;
        for (auto& [v, f] : support) s += f;
        return s;
    }
};

// Sparse l2 distance between two endpoint distributions.
inline double l2_distance(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
    double acc = 0;
    auto ia = a.support.begin(), ib = b.support.begin();
    while (ia != a.support.end() || ib != b.support.end()) {
        if (ib == b.support.end() || (ia != a.support.end() && ia->first < ib->first)) {
            acc += ia->second * ia->second;
            ++ia;
        } else if (ia == a.support.end() || ib->first < ia->first) {
            acc += ib->second * ib->second;
            ++ib;
        } else {
            double diff = ia->second - ib->second;
            acc += diff * diff;
            ++ia;
            ++ib;
        }
    }
    return std::sqrt(acc);
}

inline double sparse_dot(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
    double acc = 0;
    auto ia = a.support.begin(), ib = b.support.begin();
    while (ia != a.support.end() && ib != b.support.end()) {
        if (ia->first < ib->first)
            ++ia;
        else if (ib->first < ia->first)
            ++ib;
        else {
            acc += ia->second * ib->second;
            ++ia;
            ++ib;
        }
    }
    return acc;
}

/// Simulates R independent lazy walks of length t from x and returns the
/// empirical endpoint distribution. Each step draws one uniform u in [0,1):
/// if u < deg(pos)/(2d) the walk moves to neighbor floor(u*2d)+1, else it
/// stays. All neighbor lookups go through the counted accessor.
inline EmpiricalDistribution run_random_walks(const RegularView& rv, AccessCounter& counter,
                                              std::uint64_t R, std::uint32_t t, Vertex x,
                                              StreamKey stream) {
    if (R < 1) throw std::invalid_argument("run_random_walks: R must be >= 1");
    const Graph& g = *rv.base;
    const double two_d = 2.0 * g.d();
    auto eng = stream.engine();
    std::unordered_map<Vertex, std::uint64_t> counts;
    counts.reserve(std::min<std::uint64_t>(R, g.n()));
    for (std::uint64_t w = 0; w < R; ++w) {
        counter.record_walk();
        Vertex pos = x;
        for (std::uint32_t step = 0; step < t; ++step) {
            double u = uniform01(eng);
            std::uint32_t deg = g.degree(pos);
            if (u < static_cast<double>(deg) / two_d) {
                auto i = std::min(static_cast<std::uint32_t>(u * two_d) + 1, deg);
                pos = neighbor(g, counter, pos, i);
            }
        }
        ++counts[pos];
    }
    EmpiricalDistribution dist;
    dist.origin = x;
    dist.walks = R;
    dist.length = t;
    dist.support.reserve(counts.size());
    for (auto& [v, c] : counts) dist.support.emplace_back(v, static_cast<double>(c) / static_cast<double>(R));
    std::sort(dist.support.begin(), dist.support.end());
    return dist;
}

// Columns are endpoint distributions, one per sample in I_S (a multiset:
// repeated ids get independent columns).
struct DistributionMatrix {
    std::vector<Vertex> sample_ids;               // I_S
    std::vector<EmpiricalDistribution> columns;   // column j from sample_ids[j]
};

/// One endpoint-distribution column per sample, each with its own derived
/// substream so parallel and serial execution agree bit for bit.
inline DistributionMatrix estimate_transition_matrix(const RegularView& rv, AccessCounter& counter,
                                                     const std::vector<Vertex>& sample_ids,
                                                     std::uint64_t R, std::uint32_t t,
                                                     StreamKey stream) {
    if (sample_ids.empty()) throw std::invalid_argument("estimate_transition_matrix: empty sample");
    DistributionMatrix mat;
    mat.sample_ids = sample_ids;
    mat.columns.resize(sample_ids.size());
    parallel_for(sample_ids.size(), [&](std::size_t j) {
        mat.columns[j] = run_random_walks(rv, counter, R, t, sample_ids[j], stream.child(j));
    });
    return mat;
}

// Dense symmetric collision-probability estimate over the sample set,
// G = median_i of (P_i^T Q_i + Q_i^T P_i) / 2. Exactly symmetric; entries
// are inner products of sub-probability vectors, so they lie in [0, 1].
struct GramEstimate {
    std::size_t size = 0;
    std::vector<double> values;  // row-major size x size

    double& at(std::size_t a, std::size_t b) { return values[a * size + b]; }
    double at(std::size_t a, std::size_t b) const { return values[a * size + b]; }
};

// Lower median: for an even count the smaller of the two middle values.
inline double lower_median(std::vector<double>& v) {
    auto mid = v.begin() + (v.size() - 1) / 2;
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

/// For each repetition draws fresh Q and P distribution matrices, forms the
/// symmetrized product, and returns the entrywise (lower) median across
/// repetitions.
inline GramEstimate estimate_collision_probabilities(const RegularView& rv, AccessCounter& counter,
                                                     const std::vector<Vertex>& sample_ids,
                                                     std::uint64_t R, std::uint32_t t, int reps,
                                                     StreamKey stream) {
    if (reps < 1) throw std::invalid_argument("estimate_collision_probabilities: reps must be >= 1");
    const std::size_t s = sample_ids.size();
    std::vector<GramEstimate> per_rep(reps);
    for (int i = 0; i < reps; ++i) {
        StreamKey rep_stream = stream.child(static_cast<std::uint64_t>(i));
        DistributionMatrix Q = estimate_transition_matrix(rv, counter, sample_ids, R, t, rep_stream.child("q"));
        DistributionMatrix P = estimate_transition_matrix(rv, counter, sample_ids, R, t, rep_stream.child("p"));
        GramEstimate& gi = per_rep[i];
        gi.size = s;
        gi.values.assign(s * s, 0.0);
        parallel_for(s, [&](std::size_t a) {
            for (std::size_t b = a; b < s; ++b) {
                double v = 0.5 * (sparse_dot(P.columns[a], Q.columns[b]) +
                                  sparse_dot(Q.columns[a], P.columns[b]));
                gi.at(a, b) = v;
                gi.at(b, a) = v;
            }
        });
    }
    GramEstimate out;
    out.size = s;
    out.values.assign(s * s, 0.0);
    std::vector<double> buf(reps);
    for (std::size_t a = 0; a < s; ++a) {
        for (std::size_t b = a; b < s; ++b) {
            for (int i = 0; i < reps; ++i) buf[static_cast<std::size_t>(i)] = per_rep[i].at(a, b);
            double med = lower_median(buf);
            out.at(a, b) = med;
            out.at(b, a) = med;
        }
    }
    return out;
}

}  // namespace sco
