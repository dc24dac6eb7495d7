#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

namespace sco {

// Disjoint-set forest with union by rank and path compression.
class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
    }

    // Component index per element, numbered 0..count-1 in order of each
    // component's smallest element (deterministic labeling).
    std::vector<int> component_labels(int* count_out = nullptr) {
        std::vector<int> label(parent_.size(), -1);
        int next = 0;
        for (std::size_t i = 0; i < parent_.size(); ++i) {
            std::size_t r = find(i);
            if (label[r] < 0) label[r] = next++;
            label[i] = label[r];
        }
        if (count_out) *count_out = next;
        return label;
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::uint8_t> rank_;
};

}  // namespace sco
