#pragma once

// Least-squares projection onto nonincreasing sequences.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace icecore {

/// Weighted pool-adjacent-violators, linear time. Returns the minimizer of
/// sum w_i (v_i - g_i)^2 subject to g_1 >= g_2 >= ... >= g_n. Equal adjacent
/// block means are pooled. An empty `weights` span means uniform weights.
inline std::vector<double> pava_nonincreasing(std::span<const double> values, std::span<const double> weights = {}) {
    const std::size_t n = values.size();
    if (n == 0) throw std::invalid_argument("pava_nonincreasing: empty input");
    if (!weights.empty() && weights.size() != n)
        throw std::invalid_argument("pava_nonincreasing: weights length mismatch");

    struct Block {
        double sum;    // sum of w*v
        double weight; // sum of w
        std::size_t count;
        double mean() const { return sum / weight; }
    };
    std::vector<Block> stack;
    stack.reserve(n);

    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (!(w > 0.0)) throw std::invalid_argument("pava_nonincreasing: non-positive weight");
        Block cur{w * values[i], w, 1};
        while (!stack.empty() && stack.back().mean() <= cur.mean()) {
            const Block& prev = stack.back();
            cur = {prev.sum + cur.sum, prev.weight + cur.weight, prev.count + cur.count};
            stack.pop_back();
        }
        stack.push_back(cur);
    }

    std::vector<double> out;
    out.reserve(n);
    for (const Block& b : stack) out.insert(out.end(), b.count, b.mean());
    return out;
}

/// Direct min-max evaluation of the nonincreasing isotonic fit:
/// g_i = min_{j<=i} max_{l>=i} mean(v_j..v_l). Cubic time; meant for checking.
inline std::vector<double> minmax_nonincreasing(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n == 0) throw std::invalid_argument("minmax_nonincreasing: empty input");
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + values[i];

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
            double inner = -std::numeric_limits<double>::infinity();
            for (std::size_t l = i; l < n; ++l)
                inner = std::max(inner, (prefix[l + 1] - prefix[j]) / static_cast<double>(l - j + 1));
            best = std::min(best, inner);
        }
        out[i] = best;
    }
    return out;
}

/// Nonincreasing levels at strictly increasing knots. Evaluation interpolates
/// linearly between knots and holds the end levels outside them.
class MonotoneStepFn {
public:
    MonotoneStepFn() = default;

    MonotoneStepFn(std::vector<double> knots, std::vector<double> levels)
        : knots_(std::move(knots)), levels_(std::move(levels)) {
        if (knots_.size() != levels_.size() || knots_.empty())
            throw std::invalid_argument("MonotoneStepFn: knots and levels must be nonempty and aligned");
    }

    const std::vector<double>& knots() const noexcept { return knots_; }
    const std::vector<double>& levels() const noexcept { return levels_; }
    std::size_t size() const noexcept { return knots_.size(); }

    double operator()(double z) const {
        if (z <= knots_.front()) return levels_.front();
        if (z >= knots_.back()) return levels_.back();
        const auto it = std::upper_bound(knots_.begin(), knots_.end(), z);
        const auto hi = static_cast<std::size_t>(it - knots_.begin());
        const std::size_t lo = hi - 1;
        const double span = knots_[hi] - knots_[lo];
        if (span <= 0.0) return levels_[hi];
        const double t = (z - knots_[lo]) / span;
        return levels_[lo] + t * (levels_[hi] - levels_[lo]);
    }

private:
    std::vector<double> knots_;
    std::vector<double> levels_;
};

} // namespace icecore
