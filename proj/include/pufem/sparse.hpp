#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace pufem {

/// Accumulates (row, col, value) contributions with exact symmetry: only the
/// upper triangle (row <= col) is stored. Merging per-thread accumulators in
/// chunk order keeps assembly bit-reproducible for a fixed thread count.
class SparseAccumulator {
  public:
    explicit SparseAccumulator(std::int64_t n = 0) : n_(n) {
        require(n >= 0 && n < (std::int64_t(1) << 32), "SparseAccumulator: bad size");
    }

    std::int64_t size() const { return n_; }

    void add(std::int64_t r, std::int64_t c, double v) {
        if (r > c) std::swap(r, c);
        entries_[(static_cast<std::uint64_t>(r) << 32) | static_cast<std::uint64_t>(c)] += v;
    }

    void merge(const SparseAccumulator& other) {
        for (const auto& kv : other.entries_) entries_[kv.first] += kv.second;
    }

    const std::unordered_map<std::uint64_t, double>& entries() const { return entries_; }

  private:
    std::int64_t n_;
    std::unordered_map<std::uint64_t, double> entries_;
};

/// Symmetric sparse matrix in CSR form over the upper triangle. The diagonal
/// is cached; matvec expands the symmetry on the fly.
class SymmetricSparseMatrix {
  public:
    SymmetricSparseMatrix() = default;

    explicit SymmetricSparseMatrix(const SparseAccumulator& acc) : n_(acc.size()) {
        std::vector<std::pair<std::uint64_t, double>> flat(acc.entries().begin(),
                                                           acc.entries().end());
        std::sort(flat.begin(), flat.end());
        rptr_.assign(n_ + 1, 0);
        col_.reserve(flat.size());
        val_.reserve(flat.size());
        diag_.assign(n_, 0.0);
        for (const auto& kv : flat) {
            check(std::isfinite(kv.second), "SymmetricSparseMatrix: non-finite entry");
            std::int64_t r = static_cast<std::int64_t>(kv.first >> 32);
            std::int64_t c = static_cast<std::int64_t>(kv.first & 0xffffffffull);
            rptr_[r + 1] += 1;
            col_.push_back(c);
            val_.push_back(kv.second);
            if (r == c) diag_[r] = kv.second;
        }
        for (std::int64_t r = 0; r < n_; ++r) rptr_[r + 1] += rptr_[r];
    }

    std::int64_t size() const { return n_; }
    std::int64_t stored_entries() const { return static_cast<std::int64_t>(val_.size()); }
    const std::vector<double>& diagonal() const { return diag_; }

    /// y = A x (symmetric expansion of the stored triangle).
    void matvec(const double* x, double* y) const {
        for (std::int64_t i = 0; i < n_; ++i) y[i] = 0;
        for (std::int64_t r = 0; r < n_; ++r) {
            double xr = x[r], yr = 0;
            for (std::int64_t k = rptr_[r]; k < rptr_[r + 1]; ++k) {
                std::int64_t c = col_[k];
                double v = val_[k];
                yr += v * x[c];
                if (c != r) y[c] += v * xr;
            }
            y[r] += yr;
        }
    }

    std::vector<double> matvec(const std::vector<double>& x) const {
        require(static_cast<std::int64_t>(x.size()) == n_, "matvec: size mismatch");
        std::vector<double> y(n_);
        matvec(x.data(), y.data());
        return y;
    }

    /// True iff row r has no stored entries in either triangle.
    bool row_empty(std::int64_t r) const {
        if (rptr_[r] != rptr_[r + 1]) return false;
        for (std::int64_t rr = 0; rr < r; ++rr)
            for (std::int64_t k = rptr_[rr]; k < rptr_[rr + 1]; ++k)
                if (col_[k] == r) return false;
        return true;
    }

    /// Coordinate text export of the stored upper triangle:
    /// "row col value" per line, preceded by "n n nnz".
    void export_coo(std::ostream& os) const {
        os << n_ << ' ' << n_ << ' ' << val_.size() << '\n';
        char buf[72];
        for (std::int64_t r = 0; r < n_; ++r)
            for (std::int64_t k = rptr_[r]; k < rptr_[r + 1]; ++k) {
                std::snprintf(buf, sizeof buf, "%lld %lld %.17g\n",
                              static_cast<long long>(r), static_cast<long long>(col_[k]),
                              val_[k]);
                os << buf;
            }
    }

  private:
    std::int64_t n_ = 0;
    std::vector<std::int64_t> rptr_{0};
    std::vector<std::int64_t> col_;
    std::vector<double> val_;
    std::vector<double> diag_;
};

} // namespace pufem
