#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace pufem {

template <int D>
using Vec = std::array<double, D>;

/// Integer lattice index (element or node index of a Cartesian grid).
template <int D>
using Index = std::array<std::int64_t, D>;

/// Multi-index of exponents / derivative orders.
template <int D>
using MultiIndex = std::array<int, D>;

/// std::array's size parameter is size_t, so the int-valued D of Vec<D> and
/// friends cannot be deduced from an array argument; parameters that must not
/// participate in deduction are spelled no_deduce<Vec<D>>.
template <class T>
using no_deduce = std::type_identity_t<T>;

inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

inline void check(bool cond, const std::string& what) {
    if (!cond) throw std::runtime_error(what);
}

template <std::size_t N>
std::array<double, N> operator+(const std::array<double, N>& a,
                                const std::array<double, N>& b) {
    std::array<double, N> r{};
    for (std::size_t k = 0; k < N; ++k) r[k] = a[k] + b[k];
    return r;
}

template <std::size_t N>
std::array<double, N> operator-(const std::array<double, N>& a,
                                const std::array<double, N>& b) {
    std::array<double, N> r{};
    for (std::size_t k = 0; k < N; ++k) r[k] = a[k] - b[k];
    return r;
}

template <std::size_t N>
std::array<double, N> operator*(double s, const std::array<double, N>& a) {
    std::array<double, N> r{};
    for (std::size_t k = 0; k < N; ++k) r[k] = s * a[k];
    return r;
}

template <std::size_t N>
double dot(const std::array<double, N>& a, const std::array<double, N>& b) {
    double s = 0;
    for (std::size_t k = 0; k < N; ++k) s += a[k] * b[k];
    return s;
}

template <std::size_t N>
double norm2(const std::array<double, N>& a) {
    return std::sqrt(dot(a, a));
}

inline std::int64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    std::int64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline double falling_factorial(int a, int q) {
    double r = 1;
    for (int i = 0; i < q; ++i) r *= double(a - i);
    return r;
}

template <std::size_t N>
int abs_sum(const std::array<int, N>& a) {
    int s = 0;
    for (std::size_t k = 0; k < N; ++k) s += a[k];
    return s;
}

/// All multi-indices with |alpha| <= max_degree, graded order; within one
/// degree the order is lexicographic descending on the exponent tuple.
/// The count is binomial(max_degree + D, D).
template <int D>
std::vector<MultiIndex<D>> monomial_exponents(int max_degree) {
    require(max_degree >= 0, "monomial_exponents: negative degree");
    std::vector<MultiIndex<D>> out;
    for (int deg = 0; deg <= max_degree; ++deg) {
        // compositions of deg into D nonnegative parts
        MultiIndex<D> a{};
        a[0] = deg;
        while (true) {
            out.push_back(a);
            int k = D - 2;
            while (k >= 0 && a[k] == 0) --k;
            if (k < 0) break;
            int tail = a[D - 1];
            a[D - 1] = 0;
            a[k] -= 1;
            a[k + 1] = tail + 1;
        }
    }
    return out;
}

/// Compositions of exactly `degree` into D parts (used for the |gamma| = P+1
/// stabilization sum), same ordering convention as monomial_exponents.
template <int D>
std::vector<MultiIndex<D>> exact_degree_exponents(int degree) {
    std::vector<MultiIndex<D>> out;
    MultiIndex<D> a{};
    a[0] = degree;
    while (true) {
        out.push_back(a);
        int k = D - 2;
        while (k >= 0 && a[k] == 0) --k;
        if (k < 0) break;
        int tail = a[D - 1];
        a[D - 1] = 0;
        a[k] -= 1;
        a[k + 1] = tail + 1;
    }
    return out;
}

/// Iterate integer boxes lo..hi (inclusive) in lexicographic order.
template <std::size_t N, class F>
void for_each_index(const std::array<std::int64_t, N>& lo,
                    const std::array<std::int64_t, N>& hi, F&& f) {
    std::array<std::int64_t, N> i = lo;
    for (std::size_t k = 0; k < N; ++k)
        if (lo[k] > hi[k]) return;
    while (true) {
        f(i);
        int k = static_cast<int>(N) - 1;
        while (k >= 0) {
            if (++i[k] <= hi[k]) break;
            i[k] = lo[k];
            --k;
        }
        if (k < 0) break;
    }
}

template <int D>
struct IndexHash {
    std::size_t operator()(const Index<D>& i) const {
        std::uint64_t h = 1469598103934665603ull;
        for (int k = 0; k < D; ++k) {
            h ^= static_cast<std::uint64_t>(i[k]) + 0x9e3779b97f4a7c15ull;
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

/// Run f(chunk_begin, chunk_end, chunk_id) over [0, n) split into `threads`
/// contiguous chunks. Chunk boundaries depend only on (n, threads), so any
/// caller that merges per-chunk results in chunk order is bit-reproducible
/// for a fixed thread count.
template <class F>
void parallel_chunks(std::int64_t n, int threads, F&& f) {
    if (threads < 1) threads = 1;
    if (n <= 0) return;
    if (threads == 1 || n < 2 * threads) {
        f(std::int64_t(0), n, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::int64_t per = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        std::int64_t b = t * per, e = std::min(n, b + per);
        if (b >= e) break;
        pool.emplace_back([&f, b, e, t] { f(b, e, t); });
    }
    for (auto& th : pool) th.join();
}

} // namespace pufem
