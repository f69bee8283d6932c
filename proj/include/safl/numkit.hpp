#pragma once

// Numeric kernels shared by the simulator: parameter vectors, small dense
// matrices, robust statistics, a partial-pivoting solver and seeded sampling.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace safl {

/// Raised for every precondition violation in the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat real-valued vector of model dimension d. Houses models, gradients,
/// estimated updates and model differences alike.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::size_t d, double fill = 0.0) : values_(d, fill) {}
    ParamVector(std::initializer_list<double> xs) : values_(xs) {}
    explicit ParamVector(std::vector<double> xs) : values_(std::move(xs)) {}

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator[](std::size_t j) { return values_[j]; }
    double operator[](std::size_t j) const { return values_[j]; }

    std::span<double> span() noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    auto begin() noexcept { return values_.begin(); }
    auto end() noexcept { return values_.end(); }
    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    bool all_finite() const noexcept;

    ParamVector& operator+=(const ParamVector& o);
    ParamVector& operator-=(const ParamVector& o);
    ParamVector& operator*=(double s) noexcept;

    /// this += s * o
    void axpy(double s, const ParamVector& o);

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    std::vector<double> values_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a);
ParamVector operator*(double s, ParamVector a);
ParamVector operator*(ParamVector a, double s);

double dot(const ParamVector& a, const ParamVector& b);

/// Euclidean norm. Throws on non-finite input.
double l2_norm(const ParamVector& v);

/// Throws Error("non-finite vector") unless every entry is finite.
void require_finite(const ParamVector& v, const char* what = "non-finite vector");

/// Per-coordinate median. Even counts use the mean of the two middle values.
ParamVector coordinate_median(std::span<const ParamVector> vs);

/// Per-coordinate arithmetic mean.
ParamVector coordinate_mean(std::span<const ParamVector> vs);

/// Nearest-rank percentile: element ceil(alpha * N) (1-based) of the sorted
/// values, alpha in (0, 1].
double percentile(std::span<const double> values, double alpha);

/// Row-major dense matrix with rows, cols > 0.
class DenseMatrix {
public:
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::vector<double> multiply(std::span<const double> x) const;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

/// Solves (M + ridge * I) x = rhs by LU with partial pivoting.
/// Throws Error("singular system") when a pivot falls below 1e-12.
std::vector<double> solve_dense(const DenseMatrix& m, std::span<const double> rhs, double ridge = 0.0);

/// Seeded random stream. Equal seeds and equal call sequences give equal
/// outputs. split() derives statistically independent child streams so every
/// client can own its own generator.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    RngStream split(std::uint64_t key) const;

    std::uint64_t next_u64() { return engine_(); }
    double uniform01();
    /// Uniform integer in [lo, hi].
    std::size_t uniform_index(std::size_t lo, std::size_t hi);
    double normal(double mean, double std);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// d i.i.d. draws from Normal(mean, std^2).
ParamVector gaussian_sample(RngStream& rng, double mean, double std, std::size_t d);

}  // namespace safl
