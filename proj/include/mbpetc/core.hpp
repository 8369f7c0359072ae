#pragma once

// Shared vocabulary for the mbpetc headers: vector aliases, error types,
// axis-aligned boxes, tensor grids and a small order-independent parallel
// reduction used by the grid estimators.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mbpetc {

using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

// Wrong dimensions, out-of-range arguments, malformed configuration.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A model was evaluated outside the region where it is defined.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// A grid estimate found a point violating the assumption it certifies.
struct CertificationError : std::runtime_error {
    CertificationError(const std::string& what, Vector point)
        : std::runtime_error(what), offending_point(std::move(point)) {}
    Vector offending_point;
};

// A lookup-table prediction was queried outside its box.
struct PredictionDomainError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// The closed loop left the region where the run is meaningful.
struct SimulationAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string format_vector(const Vector& v) {
    std::string out = "(";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(v[i]);
    }
    return out + ")";
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_dim(const Vector& v, Eigen::Index n, const char* what) {
    if (v.size() != n) {
        throw InputError(std::string(what) + ": expected dimension " + std::to_string(n) +
                         ", got " + std::to_string(v.size()));
    }
}

inline double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    // sqrt of the largest eigenvalue of m^T m
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m.transpose() * m, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

struct Box {
    Vector lower;
    Vector upper;

    Eigen::Index dim() const { return lower.size(); }

    bool contains(const Vector& x) const {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
        }
        return true;
    }

    Box inflated(double factor) const {
        Vector center = 0.5 * (lower + upper);
        Vector half = 0.5 * (upper - lower) * factor;
        return Box{center - half, center + half};
    }
};

// Uniform tensor grid with `per_axis` points on every axis of `box`,
// endpoints included. Points are enumerated in row-major order of the
// multi-index (last axis fastest).
class TensorGrid {
public:
    TensorGrid(Box box, std::size_t per_axis) : box_(std::move(box)), per_axis_(per_axis) {
        if (per_axis_ < 2) throw InputError("TensorGrid: need at least 2 points per axis");
        total_ = 1;
        for (Eigen::Index i = 0; i < box_.dim(); ++i) total_ *= per_axis_;
    }

    std::size_t size() const { return total_; }
    std::size_t per_axis() const { return per_axis_; }
    const Box& box() const { return box_; }

    Vector point(std::size_t flat) const {
        const auto n = box_.dim();
        Vector x(n);
        for (Eigen::Index axis = n - 1; axis >= 0; --axis) {
            const std::size_t idx = flat % per_axis_;
            flat /= per_axis_;
            const double s = static_cast<double>(idx) / static_cast<double>(per_axis_ - 1);
            x[axis] = box_.lower[axis] + s * (box_.upper[axis] - box_.lower[axis]);
        }
        return x;
    }

private:
    Box box_;
    std::size_t per_axis_;
    std::size_t total_ = 0;
};

inline unsigned worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

// Evaluates body(i) for i in [0, n) across worker threads and folds the
// results with `combine`. `combine` must be commutative and associative
// (max/min), so the result does not depend on scheduling.
template <class T, class Body, class Combine>
T parallel_reduce(std::size_t n, T identity, Body body, Combine combine) {
    const unsigned workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        T acc = identity;
        for (std::size_t i = 0; i < n; ++i) acc = combine(acc, body(i));
        return acc;
    }
    std::vector<T> partial(workers, identity);
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    T acc = identity;
                    for (std::size_t i = w; i < n; i += workers) acc = combine(acc, body(i));
                    partial[w] = acc;
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    T acc = identity;
    for (const auto& p : partial) acc = combine(acc, p);
    return acc;
}

}  // namespace mbpetc
