#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "snp/errors.hpp"

namespace snp {

// One named slice of the flat parameter vector. Elements of a slice are
// stored in column-major order.
struct LayoutEntry {
    std::string name;
    std::vector<Eigen::Index> shape;

    Eigen::Index size() const {
        Eigen::Index n = 1;
        for (Eigen::Index d : shape) n *= d;
        return n;
    }

    bool operator==(const LayoutEntry& other) const = default;
};

using Layout = std::vector<LayoutEntry>;
using LayoutPtr = std::shared_ptr<const Layout>;

Eigen::Index layout_size(const Layout& layout);

// Flat vector of 64-bit parameters plus the layout describing its slices.
// Value type: all operations below are pure and return fresh vectors.
// Two ParamVectors are composable iff their layouts are identical.
class ParamVector {
public:
    ParamVector() = default;
    ParamVector(LayoutPtr layout, Eigen::VectorXd values);

    static ParamVector zeros(LayoutPtr layout);

    const Layout& layout() const { return *layout_; }
    const LayoutPtr& layout_ptr() const { return layout_; }
    const Eigen::VectorXd& values() const { return values_; }
    Eigen::VectorXd& values() { return values_; }
    Eigen::Index size() const { return values_.size(); }
    bool empty() const { return layout_ == nullptr; }

    // Offset of entry `i` within the flat vector.
    Eigen::Index offset(std::size_t i) const { return offsets_[i]; }

    Eigen::Map<const Eigen::MatrixXd> matrix(std::size_t i) const;
    Eigen::Map<Eigen::MatrixXd> matrix(std::size_t i);
    Eigen::Map<const Eigen::VectorXd> vector(std::size_t i) const;
    Eigen::Map<Eigen::VectorXd> vector(std::size_t i);

    bool same_layout(const ParamVector& other) const;
    bool all_finite() const { return values_.allFinite(); }

private:
    LayoutPtr layout_;
    Eigen::VectorXd values_;
    std::vector<Eigen::Index> offsets_;
};

void require_same_layout(const ParamVector& a, const ParamVector& b, const char* op);

// out = params - lr * grad, elementwise.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr);

// Elementwise (1-r)*a + r*b; r must lie in [0, 1].
ParamVector interpolate(const ParamVector& a, const ParamVector& b, double r);

// 1 - a.b/(|a||b|), computed as |a/|a| - b/|b||^2 / 2 which is the same
// quantity but keeps full precision for nearly-parallel vectors. Range [0, 2].
double cosine_distance(const ParamVector& a, const ParamVector& b);
double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// L2 norm of a - b.
double euclidean_distance(const ParamVector& a, const ParamVector& b);

// Partial derivatives of cosine_distance(a, b) with respect to a and b.
struct CosineDistanceGrad {
    Eigen::VectorXd wrt_a;
    Eigen::VectorXd wrt_b;
};
CosineDistanceGrad cosine_distance_grad(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
CosineDistanceGrad cosine_distance_grad(const ParamVector& a, const ParamVector& b);

}  // namespace snp
