#include "snp/param_vector.hpp"

namespace snp {

Eigen::Index layout_size(const Layout& layout) {
    Eigen::Index n = 0;
    for (const auto& e : layout) n += e.size();
    return n;
}

ParamVector::ParamVector(LayoutPtr layout, Eigen::VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
    if (!layout_) throw ValueError("ParamVector: null layout");
    if (layout_size(*layout_) != values_.size())
        throw ShapeError("ParamVector: layout wants " + std::to_string(layout_size(*layout_)) +
                         " values, got " + std::to_string(values_.size()));
    offsets_.reserve(layout_->size());
    Eigen::Index off = 0;
    for (const auto& e : *layout_) {
        offsets_.push_back(off);
        off += e.size();
    }
}

ParamVector ParamVector::zeros(LayoutPtr layout) {
    if (!layout) throw ValueError("ParamVector::zeros: null layout");
    return ParamVector(layout, Eigen::VectorXd::Zero(layout_size(*layout)));
}

Eigen::Map<const Eigen::MatrixXd> ParamVector::matrix(std::size_t i) const {
    const auto& e = (*layout_)[i];
    if (e.shape.size() != 2) throw ShapeError("ParamVector::matrix: entry " + e.name + " is not 2-d");
    return {values_.data() + offsets_[i], e.shape[0], e.shape[1]};
}

Eigen::Map<Eigen::MatrixXd> ParamVector::matrix(std::size_t i) {
    const auto& e = (*layout_)[i];
    if (e.shape.size() != 2) throw ShapeError("ParamVector::matrix: entry " + e.name + " is not 2-d");
    return {values_.data() + offsets_[i], e.shape[0], e.shape[1]};
}

Eigen::Map<const Eigen::VectorXd> ParamVector::vector(std::size_t i) const {
    return {values_.data() + offsets_[i], (*layout_)[i].size()};
}

Eigen::Map<Eigen::VectorXd> ParamVector::vector(std::size_t i) {
    return {values_.data() + offsets_[i], (*layout_)[i].size()};
}

bool ParamVector::same_layout(const ParamVector& other) const {
    if (layout_ == other.layout_) return true;
    if (!layout_ || !other.layout_) return false;
    return *layout_ == *other.layout_;
}

void require_same_layout(const ParamVector& a, const ParamVector& b, const char* op) {
    if (!a.same_layout(b)) throw ShapeError(std::string(op) + ": layout mismatch");
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
    require_same_layout(params, grad, "sgd_step");
    return {params.layout_ptr(), params.values() - lr * grad.values()};
}

ParamVector interpolate(const ParamVector& a, const ParamVector& b, double r) {
    require_same_layout(a, b, "interpolate");
    if (!(r >= 0.0 && r <= 1.0))
        throw ValueError("interpolate: r must be in [0, 1], got " + std::to_string(r));
    return {a.layout_ptr(), (1.0 - r) * a.values() + r * b.values()};
}

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw ShapeError("cosine_distance: size mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        throw ValueError("cosine_distance: undefined for a zero-norm vector");
    return 0.5 * (a / na - b / nb).squaredNorm();
}

double cosine_distance(const ParamVector& a, const ParamVector& b) {
    require_same_layout(a, b, "cosine_distance");
    return cosine_distance(a.values(), b.values());
}

double euclidean_distance(const ParamVector& a, const ParamVector& b) {
    require_same_layout(a, b, "euclidean_distance");
    return (a.values() - b.values()).norm();
}

CosineDistanceGrad cosine_distance_grad(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw ShapeError("cosine_distance_grad: size mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        throw ValueError("cosine_distance_grad: undefined for a zero-norm vector");
    const Eigen::VectorXd ahat = a / na;
    const Eigen::VectorXd bhat = b / nb;
    const double cos = ahat.dot(bhat);
    CosineDistanceGrad g;
    g.wrt_a = (cos * ahat - bhat) / na;
    g.wrt_b = (cos * bhat - ahat) / nb;
    return g;
}

CosineDistanceGrad cosine_distance_grad(const ParamVector& a, const ParamVector& b) {
    require_same_layout(a, b, "cosine_distance_grad");
    return cosine_distance_grad(a.values(), b.values());
}

}  // namespace snp
