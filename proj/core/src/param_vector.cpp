#include "pertrl/diff/param_vector.hpp"

#include <stdexcept>

namespace pertrl::diff {

int ParamLayout::add(const std::string& name, int rows, int cols) {
    if (rows <= 0 || cols <= 0)
        throw std::invalid_argument("ParamLayout::add: non-positive shape for " + name);
    if (by_name_.count(name))
        throw std::invalid_argument("ParamLayout::add: duplicate slot " + name);
    const int idx = static_cast<int>(slots_.size());
    slots_.push_back({name, rows, cols, total_});
    by_name_[name] = idx;
    total_ += static_cast<std::ptrdiff_t>(rows) * cols;
    return idx;
}

int ParamLayout::slot_index(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
}

ParamVector::ParamVector(LayoutPtr layout, Eigen::VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_->total())
        throw std::invalid_argument("ParamVector: value length does not match layout total");
}

Eigen::MatrixXd ParamVector::tensor(std::size_t slot) const {
    const TensorSlot& s = layout_->slot(slot);
    Eigen::MatrixXd m(s.rows, s.cols);
    const double* src = values_.data() + s.offset;
    for (int r = 0; r < s.rows; ++r)
        for (int c = 0; c < s.cols; ++c) m(r, c) = src[r * s.cols + c];
    return m;
}

Eigen::MatrixXd ParamVector::tensor(const std::string& name) const {
    const int idx = layout_->slot_index(name);
    if (idx < 0) throw std::invalid_argument("ParamVector::tensor: unknown slot " + name);
    return tensor(static_cast<std::size_t>(idx));
}

void ParamVector::set_tensor(std::size_t slot, const Eigen::MatrixXd& m) {
    const TensorSlot& s = layout_->slot(slot);
    if (m.rows() != s.rows || m.cols() != s.cols)
        throw std::invalid_argument("ParamVector::set_tensor: shape mismatch for " + s.name);
    double* dst = values_.data() + s.offset;
    for (int r = 0; r < s.rows; ++r)
        for (int c = 0; c < s.cols; ++c) dst[r * s.cols + c] = m(r, c);
}

void ParamVector::set_tensor(const std::string& name, const Eigen::MatrixXd& m) {
    const int idx = layout_->slot_index(name);
    if (idx < 0) throw std::invalid_argument("ParamVector::set_tensor: unknown slot " + name);
    set_tensor(static_cast<std::size_t>(idx), m);
}

double ParamVector::dot(const ParamVector& o) const {
    check_compatible(*this, o);
    return values_.dot(o.values_);
}

ParamVector& ParamVector::operator+=(const ParamVector& o) {
    check_compatible(*this, o);
    values_ += o.values_;
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& o) {
    check_compatible(*this, o);
    values_ -= o.values_;
    return *this;
}

bool ParamVector::same_layout(const LayoutPtr& a, const LayoutPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    return *a == *b;
}

void ParamVector::check_compatible(const ParamVector& a, const ParamVector& b) {
    if (!same_layout(a.layout_, b.layout_))
        throw std::invalid_argument("ParamVector: layout mismatch");
}

}  // namespace pertrl::diff
