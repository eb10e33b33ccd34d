#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace pertrl::diff {

struct TensorSlot {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::ptrdiff_t offset = 0;

    bool operator==(const TensorSlot&) const = default;
};

// Ordered (name, shape, offset) description of how a flat parameter array
// maps onto named tensors. Slots are laid out contiguously, row-major.
class ParamLayout {
public:
    int add(const std::string& name, int rows, int cols);

    std::size_t slot_count() const { return slots_.size(); }
    const TensorSlot& slot(std::size_t i) const { return slots_.at(i); }
    int slot_index(const std::string& name) const;  // -1 if absent
    std::ptrdiff_t total() const { return total_; }

    bool operator==(const ParamLayout& o) const { return slots_ == o.slots_; }

private:
    std::vector<TensorSlot> slots_;
    std::unordered_map<std::string, int> by_name_;
    std::ptrdiff_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

// Flat parameter vector plus its layout. Tensors are stored row-major in the
// flat array so flatten(unflatten(v)) round-trips bitwise.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(LayoutPtr layout)
        : layout_(std::move(layout)),
          values_(Eigen::VectorXd::Zero(layout_->total())) {}
    ParamVector(LayoutPtr layout, Eigen::VectorXd values);

    const LayoutPtr& layout() const { return layout_; }
    Eigen::VectorXd& values() { return values_; }
    const Eigen::VectorXd& values() const { return values_; }
    Eigen::Index size() const { return values_.size(); }

    Eigen::MatrixXd tensor(std::size_t slot) const;
    Eigen::MatrixXd tensor(const std::string& name) const;
    void set_tensor(std::size_t slot, const Eigen::MatrixXd& m);
    void set_tensor(const std::string& name, const Eigen::MatrixXd& m);

    double dot(const ParamVector& o) const;
    double norm() const { return values_.norm(); }
    bool all_finite() const { return values_.allFinite(); }

    ParamVector& operator+=(const ParamVector& o);
    ParamVector& operator-=(const ParamVector& o);
    ParamVector& operator*=(double s) { values_ *= s; return *this; }

    friend ParamVector operator+(ParamVector a, const ParamVector& b) { a += b; return a; }
    friend ParamVector operator-(ParamVector a, const ParamVector& b) { a -= b; return a; }
    friend ParamVector operator*(double s, ParamVector a) { a *= s; return a; }

    static void check_compatible(const ParamVector& a, const ParamVector& b);
    static bool same_layout(const LayoutPtr& a, const LayoutPtr& b);

private:
    LayoutPtr layout_;
    Eigen::VectorXd values_;
};

}  // namespace pertrl::diff
