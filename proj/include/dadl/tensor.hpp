#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dadl/error.hpp"

namespace dadl {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense 64-bit float tensor. Copies are shallow handles onto shared storage;
// clone() makes a deep copy. The gradient buffer exists iff requires_grad and
// always matches the data length.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    std::vector<double>& vec() { return *data_; }
    const std::vector<double>& vec() const { return *data_; }

    double item() const;

    bool requires_grad() const { return grad_ != nullptr; }
    Tensor& set_requires_grad(bool v);
    double* grad() { return grad_ ? grad_->data() : nullptr; }
    const double* grad() const { return grad_ ? grad_->data() : nullptr; }
    std::vector<double>& grad_vec() { return *grad_; }
    const std::vector<double>& grad_vec() const { return *grad_; }
    void zero_grad();

    // Shares data storage, carries no gradient. Ops treat it as a constant.
    Tensor detached() const;
    Tensor clone() const;

    // Copies values from another tensor of identical shape into this storage.
    void copy_from(const Tensor& other);

    // Shares storage under a new shape of equal element count; no gradient.
    Tensor view(Shape new_shape) const;

    bool all_finite() const;
    void check_finite(const char* what) const;

    // Stable identity of the underlying storage, for aliasing checks.
    const void* storage_id() const { return static_cast<const void*>(data_.get()); }

    double& operator[](std::int64_t i) { return (*data_)[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }

private:
    std::shared_ptr<std::vector<double>> data_;
    std::shared_ptr<std::vector<double>> grad_;
    Shape shape_;
};

// Reverse-mode tape. Ops append backward closures in forward order; backward()
// replays them once in reverse. A tape must be reset (or destroyed) before it
// can record a new graph after a backward pass.
class Tape {
public:
    void record(std::function<void()> backward_fn) {
        if (used_) throw TapeError("tape already consumed by backward; reset before re-recording");
        nodes_.push_back(std::move(backward_fn));
    }
    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return used_; }
    void reset() {
        nodes_.clear();
        used_ = false;
    }

private:
    friend void backward(const Tensor& loss, Tape& tape);
    std::vector<std::function<void()>> nodes_;
    bool used_ = false;
};

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
// requires_grad tensor reachable from the recorded graph. Leaves that were
// never used keep their zero-initialized gradient buffers.
void backward(const Tensor& loss, Tape& tape);

struct GradCheckReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::int64_t worst_index = -1;
    bool pass(double rtol) const { return max_rel_err <= rtol; }
};

// Compares the analytic gradient of f at x with central finite differences
// (step h per coordinate). f must be a pure function producing a scalar.
GradCheckReport grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                           const Tensor& x, double rtol, double h = 1e-5);

}  // namespace dadl
