#include "dadl/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dadl {

std::int64_t shape_size(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("shape dimensions must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    data_ = std::make_shared<std::vector<double>>(static_cast<std::size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    const std::int64_t n = shape_size(shape_);
    if (static_cast<std::int64_t>(values.size()) != n) {
        throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                             shape_str(shape_));
    }
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
}

Tensor Tensor::scalar(double value) {
    return Tensor(Shape{1}, {value});
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() requires a single-element tensor, shape is " + shape_str(shape_));
    return (*data_)[0];
}

Tensor& Tensor::set_requires_grad(bool v) {
    if (v) {
        if (!grad_) grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
    } else {
        grad_.reset();
    }
    return *this;
}

void Tensor::zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::detached() const {
    Tensor t;
    t.data_ = data_;
    t.shape_ = shape_;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    t.shape_ = shape_;
    if (grad_) t.grad_ = std::make_shared<std::vector<double>>(*grad_);
    return t;
}

void Tensor::copy_from(const Tensor& other) {
    if (shape_ != other.shape_) {
        throw DimensionError("copy_from shape mismatch: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    }
    *data_ = *other.data_;
}

Tensor Tensor::view(Shape new_shape) const {
    if (shape_size(new_shape) != size()) {
        throw DimensionError("view shape " + shape_str(new_shape) + " does not match element count of " +
                             shape_str(shape_));
    }
    Tensor t;
    t.data_ = data_;
    t.shape_ = std::move(new_shape);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : *data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::check_finite(const char* what) const {
    if (!all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

void backward(const Tensor& loss, Tape& tape) {
    if (loss.size() != 1) throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw TapeError("loss does not require grad; nothing was recorded");
    if (tape.used_) throw TapeError("tape already consumed; re-record the forward pass before backward");
    tape.used_ = true;
    const_cast<Tensor&>(loss).grad_vec()[0] += 1.0;
    for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
        (*it)();
    }
}

GradCheckReport grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                           const Tensor& x, double rtol, double h) {
    (void)rtol;
    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    probe.zero_grad();

    Tape tape;
    Tensor loss = f(tape, probe);
    backward(loss, tape);
    std::vector<double> analytic = probe.grad_vec();

    GradCheckReport report;
    Tensor work = x.clone();
    work.set_requires_grad(false);
    for (std::int64_t i = 0; i < work.size(); ++i) {
        const double orig = work[i];
        Tape t_plus;
        work[i] = orig + h;
        const double fp = f(t_plus, work).item();
        Tape t_minus;
        work[i] = orig - h;
        const double fm = f(t_minus, work).item();
        work[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[static_cast<std::size_t>(i)];
        const double abs_err = std::abs(a - numeric);
        const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
        const double rel_err = abs_err / scale;
        if (rel_err > report.max_rel_err) {
            report.max_rel_err = rel_err;
            report.worst_index = i;
        }
        report.max_abs_err = std::max(report.max_abs_err, abs_err);
    }
    return report;
}

}  // namespace dadl
