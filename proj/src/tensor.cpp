#include "knowdial/tensor.hpp"

#include <sstream>

namespace knowdial {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int shape_numel(const Shape& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) {
      throw ShapeError("tensor: non-positive extent in shape " + shape_str(shape));
    }
  }
  d_ = std::make_shared<Data>();
  d_->shape = std::move(shape);
  d_->vals.assign(static_cast<size_t>(shape_numel(d_->shape)), fill);
  if (requires_grad) set_requires_grad(true);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Tensor t({1}, v, requires_grad);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != static_cast<int>(values.size())) {
    throw ShapeError("tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  Tensor t(std::move(shape), 0.0, false);
  t.d_->vals = std::move(values);
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  Tensor t(std::move(shape), 0.0, false);
  for (double& v : t.d_->vals) v = rng.uniform(lo, hi);
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

double Tensor::value() const {
  if (numel() != 1) {
    throw ShapeError("value(): tensor of shape " + shape_str(shape()) +
                     " is not a scalar");
  }
  return d_->vals[0];
}

void Tensor::set_requires_grad(bool on) {
  d_->requires_grad = on;
  if (on) {
    if (d_->grad.size() != d_->vals.size()) {
      d_->grad.assign(d_->vals.size(), 0.0);
    }
  } else {
    d_->grad.clear();
  }
}

std::vector<double>& Tensor::grad() const {
  if (!d_->requires_grad) {
    throw NumericsError("grad(): tensor does not track gradients");
  }
  return d_->grad;
}

void Tensor::zero_grad() const {
  if (d_->requires_grad) d_->grad.assign(d_->vals.size(), 0.0);
}

void Tape::record(const char* op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void(const TapeNode&)> backward) {
  nodes_.push_back(
      TapeNode{op, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (nodes_.empty()) {
    throw NumericsError("backward: tape is empty");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw NumericsError("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) {
    throw NumericsError("backward: loss is not tracked on the tape");
  }
  bool found = false;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.same_buffer(loss)) {
      found = true;
      break;
    }
  }
  if (!found) {
    throw NumericsError("backward: loss was not produced by taped primitives");
  }
  loss.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward(*it);
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace knowdial
