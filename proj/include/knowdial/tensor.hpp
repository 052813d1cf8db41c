#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace knowdial {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
int shape_numel(const Shape& shape);

/// Seeded RNG threaded explicitly through every stochastic operation.
/// There is no global random state anywhere in the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(eng_);
  }
  // Uniform draw from [0, n).
  int uniform_int(int n) {
    return std::uniform_int_distribution<int>(0, n - 1)(eng_);
  }
  bool bernoulli(double p) {
    return std::bernoulli_distribution(p)(eng_);
  }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

/// Dense row-major tensor of 64-bit floats. Copies are shallow: handles
/// share the underlying buffer, which is what ties parameters, tape nodes
/// and gradient accumulation together.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, double fill, bool requires_grad = false);
  explicit Tensor(Shape shape) : Tensor(std::move(shape), 0.0, false) {}

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int axis) const { return d_->shape[static_cast<size_t>(axis)]; }
  int numel() const { return static_cast<int>(d_->vals.size()); }

  // Handle semantics: const applies to the handle, not the shared buffer.
  std::vector<double>& values() const { return d_->vals; }

  double at(int i) const { return d_->vals[static_cast<size_t>(i)]; }
  double at(int i, int j) const {
    return d_->vals[static_cast<size_t>(i) * static_cast<size_t>(d_->shape[1]) +
                    static_cast<size_t>(j)];
  }

  /// Value of a single-element tensor.
  double value() const;

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool on);

  std::vector<double>& grad() const;
  void zero_grad() const;

  /// True when both handles refer to the same buffer.
  bool same_buffer(const Tensor& other) const { return d_ == other.d_; }

 private:
  struct Data {
    Shape shape;
    std::vector<double> vals;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

/// One recorded primitive application.
struct TapeNode {
  const char* op;
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void(const TapeNode&)> backward;
};

/// Execution-ordered record of primitive applications. Recording order is
/// topological by construction, so the backward sweep is a single reverse
/// pass that visits each node exactly once. A Tape is single-writer.
class Tape {
 public:
  void record(const char* op, std::vector<Tensor> inputs, Tensor output,
              std::function<void(const TapeNode&)> backward);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates gradients to every tracked
  /// tensor reachable from the loss. Leaves that the loss does not depend
  /// on keep their zero-initialized gradients.
  void backward(const Tensor& loss);

 private:
  std::vector<TapeNode> nodes_;
};

/// While a guard is alive, operations do not record onto tapes and their
/// outputs do not track gradients. Used for evaluation passes and for the
/// value-only probes of finite-difference checks.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

}  // namespace knowdial
