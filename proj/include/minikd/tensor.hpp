#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace minikd {

/// Raised when tensor shapes do not satisfy an operation's contract.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a configuration is internally inconsistent (bad sizes,
/// incompatible depths, malformed schedules).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
};

/// Dense row-major f64 tensor. Value-semantics handle over shared storage:
/// copies alias the same buffer, which is what the tape needs to address
/// parameters across forward/backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool empty() const { return !d_; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rank() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  const std::vector<double>& values() const;
  std::vector<double>& values_mut();
  double item() const;  // numel() == 1 only
  double at(std::size_t r, std::size_t c) const;
  double& at_mut(std::size_t r, std::size_t c);

  bool requires_grad() const;
  void set_requires_grad(bool v);
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Value copy that carries no gradient and never will.
  Tensor detach() const;
  /// Value copy with the same requires_grad flag and fresh storage.
  Tensor clone() const;

  bool all_finite() const;

  const std::shared_ptr<TensorData>& impl() const { return d_; }
  static Tensor wrap(std::shared_ptr<TensorData> d) { return Tensor(std::move(d)); }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

/// Records primitive operations in execution order (inputs always precede
/// their consumers) and replays them in reverse to propagate adjoints.
///
/// Each backward() computes fresh adjoints seeded with d(loss)/d(loss) = 1
/// and then accumulates them into the .grad of every requires_grad tensor,
/// so a second backward without zero_grad doubles every gradient.
class Tape {
 public:
  using BackwardFn =
      std::function<void(const std::vector<double>& out_adj,
                         const std::vector<std::vector<double>*>& in_adj)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t op_count() const { return records_.size(); }
  void clear() { records_.clear(); }

  /// loss must be a scalar produced on this tape.
  void backward(const Tensor& loss);

  /// The tape recording on the current thread, or nullptr.
  static Tape* active();

  /// in_adj slots are nullptr for inputs that do not need a gradient.
  void record(std::vector<std::shared_ptr<TensorData>> inputs,
              std::shared_ptr<TensorData> output, BackwardFn fn);

  /// RAII activation: operations executed inside the scope record here.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  /// RAII deactivation: nothing records inside (frozen-teacher forwards).
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* prev_;
  };

 private:
  struct Record {
    std::vector<std::shared_ptr<TensorData>> inputs;
    std::shared_ptr<TensorData> output;
    BackwardFn fn;
  };
  std::vector<Record> records_;
};

}  // namespace minikd
