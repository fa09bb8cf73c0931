#include "minikd/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

namespace minikd {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

namespace {

std::shared_ptr<TensorData> make_data(Shape shape, std::vector<double> values,
                                      bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return d;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return Tensor(make_data(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(make_data(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_data(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_data({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return d_->shape; }

std::size_t Tensor::numel() const { return d_ ? d_->values.size() : 0; }

std::size_t Tensor::rank() const { return d_->shape.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not rank 2: " + shape_str(d_->shape));
  return d_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not rank 2: " + shape_str(d_->shape));
  return d_->shape[1];
}

const std::vector<double>& Tensor::values() const { return d_->values; }

std::vector<double>& Tensor::values_mut() { return d_->values; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item(): tensor has " + std::to_string(numel()) + " elements, expected 1");
  }
  return d_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return d_->values[r * cols() + c];
}

double& Tensor::at_mut(std::size_t r, std::size_t c) {
  return d_->values[r * cols() + c];
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }

void Tensor::set_requires_grad(bool v) { d_->requires_grad = v; }

bool Tensor::has_grad() const { return d_ && !d_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("grad(): no gradient has been accumulated");
  return d_->grad;
}

void Tensor::zero_grad() {
  if (d_) d_->grad.assign(d_->values.size(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(make_data(d_->shape, d_->values, false));
}

Tensor Tensor::clone() const {
  return Tensor(make_data(d_->shape, d_->values, d_->requires_grad));
}

bool Tensor::all_finite() const {
  for (double v : d_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }

Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape::Pause::Pause() : prev_(g_active_tape) { g_active_tape = nullptr; }

Tape::Pause::~Pause() { g_active_tape = prev_; }

void Tape::record(std::vector<std::shared_ptr<TensorData>> inputs,
                  std::shared_ptr<TensorData> output, BackwardFn fn) {
  records_.push_back(Record{std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.empty() || loss.numel() != 1) {
    throw ShapeError("backward(): loss must be a scalar");
  }
  const TensorData* loss_ptr = loss.impl().get();
  bool on_tape = false;
  for (const Record& r : records_) {
    if (r.output.get() == loss_ptr) {
      on_tape = true;
      break;
    }
  }
  if (!on_tape) {
    throw std::invalid_argument("backward(): loss was not produced on this tape");
  }

  // Fresh adjoints per call; only the final accumulation into .grad persists.
  std::unordered_map<const TensorData*, std::vector<double>> adjoint;
  adjoint[loss_ptr] = {1.0};

  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    auto found = adjoint.find(it->output.get());
    if (found == adjoint.end()) continue;  // not upstream of the loss
    const std::vector<double>& out_adj = found->second;

    std::vector<std::vector<double>*> in_adj(it->inputs.size(), nullptr);
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      TensorData* in = it->inputs[i].get();
      if (!in->requires_grad) continue;
      auto [slot, inserted] = adjoint.try_emplace(in);
      if (inserted) slot->second.assign(in->values.size(), 0.0);
      in_adj[i] = &slot->second;
    }
    it->fn(out_adj, in_adj);
  }

  for (const Record& r : records_) {
    auto flush = [&adjoint](const std::shared_ptr<TensorData>& t) {
      if (!t->requires_grad) return;
      auto found = adjoint.find(t.get());
      if (found == adjoint.end()) return;
      if (t->grad.empty()) t->grad.assign(t->values.size(), 0.0);
      for (std::size_t i = 0; i < found->second.size(); ++i) t->grad[i] += found->second[i];
      adjoint.erase(found);
    };
    for (const auto& in : r.inputs) flush(in);
    flush(r.output);
  }
}

}  // namespace minikd
