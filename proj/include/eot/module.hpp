#pragma once

#include <string>
#include <vector>

#include "eot/tensor.hpp"

namespace eot {

// A learnable tensor plus its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(std::move(shape)) {}

  void zero_grad() { grad.zero(); }
};

// Non-learnable state that still belongs in checkpoints (e.g. running
// batch-norm statistics).
template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor = nullptr;
};

// Base for everything that owns parameters. Layers expose concrete typed
// forward/backward methods; the base only standardises parameter and buffer
// traversal plus the train/eval flag.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  virtual void collect_params(std::vector<Parameter<T>*>& out) {}
  virtual void collect_buffers(std::vector<NamedBuffer<T>>& out) {}
  virtual void set_training(bool training) { training_ = training; }

  bool training() const { return training_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    collect_params(out);
    return out;
  }

  std::vector<NamedBuffer<T>> buffers() {
    std::vector<NamedBuffer<T>> out;
    collect_buffers(out);
    return out;
  }

  void zero_grad() {
    for (Parameter<T>* p : parameters()) p->zero_grad();
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Parameter<T>* p : parameters()) n += p->value.size();
    return n;
  }

 protected:
  bool training_ = true;
};

}  // namespace eot
