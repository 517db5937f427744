// SPDX-License-Identifier: Apache-2.0
#include "aple/tensor.hpp"

#include <atomic>
#include <cstring>
#include <sstream>

#include "aple/error.hpp"

namespace aple {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool trainable) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->trainable = trainable;
}

Tensor Tensor::zeros(Shape shape, bool trainable) { return full(std::move(shape), 0.0f, trainable); }

Tensor Tensor::full(Shape shape, float value, bool trainable) {
  std::vector<float> data(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(data), trainable);
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::span<const float> Tensor::data() const {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return impl_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return impl_->data;
}

float Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::trainable() const { return impl_ && impl_->trainable; }

void Tensor::set_trainable(bool on) {
  if (!impl_) throw UsageError("use of an undefined tensor");
  impl_->trainable = on;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.has_value(); }

std::span<const float> Tensor::grad() const {
  if (!has_grad()) throw UsageError("tensor has no gradient buffer");
  return *impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0f);
}

void Tensor::clear_grad() {
  if (impl_) impl_->grad.reset();
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  return Tensor(impl_->shape, impl_->data, impl_->trainable);
}

namespace {
std::atomic<std::uint64_t> next_graph_id{1};
}

Graph::Graph() : id_(next_graph_id.fetch_add(1)) {}

bool Graph::is_attached(const Tensor& t) const {
  if (!t.defined()) return false;
  return t.impl()->graph_id == id_ || t.impl()->trainable;
}

std::optional<std::size_t> Graph::find_slot(const Tensor& t) const {
  if (t.impl()->graph_id == id_) return t.impl()->slot;
  auto it = leaf_slots_.find(t.impl());
  if (it != leaf_slots_.end()) return it->second;
  return std::nullopt;
}

std::size_t Graph::slot_of(const Tensor& t) {
  if (auto s = find_slot(t)) return *s;
  const std::size_t slot = slot_sizes_.size();
  slot_sizes_.push_back(t.numel());
  leaf_slots_.emplace(t.impl(), slot);
  leaves_.push_back(t);
  return slot;
}

Tensor Graph::record(std::string_view name, std::vector<Tensor> inputs, Tensor output,
                     ForwardFn forward, BackwardFn backward) {
  for (const Tensor& in : inputs) {
    if (is_attached(in)) slot_of(in);
  }
  output.impl()->graph_id = id_;
  output.impl()->slot = slot_sizes_.size();
  slot_sizes_.push_back(output.numel());
  nodes_.push_back(Node{std::string(name), std::move(inputs), output, std::move(forward),
                        std::move(backward)});
  return output;
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (loss.impl()->graph_id != id_) {
    throw UsageError("backward() loss is not an output of this graph");
  }

  std::vector<std::vector<float>> grads(slot_sizes_.size());
  auto buffer = [&](std::size_t slot) -> std::vector<float>& {
    if (grads[slot].empty()) grads[slot].assign(slot_sizes_[slot], 0.0f);
    return grads[slot];
  };
  buffer(loss.impl()->slot)[0] = 1.0f;

  std::vector<std::vector<float>*> refs;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const Node& node = *it;
    const std::size_t out_slot = node.output.impl()->slot;
    if (grads[out_slot].empty()) continue;
    refs.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (auto s = find_slot(node.inputs[i])) refs[i] = &buffer(*s);
    }
    node.backward(node.output, grads[out_slot], node.inputs, refs);
  }

  for (Tensor& leaf : leaves_) {
    detail::TensorImpl* impl = leaf.impl();
    if (!impl->trainable) continue;
    const std::vector<float>& g = buffer(leaf_slots_.at(impl));
    if (!impl->grad) impl->grad.emplace(impl->data.size(), 0.0f);
    for (std::size_t i = 0; i < g.size(); ++i) (*impl->grad)[i] += g[i];
  }
}

bool Graph::replay_matches() const {
  for (const Node& node : nodes_) {
    const std::vector<float> again = node.forward(node.inputs);
    const auto out = node.output.data();
    if (again.size() != out.size()) return false;
    if (std::memcmp(again.data(), out.data(), out.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace aple
