// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aple {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  bool trainable = false;
  std::optional<std::vector<float>> grad;
  // Set when this tensor is the output of a node recorded on a graph.
  std::uint64_t graph_id = 0;
  std::size_t slot = 0;
};

}  // namespace detail

/// Dense row-major float32 tensor with shared ownership of its storage.
///
/// Copies of a Tensor alias the same storage. Values are treated as immutable
/// once created; the exceptions are gradient accumulation during backward and
/// explicit optimizer updates through mutable_data().
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool trainable = false);

  static Tensor zeros(Shape shape, bool trainable = false);
  static Tensor full(Shape shape, float value, bool trainable = false);
  static Tensor scalar(float value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float item() const;
  float at(std::size_t i) const { return data()[i]; }

  bool trainable() const;
  void set_trainable(bool on);

  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();
  void clear_grad();

  /// Deep copy that shares nothing with this tensor and is not graph-attached.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  detail::TensorImpl* impl() const noexcept { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Per-input gradient buffers handed to a node's backward function; an entry
/// is null when that input does not need a gradient.
using GradRefs = std::span<std::vector<float>* const>;

using ForwardFn = std::function<std::vector<float>(std::span<const Tensor>)>;
using BackwardFn = std::function<void(const Tensor& output, std::span<const float> grad_output,
                                      std::span<const Tensor> inputs, GradRefs grad_inputs)>;

/// Define-by-run tape of executed operations.
///
/// A tensor is attached to a graph when it is trainable or when it is the
/// output of a node recorded on that graph. Ops record a node only if at least
/// one input is attached. backward() walks the tape in exact reverse order and
/// writes gradients only into trainable leaves. A graph is confined to one
/// thread and is meant to be dropped after its backward pass.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::uint64_t id() const noexcept { return id_; }
  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  std::string_view node_name(std::size_t i) const { return nodes_.at(i).name; }

  bool is_attached(const Tensor& t) const;

  /// Accumulates dloss/dparam into every trainable tensor used on this graph.
  void backward(const Tensor& loss);

  /// Re-executes each recorded node on its recorded inputs and reports whether
  /// every output is reproduced bitwise.
  bool replay_matches() const;

  /// Records a node. Called by the op implementations.
  Tensor record(std::string_view name, std::vector<Tensor> inputs, Tensor output, ForwardFn forward,
                BackwardFn backward);

 private:
  struct Node {
    std::string name;
    std::vector<Tensor> inputs;
    Tensor output;
    ForwardFn forward;
    BackwardFn backward;
  };

  std::size_t slot_of(const Tensor& t);
  std::optional<std::size_t> find_slot(const Tensor& t) const;

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> slot_sizes_;
  std::unordered_map<const detail::TensorImpl*, std::size_t> leaf_slots_;
  std::vector<Tensor> leaves_;
};

}  // namespace aple
