#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "docs/error.hpp"

namespace docs {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr std::size_t item() const { return c * h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

/// Dense rank-4 NCHW array, width fastest, with an optional gradient buffer
/// of the same shape.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
  BasicTensor(Shape shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.size())
      throw shape_error("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[offset(n, c, y, x)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[offset(n, c, y, x)];
  }

  // Pointer to the start of item n (all channels).
  T* item(std::size_t n) { return data_.data() + n * shape_.item(); }
  const T* item(std::size_t n) const { return data_.data() + n * shape_.item(); }

  bool has_grad() const { return !grad_.empty(); }
  void ensure_grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), T{0});
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T{0}); }
  std::span<T> grad() { return grad_; }
  std::span<const T> grad() const { return grad_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(shape_, std::move(out));
  }

  // Single item n as a batch-1 tensor.
  BasicTensor slice(std::size_t n) const {
    Shape s{1, shape_.c, shape_.h, shape_.w};
    std::vector<T> v(item(n), item(n) + shape_.item());
    return BasicTensor(s, std::move(v));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
  std::vector<T> grad_;
};

using Tensor = BasicTensor<float>;

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw shape_error(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                      b.shape().str());
}

/// Gradients keyed by parameter name.
template <typename T>
using GradMap = std::map<std::string, BasicTensor<T>>;

/// Named learned weights in insertion order, plus the Adam state.
template <typename T>
class BasicParamStore {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> value;
    BasicTensor<T> m;  // first moment, empty until the first optimizer step
    BasicTensor<T> v;  // second moment
  };

  void add(std::string name, BasicTensor<T> value) {
    if (index_.count(name)) throw shape_error("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value), {}, {}});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const BasicTensor<T>& get(const std::string& name) const { return entries_[lookup(name)].value; }
  BasicTensor<T>& get(const std::string& name) { return entries_[lookup(name)].value; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.value.size();
    return total;
  }

  long step() const { return step_; }
  void set_step(long s) { step_ = s; }

  template <typename U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    out.set_step(step_);
    return out;
  }

  // Zero-filled gradient map with one entry per parameter.
  GradMap<T> zero_grads() const {
    GradMap<T> g;
    for (const auto& e : entries_) g.emplace(e.name, BasicTensor<T>(e.value.shape()));
    return g;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw shape_error("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  long step_ = 0;
};

using ParamStore = BasicParamStore<float>;

}  // namespace docs
