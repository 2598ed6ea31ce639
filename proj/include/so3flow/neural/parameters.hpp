// Copyright 2026 The so3flow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "so3flow/error.hpp"

namespace so3flow::neural {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::size_t kParameterBudget = 500000;

/// Flat row-major tensor. Rank 1 tensors act as 1 x n row vectors.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.size() == 1 ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() == 1 ? shape[0] : shape[1]; }

  Eigen::Map<const Mat<T>> matrix() const {
    return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
  }
  Eigen::Map<Mat<T>> matrix() {
    return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
  }
};

/// Named tensors in insertion order. Names are unique and shapes never change
/// after `add`; the same layout doubles as the gradient container.
template <typename T>
class BasicParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  explicit BasicParameterStore(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

  Tensor<T>& add(const std::string& name, std::vector<std::size_t> shape) {
    if (index_.contains(name)) throw Error(ErrorKind::ShapeMismatch, "duplicate tensor name " + name);
    if (shape.empty() || shape.size() > 2) throw Error(ErrorKind::ShapeMismatch, "tensors are rank 1 or 2: " + name);
    const std::size_t count =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (total_count() + count > kParameterBudget) {
      throw Error(ErrorKind::InvariantViolation, "parameter budget exceeded by " + name);
    }
    index_.emplace(name, entries_.size());
    entries_.push_back({name, Tensor<T>{std::move(shape), std::vector<T>(count, T(0))}});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorKind::ShapeMismatch, "no tensor named " + name);
    return it->second;
  }

  const Tensor<T>& at(const std::string& name) const { return entries_[index_of(name)].tensor; }
  Tensor<T>& at(const std::string& name) { return entries_[index_of(name)].tensor; }
  const Tensor<T>& at(std::size_t i) const { return entries_[i].tensor; }
  Tensor<T>& at(std::size_t i) { return entries_[i].tensor; }

  std::span<const Entry> entries() const { return entries_; }
  std::span<Entry> entries() { return entries_; }
  std::size_t tensor_count() const { return entries_.size(); }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  std::uint64_t rng_seed() const { return rng_seed_; }

  bool same_layout(const BasicParameterStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name) return false;
      if (entries_[i].tensor.shape != other.entries_[i].tensor.shape) return false;
    }
    return true;
  }

  BasicParameterStore zeros_like() const {
    BasicParameterStore out(rng_seed_);
    for (const auto& e : entries_) out.add(e.name, e.tensor.shape);
    return out;
  }

  template <typename U>
  BasicParameterStore<U> cast() const {
    BasicParameterStore<U> out(rng_seed_);
    for (const auto& e : entries_) {
      auto& t = out.add(e.name, e.tensor.shape);
      for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<U>(e.tensor.data[i]);
    }
    return out;
  }

  bool operator==(const BasicParameterStore& other) const {
    if (!same_layout(other)) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].tensor.data != other.entries_[i].tensor.data) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t rng_seed_;
};

using ParameterStore = BasicParameterStore<float>;

}  // namespace so3flow::neural
