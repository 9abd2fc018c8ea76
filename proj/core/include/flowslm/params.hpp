#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowslm/common.hpp"
#include "flowslm/rng.hpp"

namespace flowslm {

enum class Init { kZero, kOne, kNormal };

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  Init init = Init::kNormal;
  bool decay = false;  // subject to decoupled weight decay

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// Named tensor shapes laid out in one flat buffer.
class ParamLayout {
 public:
  int add(std::string name, int rows, int cols, Init init, bool decay);
  const TensorSpec& spec(int id) const { return specs_.at(id); }
  const std::vector<TensorSpec>& specs() const { return specs_; }
  std::size_t total_size() const { return total_; }
  int find(const std::string& name) const;

 private:
  std::vector<TensorSpec> specs_;
  std::unordered_map<std::string, int> by_name_;
  std::size_t total_ = 0;
};

/// A flat parameter (or gradient, or optimizer moment) buffer viewed through
/// a shared layout.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::shared_ptr<const ParamLayout> layout)
      : layout_(std::move(layout)), data_(Vec<T>::Zero(static_cast<Eigen::Index>(layout_->total_size()))) {}

  Eigen::Map<Mat<T>> tensor(int id) {
    const auto& s = layout_->spec(id);
    return {data_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Mat<T>> tensor(int id) const {
    const auto& s = layout_->spec(id);
    return {data_.data() + s.offset, s.rows, s.cols};
  }
  /// Row view for 1 x n tensors (biases, gains).
  Eigen::Map<RowVec<T>> row(int id) {
    const auto& s = layout_->spec(id);
    return {data_.data() + s.offset, static_cast<Eigen::Index>(s.size())};
  }
  Eigen::Map<const RowVec<T>> row(int id) const {
    const auto& s = layout_->spec(id);
    return {data_.data() + s.offset, static_cast<Eigen::Index>(s.size())};
  }

  Vec<T>& flat() { return data_; }
  const Vec<T>& flat() const { return data_; }
  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }
  void set_zero() { data_.setZero(); }

  /// Truncated-normal (|z| <= 2) weights with the given std; zeros/ones per spec.
  void initialize(Rng& rng, double stddev);

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out(layout_);
    out.flat() = data_.template cast<U>();
    return out;
  }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  Vec<T> data_;
};

}  // namespace flowslm
