#include "flowslm/params.hpp"

#include <cmath>

namespace flowslm {

int ParamLayout::add(std::string name, int rows, int cols, Init init, bool decay) {
  if (rows <= 0 || cols <= 0) throw ContractViolation("ParamLayout: empty tensor " + name);
  if (by_name_.count(name)) throw ContractViolation("ParamLayout: duplicate tensor " + name);
  TensorSpec s{name, rows, cols, total_, init, decay};
  total_ += s.size();
  const int id = static_cast<int>(specs_.size());
  by_name_.emplace(std::move(name), id);
  specs_.push_back(std::move(s));
  return id;
}

int ParamLayout::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

template <typename T>
void ParamSet<T>::initialize(Rng& rng, double stddev) {
  for (std::size_t id = 0; id < layout_->specs().size(); ++id) {
    const auto& s = layout_->spec(static_cast<int>(id));
    T* p = data_.data() + s.offset;
    for (std::size_t i = 0; i < s.size(); ++i) {
      switch (s.init) {
        case Init::kZero: p[i] = T(0); break;
        case Init::kOne: p[i] = T(1); break;
        case Init::kNormal: {
          double z;
          do {
            z = rng.normal();
          } while (std::abs(z) > 2.0);
          p[i] = static_cast<T>(stddev * z);
          break;
        }
      }
    }
  }
}

template class ParamSet<float>;
template class ParamSet<double>;

}  // namespace flowslm
