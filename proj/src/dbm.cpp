#include "sre/dbm.hpp"

#include <algorithm>

namespace sre {

Dbm::Dbm(int dim) : dim_(dim), m_(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim), 0) {}

void Dbm::up() {
  for (int i = 1; i < dim_; ++i) ref(i, 0) = kInf;
}

bool Dbm::constrain(int i, int j, Bound c) {
  if (empty_) return false;
  if (c >= at(i, j)) return true;
  if (add(c, at(j, i)) < 0) {
    empty_ = true;
    return false;
  }
  ref(i, j) = c;
  // incremental closure through the new edge i -> j
  for (int a = 0; a < dim_; ++a) {
    const Bound ai = at(a, i);
    if (ai >= kInf) continue;
    const Bound aij = ai + c;
    for (int b = 0; b < dim_; ++b) {
      const Bound v = add(aij, at(j, b));
      if (v < at(a, b)) ref(a, b) = v;
    }
  }
  return true;
}

void Dbm::reset(int x) {
  for (int j = 0; j < dim_; ++j) {
    ref(x, j) = at(0, j);
    ref(j, x) = at(j, 0);
  }
  ref(x, x) = 0;
}

void Dbm::free(int x) {
  for (int j = 0; j < dim_; ++j) {
    if (j == x) continue;
    ref(x, j) = kInf;
    ref(j, x) = at(j, 0);
  }
  ref(x, 0) = kInf;
  ref(0, x) = 0;
}

void Dbm::extrapolate(const std::vector<Bound>& ceiling) {
  if (empty_) return;
  bool changed = false;
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) {
      if (i == j) continue;
      Bound& v = ref(i, j);
      if (v >= kInf) continue;
      const Bound mi = ceiling[static_cast<std::size_t>(i)];
      const Bound mj = ceiling[static_cast<std::size_t>(j)];
      if ((i != 0 && mi < 0) || (j != 0 && mj < 0)) continue;  // freed clock
      if (i != 0 && v > mi) {
        v = kInf;
        changed = true;
      } else if (j != 0 && v < -mj) {
        v = -mj;
        changed = true;
      }
    }
  }
  if (changed) close();
}

int Dbm::add_clock() {
  const int n = dim_ + 1;
  std::vector<Bound> m(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), kInf);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) m[static_cast<std::size_t>(i * n + j)] = at(i, j);
  const int x = dim_;
  m[static_cast<std::size_t>(x * n + x)] = 0;
  m[static_cast<std::size_t>(0 * n + x)] = 0;
  for (int j = 1; j < dim_; ++j) m[static_cast<std::size_t>(j * n + x)] = at(j, 0);
  dim_ = n;
  m_ = std::move(m);
  return x;
}

bool Dbm::includes(const Dbm& other) const {
  if (other.empty_) return true;
  if (empty_) return false;
  for (std::size_t k = 0; k < m_.size(); ++k)
    if (other.m_[k] > m_[k]) return false;
  return true;
}

void Dbm::close() {
  for (int k = 0; k < dim_; ++k)
    for (int i = 0; i < dim_; ++i) {
      const Bound ik = at(i, k);
      if (ik >= kInf) continue;
      for (int j = 0; j < dim_; ++j) {
        const Bound v = add(ik, at(k, j));
        if (v < at(i, j)) ref(i, j) = v;
      }
    }
  for (int i = 0; i < dim_; ++i)
    if (at(i, i) < 0) {
      empty_ = true;
      return;
    }
}

}  // namespace sre
