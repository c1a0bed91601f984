#pragma once

// Difference-bound matrices over integer clocks with non-strict bounds.
// Entry (i, j) bounds x_i - x_j; clock 0 is the constant zero. All timing
// constants in the machine are integers and all guards closed, so strict
// bounds never arise.

#include <cstdint>
#include <limits>
#include <vector>

namespace sre {

class Dbm {
 public:
  using Bound = std::int32_t;
  static constexpr Bound kInf = std::numeric_limits<Bound>::max() / 4;

  Dbm() = default;
  /// Zone where every clock equals zero.
  explicit Dbm(int dim);

  int dim() const { return dim_; }
  Bound at(int i, int j) const { return m_[idx(i, j)]; }
  bool empty() const { return empty_; }

  Bound upper(int x) const { return at(x, 0); }
  Bound lower(int x) const { return -at(0, x); }

  /// Lets time pass (removes upper bounds).
  void up();
  /// Adds x_i - x_j <= c and re-closes incrementally. Returns !empty().
  bool constrain(int i, int j, Bound c);
  /// x := 0.
  void reset(int x);
  /// Removes every constraint on x (clock no longer meaningful).
  void free(int x);
  /// Classic per-clock maximal-constant extrapolation; negative ceilings
  /// mark clocks that are not compared against anything.
  void extrapolate(const std::vector<Bound>& ceiling);
  /// Adds a fresh clock (unconstrained, >= 0) and returns its index.
  int add_clock();

  /// Every valuation satisfies x_i - x_j <= c.
  bool satisfies(int i, int j, Bound c) const { return at(i, j) <= c; }
  /// Some valuation satisfies x_i - x_j <= c.
  bool intersects(int i, int j, Bound c) const { return add(c, at(j, i)) >= 0; }
  /// this ⊇ other (same dimension, both closed).
  bool includes(const Dbm& other) const;

  void close();

  friend bool operator==(const Dbm&, const Dbm&) = default;

  static Bound add(Bound a, Bound b) {
    if (a >= kInf || b >= kInf) return kInf;
    return a + b;
  }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(j); }
  Bound& ref(int i, int j) { return m_[idx(i, j)]; }

  int dim_ = 0;
  bool empty_ = false;
  std::vector<Bound> m_;
};

}  // namespace sre
