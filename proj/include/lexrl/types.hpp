#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lexrl {

using Index = Eigen::Index;

template <typename Scalar>
using Table = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using TableXd = Table<double>;
using VectorXd = Vector<double>;

/// Per-(state, action) boolean mask, rows are states.
using ActionMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Largest action space representable by ActionSet.
inline constexpr Index kMaxActions = 64;

/// A subset of a finite action space of at most 64 actions, stored as a bitmask.
class ActionSet {
public:
  constexpr ActionSet() = default;
  constexpr explicit ActionSet(std::uint64_t bits) : bits_(bits) {}

  static constexpr ActionSet all(Index num_actions) {
    return ActionSet(num_actions >= 64 ? ~std::uint64_t{0}
                                       : (std::uint64_t{1} << num_actions) - 1);
  }
  static constexpr ActionSet single(Index a) { return ActionSet(std::uint64_t{1} << a); }

  constexpr bool contains(Index a) const { return (bits_ >> a) & 1u; }
  constexpr void insert(Index a) { bits_ |= std::uint64_t{1} << a; }
  constexpr void erase(Index a) { bits_ &= ~(std::uint64_t{1} << a); }
  constexpr int size() const { return std::popcount(bits_); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr Index lowest() const { return std::countr_zero(bits_); }
  constexpr std::uint64_t bits() const { return bits_; }
  constexpr bool is_subset_of(ActionSet other) const { return (bits_ & ~other.bits_) == 0; }

  /// The k-th smallest member, 0-based. Requires k < size().
  Index nth(int k) const {
    std::uint64_t b = bits_;
    for (int i = 0; i < k; ++i) b &= b - 1;
    return std::countr_zero(b);
  }

  template <typename F>
  void for_each(F&& f) const {
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) f(static_cast<Index>(std::countr_zero(b)));
  }

  friend constexpr bool operator==(ActionSet, ActionSet) = default;

private:
  std::uint64_t bits_ = 0;
};

/// Violated precondition on an argument or index.
class ContractError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed to reach its accuracy target or produced non-finite values.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input (momdp files, config documents, CSV).
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace lexrl
