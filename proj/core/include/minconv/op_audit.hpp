#pragma once

#include <cmath>
#include <cstdint>

#include "minconv/approx.hpp"

// Instrumented scalar for auditing arithmetic inside the convolution kernels.
// Running a kernel template with audit::Counted counts every operation it
// performs while an audit::Scope is active on the calling thread.
namespace minconv::audit {

struct OpCounts {
  std::uint64_t multiplies = 0;           // a * b anywhere except residual_scale
  std::uint64_t smins = 0;
  std::uint64_t residual_multiplies = 0;  // residual_scale(mu_w, acc)
  std::uint64_t additions = 0;

  OpCounts& operator+=(const OpCounts& o) {
    multiplies += o.multiplies;
    smins += o.smins;
    residual_multiplies += o.residual_multiplies;
    additions += o.additions;
    return *this;
  }
  bool operator==(const OpCounts&) const = default;
};

OpCounts* active_counts() noexcept;

/// Routes counts from Counted arithmetic on this thread into `sink`.
class Scope {
 public:
  explicit Scope(OpCounts& sink) noexcept;
  ~Scope();
  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;

 private:
  OpCounts* previous_;
};

class Counted {
 public:
  constexpr Counted() = default;
  constexpr Counted(double v) : v_(v) {}  // NOLINT: implicit so kernels can convert scalars
  constexpr double value() const { return v_; }
  explicit constexpr operator double() const { return v_; }

  friend Counted operator*(Counted a, Counted b) {
    if (auto* c = active_counts()) ++c->multiplies;
    return Counted(a.v_ * b.v_);
  }
  friend Counted operator+(Counted a, Counted b) {
    if (auto* c = active_counts()) ++c->additions;
    return Counted(a.v_ + b.v_);
  }
  Counted& operator+=(Counted b) { return *this = *this + b; }
  Counted& operator*=(Counted b) { return *this = *this * b; }
  friend constexpr Counted operator-(Counted a) { return Counted(-a.v_); }
  friend constexpr bool operator<(Counted a, Counted b) { return a.v_ < b.v_; }
  friend constexpr bool operator>(Counted a, Counted b) { return a.v_ > b.v_; }
  friend constexpr bool operator==(Counted a, Counted b) { return a.v_ == b.v_; }
  friend Counted abs(Counted a) { return Counted(std::abs(a.v_)); }

  friend Counted smin(Counted a, Counted b) {
    if (auto* c = active_counts()) ++c->smins;
    return Counted(minconv::smin(a.v_, b.v_));
  }
  friend Counted residual_scale(Counted scale, Counted value) {
    if (auto* c = active_counts()) ++c->residual_multiplies;
    return Counted(scale.v_ * value.v_);
  }

 private:
  double v_ = 0.0;
};

}  // namespace minconv::audit
