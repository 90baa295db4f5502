#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsmpc/autodiff.hpp"

namespace tsmpc {

// Type-erased smooth vector function R^in -> R^out.
// One generic callable is instantiated at double, D1 and D2, so values,
// Jacobians and (where needed) second derivatives all come from a single
// definition of the expression.
class SmoothVectorFn {
 public:
  SmoothVectorFn() = default;

  template <typename F>
  static SmoothVectorFn make(int in_dim, int out_dim, F f, std::string label = {}) {
    auto impl = std::make_shared<Impl>();
    impl->in = in_dim;
    impl->out = out_dim;
    impl->label = std::move(label);
    impl->f0 = [f](const std::vector<double>& x) { return f(x); };
    impl->f1 = [f](const std::vector<ad::D1>& x) { return f(x); };
    impl->f2 = [f](const std::vector<ad::D2>& x) { return f(x); };
    return SmoothVectorFn(std::move(impl));
  }

  // Variant for expressions that internally differentiate another
  // SmoothVectorFn (task rates): their own second derivatives would need a
  // third nesting level, which is out of scope. Jacobians remain available.
  template <typename F>
  static SmoothVectorFn make_first_order(int in_dim, int out_dim, F f,
                                         std::string label = {}) {
    auto impl = std::make_shared<Impl>();
    impl->in = in_dim;
    impl->out = out_dim;
    impl->label = std::move(label);
    impl->f0 = [f](const std::vector<double>& x) { return f(x); };
    impl->f1 = [f](const std::vector<ad::D1>& x) { return f(x); };
    impl->f2 = [impl = impl.get()](const std::vector<ad::D2>&) -> std::vector<ad::D2> {
      throw std::logic_error("SmoothVectorFn '" + impl->label +
                             "': second derivatives unavailable for rate expressions");
    };
    return SmoothVectorFn(std::move(impl));
  }

  bool valid() const { return impl_ != nullptr; }
  int in_dim() const { return impl_->in; }
  int out_dim() const { return impl_->out; }
  const std::string& label() const { return impl_->label; }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    check_dim(static_cast<int>(x.size()));
    std::vector<double> xs(x.data(), x.data() + x.size());
    std::vector<double> ys = impl_->f0(xs);
    check_out(static_cast<int>(ys.size()));
    return Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  }

  std::vector<double> eval(const std::vector<double>& x) const { return impl_->f0(x); }
  std::vector<ad::D1> eval(const std::vector<ad::D1>& x) const { return impl_->f1(x); }
  std::vector<ad::D2> eval(const std::vector<ad::D2>& x) const { return impl_->f2(x); }

 private:
  struct Impl {
    int in = 0;
    int out = 0;
    std::string label;
    std::function<std::vector<double>(const std::vector<double>&)> f0;
    std::function<std::vector<ad::D1>(const std::vector<ad::D1>&)> f1;
    std::function<std::vector<ad::D2>(const std::vector<ad::D2>&)> f2;
  };

  explicit SmoothVectorFn(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  void check_dim(int got) const {
    if (!impl_) throw std::logic_error("SmoothVectorFn: empty");
    if (got != impl_->in)
      throw std::invalid_argument("SmoothVectorFn '" + impl_->label + "': input dim " +
                                  std::to_string(got) + ", expected " +
                                  std::to_string(impl_->in));
  }
  void check_out(int got) const {
    if (got != impl_->out)
      throw std::logic_error("SmoothVectorFn '" + impl_->label + "': output dim " +
                             std::to_string(got) + ", expected " +
                             std::to_string(impl_->out));
  }

  std::shared_ptr<const Impl> impl_;
};

// Value and Jacobian of fn at a point whose scalar type is S (double for
// plain Jacobians, D1 when the caller is itself being differentiated).
// jac is row-major out_dim x in_dim. Directions are seeded in chunks of
// ad::kMaxDirs, so input dimension is unrestricted.
template <typename S>
void jacobian_generic(const SmoothVectorFn& fn, const std::vector<S>& x,
                      std::vector<S>& val, std::vector<S>& jac) {
  const int n = static_cast<int>(x.size());
  const int m = fn.out_dim();
  if (n != fn.in_dim())
    throw std::invalid_argument("jacobian_generic: input dim mismatch for '" +
                                fn.label() + "'");
  val.assign(m, S{});
  jac.assign(static_cast<size_t>(m) * n, S{});
  std::vector<ad::Dual<S>> xd(n);
  for (int c0 = 0; c0 < n || c0 == 0; c0 += ad::kMaxDirs) {
    const int k = std::min(ad::kMaxDirs, n - c0);
    for (int i = 0; i < n; ++i) {
      xd[i].v = x[i];
      xd[i].n = 0;
    }
    for (int j = 0; j < k; ++j) {
      xd[c0 + j].n = k;
      for (int i = 0; i < k; ++i) xd[c0 + j].d[i] = S{};
      xd[c0 + j].d[j] = S(1.0);
    }
    const std::vector<ad::Dual<S>> yd = fn.eval(xd);
    if (static_cast<int>(yd.size()) != m)
      throw std::logic_error("jacobian_generic: output dim mismatch for '" +
                             fn.label() + "'");
    for (int i = 0; i < m; ++i) {
      if (c0 == 0) val[i] = yd[i].v;
      for (int j = 0; j < k; ++j) jac[static_cast<size_t>(i) * n + c0 + j] = dir(yd[i], j);
    }
    if (n == 0) break;
  }
}

struct JacobianResult {
  Eigen::VectorXd value;
  Eigen::MatrixXd jacobian;
};

inline JacobianResult jacobian(const SmoothVectorFn& fn, const Eigen::VectorXd& x) {
  std::vector<double> xs(x.data(), x.data() + x.size());
  std::vector<double> val, jac;
  jacobian_generic<double>(fn, xs, val, jac);
  JacobianResult r;
  const int m = fn.out_dim();
  const int n = fn.in_dim();
  r.value = Eigen::Map<Eigen::VectorXd>(val.data(), m);
  r.jacobian = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(jac.data(), m, n);
  return r;
}

}  // namespace tsmpc
