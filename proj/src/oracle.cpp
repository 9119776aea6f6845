#include "coap/oracle.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

#include "coap/error.hpp"
#include "coap/estep.hpp"

namespace coap::oracle {

FijArgmax numeric_argmax_fij(double x, double a, double varsigma, double ell) {
  if (!(a > 0) || !(varsigma > 0)) throw Error(ErrorCode::InvalidConfig, "a and varsigma must be positive");
  auto grad = [&](double y) { return x - a * std::exp(y) - (y - ell) / varsigma; };
  auto curvature = [&](double y) { return -a * std::exp(y) - 1.0 / varsigma; };

  const double g0 = grad(ell);
  if (g0 == 0.0) return {ell, curvature(ell)};
  // f' is strictly decreasing, so the root lies between ell and a point where
  // the sign is known to flip.
  double lo = ell, hi = ell;
  if (g0 > 0) hi = ell + varsigma * x;
  else lo = ell - varsigma * a * std::exp(ell);
  if (!(grad(lo) >= 0) || !(grad(hi) <= 0)) throw Error(ErrorCode::BracketFailure, "no sign change on bracket");

  // Newton steps, replaced by bisection whenever they leave the bracket or fail
  // to at least halve the previous step.
  const double tol = 1e-12 * std::max(1.0, x);
  double y = 0.5 * (lo + hi);
  double dx_old = hi - lo;
  for (int it = 0; it < 2000; ++it) {
    const double g = grad(y);
    if (std::abs(g) <= tol) break;
    if (g > 0) lo = y; else hi = y;
    const double c = curvature(y);
    double next = y - g / c;
    if (!(next > lo && next < hi) || std::abs(2 * g) > std::abs(dx_old * c)) next = 0.5 * (lo + hi);
    dx_old = std::abs(next - y);
    if (next == y || hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(y))) {
      y = next;
      break;
    }
    y = next;
  }
  return {y, curvature(y)};
}

OracleReport finite_diff_elbo_grad(const ModelParams<double>& params,
                                   const VariationalParams<double>& gamma,
                                   const CountDataset<double>& data, GradBlock block, double rel_step) {
  ModelParams<double> p = params;
  VariationalParams<double> g = gamma;
  Eigen::MatrixXd* target = nullptr;
  switch (block) {
    case GradBlock::Loadings: target = &p.B; break;
    case GradBlock::Factors: target = &p.H; break;
    case GradBlock::Mu: target = &g.mu; break;
  }
  auto elbo = [&] { return compute_elbo(p, g, data).total; };

  OracleReport report;
  report.trials = static_cast<int>(target->size());
  Index worst_i = 0, worst_j = 0;
  for (Index j = 0; j < target->cols(); ++j) {
    for (Index i = 0; i < target->rows(); ++i) {
      const double saved = (*target)(i, j);
      const double h = rel_step * std::max(1.0, std::abs(saved));
      (*target)(i, j) = saved + h;
      const double up = elbo();
      (*target)(i, j) = saved - h;
      const double down = elbo();
      (*target)(i, j) = saved;
      const double d = std::abs(up - down) / (2 * h);
      if (d > report.max_abs_error) {
        report.max_abs_error = d;
        worst_i = i;
        worst_j = j;
      }
    }
  }
  std::ostringstream os;
  os << "block=" << static_cast<int>(block) << " entry=(" << worst_i << "," << worst_j << ")";
  report.worst_case_input = os.str();
  return report;
}

namespace {

using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct GslProblem {
  const Objective* fn;
};

double gsl_f(const gsl_vector* v, void* ctx) {
  const Eigen::Map<const Eigen::VectorXd> x(v->data, static_cast<Index>(v->size));
  return (*static_cast<GslProblem*>(ctx)->fn)(x, nullptr);
}

void gsl_df(const gsl_vector* v, void* ctx, gsl_vector* df) {
  const Eigen::Map<const Eigen::VectorXd> x(v->data, static_cast<Index>(v->size));
  Eigen::VectorXd grad(x.size());
  (*static_cast<GslProblem*>(ctx)->fn)(x, &grad);
  std::copy(grad.data(), grad.data() + grad.size(), df->data);
}

void gsl_fdf(const gsl_vector* v, void* ctx, double* f, gsl_vector* df) {
  const Eigen::Map<const Eigen::VectorXd> x(v->data, static_cast<Index>(v->size));
  Eigen::VectorXd grad(x.size());
  *f = (*static_cast<GslProblem*>(ctx)->fn)(x, &grad);
  std::copy(grad.data(), grad.data() + grad.size(), df->data);
}

/// Minimizes fn from start with GSL's BFGS2; returns the final point.
Eigen::VectorXd bfgs_minimize(const Objective& fn, const Eigen::VectorXd& start, double* value) {
  GslProblem problem{&fn};
  gsl_multimin_function_fdf fdf;
  fdf.n = static_cast<std::size_t>(start.size());
  fdf.f = gsl_f;
  fdf.df = gsl_df;
  fdf.fdf = gsl_fdf;
  fdf.params = &problem;

  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(fdf.n), &gsl_vector_free);
  std::copy(start.data(), start.data() + start.size(), x->data);
  std::unique_ptr<gsl_multimin_fdfminimizer, decltype(&gsl_multimin_fdfminimizer_free)> s(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, fdf.n),
      &gsl_multimin_fdfminimizer_free);
  gsl_multimin_fdfminimizer_set(s.get(), &fdf, x.get(), 0.1, 0.1);
  for (int it = 0; it < 5000; ++it) {
    if (gsl_multimin_fdfminimizer_iterate(s.get()) != GSL_SUCCESS) break;
    if (gsl_multimin_test_gradient(s->gradient, 1e-10) == GSL_SUCCESS) break;
  }
  *value = s->f;
  return Eigen::Map<const Eigen::VectorXd>(s->x->data, static_cast<Index>(fdf.n));
}

struct Factorization {
  Index p, d, r;
  Eigen::MatrixXd L(const Eigen::VectorXd& x) const { return Eigen::Map<const Eigen::MatrixXd>(x.data(), p, r); }
  Eigen::MatrixXd R(const Eigen::VectorXd& x) const {
    return Eigen::Map<const Eigen::MatrixXd>(x.data() + p * r, d, r);
  }
  void put(Eigen::VectorXd& g, const Eigen::MatrixXd& gl, const Eigen::MatrixXd& gr) const {
    g.head(p * r) = Eigen::Map<const Eigen::VectorXd>(gl.data(), p * r);
    g.segment(p * r, d * r) = Eigen::Map<const Eigen::VectorXd>(gr.data(), d * r);
  }
};

void check_tiny(const Eigen::MatrixXd& y_tilde, const Eigen::MatrixXd& Z, int r) {
  if (Z.rows() != y_tilde.rows() || r < 1 || r > std::min(y_tilde.cols(), Z.cols()))
    throw Error(ErrorCode::DimensionMismatch, "oracle: shapes or rank do not conform");
}

}  // namespace

Eigen::MatrixXd brute_force_lowrank(const Eigen::MatrixXd& y_tilde, const Eigen::MatrixXd& Z,
                                    const Eigen::VectorXd& varsigma, int r, std::uint64_t seed,
                                    int restarts) {
  check_tiny(y_tilde, Z, r);
  const Index n = y_tilde.rows();
  const Factorization f{y_tilde.cols(), Z.cols(), r};
  const Eigen::RowVectorXd w = varsigma.cwiseInverse().transpose();

  const Objective fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const Eigen::MatrixXd L = f.L(x), R = f.R(x);
    const Eigen::MatrixXd E = y_tilde - Z * R * L.transpose();
    const Eigen::MatrixXd G = E.array().rowwise() * w.array();
    if (grad) {
      f.put(*grad, -2.0 / n * G.transpose() * Z * R, -2.0 / n * Z.transpose() * G * L);
    }
    return (E.array().square().rowwise() * w.array()).sum() / n;
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd best;
  double best_value = std::numeric_limits<double>::infinity();
  for (int k = 0; k < restarts; ++k) {
    Eigen::VectorXd start(f.p * r + f.d * r);
    for (Index i = 0; i < start.size(); ++i) start(i) = normal(rng);
    double value = 0;
    const Eigen::VectorXd x = bfgs_minimize(fn, start, &value);
    if (value < best_value) {
      best_value = value;
      best = f.L(x) * f.R(x).transpose();
    }
  }
  return best;
}

JointOptimum brute_force_joint(const Eigen::MatrixXd& y_tilde, const Eigen::MatrixXd& Z,
                               const Eigen::MatrixXd& sigma2, int r, std::uint64_t seed, int restarts) {
  check_tiny(y_tilde, Z, r);
  const Index n = y_tilde.rows(), p = y_tilde.cols();
  const Factorization f{p, Z.cols(), r};
  const Index offset = f.p * r + f.d * r;
  const Eigen::RowVectorXd s2_sum = sigma2.colwise().sum();

  const Objective fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const Eigen::MatrixXd L = f.L(x), R = f.R(x);
    const Eigen::ArrayXd log_vs = x.tail(p);
    const Eigen::RowVectorXd inv_vs = (-log_vs).exp().matrix().transpose();
    const Eigen::MatrixXd E = y_tilde - Z * R * L.transpose();
    const Eigen::RowVectorXd w_diag = (E.array().square().colwise().sum() + s2_sum.array()).matrix() / n;
    if (grad) {
      const Eigen::MatrixXd G = E.array().rowwise() * inv_vs.array();
      f.put(*grad, -G.transpose() * Z * R, -Z.transpose() * G * L);
      grad->tail(p) = (n / 2.0 * (1.0 - w_diag.array() * inv_vs.array())).transpose();
    }
    return -(n / 2.0) * (-log_vs.sum() - (w_diag.array() * inv_vs.array()).sum());
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  JointOptimum best;
  double best_value = std::numeric_limits<double>::infinity();
  for (int k = 0; k < restarts; ++k) {
    Eigen::VectorXd start(offset + p);
    for (Index i = 0; i < offset; ++i) start(i) = normal(rng);
    for (Index j = 0; j < p; ++j) start(offset + j) = 0.5 * normal(rng);
    double value = 0;
    const Eigen::VectorXd x = bfgs_minimize(fn, start, &value);
    if (value < best_value) {
      best_value = value;
      best.beta = f.L(x) * f.R(x).transpose();
      best.varsigma = x.tail(p).array().exp().matrix();
      best.objective = -value;
    }
  }
  return best;
}

}  // namespace coap::oracle
