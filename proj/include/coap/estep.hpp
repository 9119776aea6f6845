#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "coap/error.hpp"
#include "coap/linalg.hpp"
#include "coap/model.hpp"

namespace coap {

/// Counts exponent arguments that hit the clip bound.
struct ClipCounter {
  std::size_t events = 0;
};

namespace detail {

template <typename Scalar>
inline Scalar clip(Scalar v, Scalar bound, std::size_t& events) {
  if (v > bound) {
    ++events;
    return bound;
  }
  if (v < -bound) {
    ++events;
    return -bound;
  }
  return v;
}

template <typename Scalar>
void require_positive_varsigma(const VectorX<Scalar>& varsigma) {
  if (!(varsigma.array() > Scalar(0)).all())
    throw Error(ErrorCode::NonPositiveVariance, "varsigma must be strictly positive");
}

}  // namespace detail

/// Closed-form variational E-step. Each mu_ij takes one Newton step on the
/// log posterior f_ij(y) = x y - a e^y - (y - l)^2 / (2 varsigma) from the
/// previous mean, and sigma2_ij is the inverse negative curvature at the
/// new mean.
template <typename Scalar>
VariationalParams<Scalar> e_step_update(const VariationalParams<Scalar>& previous,
                                        const MatrixX<Scalar>& predictor,
                                        const VectorX<Scalar>& varsigma,
                                        const CountDataset<Scalar>& data,
                                        Scalar exp_clip = Scalar(30),
                                        ClipCounter* clips = nullptr) {
  const Index n = data.n(), p = data.p();
  if (previous.mu.rows() != n || previous.mu.cols() != p || predictor.rows() != n ||
      predictor.cols() != p || varsigma.size() != p)
    throw Error(ErrorCode::DimensionMismatch, "e_step_update: shapes do not conform");
  detail::require_positive_varsigma(varsigma);

  VariationalParams<Scalar> next{MatrixX<Scalar>(n, p), MatrixX<Scalar>(n, p)};
  std::vector<std::size_t> column_clips(static_cast<std::size_t>(p), 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Index j = 0; j < p; ++j) {
    const Scalar inv_vs = Scalar(1) / varsigma(j);
    std::size_t& events = column_clips[static_cast<std::size_t>(j)];
    for (Index i = 0; i < n; ++i) {
      const Scalar y0 = detail::clip(previous.mu(i, j), exp_clip, events);
      const Scalar rate = data.a(i) * std::exp(y0);
      const Scalar mu =
          (data.X(i, j) - rate * (Scalar(1) - y0) + inv_vs * predictor(i, j)) / (inv_vs + rate);
      next.mu(i, j) = mu;
      next.sigma2(i, j) =
          Scalar(1) / (data.a(i) * std::exp(detail::clip(mu, exp_clip, events)) + inv_vs);
    }
  }

  if (!linalg::all_finite(next.mu) || !linalg::all_finite(next.sigma2))
    throw Error(ErrorCode::Overflow, "E-step produced non-finite variational parameters");
  if (clips) {
    for (std::size_t c : column_clips) clips->events += c;
  }
  return next;
}

template <typename Scalar>
VariationalParams<Scalar> e_step_update(const VariationalParams<Scalar>& previous,
                                        const ModelParams<Scalar>& params,
                                        const CountDataset<Scalar>& data,
                                        Scalar exp_clip = Scalar(30),
                                        ClipCounter* clips = nullptr) {
  return e_step_update(previous, linear_predictor(params, data.Z), params.varsigma, data,
                       exp_clip, clips);
}

/// The three groups of the evidence lower bound, with every term that does
/// not depend on (theta, gamma) dropped.
template <typename Scalar = double>
struct ElboTerms {
  Scalar total = 0;
  Scalar poisson_part = 0;   // sum x mu - a exp(mu + sigma2 / 2)
  Scalar gaussian_part = 0;  // -1/2 sum [(mu - l)^2 / vs + sigma2 / vs + ln vs]
  Scalar entropy_part = 0;   // 1/2 sum ln sigma2
};

/// ELBO given a precomputed linear predictor. Column sums are formed
/// independently and then added in column order, so the result does not
/// depend on thread scheduling.
template <typename Scalar>
ElboTerms<Scalar> compute_elbo(const MatrixX<Scalar>& predictor, const VectorX<Scalar>& varsigma,
                               const VariationalParams<Scalar>& gamma,
                               const CountDataset<Scalar>& data,
                               Scalar exp_clip = Scalar(30)) {
  const Index n = data.n(), p = data.p();
  if (gamma.mu.rows() != n || gamma.mu.cols() != p || gamma.sigma2.rows() != n ||
      gamma.sigma2.cols() != p || predictor.rows() != n || predictor.cols() != p ||
      varsigma.size() != p)
    throw Error(ErrorCode::DimensionMismatch, "compute_elbo: shapes do not conform");
  if (!(gamma.sigma2.array() > Scalar(0)).all())
    throw Error(ErrorCode::NonPositiveVariance, "sigma2 must be strictly positive");
  detail::require_positive_varsigma(varsigma);

  std::vector<Scalar> pois(static_cast<std::size_t>(p)), gauss(pois.size()), ent(pois.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Index j = 0; j < p; ++j) {
    const Scalar inv_vs = Scalar(1) / varsigma(j);
    const Scalar log_vs = std::log(varsigma(j));
    std::size_t unused = 0;
    Scalar sp = 0, sg = 0, se = 0;
    for (Index i = 0; i < n; ++i) {
      const Scalar mu = gamma.mu(i, j), s2 = gamma.sigma2(i, j);
      const Scalar resid = mu - predictor(i, j);
      sp += data.X(i, j) * mu -
            data.a(i) * std::exp(detail::clip(mu + s2 / Scalar(2), exp_clip, unused));
      sg -= Scalar(0.5) * ((resid * resid + s2) * inv_vs + log_vs);
      se += Scalar(0.5) * std::log(s2);
    }
    pois[static_cast<std::size_t>(j)] = sp;
    gauss[static_cast<std::size_t>(j)] = sg;
    ent[static_cast<std::size_t>(j)] = se;
  }

  ElboTerms<Scalar> terms;
  for (std::size_t j = 0; j < pois.size(); ++j) {
    terms.poisson_part += pois[j];
    terms.gaussian_part += gauss[j];
    terms.entropy_part += ent[j];
  }
  terms.total = terms.poisson_part + terms.gaussian_part + terms.entropy_part;
  return terms;
}

/// Terms of the ELBO that depend only on the data: -sum ln(x_ij!) from the
/// Poisson mass function, plus the 1/2 per entry left over when the Gaussian
/// prior's and the entropy's ln(2 pi) cancel.
template <typename Scalar>
Scalar elbo_constant(const CountDataset<Scalar>& data) {
  std::vector<Scalar> cols(static_cast<std::size_t>(data.p()));
  for (Index j = 0; j < data.p(); ++j) {
    Scalar s = 0;
    for (Index i = 0; i < data.n(); ++i) s -= std::lgamma(data.X(i, j) + Scalar(1));
    cols[static_cast<std::size_t>(j)] = s;
  }
  Scalar total = Scalar(0.5) * static_cast<Scalar>(data.n()) * static_cast<Scalar>(data.p());
  for (Scalar c : cols) total += c;
  return total;
}

template <typename Scalar>
ElboTerms<Scalar> compute_elbo(const ModelParams<Scalar>& params,
                               const VariationalParams<Scalar>& gamma,
                               const CountDataset<Scalar>& data,
                               Scalar exp_clip = Scalar(30)) {
  return compute_elbo(linear_predictor(params, data.Z), params.varsigma, gamma, data, exp_clip);
}

}  // namespace coap
