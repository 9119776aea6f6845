#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coap/error.hpp"
#include "coap/estep.hpp"
#include "coap/identifiability.hpp"
#include "coap/linalg.hpp"
#include "coap/lowrank.hpp"
#include "coap/model.hpp"
#include "coap/mstep.hpp"

namespace coap {

/// Relative slack allowed on an ELBO decrease before it counts as a
/// monotonicity violation.
inline constexpr double kMonotonicitySlack = 1e-8;

/// Floor for the initial varsigma.
inline constexpr double kInitialVarsigmaFloor = 1e-4;

template <typename Scalar = double>
struct FitState {
  ModelParams<Scalar> params;
  VariationalParams<Scalar> variational;
};

struct FitDiagnostics {
  std::size_t clip_events = 0;
  std::size_t monotonicity_violations = 0;
  bool degenerate_product = false;
  double elbo_initial = 0.0;
  double elbo_constant = 0.0;  // added to the ELBO for the stopping rule only
  double init_seconds = 0.0;
  double total_seconds = 0.0;
  std::vector<double> iteration_seconds;
};

template <typename Scalar = double>
struct FitResult {
  ModelParams<Scalar> params;            // identifiable representative, rank(beta) <= r
  VariationalParams<Scalar> variational;
  MatrixX<Scalar> alpha_hat;             // d x q
  MatrixX<Scalar> beta_pre_projection;   // beta + B alpha_hat^T before the rank-r re-projection
  FitState<Scalar> final_iterate;        // engine state at loop exit, before enforcement
  std::vector<Scalar> elbo_trace;        // one entry per iteration
  int iterations = 0;
  bool converged = false;
  FitDiagnostics diagnostics;
};

/// Raised when the ELBO stops being finite; carries the trace so far.
class NonFiniteElboError : public Error {
 public:
  NonFiniteElboError(int iteration, std::vector<double> trace, std::size_t clip_events)
      : Error(ErrorCode::NonFiniteElbo, "ELBO became non-finite at iteration " + std::to_string(iteration)),
        iteration_(iteration), trace_(std::move(trace)), clip_events_(clip_events) {}

  int iteration() const noexcept { return iteration_; }
  const std::vector<double>& elbo_trace() const noexcept { return trace_; }
  std::size_t clip_events() const noexcept { return clip_events_; }

 private:
  int iteration_;
  std::vector<double> trace_;
  std::size_t clip_events_;
};

/// Default starting point:
///   mu = ln((x + 0.5) / a), sigma2 = 1,
///   beta = rank-r truncation of the least-squares coefficient of mu on Z,
///   (H, B) from the top-q SVD of the remaining residual with H^T H / n = I,
///   varsigma = column variances of what is left, floored at 1e-4.
template <typename Scalar>
FitState<Scalar> initialize(const CountDataset<Scalar>& data, const FitConfig& config) {
  const Index n = data.n(), p = data.p();
  FitState<Scalar> state;
  auto& mu = state.variational.mu;
  mu = ((data.X.array() + Scalar(0.5)).colwise() / data.a.array()).log().matrix();
  state.variational.sigma2 = MatrixX<Scalar>::Ones(n, p);

  const MatrixX<Scalar> beta_ls = least_squares_coefficient(mu, data.Z);
  const Index r = config.r;
  if (r >= std::min(beta_ls.rows(), beta_ls.cols())) {
    state.params.beta = beta_ls;
  } else {
    auto svd = linalg::truncated_svd<Scalar>(beta_ls, r, config.seed);
    state.params.beta = svd.U * svd.s.asDiagonal() * svd.V.transpose();
  }

  MatrixX<Scalar> resid = mu;
  resid.noalias() -= data.Z * state.params.beta.transpose();
  auto svd = linalg::truncated_svd<Scalar>(resid, config.q, config.seed + 1);
  const Scalar root_n = std::sqrt(static_cast<Scalar>(n));
  state.params.H = root_n * svd.U;
  state.params.B = svd.V * svd.s.asDiagonal() / root_n;

  resid.noalias() -= state.params.H * state.params.B.transpose();
  const RowVectorX<Scalar> mean = resid.colwise().mean();
  const Scalar denom = n > 1 ? static_cast<Scalar>(n - 1) : Scalar(1);
  state.params.varsigma = ((resid.rowwise() - mean).array().square().colwise().sum() / denom)
                              .transpose()
                              .matrix()
                              .cwiseMax(Scalar(kInitialVarsigmaFloor));
  return state;
}

/// One sweep of the variational EM: E-step, loadings, factors, then the
/// rank-constrained (beta, varsigma) update.
template <typename Scalar>
void vem_sweep(FitState<Scalar>& state, const CountDataset<Scalar>& data, const FitConfig& config,
               ClipCounter* clips) {
  auto& params = state.params;
  const Scalar clip = static_cast<Scalar>(config.exp_clip);
  state.variational = e_step_update(state.variational, params, data, clip, clips);
  params.B = update_loadings(state.variational, params, data.Z);
  params.H = update_factors(state.variational, params, data.Z);
  if (config.joint_beta_update) {
    auto joint = update_beta_varsigma_joint(state.variational, params, data.Z, config.r, config.seed);
    params.beta = std::move(joint.beta);
    params.varsigma = std::move(joint.varsigma);
  } else {
    params.beta = update_beta_separate(state.variational, params, data.Z, config.r, config.seed);
    params.varsigma = update_varsigma(state.variational, params, data.Z, params.beta);
  }
}

/// Variational EM fit. Stops when the relative ELBO change falls below
/// eps_elbo or after max_iter sweeps, then maps (H, B) to the identifiable
/// representative. The covariate-space part of H is moved into beta and beta
/// is re-projected to rank r.
template <typename Scalar>
FitResult<Scalar> fit(const ValidatedProblem<Scalar>& problem,
                      std::optional<FitState<Scalar>> init = std::nullopt) {
  using Clock = std::chrono::steady_clock;
  const auto t_start = Clock::now();
  const CountDataset<Scalar>& data = problem.data();
  const FitConfig& config = problem.config();
  const Scalar clip = static_cast<Scalar>(config.exp_clip);

  FitResult<Scalar> result;
  FitState<Scalar> state = init ? std::move(*init) : initialize(data, config);
  ClipCounter clips;

  auto elbo_of = [&](const FitState<Scalar>& s) {
    return compute_elbo(s.params, s.variational, data, clip).total;
  };
  const Scalar offset = config.stop_on_complete_elbo ? elbo_constant(data) : Scalar(0);
  result.diagnostics.elbo_constant = static_cast<double>(offset);
  Scalar previous = elbo_of(state);
  result.diagnostics.elbo_initial = static_cast<double>(previous);
  result.diagnostics.init_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
  if (!std::isfinite(previous)) throw NonFiniteElboError(0, {}, clips.events);

  for (int t = 1; t <= config.max_iter; ++t) {
    const auto t_iter = Clock::now();
    vem_sweep(state, data, config, &clips);
    const Scalar current = elbo_of(state);
    result.diagnostics.iteration_seconds.push_back(
        std::chrono::duration<double>(Clock::now() - t_iter).count());
    if (!std::isfinite(current)) {
      std::vector<double> trace(result.elbo_trace.begin(), result.elbo_trace.end());
      throw NonFiniteElboError(t, std::move(trace), clips.events);
    }
    if (!result.elbo_trace.empty() &&
        current < previous - Scalar(kMonotonicitySlack) * std::abs(previous))
      ++result.diagnostics.monotonicity_violations;
    result.elbo_trace.push_back(current);
    result.iterations = t;
    const Scalar rel_change = std::abs(current - previous) / std::abs(previous + offset);
    previous = current;
    if (rel_change < Scalar(config.eps_elbo)) {
      result.converged = true;
      break;
    }
  }

  result.final_iterate = state;
  const ModelParams<Scalar>& raw = state.params;
  IdentifiedFactors<Scalar> ident = enforce_identifiability(raw.H, raw.B, data.Z);
  result.diagnostics.degenerate_product = ident.degenerate;
  result.alpha_hat = ident.alpha_hat;
  result.beta_pre_projection = raw.beta + raw.B * ident.alpha_hat.transpose();

  result.params.beta =
      project_to_rank(result.beta_pre_projection, data.Z, raw.varsigma, config.r, config.seed);
  result.params.H = std::move(ident.H);
  result.params.B = std::move(ident.B);
  result.params.varsigma = raw.varsigma;
  result.variational = std::move(state.variational);
  result.diagnostics.clip_events = clips.events;
  result.diagnostics.total_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
  return result;
}

template <typename Scalar>
FitResult<Scalar> fit(const CountDataset<Scalar>& data, const FitConfig& config,
                      std::optional<FitState<Scalar>> init = std::nullopt) {
  return fit(validate_inputs(data, config), std::move(init));
}

}  // namespace coap
