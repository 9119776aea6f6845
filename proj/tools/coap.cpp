// coap: simulate, fit, select, eval and replay from the command line.
//
// Exit codes: 0 success, 2 input or validation error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <array>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "coap/error.hpp"
#include "coap/fit.hpp"
#include "coap/io.hpp"
#include "coap/metrics.hpp"
#include "coap/rank_selection.hpp"
#include "coap/simulate.hpp"
#include "coap/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace coap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct SimulateArgs {
  ScenarioSpec spec;
  std::string offset = "constant";
  std::string out;
};

struct FitArgs {
  std::string x, z, a;
  FitConfig config;
  bool dropped_constant_stopping = false;
  bool row_sum_offsets = false;
  std::string out;
};

struct SelectArgs {
  FitArgs fit;
  int q_max = kDefaultQMax;
  int r_max = kDefaultRMax;
};

struct EvalArgs {
  std::vector<std::string> fits;
  std::vector<std::string> truths;
  std::string out;
};

/// Collects what goes into manifest.json.
class Manifest {
 public:
  explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["software_version"] = kVersion;
    doc_["config"] = json::object();
    doc_["input_hashes"] = json::object();
    doc_["outputs"] = json::array();
  }
  json& config() { return doc_["config"]; }
  void input(const std::string& path) { doc_["input_hashes"][path] = io::sha256_file(path); }
  void output(const fs::path& path) { doc_["outputs"].push_back(path.string()); }
  void extra(const std::string& key, json value) { doc_[key] = std::move(value); }

  void write(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    output(path);
    doc_["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::write_text(path, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

void write_matrix(Manifest& m, const fs::path& dir, const std::string& name, const Eigen::MatrixXd& value) {
  const fs::path path = dir / (name + ".csv");
  io::write_csv(path, value);
  m.output(path);
}

void ensure_dir(const std::string& out) {
  if (out.empty()) throw Error(ErrorCode::Io, "--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::Io, out + ": " + ec.message());
}

/// Shortest round-trip decimal form.
std::string number(double v) {
  std::array<char, 40> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

json ratios_json(const std::vector<double>& v) { return json(v); }

// ---------------------------------------------------------------- simulate

void add_simulate_options(CLI::App* cmd, SimulateArgs& a) {
  cmd->add_option("--n", a.spec.n, "sample size")->capture_default_str();
  cmd->add_option("--p", a.spec.p, "number of count variables")->capture_default_str();
  cmd->add_option("--d", a.spec.d, "covariates including the intercept")->capture_default_str();
  cmd->add_option("--q0", a.spec.q0, "true number of factors")->capture_default_str();
  cmd->add_option("--r0", a.spec.r0, "true rank of beta")->capture_default_str();
  cmd->add_option("--rho-z", a.spec.rho_z, "covariate signal scale")->capture_default_str();
  cmd->add_option("--rho-b", a.spec.rho_B, "loading signal scale")->capture_default_str();
  cmd->add_option("--sigma2", a.spec.sigma2, "overdispersion variance")->capture_default_str();
  cmd->add_option("--seed", a.spec.seed, "replicate seed")->capture_default_str();
  cmd->add_option("--offset", a.offset, "constant or rowsum")
      ->check(CLI::IsMember({"constant", "rowsum"}))
      ->capture_default_str();
  cmd->add_option("--a-value", a.spec.a_value, "offset for --offset constant")->capture_default_str();
  cmd->add_option("--out", a.out, "output directory")->required();
}

int run_simulate(const SimulateArgs& args) {
  ScenarioSpec spec = args.spec;
  spec.offset = args.offset == "rowsum" ? OffsetMode::RowSum : OffsetMode::Constant;
  validate_spec(spec);
  const SyntheticDataset<double> sim = generate_scenario<double>(spec);

  ensure_dir(args.out);
  Manifest m("simulate");
  m.config() = {{"n", spec.n},           {"p", spec.p},           {"d", spec.d},
                {"q0", spec.q0},         {"r0", spec.r0},         {"rho-z", spec.rho_z},
                {"rho-b", spec.rho_B},   {"sigma2", spec.sigma2}, {"seed", spec.seed},
                {"offset", args.offset}, {"a-value", spec.a_value}, {"out", args.out}};
  const fs::path dir(args.out);
  write_matrix(m, dir, "X", sim.data.X);
  write_matrix(m, dir, "Z", sim.data.Z);
  write_matrix(m, dir, "a", sim.data.a);
  write_matrix(m, dir, "beta0", sim.beta0);
  write_matrix(m, dir, "H0", sim.H0);
  write_matrix(m, dir, "B0", sim.B0);
  m.write(dir);
  return kExitOk;
}

// --------------------------------------------------------------------- fit

void add_data_options(CLI::App* cmd, FitArgs& a) {
  cmd->add_option("--x", a.x, "count matrix (CSV or .mtx)")->required();
  cmd->add_option("--z", a.z, "covariate matrix with leading intercept column")->required();
  cmd->add_option("--a", a.a, "offsets (one column); default all ones");
  cmd->add_flag("--row-sum-offsets", a.row_sum_offsets,
                "set a_i to the row sum of X over the median row sum");
}

void add_engine_options(CLI::App* cmd, FitArgs& a) {
  cmd->add_flag("--joint-beta", a.config.joint_beta_update, "joint (beta, varsigma) update");
  cmd->add_option("--max-iter", a.config.max_iter, "iteration cap")->capture_default_str();
  cmd->add_option("--eps", a.config.eps_elbo, "relative ELBO tolerance")->capture_default_str();
  cmd->add_option("--seed", a.config.seed, "seed for randomized SVD")->capture_default_str();
  cmd->add_option("--exp-clip", a.config.exp_clip, "bound on exponent arguments")->capture_default_str();
  cmd->add_flag("--dropped-constant-stopping", a.dropped_constant_stopping,
                "measure the relative ELBO change without the data-only constant");
  cmd->add_option("--out", a.out, "output directory")->required();
}

struct LoadedData {
  CountDataset<double> data;
  bool a_given = false;
};

LoadedData load_data(const FitArgs& args, Manifest& m) {
  LoadedData out;
  out.data.X = io::read_matrix(args.x);
  m.input(args.x);
  out.data.Z = io::read_csv(args.z);
  m.input(args.z);
  if (!args.a.empty() && args.row_sum_offsets)
    throw Error(ErrorCode::InvalidConfig, "--a and --row-sum-offsets are exclusive");
  if (!args.a.empty()) {
    out.data.a = io::read_vector(args.a);
    m.input(args.a);
    out.a_given = true;
  } else if (args.row_sum_offsets) {
    const Eigen::VectorXd sums = out.data.X.rowwise().sum().cwiseMax(1.0);
    std::vector<double> sorted(sums.data(), sums.data() + sums.size());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted.size();
    const double median = k == 0 ? 1.0 : (k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]));
    out.data.a = sums / median;
  } else {
    out.data.a = Eigen::VectorXd::Ones(out.data.X.rows());
  }
  return out;
}

void record_fit_config(Manifest& m, const FitArgs& args) {
  json& c = m.config();
  c["x"] = args.x;
  c["z"] = args.z;
  if (!args.a.empty()) c["a"] = args.a;
  c["row-sum-offsets"] = args.row_sum_offsets;
  c["q"] = args.config.q;
  c["r"] = args.config.r;
  c["joint-beta"] = args.config.joint_beta_update;
  c["max-iter"] = args.config.max_iter;
  c["eps"] = args.config.eps_elbo;
  c["seed"] = args.config.seed;
  c["exp-clip"] = args.config.exp_clip;
  c["dropped-constant-stopping"] = args.dropped_constant_stopping;
  c["out"] = args.out;
}

json diagnostics_json(const FitResult<double>& r) {
  return {{"iterations", r.iterations},
          {"converged", r.converged},
          {"clip_events", r.diagnostics.clip_events},
          {"monotonicity_violations", r.diagnostics.monotonicity_violations},
          {"degenerate_product", r.diagnostics.degenerate_product},
          {"elbo_initial", r.diagnostics.elbo_initial},
          {"elbo_constant", r.diagnostics.elbo_constant},
          {"init_seconds", r.diagnostics.init_seconds},
          {"total_seconds", r.diagnostics.total_seconds}};
}

/// Runs body; NonFiniteElbo leaves diagnostics.json behind before exiting 3.
template <typename Body>
int with_numeric_dump(const std::string& out, Body&& body) {
  try {
    return body();
  } catch (const NonFiniteElboError& e) {
    json d = {{"error", std::string(to_string(e.code()))},
              {"message", e.what()},
              {"iteration", e.iteration()},
              {"clip_events", e.clip_events()},
              {"elbo_trace", e.elbo_trace()}};
    ensure_dir(out);
    io::write_text(fs::path(out) / "diagnostics.json", d.dump(2) + "\n");
    throw;
  }
}

int run_fit(FitArgs args) {
  args.config.stop_on_complete_elbo = !args.dropped_constant_stopping;
  Manifest m("fit");
  record_fit_config(m, args);
  const LoadedData loaded = load_data(args, m);
  const ValidatedProblem<double> problem = validate_inputs(loaded.data, args.config);

  return with_numeric_dump(args.out, [&] {
    const FitResult<double> r = fit(problem);
    ensure_dir(args.out);
    const fs::path dir(args.out);
    write_matrix(m, dir, "beta_hat", r.params.beta);
    write_matrix(m, dir, "B_hat", r.params.B);
    write_matrix(m, dir, "H_hat", r.params.H);
    write_matrix(m, dir, "varsigma_hat", r.params.varsigma);
    write_matrix(m, dir, "elbo_trace",
                 Eigen::Map<const Eigen::VectorXd>(r.elbo_trace.data(), static_cast<Index>(r.elbo_trace.size())));
    m.extra("diagnostics", diagnostics_json(r));
    m.write(dir);
    return kExitOk;
  });
}

// ------------------------------------------------------------------ select

int run_select(SelectArgs args) {
  FitArgs& f = args.fit;
  f.config.stop_on_complete_elbo = !f.dropped_constant_stopping;
  Manifest m("select");
  f.config.q = args.q_max;
  f.config.r = args.r_max;
  record_fit_config(m, f);
  m.config().erase("q");
  m.config().erase("r");
  m.config()["q-max"] = args.q_max;
  m.config()["r-max"] = args.r_max;
  const LoadedData loaded = load_data(f, m);
  validate_inputs(loaded.data, f.config);

  return with_numeric_dump(f.out, [&] {
    FitResult<double> r;
    const SvrReport report = svr_select(loaded.data, args.q_max, args.r_max, f.config, &r);
    ensure_dir(f.out);
    const fs::path dir(f.out);
    json doc = {{"q_hat", report.q_hat},
                {"r_hat", report.r_hat},
                {"q_max", report.q_max},
                {"r_max", report.r_max},
                {"ratios_B", ratios_json(report.ratios_B)},
                {"ratios_beta", ratios_json(report.ratios_beta)}};
    const fs::path path = dir / "svr_report.json";
    io::write_text(path, doc.dump(2) + "\n");
    m.output(path);
    m.extra("diagnostics", diagnostics_json(r));
    m.write(dir);
    return kExitOk;
  });
}

// -------------------------------------------------------------------- eval

int run_eval(const EvalArgs& args) {
  if (args.fits.empty()) throw Error(ErrorCode::InvalidConfig, "at least one --fit directory is required");
  if (args.truths.size() != 1 && args.truths.size() != args.fits.size())
    throw Error(ErrorCode::InvalidConfig, "give one --truth, or one per --fit");
  Manifest m("eval");
  m.config() = {{"fit", args.fits}, {"truth", args.truths}, {"out", args.out}};

  std::vector<EvalSummary> rows;
  for (std::size_t k = 0; k < args.fits.size(); ++k) {
    const fs::path fdir(args.fits[k]);
    const fs::path tdir(args.truths.size() == 1 ? args.truths[0] : args.truths[k]);
    auto load = [&](const fs::path& dir, const char* name) {
      const fs::path path = dir / (std::string(name) + ".csv");
      m.input(path.string());
      return io::read_csv(path);
    };
    const Eigen::MatrixXd H_hat = load(fdir, "H_hat"), B_hat = load(fdir, "B_hat"),
                          beta_hat = load(fdir, "beta_hat");
    const Eigen::MatrixXd H0 = load(tdir, "H0"), B0 = load(tdir, "B0"), beta0 = load(tdir, "beta0");
    rows.push_back(evaluate(H_hat, B_hat, beta_hat, H0, B0, beta0));
  }

  ensure_dir(args.out);
  const fs::path dir(args.out);
  auto column = [&](double EvalSummary::*field) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.*field);
    return mean_sd(v);
  };
  const std::vector<std::pair<const char*, double EvalSummary::*>> fields = {
      {"tr_H", &EvalSummary::tr_H},
      {"tr_B", &EvalSummary::tr_B},
      {"ea_beta", &EvalSummary::ea_beta},
      {"ea_beta_col1", &EvalSummary::ea_beta_col1},
      {"ea_beta_rms", &EvalSummary::ea_beta_rms},
      {"ea_beta_col1_rms", &EvalSummary::ea_beta_col1_rms}};

  std::string table = "replicate";
  for (const auto& [name, _] : fields) table += std::string(",") + name;
  table += "\n";
  json doc = {{"replicates", json::array()}, {"mean", json::object()}, {"sd", json::object()}};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    table += std::to_string(k + 1);
    json row = {{"fit", args.fits[k]}};
    for (const auto& [name, field] : fields) {
      table += "," + number(rows[k].*field);
      row[name] = rows[k].*field;
    }
    table += "\n";
    doc["replicates"].push_back(row);
  }
  std::string mean_line = "mean", sd_line = "sd";
  for (const auto& [name, field] : fields) {
    const MeanSd s = column(field);
    mean_line += "," + number(s.mean);
    sd_line += "," + number(s.sd);
    doc["mean"][name] = s.mean;
    doc["sd"][name] = s.sd;
  }
  table += mean_line + "\n" + sd_line + "\n";

  io::write_text(dir / "eval.csv", table);
  m.output(dir / "eval.csv");
  io::write_text(dir / "eval_summary.json", doc.dump(2) + "\n");
  m.output(dir / "eval_summary.json");
  m.write(dir);
  std::cout << table;
  return kExitOk;
}

// ------------------------------------------------------------------ replay

/// Turns a manifest's config back into command-line arguments.
std::vector<std::string> argv_from_manifest(const json& manifest, const std::string& out_override) {
  std::vector<std::string> argv{"coap", manifest.at("command").get<std::string>()};
  for (const auto& [key, value] : manifest.at("config").items()) {
    if (key == "out" && !out_override.empty()) {
      argv.insert(argv.end(), {"--out", out_override});
    } else if (value.is_boolean()) {
      if (value.get<bool>()) argv.push_back("--" + key);
    } else if (value.is_array()) {
      for (const auto& v : value) argv.insert(argv.end(), {"--" + key, v.get<std::string>()});
    } else if (value.is_string()) {
      argv.insert(argv.end(), {"--" + key, value.get<std::string>()});
    } else if (value.is_number_float()) {
      std::array<char, 40> buf{};
      const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value.get<double>(),
                                     std::chars_format::general, 17);
      argv.insert(argv.end(), {"--" + key, std::string(buf.data(), res.ptr)});
    } else {
      argv.insert(argv.end(), {"--" + key, value.dump()});
    }
  }
  return argv;
}

int dispatch(int argc, const char* const* argv);

int run_replay(const std::string& manifest_path, const std::string& out_override) {
  json manifest;
  try {
    manifest = json::parse(io::read_text(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, manifest_path + ": " + e.what());
  }
  if (manifest.value("command", "") == "replay") throw Error(ErrorCode::InvalidConfig, "cannot replay a replay");
  const std::vector<std::string> args = argv_from_manifest(manifest, out_override);
  std::vector<const char*> cargs;
  for (const auto& s : args) cargs.push_back(s.c_str());
  return dispatch(static_cast<int>(cargs.size()), cargs.data());
}

// ---------------------------------------------------------------- dispatch

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Covariate-augmented overdispersed Poisson factor model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SimulateArgs sim;
  CLI::App* cmd_sim = app.add_subcommand("simulate", "generate a synthetic dataset with known truth");
  add_simulate_options(cmd_sim, sim);

  FitArgs fit_args;
  CLI::App* cmd_fit = app.add_subcommand("fit", "fit the model by variational EM");
  add_data_options(cmd_fit, fit_args);
  cmd_fit->add_option("--q", fit_args.config.q, "number of factors")->capture_default_str();
  cmd_fit->add_option("--r", fit_args.config.r, "rank of beta")->capture_default_str();
  add_engine_options(cmd_fit, fit_args);

  SelectArgs sel;
  CLI::App* cmd_sel = app.add_subcommand("select", "choose (q, r) by singular value ratios");
  add_data_options(cmd_sel, sel.fit);
  cmd_sel->add_option("--q-max", sel.q_max, "upper bound on q")->capture_default_str();
  cmd_sel->add_option("--r-max", sel.r_max, "upper bound on r")->capture_default_str();
  add_engine_options(cmd_sel, sel.fit);

  EvalArgs ev;
  CLI::App* cmd_eval = app.add_subcommand("eval", "score estimates against ground truth");
  cmd_eval->add_option("--fit", ev.fits, "fit output directory (repeatable)")->required();
  cmd_eval->add_option("--truth", ev.truths, "simulate output directory (one, or one per --fit)")->required();
  cmd_eval->add_option("--out", ev.out, "output directory")->required();

  std::string manifest_path, replay_out;
  CLI::App* cmd_replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  cmd_replay->add_option("manifest", manifest_path, "manifest.json")->required();
  cmd_replay->add_option("--out", replay_out, "write to this directory instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (cmd_sim->parsed()) return run_simulate(sim);
  if (cmd_fit->parsed()) return run_fit(fit_args);
  if (cmd_sel->parsed()) return run_select(sel);
  if (cmd_eval->parsed()) return run_eval(ev);
  return run_replay(manifest_path, replay_out);
}

void configure_threads() {
#ifdef _OPENMP
  if (const char* env = std::getenv("COAP_NUM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads();
  try {
    return dispatch(argc, argv);
  } catch (const Error& e) {
    std::cerr << "coap: " << to_string(e.code()) << ": " << e.what() << "\n";
    return is_numerical(e.code()) ? kExitNumerical : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "coap: " << e.what() << "\n";
    return kExitInput;
  }
}
