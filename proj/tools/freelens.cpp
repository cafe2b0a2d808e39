// freelens: numerical toolkit for Gaussian random matrix models, their
// concentration parameters, free-probability norm bounds, and spectral
// detection experiments. All subcommands are deterministic functions of
// their arguments and input files.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "freelens/chaos.h"
#include "freelens/combinatorics.h"
#include "freelens/free_bounds.h"
#include "freelens/io.h"
#include "freelens/kikuchi.h"
#include "freelens/model.h"
#include "freelens/parameters.h"
#include "freelens/sampling.h"
#include "freelens/spiked.h"

namespace {

using Model = freelens::CoefficientModel<double>;

// Text mode: 15 significant digits.
std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", x);
  return buf;
}

// CSV mode: shortest round-trip decimal.
std::string csv_num(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::vector<double> parse_comma_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

void print_report(std::ostream& os, const freelens::BoundReport<double>& r) {
  os << "[" << r.name << "]\n";
  if (r.lower) os << "lower=" << num(*r.lower) << "\n";
  if (r.upper) os << "upper=" << num(*r.upper) << "\n";
  os << "constant=" << num(r.constant_assumed) << "\n";
  if (r.failure_probability)
    os << "failure_probability=" << num(*r.failure_probability) << "\n";
  if (r.inputs.sigma) os << "sigma=" << num(*r.inputs.sigma) << "\n";
  if (r.inputs.v) os << "v=" << num(*r.inputs.v) << "\n";
  if (r.inputs.sigma_star) os << "sigma_star=" << num(*r.inputs.sigma_star) << "\n";
  if (r.inputs.v_tilde) os << "v_tilde=" << num(*r.inputs.v_tilde) << "\n";
  if (r.inputs.radius) os << "radius=" << num(*r.inputs.radius) << "\n";
  if (r.inputs.d) os << "d=" << *r.inputs.d << "\n";
  if (r.inputs.t) os << "t=" << num(*r.inputs.t) << "\n";
}

void print_report_csv_row(std::ostream& os,
                          const freelens::BoundReport<double>& r) {
  const auto opt = [](const std::optional<double>& v) {
    return v ? csv_num(*v) : std::string();
  };
  os << r.name << ',' << opt(r.lower) << ',' << opt(r.upper) << ','
     << csv_num(r.constant_assumed) << ',' << opt(r.failure_probability) << ','
     << opt(r.inputs.sigma) << ',' << opt(r.inputs.v) << ','
     << opt(r.inputs.sigma_star) << ',' << opt(r.inputs.v_tilde) << ','
     << opt(r.inputs.radius) << ','
     << (r.inputs.d ? std::to_string(*r.inputs.d) : std::string()) << ','
     << opt(r.inputs.t) << '\n';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw freelens::IoError("cannot open for writing: " + path);
  return out;
}

int run_params(const std::string& model_path, int restarts, int iters) {
  const Model model = freelens::read_model(model_path);
  const auto p = freelens::params_report(model, restarts, iters);
  std::cout << "sigma=" << num(p.sigma) << "\n"
            << "v=" << num(p.v) << "\n"
            << "sigma_star_lower=" << num(p.sigma_star_lower) << "\n"
            << "sigma_star_upper=" << num(p.sigma_star_upper) << "\n"
            << "v_tilde=" << num(p.v_tilde) << "\n";
  return 0;
}

int run_bounds(const std::string& model_path, double constant,
               std::optional<double> t, std::optional<double> radius,
               const std::string& format) {
  const Model model = freelens::read_model(model_path);
  const auto p = freelens::params_report(model);
  std::vector<freelens::BoundReport<double>> reports;

  {
    freelens::BoundReport<double> r;
    r.name = "noncommutative_khintchine";
    const auto [lo, hi] = freelens::nck_interval(p.sigma, model.d1, model.d2);
    r.lower = lo;
    r.upper = hi;
    r.inputs.sigma = p.sigma;
    r.inputs.d = model.d1 + model.d2;
    reports.push_back(r);
  }
  {
    freelens::BoundReport<double> r;
    r.name = "pisier_sandwich";
    const auto [lo, hi] = freelens::pisier_interval(model);
    r.lower = lo;
    r.upper = hi;
    r.inputs.sigma = p.sigma;
    reports.push_back(r);
  }
  reports.push_back(freelens::intrinsic_gap(p, model.d1 + model.d2, constant, t));
  if (radius) {
    reports.push_back(freelens::improved_bernstein(
        p.sigma, p.v, *radius, p.sigma_star_upper, model.d1 + model.d2,
        constant, t));
    if (t) {
      reports.push_back(freelens::universality_gap(
          p.sigma_star_upper, p.sigma, *radius, model.d1 + model.d2, constant,
          *t));
      freelens::BoundReport<double> r;
      r.name = "matrix_bernstein_tail";
      r.upper = freelens::bernstein_tail(p.sigma * p.sigma, *radius,
                                         model.d1 + model.d2, *t);
      r.inputs.sigma = p.sigma;
      r.inputs.radius = *radius;
      r.inputs.d = model.d1 + model.d2;
      r.inputs.t = *t;
      reports.push_back(r);
    }
  }

  if (format == "csv") {
    std::cout << "name,lower,upper,constant,failure_probability,sigma,v,"
                 "sigma_star,v_tilde,radius,d,t\n";
    for (const auto& r : reports) print_report_csv_row(std::cout, r);
  } else {
    bool first = true;
    for (const auto& r : reports) {
      if (!first) std::cout << "\n";
      first = false;
      print_report(std::cout, r);
    }
  }
  return 0;
}

int run_lehner(const std::string& model_path, double tol, int max_outer) {
  const Model model = freelens::read_model(model_path);
  const Model* m = &model;
  Model dilated;
  if (!model.self_adjoint) {
    dilated = freelens::hermitian_dilation(model);
    m = &dilated;
  }
  std::cout << "lehner_norm=" << num(freelens::lehner_norm(*m, tol, max_outer))
            << "\n";
  return 0;
}

int run_moments(const std::string& model_path, int p, const std::string& kind,
                long mc_trials, std::uint64_t seed) {
  const Model model = freelens::read_model(model_path);
  if (kind == "gaussian" || kind == "both")
    std::cout << "gaussian_trace_moment="
              << num(freelens::gaussian_trace_moment(model, p)) << "\n";
  if (kind == "free" || kind == "both")
    std::cout << "free_trace_moment="
              << num(freelens::free_trace_moment(model, p)) << "\n";
  if (mc_trials > 0) {
    const auto est = freelens::empirical_trace_moment(model, p, mc_trials, seed);
    std::cout << "mc_mean=" << num(est.mean) << "\n"
              << "mc_std_error=" << num(est.std_error) << "\n"
              << "mc_trials=" << est.trials << "\n";
  }
  return 0;
}

int run_sample(const std::string& model_path, long trials, std::uint64_t seed,
               const std::string& spectrum_out) {
  const Model model = freelens::read_model(model_path);
  const auto est = freelens::empirical_norm(model, trials, seed);
  std::cout << "norm_mean=" << num(est.mean) << "\n"
            << "norm_std_error=" << num(est.std_error) << "\n"
            << "trials=" << est.trials << "\n";
  if (!spectrum_out.empty()) {
    auto out = open_out(spectrum_out);
    out << "trial,index,eigenvalue\n";
    for (long t = 0; t < trials; ++t) {
      const auto spec =
          freelens::empirical_spectrum(model, freelens::trial_seed(seed, t));
      for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i)
        out << t << ',' << i << ',' << csv_num(spec.eigenvalues[i]) << '\n';
    }
  }
  return 0;
}

int run_spiked_sweep(Eigen::Index d, const std::string& lambdas_text,
                     long trials, std::uint64_t seed, const std::string& out_path) {
  const auto lambdas = parse_comma_list(lambdas_text);
  const auto rows = freelens::spiked_sweep<double>(d, lambdas, trials, seed);
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file = open_out(out_path);
    os = &file;
  }
  *os << "lambda,mean_lmax,stderr,bbp\n";
  for (const auto& row : rows)
    *os << csv_num(row.lambda) << ',' << csv_num(row.mean_lambda_max) << ','
        << csv_num(row.std_error) << ',' << csv_num(row.bbp) << '\n';
  return 0;
}

int run_kikuchi(int n, int r, int l, double lambda, long trials,
                std::uint64_t seed, double threshold,
                const std::string& out_path) {
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file = open_out(out_path);
    os = &file;
  }
  *os << "trial,lambda,statistic,detected\n";
  for (long t = 0; t < trials; ++t) {
    const auto instance = freelens::generate_instance<double>(
        n, r, lambda, freelens::derive_seed(seed, static_cast<std::uint64_t>(t)));
    const auto result = freelens::kikuchi_detect(instance, l, threshold);
    *os << t << ',' << csv_num(lambda) << ',' << csv_num(result.statistic)
        << ',' << (result.detected ? 1 : 0) << '\n';
  }
  return 0;
}

int run_chaos(const std::string& tensor_path, bool want_sigma, bool want_v,
              std::optional<double> bound_cq, long sample_trials,
              std::uint64_t seed, bool coupled) {
  const auto tensor = freelens::read_tensor(tensor_path);
  if (want_sigma)
    std::cout << "sigma=" << num(freelens::sigma_chaos(tensor)) << "\n";
  if (want_v) std::cout << "v=" << num(freelens::v_chaos(tensor)) << "\n";
  if (bound_cq) {
    const auto report = freelens::iterated_bound(tensor, *bound_cq);
    print_report(std::cout, report);
  }
  if (sample_trials > 0) {
    std::vector<double> norms(static_cast<std::size_t>(sample_trials));
    for (long t = 0; t < sample_trials; ++t) {
      const auto draw = freelens::sample_chaos(
          tensor, freelens::derive_seed(seed, static_cast<std::uint64_t>(t)),
          !coupled);
      norms[static_cast<std::size_t>(t)] = freelens::spectral_norm(draw);
    }
    double mean = freelens::pairwise_sum(norms) /
                  static_cast<double>(sample_trials);
    std::cout << "sample_norm_mean=" << num(mean) << "\n"
              << "sample_trials=" << sample_trials << "\n";
  }
  return 0;
}

int run_model_gen(const std::string& name, Eigen::Index d, Eigen::Index bandwidth,
                  double lambda, const std::string& spike_text,
                  const std::string& out_path) {
  Model model;
  if (name == "wigner") {
    model = freelens::wigner_model<double>(d);
  } else if (name == "diagonal") {
    model = freelens::diagonal_model<double>(d);
  } else if (name == "band") {
    model = freelens::band_model<double>(d, bandwidth);
  } else if (name == "spiked_wigner") {
    Eigen::VectorXd v;
    if (spike_text.empty()) {
      v = Eigen::VectorXd::Zero(d);
      v(0) = 1.0;
    } else {
      const auto values = parse_comma_list(spike_text);
      v = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                            static_cast<Eigen::Index>(values.size()));
    }
    model = freelens::spiked_wigner_model<double>(d, lambda, v);
  } else {
    throw freelens::InvalidParameter("model-gen: unknown model name " + name);
  }
  freelens::write_model(model, out_path);
  std::cout << "wrote " << name << " model (d1=" << model.d1
            << ", d2=" << model.d2 << ", n=" << model.coefficient_count()
            << ") to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freelens: non-asymptotic random matrix toolkit"};
  app.require_subcommand(1);

  std::string model_path, tensor_path, out_path, spectrum_out, format = "text";
  std::string name, kind = "both", lambdas_text, spike_text;
  double constant = 1.0, tol = 1e-6, lambda = 0.0, threshold = 2.1;
  std::optional<double> t_flag, radius_flag, bound_cq;
  Eigen::Index d = 0, bandwidth = 0;
  int p = 1, restarts = 16, iters = 200, max_outer = 5000;
  int kn = 0, kr = 0, kl = 0;
  long trials = 50, mc_trials = 0, sample_trials = 0;
  std::uint64_t seed = 0;
  bool want_sigma = false, want_v = false, coupled = false;

  auto* params_cmd = app.add_subcommand("params", "Concentration parameters of a model");
  params_cmd->add_option("--model", model_path, "model JSON file")->required();
  params_cmd->add_option("--restarts", restarts, "sigma_star restarts");
  params_cmd->add_option("--iters", iters, "sigma_star iterations per restart");

  auto* bounds_cmd = app.add_subcommand("bounds", "Evaluate the closed-form bounds");
  bounds_cmd->add_option("--model", model_path, "model JSON file")->required();
  bounds_cmd->add_option("--constant", constant, "stand-in for the universal constant");
  bounds_cmd->add_option("--t", t_flag, "tail parameter");
  bounds_cmd->add_option("--radius", radius_flag, "a.s. bound R on the summands");
  bounds_cmd->add_option("--format", format, "text or csv")
      ->check(CLI::IsMember({"text", "csv"}));

  auto* lehner_cmd = app.add_subcommand("lehner", "Solve Lehner's formula for ||X_free||");
  lehner_cmd->add_option("--model", model_path, "model JSON file")->required();
  lehner_cmd->add_option("--tol", tol, "objective tolerance");
  lehner_cmd->add_option("--max-outer", max_outer, "iteration cap");

  auto* moments_cmd = app.add_subcommand("moments", "Exact trace moments");
  moments_cmd->add_option("--model", model_path, "model JSON file")->required();
  moments_cmd->add_option("--p", p, "half moment order (computes E tr X^{2p})")->required();
  moments_cmd->add_option("--kind", kind, "gaussian, free, or both")
      ->check(CLI::IsMember({"gaussian", "free", "both"}));
  moments_cmd->add_option("--mc", mc_trials, "Monte Carlo cross-check trials");
  moments_cmd->add_option("--seed", seed, "master seed");

  auto* sample_cmd = app.add_subcommand("sample", "Monte Carlo norm estimate");
  sample_cmd->add_option("--model", model_path, "model JSON file")->required();
  sample_cmd->add_option("--trials", trials, "number of trials");
  sample_cmd->add_option("--seed", seed, "master seed");
  sample_cmd->add_option("--spectrum-out", spectrum_out, "per-trial spectrum CSV");

  auto* sweep_cmd = app.add_subcommand("spiked-sweep", "Spiked Wigner lambda sweep");
  sweep_cmd->add_option("--d", d, "matrix dimension")->required();
  sweep_cmd->add_option("--lambdas", lambdas_text, "comma-separated SNR grid")->required();
  sweep_cmd->add_option("--trials", trials, "trials per lambda");
  sweep_cmd->add_option("--seed", seed, "master seed");
  sweep_cmd->add_option("--out", out_path, "output CSV (stdout if omitted)");

  auto* kikuchi_cmd = app.add_subcommand("kikuchi", "Kikuchi spectral detection");
  kikuchi_cmd->add_option("--n", kn, "ambient dimension")->required();
  kikuchi_cmd->add_option("--r", kr, "tensor order (even)")->required();
  kikuchi_cmd->add_option("--l", kl, "Kikuchi level")->required();
  kikuchi_cmd->add_option("--lambda", lambda, "signal-to-noise ratio");
  kikuchi_cmd->add_option("--trials", trials, "number of instances");
  kikuchi_cmd->add_option("--seed", seed, "master seed");
  kikuchi_cmd->add_option("--threshold", threshold, "detection threshold multiplier");
  kikuchi_cmd->add_option("--out", out_path, "output CSV (stdout if omitted)");

  auto* chaos_cmd = app.add_subcommand("chaos", "Matrix chaos flattenings");
  chaos_cmd->add_option("--tensor", tensor_path, "tensor JSON file")->required();
  chaos_cmd->add_flag("--sigma", want_sigma, "print sigma(A)");
  chaos_cmd->add_flag("--v", want_v, "print v(A)");
  chaos_cmd->add_option("--bound", bound_cq, "print the iterated bound with C_q");
  chaos_cmd->add_option("--sample", sample_trials, "sample N draws and report mean norm");
  chaos_cmd->add_option("--seed", seed, "master seed");
  chaos_cmd->add_flag("--coupled", coupled, "coupled (square-free) sampling");

  auto* gen_cmd = app.add_subcommand("model-gen", "Write a builtin model to a file");
  gen_cmd->add_option("--name", name, "wigner, diagonal, band, or spiked_wigner")->required();
  gen_cmd->add_option("--d", d, "dimension")->required();
  gen_cmd->add_option("--B", bandwidth, "band width (band model)");
  gen_cmd->add_option("--lambda", lambda, "spike strength (spiked_wigner)");
  gen_cmd->add_option("--v", spike_text, "comma-separated unit spike vector (default e1)");
  gen_cmd->add_option("--out", out_path, "output model JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (params_cmd->parsed()) return run_params(model_path, restarts, iters);
    if (bounds_cmd->parsed())
      return run_bounds(model_path, constant, t_flag, radius_flag, format);
    if (lehner_cmd->parsed()) return run_lehner(model_path, tol, max_outer);
    if (moments_cmd->parsed())
      return run_moments(model_path, p, kind, mc_trials, seed);
    if (sample_cmd->parsed())
      return run_sample(model_path, trials, seed, spectrum_out);
    if (sweep_cmd->parsed())
      return run_spiked_sweep(d, lambdas_text, trials, seed, out_path);
    if (kikuchi_cmd->parsed())
      return run_kikuchi(kn, kr, kl, lambda, trials, seed, threshold, out_path);
    if (chaos_cmd->parsed())
      return run_chaos(tensor_path, want_sigma, want_v, bound_cq, sample_trials,
                       seed, coupled);
    if (gen_cmd->parsed())
      return run_model_gen(name, d, bandwidth, lambda, spike_text, out_path);
  } catch (const freelens::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const freelens::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
