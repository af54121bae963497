#include "axisfit/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "axisfit/config.hpp"
#include "axisfit/report.hpp"

namespace axisfit {

namespace {

Vec5 parse_five(const std::string& text, const std::string& flag) {
  std::stringstream ss(text);
  std::string item;
  std::vector<double> values;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::usage, flag + " expects five comma-separated numbers, got '" + text + "'");
    }
  }
  if (values.size() != 5) throw Error(ErrorKind::usage, flag + " expects five comma-separated numbers");
  return Vec5(values[0], values[1], values[2], values[3], values[4]);
}

struct PriorFlags {
  std::string mean_deg = "8,-6,42,23,17";
  std::string sd_deg = "7,4,9,11,11";
  double residual_sd_deg = 1.0;

  void attach(CLI::App* app) {
    app->add_option("--prior-mean-deg", mean_deg, "prior mean of t1,t2,s1,s2,gamma0 (deg)")->capture_default_str();
    app->add_option("--prior-sd-deg", sd_deg, "prior sds (deg)")->capture_default_str();
    app->add_option("--residual-sd-deg", residual_sd_deg, "residual sd 1/sqrt(2 kappa) (deg)")
        ->capture_default_str();
  }

  PriorSpec build() const {
    const Vec5 mean = parse_five(mean_deg, "--prior-mean-deg") * deg_to_rad(1.0);
    const Vec5 sd = parse_five(sd_deg, "--prior-sd-deg") * deg_to_rad(1.0);
    if (!(residual_sd_deg > 0.0)) throw Error(ErrorKind::validation, "--residual-sd-deg must be > 0");
    if (!(sd.array() > 0.0).all()) throw Error(ErrorKind::validation, "--prior-sd-deg entries must be > 0");
    return PriorSpec::from_sds(AnatomicalAngles::from_vector(mean), sd,
                               kappa_from_residual_sd(deg_to_rad(residual_sd_deg)));
  }
};

struct SimFlags {
  std::string table1_row;
  int M = 30;
  int n = 50;
  int replicates = 100;
  double error_sd_deg = rad_to_deg(0.017);
  double group_fraction = 0.0;
  double group_shift_s1_deg = 0.0;
  double group_shift_s2_deg = 0.0;
  bool constrained_gamma0 = false;
  double gamma0_offset_deg = 0.0;
  std::string output_prefix = "simulation";
  std::string write_data;
  bool data_only = false;
};

struct Output {
  std::ostream& out;
  const RunConfig& cfg;
  bool color;

  void report(const std::string& text) const {
    if (cfg.report_out.empty()) {
      out << text;
      return;
    }
    std::ofstream f(cfg.report_out);
    if (!f) throw Error(ErrorKind::usage, "cannot write report '" + cfg.report_out + "'");
    f << text;
  }

  void json(const nlohmann::json& j) const {
    if (cfg.json_out.empty()) return;
    std::ofstream f(cfg.json_out);
    if (!f) throw Error(ErrorKind::usage, "cannot write '" + cfg.json_out + "'");
    f << j.dump(2) << "\n";
  }
};

Dataset load_for(const RunConfig& cfg) {
  LoadOptions lo;
  lo.format = cfg.format;
  lo.strict = !cfg.skip_invalid;
  Dataset data = load_dataset(cfg.data, lo);
  if (cfg.subsample_stride > 1) data = subsample(data, cfg.subsample_stride);
  return data;
}

std::vector<const SubjectData*> selected(const Dataset& data, const RunConfig& cfg) {
  std::vector<const SubjectData*> out;
  if (!cfg.subject.empty()) {
    out.push_back(&data.subject(cfg.subject));
  } else {
    for (const auto& s : data.subjects) out.push_back(&s);
  }
  return out;
}

int run_fit_subject(const RunConfig& cfg, bool reduced, const Output& o) {
  const Dataset data = load_for(cfg);
  std::string text;
  nlohmann::json j = nlohmann::json::object();
  bool all_converged = true;
  for (const SubjectData* s : selected(data, cfg)) {
    SubjectFitResult fit;
    if (reduced) {
      const AnatomicalAngles d = default_angles();
      fit = fit_subject_reduced(*s, Eigen::Vector4d(d.t1, d.t2, d.s1, d.s2), cfg.fit);
    } else {
      fit = fit_subject(*s, default_angles(), cfg.fit);
    }
    all_converged = all_converged && fit.converged;
    text += format_subject_fit(s->subject_id(), fit, o.color);
    j[s->subject_id()] = to_json(fit);
  }
  o.report(text);
  o.json(j);
  return all_converged ? kExitOk : kExitConvergence;
}

int run_fit_map(const RunConfig& cfg, const Output& o) {
  const Dataset data = load_for(cfg);
  std::string text;
  nlohmann::json j = nlohmann::json::object();
  bool all_converged = true;
  for (const SubjectData* s : selected(data, cfg)) {
    const PosteriorResult fit = fit_map(*s, cfg.prior, cfg.fit);
    all_converged = all_converged && fit.converged;
    text += format_posterior(s->subject_id(), fit, o.color);
    j[s->subject_id()] = to_json(fit);
  }
  o.report(text);
  o.json(j);
  return all_converged ? kExitOk : kExitConvergence;
}

int run_fit_population(const RunConfig& cfg, const std::vector<std::string>& tests, const Output& o) {
  const Dataset data = load_for(cfg);
  MixedOptions opts;
  opts.algorithm = cfg.algorithm;
  opts.max_outer = cfg.max_outer;
  opts.fixed_tol = cfg.outer_tol;
  opts.threads = cfg.threads;
  opts.subject = cfg.fit;
  opts.lmm.method = cfg.lmm_method;
  const PopulationFit fit = fit_population(data.subjects, cfg.prior, cfg.model, opts);
  std::vector<std::pair<std::string, WaldResult>> wald;
  std::vector<std::string> names = tests;
  if (names.empty()) {
    for (const auto& n : fit.fixed_names) {
      if (n == "ds1" || n == "ds2") names.push_back(n);
    }
  }
  for (const auto& n : names) wald.emplace_back(n, wald_test(fit, n));
  o.report(format_population(fit, wald, o.color));
  o.json(to_json(fit, wald));
  return fit.converged ? kExitOk : kExitConvergence;
}

int run_simulate(const RunConfig& cfg, const SimFlags& f, const Output& o) {
  SimConfig sc;
  if (!f.table1_row.empty()) {
    sc = SimConfig::table_row(f.table1_row);
  } else {
    sc.M = f.M;
    sc.n = f.n;
  }
  sc.replicates = f.replicates;
  sc.seed = cfg.seed;
  sc.error_sd = deg_to_rad(f.error_sd_deg);
  sc.algorithm = cfg.algorithm;
  sc.lmm_method = cfg.lmm_method;
  sc.threads = cfg.threads;
  sc.group_fraction = f.group_fraction;
  sc.group_shift[2] = deg_to_rad(f.group_shift_s1_deg);
  sc.group_shift[3] = deg_to_rad(f.group_shift_s2_deg);
  sc.model = cfg.model;
  sc.constrained_gamma0 = f.constrained_gamma0;
  sc.gamma0_offset = deg_to_rad(f.gamma0_offset_deg);
  sc.validate();

  if (!f.write_data.empty()) {
    auto rng = replicate_rng(sc.seed, 0);
    const SimulatedPopulation pop = simulate_population(sc, rng);
    Dataset data;
    data.subjects = pop.subjects;
    data.metadata.source = "synthetic";
    write_dataset(data, f.write_data);
    o.out << "wrote " << pop.subjects.size() << " subjects to " << f.write_data << "\n";
    if (f.data_only) return kExitOk;
  }

  const SimReport report = run_study(sc);
  const std::string text = format_sim_report(report, o.color);
  const std::string prefix = f.output_prefix;
  {
    std::ofstream t(prefix + ".txt");
    std::ofstream j(prefix + ".json");
    if (!t || !j) throw Error(ErrorKind::usage, "cannot write simulation report files with prefix '" + prefix + "'");
    t << format_sim_report(report, false);
    j << to_json(report).dump(2) << "\n";
  }
  o.report(text);
  o.json(to_json(report));
  return kExitOk;
}

int run_validate(const RunConfig& cfg, const Output& o) {
  const Dataset data = load_for(cfg);
  o.report(format_dataset_summary(data, o.color));
  nlohmann::json j;
  j["source"] = data.metadata.source;
  j["subjects"] = data.subjects.size();
  j["frames"] = data.total_frames();
  j["rejected"] = data.rejected.size();
  o.json(j);
  return data.rejected.empty() ? kExitOk : kExitValidation;
}

std::string flag_for(const std::string& key) {
  std::string flag = "--" + key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  return flag;
}

// Appends config-file entries whose flags are absent from the command line.
std::vector<std::string> merge_config(const std::vector<std::string>& args, CLI::App& app) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  CLI::App* sub = nullptr;
  for (CLI::App* s : app.get_subcommands({})) {
    if (s->get_name() == args[0]) sub = s;
  }
  if (sub == nullptr) return args;
  std::vector<std::string> merged = args;
  for (const auto& [key, value] : read_config_file(path)) {
    const std::string flag = flag_for(key);
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given) continue;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || flag == "--config") {
      throw Error(ErrorKind::usage, "config key '" + key + "' is not an option of " + args[0]);
    }
    merged.push_back(flag + "=" + value);
  }
  return merged;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
      return kExitUsage;
    case ErrorKind::parse:
      return kExitParse;
    case ErrorKind::domain:
    case ErrorKind::degenerate:
    case ErrorKind::validation:
      return kExitValidation;
    case ErrorKind::too_few_frames:
      return kExitTooFewFrames;
    case ErrorKind::convergence:
      return kExitConvergence;
    case ErrorKind::ill_conditioned:
      return kExitIllConditioned;
  }
  return kExitInternal;
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"axisfit: ankle rotation axis estimation from rotation-matrix sequences"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  RunConfig cfg;
  std::string format = "auto";
  std::string model = "one-sample";
  std::string algorithm = "plme";
  std::string kernel = "auto";
  std::string lmm_method;
  std::string config_path;
  PriorFlags prior;
  SimFlags sim;
  std::vector<std::string> tests;
  bool reduced = false;

  auto common = [&](CLI::App* sub, bool with_data) {
    if (with_data) {
      sub->add_option("--data", cfg.data, "dataset file")->required();
      sub->add_option("--format", format, "auto, rotation or cardan")->capture_default_str();
      sub->add_flag("--skip-invalid", cfg.skip_invalid, "drop invalid matrices instead of failing");
      sub->add_option("--subsample-stride", cfg.subsample_stride, "keep one frame in N")->capture_default_str();
    }
    sub->add_option("--config", config_path, "key=value config file; flags override it");
    sub->add_option("--json-out", cfg.json_out, "machine-readable output (radians)");
    sub->add_option("--report-out", cfg.report_out, "write the report here instead of stdout");
    sub->add_option("--threads", cfg.threads, "worker threads (0: all cores)")->capture_default_str();
    sub->add_option("--kernel", kernel, "frame kernel: auto, scalar or avx2")->capture_default_str();
  };
  auto fit_flags = [&](CLI::App* sub) {
    sub->add_option("--subject", cfg.subject, "fit one subject only");
    sub->add_option("--tol", cfg.fit.tol, "Gauss-Newton step tolerance (rad)")->capture_default_str();
    sub->add_option("--max-iter", cfg.fit.max_iter, "Gauss-Newton iteration cap")->capture_default_str();
    sub->add_flag("--grid-init", cfg.fit.grid_init, "coarse grid start");
  };

  CLI::App* fs = app.add_subcommand("fit-subject", "maximum likelihood fit per subject");
  common(fs, true);
  fit_flags(fs);
  fs->add_flag("--reduced", reduced, "tie gamma0 to the axes (four free angles)");

  CLI::App* fm = app.add_subcommand("fit-map", "penalized (MAP) fit per subject");
  common(fm, true);
  fit_flags(fm);
  prior.attach(fm);

  CLI::App* fp = app.add_subcommand("fit-population", "mixed-effects fit over all subjects");
  common(fp, true);
  prior.attach(fp);
  fp->add_option("--algorithm", algorithm, "plme or lme")->capture_default_str();
  fp->add_option("--model", model, "one-sample, two-sample-s1-s2, two-sample-s1 or two-sample-none")
      ->capture_default_str();
  fp->add_option("--reference-group", cfg.model.reference_group, "group without shift");
  fp->add_option("--lmm-method", lmm_method, "ml or reml for the linear mixed model step (default ml)");
  fp->add_option("--max-outer", cfg.max_outer, "outer iteration cap")->capture_default_str();
  fp->add_option("--outer-tol", cfg.outer_tol, "fixed-effect change tolerance (rad)")->capture_default_str();
  fp->add_option("--test", tests, "fixed effects to Wald-test (default: ds1, ds2 when present)");

  CLI::App* sm = app.add_subcommand("simulate", "Monte Carlo study");
  common(sm, false);
  sm->add_option("--table1-row", sim.table1_row, "n=..,M=.. shorthand");
  sm->add_option("--M", sim.M, "subjects per replicate")->capture_default_str();
  sm->add_option("--n", sim.n, "frames per subject")->capture_default_str();
  sm->add_option("--replicates", sim.replicates, "Monte Carlo replicates")->capture_default_str();
  sm->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  sm->add_option("--error-sd-deg", sim.error_sd_deg, "rotation error sd (deg)")->capture_default_str();
  sm->add_option("--algorithm", algorithm, "plme or lme")->capture_default_str();
  sm->add_option("--model", model, "fitted population model")->capture_default_str();
  sm->add_option("--lmm-method", lmm_method, "ml or reml for the linear mixed model step (default ml)");
  sm->add_option("--group-fraction", sim.group_fraction, "share of subjects in group B")->capture_default_str();
  sm->add_option("--group-shift-s1-deg", sim.group_shift_s1_deg, "group B shift of s1 (deg)");
  sm->add_option("--group-shift-s2-deg", sim.group_shift_s2_deg, "group B shift of s2 (deg)");
  sm->add_flag("--constrained-gamma0", sim.constrained_gamma0, "tie gamma0 to the axes");
  sm->add_option("--gamma0-offset-deg", sim.gamma0_offset_deg, "offset added to the tied gamma0 (deg)");
  sm->add_option("--output-prefix", sim.output_prefix, "report files <prefix>.txt and <prefix>.json")
      ->capture_default_str();
  sm->add_option("--write-data", sim.write_data, "also write the first replicate's dataset here");
  sm->add_flag("--data-only", sim.data_only, "stop after --write-data");

  CLI::App* va = app.add_subcommand("validate", "load and check a dataset");
  common(va, true);

  try {
    std::vector<std::string> merged = merge_config(args, app);
    std::reverse(merged.begin(), merged.end());
    app.parse(merged);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }

  try {
    cfg.format = parse_frame_format(format);
    cfg.model.design = parse_group_design(model);
    cfg.algorithm = parse_mixed_algorithm(algorithm);
    if (kernel == "scalar") {
      set_kernel_isa(KernelIsa::scalar);
    } else if (kernel == "avx2") {
      set_kernel_isa(KernelIsa::avx2);
    } else if (kernel != "auto") {
      throw Error(ErrorKind::usage, "unknown kernel '" + kernel + "'");
    }
    const bool wants_prior = fm->parsed() || fp->parsed();
    if (wants_prior) cfg.prior = prior.build();
    if (lmm_method == "ml" || lmm_method == "reml") {
      cfg.lmm_method = lmm_method == "ml" ? LmmMethod::ml : LmmMethod::reml;
    } else if (!lmm_method.empty()) {
      throw Error(ErrorKind::usage, "unknown lmm method '" + lmm_method + "' (ml, reml)");
    }
    if (fs->parsed()) cfg.mode = RunMode::fit_subject;
    if (fm->parsed()) cfg.mode = RunMode::fit_map;
    if (fp->parsed()) cfg.mode = RunMode::fit_population;
    if (sm->parsed()) cfg.mode = RunMode::simulate;
    if (va->parsed()) cfg.mode = RunMode::validate;
    cfg.validate();

    const Output o{out, cfg, cfg.report_out.empty() && &out == &std::cout && color_enabled()};
    switch (cfg.mode) {
      case RunMode::fit_subject:
        return run_fit_subject(cfg, reduced, o);
      case RunMode::fit_map:
        return run_fit_map(cfg, o);
      case RunMode::fit_population:
        return run_fit_population(cfg, tests, o);
      case RunMode::simulate:
        return run_simulate(cfg, sim, o);
      case RunMode::validate:
        return run_validate(cfg, o);
    }
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

int cli_main(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace axisfit
