#include "jsqr/cli.hpp"

#include "jsqr/errors.hpp"
#include "jsqr/inference.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace jsqr {

namespace fs = std::filesystem;

namespace {

class ConfigReader {
 public:
  explicit ConfigReader(const ConfigMap& map) : map_(map) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return map_.count(key) > 0;
  }
  std::string str(const std::string& key, const std::string& fallback) {
    return has(key) ? map_.at(key) : fallback;
  }
  double num(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const std::string& s = map_.at(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw DataError("config key '" + key + "': not a number: '" + s + "'");
    return v;
  }
  long integer(const std::string& key, long fallback) {
    if (!has(key)) return fallback;
    const std::string& s = map_.at(key);
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size()) throw DataError("config key '" + key + "': not an integer: '" + s + "'");
    return v;
  }
  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string& s = map_.at(key);
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw DataError("config key '" + key + "': expected true or false, got '" + s + "'");
  }
  std::vector<std::string> list(const std::string& key) {
    std::vector<std::string> out;
    if (!has(key)) return out;
    std::istringstream in(map_.at(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      if (b == std::string::npos) continue;
      out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
    }
    return out;
  }
  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    for (const std::string& s : list(key)) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size()) throw DataError("config key '" + key + "': not a number: '" + s + "'");
      out.push_back(v);
    }
    return out;
  }
  void reject_unknown() const {
    for (const auto& [k, v] : map_)
      if (!used_.count(k)) throw DataError("unknown config key '" + k + "'");
  }

 private:
  const ConfigMap& map_;
  std::set<std::string> used_;
};

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(dir + ": cannot create output directory: " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot write file");
  return out;
}

// CSV outputs open with a comment line tying them to the fit that produced them.
std::ofstream open_csv(const std::string& path, const DrawsHeader& h) {
  std::ofstream out = open_out(path);
  out << "# config_hash=" << h.config_hash << " data_hash=" << h.data_hash << '\n';
  return out;
}

std::vector<double> validated_taus(std::vector<double> taus) {
  for (std::size_t k = 0; k < taus.size(); ++k) {
    if (!(taus[k] > 0.0 && taus[k] < 1.0)) throw DataError("quantile levels must lie in (0,1)");
    if (k && !(taus[k] > taus[k - 1])) throw DataError("quantile levels must be strictly increasing");
  }
  return taus;
}

// Training data, draws and cache for the post-fit commands.
struct LoadedFit {
  Dataset train;
  DrawsFile file;
  CorrelationCache cache;
};

LoadedFit load_fit(const RunConfig& cfg, bool force) {
  if (cfg.data_path.empty()) throw DataError("config lacks 'data'");
  LoadedFit f;
  f.file = read_draws(cfg.resolved_draws_path());
  const std::string data_hash = file_hash(cfg.data_path);
  if (!force) {
    if (f.file.header.data_hash != data_hash)
      throw DataError("draws were fitted to different data (hash " + f.file.header.data_hash + ", found " + data_hash +
                      "); pass --force to override");
    if (f.file.header.config_hash != cfg.hash())
      throw DataError("draws were fitted under a different configuration (hash " + f.file.header.config_hash +
                      ", found " + cfg.hash() + "); pass --force to override");
  }
  f.train = read_dataset(cfg.data_path);
  if (f.train.p() != f.file.draws.layout.p) throw DataError("data and draws disagree on the predictor count");
  if (f.file.draws.draws.empty()) throw DataError("draws file holds no draws");
  if (f.file.draws.draws.front().u.size() != f.train.n())
    throw DataError("data and draws disagree on the number of observations");
  f.train.rescale = f.file.header.rescale;
  f.train = make_dataset(f.train.y, f.train.x_raw, f.train.s, f.file.header.rescale);
  f.cache = CorrelationCache::build(f.train.s, f.file.draws.spec.nu, f.file.draws.phi_grid);
  return f;
}

std::string describe(const ModelSpec& s) {
  if (s.alpha_fixed_zero) return "independent";
  return to_string(s.copula) + "_copula";
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig RunConfig::from_map(const ConfigMap& map, const std::string& base_dir) {
  ConfigReader r(map);
  RunConfig c;
  c.data_path = resolve(base_dir, r.str("data", ""));
  c.output_dir = resolve(base_dir, r.str("output_dir", c.output_dir));
  c.draws_path = resolve(base_dir, r.str("draws", ""));

  try {
    c.model.copula = parse_copula_family(r.str("model.copula", "gaussian"));
    c.model.base = parse_base_family(r.str("model.base", "logistic"));
    c.prior.alpha_prior = parse_alpha_prior(r.str("model.alpha_prior", "uniform"));
    c.simulate.marginal = parse_marginal_scenario(r.str("simulate.marginal", "example1"));
    c.simulate.copula = parse_copula_scenario(r.str("simulate.copula", "gaussian"));
  } catch (const DomainError& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  c.model.nu = r.num("model.nu", c.model.nu);
  c.model.G = static_cast<int>(r.integer("model.G", c.model.G));
  c.model.alpha_fixed_zero = r.flag("model.alpha_fixed_zero", false);
  c.model.scale_proportion = r.flag("model.scale_proportion", false);
  c.prior.alpha_a = r.num("model.alpha_a", c.prior.alpha_a);
  c.prior.alpha_b = r.num("model.alpha_b", c.prior.alpha_b);
  c.prior.alpha_lo = r.num("model.alpha_lo", c.prior.alpha_lo);
  c.prior.alpha_hi = r.num("model.alpha_hi", c.prior.alpha_hi);
  c.prior.psi_lo = r.num("model.psi_lo", c.prior.psi_lo);
  c.prior.psi_hi = r.num("model.psi_hi", c.prior.psi_hi);
  c.prior.kappa2_shape = r.num("model.kappa2_shape", c.prior.kappa2_shape);
  c.prior.kappa2_rate = r.num("model.kappa2_rate", c.prior.kappa2_rate);
  c.prior.rho_a = r.num("model.rho_a", c.prior.rho_a);
  c.prior.rho_b = r.num("model.rho_b", c.prior.rho_b);

  c.mcmc.n_iter = static_cast<int>(r.integer("mcmc.n_iter", c.mcmc.n_iter));
  c.mcmc.burn_in = static_cast<int>(r.integer("mcmc.burn_in", c.mcmc.burn_in));
  c.mcmc.retained = static_cast<int>(r.integer("mcmc.retained", c.mcmc.retained));
  c.mcmc.target_accept = r.num("mcmc.target_accept", c.mcmc.target_accept);
  c.mcmc.adapt_decay = r.num("mcmc.adapt_decay", c.mcmc.adapt_decay);
  c.mcmc.seed = static_cast<std::uint64_t>(r.integer("mcmc.seed", static_cast<long>(c.mcmc.seed)));
  c.mcmc.chains = static_cast<int>(r.integer("mcmc.chains", c.mcmc.chains));
  c.mcmc.threads = static_cast<int>(r.integer("mcmc.threads", c.mcmc.threads));

  c.summary_taus = r.has("summary_taus") ? r.numbers("summary_taus") : jsqr::summary_taus();
  c.predict_request = resolve(base_dir, r.str("predict.request", ""));
  c.predict_taus = r.has("predict.taus") ? r.numbers("predict.taus") : c.summary_taus;
  c.waic_seed = static_cast<std::uint64_t>(r.integer("waic.seed", 1));
  for (const std::string& p : r.list("waic.compare")) c.waic_compare.push_back(resolve(base_dir, p));
  c.evaluate_data = resolve(base_dir, r.str("evaluate.data", ""));
  c.evaluate_truth = resolve(base_dir, r.str("evaluate.truth", ""));

  ScenarioSpec& s = c.simulate;
  s.n = static_cast<int>(r.integer("simulate.n", s.n));
  s.n_test = static_cast<int>(r.integer("simulate.n_test", s.n_test));
  s.alpha = r.num("simulate.alpha", s.alpha);
  s.nu = r.num("simulate.nu", s.nu);
  s.phi = r.num("simulate.phi", s.phi);
  s.psi = r.num("simulate.psi", s.psi);
  s.al_tau = r.num("simulate.al_tau", s.al_tau);
  s.random_dependence = r.flag("simulate.random_dependence", false);
  s.phi_grid_size = static_cast<int>(r.integer("simulate.phi_grid_size", s.phi_grid_size));
  s.seed = static_cast<std::uint64_t>(r.integer("simulate.seed", static_cast<long>(s.seed)));

  r.reject_unknown();
  c.summary_taus = validated_taus(c.summary_taus);
  c.predict_taus = validated_taus(c.predict_taus);
  try {
    c.prior.validate();
  } catch (const DomainError& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  const std::string base = fs::path(path).parent_path().string();
  return from_map(read_config(path), base);
}

std::string RunConfig::hash() const {
  std::ostringstream s;
  s << "copula=" << to_string(model.copula) << ";base=" << to_string(model.base) << ";nu=" << format_double(model.nu)
    << ";G=" << model.G << ";alpha_fixed_zero=" << model.alpha_fixed_zero
    << ";scale_proportion=" << model.scale_proportion << ";alpha_prior=" << to_string(prior.alpha_prior)
    << ";alpha_a=" << format_double(prior.alpha_a) << ";alpha_b=" << format_double(prior.alpha_b)
    << ";alpha_lo=" << format_double(prior.alpha_lo) << ";alpha_hi=" << format_double(prior.alpha_hi)
    << ";psi_lo=" << format_double(prior.psi_lo) << ";psi_hi=" << format_double(prior.psi_hi)
    << ";kappa2=" << format_double(prior.kappa2_shape) << "," << format_double(prior.kappa2_rate)
    << ";rho=" << format_double(prior.rho_a) << "," << format_double(prior.rho_b) << ";n_iter=" << mcmc.n_iter
    << ";burn_in=" << mcmc.burn_in << ";retained=" << mcmc.retained
    << ";target=" << format_double(mcmc.target_accept) << ";decay=" << format_double(mcmc.adapt_decay);
  return hex64(fnv1a(s.str()));
}

std::string RunConfig::resolved_draws_path() const {
  return draws_path.empty() ? (fs::path(output_dir) / "draws.csv").string() : draws_path;
}

// ---------------------------------------------------------------------------

int cmd_fit(const RunConfig& cfg, std::ostream& out) {
  if (cfg.data_path.empty()) throw DataError("config lacks 'data'");
  const Dataset data = read_dataset(cfg.data_path);
  if (data.n() < data.p() + 2)
    throw DataError(cfg.data_path + ": need at least p + 2 = " + std::to_string(data.p() + 2) + " observations");
  std::vector<double> grid;
  try {
    grid = phi_grid_from_effective_range(data.s, cfg.model.nu, cfg.model.G);
  } catch (const DomainError& e) {
    throw DataError(cfg.data_path + ": " + e.what());
  }
  const CorrelationCache cache = CorrelationCache::build(data.s, cfg.model.nu, grid);

  const auto t0 = std::chrono::steady_clock::now();
  const PosteriorDraws draws = run_mcmc(data, cfg.mcmc, cfg.prior, cache, cfg.model);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ensure_dir(cfg.output_dir);
  DrawsHeader h;
  h.config_hash = cfg.hash();
  h.data_hash = file_hash(cfg.data_path);
  h.seed = cfg.mcmc.seed;
  h.created = timestamp();
  h.rescale = data.rescale;
  const std::string draws_path = cfg.resolved_draws_path();
  write_draws(draws_path, draws, h);

  const FittedModel model(draws, data, cache);
  {
    std::ofstream rep = open_out((fs::path(cfg.output_dir) / "fit_report.txt").string());
    rep << "model: " << describe(draws.spec) << ", base " << to_string(draws.spec.base) << ", nu "
        << format_double(draws.spec.nu) << ", G " << draws.spec.G << '\n';
    rep << "data: n = " << data.n() << ", p = " << data.p() << ", hash " << h.data_hash << '\n';
    rep << "sampler: " << cfg.mcmc.n_iter << " iterations, burn-in " << cfg.mcmc.burn_in << ", " << draws.size()
        << " retained draws over " << cfg.mcmc.chains << " chain(s), seed " << cfg.mcmc.seed << '\n';
    rep << "config hash: " << h.config_hash << '\n';
    rep << "wall time: " << seconds << " s\n\nacceptance rates (post burn-in)\n";
    for (const BlockDiagnostics& b : draws.diagnostics)
      rep << "  " << b.name << ": " << b.acceptance() << " (log scale " << b.final_log_scale << ")\n";
    rep << "  decay grid step: Gibbs, " << draws.phi_rejections << " rejections\n\nposterior summaries\n";
    rep << "  name, mean, 2.5%, 97.5%, ess\n";
    for (const std::string& name : draws.scalar_names()) {
      const std::vector<double> chain = draws.scalar_chain(name);
      const QuantileSummary q = summarize(chain);
      rep << "  " << name << ", " << q.mean << ", " << q.lower << ", " << q.upper << ", "
          << effective_sample_size(chain) << '\n';
    }
  }
  {
    const CurveSummary cs = model.summarize_curves(cfg.summary_taus);
    std::ofstream csv = open_csv((fs::path(cfg.output_dir) / "coefficients.csv").string(), h);
    csv << "tau,coefficient,mean,median,lower,upper\n";
    for (std::size_t j = 0; j < cs.names.size(); ++j)
      for (std::size_t k = 0; k < cs.taus.size(); ++k) {
        const QuantileSummary& q = cs.coef[j][k];
        csv << format_double(cs.taus[k]) << ',' << cs.names[j] << ',' << format_double(q.mean) << ','
            << format_double(q.median) << ',' << format_double(q.lower) << ',' << format_double(q.upper) << '\n';
      }
  }
  out << "fit: " << draws.size() << " draws written to " << draws_path << " (" << seconds << " s)\n";
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, bool force, std::ostream& out) {
  if (cfg.predict_request.empty()) throw DataError("config lacks 'predict.request'");
  const LoadedFit f = load_fit(cfg, force);
  const CsvTable req = read_numeric_csv(cfg.predict_request);
  const int p = f.train.p();
  if (static_cast<int>(req.header.size()) != p + 2 || req.header[p] != "s1" || req.header[p + 1] != "s2")
    throw DataError(cfg.predict_request + ":1: expected " + std::to_string(p) + " predictor columns then s1, s2");
  const FittedModel model(f.file.draws, f.train, f.cache);

  ensure_dir(cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / "predictions.csv").string();
  std::ofstream csv = open_csv(path, f.file.header);
  csv << "site,tau,mean,median,lower,upper,clamped\n";
  int clamped = 0;
  for (std::size_t i = 0; i < req.rows.size(); ++i) {
    PredictionRequest r;
    r.x_star = Eigen::Map<const Eigen::VectorXd>(req.rows[i].data(), p);
    r.s_star << req.rows[i][static_cast<std::size_t>(p)], req.rows[i][static_cast<std::size_t>(p) + 1];
    r.tau_star = cfg.predict_taus;
    const PredictionResult res = model.predict(r);
    clamped += res.clamped ? 1 : 0;
    for (std::size_t k = 0; k < r.tau_star.size(); ++k) {
      const QuantileSummary& q = res.summary[k];
      csv << (i + 1) << ',' << format_double(r.tau_star[k]) << ',' << format_double(q.mean) << ','
          << format_double(q.median) << ',' << format_double(q.lower) << ',' << format_double(q.upper) << ','
          << (res.clamped ? 1 : 0) << '\n';
    }
  }
  out << "predict: " << req.rows.size() << " sites written to " << path << '\n';
  if (clamped) out << "warning: " << clamped << " site(s) had predictors outside the training range and were clamped\n";
  return kExitOk;
}

int cmd_waic(const RunConfig& cfg, bool force, std::ostream& out) {
  const LoadedFit f = load_fit(cfg, force);
  const FittedModel model(f.file.draws, f.train, f.cache);
  std::mt19937_64 rng(cfg.waic_seed);
  const WaicReport w = model.waic(rng);

  ensure_dir(cfg.output_dir);
  {
    std::ofstream csv = open_csv((fs::path(cfg.output_dir) / "waic.csv").string(), f.file.header);
    csv << "observation,lppd,p_waic,waic\n";
    for (std::size_t i = 0; i < w.per_observation.size(); ++i) {
      const WaicObservation& o = w.per_observation[i];
      csv << (i + 1) << ',' << format_double(o.lppd) << ',' << format_double(o.p_waic) << ',' << format_double(o.waic)
          << '\n';
    }
  }
  std::ofstream csv = open_csv((fs::path(cfg.output_dir) / "waic_summary.csv").string(), f.file.header);
  csv << "model,draws,waic,lppd,p_waic2\n";
  auto row = [&](const std::string& label, const std::string& path, const WaicReport& r) {
    csv << label << ',' << path << ',' << format_double(r.waic) << ',' << format_double(r.lppd) << ','
        << format_double(r.p_waic2) << '\n';
    out << label << ": waic " << r.waic << " (lppd " << r.lppd << ", p_waic2 " << r.p_waic2 << ")\n";
  };
  row(describe(f.file.draws.spec), cfg.resolved_draws_path(), w);

  // Further fits to the same data for a comparison table.
  const std::string data_hash = file_hash(cfg.data_path);
  for (const std::string& path : cfg.waic_compare) {
    const DrawsFile other = read_draws(path);
    if (!force && other.header.data_hash != data_hash)
      throw DataError(path + ": draws were fitted to different data; pass --force to override");
    if (other.draws.layout.p != f.train.p()) throw DataError(path + ": predictor count differs");
    const Dataset train = make_dataset(f.train.y, f.train.x_raw, f.train.s, other.header.rescale);
    const CorrelationCache cache = CorrelationCache::build(train.s, other.draws.spec.nu, other.draws.phi_grid);
    const FittedModel m(other.draws, train, cache);
    std::mt19937_64 r2(cfg.waic_seed);
    row(describe(other.draws.spec), path, m.waic(r2));
  }
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, bool force, std::ostream& out) {
  const LoadedFit f = load_fit(cfg, force);
  const FittedModel model(f.file.draws, f.train, f.cache);
  const std::vector<double>& taus = cfg.summary_taus;
  ensure_dir(cfg.output_dir);

  std::optional<Dataset> test;
  if (!cfg.evaluate_data.empty()) test = read_dataset(cfg.evaluate_data, &f.file.header.rescale);

  const std::vector<double> train_loss = model.average_check_loss(f.train, taus, false);
  std::vector<double> test_loss;
  if (test) test_loss = model.average_check_loss(*test, taus, true);
  {
    std::ofstream csv = open_csv((fs::path(cfg.output_dir) / "check_loss.csv").string(), f.file.header);
    csv << "tau,train,test\n";
    for (std::size_t k = 0; k < taus.size(); ++k)
      csv << format_double(taus[k]) << ',' << format_double(train_loss[k]) << ','
          << (test ? format_double(test_loss[k]) : "") << '\n';
  }
  out << "evaluate: check loss at " << taus.size() << " levels";
  if (test) out << " on " << f.train.n() << " training and " << test->n() << " held-out observations";
  out << '\n';

  if (cfg.evaluate_truth.empty()) return kExitOk;
  const TruthSidecar truth = read_truth_sidecar(cfg.evaluate_truth);
  const TruthModel tm(truth.scenario.marginal);
  if (tm.p() != f.train.p()) throw DataError(cfg.evaluate_truth + ": scenario predictor count differs from the data");

  const CurveSummary cs = model.summarize_curves(taus);
  double mae = 0.0, cover = 0.0;
  std::size_t cells = 0;
  {
    std::ofstream csv = open_csv((fs::path(cfg.output_dir) / "coefficient_metrics.csv").string(), f.file.header);
    csv << "tau,coefficient,truth,mean,lower,upper,abs_error,covered\n";
    for (std::size_t k = 0; k < taus.size(); ++k) {
      const Eigen::VectorXd c = tm.coefficients(taus[k]);
      for (std::size_t j = 0; j < cs.names.size(); ++j) {
        const QuantileSummary& q = cs.coef[j][k];
        const double t = c(static_cast<Eigen::Index>(j));
        const bool covered = q.lower <= t && t <= q.upper;
        csv << format_double(taus[k]) << ',' << cs.names[j] << ',' << format_double(t) << ',' << format_double(q.mean)
            << ',' << format_double(q.lower) << ',' << format_double(q.upper) << ','
            << format_double(std::abs(q.mean - t)) << ',' << (covered ? 1 : 0) << '\n';
        mae += std::abs(q.mean - t);
        cover += covered ? 1.0 : 0.0;
        ++cells;
      }
    }
  }
  out << "coefficients: mean absolute error " << mae / cells << ", 95% coverage " << cover / cells << '\n';

  if (test && truth.scenario.copula != CopulaScenario::asymmetric_laplace) {
    if (truth.u_train.size() != f.train.n()) throw DataError(cfg.evaluate_truth + ": training levels do not match the data");
    const TrueConditionalQuantile tq(truth.scenario, f.train.s, truth.u_train);
    std::vector<double> err(taus.size(), 0.0);
    for (Eigen::Index i = 0; i < test->n(); ++i) {
      PredictionRequest r;
      r.x_star = test->x_raw.row(i).transpose();
      r.s_star = test->s.row(i).transpose();
      r.tau_star = taus;
      const PredictionResult res = model.predict(r);
      for (std::size_t k = 0; k < taus.size(); ++k)
        err[k] += std::abs(res.summary[k].mean - tq(taus[k], r.s_star, r.x_star));
    }
    std::ofstream csv = open_csv((fs::path(cfg.output_dir) / "conditional_quantile_mae.csv").string(), f.file.header);
    csv << "tau,mae\n";
    for (std::size_t k = 0; k < taus.size(); ++k)
      csv << format_double(taus[k]) << ',' << format_double(err[k] / static_cast<double>(test->n())) << '\n';
  }
  return kExitOk;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const SimulatedData sim = generate(cfg.simulate);
  ensure_dir(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  write_dataset((dir / "train.csv").string(), sim.train);
  if (sim.test.n() > 0) write_dataset((dir / "test.csv").string(), sim.test);
  std::ofstream js = open_out((dir / "truth.json").string());
  js << truth_sidecar_json(sim, cfg.summary_taus) << '\n';
  out << "simulate: " << to_string(sim.scenario.marginal) << " / " << to_string(sim.scenario.copula) << ", "
      << sim.train.n() << " training and " << sim.test.n() << " test observations in " << cfg.output_dir << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

std::string truth_sidecar_json(const SimulatedData& sim, const std::vector<double>& taus) {
  const ScenarioSpec& s = sim.scenario;
  nlohmann::ordered_json j;
  j["marginal"] = to_string(s.marginal);
  j["copula"] = to_string(s.copula);
  j["n"] = s.n;
  j["n_test"] = s.n_test;
  j["alpha"] = s.alpha;
  j["nu"] = s.nu;
  j["phi"] = s.phi;
  j["psi"] = s.psi;
  j["al_tau"] = s.al_tau;
  j["random_dependence"] = s.random_dependence;
  j["seed"] = s.seed;
  j["u_train"] = std::vector<double>(sim.u_train.data(), sim.u_train.data() + sim.u_train.size());
  j["u_test"] = std::vector<double>(sim.u_test.data(), sim.u_test.data() + sim.u_test.size());
  const TruthModel tm(s.marginal);
  nlohmann::ordered_json coef = nlohmann::ordered_json::array();
  for (double t : taus) {
    const Eigen::VectorXd c = tm.coefficients(t);
    coef.push_back({{"tau", t}, {"values", std::vector<double>(c.data(), c.data() + c.size())}});
  }
  j["coefficients"] = coef;
  return j.dump(1);
}

TruthSidecar read_truth_sidecar(const std::string& path) {
  TruthSidecar t;
  try {
    const nlohmann::json j = nlohmann::json::parse(read_file(path));
    ScenarioSpec& s = t.scenario;
    s.marginal = parse_marginal_scenario(j.at("marginal").get<std::string>());
    s.copula = parse_copula_scenario(j.at("copula").get<std::string>());
    s.n = j.at("n").get<int>();
    s.n_test = j.at("n_test").get<int>();
    s.alpha = j.at("alpha").get<double>();
    s.nu = j.at("nu").get<double>();
    s.phi = j.at("phi").get<double>();
    s.psi = j.at("psi").get<double>();
    s.al_tau = j.at("al_tau").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto ut = j.at("u_train").get<std::vector<double>>();
    const auto us = j.at("u_test").get<std::vector<double>>();
    t.u_train = Eigen::Map<const Eigen::VectorXd>(ut.data(), static_cast<Eigen::Index>(ut.size()));
    t.u_test = Eigen::Map<const Eigen::VectorXd>(us.data(), static_cast<Eigen::Index>(us.size()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed truth sidecar: " + e.what());
  } catch (const DomainError& e) {
    throw DataError(path + ": " + e.what());
  }
  return t;
}

int run_command(const CliOptions& o, std::ostream& out, std::ostream& err) {
  try {
    RunConfig cfg = o.config_path.empty() ? RunConfig::from_map({}) : RunConfig::load(o.config_path);
    if (o.seed) {
      cfg.mcmc.seed = *o.seed;
      cfg.simulate.seed = *o.seed;
    }
    if (o.chains) cfg.mcmc.chains = *o.chains;
    try {
      cfg.mcmc.validate();
    } catch (const DomainError& e) {
      throw DataError(std::string("config: ") + e.what());
    }
    if (o.command == "fit") return cmd_fit(cfg, out);
    if (o.command == "predict") return cmd_predict(cfg, o.force, out);
    if (o.command == "waic") return cmd_waic(cfg, o.force, out);
    if (o.command == "evaluate") return cmd_evaluate(cfg, o.force, out);
    if (o.command == "simulate") return cmd_simulate(cfg, out);
    err << "unknown command '" << o.command << "'\n";
    return kExitData;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const McmcAbort& e) {
    err << "sampler aborted: " << e.what() << '\n';
    return kExitAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace jsqr
