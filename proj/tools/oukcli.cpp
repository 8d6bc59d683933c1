// Command-line front end: check / kernel / multiplier / zeros / weaktype /
// verify subcommands over the core library.  Data goes to stdout (or --out);
// the config hash and seed of every run go to stderr so reports stay clean.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ouk/errors.hpp"
#include "ouk/experiments.hpp"
#include "ouk/measure.hpp"
#include "ouk/mehler.hpp"
#include "ouk/model.hpp"
#include "ouk/multiplier.hpp"
#include "ouk/oracle.hpp"
#include "ouk/sha256.hpp"
#include "ouk/zeros.hpp"

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw CLI::ValidationError("empty numeric list: '" + text + "'");
  return out;
}

Eigen::VectorXd parse_vec(const std::string& text) {
  std::vector<double> v = parse_list(text);
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

// Model specs: a path to a JSON file {"n":..,"B":[row-major],"Q":[row-major]},
// or a builtin name: standard:n | jordan | rotating[:omega] | rand:n,seed.
ouk::OUModel resolve_model(const std::string& spec) {
  if (file_exists(spec)) {
    std::ifstream in(spec);
    std::stringstream buf;
    buf << in.rdbuf();
    return ouk::load_model_json(buf.str());
  }
  auto colon = spec.find(':');
  std::string head = spec.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (head == "standard") return ouk::standard_model(rest.empty() ? 1 : std::stoi(rest));
  if (head == "jordan") return ouk::jordan_model();
  if (head == "rotating") return ouk::rotating_model(rest.empty() ? 5.0 : std::stod(rest));
  if (head == "rand") {
    std::vector<double> p = parse_list(rest);
    if (p.size() != 2) throw CLI::ValidationError("rand model spec needs n,seed");
    return ouk::random_hurwitz_model(static_cast<int>(p[0]), static_cast<std::uint64_t>(p[1]));
  }
  throw CLI::ValidationError("model spec '" + spec +
                             "' is neither a readable file nor a builtin name");
}

void emit(const std::string& out_path, const std::string& data) {
  if (out_path.empty()) {
    std::cout << data;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw CLI::ValidationError("cannot open output file: " + out_path);
  out << data;
}

void info_line(const std::string& hash, std::uint64_t seed) {
  std::cerr << "config_hash=" << hash << " seed=" << seed << "\n";
}

std::string csv_vec(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt17(v[i]);
  return s;
}

json json_vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// ---------------------------------------------------------------------------

int cmd_check(const std::string& model_path, const std::string& format,
              const std::string& out_path) {
  std::ifstream in(model_path);
  if (!in) throw CLI::ValidationError("cannot read model file: " + model_path);
  std::stringstream buf;
  buf << in.rdbuf();
  ouk::OUModel m = ouk::load_model_json(buf.str());

  double lyap = (m.B * m.Q_inf + m.Q_inf * m.B.transpose() + m.Q).norm() / m.Q.norm();
  Eigen::VectorXcd eig = Eigen::ComplexEigenSolver<Eigen::MatrixXd>(m.B).eigenvalues();
  std::string hash = ouk::sha256_hex(ouk::model_to_json(m));
  info_line(hash, 0);

  std::vector<ouk::IdentityResidual> ids;
  for (double t : {0.1, 1.0, 10.0}) ids.push_back(ouk::qt_identities_check(m, t));

  if (format == "csv") {
    std::string s = "key,value\n";
    s += "n," + std::to_string(m.n) + "\n";
    s += "hurwitz_margin," + fmt17(m.hurwitz_margin) + "\n";
    s += "lyapunov_residual," + fmt17(lyap) + "\n";
    for (Eigen::Index i = 0; i < eig.size(); ++i)
      s += "eig" + std::to_string(i) + "," + fmt17(eig[i].real()) + (eig[i].imag() < 0 ? "-" : "+") +
           fmt17(std::abs(eig[i].imag())) + "i\n";
    for (const auto& r : ids) {
      char key[48];
      std::snprintf(key, sizeof(key), "identity_residual_t%g", r.t);
      s += std::string(key) + "," + fmt17(r.max_residual()) + "\n";
    }
    emit(out_path, s);
  } else {
    json j;
    j["n"] = m.n;
    j["hurwitz_margin"] = m.hurwitz_margin;
    j["lyapunov_residual"] = lyap;
    j["eigenvalues"] = json::array();
    for (Eigen::Index i = 0; i < eig.size(); ++i)
      j["eigenvalues"].push_back({{"re", eig[i].real()}, {"im", eig[i].imag()}});
    j["identity_residuals"] = json::array();
    for (const auto& r : ids)
      j["identity_residuals"].push_back({{"t", r.t}, {"residual", r.max_residual()}});
    j["config_hash"] = hash;
    emit(out_path, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_kernel(const std::string& model_spec, std::vector<double> ts, const Eigen::VectorXd& x,
               const Eigen::VectorXd& u, bool with_fd, const std::string& format,
               const std::string& out_path) {
  ouk::OUModel m = resolve_model(model_spec);
  std::string canon = "{\"cmd\":\"kernel\",\"model\":" + ouk::model_to_json(m) + ",\"x\":[" +
                      csv_vec(x) + "],\"u\":[" + csv_vec(u) + "]}";
  info_line(ouk::sha256_hex(canon), 0);

  std::string header = "t";
  for (Eigen::Index i = 0; i < x.size(); ++i) header += ",x" + std::to_string(i);
  for (Eigen::Index i = 0; i < u.size(); ++i) header += ",u" + std::to_string(i);
  header += ",K,N,dKdt";
  if (with_fd) header += ",dKdt_fd";

  std::string csv = header + "\n";
  json rows = json::array();
  for (double t : ts) {
    ouk::KernelEvaluation ev = ouk::kernel_eval(m, t, x, u);
    double fd = 0.0;
    if (with_fd) {
      double h = 1e-6 * t;
      fd = (ouk::mehler_K(m, t + h, x, u) - ouk::mehler_K(m, t - h, x, u)) / (2.0 * h);
    }
    csv += fmt17(t) + "," + csv_vec(x) + "," + csv_vec(u) + "," + fmt17(ev.K) + "," + fmt17(ev.N) +
           "," + fmt17(ev.dK_dt);
    if (with_fd) csv += "," + fmt17(fd);
    csv += "\n";
    json r = {{"t", t}, {"x", json_vec(x)}, {"u", json_vec(u)},
              {"K", ev.K}, {"N", ev.N},     {"dKdt", ev.dK_dt}};
    if (with_fd) r["dKdt_fd"] = fd;
    rows.push_back(r);
  }
  emit(out_path, format == "json" ? rows.dump(2) + "\n" : csv);
  return 0;
}

int cmd_multiplier(const std::string& model_spec, const std::string& phi, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& u, const std::string& apply_spec,
                   const std::string& format, const std::string& out_path) {
  ouk::OUModel m = resolve_model(model_spec);
  ouk::Symbol sym = ouk::Symbol::parse(phi);
  std::string canon = "{\"cmd\":\"multiplier\",\"model\":" + ouk::model_to_json(m) +
                      ",\"phi\":\"" + sym.to_string() + "\",\"x\":[" + csv_vec(x) + "],\"u\":[" +
                      csv_vec(u) + "],\"apply\":\"" + apply_spec + "\"}";
  info_line(ouk::sha256_hex(canon), 0);

  if (!apply_spec.empty()) {
    // apply modes: hermite:k1[,k2] (standard model), linear:v1[,v2,...]
    auto colon = apply_spec.find(':');
    std::string head = apply_spec.substr(0, colon);
    std::string rest = colon == std::string::npos ? "" : apply_spec.substr(colon + 1);
    std::function<double(const Eigen::VectorXd&)> f;
    std::complex<double> reference(0, 0);
    bool have_reference = false;
    if (head == "hermite") {
      std::vector<double> kd = parse_list(rest);
      std::vector<int> k(kd.begin(), kd.end());
      ouk::HermiteFunction he = ouk::hermite_eigenfunction(k);
      f = he;
      if (m.n == static_cast<int>(k.size())) {
        reference = ouk::symbol_m_eval(sym, static_cast<double>(he.eigenvalue)) * he(x);
        have_reference = true;  // exact for the standard model only
      }
    } else if (head == "linear") {
      Eigen::VectorXd v = parse_vec(rest);
      f = [v](const Eigen::VectorXd& y) { return v.dot(y); };
      Eigen::MatrixXcd mm = ouk::linear_poly_multiplier_matrix(m, sym);
      reference =
          (mm * v.cast<std::complex<double>>()).cwiseProduct(x.cast<std::complex<double>>()).sum();
      have_reference = true;
    } else {
      throw CLI::ValidationError("apply spec must be hermite:k1[,k2] or linear:v1[,...]");
    }
    ouk::ApplyResult res = ouk::apply_multiplier(m, sym, f, x);
    if (format == "json") {
      json j = {{"value_re", res.value.real()},
                {"value_im", res.value.imag()},
                {"err_estimate", res.err_estimate}};
      if (have_reference) {
        j["reference_re"] = reference.real();
        j["reference_im"] = reference.imag();
      }
      emit(out_path, j.dump(2) + "\n");
    } else {
      std::string s = "value_re,value_im,err_estimate";
      if (have_reference) s += ",reference_re,reference_im";
      s += "\n" + fmt17(res.value.real()) + "," + fmt17(res.value.imag()) + "," +
           fmt17(res.err_estimate);
      if (have_reference) s += "," + fmt17(reference.real()) + "," + fmt17(reference.imag());
      emit(out_path, s + "\n");
    }
    return 0;
  }

  ouk::KernelValue m1 = ouk::kernel_M1(m, sym, x, u);
  ouk::KernelValue m0 = ouk::kernel_M0(m, sym, x, u);
  std::complex<double> m1f = m1.full(), m0f = m0.full();
  double err = (m1.err_bound + m0.err_bound) * std::exp(m1.r_x);
  if (format == "json") {
    json j = {{"x", json_vec(x)},
              {"u", json_vec(u)},
              {"M1_re", m1f.real()},
              {"M1_im", m1f.imag()},
              {"M0_re", m0f.real()},
              {"M0_im", m0f.imag()},
              {"err_bound", err}};
    emit(out_path, j.dump(2) + "\n");
  } else {
    std::string header;
    for (Eigen::Index i = 0; i < x.size(); ++i) header += "x" + std::to_string(i) + ",";
    for (Eigen::Index i = 0; i < u.size(); ++i) header += "u" + std::to_string(i) + ",";
    header += "M1_re,M1_im,M0_re,M0_im,err_bound";
    std::string s = header + "\n" + csv_vec(x) + "," + csv_vec(u) + "," + fmt17(m1f.real()) + "," +
                    fmt17(m1f.imag()) + "," + fmt17(m0f.real()) + "," + fmt17(m0f.imag()) + "," +
                    fmt17(err) + "\n";
    emit(out_path, s);
  }
  return 0;
}

int cmd_zeros(const std::string& model_spec, int samples, std::uint64_t seed, int grid,
              const std::string& format, const std::string& out_path) {
  ouk::OUModel m = resolve_model(model_spec);
  std::string canon = "{\"cmd\":\"zeros\",\"model\":" + ouk::model_to_json(m) +
                      ",\"samples\":" + std::to_string(samples) + ",\"seed\":" +
                      std::to_string(seed) + ",\"grid\":" + std::to_string(grid) + "}";
  info_line(ouk::sha256_hex(canon), seed);

  ouk::ZeroSweepResult sweep = ouk::zero_sweep(m, samples, seed, grid);
  if (format == "json") {
    json j;
    j["samples"] = sweep.samples;
    j["grid_size"] = sweep.grid_size;
    j["seed"] = sweep.seed;
    j["max_count"] = sweep.max_count;
    j["bound"] = ouk::theoretical_bound_estimate(m);
    j["histogram"] = json::object();
    for (const auto& [count, pairs] : sweep.histogram)
      j["histogram"][std::to_string(count)] = pairs;
    emit(out_path, j.dump(2) + "\n");
  } else {
    std::string s = "pair_id,scale,count,locations\n";
    for (const auto& r : sweep.rows) {
      std::string locs;
      for (std::size_t i = 0; i < r.locations.size(); ++i)
        locs += (i ? ";" : "") + fmt17(r.locations[i]);
      s += std::to_string(r.pair_id) + "," + fmt17(r.scale) + "," + std::to_string(r.count) + "," +
           locs + "\n";
    }
    emit(out_path, s);
  }
  return 0;
}

int cmd_weaktype(const std::string& model_spec, const std::string& op_name, const std::string& phi,
                 const std::string& alphas, int budget, std::uint64_t seed, const std::string& u0,
                 double domain_radius, const std::string& format, const std::string& out_path) {
  ouk::OUModel m = resolve_model(model_spec);
  ouk::ExperimentConfig cfg;
  cfg.symbol = ouk::Symbol::parse(phi);
  cfg.alpha_grid = parse_list(alphas);
  cfg.mc_budget = budget;
  cfg.seed = seed;
  if (!u0.empty()) cfg.u0 = parse_vec(u0);
  cfg.domain_radius = domain_radius;
  ouk::OperatorKind op = ouk::operator_kind_parse(op_name);
  info_line(ouk::experiment_config_hash(m, cfg, ouk::operator_kind_name(op)), cfg.seed);

  ouk::ExperimentReport rep = ouk::weak_type_scan(m, cfg, op);
  if (format == "json") {
    json j;
    j["op"] = rep.op;
    j["config_hash"] = rep.config_hash;
    j["seed"] = rep.seed;
    j["mc_budget"] = rep.mc_budget;
    j["u0"] = json_vec(rep.u0);
    j["rows"] = json::array();
    for (const auto& r : rep.rows)
      j["rows"].push_back({{"alpha", r.alpha},
                           {"measure", r.measure},
                           {"stderr", r.std_error},
                           {"alpha_measure", r.alpha_measure},
                           {"alpha_sqrtlog_measure", r.alpha_sqrtlog_measure},
                           {"exceedances", r.exceedances}});
    emit(out_path, j.dump(2) + "\n");
  } else {
    emit(out_path, ouk::report_csv(rep));
  }
  return 0;
}

int cmd_verify(const std::string& models, const std::string& profile_name, double tol_scale,
               int zero_pairs, int mc_budget, std::uint64_t seed, const std::string& format,
               const std::string& out_path) {
  std::vector<ouk::OUModel> list;
  std::stringstream ss(models);
  std::string tok;
  std::string canon_models;
  while (std::getline(ss, tok, ';')) {
    if (tok.empty()) continue;
    list.push_back(resolve_model(tok));
    canon_models += (canon_models.empty() ? "" : ",") + ouk::model_to_json(list.back());
  }
  if (list.empty()) throw CLI::ValidationError("no models given");

  ouk::VerifyProfile prof;
  if (profile_name == "quick") {
    prof.zero_pairs = 1000;
    prof.cz_pairs = 40;
    prof.mc_budget = 10000;
  } else if (profile_name == "strict") {
    prof.tol_scale = 0.1;
    prof.zero_pairs = 2000;
    prof.cz_pairs = 300;
    prof.mc_budget = 60000;
  } else if (profile_name != "default") {
    throw CLI::ValidationError("profile must be default, quick, or strict");
  }
  if (tol_scale > 0) prof.tol_scale = tol_scale;
  if (zero_pairs > 0) prof.zero_pairs = zero_pairs;
  if (mc_budget > 0) prof.mc_budget = mc_budget;
  prof.seed = seed;

  std::string canon = "{\"cmd\":\"verify\",\"models\":[" + canon_models + "],\"tol_scale\":" +
                      fmt17(prof.tol_scale) + ",\"zero_pairs\":" + std::to_string(prof.zero_pairs) +
                      ",\"cz_pairs\":" + std::to_string(prof.cz_pairs) + ",\"mc_budget\":" +
                      std::to_string(prof.mc_budget) + ",\"seed\":" + std::to_string(prof.seed) +
                      "}";
  info_line(ouk::sha256_hex(canon), prof.seed);

  ouk::VerifyLedger led = ouk::verify_suite(list, prof);
  if (format == "csv") {
    std::string s = "check_id,module,value,tol,pass\n";
    for (const auto& c : led.checks)
      s += c.check_id + "," + c.module + "," + fmt17(c.value) + "," + fmt17(c.tol) + "," +
           (c.pass ? "true" : "false") + "\n";
    emit(out_path, s);
  } else {
    emit(out_path, ouk::ledger_json(led));
  }
  return led.all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ornstein-Uhlenbeck kernel toolkit"};
  app.require_subcommand(1);
  std::string format = "csv", out_path;
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--out", out_path, "write output to this file instead of stdout");

  // check
  auto* check = app.add_subcommand("check", "validate a model file and print its diagnostics");
  std::string model_path;
  check->add_option("model", model_path, "model JSON file")->required();

  // kernel
  auto* kernel = app.add_subcommand("kernel", "evaluate K, N, dK/dt at (t, x, u)");
  std::string k_model = "standard:1", k_x = "1", k_u = "0", k_tgrid;
  double k_t = 0.5;
  bool k_fd = false;
  kernel->add_option("--model", k_model, "model file or builtin spec");
  kernel->add_option("--t", k_t, "evaluation time");
  kernel->add_option("--tgrid", k_tgrid, "lo,hi,count log-spaced times (overrides --t)");
  kernel->add_option("--x", k_x, "x coordinates, comma separated");
  kernel->add_option("--u", k_u, "u coordinates, comma separated");
  kernel->add_flag("--dkdt", k_fd, "append a centered-difference dK/dt column");

  // multiplier
  auto* mult = app.add_subcommand("multiplier", "evaluate the multiplier kernel or apply m(T)");
  std::string mu_model = "standard:1", mu_phi = "const", mu_x = "1", mu_u = "0", mu_apply;
  mult->add_option("--model", mu_model, "model file or builtin spec");
  mult->add_option("--phi", mu_phi, "profile: const | expdecay:a | imagpow:g | indicator:a,b");
  mult->add_option("--x", mu_x, "x coordinates");
  mult->add_option("--u", mu_u, "u coordinates");
  mult->add_option("--apply", mu_apply, "apply m(T) to f: hermite:k1[,k2] | linear:v1[,...]");

  // zeros
  auto* zeros = app.add_subcommand("zeros", "sweep sign changes of dK/dt over sampled pairs");
  std::string z_model = "standard:1";
  int z_samples = 2000, z_grid = 4096;
  std::uint64_t z_seed = 20240901;
  zeros->add_option("--model", z_model, "model file or builtin spec");
  zeros->add_option("--samples", z_samples, "number of (x,u) pairs");
  zeros->add_option("--seed", z_seed, "RNG seed");
  zeros->add_option("--grid", z_grid, "log-spaced scan grid size");

  // weaktype
  auto* weak = app.add_subcommand("weaktype", "level-set measure scan for an operator kernel");
  std::string w_model = "standard:1", w_op, w_phi = "imagpow:0.5";
  std::string w_alphas = "10,100,1000,10000", w_u0;
  int w_budget = 200000;
  std::uint64_t w_seed = 20240901;
  double w_domain = 0.0;
  weak->add_option("--model", w_model, "model file or builtin spec");
  weak->add_option("--op", w_op, "M_full | M1 | M0_glob | S0_glob | S_inf | S_all")->required();
  weak->add_option("--phi", w_phi, "time profile for the multiplier kernels");
  weak->add_option("--alphas", w_alphas, "threshold grid, increasing, min > 2");
  weak->add_option("--budget", w_budget, "Monte Carlo sample count");
  weak->add_option("--seed", w_seed, "RNG seed");
  weak->add_option("--u0", w_u0, "point-mass location (default: on the top level set)");
  weak->add_option("--domain-radius", w_domain, "localization domain radius");

  // verify
  auto* verify = app.add_subcommand("verify", "run the cross-module invariant battery");
  std::string v_models = "standard:1;standard:2", v_profile = "default";
  double v_tol_scale = 0.0;
  int v_zero_pairs = 0, v_mc_budget = 0;
  std::uint64_t v_seed = 20240901;
  verify->add_option("--models", v_models, "semicolon-separated model files or builtin specs");
  verify->add_option("--profile", v_profile, "default | quick | strict");
  verify->add_option("--tol-scale", v_tol_scale, "override the profile tolerance scale");
  verify->add_option("--zero-pairs", v_zero_pairs, "override the zero-sweep pair count");
  verify->add_option("--mc-budget", v_mc_budget, "override the Monte Carlo budget");
  verify->add_option("--seed", v_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*check) return cmd_check(model_path, format, out_path);
    if (*kernel) {
      std::vector<double> ts;
      if (!k_tgrid.empty()) {
        std::vector<double> g = parse_list(k_tgrid);
        if (g.size() != 3 || g[0] <= 0 || g[1] <= g[0] || g[2] < 2)
          throw CLI::ValidationError("--tgrid needs lo,hi,count with 0 < lo < hi, count >= 2");
        int count = static_cast<int>(g[2]);
        for (int i = 0; i < count; ++i)
          ts.push_back(g[0] * std::pow(g[1] / g[0], i / double(count - 1)));
      } else {
        ts.push_back(k_t);
      }
      return cmd_kernel(k_model, ts, parse_vec(k_x), parse_vec(k_u), k_fd, format, out_path);
    }
    if (*mult)
      return cmd_multiplier(mu_model, mu_phi, parse_vec(mu_x), parse_vec(mu_u), mu_apply, format,
                            out_path);
    if (*zeros) return cmd_zeros(z_model, z_samples, z_seed, z_grid, format, out_path);
    if (*weak)
      return cmd_weaktype(w_model, w_op, w_phi, w_alphas, w_budget, w_seed, w_u0, w_domain, format,
                          out_path);
    if (*verify)
      return cmd_verify(v_models, v_profile, v_tol_scale, v_zero_pairs, v_mc_budget, v_seed,
                        format, out_path);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ouk::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
