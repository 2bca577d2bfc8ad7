// treecast: near-critical bounds for broadcasting on trees.
//
//   treecast threshold --d 2
//   treecast bounds --d 2 --delta 0.13 --cells 1024 --depth auto
//   treecast sweep --d 2 --taus 1e-3,1e-2 --cells 256
//   treecast exponent --d 2 --cells 1024
//   treecast oracle-check --d 3 --delta 0.2 --depth 2

#include <treecast/treecast.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using json = nlohmann::ordered_json;
using namespace treecast;

namespace {

enum class Format { csv, json };

struct RunConfig {
  std::string command;
  int d = 2;
  std::optional<double> delta, tau;
  long cells = 1024;
  std::string depth = "auto";
  double tol = 1e-12;
  Format format = Format::csv;
  std::string format_name;  // empty: the subcommand's default
  std::optional<double> tol_flag;
  std::string output;
  int jobs = 0;
  std::string method = "local";
  long cap = 0;
  std::vector<double> taus;
  double tau_min = 1e-4, tau_max = 1e-2;
  int points = 15;
  bool exact_chains = false;
};

// 12 significant digits everywhere, so output does not depend on the last
// bits of platform math.
std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

double round12(double x) { return std::stod(fmt(x)); }

std::optional<long> parse_depth(const std::string& s) {
  if (s == "auto") return std::nullopt;
  std::size_t used = 0;
  long v = -1;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 0) throw CLI::ValidationError("--depth", "expected a non-negative integer or 'auto'");
  return v;
}

SweepMethod parse_method(const std::string& s) {
  if (s == "local") return SweepMethod::local;
  if (s == "scalar") return SweepMethod::scalar;
  return SweepMethod::two_atom;
}

TreeParams<double> params_of(const RunConfig& c) {
  if (c.delta) return {c.d, *c.delta};
  const double delta = delta_c<double>(c.d) - *c.tau;
  if (!(delta >= 0)) throw std::domain_error("--tau puts delta below 0");
  return {c.d, delta};
}

json config_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["d"] = c.d;
  if (c.delta) j["delta"] = round12(*c.delta);
  if (c.tau) j["tau"] = round12(*c.tau);
  return j;
}

json fit_json(const SlopeFit& f) {
  return {{"slope", round12(f.slope)},
          {"intercept", round12(f.intercept)},
          {"r_squared", round12(f.r_squared)},
          {"transform", to_string(f.transform)}};
}

void emit_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

std::string cmd_threshold(const RunConfig& c) {
  const double t = find_threshold(c.d, c.tol);
  const double dc = delta_c<double>(c.d);
  if (c.format == Format::csv)
    return "d,threshold,delta_c,abs_error\n" + std::to_string(c.d) + "," + fmt(t) + "," + fmt(dc) + "," +
           fmt(std::abs(t - dc)) + "\n";
  json j;
  j["config"] = config_json(c);
  j["config"]["tol"] = c.tol;
  j["results"] = {{"threshold", round12(t)}, {"delta_c", round12(dc)}, {"abs_error", round12(std::abs(t - dc))}};
  j["fits"] = json::object();
  j["warnings"] = json::array();
  return j.dump(2) + "\n";
}

std::string cmd_bounds(const RunConfig& c) {
  const auto p = params_of(c);
  const auto depth = parse_depth(c.depth);
  const auto rep = level_bounds(p, parse_method(c.method), c.cells, depth, c.cap > 0 ? c.cap : 100000, c.tol);
  check_sandwich(rep);
  const auto& last = rep.rows.back();
  if (c.format == Format::csv) {
    emit_warnings(rep.warnings);
    std::cerr << "final gap: I " << fmt(last.upper_I - last.lower_I) << ", P_e " << fmt(last.upper_Pe - last.lower_Pe)
              << "\n";
    std::string s = "level,lower_Pe,upper_Pe,lower_I,upper_I\n";
    for (const auto& r : rep.rows)
      s += std::to_string(r.level) + "," + fmt(r.lower_Pe) + "," + fmt(r.upper_Pe) + "," + fmt(r.lower_I) + "," +
           fmt(r.upper_I) + "\n";
    return s;
  }
  json j;
  j["config"] = config_json(c);
  j["config"]["method"] = c.method;
  j["config"]["cells"] = rep.cells;
  j["config"]["depth"] = c.depth;
  j["config"]["tol"] = c.tol;
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"level", r.level},
                    {"lower_Pe", round12(r.lower_Pe)},
                    {"upper_Pe", round12(r.upper_Pe)},
                    {"lower_I", round12(r.lower_I)},
                    {"upper_I", round12(r.upper_I)}});
  j["results"] = {{"rows", rows}, {"converged", rep.converged}};
  j["fits"] = {{"final_gap_I", round12(last.upper_I - last.lower_I)},
               {"final_gap_Pe", round12(last.upper_Pe - last.lower_Pe)}};
  j["warnings"] = rep.warnings;
  return j.dump(2) + "\n";
}

SweepOptions sweep_options(const RunConfig& c) {
  SweepOptions o;
  o.method = parse_method(c.method);
  o.cells = c.cells;
  const auto depth = parse_depth(c.depth);
  o.depth_cap = depth ? *depth : 0;
  if (depth && *depth < 1) throw CLI::ValidationError("--depth", "sweeps need a positive depth cap");
  o.jobs = c.jobs;
  o.accelerate = !c.exact_chains;
  o.tol = c.tol;
  return o;
}

std::vector<double> sweep_taus(const RunConfig& c) {
  if (!c.taus.empty()) return c.taus;
  return log_spaced(c.tau_min, c.tau_max, c.points);
}

json sweep_rows(const SweepResult& s) {
  json rows = json::array();
  for (std::size_t i = 0; i < s.taus.size(); ++i)
    rows.push_back({{"tau", round12(s.taus[i])},
                    {"lower_Pe", round12(s.lower_Pe[i])},
                    {"upper_Pe", round12(s.upper_Pe[i])},
                    {"lower_I", round12(s.lower_I[i])},
                    {"upper_I", round12(s.upper_I[i])},
                    {"converged", static_cast<bool>(s.converged[i])},
                    {"levels", s.levels[i]}});
  return rows;
}

json sweep_config(const RunConfig& c, const SweepResult& s) {
  json j = config_json(c);
  j["method"] = to_string(s.method);
  j["cells"] = s.cells;
  j["depth"] = c.depth;
  j["tol"] = c.tol;
  j["accelerate"] = !c.exact_chains;
  return j;
}

std::string cmd_sweep(const RunConfig& c) {
  const auto s = tau_sweep(c.d, sweep_taus(c), sweep_options(c));
  check_sandwich(s);
  if (c.format == Format::csv) {
    emit_warnings(s.warnings);
    std::string out = "tau,lower_Pe,upper_Pe,lower_I,upper_I,converged,gap_I\n";
    for (std::size_t i = 0; i < s.taus.size(); ++i)
      out += fmt(s.taus[i]) + "," + fmt(s.lower_Pe[i]) + "," + fmt(s.upper_Pe[i]) + "," + fmt(s.lower_I[i]) + "," +
             fmt(s.upper_I[i]) + "," + (s.converged[i] ? "true" : "false") + "," + fmt(s.upper_I[i] - s.lower_I[i]) +
             "\n";
    return out;
  }
  json j;
  j["config"] = sweep_config(c, s);
  j["results"] = sweep_rows(s);
  j["fits"] = json::object();
  j["warnings"] = s.warnings;
  return j.dump(2) + "\n";
}

std::string cmd_exponent(const RunConfig& c) {
  auto o = sweep_options(c);
  if (o.method != SweepMethod::local) throw CLI::ValidationError("--method", "exponent fits use the local pipelines");
  const auto rep = conjecture_report(c.d, c.cells, sweep_taus(c), o);
  check_sandwich(rep.sweep);
  // Headline slope from the lower curve; the upper one and the gap go alongside.
  const double i_slope = rep.info_lower.intercept;
  if (c.format == Format::csv) {
    emit_warnings(rep.sweep.warnings);
    return "quantity,value\ni_slope," + fmt(i_slope) + "\ni_slope_lower," + fmt(rep.info_lower.intercept) +
           "\ni_slope_upper," + fmt(rep.info_upper.intercept) + "\npe_exponent," + fmt(rep.pe_exponent.slope) +
           "\npe_exponent_alt," + fmt(rep.pe_exponent_alt.slope) + "\nmax_relative_gap," +
           fmt(rep.max_relative_gap) + "\n";
  }
  json j;
  j["config"] = sweep_config(c, rep.sweep);
  j["results"] = sweep_rows(rep.sweep);
  j["fits"] = {{"i_slope", round12(i_slope)},
               {"i_slope_lower", round12(rep.info_lower.intercept)},
               {"i_slope_upper", round12(rep.info_upper.intercept)},
               {"pe_exponent", round12(rep.pe_exponent.slope)},
               {"pe_exponent_alt", round12(rep.pe_exponent_alt.slope)},
               {"max_relative_gap", round12(rep.max_relative_gap)},
               {"info_lower_fit", fit_json(rep.info_lower)},
               {"info_upper_fit", fit_json(rep.info_upper)},
               {"pe_fit", fit_json(rep.pe_exponent)},
               {"pe_fit_alt", fit_json(rep.pe_exponent_alt)}};
  j["warnings"] = rep.sweep.warnings;
  return j.dump(2) + "\n";
}

std::string cmd_oracle_check(const RunConfig& c) {
  const auto p = params_of(c);
  const auto depth = parse_depth(c.depth);
  if (!depth) throw CLI::ValidationError("--depth", "oracle-check needs an explicit depth");
  const ExactResult tree = exact_tree(p, static_cast<int>(*depth));
  const ExactResult de = summarize(exact_de(p, static_cast<int>(*depth)), tree.leaf_count);
  const auto rep = level_bounds(p, SweepMethod::local, c.cells, depth, 100000, c.tol);
  const BoundRow& b = rep.rows.back();

  struct Line {
    const char* name;
    double tree, de, lower, upper;
    bool bounded;
  };
  const Line lines[] = {{"p_e", tree.p_e, de.p_e, b.lower_Pe, b.upper_Pe, true},
                        {"mutual_info", tree.mutual_info, de.mutual_info, b.lower_I, b.upper_I, true},
                        {"chi2_info", tree.chi2_info, de.chi2_info, 0, 0, false}};
  double worst = 0;
  bool sandwiched = true;
  for (const auto& l : lines) {
    worst = std::max(worst, std::abs(l.tree - l.de));
    if (l.bounded) sandwiched = sandwiched && l.lower <= l.tree + 1e-12 && l.tree <= l.upper + 1e-12;
  }
  const bool pass = worst <= 1e-10 && sandwiched;

  std::string out;
  if (c.format == Format::csv) {
    out = "quantity,exact_tree,exact_de,discrepancy,lower,upper\n";
    for (const auto& l : lines)
      out += std::string(l.name) + "," + fmt(l.tree) + "," + fmt(l.de) + "," + fmt(std::abs(l.tree - l.de)) + "," +
             (l.bounded ? fmt(l.lower) + "," + fmt(l.upper) : std::string(",")) + "\n";
    std::cerr << "oracle-check: " << (pass ? "pass" : "FAIL") << ", max discrepancy " << fmt(worst) << "\n";
  } else {
    json j;
    j["config"] = config_json(c);
    j["config"]["depth"] = *depth;
    j["config"]["cells"] = c.cells;
    json res = json::object();
    for (const auto& l : lines) {
      json q = {{"exact_tree", round12(l.tree)}, {"exact_de", round12(l.de)}};
      if (l.bounded) {
        q["lower"] = round12(l.lower);
        q["upper"] = round12(l.upper);
      }
      res[l.name] = q;
    }
    res["leaf_count"] = tree.leaf_count;
    res["max_discrepancy"] = round12(worst);
    res["sandwiched"] = sandwiched;
    res["pass"] = pass;
    j["results"] = res;
    j["fits"] = json::object();
    j["warnings"] = json::array();
    out = j.dump(2) + "\n";
  }
  if (!pass) {
    std::cout << out;
    throw invariant_error("oracle-check: exact methods disagree or the quantized bounds miss the exact value");
  }
  return out;
}

void write_output(const RunConfig& c, const std::string& text) {
  if (c.output.empty() || c.output == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(c.output, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + c.output);
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-critical reconstruction bounds for broadcasting on trees"};
  app.require_subcommand(1);
  RunConfig c;

  const std::vector<std::string> formats{"csv", "json"};
  const std::vector<std::string> methods{"local", "scalar", "two_atom"};

  auto common = [&](CLI::App* sub) {
    sub->add_option("--format", c.format_name, "csv or json")->check(CLI::IsMember(formats));
    sub->add_option("--output,-o", c.output, "write to this file instead of stdout");
    sub->add_option("--tol", c.tol_flag, "convergence tolerance")->check(CLI::PositiveNumber);
  };
  auto arity = [&](CLI::App* sub, int min_d) {
    sub->add_option("--d", c.d, "tree arity")->required()->check(CLI::Range(min_d, 1000000));
  };
  auto noise = [&](CLI::App* sub) {
    auto* g = sub->add_option_group("noise", "edge flip probability");
    g->add_option("--delta", c.delta, "flip probability")->check(CLI::Range(0.0, 0.5));
    g->add_option("--tau", c.tau, "distance below the threshold, delta = delta_c - tau")
        ->check(CLI::Range(0.0, 0.5));
    g->require_option(1);
  };
  auto grid = [&](CLI::App* sub) {
    sub->add_option("--cells", c.cells, "uniform grid cells")->check(CLI::Range(1L, 1L << 24));
  };
  auto sweep_flags = [&](CLI::App* sub) {
    arity(sub, 2);
    grid(sub);
    sub->add_option("--taus", c.taus, "comma separated tau values")->delimiter(',')->check(CLI::PositiveNumber);
    sub->add_option("--tau-min", c.tau_min, "smallest tau of the log-spaced range")->check(CLI::PositiveNumber);
    sub->add_option("--tau-max", c.tau_max, "largest tau of the log-spaced range")->check(CLI::PositiveNumber);
    sub->add_option("--points", c.points, "number of log-spaced tau values")->check(CLI::Range(1, 10000));
    sub->add_option("--depth", c.depth, "depth cap per chain, or auto");
    sub->add_option("--method", c.method, "local, scalar or two_atom")->check(CLI::IsMember(methods));
    sub->add_option("--jobs,-j", c.jobs, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--exact-chains", c.exact_chains, "no extrapolation or warm starts");
  };

  auto* threshold = app.add_subcommand("threshold", "bisect the reconstruction threshold");
  arity(threshold, 2);
  common(threshold);
  threshold->callback([&] { c.command = "threshold"; });

  auto* bounds = app.add_subcommand("bounds", "per-level bounds from the four comparison pipelines");
  arity(bounds, 1);
  noise(bounds);
  grid(bounds);
  bounds->add_option("--depth", c.depth, "number of levels, or auto");
  bounds->add_option("--method", c.method, "local, scalar or two_atom")->check(CLI::IsMember(methods));
  bounds->add_option("--cap", c.cap, "level cap for --depth auto")->check(CLI::PositiveNumber);
  common(bounds);
  bounds->callback([&] { c.command = "bounds"; });

  auto* sweep = app.add_subcommand("sweep", "limits of the bounds over a range of tau");
  sweep_flags(sweep);
  common(sweep);
  sweep->callback([&] { c.command = "sweep"; });

  auto* exponent = app.add_subcommand("exponent", "fit the information slope and the error exponent");
  sweep_flags(exponent);
  common(exponent);
  exponent->callback([&] { c.command = "exponent"; });

  auto* oracle = app.add_subcommand("oracle-check", "compare enumeration, exact BP and quantized bounds");
  arity(oracle, 1);
  noise(oracle);
  grid(oracle);
  oracle->add_option("--depth", c.depth, "tree depth")->required();
  common(oracle);
  oracle->callback([&] { c.command = "oracle-check"; });

  try {
    app.parse(argc, argv);
    if (c.format_name.empty()) c.format_name = c.command == "exponent" ? "json" : "csv";
    c.format = c.format_name == "json" ? Format::json : Format::csv;
    c.tol = c.tol_flag.value_or(c.command == "threshold" ? 1e-9 : 1e-12);

    std::string text;
    if (c.command == "threshold")
      text = cmd_threshold(c);
    else if (c.command == "bounds")
      text = cmd_bounds(c);
    else if (c.command == "sweep")
      text = cmd_sweep(c);
    else if (c.command == "exponent")
      text = cmd_exponent(c);
    else
      text = cmd_oracle_check(c);
    write_output(c, text);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const invariant_error& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 2;
  } catch (const resource_error& e) {
    std::cerr << "resource limit: " << e.what() << "\n";
    return 3;
  } catch (const std::bad_alloc&) {
    std::cerr << "resource limit: out of memory\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
