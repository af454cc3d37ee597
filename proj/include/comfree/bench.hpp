#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "comfree/errors.hpp"
#include "comfree/mppi.hpp"
#include "comfree/parallel.hpp"
#include "comfree/stepper.hpp"
#include "comfree/world.hpp"

namespace comfree::bench {

// ---------------------------------------------------------------------------
// Series and CSV
// ---------------------------------------------------------------------------

//! A numeric table with a fixed column order.
struct Series {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row) {
    if (row.size() != columns.size()) throw InternalError("series row width does not match its header");
    rows.push_back(std::move(row));
  }
};

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

//! RFC-4180 text: header row, CRLF line ends, 9 significant digits per value.
inline std::string to_csv(const Series& s) {
  std::string out;
  for (std::size_t i = 0; i < s.columns.size(); ++i) {
    if (i) out += ',';
    out += csv_field(s.columns[i]);
  }
  out += "\r\n";
  for (const auto& row : s.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_value(row[i]);
    }
    out += "\r\n";
  }
  return out;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw IoError(path, "write failed");
}

inline void emit_csv(const Series& s, const std::string& path) { write_file(path, to_csv(s)); }

//! Parsed numeric CSV as written by to_csv (unquoted numeric cells, quoted headers allowed).
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw ConfigError("no column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::size_t pos = 0;
  bool header = true;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find("\r\n", pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 2;
    ++line_no;
    if (header) {
      t.columns = split_csv_line(line);
      header = false;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != t.columns.size()) throw ParseError(line_no, "row width does not match header");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& cell : cells) {
      char* stop = nullptr;
      const double v = std::strtod(cell.c_str(), &stop);
      if (stop == cell.c_str()) throw ParseError(line_no, "non-numeric cell '" + cell + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

struct Stats {
  double mean = 0.0;
  double std = 0.0;  //!< population standard deviation
  std::size_t count = 0;
};

inline Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

//! Values of `column`, optionally restricted to rows where `where_column == where_value`.
inline std::vector<double> column_values(const CsvTable& t, const std::string& column,
                                         const std::string& where_column = {}, double where_value = 0.0) {
  const std::size_t c = t.column(column);
  const std::size_t w = where_column.empty() ? 0 : t.column(where_column);
  std::vector<double> xs;
  for (const auto& row : t.rows) {
    if (!where_column.empty() && row[w] != where_value) continue;
    xs.push_back(row[c]);
  }
  return xs;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct Metric {
  std::string name;
  Stats stats;
  std::string file;    //!< series file the statistics were computed from
  std::string column;
  std::string filter;  //!< "column=value" row selection, empty for all rows
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SeriesFile {
  std::string name;  //!< file name inside the output directory
  std::string text;  //!< exact CSV bytes
};

struct BenchReport {
  std::string id;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<Metric> metrics;
  std::vector<Check> checks;
  std::vector<std::string> flags;
  std::vector<SeriesFile> files;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }

  const SeriesFile& file(const std::string& name) const {
    for (const auto& f : files) {
      if (f.name == name) return f;
    }
    throw ConfigError("report has no file '" + name + "'");
  }

  const Metric& metric(const std::string& name) const {
    for (const auto& m : metrics) {
      if (m.name == name) return m;
    }
    throw ConfigError("report has no metric '" + name + "'");
  }

  const Check& check(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return c;
    }
    throw ConfigError("report has no check '" + name + "'");
  }

  bool has_flag(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }

  void add_file(const std::string& name, const Series& s) { files.push_back({name, to_csv(s)}); }

  //! Computes a metric by re-reading one of this report's own CSV files.
  const Metric& add_metric(const std::string& name, const std::string& file_name, const std::string& column,
                           const std::string& where_column = {}, double where_value = 0.0) {
    const CsvTable t = parse_csv(file(file_name).text);
    Metric m{name, stats_of(column_values(t, column, where_column, where_value)), file_name, column, {}};
    if (!where_column.empty()) m.filter = where_column + "=" + format_value(where_value);
    metrics.push_back(std::move(m));
    return metrics.back();
  }

  void add_check(std::string name, bool ok, std::string detail = {}) {
    checks.push_back({std::move(name), ok, std::move(detail)});
  }

  void echo(const std::string& key, const std::string& value) { config.emplace_back(key, value); }
  void echo(const std::string& key, double value) { config.emplace_back(key, format_value(value)); }
};

//! Summary CSV: one row per metric, then one per check (pass = 1/0).
inline std::string summary_csv(const BenchReport& r) {
  std::string out = "kind,name,mean,std,count,source\r\n";
  for (const Metric& m : r.metrics) {
    std::string source = m.file + ":" + m.column;
    if (!m.filter.empty()) source += "[" + m.filter + "]";
    out += "metric," + csv_field(m.name) + "," + format_value(m.stats.mean) + "," + format_value(m.stats.std) + "," +
           std::to_string(m.stats.count) + "," + csv_field(source) + "\r\n";
  }
  for (const Check& c : r.checks) {
    out += "check," + csv_field(c.name) + "," + (c.passed ? "1" : "0") + ",,," + csv_field(c.detail) + "\r\n";
  }
  return out;
}

//! Writes every series file plus `<id>_summary.csv` into `dir` (created if missing).
inline void write_report(const BenchReport& r, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir, ec.message());
  for (const SeriesFile& f : r.files) write_file((std::filesystem::path(dir) / f.name).string(), f.text);
  write_file((std::filesystem::path(dir) / (r.id + "_summary.csv")).string(), summary_csv(r));
}

inline std::string format_report(const BenchReport& r) {
  std::ostringstream os;
  os << "== " << r.id << " ==\n";
  for (const auto& [k, v] : r.config) os << "  " << k << " = " << v << "\n";
  for (const Metric& m : r.metrics) {
    os << "  " << m.name << ": " << format_value(m.stats.mean) << " +- " << format_value(m.stats.std)
       << " (n=" << m.stats.count << ", " << m.file << ")\n";
  }
  for (const auto& f : r.flags) os << "  flag: " << f << "\n";
  for (const Check& c : r.checks) {
    os << "  [" << (c.passed ? "PASS" : "FAIL") << "] " << c.name;
    if (!c.detail.empty()) os << " -- " << c.detail;
    os << "\n";
  }
  return os.str();
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

//! Restores the worker override on scope exit.
class WorkerScope {
 public:
  explicit WorkerScope(int n) { parallel::set_worker_count(n); }
  ~WorkerScope() { parallel::set_worker_count(0); }
  WorkerScope(const WorkerScope&) = delete;
  WorkerScope& operator=(const WorkerScope&) = delete;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Scene generators
// ---------------------------------------------------------------------------

//! Three layers of 3x3 primitives (~5 cm) above the ground. The bottom layer mixes boxes,
//! upright cylinders, lying capsules and spheres, all in resting-stable poses; the upper layers
//! are spheres centred over each column. Columns are spaced so bottom-layer bodies never reach
//! each other.
inline Scene drop_scene(double k_user, double d_user) {
  Scene s;
  s.config.impedance.k_user = k_user;
  s.config.impedance.d_user = d_user;
  s.bodies.push_back(make_ground());
  const double pitch = 0.12;
  const double size = 0.025;
  int idx = 0;
  for (int layer = 0; layer < 3; ++layer) {
    const double z = 0.05 + 0.12 * layer;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j, ++idx) {
        const Vec3 p{(i - 1) * pitch, (j - 1) * pitch, z};
        const std::string name = "drop" + std::to_string(idx);
        if (layer > 0) {
          s.bodies.push_back(make_dynamic(name, Sphere{size}, 0.1, p));
          continue;
        }
        switch ((i * 3 + j) % 4) {
          case 0: s.bodies.push_back(make_dynamic(name, Box{{size, size, size}}, 0.1, p)); break;
          case 1: s.bodies.push_back(make_dynamic(name, Cylinder{size, size}, 0.1, p)); break;
          case 2: {
            Body b = make_dynamic(name, Capsule{0.8 * size, 0.6 * size}, 0.1, p);
            b.orientation = Quat::from_axis_angle({0.0, 1.0, 0.0}, M_PI / 2.0);
            s.bodies.push_back(b);
            break;
          }
          default: s.bodies.push_back(make_dynamic(name, Sphere{size}, 0.1, p)); break;
        }
      }
    }
  }
  return s;
}

inline constexpr double kTorsionRadius = 0.01;
inline constexpr double kTorsionSpin = 5.0;

//! A small sphere resting on the ground, spinning about z.
inline Scene torsion_scene(double mu_tor) {
  Scene s;
  const FrictionParams f{1.0, mu_tor, 0.0};
  s.bodies.push_back(make_ground(f));
  Body b = make_dynamic("ball", Sphere{kTorsionRadius}, 0.1, {0.0, 0.0, kTorsionRadius}, f);
  b.angular_velocity = {0.0, 0.0, kTorsionSpin};
  s.bodies.push_back(b);
  return s;
}

inline constexpr double kRollingRadius = 0.02;
inline constexpr double kRollingSpeed = 0.5;

//! A cylinder lying on its side (axis along y) on the ground, at rest.
inline Scene rolling_scene(double mu_rol) {
  Scene s;
  const FrictionParams f{1.0, 0.0, mu_rol};
  s.bodies.push_back(make_ground(f));
  Body b = make_dynamic("cylinder", Cylinder{kRollingRadius, 0.025}, 0.1, {0.0, 0.0, kRollingRadius}, f);
  b.orientation = Quat::from_axis_angle({1.0, 0.0, 0.0}, M_PI / 2.0);
  s.bodies.push_back(b);
  return s;
}

//! A 10 cm cube released 5 cm above the ground with v = (2, 0, 0), w = (0.1, 0.1, 0.1).
inline Scene stability_scene(double k_user, double d_user, double dt) {
  Scene s;
  s.config.dt = dt;
  s.config.impedance.k_user = k_user;
  s.config.impedance.d_user = d_user;
  s.bodies.push_back(make_ground());
  Body b = make_dynamic("cube", Box{{0.05, 0.05, 0.05}}, 1.0, {0.0, 0.0, 0.1});
  b.velocity = {2.0, 0.0, 0.0};
  b.angular_velocity = {0.1, 0.1, 0.1};
  s.bodies.push_back(b);
  return s;
}

//! `cells` resting cells in a row; each is a 2x2 group of separated boxes with a sphere nested
//! on top in the middle (20 contacts per cell at rest).
inline Scene scaling_scene(int cells) {
  Scene s;
  s.bodies.push_back(make_ground());
  const double h = 0.025;
  const double gap = 0.01;
  const double pitch = 2.0 * h + gap;
  for (int c = 0; c < cells; ++c) {
    const double cx = c * 0.2;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const Vec3 p{cx + (i - 0.5) * pitch, (j - 0.5) * pitch, h};
        s.bodies.push_back(make_dynamic("box" + std::to_string(c) + "_" + std::to_string(i * 2 + j), Box{{h, h, h}},
                                        0.5, p));
      }
    }
    s.bodies.push_back(make_dynamic("ball" + std::to_string(c), Sphere{0.03}, 0.05, {cx, 0.0, 2.0 * h + 0.025}));
  }
  return s;
}

//! Desk-scale pile: a 3x3 grid of heavy boxes with light spheres resting on top of each and
//! between them on the ground.
inline Scene pile_scene() {
  Scene s;
  s.bodies.push_back(make_ground());
  const double h = 0.025;
  const double pitch = 0.12;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Vec3 p{(i - 1) * pitch, (j - 1) * pitch, h};
      s.bodies.push_back(make_dynamic("box" + std::to_string(i * 3 + j), Box{{h, h, h}}, 1.0, p));
      s.bodies.push_back(
          make_dynamic("top" + std::to_string(i * 3 + j), Sphere{0.02}, 0.05, p + Vec3{0.0, 0.0, h + 0.02}));
    }
  }
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const Vec3 p{(i - 0.5) * pitch, (j - 0.5) * pitch, 0.02};
      s.bodies.push_back(make_dynamic("floor" + std::to_string(i * 2 + j), Sphere{0.02}, 0.05, p));
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Penetration
// ---------------------------------------------------------------------------

struct PenetrationOptions {
  std::vector<std::pair<double, double>> settings{{0.1, 0.001}, {0.3, 0.001}, {0.5, 0.001}};  //!< (k, d)
  int n_steps = 1000;
  std::optional<Scene> scene;  //!< overrides the drop scene; its impedance is replaced per setting
  double max_run_seconds = 60.0;
};

//! Drops the primitive array and records max(0, -phi) in mm for every detected contact at every
//! step. Mean penetration must fall strictly with each successive setting.
inline BenchReport bench_penetration(const PenetrationOptions& opt = {}) {
  BenchReport r;
  r.id = "penetration";
  r.echo("n_steps", opt.n_steps);
  Series series{{"setting", "k_user", "d_user", "step", "contact", "penetration_mm"}, {}};
  std::vector<double> seconds;
  std::vector<std::size_t> contact_totals;
  for (std::size_t si = 0; si < opt.settings.size(); ++si) {
    const auto [k, d] = opt.settings[si];
    Scene scene = opt.scene ? *opt.scene : drop_scene(k, d);
    scene.config.impedance.k_user = k;
    scene.config.impedance.d_user = d;
    r.echo("setting" + std::to_string(si), "k=" + format_value(k) + " d=" + format_value(d));
    BatchedWorld w = replicate_envs(scene, 1);
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t total = 0;
    for (int n = 0; n < opt.n_steps; ++n) {
      step(w);
      const auto& contacts = w.envs[0].contacts;
      for (std::size_t c = 0; c < contacts.size(); ++c) {
        series.add({static_cast<double>(si), k, d, static_cast<double>(n + 1), static_cast<double>(c),
                    1000.0 * std::max(0.0, -contacts[c].phi)});
      }
      total += contacts.size();
    }
    seconds.push_back(detail::seconds_since(t0));
    contact_totals.push_back(total);
  }
  r.add_file("penetration.csv", series);
  std::vector<double> means;
  for (std::size_t si = 0; si < opt.settings.size(); ++si) {
    const auto& m = r.add_metric("penetration_mm[" + std::to_string(si) + "]", "penetration.csv", "penetration_mm",
                                 "setting", static_cast<double>(si));
    means.push_back(m.stats.mean);
    r.add_check("runtime[" + std::to_string(si) + "] < " + format_value(opt.max_run_seconds) + " s",
                seconds[si] < opt.max_run_seconds, format_value(seconds[si]) + " s");
    if (contact_totals[si] == 0) r.flags.push_back("NoContacts[" + std::to_string(si) + "]");
  }
  if (std::all_of(contact_totals.begin(), contact_totals.end(), [](std::size_t n) { return n == 0; })) {
    r.flags.push_back("NoContacts");
  }
  if (means.size() >= 2) {
    bool decreasing = true;
    std::string detail;
    for (std::size_t i = 0; i < means.size(); ++i) {
      if (i) detail += " > ";
      detail += format_value(means[i]);
      if (i && !(means[i] < means[i - 1])) decreasing = false;
    }
    r.add_check("mean penetration strictly decreasing across settings", decreasing, detail + " mm");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Torsion and rolling
// ---------------------------------------------------------------------------

inline constexpr double kRestSpin = 1e-3;   //!< rad/s
inline constexpr double kRestSpeed = 1e-3;  //!< m/s

struct DecayOptions {
  std::vector<double> mus;
  double horizon_seconds = 0.0;      //!< give up on reaching rest after this long
  double conservation_seconds = 1.0;  //!< window for the mu = 0 check
  double conservation_tol = 1e-4;
  int record_stride = 1;  //!< series row every n steps (the rest step is always recorded)
};

inline DecayOptions default_torsion_options() { return {{0.0, 0.001, 0.005, 0.01}, 300.0, 1.0, 1e-4, 1}; }
inline DecayOptions default_rolling_options() { return {{0.0, 0.001, 0.005, 0.01}, 1200.0, 1.0, 1e-4, 10}; }

namespace detail {

//! Time-to-rest checks shared by the torsion and rolling benchmarks. `rest` holds the time to
//! rest per mu (NaN when not reached) read back from the series file.
inline void decay_checks(BenchReport& r, const DecayOptions& opt, const std::vector<double>& rest,
                         const std::vector<double>& drift, const char* what) {
  std::vector<std::pair<double, double>> ranked;  // (mu, time) for mu > 0
  for (std::size_t i = 0; i < opt.mus.size(); ++i) {
    if (opt.mus[i] == 0.0) {
      r.add_check(std::string("mu=0 conserves ") + what + " within " + format_value(opt.conservation_tol) +
                      " over " + format_value(opt.conservation_seconds) + " s",
                  drift[i] <= opt.conservation_tol, "max drift " + format_value(drift[i]));
    } else {
      r.add_check("mu=" + format_value(opt.mus[i]) + " reaches rest", std::isfinite(rest[i]),
                  std::isfinite(rest[i]) ? format_value(rest[i]) + " s" : "not within horizon");
      ranked.emplace_back(opt.mus[i], rest[i]);
    }
  }
  std::sort(ranked.begin(), ranked.end());
  bool monotone = true;
  std::string detail;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i) detail += ", ";
    detail += "mu=" + format_value(ranked[i].first) + ": " + format_value(ranked[i].second) + " s";
    if (i && !(ranked[i].second <= ranked[i - 1].second)) monotone = false;
  }
  if (ranked.size() >= 2) r.add_check("time to rest non-increasing in mu", monotone, detail);
}

//! Last recorded time per group if its last value is below `threshold`, else NaN.
inline std::vector<double> rest_times_from_csv(const std::string& csv, const std::vector<double>& mus,
                                               const std::string& value_column, double threshold) {
  const CsvTable t = parse_csv(csv);
  std::vector<double> out;
  for (std::size_t i = 0; i < mus.size(); ++i) {
    const auto times = column_values(t, "time", "case", static_cast<double>(i));
    const auto values = column_values(t, value_column, "case", static_cast<double>(i));
    out.push_back(!values.empty() && std::abs(values.back()) < threshold
                      ? times.back()
                      : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

}  // namespace detail

//! Spinning sphere constrained to rotate about z only (non-z angular and all linear velocity
//! zeroed after each step). Records omega_z until it drops below kRestSpin.
inline BenchReport bench_torsion(const DecayOptions& opt = default_torsion_options()) {
  BenchReport r;
  r.id = "torsion";
  r.echo("radius", kTorsionRadius);
  r.echo("initial_spin", kTorsionSpin);
  r.echo("horizon_s", opt.horizon_seconds);
  Series series{{"case", "mu_tor", "step", "time", "omega_z"}, {}};
  std::vector<double> drift;
  for (std::size_t i = 0; i < opt.mus.size(); ++i) {
    const double mu = opt.mus[i];
    BatchedWorld w = replicate_envs(torsion_scene(mu), 1);
    const double dt = w.config.dt;
    const auto horizon = static_cast<long>(std::ceil(opt.horizon_seconds / dt));
    const auto window = static_cast<long>(std::llround(opt.conservation_seconds / dt));
    const long n_steps = mu == 0.0 ? std::max(window, 1000L) : horizon;
    double max_drift = 0.0;
    for (long n = 1; n <= n_steps; ++n) {
      step(w);
      BodyState& b = w.envs[0].bodies[1];
      b.velocity = {};
      b.angular_velocity.x = 0.0;
      b.angular_velocity.y = 0.0;
      const double wz = b.angular_velocity.z;
      if (n <= window) max_drift = std::max(max_drift, std::abs(wz - kTorsionSpin));
      const bool rest = mu > 0.0 && std::abs(wz) < kRestSpin;
      if (n % opt.record_stride == 0 || rest || n == n_steps) {
        series.add({static_cast<double>(i), mu, static_cast<double>(n), n * dt, wz});
      }
      if (rest) break;
    }
    drift.push_back(max_drift);
  }
  r.add_file("torsion.csv", series);
  for (std::size_t i = 0; i < opt.mus.size(); ++i) {
    r.add_metric("omega_z[mu=" + format_value(opt.mus[i]) + "]", "torsion.csv", "omega_z", "case",
                 static_cast<double>(i));
  }
  const auto rest = detail::rest_times_from_csv(r.file("torsion.csv").text, opt.mus, "omega_z", kRestSpin);
  detail::decay_checks(r, opt, rest, drift, "omega_z");
  return r;
}

struct RollingStart {
  BatchedWorld world;
  double effective_radius = 0.0;
};

//! Settles the cylinder, then launches it along x with the angular velocity that makes the
//! contact points stationary (no initial slip).
inline RollingStart launch_rolling(double mu_rol, double speed = kRollingSpeed, int settle_steps = 1000) {
  RollingStart out{replicate_envs(rolling_scene(mu_rol), 1), 0.0};
  for (int i = 0; i < settle_steps; ++i) step(out.world);
  EnvState& env = out.world.envs[0];
  if (env.contacts.empty()) throw InternalError("rolling cylinder has no ground contact after settling");
  double contact_z = 0.0;
  for (const Contact& c : env.contacts) contact_z += c.point.z;
  contact_z /= static_cast<double>(env.contacts.size());
  BodyState& b = env.bodies[1];
  out.effective_radius = b.position.z - contact_z;
  b.velocity = {speed, 0.0, 0.0};
  b.angular_velocity = {0.0, speed / out.effective_radius, 0.0};
  return out;
}

//! Cylinder rolling on its side. Records horizontal COM speed until it drops below kRestSpeed;
//! the 5-step moving average of the speed must never increase.
inline BenchReport bench_rolling(const DecayOptions& opt = default_rolling_options()) {
  BenchReport r;
  r.id = "rolling";
  r.echo("radius", kRollingRadius);
  r.echo("initial_speed", kRollingSpeed);
  r.echo("horizon_s", opt.horizon_seconds);
  Series series{{"case", "mu_rol", "step", "time", "speed"}, {}};
  std::vector<double> drift;
  bool smooth_decay = true;
  std::string decay_detail;
  for (std::size_t i = 0; i < opt.mus.size(); ++i) {
    const double mu = opt.mus[i];
    RollingStart start = launch_rolling(mu);
    BatchedWorld& w = start.world;
    const double dt = w.config.dt;
    const auto horizon = static_cast<long>(std::ceil(opt.horizon_seconds / dt));
    const auto window = static_cast<long>(std::llround(opt.conservation_seconds / dt));
    const long n_steps = mu == 0.0 ? window : horizon;
    double max_drift = 0.0;
    std::vector<double> recent;
    double prev_avg = std::numeric_limits<double>::infinity();
    double worst_rise = 0.0;
    for (long n = 1; n <= n_steps; ++n) {
      step(w);
      const BodyState& b = w.envs[0].bodies[1];
      const double v = std::hypot(b.velocity.x, b.velocity.y);
      if (n <= window) max_drift = std::max(max_drift, std::abs(v - kRollingSpeed));
      recent.push_back(v);
      if (recent.size() > 5) recent.erase(recent.begin());
      if (recent.size() == 5) {
        const double avg = (recent[0] + recent[1] + recent[2] + recent[3] + recent[4]) / 5.0;
        if (mu > 0.0) worst_rise = std::max(worst_rise, avg - prev_avg);
        prev_avg = avg;
      }
      const bool rest = mu > 0.0 && v < kRestSpeed;
      if (n % opt.record_stride == 0 || rest || n == n_steps) {
        series.add({static_cast<double>(i), mu, static_cast<double>(n), n * dt, v});
      }
      if (rest) break;
    }
    drift.push_back(max_drift);
    if (mu > 0.0) {
      if (worst_rise > 1e-12) smooth_decay = false;
      decay_detail += (decay_detail.empty() ? "" : ", ") + std::string("mu=") + format_value(mu) +
                      " max rise " + format_value(worst_rise);
    }
  }
  r.add_file("rolling.csv", series);
  for (std::size_t i = 0; i < opt.mus.size(); ++i) {
    r.add_metric("speed[mu=" + format_value(opt.mus[i]) + "]", "rolling.csv", "speed", "case",
                 static_cast<double>(i));
  }
  const auto rest = detail::rest_times_from_csv(r.file("rolling.csv").text, opt.mus, "speed", kRestSpeed);
  detail::decay_checks(r, opt, rest, drift, "COM speed");
  r.add_check("5-step moving average of speed never increases", smooth_decay, decay_detail);
  return r;
}

// ---------------------------------------------------------------------------
// Stability
// ---------------------------------------------------------------------------

struct StabilitySetting {
  double k_user = 0.1;
  double d_user = 0.001;
  double dt = 0.002;
  bool expect_pass = true;  //!< false marks a setting recorded for information only
};

struct StabilityOptions {
  std::vector<StabilitySetting> settings{{0.1, 0.001, 0.002, true}, {0.1, 0.001, 0.02, true},
                                         {0.1, 0.001, 0.2, false}};
  double duration = 5.0;    //!< seconds; every run also lasts at least min_steps
  int min_steps = 500;
  double z_lo = -0.005;
  double z_hi = 0.2;
  double speed_limit = 1e-2;
};

struct StabilityOutcome {
  bool finite = true;
  bool z_bounded = true;
  bool stopped = false;      //!< horizontal speed below the limit by `duration`
  bool monotone = true;      //!< 5-step averaged horizontal speed never increases
  double worst_rise = 0.0;
  double stop_time = std::numeric_limits<double>::quiet_NaN();
  long steps_completed = 0;
  bool passed() const { return finite && z_bounded && stopped; }
};

inline BenchReport bench_stability(const StabilityOptions& opt = {}) {
  BenchReport r;
  r.id = "stability";
  r.echo("duration_s", opt.duration);
  r.echo("min_steps", opt.min_steps);
  Series series{{"setting", "k_user", "d_user", "dt", "step", "time", "speed", "z"}, {}};
  std::vector<StabilityOutcome> outcomes;
  for (std::size_t si = 0; si < opt.settings.size(); ++si) {
    const StabilitySetting& st = opt.settings[si];
    r.echo("setting" + std::to_string(si),
           "k=" + format_value(st.k_user) + " d=" + format_value(st.d_user) + " dt=" + format_value(st.dt));
    BatchedWorld w = replicate_envs(stability_scene(st.k_user, st.d_user, st.dt), 1);
    const long n_steps =
        std::max<long>(opt.min_steps, static_cast<long>(std::ceil(opt.duration / st.dt - 1e-9)));
    StabilityOutcome out;
    std::vector<double> recent;
    double prev_avg = std::numeric_limits<double>::infinity();
    for (long n = 1; n <= n_steps; ++n) {
      try {
        step(w);
      } catch (const NonFiniteState&) {
        out.finite = false;
        break;
      }
      out.steps_completed = n;
      const BodyState& b = w.envs[0].bodies[1];
      const double v = std::hypot(b.velocity.x, b.velocity.y);
      const double z = b.position.z;
      const double t = n * st.dt;
      series.add({static_cast<double>(si), st.k_user, st.d_user, st.dt, static_cast<double>(n), t, v, z});
      if (!std::isfinite(v) || !std::isfinite(z)) {
        out.finite = false;
        break;
      }
      if (z < opt.z_lo || z > opt.z_hi) out.z_bounded = false;
      if (t <= opt.duration + 1e-12 && v < opt.speed_limit && !out.stopped) {
        out.stopped = true;
        out.stop_time = t;
      }
      recent.push_back(v);
      if (recent.size() > 5) recent.erase(recent.begin());
      if (recent.size() == 5) {
        const double avg = (recent[0] + recent[1] + recent[2] + recent[3] + recent[4]) / 5.0;
        out.worst_rise = std::max(out.worst_rise, avg - prev_avg);
        prev_avg = avg;
      }
    }
    out.monotone = out.worst_rise <= 1e-12;
    outcomes.push_back(out);
  }
  r.add_file("stability.csv", series);
  for (std::size_t si = 0; si < opt.settings.size(); ++si) {
    const StabilitySetting& st = opt.settings[si];
    const StabilityOutcome& o = outcomes[si];
    r.add_metric("z[" + std::to_string(si) + "]", "stability.csv", "z", "setting", static_cast<double>(si));
    std::string detail = std::string(o.finite ? "finite" : "NON-FINITE") + ", z " +
                         (o.z_bounded ? "bounded" : "OUT OF BOUNDS") + ", " +
                         (o.stopped ? "stopped at " + format_value(o.stop_time) + " s" : "did not stop") +
                         ", max 5-step-average rise " + format_value(o.worst_rise) + ", " +
                         std::to_string(o.steps_completed) + " steps";
    const std::string label = "k=" + format_value(st.k_user) + " d=" + format_value(st.d_user) +
                              " dt=" + format_value(st.dt);
    if (st.expect_pass) {
      r.add_check(label + " stable and at rest", o.passed(), detail);
      if (st.dt <= 0.002 + 1e-12) r.add_check(label + " monotone speed decay", o.monotone, detail);
    } else {
      r.flags.push_back(label + (o.passed() ? ": PASS (informational)" : ": FAIL (expected, informational)"));
      r.add_check(label + " recorded without crashing", true, detail);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

struct ScalingOptions {
  std::vector<int> cells{1, 2, 4, 8, 16};  //!< contact ladder: 20 contacts per cell at rest
  int warmup_steps = 100;
  int timed_steps = 300;
  std::vector<int> env_ladder{1, 2};  //!< envs at a fixed 4-cell scene
  int workers = 1;                    //!< timings are single-threaded by default
  double max_exponent = 1.25;
  double min_r2 = 0.9;
  double max_env_doubling_ratio = 2.5;
};

struct PowerFit {
  double exponent = 0.0;
  double log_coefficient = 0.0;
  double r2 = 0.0;
};

//! Least-squares fit of log y = a + b log x.
inline PowerFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw ConfigError("power-law fit needs >= 2 matching points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double dn = static_cast<double>(n);
  const double b = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
  const double a = (sy - b * sx) / dn;
  const double mean_y = sy / dn;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = a + b * lx[i];
    ss_res += (ly[i] - f) * (ly[i] - f);
    ss_tot += (ly[i] - mean_y) * (ly[i] - mean_y);
  }
  return {b, a, ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0};
}

inline BenchReport bench_scaling(const ScalingOptions& opt = {}) {
  BenchReport r;
  r.id = "scaling";
  r.echo("warmup_steps", opt.warmup_steps);
  r.echo("timed_steps", opt.timed_steps);
  r.echo("workers", opt.workers);
  detail::WorkerScope workers(opt.workers);
  const auto t_start = std::chrono::steady_clock::now();

  Series series{{"cells", "n_envs", "step", "contacts", "solve_ms", "step_ms"}, {}};
  auto measure = [&](int cells, int n_envs) {
    BatchedWorld w = replicate_envs(scaling_scene(cells), static_cast<std::size_t>(n_envs));
    for (int i = 0; i < opt.warmup_steps; ++i) step(w);
    for (int i = 0; i < opt.timed_steps; ++i) {
      const StepStats s = step(w);
      series.add({static_cast<double>(cells), static_cast<double>(n_envs), static_cast<double>(i + 1),
                  static_cast<double>(s.contact_count), 1000.0 * s.seconds.solve, 1000.0 * s.seconds.total()});
    }
  };
  for (int c : opt.cells) measure(c, 1);
  const int env_cells = 4;
  for (int n : opt.env_ladder) {
    if (n == 1 && std::find(opt.cells.begin(), opt.cells.end(), env_cells) != opt.cells.end()) continue;
    measure(env_cells, n);
  }
  r.add_file("scaling.csv", series);

  // Medians per scene size, re-read from the CSV.
  const CsvTable t = parse_csv(r.file("scaling.csv").text);
  auto rows_for = [&](int cells, int n_envs, const std::string& col) {
    std::vector<double> xs;
    const std::size_t cc = t.column("cells"), ce = t.column("n_envs"), cv = t.column(col);
    for (const auto& row : t.rows) {
      if (row[cc] == cells && row[ce] == n_envs) xs.push_back(row[cv]);
    }
    return xs;
  };
  Series medians{{"cells", "n_envs", "median_contacts", "median_solve_ms", "median_step_ms"}, {}};
  std::vector<double> xs, ys;
  for (int c : opt.cells) {
    const double mc = median_of(rows_for(c, 1, "contacts"));
    const double ms = median_of(rows_for(c, 1, "solve_ms"));
    const double mt = median_of(rows_for(c, 1, "step_ms"));
    medians.add({static_cast<double>(c), 1.0, mc, ms, mt});
    xs.push_back(mc);
    ys.push_back(ms);
  }
  std::vector<double> env_contacts, env_solve;
  for (int n : opt.env_ladder) {
    const double mc = median_of(rows_for(env_cells, n, "contacts"));
    const double ms = median_of(rows_for(env_cells, n, "solve_ms"));
    medians.add({static_cast<double>(env_cells), static_cast<double>(n), mc, ms,
                 median_of(rows_for(env_cells, n, "step_ms"))});
    env_contacts.push_back(mc);
    env_solve.push_back(ms);
  }
  r.add_file("scaling_medians.csv", medians);
  for (int c : opt.cells) {
    r.add_metric("solve_ms[cells=" + std::to_string(c) + "]", "scaling.csv", "solve_ms", "cells", c);
  }

  if (xs.size() >= 2) {
    const PowerFit fit = fit_power_law(xs, ys);
    r.echo("fit_exponent", fit.exponent);
    r.echo("fit_r2", fit.r2);
    const double range = *std::max_element(xs.begin(), xs.end()) / *std::min_element(xs.begin(), xs.end());
    r.echo("contact_range", range);
    r.add_check("solve time exponent <= " + format_value(opt.max_exponent) + " with R^2 >= " +
                    format_value(opt.min_r2),
                fit.exponent <= opt.max_exponent && fit.r2 >= opt.min_r2,
                "b=" + format_value(fit.exponent) + " R^2=" + format_value(fit.r2) + " over " +
                    format_value(range) + "x contacts");
  }
  for (std::size_t i = 1; i < opt.env_ladder.size(); ++i) {
    if (opt.env_ladder[i] != 2 * opt.env_ladder[i - 1]) continue;
    const double contact_ratio = env_contacts[i] / env_contacts[i - 1];
    const double time_ratio = env_solve[i] / env_solve[i - 1];
    r.add_check("doubling envs " + std::to_string(opt.env_ladder[i - 1]) + "->" + std::to_string(opt.env_ladder[i]) +
                    ": ~2x contacts, <= " + format_value(opt.max_env_doubling_ratio) + "x solve time",
                std::abs(contact_ratio - 2.0) < 0.1 && time_ratio <= opt.max_env_doubling_ratio,
                "contacts x" + format_value(contact_ratio) + ", solve x" + format_value(time_ratio));
  }
  const double wall = detail::seconds_since(t_start);
  r.add_check("wall clock < 300 s", wall < 300.0, format_value(wall) + " s");
  return r;
}

// ---------------------------------------------------------------------------
// Throughput
// ---------------------------------------------------------------------------

struct ThroughputOptions {
  std::vector<int> n_envs{1, 32, 64, 128, 256};
  int n_steps = 1500;
  int push_every = 50;
  double push_sigma = 0.1;  //!< m/s, per horizontal axis, applied to spheres
  double min_efficiency = 0.9;
  bool check_determinism = true;
};

//! Random pushes: every sphere's horizontal velocity receives N(0, sigma^2) per axis from the
//! env's own stream, so runs are reproducible for any worker count.
inline void push_spheres(BatchedWorld& w, double sigma) {
  const auto bodies = w.bodies();
  parallel::parallel_for(w.n_envs(), [&](std::size_t e) {
    EnvState& env = w.envs[e];
    std::normal_distribution<double> noise(0.0, sigma);
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      if (!bodies[i].is_dynamic() || !std::holds_alternative<Sphere>(bodies[i].geom)) continue;
      env.bodies[i].velocity.x += noise(env.rng);
      env.bodies[i].velocity.y += noise(env.rng);
    }
  });
}

struct ThroughputRun {
  std::vector<double> contacts;  //!< total contacts per step
  std::vector<double> seconds;   //!< wall time per step
};

inline ThroughputRun run_pile(int n_envs, const ThroughputOptions& opt) {
  BatchedWorld w = replicate_envs(pile_scene(), static_cast<std::size_t>(n_envs));
  ThroughputRun run;
  for (int n = 1; n <= opt.n_steps; ++n) {
    if (opt.push_every > 0 && n % opt.push_every == 0) push_spheres(w, opt.push_sigma);
    const StepStats s = step(w);
    run.contacts.push_back(static_cast<double>(s.contact_count));
    run.seconds.push_back(s.seconds.total());
  }
  return run;
}

inline BenchReport bench_throughput(const ThroughputOptions& opt = {}) {
  BenchReport r;
  r.id = "throughput";
  r.echo("n_steps", opt.n_steps);
  r.echo("push_every", opt.push_every);
  r.echo("workers", parallel::worker_count());
  Series series{{"n_envs", "step", "contacts", "step_ms", "single_env_steps_per_s"}, {}};
  Series counts{{"n_envs", "step", "contacts"}, {}};
  for (int n : opt.n_envs) {
    const ThroughputRun run = run_pile(n, opt);
    for (std::size_t i = 0; i < run.seconds.size(); ++i) {
      const double sps = run.seconds[i] > 0 ? n / run.seconds[i] : 0.0;
      series.add({static_cast<double>(n), static_cast<double>(i + 1), run.contacts[i], 1000.0 * run.seconds[i], sps});
      counts.add({static_cast<double>(n), static_cast<double>(i + 1), run.contacts[i]});
    }
  }
  r.add_file("throughput.csv", series);
  r.add_file("throughput_contacts.csv", counts);
  // Throughput is single-environment steps completed per second across the whole batch.
  std::vector<double> rate;
  for (int n : opt.n_envs) {
    rate.push_back(r.add_metric("single_env_steps_per_s[n_envs=" + std::to_string(n) + "]", "throughput.csv",
                                "single_env_steps_per_s", "n_envs", n)
                       .stats.mean);
  }
  for (std::size_t i = 1; i < opt.n_envs.size(); ++i) {
    if (opt.n_envs[i] != 2 * opt.n_envs[i - 1]) continue;
    const std::string label = "throughput(" + std::to_string(opt.n_envs[i]) + ") / throughput(" +
                              std::to_string(opt.n_envs[i - 1]) + ")";
    const double ratio = rate[i] / rate[i - 1];
    if (opt.n_envs[i - 1] == 32) {
      r.add_check(label + " >= " + format_value(opt.min_efficiency), ratio >= opt.min_efficiency,
                  format_value(rate[i]) + " vs " + format_value(rate[i - 1]));
    } else {
      r.echo(label, ratio);
    }
  }
  if (opt.check_determinism && !opt.n_envs.empty()) {
    const int n = opt.n_envs.front();
    const ThroughputRun a = run_pile(n, opt);
    const ThroughputRun b = run_pile(n, opt);
    r.add_check("identical seeds give identical contact-count series", a.contacts == b.contacts,
                std::to_string(n) + " envs, " + std::to_string(opt.n_steps) + " steps");
  }
  return r;
}

// ---------------------------------------------------------------------------
// MPPI push task
// ---------------------------------------------------------------------------

struct PushBenchOptions {
  MppiConfig mppi;
  int seeds = 20;
  int max_control_steps = 500;
  double min_success_rate = 0.8;
};

inline BenchReport bench_mppi_push(const PushBenchOptions& opt = {}) {
  BenchReport r;
  r.id = "mppi_push";
  r.echo("n_samples", opt.mppi.n_samples);
  r.echo("horizon", opt.mppi.horizon);
  r.echo("temperature", opt.mppi.temperature);
  r.echo("noise_sigma", opt.mppi.noise_sigma);
  r.echo("control_dt", opt.mppi.control_dt);
  r.echo("seeds", opt.seeds);
  r.echo("max_control_steps", opt.max_control_steps);
  Series series{{"seed", "step", "plan_cost", "solve_ms", "goal_distance"}, {}};
  Series outcomes{{"seed", "reached", "control_steps", "final_distance"}, {}};
  int reached = 0;
  for (int seed = 0; seed < opt.seeds; ++seed) {
    PushTask task = make_push_task();
    BatchedWorld w = replicate_envs(task.scene, 1);
    MppiConfig cfg = opt.mppi;
    cfg.seed = opt.mppi.seed + static_cast<std::uint64_t>(seed);
    const RecedingHorizonResult res =
        receding_horizon(w, task.actuator, task.cost, cfg, opt.max_control_steps, task.goal);
    for (const ControlStepRecord& s : res.steps) {
      series.add({static_cast<double>(seed), static_cast<double>(s.step), s.plan_cost, s.solve_ms, s.goal_distance});
    }
    outcomes.add({static_cast<double>(seed), res.reached ? 1.0 : 0.0, static_cast<double>(res.steps.size()),
                  res.steps.empty() ? 0.0 : res.steps.back().goal_distance});
    reached += res.reached ? 1 : 0;
  }
  r.add_file("mppi_push.csv", series);
  r.add_file("mppi_push_outcomes.csv", outcomes);
  r.add_metric("solve_ms", "mppi_push.csv", "solve_ms");
  r.add_metric("success", "mppi_push_outcomes.csv", "reached");
  r.add_metric("control_steps", "mppi_push_outcomes.csv", "control_steps");
  const double rate = opt.seeds > 0 ? static_cast<double>(reached) / opt.seeds : 0.0;
  const double median_ms = median_of(column_values(parse_csv(r.file("mppi_push.csv").text), "solve_ms"));
  r.echo("median_solve_ms", median_ms);
  r.add_check("box within goal tolerance for >= " + format_value(100 * opt.min_success_rate) + "% of seeds",
              rate >= opt.min_success_rate,
              std::to_string(reached) + "/" + std::to_string(opt.seeds) + " seeds, median solve " +
                  format_value(median_ms) + " ms");
  return r;
}

}  // namespace comfree::bench
