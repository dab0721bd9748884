#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lqglab/lqglab.hpp"

using namespace lqglab;

namespace {

struct Globals {
  std::string config;
  std::size_t jobs = 1;
  std::string cache_dir;
  std::string format = "csv";
};

Complex parse_xy(const std::string& s) {
  const auto parts = parse_list("point", s);
  require(parts.size() == 2, "expected a point as x,y");
  return {parts[0], parts[1]};
}

std::ostream& output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  require(file.good(), "cannot open " + path + " for writing");
  return file;
}

// Options shared by verbs that build a measure and a metric from a field file.
struct FieldInputs {
  std::string field;
  double gamma = std::sqrt(8.0 / 3.0);
  std::optional<double> xi;
  std::optional<double> d_gamma;
  double mollify = 0.0;

  void attach(CLI::App* app) {
    app->add_option("--field", field, "field file (LQGF)")->required();
    app->add_option("--gamma", gamma, "LQG parameter in (0, 2)");
    app->add_option("--xi", xi, "LFPP exponent");
    app->add_option("--d-gamma", d_gamma, "dimension d_gamma (xi = gamma / d_gamma)");
    app->add_option("--eps", mollify, "mollification scale (default 2 delta)");
  }

  [[nodiscard]] double resolved_xi() const {
    require(xi.has_value() != d_gamma.has_value(), "supply exactly one of --xi and --d-gamma");
    return xi ? *xi : gamma / *d_gamma;
  }
  [[nodiscard]] double resolved_d() const { return d_gamma ? *d_gamma : gamma / resolved_xi(); }

  struct Built {
    GridField smooth;
    WeightedGrid graph;
    GridMeasure measure;
  };
  [[nodiscard]] Built build() const {
    const GridField raw = io::load(field, io::read_field);
    const double m = mollify > 0.0 ? mollify : 2.0 * raw.spec.delta;
    GridField smooth = heat_kernel_mollify(raw, m);
    WeightedGrid g = lfpp_graph_from_mollified(smooth, resolved_xi(), m);
    GridMeasure mu = gmc_from_mollified(smooth, gamma, m);
    return {std::move(smooth), std::move(g), std::move(mu)};
  }
};

struct RegionInputs {
  std::string regions;
  std::string eps_list;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--regions", regions, "regions.json")->required();
    app->add_option("--eps-list", eps_list, "comma-separated ball radii")->required();
    app->add_option("--out", out, "output file (default stdout)");
  }
};

void emit_counts(const Globals& g, const std::string& out, const ContentRatioTable& table) {
  std::ofstream file;
  std::ostream& os = output(out, file);
  if (g.format == "json") {
    os << io::content_json(table).dump(2) << '\n';
  } else {
    io::write_content_csv(os, table);
  }
  for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';
}

// Packing counts in the same table layout as covers.
ContentRatioTable packing_table(const GridMeasure& mu, const WeightedGrid& graph, double d,
                                const std::vector<Region>& regions, const std::vector<double>& eps) {
  ContentRatioTable t;
  t.eps = eps;
  for (double e : eps) {
    std::vector<double> ratios;
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const CellSet cells = regions[i].rasterize(graph.spec());
      const double mass = measure_of(mu, cells);
      const auto count = maximal_packing(cells, graph, e).count;
      const double rho = mass > 0.0 ? static_cast<double>(count) * std::pow(e, d) / mass : 0.0;
      t.rows.push_back({e, regions[i].label, count, mass, rho});
      ratios.push_back(rho);
    }
    t.cv.push_back(stats::coefficient_of_variation(ratios));
  }
  return t;
}

int run(int argc, char** argv) {
  CLI::App app{"Numerical lab for gamma-LQG fields, measures, metrics and mated-CRT maps"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "flat key = value experiment config");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--cache-dir", g.cache_dir, "field cache directory");
  app.add_option("--format", g.format, "table format")->check(CLI::IsMember({"csv", "json"}));

  // sample-field
  auto* sf = app.add_subcommand("sample-field", "sample a whole-plane GFF or quantum cone");
  std::string kind = "gff";
  std::size_t n = 64;
  double delta = 1.0 / 16.0;
  double gamma = std::sqrt(8.0 / 3.0);
  std::uint64_t seed = 1;
  std::string out;
  sf->add_option("--kind", kind)->check(CLI::IsMember({"gff", "cone"}));
  sf->add_option("--n", n);
  sf->add_option("--delta", delta);
  sf->add_option("--gamma", gamma);
  sf->add_option("--seed", seed);
  sf->add_option("--out", out)->required();

  // gmc
  auto* gm = app.add_subcommand("gmc", "discrete LQG area measure of a field");
  std::string field;
  double eps = 0.0;
  gm->add_option("--field", field)->required();
  gm->add_option("--gamma", gamma);
  gm->add_option("--eps", eps)->required();
  gm->add_option("--out", out)->required();

  // lfpp-dist
  auto* ld = app.add_subcommand("lfpp-dist", "LFPP distances from a source point");
  FieldInputs fi;
  fi.attach(ld);
  std::string src;
  std::string dst;
  bool all = false;
  ld->add_option("--src", src, "x,y")->required();
  auto* dst_opt = ld->add_option("--dst", dst, "x,y");
  ld->add_flag("--all", all, "distances to every cell")->excludes(dst_opt);
  ld->add_option("--out", out);

  // ball
  auto* bl = app.add_subcommand("ball", "metric ball as an LQGS mask");
  FieldInputs fb;
  fb.attach(bl);
  double radius = 0.0;
  bool filled = false;
  std::string center = "0,0";
  bl->add_option("--r", radius)->required();
  bl->add_option("--center", center, "x,y");
  bl->add_flag("--filled", filled);
  bl->add_option("--out", out)->required();

  // cover / pack / dimension / content-ratio
  FieldInputs fc;
  RegionInputs rc;
  auto* cv = app.add_subcommand("cover", "greedy cover counts per region and eps");
  auto* pk = app.add_subcommand("pack", "greedy maximal packing counts per region and eps");
  auto* dm = app.add_subcommand("dimension", "Minkowski dimension fit per region");
  auto* cr = app.add_subcommand("content-ratio", "N_eps eps^d / mu ratios and their CV");
  for (auto* sub : {cv, pk, dm, cr}) {
    fc.attach(sub);
    rc.attach(sub);
  }

  // lr-sample
  auto* lr = app.add_subcommand("lr-sample", "correlated boundary-length Brownian pair");
  double kappa = 6.0;
  double a = 1.0;
  double T = 1.0;
  double dt = 1e-4;
  lr->add_option("--kappa-prime", kappa);
  lr->add_option("--a", a);
  lr->add_option("--T", T);
  lr->add_option("--dt", dt);
  lr->add_option("--seed", seed);
  lr->add_option("--out", out)->required();

  // mated-crt
  auto* mc = app.add_subcommand("mated-crt", "mated-CRT adjacency as an edge list");
  std::string lr_file;
  mc->add_option("--lr", lr_file, "LQGB path file")->required();
  mc->add_option("--eps", eps)->required();
  mc->add_option("--out", out);

  // crt-balls
  auto* cb = app.add_subcommand("crt-balls", "graph-ball growth exponent on a mated-CRT map");
  std::string radii_s;
  std::string centers_s;
  cb->add_option("--lr", lr_file)->required();
  cb->add_option("--eps", eps)->required();
  cb->add_option("--radii", radii_s, "comma-separated integer radii")->required();
  cb->add_option("--centers", centers_s, "comma-separated cell indices (default: 5 spread cells)");

  // run-experiment
  auto* rx = app.add_subcommand("run-experiment", "run a configured experiment");
  std::vector<std::string> sets;
  std::string plot_dir;
  std::string experiment;
  rx->add_option("experiment", experiment, "experiment name (overrides the config)");
  rx->add_option("--set", sets, "key=value override");
  rx->add_option("--plot-dir", plot_dir, "also write plot data files here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*sf) {
    const GridSpec spec(n, delta);
    GridField f = sample_field(kind == "cone" ? FieldKind::QuantumCone : FieldKind::WholePlaneGFF, spec, gamma, seed);
    io::save(out, f, io::write_field);
    if (!f.normalization_note.empty()) std::cerr << f.normalization_note << '\n';
  } else if (*gm) {
    const GridField f = io::load(field, io::read_field);
    io::save(out, gmc_from_field(f, gamma, eps), io::write_measure);
  } else if (*ld) {
    const auto b = fi.build();
    const GridSpec& spec = b.graph.spec();
    const CellIndex s[] = {spec.nearest_cell(parse_xy(src))};
    std::ofstream file;
    std::ostream& os = output(out, file);
    if (!dst.empty()) {
      os << io::fmt(distance_between(b.graph, s[0], spec.nearest_cell(parse_xy(dst)))) << '\n';
    } else {
      const auto d = run_dijkstra(b.graph, s);
      if (g.format == "json") {
        os << nlohmann::json{{"n", spec.n}, {"dist", d.dist}}.dump() << '\n';
      } else {
        os << "x,y,dist\n";
        for (CellIndex c = 0; c < d.dist.size(); ++c) {
          const Complex z = spec.center(c);
          os << io::fmt(z.real()) << ',' << io::fmt(z.imag()) << ',' << io::fmt(d[c]) << '\n';
        }
      }
    }
  } else if (*bl) {
    const auto b = fb.build();
    const CellIndex c = b.graph.spec().nearest_cell(parse_xy(center));
    const CellSet ball = filled ? filled_metric_ball(b.graph, c, radius) : metric_ball(b.graph, c, radius);
    io::save(out, ball, io::write_cellset);
  } else if (*cv || *pk || *dm || *cr) {
    const auto b = fc.build();
    const auto regions = io::load_regions(rc.regions);
    const auto eps_list = parse_list("eps-list", rc.eps_list);
    const double d = fc.resolved_d();
    if (*cv || *cr) {
      const auto table = content_ratio_experiment(b.measure, b.graph, d, regions, eps_list);
      if (*cv) {
        emit_counts(g, rc.out, table);
      } else {
        std::ofstream file;
        std::ostream& os = output(rc.out, file);
        if (g.format == "json") {
          os << io::content_json(table).dump(2) << '\n';
        } else {
          os << "eps,cv\n";
          for (std::size_t i = 0; i < table.eps.size(); ++i) os << io::fmt(table.eps[i]) << ',' << io::fmt(table.cv[i]) << '\n';
        }
        for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';
      }
    } else if (*pk) {
      emit_counts(g, rc.out, packing_table(b.measure, b.graph, d, regions, eps_list));
    } else {
      std::ofstream file;
      std::ostream& os = output(rc.out, file);
      nlohmann::json js = nlohmann::json::array();
      if (g.format == "csv") os << "region,slope,stderr,r2\n";
      for (const auto& r : regions) {
        const auto counts = greedy_cover_counts(r.rasterize(b.graph.spec()), b.graph, eps_list);
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < eps_list.size(); ++i) pts.emplace_back(eps_list[i], static_cast<double>(counts[i]));
        const auto fit = dimension_fit(pts);
        if (g.format == "csv") {
          os << r.label << ',' << io::fmt(fit.slope) << ',' << io::fmt(fit.std_error) << ',' << io::fmt(fit.r2) << '\n';
        } else {
          js.push_back({{"region", r.label}, {"slope", fit.slope}, {"stderr", fit.std_error}, {"r2", fit.r2}});
        }
      }
      if (g.format == "json") os << js.dump(2) << '\n';
    }
  } else if (*lr) {
    io::save(out, sample_lr(kappa, a, T, dt, seed), io::write_lr);
  } else if (*mc) {
    const auto p = io::load(lr_file, io::read_lr);
    const auto graph = mated_crt_graph(p, eps);
    std::ofstream file;
    std::ostream& os = output(out, file);
    os << "i,j\n";
    for (const auto& [i, j] : graph.edges) os << i << ',' << j << '\n';
  } else if (*cb) {
    const auto p = io::load(lr_file, io::read_lr);
    const auto graph = mated_crt_graph(p, eps);
    std::vector<std::size_t> radii;
    for (double r : parse_list("radii", radii_s)) {
      require(r >= 1 && r == std::floor(r), "--radii must be positive integers");
      radii.push_back(static_cast<std::size_t>(r));
    }
    std::vector<std::size_t> centers;
    if (centers_s.empty()) {
      for (std::size_t i = 0; i < 5; ++i) centers.push_back(graph.num_cells * (2 * i + 1) / 10);
    } else {
      for (double c : parse_list("centers", centers_s)) centers.push_back(static_cast<std::size_t>(c));
    }
    const auto res = graph_ball_growth(graph, centers, radii);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    if (g.format == "json") {
      std::cout << nlohmann::json{{"slope", res.fit.slope}, {"stderr", res.fit.std_error}, {"r2", res.fit.r2},
                                  {"centers", res.centers}, {"diameter", res.diameter}}
                       .dump(2)
                << '\n';
    } else {
      std::cout << "slope,stderr,r2,centers\n"
                << io::fmt(res.fit.slope) << ',' << io::fmt(res.fit.std_error) << ',' << io::fmt(res.fit.r2) << ','
                << res.centers.size() << '\n';
    }
  } else if (*rx) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
    if (app.get_option("--jobs")->count() > 0) cfg.parallelism = g.jobs;
    if (!g.cache_dir.empty()) cfg.cache_dir = g.cache_dir;
    if (!experiment.empty()) cfg.experiment = experiment;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      require(eq != std::string::npos, "--set expects key=value");
      apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    const auto rec = run_experiment(cfg);
    for (const auto& w : rec.warnings) std::cerr << "warning: " << w << '\n';
    if (!plot_dir.empty()) emit_plot_data(rec, plot_dir);
    if (g.format == "json") {
      std::cout << record_json(rec).dump(2) << '\n';
    } else {
      std::cout << rows_csv(rec.rows);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  }
}
