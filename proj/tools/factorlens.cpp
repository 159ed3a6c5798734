// factorlens command-line driver.
//
// Exit codes: 0 success, 2 usage/parameter error, 3 degenerate data,
// 4 I/O or format error, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "factorlens/factorlens.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitFormat = 4;

struct StimuliConfig {
  std::string out;
  std::size_t size = factorlens::stimuli::kDefaultImageSize;
  std::size_t steps = 11;
  std::size_t fg_steps = 5;
  std::size_t bg_steps = 5;
  factorlens::stimuli::RectangleParams rect;
};

struct RunConfig {
  std::optional<std::size_t> threads;
  StimuliConfig stimuli;

  std::string input;
  std::string output;
  std::string extractor;

  double pca_threshold = 0.95;
  bool skip_intrinsic = false;

  bool raw = false;
  std::string factor;
  std::string dims = "1,2";
  std::size_t components = 10;
  std::string csv;
  std::string svg;
  std::string color_by;

  std::string meta;
  std::string query;
  std::string query_meta;
  std::size_t k = 5;
  std::size_t target_dim = 1000;
  bool normalize = false;
  double threshold_deg = 20.0;
};

void emit_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw factorlens::IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

json base_info(const std::string& command) {
  return {{"tool", "factorlens"}, {"version", FACTORLENS_VERSION}, {"command", command}};
}

int run_stimuli(const std::string& kind, const RunConfig& cfg) {
  namespace st = factorlens::stimuli;
  const st::ImageSize size{cfg.stimuli.size, cfg.stimuli.size};
  st::Collection c;
  if (kind == "color-grid") {
    c = st::gen_color_grid(cfg.stimuli.steps, size);
  } else if (kind == "rectangles") {
    auto p = cfg.stimuli.rect;
    p.size = size;
    c = st::gen_rectangles(p);
  } else {
    c = st::gen_center_surround(cfg.stimuli.fg_steps, cfg.stimuli.bg_steps, size);
  }
  const fs::path dir = cfg.stimuli.out.empty() ? fs::path(kind) : fs::path(cfg.stimuli.out);
  const auto manifest = st::write_collection(c, dir);
  json out = base_info("stimuli");
  out["manifest"] = manifest.string();
  out["n_images"] = c.images.size();
  out["recipe"] = c.recipe;
  emit_json(out, "");
  return kExitOk;
}

int run_extract(const RunConfig& cfg) {
  const auto extractor = factorlens::make_extractor(cfg.extractor);
  const auto collection = factorlens::stimuli::read_collection(cfg.input);
  auto set = factorlens::extract_set(collection.images, collection.grid, *extractor, collection.recipe);
  factorlens::save(set, cfg.output);
  json out = base_info("extract");
  out["output"] = cfg.output;
  out["rows"] = set.rows();
  out["dim"] = set.dim();
  out["layer"] = set.layer();
  emit_json(out, "");
  return kExitOk;
}

int run_decompose(const RunConfig& cfg) {
  const auto set = factorlens::load(cfg.input);
  const auto cf = factorlens::center(set);
  const auto report = factorlens::analyze(cf, {cfg.pca_threshold, !cfg.skip_intrinsic});
  json out = factorlens::to_json(report);
  out["tool"] = "factorlens";
  out["version"] = FACTORLENS_VERSION;
  out["config"] = {{"input", cfg.input},
                   {"pca_threshold", cfg.pca_threshold},
                   {"intrinsic_dims", !cfg.skip_intrinsic},
                   {"threads", factorlens::num_threads()}};
  emit_json(out, cfg.output);
  return kExitOk;
}

std::pair<std::size_t, std::size_t> parse_dims(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(s);
    std::size_t used_a = 0, used_b = 0;
    const auto a = std::stoul(s.substr(0, comma), &used_a);
    const auto b = std::stoul(s.substr(comma + 1), &used_b);
    if (used_a != comma || used_b != s.size() - comma - 1) throw std::invalid_argument(s);
    return {a, b};
  } catch (const std::exception&) {
    throw factorlens::ParamError("--dims expects two component numbers like 1,2, got '" + s + "'");
  }
}

double level_key(const factorlens::Factor& f, std::size_t level) {
  const auto& l = f.levels[level];
  return l.value ? *l.value : static_cast<double>(level);
}

int run_embed(const RunConfig& cfg) {
  using factorlens::RowMatrix;
  const auto dims = parse_dims(cfg.dims);
  const auto set = factorlens::load(cfg.input);
  const auto& grid = set.grid();

  RowMatrix data;
  factorlens::Embedding emb;
  std::vector<std::vector<std::string>> labels;
  std::vector<std::string> label_names;
  std::vector<double> color_key;
  std::string source;
  if (cfg.raw) {
    source = "raw";
    data = factorlens::to_matrix(set);
    for (const auto& f : grid.factors()) label_names.push_back(f.name);
    const std::size_t color_factor = cfg.color_by.empty() ? 0 : grid.factor_index(cfg.color_by);
    for (std::size_t i = 0; i < set.rows(); ++i) {
      std::vector<std::string> row;
      for (std::size_t k = 0; k < grid.num_factors(); ++k) row.push_back(grid.factor(k).levels[grid.level_of(i, k)].label);
      labels.push_back(std::move(row));
      color_key.push_back(level_key(grid.factor(color_factor), grid.level_of(i, color_factor)));
    }
  } else {
    source = "factor:" + cfg.factor;
    const auto k = grid.factor_index(cfg.factor);
    if (!cfg.color_by.empty() && cfg.color_by != cfg.factor)
      throw factorlens::ParamError("a factor embedding can only be colored by its own factor");
    data = factorlens::marginal(factorlens::center(set), k);
    label_names.push_back(cfg.factor);
    for (std::size_t t = 0; t < grid.levels(k); ++t) {
      labels.push_back({grid.factor(k).levels[t].label});
      color_key.push_back(level_key(grid.factor(k), t));
    }
  }
  const auto n = static_cast<std::size_t>(data.rows());
  const auto d = static_cast<std::size_t>(data.cols());
  const std::size_t D = std::min({cfg.components, n, d});
  const auto model = factorlens::fit_pca(data, D);
  emb = factorlens::project(model, data);
  emb.label_names = std::move(label_names);
  emb.labels = std::move(labels);
  emb.color_key = std::move(color_key);

  // Validate dims before any file is touched.
  if (dims.first < 1 || dims.first > D || dims.second < 1 || dims.second > D)
    throw factorlens::ParamError("--dims " + cfg.dims + " outside 1.." + std::to_string(D));
  const std::string csv = cfg.csv.empty() ? "embedding.csv" : cfg.csv;
  {
    std::ofstream out(csv);
    if (!out) throw factorlens::IoError("cannot write '" + csv + "'");
    factorlens::export_scatter_csv(emb, dims, out);
  }
  if (!cfg.svg.empty()) {
    std::ofstream out(cfg.svg);
    if (!out) throw factorlens::IoError("cannot write '" + cfg.svg + "'");
    factorlens::export_scatter_svg(emb, dims, out);
  }
  json ratios = json::array();
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) ratios.push_back(model.eigenvalues[i] / model.total_variance);
  json out = base_info("embed");
  out["source"] = source;
  out["points"] = n;
  out["components"] = D;
  out["explained_variance_ratio"] = std::move(ratios);
  out["intrinsic_dim"] = factorlens::intrinsic_dim(model.spectrum, cfg.pca_threshold);
  out["csv"] = csv;
  if (!cfg.svg.empty()) out["svg"] = cfg.svg;
  emit_json(out, "");
  return kExitOk;
}

int run_retrieve(const RunConfig& cfg) {
  const auto index_set = factorlens::load(cfg.input);
  const auto query_set = factorlens::load(cfg.query);
  if (query_set.dim() != index_set.dim())
    throw factorlens::ShapeError("query dimension " + std::to_string(query_set.dim()) + " does not match index dimension " +
                                 std::to_string(index_set.dim()));
  const bool evaluate = !cfg.query_meta.empty();
  auto meta = factorlens::read_metadata_csv(cfg.meta, index_set.rows());
  std::vector<factorlens::ViewMeta> truth;
  if (evaluate) {
    truth = factorlens::read_metadata_csv(cfg.query_meta, query_set.rows());
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (!truth[i].azimuth_deg) throw factorlens::MetaError("query row " + std::to_string(i) + " has no azimuth");
  }
  const auto index = factorlens::build_index(index_set, std::move(meta), {cfg.target_dim, cfg.normalize, evaluate});
  const auto queries = factorlens::to_matrix(query_set);

  json results = json::array();
  std::vector<double> predicted, actual;
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    const factorlens::VectorXd f = queries.row(q).transpose();
    const auto matches = factorlens::query(index, f, cfg.k);
    json list = json::array();
    for (const auto& m : matches) {
      json mj = {{"row", m.row}, {"score", m.score}, {"model_id", m.meta.model_id}};
      mj["azimuth_deg"] = m.meta.azimuth_deg ? json(*m.meta.azimuth_deg) : json(nullptr);
      mj["elevation_deg"] = m.meta.elevation_deg ? json(*m.meta.elevation_deg) : json(nullptr);
      list.push_back(std::move(mj));
    }
    results.push_back({{"query", q}, {"matches", std::move(list)}});
    if (evaluate) {
      predicted.push_back(*matches.front().meta.azimuth_deg);
      actual.push_back(*truth[static_cast<std::size_t>(q)].azimuth_deg);
    }
  }
  json out = base_info("retrieve");
  out["config"] = {{"index", cfg.input},   {"meta", cfg.meta},          {"query", cfg.query},
                   {"k", cfg.k},           {"target_dim", cfg.target_dim}, {"normalize", cfg.normalize},
                   {"threshold_deg", cfg.threshold_deg}};
  out["reduced_dim"] = index.reduced_dim();
  out["results"] = std::move(results);
  if (evaluate) {
    const double acc = factorlens::eval_orientation(predicted, actual, cfg.threshold_deg);
    out["orientation_accuracy"] = acc;
    std::cerr << "orientation accuracy (<" << cfg.threshold_deg << " deg): " << acc << '\n';
  }
  emit_json(out, cfg.output);
  return kExitOk;
}

int run_info(const RunConfig& cfg) {
  const auto set = factorlens::load(cfg.input);
  json out = base_info("info");
  out["rows"] = set.rows();
  out["manifest"] = factorlens::manifest_json(set);
  emit_json(out, cfg.output);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"factorlens: factor decomposition, PCA embeddings and retrieval for feature collections"};
  app.set_version_flag("--version", FACTORLENS_VERSION);
  app.require_subcommand(1);
  RunConfig cfg;
  app.add_option("--threads", cfg.threads, "Worker threads (also FACTORLENS_THREADS)")->check(CLI::PositiveNumber);

  auto* stimuli = app.add_subcommand("stimuli", "Generate a synthetic stimulus collection (PNGs + manifest.json)");
  stimuli->require_subcommand(1);
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", cfg.stimuli.out, "Output directory (default: ./<kind>)");
    sub->add_option("--size", cfg.stimuli.size, "Image width and height in pixels")->capture_default_str();
  };
  auto* color = stimuli->add_subcommand("color-grid", "Constant-color images on an RGB grid");
  color->add_option("--steps", cfg.stimuli.steps, "Levels per channel")->capture_default_str();
  add_common(color);
  auto* rect = stimuli->add_subcommand("rectangles", "Black rectangle on white: position x aspect ratio");
  rect->add_option("--positions", cfg.stimuli.rect.positions_per_axis, "Positions per axis")->capture_default_str();
  rect->add_option("--aspects", cfg.stimuli.rect.n_aspect, "Number of aspect ratios")->capture_default_str();
  rect->add_option("--area", cfg.stimuli.rect.area_fraction, "Rectangle area as a fraction of the image")->capture_default_str();
  rect->add_option("--aspect-min", cfg.stimuli.rect.aspect_min, "Smallest width/height ratio")->capture_default_str();
  rect->add_option("--aspect-max", cfg.stimuli.rect.aspect_max, "Largest width/height ratio")->capture_default_str();
  add_common(rect);
  auto* cs = stimuli->add_subcommand("center-surround", "Centered square color over background color");
  cs->add_option("--fg-steps", cfg.stimuli.fg_steps, "Foreground levels per channel")->capture_default_str();
  cs->add_option("--bg-steps", cfg.stimuli.bg_steps, "Background levels per channel")->capture_default_str();
  add_common(cs);

  auto* extract = app.add_subcommand("extract", "Compute features for a stimulus manifest into a .fset file");
  extract->add_option("manifest", cfg.input, "Stimulus manifest.json")->required()->check(CLI::ExistingFile);
  extract->add_option("--extractor", cfg.extractor, "randconv:<seed> | randconv-unpooled:<seed> | pixels:<side>")->required();
  extract->add_option("--out", cfg.output, "Output .fset path")->required();

  auto* decompose = app.add_subcommand("decompose", "Factor decomposition and relative-variance report");
  decompose->add_option("input", cfg.input, "Input .fset")->required()->check(CLI::ExistingFile);
  decompose->add_option("--out", cfg.output, "Report JSON path (default: stdout)");
  decompose->add_option("--threshold", cfg.pca_threshold, "Explained-variance threshold for intrinsic dimension")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  decompose->add_flag("--no-intrinsic-dim", cfg.skip_intrinsic, "Skip the per-component PCA spectra");

  auto* embed = app.add_subcommand("embed", "PCA embedding of raw features or of a factor's marginal");
  embed->add_option("input", cfg.input, "Input .fset")->required()->check(CLI::ExistingFile);
  auto* raw_flag = embed->add_flag("--raw", cfg.raw, "Embed every feature vector");
  auto* factor_opt = embed->add_option("--factor", cfg.factor, "Embed the marginal of this factor (one point per level)");
  raw_flag->excludes(factor_opt);
  embed->add_option("--dims", cfg.dims, "Components plotted as x,y (1-based)")->capture_default_str();
  embed->add_option("--components", cfg.components, "Components written to the CSV")->capture_default_str()->check(CLI::PositiveNumber);
  embed->add_option("--csv", cfg.csv, "CSV output path (default: embedding.csv)");
  embed->add_option("--svg", cfg.svg, "SVG scatter output path");
  embed->add_option("--color-by", cfg.color_by, "Factor whose level colors the points");
  embed->add_option("--threshold", cfg.pca_threshold, "Explained-variance threshold for intrinsic dimension")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));

  auto* retrieve = app.add_subcommand("retrieve", "Dot-product nearest-neighbor retrieval over PCA-reduced features");
  retrieve->add_option("index", cfg.input, "Indexed .fset")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--meta", cfg.meta, "Index metadata CSV")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--query", cfg.query, "Query .fset")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--query-meta", cfg.query_meta, "Query ground-truth CSV (enables orientation accuracy)")
      ->check(CLI::ExistingFile);
  retrieve->add_option("--k", cfg.k, "Matches per query")->capture_default_str()->check(CLI::PositiveNumber);
  retrieve->add_option("--target-dim", cfg.target_dim, "PCA dimension of the index")->capture_default_str()->check(CLI::PositiveNumber);
  retrieve->add_flag("--normalize", cfg.normalize, "L2-normalize reduced vectors before the dot product");
  retrieve->add_option("--threshold-deg", cfg.threshold_deg, "Orientation success threshold")->capture_default_str();
  retrieve->add_option("--out", cfg.output, "Results JSON path (default: stdout)");

  auto* info = app.add_subcommand("info", "Print the manifest of a .fset file");
  info->add_option("input", cfg.input, "Input .fset")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cfg.threads) factorlens::set_num_threads(*cfg.threads);
    if (*stimuli) {
      for (const auto* sub : {color, rect, cs})
        if (*sub) return run_stimuli(sub->get_name(), cfg);
    }
    if (*extract) return run_extract(cfg);
    if (*decompose) return run_decompose(cfg);
    if (*embed) {
      if (!cfg.raw && cfg.factor.empty()) throw factorlens::ParamError("embed needs --raw or --factor <name>");
      return run_embed(cfg);
    }
    if (*retrieve) return run_retrieve(cfg);
    if (*info) return run_info(cfg);
  } catch (const factorlens::DegenerateError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const factorlens::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const factorlens::MetaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const factorlens::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const factorlens::Error& e) {
    // ParamError, ShapeError, KeyError, IndexError
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
