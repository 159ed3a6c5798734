#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factorlens/error.hpp"
#include "factorlens/factor_grid.hpp"
#include "factorlens/feature_set.hpp"
#include "factorlens/image.hpp"
#include "factorlens/parallel.hpp"
#include "factorlens/png.hpp"

namespace factorlens::stimuli {

inline constexpr std::size_t kDefaultImageSize = 227;

// Images in grid row order, plus the recipe that produced them.
struct Collection {
  FactorGrid grid;
  std::vector<ImageRGB> images;
  nlohmann::json recipe;
};

struct ImageSize {
  std::size_t width = kDefaultImageSize;
  std::size_t height = kDefaultImageSize;
};

// Channel values round(255 * i / (steps - 1)), i = 0..steps-1.
inline std::vector<std::uint8_t> channel_levels(std::size_t steps) {
  if (steps < 2) throw ParamError("color steps must be >= 2, got " + std::to_string(steps));
  std::vector<std::uint8_t> v(steps);
  for (std::size_t i = 0; i < steps; ++i)
    v[i] = static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(i) / static_cast<double>(steps - 1)));
  return v;
}

// steps^3 colors, R outermost and B innermost.
inline std::vector<Rgb> color_cube(std::size_t steps) {
  const auto lv = channel_levels(steps);
  std::vector<Rgb> colors;
  colors.reserve(steps * steps * steps);
  for (auto r : lv)
    for (auto g : lv)
      for (auto b : lv) colors.push_back({r, g, b});
  return colors;
}

inline Factor color_factor(const std::string& name, const std::vector<Rgb>& colors) {
  Factor f{name, {}};
  for (const auto& c : colors)
    f.levels.push_back({std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]), {}, "rgb"});
  return f;
}

inline Collection gen_color_grid(std::size_t steps, ImageSize size = {}) {
  const auto colors = color_cube(steps);
  Collection out{FactorGrid({color_factor("rgb", colors)}), std::vector<ImageRGB>(colors.size()),
                 {{"kind", "color_grid"}, {"steps", steps}, {"width", size.width}, {"height", size.height}}};
  parallel_for(0, colors.size(), 16, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out.images[i] = ImageRGB(size.width, size.height, colors[i]);
  });
  return out;
}

struct RectangleParams {
  std::size_t positions_per_axis = 6;
  std::size_t n_aspect = 12;
  double area_fraction = 0.26 * 0.26;
  double aspect_min = 0.25;
  double aspect_max = 4.0;
  ImageSize size;
};

// Pixel extents of one rasterized rectangle: [x0, x1) x [y0, y1).
struct RectBox {
  std::ptrdiff_t x0, y0, x1, y1;
  std::ptrdiff_t area() const { return (x1 - x0) * (y1 - y0); }
};

// Aspect ratios (width / height) geometrically spaced over [aspect_min, aspect_max].
inline std::vector<double> aspect_ratios(const RectangleParams& p) {
  if (p.n_aspect < 1) throw ParamError("n_aspect must be >= 1");
  if (!(p.aspect_min > 0.0) || !(p.aspect_max >= p.aspect_min)) throw ParamError("invalid aspect range");
  std::vector<double> a(p.n_aspect);
  if (p.n_aspect == 1) {
    a[0] = std::sqrt(p.aspect_min * p.aspect_max);
    return a;
  }
  const double ratio = p.aspect_max / p.aspect_min;
  for (std::size_t j = 0; j < p.n_aspect; ++j)
    a[j] = p.aspect_min * std::pow(ratio, static_cast<double>(j) / static_cast<double>(p.n_aspect - 1));
  return a;
}

// Rectangle layout: one box per (position, aspect) cell in grid row order.
// Centers lie on a uniform grid inset so the widest and tallest rectangles
// stay inside the image.
inline std::vector<RectBox> rectangle_layout(const RectangleParams& p) {
  if (p.positions_per_axis < 1) throw ParamError("positions_per_axis must be >= 1");
  if (!(p.area_fraction > 0.0 && p.area_fraction < 1.0)) throw ParamError("area_fraction must lie in (0, 1)");
  const auto aspects = aspect_ratios(p);
  const double W = static_cast<double>(p.size.width);
  const double H = static_cast<double>(p.size.height);
  std::vector<double> widths, heights;
  for (double a : aspects) {
    widths.push_back(std::sqrt(p.area_fraction * a) * W);
    heights.push_back(std::sqrt(p.area_fraction / a) * H);
  }
  const double max_w = *std::max_element(widths.begin(), widths.end());
  const double max_h = *std::max_element(heights.begin(), heights.end());
  if (max_w > W || max_h > H)
    throw ParamError("largest rectangle (" + std::to_string(max_w) + " x " + std::to_string(max_h) +
                     ") does not fit in the image");
  auto centers = [&](double extent, double max_extent) {
    std::vector<double> c(p.positions_per_axis);
    if (p.positions_per_axis == 1) {
      c[0] = extent / 2.0;
    } else {
      for (std::size_t i = 0; i < p.positions_per_axis; ++i)
        c[i] = max_extent / 2.0 +
               static_cast<double>(i) * (extent - max_extent) / static_cast<double>(p.positions_per_axis - 1);
    }
    return c;
  };
  const auto cx = centers(W, max_w);
  const auto cy = centers(H, max_h);
  std::vector<RectBox> boxes;
  boxes.reserve(p.positions_per_axis * p.positions_per_axis * aspects.size());
  for (double y : cy)
    for (double x : cx)
      for (std::size_t j = 0; j < aspects.size(); ++j) {
        RectBox b{std::lround(x - widths[j] / 2.0), std::lround(y - heights[j] / 2.0),
                  std::lround(x + widths[j] / 2.0), std::lround(y + heights[j] / 2.0)};
        if (b.x1 <= b.x0 || b.y1 <= b.y0) throw ParamError("rectangle rasterizes to zero pixels");
        boxes.push_back(b);
      }
  return boxes;
}

inline Collection gen_rectangles(const RectangleParams& p) {
  const auto boxes = rectangle_layout(p);
  const auto aspects = aspect_ratios(p);
  Factor position{"position", {}};
  const auto n_pos = p.positions_per_axis;
  for (std::size_t iy = 0; iy < n_pos; ++iy)
    for (std::size_t ix = 0; ix < n_pos; ++ix) {
      const auto& b = boxes[(iy * n_pos + ix) * aspects.size()];
      const double cx = 0.5 * static_cast<double>(b.x0 + b.x1);
      const double cy = 0.5 * static_cast<double>(b.y0 + b.y1);
      char buf[64];
      std::snprintf(buf, sizeof buf, "x%zu_y%zu(%.1f,%.1f)", ix, iy, cx, cy);
      position.levels.push_back({buf, {}, "pixels"});
    }
  Factor aspect{"aspect", {}};
  for (double a : aspects) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", a);
    aspect.levels.push_back({buf, a, "unitless"});
  }
  Collection out{FactorGrid({std::move(position), std::move(aspect)}), std::vector<ImageRGB>(boxes.size()),
                 {{"kind", "rectangles"},
                  {"positions_per_axis", p.positions_per_axis},
                  {"n_aspect", p.n_aspect},
                  {"area_fraction", p.area_fraction},
                  {"aspect_min", p.aspect_min},
                  {"aspect_max", p.aspect_max},
                  {"width", p.size.width},
                  {"height", p.size.height}}};
  parallel_for(0, boxes.size(), 8, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      ImageRGB img(p.size.width, p.size.height, Rgb{255, 255, 255});
      img.fill_rect(boxes[i].x0, boxes[i].y0, boxes[i].x1, boxes[i].y1, Rgb{0, 0, 0});
      out.images[i] = std::move(img);
    }
  });
  return out;
}

// Centered square of side round(size/2) per axis.
inline RectBox center_square(ImageSize size) {
  const auto sw = static_cast<std::ptrdiff_t>(std::lround(static_cast<double>(size.width) / 2.0));
  const auto sh = static_cast<std::ptrdiff_t>(std::lround(static_cast<double>(size.height) / 2.0));
  const auto x0 = (static_cast<std::ptrdiff_t>(size.width) - sw) / 2;
  const auto y0 = (static_cast<std::ptrdiff_t>(size.height) - sh) / 2;
  return {x0, y0, x0 + sw, y0 + sh};
}

inline ImageRGB center_surround_image(Rgb fg, Rgb bg, ImageSize size) {
  ImageRGB img(size.width, size.height, bg);
  const auto sq = center_square(size);
  img.fill_rect(sq.x0, sq.y0, sq.x1, sq.y1, fg);
  return img;
}

inline Collection gen_center_surround(std::size_t fg_steps, std::size_t bg_steps, ImageSize size = {}) {
  const auto fg = color_cube(fg_steps);
  const auto bg = color_cube(bg_steps);
  Collection out{FactorGrid({color_factor("fg_rgb", fg), color_factor("bg_rgb", bg)}),
                 std::vector<ImageRGB>(fg.size() * bg.size()),
                 {{"kind", "center_surround"},
                  {"fg_steps", fg_steps},
                  {"bg_steps", bg_steps},
                  {"width", size.width},
                  {"height", size.height}}};
  parallel_for(0, out.images.size(), 16, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out.images[i] = center_surround_image(fg[i / bg.size()], bg[i % bg.size()], size);
  });
  return out;
}

// Writes img_NNNNNN.png files and manifest.json:
//   {recipe, grid, images:[{file, index:[...]}]}
inline std::filesystem::path write_collection(const Collection& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json images = nlohmann::json::array();
  for (std::size_t i = 0; i < c.images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%06zu.png", i);
    images.push_back({{"file", name}, {"index", c.grid.multi_index(i)}});
  }
  parallel_for(0, c.images.size(), 16, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) png::write(c.images[i], dir / images[i]["file"].get<std::string>());
  });
  nlohmann::json manifest = {{"recipe", c.recipe}, {"grid", grid_to_json(c.grid)}, {"images", std::move(images)}};
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << manifest.dump(1) << '\n';
  return path;
}

// Reads a manifest and its images; images are placed by their multi-index,
// so the order of the manifest's image list is irrelevant.
inline Collection read_collection(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", e.what());
  }
  Collection c;
  std::vector<std::pair<std::size_t, std::filesystem::path>> files;
  try {
    c.grid = grid_from_json(j.at("grid"));
    c.recipe = j.value("recipe", nlohmann::json());
    const auto& list = j.at("images");
    if (list.size() != c.grid.size())
      throw ShapeError("manifest lists " + std::to_string(list.size()) + " images, grid has " +
                       std::to_string(c.grid.size()) + " cells");
    std::vector<bool> seen(list.size(), false);
    for (const auto& e : list) {
      const auto idx = e.at("index").get<std::vector<std::size_t>>();
      const auto row = static_cast<std::size_t>(c.grid.row_index(idx));
      if (seen[row]) throw FormatError("images", "duplicate multi-index in manifest");
      seen[row] = true;
      files.emplace_back(row, manifest_path.parent_path() / e.at("file").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", e.what());
  }
  c.images.resize(files.size());
  parallel_for(0, files.size(), 16, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) c.images[files[i].first] = png::read(files[i].second);
  });
  return c;
}

}  // namespace factorlens::stimuli
