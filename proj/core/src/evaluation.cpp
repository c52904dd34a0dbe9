#include "pnc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include <png.h>

#include "pnc/error.hpp"

namespace pnc {

namespace {

constexpr int kEllipseRaster = 256;

double overlap_1d(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

bool inside_closed(double v, double lo, double hi) { return v >= lo && v <= hi; }

double box_containment(const BBox& p, const BBox& box) {
  const double w = p.width(), h = p.height();
  if (w > 0 && h > 0) {
    return overlap_1d(p.x_min, p.x_max, box.x_min, box.x_max) * overlap_1d(p.y_min, p.y_max, box.y_min, box.y_max) /
           (w * h);
  }
  if (w > 0) {
    return inside_closed(p.y_min, box.y_min, box.y_max) ? overlap_1d(p.x_min, p.x_max, box.x_min, box.x_max) / w : 0.0;
  }
  if (h > 0) {
    return inside_closed(p.x_min, box.x_min, box.x_max) ? overlap_1d(p.y_min, p.y_max, box.y_min, box.y_max) / h : 0.0;
  }
  return inside_closed(p.x_min, box.x_min, box.x_max) && inside_closed(p.y_min, box.y_min, box.y_max) ? 1.0 : 0.0;
}

double ellipse_containment(const Ellipse& e, const BBox& box) {
  if (!(e.sx > 0) || !(e.sy > 0)) {
    const double sx = std::max(0.0, e.sx), sy = std::max(0.0, e.sy);
    return box_containment({e.cx - sx, e.cy - sy, e.cx + sx, e.cy + sy}, box);
  }
  std::size_t inside = 0, contained = 0;
  for (int j = 0; j < kEllipseRaster; ++j) {
    const double v = (j + 0.5) * 2.0 / kEllipseRaster - 1.0;
    const double y = e.cy + v * e.sy;
    const bool row_in = inside_closed(y, box.y_min, box.y_max);
    for (int i = 0; i < kEllipseRaster; ++i) {
      const double u = (i + 0.5) * 2.0 / kEllipseRaster - 1.0;
      if (u * u + v * v > 1.0) continue;
      ++inside;
      if (row_in && inside_closed(e.cx + u * e.sx, box.x_min, box.x_max)) ++contained;
    }
  }
  return static_cast<double>(contained) / static_cast<double>(inside);
}

std::tuple<int, double, double, double, double> geometry_key(const Pointer& p) {
  if (const auto* b = std::get_if<BBox>(&p)) return {0, b->x_min, b->y_min, b->x_max, b->y_max};
  const auto& e = std::get<Ellipse>(p);
  return {1, e.cx, e.cy, e.sx, e.sy};
}

std::string pct(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.0f", *v);
  return buf;
}

std::string frac(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  std::string s(buf);
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  return s;
}

std::string overlap_str(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", r);
  return buf;
}

std::map<std::string, const SceneAnnotation*> index_truth(const std::vector<PncOutput>& preds,
                                                          const std::vector<SceneAnnotation>& truth) {
  std::map<std::string, const SceneAnnotation*> by_id;
  for (const auto& a : truth) {
    if (!by_id.emplace(a.image_id, &a).second) throw DataError("duplicate annotation id " + a.image_id);
  }
  std::set<std::string> seen;
  for (const auto& p : preds) {
    if (!by_id.count(p.image_id)) throw DataError("prediction for unknown image " + p.image_id);
    if (!seen.insert(p.image_id).second) throw DataError("duplicate prediction for " + p.image_id);
  }
  if (seen.size() != by_id.size()) throw DataError("predictions and annotations cover different images");
  return by_id;
}

std::string text_table(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      line += row[c] + std::string(width[c] - row[c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

void set_px(RgbImage& img, int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  auto* p = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

void png_append(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

}  // namespace

std::optional<double> CountReport::accuracy(int label) const {
  const auto i = static_cast<std::size_t>(label);
  if (i >= totals.size() || totals[i] == 0) return std::nullopt;
  return static_cast<double>(correct[i]) / static_cast<double>(totals[i]);
}

std::optional<double> CountReport::mean_accuracy() const {
  double sum = 0;
  int n = 0;
  for (int l = 0; l <= c_max; ++l) {
    if (const auto a = accuracy(l)) {
      sum += *a;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

double CountReport::overall_accuracy() const {
  std::size_t t = 0, c = 0;
  for (std::size_t i = 0; i < totals.size(); ++i) {
    t += totals[i];
    c += correct[i];
  }
  return t ? static_cast<double>(c) / static_cast<double>(t) : 0.0;
}

CountReport count_accuracy(const std::vector<PncOutput>& predictions, const std::vector<SceneAnnotation>& truth,
                           int c_max) {
  const auto by_id = index_truth(predictions, truth);
  CountReport r;
  r.c_max = c_max;
  const auto n = static_cast<std::size_t>(c_max) + 1;
  r.totals.assign(n, 0);
  r.correct.assign(n, 0);
  r.confusion.assign(n, std::vector<std::size_t>(n, 0));
  for (const auto& p : predictions) {
    const auto t = static_cast<std::size_t>(saturate_count(by_id.at(p.image_id)->count, c_max).value);
    const auto q = static_cast<std::size_t>(p.count_label(c_max).value);
    ++r.totals[t];
    ++r.confusion[t][q];
    if (t == q) ++r.correct[t];
  }
  return r;
}

double containment_ratio(const Pointer& pointer, const BBox& box) {
  if (const auto* b = std::get_if<BBox>(&pointer)) return box_containment(*b, box);
  return ellipse_containment(std::get<Ellipse>(pointer), box);
}

std::vector<std::pair<std::size_t, std::size_t>> match_pointers(const std::vector<Pointer>& pointers,
                                                                 const std::vector<BBox>& boxes, double ratio) {
  std::vector<bool> used(pointers.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t g = 0; g < boxes.size(); ++g) {
    long best = -1;
    double best_score = -1;
    for (std::size_t p = 0; p < pointers.size(); ++p) {
      if (used[p]) continue;
      const double s = containment_ratio(pointers[p], boxes[g]);
      if (!(s > ratio)) continue;
      const bool better = s > best_score ||
                          (s == best_score && geometry_key(pointers[p]) < geometry_key(pointers[static_cast<std::size_t>(best)]));
      if (better) {
        best = static_cast<long>(p);
        best_score = s;
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      out.emplace_back(g, static_cast<std::size_t>(best));
    }
  }
  return out;
}

std::optional<double> PointingReport::accuracy(std::size_t ratio_index, std::size_t bucket) const {
  const auto t = totals.at(ratio_index).at(bucket);
  if (t == 0) return std::nullopt;
  return static_cast<double>(hits[ratio_index][bucket]) / static_cast<double>(t);
}

std::string PointingReport::bucket_name(std::size_t bucket) {
  return bucket + 1 < kBuckets ? std::to_string(bucket + 1) : std::to_string(kBuckets) + "+";
}

PointingReport pointing_accuracy(const std::vector<PncOutput>& outputs, const std::vector<SceneAnnotation>& truth,
                                 const std::vector<double>& ratios, int c_max) {
  const auto by_id = index_truth(outputs, truth);
  PointingReport r;
  r.ratios = ratios;
  r.hits.assign(ratios.size(), {});
  r.totals.assign(ratios.size(), {});
  for (const auto& o : outputs) {
    const auto& a = *by_id.at(o.image_id);
    if (a.count == 0 || o.count_label(c_max) != saturate_count(a.count, c_max)) continue;
    const auto bucket = std::min<std::size_t>(static_cast<std::size_t>(a.count), PointingReport::kBuckets) - 1;
    for (std::size_t k = 0; k < ratios.size(); ++k) {
      r.totals[k][bucket] += a.boxes.size();
      r.hits[k][bucket] += match_pointers(o.pointers, a.boxes, ratios[k]).size();
    }
  }
  return r;
}

CountTableRow count_table_row(const std::string& method, const CountReport& report) {
  CountTableRow row;
  row.method = method;
  for (int l = 0; l <= std::min(report.c_max, 4); ++l) {
    if (const auto a = report.accuracy(l)) row.percent[static_cast<std::size_t>(l)] = 100.0 * *a;
  }
  if (const auto m = report.mean_accuracy()) row.percent[5] = 100.0 * *m;
  return row;
}

std::vector<PointingTableRow> pointing_table_rows(const std::string& method, const PointingReport& report) {
  std::vector<PointingTableRow> rows;
  for (std::size_t k = 0; k < report.ratios.size(); ++k) {
    PointingTableRow row;
    row.overlap = report.ratios[k];
    row.method = method;
    for (std::size_t b = 0; b < 3; ++b) row.accuracy[b] = report.accuracy(k, b);
    rows.push_back(row);
  }
  return rows;
}

std::string format_count_table_csv(const std::vector<CountTableRow>& rows) {
  std::string out = "Methods,0,1,2,3,4+,mean(%)\n";
  for (const auto& r : rows) {
    out += r.method;
    for (const auto& v : r.percent) out += "," + pct(v);
    out += "\n";
  }
  return out;
}

std::string format_pointing_table_csv(const std::vector<PointingTableRow>& rows) {
  std::string out = "Overlap,Methods,1,2,3\n";
  for (const auto& r : rows) {
    out += overlap_str(r.overlap) + "," + r.method;
    for (const auto& v : r.accuracy) out += "," + frac(v);
    out += "\n";
  }
  return out;
}

std::string format_count_table_text(const std::vector<CountTableRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"Methods", "0", "1", "2", "3", "4+", "mean(%)"}};
  for (const auto& r : rows) {
    std::vector<std::string> line{r.method};
    for (const auto& v : r.percent) line.push_back(pct(v));
    cells.push_back(std::move(line));
  }
  return text_table(cells);
}

std::string format_pointing_table_text(const std::vector<PointingTableRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"Overlap", "Methods", "1", "2", "3"}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    // Like the printed table, the overlap is shown once per block.
    const bool first = i == 0 || rows[i - 1].overlap != r.overlap;
    std::vector<std::string> line{first ? overlap_str(r.overlap) : "", r.method};
    for (const auto& v : r.accuracy) line.push_back(frac(v));
    cells.push_back(std::move(line));
  }
  return text_table(cells);
}

std::vector<std::pair<int, int>> ellipse_outline(const Ellipse& e, int w, int h) {
  const double r = std::max({e.sx, e.sy, 0.5});
  const int steps = std::max(64, static_cast<int>(std::ceil(2 * M_PI * r * 4)));
  std::set<std::pair<int, int>> px;
  for (int s = 0; s < steps; ++s) {
    const double t = 2 * M_PI * s / steps;
    const int x = static_cast<int>(std::floor(e.cx + e.sx * std::cos(t)));
    const int y = static_cast<int>(std::floor(e.cy + e.sy * std::sin(t)));
    if (x >= 0 && y >= 0 && x < w && y < h) px.emplace(x, y);
  }
  return {px.begin(), px.end()};
}

RgbImage render_overlay(const Grid2D& image, const Heatmap& heatmap, const std::vector<Pointer>& pointers) {
  const int w = static_cast<int>(image.cols), h = static_cast<int>(image.rows);
  constexpr int kGap = 2;
  RgbImage out;
  out.width = 3 * w + 2 * kGap;
  out.height = h;
  out.pixels.assign(static_cast<std::size_t>(out.width) * h * 3, 0);
  float heat_max = 0;
  for (float v : heatmap.grid.values) heat_max = std::max(heat_max, v);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(image(y, x), 0.0f, 1.0f) * 255.0f));
      set_px(out, x, y, g, g, g);
      set_px(out, 2 * (w + kGap) + x, y, g, g, g);
      double t = 0;
      if (heat_max > 0 && !heatmap.grid.empty()) {
        const auto c = std::min(heatmap.grid.cols - 1, static_cast<std::size_t>((x + 0.5) / heatmap.scale_x));
        const auto r = std::min(heatmap.grid.rows - 1, static_cast<std::size_t>((y + 0.5) / heatmap.scale_y));
        t = heatmap.grid(r, c) / heat_max;
      }
      auto ch = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
      set_px(out, w + kGap + x, y, ch(3 * t), ch(3 * t - 1), ch(3 * t - 2));
    }
  }
  const int ox = 2 * (w + kGap);
  for (const auto& p : pointers) {
    if (const auto* b = std::get_if<BBox>(&p)) {
      const int x0 = static_cast<int>(std::floor(b->x_min)), y0 = static_cast<int>(std::floor(b->y_min));
      const int x1 = std::max(x0, static_cast<int>(std::ceil(b->x_max)) - 1);
      const int y1 = std::max(y0, static_cast<int>(std::ceil(b->y_max)) - 1);
      for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) {
        if (y0 >= 0 && y0 < h) set_px(out, ox + x, y0, 0, 255, 0);
        if (y1 >= 0 && y1 < h) set_px(out, ox + x, y1, 0, 255, 0);
      }
      for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y) {
        if (x0 >= 0 && x0 < w) set_px(out, ox + x0, y, 0, 255, 0);
        if (x1 >= 0 && x1 < w) set_px(out, ox + x1, y, 0, 255, 0);
      }
    } else {
      for (const auto& [x, y] : ellipse_outline(std::get<Ellipse>(p), w, h)) set_px(out, ox + x, y, 255, 0, 0);
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0) throw std::invalid_argument("encode_png: empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png: cannot create info");
  }
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png: encoding failed");
  }
  png_set_write_fn(png, &out, png_append, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3);
  }
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) { write_file_bytes(path, encode_png(image)); }

}  // namespace pnc
