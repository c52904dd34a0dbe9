#include "pnc/lego.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "pnc/error.hpp"

namespace pnc::lego {

namespace {

// Scene preset geometry, as fractions of the canvas side.
constexpr double kEasyObjectSide = 0.30;
constexpr double kEasyCenterSpacing = 1.5;  // x object diagonal
constexpr double kBigMinCover = 0.75;
constexpr double kBigMaxCover = 0.90;
constexpr double kBigRequiredCover = 0.70;
constexpr double kParallelSideLo = 0.33;
constexpr double kParallelSideHi = 0.37;
constexpr double kParallelGapLo = 0.10;  // x object width
constexpr double kParallelGapHi = 0.30;
constexpr double kCloseSideLo = 0.12;
constexpr double kCloseSideHi = 0.15;
constexpr double kCloseGapHi = 0.09;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<Layout> layout_families(std::size_t k) {
  if (k == 1) return {Layout::vertical};
  if (k == 2) return {Layout::vertical, Layout::horizontal, Layout::diagonal};
  return {Layout::vertical, Layout::horizontal, Layout::diagonal, Layout::l_shape};
}

std::uint64_t saturating_pow(std::uint64_t base, std::uint64_t exp, bool& saturated) {
  std::uint64_t v = 1;
  saturated = false;
  for (std::uint64_t i = 0; i < exp; ++i) {
    if (base != 0 && v > UINT64_MAX / base) {
      saturated = true;
      return UINT64_MAX;
    }
    v *= base;
  }
  return v;
}

std::vector<std::pair<double, double>> layout_anchors(Layout layout, std::size_t k) {
  std::vector<std::pair<double, double>> a(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double t = kPartStep * static_cast<double>(i);
    switch (layout) {
      case Layout::vertical: a[i] = {0.0, t}; break;
      case Layout::horizontal: a[i] = {t, 0.0}; break;
      case Layout::diagonal: a[i] = {t, t}; break;
      case Layout::l_shape:
        a[i] = (i + 1 < k) ? std::pair{0.0, t} : std::pair{kPartStep, kPartStep * static_cast<double>(k >= 2 ? k - 2 : 0)};
        break;
    }
  }
  return a;
}

float sample_bilinear(const Grid2D& g, double u, double v) {
  // u, v in source pixel units; pixel centers sit at i + 0.5.
  const double x = u - 0.5;
  const double y = v - 0.5;
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const auto x0 = static_cast<long>(fx0);
  const auto y0 = static_cast<long>(fy0);
  const double fx = x - fx0;
  const double fy = y - fy0;
  auto at = [&](long r, long c) -> double {
    if (r < 0 || c < 0 || r >= static_cast<long>(g.rows) || c >= static_cast<long>(g.cols)) return 0.0;
    return g(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  const double top = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx;
  const double bottom = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx;
  return static_cast<float>(top * (1 - fy) + bottom * fy);
}

BBox shifted(const BBox& b, double dx, double dy) { return {b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy}; }

double diagonal(const BBox& b) { return std::hypot(b.width(), b.height()); }

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.index(static_cast<std::uint64_t>(hi - lo + 1)));
}

struct Placed {
  const LegoSample* sample = nullptr;
  int x = 0;
  int y = 0;
  BBox box;  // object ink box in canvas space
};

/// Offsets that keep the object's ink box inside the canvas.
bool placement_range(const LegoSample& s, int canvas, int& x_lo, int& x_hi, int& y_lo, int& y_hi) {
  x_lo = static_cast<int>(-s.object_box.x_min);
  x_hi = static_cast<int>(canvas - s.object_box.x_max);
  y_lo = static_cast<int>(-s.object_box.y_min);
  y_hi = static_cast<int>(canvas - s.object_box.y_max);
  return x_lo <= x_hi && y_lo <= y_hi;
}

bool inside_canvas(const BBox& b, int canvas) {
  return b.x_min >= 0 && b.y_min >= 0 && b.x_max <= canvas && b.y_max <= canvas;
}

std::vector<LegoSample> compose_instances(const LegoClassSpec& spec, const DigitStore& store, double scale, int m,
                                          Rng& rng) {
  std::vector<LegoSample> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) out.push_back(compose_object(spec, store, scale, rng));
  return out;
}

std::vector<Placed> place_easy(const LegoClassSpec& spec, const DigitStore& store, int m,
                               const SceneOptions& opt, Rng& rng, std::vector<LegoSample>& samples) {
  const double side = std::max(spec.rule.nominal_width(), spec.rule.nominal_height());
  const double base_scale = kEasyObjectSide * opt.canvas / side;
  for (int backoff = 0; backoff < 6; ++backoff) {
    const double scale = base_scale * std::pow(0.9, backoff);
    samples = compose_instances(spec, store, scale, m, rng);
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
      std::vector<Placed> placed;
      bool ok = true;
      for (const auto& s : samples) {
        int x_lo, x_hi, y_lo, y_hi;
        if (!placement_range(s, opt.canvas, x_lo, x_hi, y_lo, y_hi)) {
          ok = false;
          break;
        }
        bool found = false;
        for (int tries = 0; tries < 50 && !found; ++tries) {
          const int x = uniform_int(rng, x_lo, x_hi);
          const int y = uniform_int(rng, y_lo, y_hi);
          const BBox box = shifted(s.object_box, x, y);
          found = std::all_of(placed.begin(), placed.end(), [&](const Placed& p) {
            const double need = kEasyCenterSpacing * std::max(diagonal(box), diagonal(p.box));
            return std::hypot(box.center_x() - p.box.center_x(), box.center_y() - p.box.center_y()) >= need;
          });
          if (found) placed.push_back({&s, x, y, box});
        }
        if (!found) {
          ok = false;
          break;
        }
      }
      if (ok) return placed;
    }
  }
  throw DataError("easy scene: cannot place " + std::to_string(m) + " instances");
}

std::vector<Placed> place_big(const LegoClassSpec& spec, const DigitStore& store, const SceneOptions& opt,
                              Rng& rng, std::vector<LegoSample>& samples) {
  const double fx = rng.uniform(kBigMinCover, kBigMaxCover);
  const double fy = rng.uniform(kBigMinCover, kBigMaxCover);
  // Measure the ink at scale 1 with a copy of the stream so the final
  // composition reuses the same exemplars.
  Rng probe = rng;
  const LegoSample unit = compose_object(spec, store, 1.0, probe);
  double sx = fx * opt.canvas / unit.object_box.width();
  double sy = fy * opt.canvas / unit.object_box.height();
  const double need = kBigRequiredCover * opt.canvas;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Rng draw = rng;
    LegoSample s = compose_object(spec, store, sx, sy, draw);
    if (s.object_box.width() > opt.canvas || s.object_box.height() > opt.canvas) {
      sx *= 0.97;
      sy *= 0.97;
      continue;
    }
    if (s.object_box.width() < need) sx *= 1.03;
    if (s.object_box.height() < need) sy *= 1.03;
    if (s.object_box.width() < need || s.object_box.height() < need) continue;
    rng = draw;
    samples.clear();
    samples.push_back(std::move(s));
    int x_lo, x_hi, y_lo, y_hi;
    placement_range(samples[0], opt.canvas, x_lo, x_hi, y_lo, y_hi);
    const int x = uniform_int(rng, x_lo, x_hi);
    const int y = uniform_int(rng, y_lo, y_hi);
    return {{&samples[0], x, y, shifted(samples[0].object_box, x, y)}};
  }
  throw DataError("big_o scene: cannot scale object to cover the canvas");
}

/// Packs instances so every one sits at exactly `gap` pixels from a
/// neighbour and no pair is closer than `gap`.
std::vector<Placed> place_packed(const std::vector<LegoSample>& samples, int gap, const SceneOptions& opt, Rng& rng) {
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    std::vector<Placed> placed;
    int x_lo, x_hi, y_lo, y_hi;
    if (!placement_range(samples[0], opt.canvas, x_lo, x_hi, y_lo, y_hi)) break;
    const int x0 = uniform_int(rng, x_lo, x_hi);
    const int y0 = uniform_int(rng, y_lo, y_hi);
    placed.push_back({&samples[0], x0, y0, shifted(samples[0].object_box, x0, y0)});
    bool ok = true;
    for (std::size_t k = 1; k < samples.size() && ok; ++k) {
      const auto& s = samples[k];
      bool found = false;
      for (int tries = 0; tries < 40 && !found; ++tries) {
        const auto& anchor = placed[rng.index(placed.size())].box;
        const auto direction = rng.index(4);
        const double w = s.object_box.width();
        const double h = s.object_box.height();
        double bx = 0, by = 0;  // target top-left of the new ink box
        if (direction < 2) {
          bx = direction == 0 ? anchor.x_max + gap : anchor.x_min - gap - w;
          // Perpendicular offset keeps the y-projections overlapping.
          by = uniform_int(rng, static_cast<int>(anchor.y_min - h + 1), static_cast<int>(anchor.y_max - 1));
        } else {
          by = direction == 2 ? anchor.y_max + gap : anchor.y_min - gap - h;
          bx = uniform_int(rng, static_cast<int>(anchor.x_min - w + 1), static_cast<int>(anchor.x_max - 1));
        }
        const int x = static_cast<int>(bx - s.object_box.x_min);
        const int y = static_cast<int>(by - s.object_box.y_min);
        const BBox box = shifted(s.object_box, x, y);
        if (!inside_canvas(box, opt.canvas)) continue;
        found = std::all_of(placed.begin(), placed.end(),
                            [&](const Placed& p) { return box_gap(box, p.box) >= gap - 1e-9; });
        if (found) placed.push_back({&s, x, y, box});
      }
      ok = found;
    }
    if (ok) return placed;
  }
  throw DataError("packed scene: cannot place " + std::to_string(samples.size()) + " instances");
}

}  // namespace

// ---------------------------------------------------------------- digit store

void DigitStore::add(int digit, Exemplar e) {
  if (digit < 0 || digit > 9) throw std::invalid_argument("digit label out of range");
  by_digit_[static_cast<std::size_t>(digit)].push_back(std::move(e));
}

DigitStore DigitStore::from_tensors(const ByteTensor& images, const ByteTensor& labels) {
  if (images.rank() != 3 || images.dim(1) != kDigitSize || images.dim(2) != kDigitSize) {
    throw DataError("digit images must be [N,28,28]");
  }
  if (labels.rank() != 1 || labels.dim(0) != images.dim(0)) throw DataError("digit labels must be [N]");
  DigitStore store;
  for (std::size_t i = 0; i < images.dim(0); ++i) {
    const auto px = images.slice(i);
    Grid2D raster(kDigitSize, kDigitSize);
    for (std::size_t j = 0; j < px.size(); ++j) raster.values[j] = px[j] / 255.0f;
    const int digit = labels[i];
    if (digit > 9) throw DataError("digit label " + std::to_string(digit) + " out of range");
    store.add(digit, {static_cast<std::uint32_t>(i), std::move(raster)});
  }
  return store;
}

DigitStore DigitStore::load(const std::filesystem::path& dir) {
  const auto images = parse_idx_bytes(read_file_bytes(dir / "images-idx3-ubyte"));
  const auto labels = parse_idx_bytes(read_file_bytes(dir / "labels-idx1-ubyte"));
  return from_tensors(images, labels);
}

std::pair<DigitStore, DigitStore> DigitStore::split(double train_fraction) const {
  if (train_fraction <= 0 || train_fraction >= 1) throw std::invalid_argument("train fraction must be in (0,1)");
  DigitStore train, test;
  for (int d = 0; d < 10; ++d) {
    const auto& all = by_digit_[static_cast<std::size_t>(d)];
    const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(all.size())));
    for (std::size_t i = 0; i < all.size(); ++i) (i < cut ? train : test).add(d, all[i]);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------- rules

std::string to_string(Layout layout) {
  switch (layout) {
    case Layout::vertical: return "vertical";
    case Layout::horizontal: return "horizontal";
    case Layout::diagonal: return "diagonal";
    case Layout::l_shape: return "l_shape";
  }
  return "?";
}

Layout layout_from_string(const std::string& name) {
  for (auto l : {Layout::vertical, Layout::horizontal, Layout::diagonal, Layout::l_shape}) {
    if (to_string(l) == name) return l;
  }
  throw DataError("unknown layout '" + name + "'");
}

double ConstructionRule::nominal_width() const {
  auto [lo, hi] = std::minmax_element(parts.begin(), parts.end(), [](auto& a, auto& b) { return a.dx < b.dx; });
  return (hi->dx - lo->dx + 1.0) * kDigitSize;
}

double ConstructionRule::nominal_height() const {
  auto [lo, hi] = std::minmax_element(parts.begin(), parts.end(), [](auto& a, auto& b) { return a.dy < b.dy; });
  return (hi->dy - lo->dy + 1.0) * kDigitSize;
}

Layout effective_layout(Layout layout, std::size_t k) {
  if (k <= 1) return Layout::vertical;
  if (k == 2 && layout == Layout::l_shape) return Layout::horizontal;
  return layout;
}

std::uint64_t rule_capacity(std::size_t k) {
  bool saturated = false;
  const auto seqs = saturating_pow(10, k, saturated);
  const auto families = static_cast<std::uint64_t>(layout_families(k).size());
  if (saturated || seqs > UINT64_MAX / families) return UINT64_MAX;
  return seqs * families;
}

std::vector<LegoClassSpec> make_ruleset(int num_classes, int k, std::uint64_t seed) {
  if (num_classes < 1 || k < 1) throw std::invalid_argument("make_ruleset: need num_classes >= 1 and K >= 1");
  const auto kk = static_cast<std::size_t>(k);
  const auto capacity = rule_capacity(kk);
  if (static_cast<std::uint64_t>(num_classes) > capacity) {
    throw std::invalid_argument("make_ruleset: " + std::to_string(num_classes) + " classes exceed the " +
                                std::to_string(capacity) + " distinct rules available for K=" + std::to_string(k));
  }
  const auto families = layout_families(kk);
  Rng rng(derive_seed(seed, {fnv1a("ruleset")}));

  // A key is (family index, digit sequence); sequences are base-10 numbers.
  bool unused = false;
  const std::uint64_t seq_count = saturating_pow(10, kk, unused);
  std::vector<std::pair<std::size_t, std::vector<int>>> keys;
  auto decode = [&](std::uint64_t seq) {
    std::vector<int> digits(kk);
    for (std::size_t i = kk; i-- > 0;) {
      digits[i] = static_cast<int>(seq % 10);
      seq /= 10;
    }
    return digits;
  };
  if (capacity <= 200000) {
    std::vector<std::uint64_t> all(capacity);
    for (std::uint64_t i = 0; i < capacity; ++i) all[i] = i;
    for (std::size_t i = 0; i < static_cast<std::size_t>(num_classes); ++i) {
      const auto j = i + rng.index(capacity - i);
      std::swap(all[i], all[j]);
      keys.emplace_back(static_cast<std::size_t>(all[i] / seq_count), decode(all[i] % seq_count));
    }
  } else {
    std::set<std::pair<std::size_t, std::vector<int>>> seen;
    while (keys.size() < static_cast<std::size_t>(num_classes)) {
      std::pair<std::size_t, std::vector<int>> key{rng.index(families.size()), std::vector<int>(kk)};
      for (auto& d : key.second) d = static_cast<int>(rng.index(10));
      if (seen.insert(key).second) keys.push_back(std::move(key));
    }
  }

  std::vector<LegoClassSpec> out;
  for (int c = 0; c < num_classes; ++c) {
    const auto& [family, digits] = keys[static_cast<std::size_t>(c)];
    LegoClassSpec spec;
    spec.class_id = c;
    spec.rule.layout = families[family];
    const auto anchors = layout_anchors(spec.rule.layout, kk);
    for (std::size_t i = 0; i < kk; ++i) {
      const double jx = rng.uniform(-kAnchorJitter, kAnchorJitter);
      const double jy = rng.uniform(-kAnchorJitter, kAnchorJitter);
      spec.rule.parts.push_back({digits[i], anchors[i].first + jx, anchors[i].second + jy});
    }
    double min_x = std::numeric_limits<double>::max(), min_y = min_x;
    for (const auto& p : spec.rule.parts) {
      min_x = std::min(min_x, p.dx);
      min_y = std::min(min_y, p.dy);
    }
    for (auto& p : spec.rule.parts) {
      p.dx -= min_x;
      p.dy -= min_y;
    }
    out.push_back(std::move(spec));
  }
  return out;
}

std::string ruleset_to_json(const std::vector<LegoClassSpec>& ruleset) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& spec : ruleset) {
    nlohmann::ordered_json j;
    j["class_id"] = spec.class_id;
    j["layout"] = to_string(spec.rule.layout);
    j["parts"] = nlohmann::ordered_json::array();
    for (const auto& p : spec.rule.parts) j["parts"].push_back({{"digit", p.digit}, {"dx", p.dx}, {"dy", p.dy}});
    arr.push_back(std::move(j));
  }
  return arr.dump(1) + "\n";
}

std::vector<LegoClassSpec> ruleset_from_json(const std::string& text) {
  std::vector<LegoClassSpec> out;
  try {
    for (const auto& j : nlohmann::json::parse(text)) {
      LegoClassSpec spec;
      spec.class_id = j.at("class_id").get<int>();
      spec.rule.layout = layout_from_string(j.at("layout").get<std::string>());
      for (const auto& p : j.at("parts")) {
        spec.rule.parts.push_back({p.at("digit").get<int>(), p.at("dx").get<double>(), p.at("dy").get<double>()});
      }
      if (spec.rule.parts.empty()) throw DataError("rule without parts");
      out.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ruleset: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------- composition

LegoSample compose_object(const LegoClassSpec& spec, const DigitStore& store, double scale, Rng& rng) {
  return compose_object(spec, store, scale, scale, rng);
}

LegoSample compose_object(const LegoClassSpec& spec, const DigitStore& store, double scale_x, double scale_y,
                          Rng& rng) {
  if (scale_x <= 0 || scale_y <= 0) throw std::invalid_argument("compose_object: scale must be positive");
  const auto& rule = spec.rule;
  if (rule.parts.empty()) throw std::invalid_argument("compose_object: empty rule");
  for (const auto& p : rule.parts) {
    if (p.digit < 0 || p.digit > 9 || store.count(p.digit) == 0) {
      throw DataError("digit store has no exemplar of digit " + std::to_string(p.digit));
    }
  }
  const double pw = kDigitSize * scale_x;
  const double ph = kDigitSize * scale_y;
  double max_ox = 0, max_oy = 0;
  for (const auto& p : rule.parts) {
    max_ox = std::max(max_ox, p.dx * pw);
    max_oy = std::max(max_oy, p.dy * ph);
  }
  LegoSample out;
  out.class_id = spec.class_id;
  out.image = Grid2D(static_cast<std::size_t>(std::ceil(max_oy + ph)), static_cast<std::size_t>(std::ceil(max_ox + pw)));
  const int ss_x = std::max(1, static_cast<int>(std::ceil(1.0 / scale_x)));
  const int ss_y = std::max(1, static_cast<int>(std::ceil(1.0 / scale_y)));

  for (const auto& p : rule.parts) {
    const auto& ex = store.exemplar(p.digit, rng.index(store.count(p.digit)));
    const double ox = p.dx * pw;
    const double oy = p.dy * ph;
    const auto c0 = static_cast<std::size_t>(std::floor(ox));
    const auto r0 = static_cast<std::size_t>(std::floor(oy));
    const auto c1 = std::min(out.image.cols, static_cast<std::size_t>(std::ceil(ox + pw)));
    const auto r1 = std::min(out.image.rows, static_cast<std::size_t>(std::ceil(oy + ph)));
    std::size_t ink_c0 = SIZE_MAX, ink_r0 = SIZE_MAX, ink_c1 = 0, ink_r1 = 0;
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t c = c0; c < c1; ++c) {
        double acc = 0.0;
        for (int sy = 0; sy < ss_y; ++sy) {
          const double qy = static_cast<double>(r) + (sy + 0.5) / ss_y;
          for (int sx = 0; sx < ss_x; ++sx) {
            const double qx = static_cast<double>(c) + (sx + 0.5) / ss_x;
            acc += sample_bilinear(ex.raster, (qx - ox) / scale_x, (qy - oy) / scale_y);
          }
        }
        const auto v = static_cast<float>(acc / (ss_x * ss_y));
        if (v > kInkThreshold) {
          ink_c0 = std::min(ink_c0, c);
          ink_r0 = std::min(ink_r0, r);
          ink_c1 = std::max(ink_c1, c);
          ink_r1 = std::max(ink_r1, r);
        }
        out.image(r, c) = std::max(out.image(r, c), v);
      }
    }
    if (ink_c0 == SIZE_MAX) throw DataError("digit part rendered without ink (scale too small)");
    out.part_boxes.push_back({static_cast<double>(ink_c0), static_cast<double>(ink_r0),
                              static_cast<double>(ink_c1 + 1), static_cast<double>(ink_r1 + 1)});
    out.part_sources.push_back(ex.source_index);
  }
  out.object_box = out.part_boxes.front();
  for (const auto& b : out.part_boxes) out.object_box = box_union(out.object_box, b);
  return out;
}

Grid2D add_background(const Grid2D& image, BackgroundKind kind, double strength, Rng& rng) {
  if (strength < 0 || strength > 1) throw std::invalid_argument("add_background: strength must be in [0,1]");
  if (kind == BackgroundKind::none || strength == 0 || image.empty()) return image;
  const auto rows = image.rows;
  const auto cols = image.cols;
  Grid2D noise(rows, cols);
  for (auto& v : noise.values) v = static_cast<float>(rng.uniform());
  Grid2D tmp(rows, cols);
  for (int pass = 0; pass < 3; ++pass) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (int dr = -1; dr <= 1; ++dr) {
          const auto rr = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(r) + dr, 0, static_cast<long>(rows) - 1));
          for (int dc = -1; dc <= 1; ++dc) {
            const auto cc = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(c) + dc, 0, static_cast<long>(cols) - 1));
            acc += noise(rr, cc);
          }
        }
        tmp(r, c) = static_cast<float>(acc / 9.0);
      }
    }
    std::swap(noise, tmp);
  }
  Grid2D out = image;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = std::max(out.values[i], static_cast<float>(strength * noise.values[i]));
  }
  return out;
}

std::vector<BBox> place_object(Grid2D& canvas, const LegoSample& sample, int x, int y) {
  for (std::size_t r = 0; r < sample.image.rows; ++r) {
    const long cy = y + static_cast<long>(r);
    if (cy < 0 || cy >= static_cast<long>(canvas.rows)) continue;
    for (std::size_t c = 0; c < sample.image.cols; ++c) {
      const long cx = x + static_cast<long>(c);
      if (cx < 0 || cx >= static_cast<long>(canvas.cols)) continue;
      float& dst = canvas(static_cast<std::size_t>(cy), static_cast<std::size_t>(cx));
      dst = std::max(dst, sample.image(r, c));
    }
  }
  std::vector<BBox> boxes;
  for (const auto& b : sample.part_boxes) boxes.push_back(shifted(b, x, y));
  return boxes;
}

std::vector<std::uint8_t> quantize(const Grid2D& image) {
  std::vector<std::uint8_t> out(image.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.values[i], 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

Grid2D image_from_stack(const ByteTensor& stack, std::size_t i) {
  const auto px = stack.slice(i);
  Grid2D g(stack.dim(1), stack.dim(2));
  for (std::size_t j = 0; j < px.size(); ++j) g.values[j] = px[j] / 255.0f;
  return g;
}

// ---------------------------------------------------------------- classification sets

ClassificationSplit gen_classification_split(const std::vector<LegoClassSpec>& ruleset, const DigitStore& pool,
                                             int n_per_class, int canvas, double noise, std::uint64_t seed,
                                             const std::string& id_prefix) {
  if (ruleset.empty()) throw std::invalid_argument("empty ruleset");
  if (n_per_class < 0) throw std::invalid_argument("negative sample count");
  for (const auto& spec : ruleset) {
    if (spec.rule.nominal_width() > canvas || spec.rule.nominal_height() > canvas) {
      throw std::invalid_argument("canvas " + std::to_string(canvas) + " too small for class " +
                                  std::to_string(spec.class_id));
    }
  }
  const std::size_t n = static_cast<std::size_t>(n_per_class) * ruleset.size();
  const auto side = static_cast<std::size_t>(canvas);
  ClassificationSplit split;
  split.images = ByteTensor({n, side, side});
  split.labels.resize(n);
  split.annotations.resize(n);
  const auto prefix_key = fnv1a(id_prefix);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& spec = ruleset[i % ruleset.size()];
    Rng rng(derive_seed(seed, {prefix_key, i}));
    const LegoSample sample = compose_object(spec, pool, 1.0, rng);
    int x_lo, x_hi, y_lo, y_hi;
    if (!placement_range(sample, canvas, x_lo, x_hi, y_lo, y_hi)) {
      throw std::invalid_argument("canvas too small for a composed object");
    }
    const int x = uniform_int(rng, x_lo, x_hi);
    const int y = uniform_int(rng, y_lo, y_hi);
    Grid2D image(side, side);
    place_object(image, sample, x, y);
    image = add_background(image, BackgroundKind::texture, noise, rng);
    const auto bytes = quantize(image);
    std::copy(bytes.begin(), bytes.end(), split.images.slice(i).begin());
    split.labels[i] = spec.class_id;
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%06zu", id_prefix.c_str(), i);
    split.annotations[i] = {id, spec.class_id, 1, {shifted(sample.object_box, x, y)}};
  }
  return split;
}

ClassificationSet gen_classification_set(const std::vector<LegoClassSpec>& ruleset, const DigitStore& store,
                                         const ClassificationOptions& options) {
  const auto [train_pool, test_pool] = store.split(options.train_pool_fraction);
  ClassificationSet set;
  set.train = gen_classification_split(ruleset, train_pool, options.n_train_per_class, options.canvas, options.noise,
                                       options.seed, "train");
  set.test = gen_classification_split(ruleset, test_pool, options.n_test_per_class, options.canvas, options.noise,
                                      options.seed, "test");
  return set;
}

void write_split(const std::filesystem::path& dir, const std::string& prefix, const ClassificationSplit& split,
                 const std::string& meta_json) {
  TensorMap map;
  map.add("images", split.images);
  std::vector<float> labels(split.labels.begin(), split.labels.end());
  const std::size_t n = labels.size();
  map.add("labels", Tensor({n}, std::move(labels)));
  map.add_text("meta", meta_json);
  write_container(dir / (prefix + ".tnsr"), map);
  save_annotations(dir / (prefix + ".jsonl"), split.annotations);
}

ClassificationSplit read_split(const std::filesystem::path& dir, const std::string& prefix) {
  const auto map = read_container(dir / (prefix + ".tnsr"));
  ClassificationSplit split;
  split.images = map.bytes("images");
  const auto& labels = map.real("labels");
  if (split.images.rank() != 3 || labels.size() != split.images.dim(0)) {
    throw DataError(prefix + ".tnsr: images/labels mismatch");
  }
  for (float v : labels.data()) split.labels.push_back(static_cast<int>(v));
  split.annotations = load_annotations(dir / (prefix + ".jsonl"));
  return split;
}

// ---------------------------------------------------------------- scenes

std::string to_string(ScenePreset preset) {
  switch (preset) {
    case ScenePreset::easy: return "easy";
    case ScenePreset::big_o: return "big_o";
    case ScenePreset::parallel: return "parallel";
    case ScenePreset::close_by: return "close_by";
  }
  return "?";
}

ScenePreset preset_from_string(const std::string& name) {
  for (auto p : {ScenePreset::easy, ScenePreset::big_o, ScenePreset::parallel, ScenePreset::close_by}) {
    if (to_string(p) == name) return p;
  }
  throw std::invalid_argument("unknown scene preset '" + name + "'");
}

double box_gap(const BBox& a, const BBox& b) {
  return std::max({b.x_min - a.x_max, a.x_min - b.x_max, b.y_min - a.y_max, a.y_min - b.y_max});
}

Scene gen_scene(const LegoClassSpec& spec, int m, ScenePreset preset, const DigitStore& store,
                const SceneOptions& options, Rng& rng) {
  if (m < 0) throw std::invalid_argument("gen_scene: negative instance count");
  if (preset == ScenePreset::big_o && m > 1) throw std::invalid_argument("big_o scenes hold at most one object");
  const auto side = static_cast<std::size_t>(options.canvas);
  Scene scene;
  scene.class_id = spec.class_id;
  scene.image = Grid2D(side, side);

  std::vector<LegoSample> samples;
  std::vector<Placed> placed;
  if (m > 0) {
    const double nominal = std::max(spec.rule.nominal_width(), spec.rule.nominal_height());
    switch (preset) {
      case ScenePreset::easy:
        placed = place_easy(spec, store, m, options, rng, samples);
        break;
      case ScenePreset::big_o:
        placed = place_big(spec, store, options, rng, samples);
        break;
      case ScenePreset::parallel:
      case ScenePreset::close_by: {
        const bool parallel = preset == ScenePreset::parallel;
        const double frac = parallel ? rng.uniform(kParallelSideLo, kParallelSideHi) : rng.uniform(kCloseSideLo, kCloseSideHi);
        samples = compose_instances(spec, store, frac * options.canvas / nominal, m, rng);
        double width = 0;
        for (const auto& s : samples) width = std::max({width, s.object_box.width(), s.object_box.height()});
        const int gap_lo = parallel ? static_cast<int>(std::ceil(kParallelGapLo * width)) : 0;
        const int gap_hi = static_cast<int>(std::floor((parallel ? kParallelGapHi : kCloseGapHi) * width));
        const int gap = uniform_int(rng, gap_lo, std::max(gap_lo, gap_hi));
        placed = place_packed(samples, gap, options, rng);
        break;
      }
    }
  }
  for (const auto& p : placed) {
    place_object(scene.image, *p.sample, p.x, p.y);
    scene.instances.push_back(p.box);
  }
  scene.image = add_background(scene.image, BackgroundKind::texture, options.noise, rng);
  return scene;
}

SceneSet gen_scene_set(const std::vector<LegoClassSpec>& ruleset, const DigitStore& store,
                       const SceneSetOptions& options) {
  if (ruleset.empty()) throw std::invalid_argument("empty ruleset");
  if (options.min_instances < 0 || options.max_instances < options.min_instances) {
    throw std::invalid_argument("invalid instance range");
  }
  const auto n = static_cast<std::size_t>(options.n);
  const auto side = static_cast<std::size_t>(options.scene.canvas);
  SceneSet set;
  set.images = ByteTensor({n, side, side});
  const int range = options.max_instances - options.min_instances + 1;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(options.seed, {fnv1a("scene"), i}));
    const auto& spec = ruleset[rng.index(ruleset.size())];
    const int m = options.min_instances + static_cast<int>(i % static_cast<std::size_t>(range));
    const Scene scene = gen_scene(spec, m, options.preset, store, options.scene, rng);
    const auto bytes = quantize(scene.image);
    std::copy(bytes.begin(), bytes.end(), set.images.slice(i).begin());
    char id[64];
    std::snprintf(id, sizeof(id), "scene_%06zu", i);
    set.annotations.push_back({id, scene.class_id, static_cast<int>(scene.count()), scene.instances});
  }
  return set;
}

void write_scene_set(const std::filesystem::path& dir, const SceneSet& set, const std::string& meta_json) {
  TensorMap map;
  map.add("images", set.images);
  map.add_text("meta", meta_json);
  write_container(dir / "scenes.tnsr", map);
  save_annotations(dir / "annotations.jsonl", set.annotations);
}

SceneSet read_scene_set(const std::filesystem::path& dir) {
  SceneSet set;
  set.images = read_container(dir / "scenes.tnsr").bytes("images");
  set.annotations = load_annotations(dir / "annotations.jsonl");
  if (set.images.rank() != 3 || set.annotations.size() != set.images.dim(0)) {
    throw DataError(dir.string() + ": scene images and annotations disagree");
  }
  for (const auto& a : set.annotations) {
    check_annotation_bounds(a, static_cast<int>(set.images.dim(2)), static_cast<int>(set.images.dim(1)));
  }
  return set;
}

CombinationCount count_combinations(std::uint64_t n, std::uint64_t k) {
  CombinationCount out;
  out.value = saturating_pow(n, k, out.saturated);
  return out;
}

}  // namespace pnc::lego
