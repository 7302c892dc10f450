// Copyright 2026 The EGT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "egt/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "egt/errors.hpp"

namespace egt::data {

std::vector<int> LabeledImageSet::classes() const {
  std::vector<int> out;
  out.reserve(class_index.size());
  for (const auto& [c, idx] : class_index) out.push_back(c);
  return out;
}

void LabeledImageSet::validate() const {
  if (images.size() != labels.size()) {
    throw DataError("image set '" + domain_tag + "': " +
                    std::to_string(images.size()) + " images but " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != image_shape) {
      throw DataError("image set '" + domain_tag + "': image " +
                      std::to_string(i) + " has shape " +
                      shape_to_string(images[i].shape()) + ", expected " +
                      shape_to_string(image_shape));
    }
  }
  std::size_t indexed = 0;
  for (const auto& [c, idx] : class_index) {
    if (idx.empty()) {
      throw DataError("image set '" + domain_tag + "': class " +
                      std::to_string(c) + " has no images");
    }
    for (std::size_t i : idx) {
      if (i >= labels.size() || labels[i] != c) {
        throw DataError("image set '" + domain_tag +
                        "': class index disagrees with labels");
      }
    }
    indexed += idx.size();
  }
  if (indexed != labels.size()) {
    throw DataError("image set '" + domain_tag + "': class index is incomplete");
  }
}

LabeledImageSet LabeledImageSet::select_classes(std::span<const int> keep) const {
  const std::set<int> wanted(keep.begin(), keep.end());
  std::vector<Tensor> imgs;
  std::vector<int> labs;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (wanted.count(labels[i])) {
      imgs.push_back(images[i]);
      labs.push_back(labels[i]);
    }
  }
  return make_image_set(domain_tag, image_shape, std::move(imgs), std::move(labs));
}

LabeledImageSet make_image_set(std::string domain_tag, Shape image_shape,
                               std::vector<Tensor> images,
                               std::vector<int> labels) {
  LabeledImageSet set;
  set.domain_tag = std::move(domain_tag);
  set.image_shape = std::move(image_shape);
  set.images = std::move(images);
  set.labels = std::move(labels);
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    set.class_index[set.labels[i]].push_back(i);
  }
  set.validate();
  return set;
}

Episode sample_episode(const LabeledImageSet& set, std::size_t way,
                       std::size_t shot, std::size_t queries, Rng& rng) {
  if (way < 2 || shot == 0) {
    throw ContractError("episode needs way >= 2 and shot >= 1");
  }
  const std::size_t per_class_queries = (queries + way - 1) / way;
  std::vector<int> eligible;
  for (const auto& [c, idx] : set.class_index) {
    if (idx.size() >= shot + per_class_queries) eligible.push_back(c);
  }
  if (eligible.size() < way) {
    throw DataError("set '" + set.domain_tag + "' has " +
                    std::to_string(eligible.size()) + " classes with at least " +
                    std::to_string(shot + per_class_queries) +
                    " images; a " + std::to_string(way) + "-way " +
                    std::to_string(shot) + "-shot episode with " +
                    std::to_string(queries) + " queries needs " +
                    std::to_string(way));
  }
  // Partial Fisher-Yates: the first `way` entries become the episode classes.
  for (std::size_t i = 0; i < way; ++i) {
    std::swap(eligible[i], eligible[i + rng.uniform_index(eligible.size() - i)]);
  }
  std::vector<std::size_t> query_counts(way, queries / way);
  std::vector<std::size_t> order(way);
  for (std::size_t i = 0; i < way; ++i) order[i] = i;
  for (std::size_t i = 0; i < queries % way; ++i) {
    std::swap(order[i], order[i + rng.uniform_index(way - i)]);
    ++query_counts[order[i]];
  }

  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.classes.assign(eligible.begin(), eligible.begin() + static_cast<long>(way));
  for (std::size_t k = 0; k < way; ++k) {
    std::vector<std::size_t> pool = set.class_index.at(ep.classes[k]);
    const std::size_t need = shot + query_counts[k];
    for (std::size_t i = 0; i < need; ++i) {
      std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
    }
    for (std::size_t i = 0; i < need; ++i) {
      const std::size_t id = pool[i];
      if (i < shot) {
        ep.support_images.push_back(set.images[id]);
        ep.support_labels.push_back(static_cast<int>(k));
        ep.support_ids.push_back(id);
      } else {
        ep.query_images.push_back(set.images[id]);
        ep.query_labels.push_back(static_cast<int>(k));
        ep.query_ids.push_back(id);
      }
    }
  }
  return ep;
}

// ---------------------------------------------------------------------------
// Synthetic domains

namespace {

using Rgb = std::array<double, 3>;

enum class Primitive { kDisk, kSquare, kTriangle, kRing, kCross, kHBar, kVBar, kDiamond };
constexpr int kPrimitiveKinds = 8;

struct PrimitiveRecipe {
  Primitive kind;
  double cx, cy;  // fraction of width / height
  double radius;  // fraction of min(H, W)
};

enum class Texture { kFlat, kStripes, kChecker, kGradient, kWaves };

struct DomainStyle {
  Texture texture;
  Rgb background0, background1;
  std::vector<Rgb> palette;
  double stroke;  // 0 = filled, otherwise outline width in pixels
  double noise;
  double frequency;
};

// Signed distance in units of the primitive radius; <= 0 inside.
double primitive_sdf(Primitive kind, double dx, double dy) {
  const double ax = std::abs(dx);
  const double ay = std::abs(dy);
  switch (kind) {
    case Primitive::kDisk: return std::hypot(dx, dy) - 1.0;
    case Primitive::kSquare: return std::max(ax, ay) - 0.85;
    case Primitive::kDiamond: return ax + ay - 1.0;
    case Primitive::kRing: return std::abs(std::hypot(dx, dy) - 0.75) - 0.25;
    case Primitive::kHBar: return std::max(ax, ay / 0.3) - 1.0;
    case Primitive::kVBar: return std::max(ax / 0.3, ay) - 1.0;
    case Primitive::kCross:
      return std::min(std::max(ax, ay / 0.3), std::max(ax / 0.3, ay)) - 1.0;
    case Primitive::kTriangle: {
      // apex (0,-1), base at y = 0.8 from x = -0.9 to 0.9
      const double base = dy - 0.8;
      const double side = (1.8 * ax + 0.9 * dy - 0.9) / std::hypot(1.8, 0.9);
      return std::max(base, side);
    }
  }
  return 1.0;
}

double texture_value(const DomainStyle& style, double x, double y,
                     double width, double height) {
  const double f = style.frequency;
  switch (style.texture) {
    case Texture::kFlat: return 0.0;
    case Texture::kStripes: return std::fmod(std::floor((x + y) / f), 2.0);
    case Texture::kChecker:
      return std::fmod(std::floor(x / f) + std::floor(y / f), 2.0);
    case Texture::kGradient: return std::clamp(y / height, 0.0, 1.0);
    case Texture::kWaves:
      return 0.5 + 0.5 * std::sin(x / f * 1.7) * std::cos(y / f * 1.3 + x / width);
  }
  return 0.0;
}

Rgb jitter(Rgb c, double amount, Rng& rng) {
  for (double& v : c) v = std::clamp(v + rng.uniform(-amount, amount), 0.0, 1.0);
  return c;
}

DomainStyle make_style(std::size_t d, Rng& rng) {
  struct Preset {
    Texture texture;
    Rgb bg0, bg1;
    std::array<Rgb, 4> palette;
    double stroke, noise, frequency;
  };
  static const std::array<Preset, 6> presets{{
      {Texture::kFlat, {0.12, 0.12, 0.28}, {0.12, 0.12, 0.28},
       {{{0.95, 0.85, 0.3}, {0.95, 0.55, 0.2}, {0.9, 0.9, 0.9}, {0.8, 0.95, 0.5}}},
       0.0, 0.03, 4.0},
      {Texture::kStripes, {0.88, 0.82, 0.66}, {0.75, 0.7, 0.55},
       {{{0.1, 0.2, 0.5}, {0.1, 0.4, 0.2}, {0.35, 0.2, 0.1}, {0.2, 0.2, 0.2}}},
       2.0, 0.06, 3.0},
      {Texture::kChecker, {0.3, 0.55, 0.3}, {0.2, 0.45, 0.25},
       {{{0.9, 0.2, 0.3}, {0.85, 0.3, 0.8}, {1.0, 0.6, 0.6}, {0.95, 0.95, 0.3}}},
       0.0, 0.05, 4.0},
      {Texture::kGradient, {0.55, 0.25, 0.15}, {0.3, 0.1, 0.05},
       {{{0.3, 0.9, 0.95}, {0.6, 0.95, 1.0}, {0.9, 0.95, 0.95}, {0.2, 0.7, 0.9}}},
       3.0, 0.04, 1.0},
      {Texture::kWaves, {0.5, 0.5, 0.5}, {0.65, 0.65, 0.65},
       {{{0.05, 0.05, 0.05}, {0.9, 0.1, 0.1}, {0.1, 0.1, 0.9}, {0.95, 0.95, 0.95}}},
       0.0, 0.08, 2.0},
      {Texture::kStripes, {0.45, 0.2, 0.55}, {0.35, 0.15, 0.45},
       {{{0.7, 1.0, 0.4}, {1.0, 0.8, 0.2}, {0.5, 1.0, 0.8}, {1.0, 1.0, 1.0}}},
       1.0, 0.05, 5.0},
  }};
  DomainStyle style;
  if (d < presets.size()) {
    const Preset& p = presets[d];
    style.texture = p.texture;
    style.background0 = jitter(p.bg0, 0.04, rng);
    style.background1 = jitter(p.bg1, 0.04, rng);
    style.palette.assign(p.palette.begin(), p.palette.end());
    for (Rgb& c : style.palette) c = jitter(c, 0.05, rng);
    style.stroke = p.stroke;
    style.noise = p.noise;
    style.frequency = p.frequency;
  } else {
    style.texture = static_cast<Texture>(rng.uniform_index(5));
    style.background0 = {rng.uniform(), rng.uniform(), rng.uniform()};
    style.background1 = jitter(style.background0, 0.15, rng);
    for (int i = 0; i < 4; ++i) {
      style.palette.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    style.stroke = static_cast<double>(rng.uniform_index(4));
    style.noise = rng.uniform(0.02, 0.08);
    style.frequency = rng.uniform(2.0, 5.0);
  }
  return style;
}

std::vector<PrimitiveRecipe> make_recipe(std::size_t max_primitives, Rng& rng) {
  const std::size_t n = 1 + rng.uniform_index(max_primitives);
  std::vector<PrimitiveRecipe> recipe;
  for (std::size_t i = 0; i < n; ++i) {
    PrimitiveRecipe p;
    p.kind = static_cast<Primitive>(rng.uniform_index(kPrimitiveKinds));
    p.cx = rng.uniform(0.25, 0.75);
    p.cy = rng.uniform(0.25, 0.75);
    p.radius = rng.uniform(0.12, 0.26);
    recipe.push_back(p);
  }
  return recipe;
}

Tensor render(const GeneratorSpec& spec, const std::vector<PrimitiveRecipe>& recipe,
              const DomainStyle& style, Rng& rng) {
  const std::size_t channels = spec.image_shape[0];
  const std::size_t h = spec.image_shape[1];
  const std::size_t w = spec.image_shape[2];
  const double side = static_cast<double>(std::min(h, w));

  struct Placed {
    Primitive kind;
    double cx, cy, r;
    Rgb color;
  };
  std::vector<Placed> placed;
  for (const PrimitiveRecipe& p : recipe) {
    Placed q;
    q.kind = p.kind;
    q.cx = p.cx * static_cast<double>(w) +
           rng.uniform(-spec.position_jitter, spec.position_jitter);
    q.cy = p.cy * static_cast<double>(h) +
           rng.uniform(-spec.position_jitter, spec.position_jitter);
    q.r = p.radius * side * (1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter));
    q.color = style.palette[rng.uniform_index(spec.palette_size)];
    placed.push_back(q);
  }
  const double phase_x = rng.uniform(0.0, 2.0 * spec.position_jitter);
  const double phase_y = rng.uniform(0.0, 2.0 * spec.position_jitter);

  Tensor img({channels, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      const double t = texture_value(style, px + phase_x, py + phase_y,
                                     static_cast<double>(w), static_cast<double>(h));
      Rgb c;
      for (int k = 0; k < 3; ++k) {
        c[k] = style.background0[k] * (1.0 - t) + style.background1[k] * t;
      }
      for (const Placed& q : placed) {
        const double d = primitive_sdf(q.kind, (px - q.cx) / q.r, (py - q.cy) / q.r);
        const bool on = style.stroke == 0.0 ? d <= 0.0
                                            : std::abs(d * q.r) <= style.stroke / 2.0;
        if (on) c = q.color;
      }
      if (channels == 1) {
        const double g = (c[0] + c[1] + c[2]) / 3.0 + style.noise * rng.normal();
        img[y * w + x] = static_cast<float>(std::clamp(g, 0.0, 1.0));
      } else {
        for (std::size_t k = 0; k < 3; ++k) {
          const double v = c[k] + style.noise * rng.normal();
          img[(k * h + y) * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return img;
}

}  // namespace

void GeneratorSpec::validate() const {
  if (domains == 0) throw DataError("generator: at least one domain required");
  if (classes == 0 || images_per_class == 0) {
    throw DataError("generator: classes and images per class must be positive");
  }
  if (image_shape.size() != 3 || (image_shape[0] != 1 && image_shape[0] != 3) ||
      image_shape[1] < 8 || image_shape[2] < 8) {
    throw DataError("generator: image shape must be [1|3, >=8, >=8], got " +
                    shape_to_string(image_shape));
  }
  if (max_primitives == 0) throw DataError("generator: max_primitives must be >= 1");
  if (palette_size == 0 || palette_size > 4) {
    throw DataError("generator: palette_size must lie in [1, 4]");
  }
  if (!(position_jitter >= 0.0) || !(scale_jitter >= 0.0) || scale_jitter >= 1.0) {
    throw DataError("generator: jitter must be non-negative (scale < 1)");
  }
  if (!(min_domain_gap >= 0.0)) throw DataError("generator: negative domain gap");
}

std::string domain_tag(std::size_t index) {
  if (index < 26) return std::string(1, static_cast<char>('A' + index));
  return "D" + std::to_string(index);
}

std::map<std::string, LabeledImageSet> gen_synthetic_domains(
    const GeneratorSpec& spec, Rng& rng) {
  spec.validate();
  const std::uint64_t base = rng.next_u64();

  std::vector<std::vector<PrimitiveRecipe>> recipes;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng class_rng(Rng::mix(base ^ Rng::mix(0x100000 + c)));
    recipes.push_back(make_recipe(spec.max_primitives, class_rng));
  }

  std::map<std::string, LabeledImageSet> out;
  std::vector<std::string> tags;
  for (std::size_t d = 0; d < spec.domains; ++d) {
    Rng style_rng(Rng::mix(base ^ Rng::mix(0x200000 + d)));
    const DomainStyle style = make_style(d, style_rng);
    std::vector<Tensor> images;
    std::vector<int> labels;
    for (std::size_t c = 0; c < spec.classes; ++c) {
      for (std::size_t i = 0; i < spec.images_per_class; ++i) {
        Rng img_rng(Rng::mix(base ^ Rng::mix((d << 40) ^ (c << 20) ^ i)));
        images.push_back(render(spec, recipes[c], style, img_rng));
        labels.push_back(static_cast<int>(c));
      }
    }
    tags.push_back(domain_tag(d));
    out.emplace(tags.back(), make_image_set(tags.back(), spec.image_shape,
                                            std::move(images), std::move(labels)));
  }
  for (std::size_t a = 0; a < tags.size(); ++a) {
    for (std::size_t b = a + 1; b < tags.size(); ++b) {
      const double gap = domain_gap(out.at(tags[a]), out.at(tags[b]));
      if (gap < spec.min_domain_gap) {
        throw DataError("generator: domains " + tags[a] + " and " + tags[b] +
                        " differ by " + std::to_string(gap) +
                        " in channel means, below the required " +
                        std::to_string(spec.min_domain_gap));
      }
    }
  }
  return out;
}

std::vector<double> channel_means(const LabeledImageSet& set) {
  if (set.images.empty()) throw DataError("channel means of an empty set");
  const std::size_t c = set.image_shape[0];
  const std::size_t plane = set.image_shape[1] * set.image_shape[2];
  std::vector<double> means(c, 0.0);
  for (const Tensor& img : set.images) {
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t i = 0; i < plane; ++i) means[k] += img[k * plane + i];
    }
  }
  for (double& m : means) m /= static_cast<double>(set.images.size() * plane);
  return means;
}

double domain_gap(const LabeledImageSet& a, const LabeledImageSet& b) {
  const std::vector<double> ma = channel_means(a);
  const std::vector<double> mb = channel_means(b);
  if (ma.size() != mb.size()) throw DataError("domain gap: channel counts differ");
  double gap = 0.0;
  for (std::size_t k = 0; k < ma.size(); ++k) gap = std::max(gap, std::abs(ma[k] - mb[k]));
  return gap;
}

// ---------------------------------------------------------------------------
// EGTD files

void save_dataset(const LabeledImageSet& set, const std::filesystem::path& path) {
  set.validate();
  if (set.domain_tag.empty() ||
      set.domain_tag.find_first_of(" \t\r\n") != std::string::npos) {
    throw DataError("dataset domain tag must be a non-empty word");
  }
  if (set.image_shape.size() != 3) throw DataError("dataset images must be [C,H,W]");
  std::string bytes = "EGTD\n";
  std::ostringstream manifest;
  manifest << "classes=" << set.class_index.size() << " counts=";
  bool first = true;
  for (const auto& [c, idx] : set.class_index) {
    manifest << (first ? "" : ",") << idx.size();
    first = false;
  }
  manifest << " shape=" << set.image_shape[0] << ',' << set.image_shape[1] << ','
           << set.image_shape[2] << " domain=" << set.domain_tag << '\n';
  bytes += manifest.str();
  const std::size_t n = shape_numel(set.image_shape);
  bytes.reserve(bytes.size() + set.size() * (4 * n + 4));
  for (const auto& [c, idx] : set.class_index) {
    for (std::size_t i : idx) {
      for (double v : set.images[i].values()) detail::put_f32(bytes, v);
    }
  }
  for (const auto& [c, idx] : set.class_index) {
    for (std::size_t i = 0; i < idx.size(); ++i) detail::put_i32(bytes, c);
  }
  detail::write_file(path, bytes);
}

namespace {

std::size_t parse_count(const std::string& text, detail::ByteReader& reader,
                        const char* field) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    reader.fail(std::string("malformed ") + field + " '" + text + "' in header");
  }
  return static_cast<std::size_t>(std::stoull(text));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

LabeledImageSet load_dataset(const std::filesystem::path& path) {
  detail::ByteReader reader(detail::read_file(path), path.string());
  if (reader.remaining() < 5 || reader.take(5) != "EGTD\n") {
    throw DataError(path.string() + ": not an EGTD dataset (bad magic bytes)");
  }
  const std::size_t manifest_offset = reader.offset();
  const std::string manifest = reader.line();
  std::map<std::string, std::string> fields;
  for (const std::string& tok : split(manifest, ' ')) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      throw DataError(path.string() + ": malformed manifest token '" + tok +
                      "' at byte offset " + std::to_string(manifest_offset));
    }
    fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"classes", "counts", "shape", "domain"}) {
    if (!fields.count(key)) {
      throw DataError(path.string() + ": manifest lacks '" + key +
                      "' at byte offset " + std::to_string(manifest_offset));
    }
  }
  const std::size_t n_classes = parse_count(fields["classes"], reader, "class count");
  std::vector<std::size_t> counts;
  for (const std::string& c : split(fields["counts"], ',')) {
    counts.push_back(parse_count(c, reader, "class size"));
  }
  if (counts.size() != n_classes) {
    reader.fail("manifest lists " + std::to_string(counts.size()) +
                " class sizes for " + std::to_string(n_classes) + " classes");
  }
  if (n_classes == 0) reader.fail("manifest declares no classes");
  for (std::size_t c : counts) {
    if (c == 0) reader.fail("manifest declares an empty class");
  }
  Shape shape;
  for (const std::string& e : split(fields["shape"], ',')) {
    shape.push_back(parse_count(e, reader, "shape extent"));
  }
  if (shape.size() != 3 || shape_numel(shape) == 0) {
    reader.fail("image shape must be three positive extents");
  }
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;
  const std::size_t n = shape_numel(shape);
  const std::size_t need = total * n * 4 + total * 4;
  if (reader.remaining() != need) {
    if (reader.remaining() < need) {
      reader.fail("truncated payload, need " + std::to_string(need) +
                  " bytes, have " + std::to_string(reader.remaining()));
    }
    reader.fail("trailing bytes after payload");
  }

  std::vector<Tensor> images;
  images.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    Tensor img(shape);
    for (double& v : img.values()) {
      v = reader.f32();
      if (!std::isfinite(v)) reader.fail("non-finite pixel");
    }
    images.push_back(std::move(img));
  }
  std::vector<int> labels(total);
  std::size_t pos = 0;
  std::set<int> seen;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    int cls = 0;
    for (std::size_t i = 0; i < counts[k]; ++i, ++pos) {
      const std::size_t at = reader.offset();
      const int label = reader.i32();
      if (i == 0) {
        cls = label;
        if (!seen.insert(cls).second || (k > 0 && cls < labels[pos - 1])) {
          throw DataError(path.string() + ": labels not in class-major order at byte offset " +
                          std::to_string(at));
        }
      } else if (label != cls) {
        throw DataError(path.string() + ": label " + std::to_string(label) +
                        " inside the block of class " + std::to_string(cls) +
                        " at byte offset " + std::to_string(at));
      }
      labels[pos] = label;
    }
  }
  return make_image_set(fields["domain"], shape, std::move(images), std::move(labels));
}

}  // namespace egt::data
