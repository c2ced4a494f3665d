#include "asymvq/masks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "asymvq/errors.hpp"

namespace asymvq {

std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::RandomIrregular: return "irregular";
    case MaskKind::RandomBox: return "box";
    case MaskKind::Mixed: return "mixed";
    case MaskKind::Full: return "full";
  }
  return "mixed";
}

MaskKind parse_mask_kind(const std::string& s) {
  if (s == "irregular") return MaskKind::RandomIrregular;
  if (s == "box") return MaskKind::RandomBox;
  if (s == "mixed") return MaskKind::Mixed;
  if (s == "full") return MaskKind::Full;
  throw ConfigError("unknown mask kind '" + s + "' (expected irregular|box|mixed|full)");
}

void MaskSpec::validate() const {
  if (!(coverage_lo >= 0.0 && coverage_lo < coverage_hi && coverage_hi <= 1.0))
    throw ConfigError("mask coverage range must satisfy 0 <= lo < hi <= 1");
  if (strokes_min < 0 || strokes_max < strokes_min || vertices_min < 1 || vertices_max < vertices_min ||
      boxes_min < 0 || boxes_max < boxes_min)
    throw ConfigError("mask count ranges must be nonnegative and ordered");
  if (stroke_width_min < 0 || stroke_width_max < stroke_width_min || box_h_min < 0 || box_h_max < box_h_min ||
      box_w_min < 0 || box_w_max < box_w_min || segment_length_max < segment_length_min)
    throw ConfigError("mask size ranges must be nonnegative and ordered");
  if (max_attempts < 1) throw ConfigError("mask max_attempts must be positive");
}

namespace {

void draw_capsule(MaskGrid& m, double x0, double y0, double x1, double y1, double radius) {
  const int h = static_cast<int>(m.rows());
  const int w = static_cast<int>(m.cols());
  const int ylo = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - radius)));
  const int yhi = std::min(h - 1, static_cast<int>(std::ceil(std::max(y0, y1) + radius)));
  const int xlo = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - radius)));
  const int xhi = std::min(w - 1, static_cast<int>(std::ceil(std::max(x0, x1) + radius)));
  const double dx = x1 - x0;
  const double dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  for (int y = ylo; y <= yhi; ++y)
    for (int x = xlo; x <= xhi; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = px - (x0 + t * dx);
      const double ey = py - (y0 + t * dy);
      if (ex * ex + ey * ey <= radius * radius) m(y, x) = 1;
    }
}

void draw_strokes(MaskGrid& m, const MaskSpec& spec, Rng& rng) {
  const int h = static_cast<int>(m.rows());
  const int w = static_cast<int>(m.cols());
  const double side = std::min(h, w);
  const int strokes = uniform_int(rng, spec.strokes_min, spec.strokes_max);
  for (int s = 0; s < strokes; ++s) {
    const double radius = 0.5 * std::max(1.0, uniform(rng, spec.stroke_width_min, spec.stroke_width_max) * side);
    const int vertices = uniform_int(rng, spec.vertices_min, spec.vertices_max);
    double x = uniform(rng, 0.0, static_cast<double>(w));
    double y = uniform(rng, 0.0, static_cast<double>(h));
    for (int v = 1; v < vertices; ++v) {
      const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double length = uniform(rng, spec.segment_length_min, spec.segment_length_max) * std::max(h, w);
      const double nx = std::clamp(x + length * std::cos(angle), 0.0, static_cast<double>(w));
      const double ny = std::clamp(y + length * std::sin(angle), 0.0, static_cast<double>(h));
      draw_capsule(m, x, y, nx, ny, radius);
      x = nx;
      y = ny;
    }
    if (vertices == 1) draw_capsule(m, x, y, x, y, radius);
  }
}

void draw_boxes(MaskGrid& m, const MaskSpec& spec, Rng& rng, int min_count) {
  const int h = static_cast<int>(m.rows());
  const int w = static_cast<int>(m.cols());
  const int boxes = uniform_int(rng, std::max(min_count, spec.boxes_min), std::max(min_count, spec.boxes_max));
  for (int b = 0; b < boxes; ++b) {
    const int bh = std::clamp(static_cast<int>(std::lround(uniform(rng, spec.box_h_min, spec.box_h_max) * h)), 1, h);
    const int bw = std::clamp(static_cast<int>(std::lround(uniform(rng, spec.box_w_min, spec.box_w_max) * w)), 1, w);
    const int y0 = uniform_int(rng, 0, h - bh);
    const int x0 = uniform_int(rng, 0, w - bw);
    m.block(y0, x0, bh, bw).setConstant(1);
  }
}

}  // namespace

double coverage(const MaskGrid& mask) {
  if (mask.size() == 0) return 0.0;
  return static_cast<double>((mask != 0).count()) / static_cast<double>(mask.size());
}

int coverage_bin_from_counts(std::int64_t edited, std::int64_t total) {
  if (total <= 0) return 0;
  return static_cast<int>(std::min<std::int64_t>(5, edited * 10 / total));
}

int coverage_bin(const MaskGrid& mask) { return coverage_bin_from_counts((mask != 0).count(), mask.size()); }

std::string coverage_bin_label(int bin) {
  if (bin >= 5) return ">=50%";
  return std::to_string(bin * 10) + "-" + std::to_string(bin * 10 + 10) + "%";
}

GeneratedMask generate_mask(const MaskSpec& spec, int height, int width, Rng& rng) {
  spec.validate();
  if (height <= 0 || width <= 0) throw InputError("generate_mask: non-positive size");
  GeneratedMask best;
  if (spec.kind == MaskKind::Full) {
    best.mask = MaskGrid::Ones(height, width);
    best.coverage = 1.0;
    best.attempts = 1;
    best.flagged = !spec.in_range(1.0);
    return best;
  }
  const double mid = 0.5 * (spec.coverage_lo + spec.coverage_hi);
  double best_distance = std::numeric_limits<double>::infinity();
  for (int attempt = 1; attempt <= spec.max_attempts; ++attempt) {
    MaskGrid m = MaskGrid::Zero(height, width);
    if (spec.kind == MaskKind::RandomIrregular || spec.kind == MaskKind::Mixed) draw_strokes(m, spec, rng);
    if (spec.kind == MaskKind::RandomBox) draw_boxes(m, spec, rng, 1);
    if (spec.kind == MaskKind::Mixed) draw_boxes(m, spec, rng, 0);
    const double cov = coverage(m);
    if (spec.in_range(cov)) return {std::move(m), cov, false, attempt};
    const double distance = std::abs(cov - mid);
    if (distance < best_distance) {
      best_distance = distance;
      best = {std::move(m), cov, true, attempt};
    }
  }
  best.attempts = spec.max_attempts;
  return best;
}

MaskSpec default_training_spec() {
  MaskSpec spec;
  spec.kind = MaskKind::Mixed;
  spec.coverage_lo = 0.05;
  spec.coverage_hi = 0.7;
  return spec;
}

MaskSpec training_mask_schedule(std::int64_t /*step*/, Rng& rng, double full_mask_prob, const MaskSpec& random_spec) {
  if (full_mask_prob < 0.0 || full_mask_prob > 1.0) throw ConfigError("full_mask_prob must lie in [0, 1]");
  const double u = uniform(rng, 0.0, 1.0);
  if (u < full_mask_prob) {
    MaskSpec full = random_spec;
    full.kind = MaskKind::Full;
    full.coverage_lo = 0.0;
    full.coverage_hi = 1.0;
    return full;
  }
  return random_spec;
}

template <typename S>
Tensor<S> mask_to_tensor(const std::vector<MaskGrid>& masks) {
  if (masks.empty()) throw InputError("mask_to_tensor: no masks");
  const int h = static_cast<int>(masks.front().rows());
  const int w = static_cast<int>(masks.front().cols());
  Tensor<S> out(Shape{static_cast<int>(masks.size()), 1, h, w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (masks[n].rows() != h || masks[n].cols() != w) throw ShapeError("mask_to_tensor: masks differ in size");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(static_cast<int>(n), 0, y, x) = masks[n](y, x) ? S(1) : S(0);
  }
  return out;
}

template <typename S>
MaskGrid tensor_to_mask(const Tensor<S>& t, int n) {
  MaskGrid m(t.h(), t.w());
  for (int y = 0; y < t.h(); ++y)
    for (int x = 0; x < t.w(); ++x) m(y, x) = t(n, 0, y, x) != S(0) ? 1 : 0;
  return m;
}

void write_coverage_manifest(const std::filesystem::path& file, const std::vector<MaskRecord>& records) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (const auto& r : records) out << r.path << '\t' << std::fixed << std::setprecision(6) << r.coverage << '\n';
}

std::vector<MaskRecord> read_coverage_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::vector<MaskRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    MaskRecord r;
    r.path = line.substr(0, tab);
    if (tab != std::string::npos) r.coverage = std::stod(line.substr(tab + 1));
    out.push_back(std::move(r));
  }
  return out;
}

template Tensor<float> mask_to_tensor(const std::vector<MaskGrid>&);
template Tensor<double> mask_to_tensor(const std::vector<MaskGrid>&);
template MaskGrid tensor_to_mask(const Tensor<float>&, int);
template MaskGrid tensor_to_mask(const Tensor<double>&, int);

}  // namespace asymvq
