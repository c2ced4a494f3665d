#include "asymvq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "asymvq/errors.hpp"

namespace asymvq {

namespace {

template <typename S>
void require_aligned(const Tensor<S>& x, const Tensor<S>& x_hat, const char* what) {
  if (x.shape() != x_hat.shape())
    throw ShapeError(std::string(what) + ": shapes " + x.shape().str() + " and " + x_hat.shape().str() + " differ");
}

}  // namespace

template <typename S>
std::optional<double> pre_error(const Tensor<S>& x, const Tensor<S>& x_hat, const MaskGrid& m, int n) {
  require_aligned(x, x_hat, "pre_error");
  if (m.rows() != x.h() || m.cols() != x.w())
    throw ShapeError("pre_error: mask is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", image " +
                     x.shape().str());
  if ((m > 1).any()) throw InputError("pre_error: mask is not binary");
  double acc = 0;
  std::int64_t count = 0;
  for (int c = 0; c < x.c(); ++c)
    for (int y = 0; y < x.h(); ++y)
      for (int xx = 0; xx < x.w(); ++xx) {
        if (m(y, xx)) continue;
        const double d = static_cast<double>(x_hat(n, c, y, xx)) - static_cast<double>(x(n, c, y, xx));
        acc += d * d;
        ++count;
      }
  if (count == 0) return std::nullopt;
  return acc / static_cast<double>(count);
}

template <typename S>
Tensor<S> naive_blend(const Tensor<S>& x_src, const Tensor<S>& x_hat, const Tensor<S>& m) {
  require_aligned(x_src, x_hat, "naive_blend");
  const Shape& s = x_src.shape();
  if (m.shape() != Shape{s.n, 1, s.h, s.w}) throw ShapeError("naive_blend: mask shape " + m.shape().str());
  Tensor<S> out = x_src;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
          if (m(n, 0, y, x) != S(0)) out(n, c, y, x) = x_hat(n, c, y, x);
  return out;
}

template <typename S>
double psnr(const Tensor<S>& x, const Tensor<S>& x_hat, int n) {
  require_aligned(x, x_hat, "psnr");
  const double mse = (x.item(n).array().template cast<double>() - x_hat.item(n).array().template cast<double>()).square().mean();
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(4.0 / mse);
}

template <typename S>
double mae(const Tensor<S>& x, const Tensor<S>& x_hat, int n) {
  require_aligned(x, x_hat, "mae");
  return (x.item(n).array().template cast<double>() - x_hat.item(n).array().template cast<double>()).abs().mean();
}

EvalAggregate aggregate(const std::vector<EvalRecord>& records, std::optional<int> bin) {
  EvalAggregate out;
  double pre = 0;
  double ps = 0;
  double ma = 0;
  int ps_count = 0;
  for (const auto& r : records) {
    if (bin && r.coverage_bin != *bin) continue;
    ++out.count;
    ma += r.mae;
    if (std::isfinite(r.psnr)) {
      ps += r.psnr;
      ++ps_count;
    }
    if (r.pre_error) {
      pre += *r.pre_error;
      ++out.pre_error_count;
    }
  }
  if (out.pre_error_count > 0) out.pre_error = pre / out.pre_error_count;
  if (ps_count > 0) out.psnr = ps / ps_count;
  if (out.count > 0) out.mae = ma / out.count;
  return out;
}

void EvalReport::finalize() {
  for (int b = 0; b < kCoverageBins; ++b) bins[static_cast<std::size_t>(b)] = aggregate(records, b);
  overall = aggregate(records);
}

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v, double unit = 1.0) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v / unit;
}

std::optional<double> read_optional(const json& j, const char* key, double unit = 1.0) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>() * unit;
}

json aggregate_json(const EvalAggregate& a) {
  return json{{"count", a.count},
              {"pre_error_count", a.pre_error_count},
              {"pre_error_e5", optional_number(a.pre_error, kPreErrorUnit)},
              {"psnr", optional_number(a.psnr)},
              {"mae", optional_number(a.mae)},
              {"fid", nullptr},
              {"lpips", nullptr}};
}

std::string format_optional(const std::optional<double>& v, const char* fmt, double unit = 1.0) {
  if (!v || !std::isfinite(*v)) return "-";
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, *v / unit);
  return buf;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json records = json::array();
  for (const auto& r : report.records)
    records.push_back(json{{"image", r.image},
                           {"mask", r.mask},
                           {"coverage", r.coverage},
                           {"coverage_bin", coverage_bin_label(r.coverage_bin)},
                           {"pre_error_e5", optional_number(r.pre_error, kPreErrorUnit)},
                           {"psnr", optional_number(r.psnr)},
                           {"mae", r.mae}});
  json bins = json::object();
  for (int b = 0; b < kCoverageBins; ++b)
    bins[coverage_bin_label(b)] = aggregate_json(report.bins[static_cast<std::size_t>(b)]);
  json doc{{"model", report.model},
           {"step", report.step},
           {"condition", report.condition},
           {"pre_error_unit", kPreErrorUnit},
           {"records", records},
           {"bins", bins},
           {"overall", aggregate_json(report.overall)}};
  return doc.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  const json doc = json::parse(text);
  EvalReport report;
  report.model = doc.at("model").get<std::string>();
  report.step = doc.at("step").get<std::int64_t>();
  report.condition = doc.at("condition").get<bool>();
  for (const auto& r : doc.at("records")) {
    EvalRecord rec;
    rec.image = r.at("image").get<std::string>();
    rec.mask = r.at("mask").get<std::string>();
    rec.coverage = r.at("coverage").get<double>();
    const std::string label = r.at("coverage_bin").get<std::string>();
    for (int b = 0; b < kCoverageBins; ++b)
      if (coverage_bin_label(b) == label) rec.coverage_bin = b;
    rec.pre_error = read_optional(r, "pre_error_e5", kPreErrorUnit);
    rec.psnr = read_optional(r, "psnr").value_or(std::numeric_limits<double>::infinity());
    rec.mae = r.at("mae").get<double>();
    report.records.push_back(std::move(rec));
  }
  report.finalize();
  return report;
}

std::string report_to_text(const EvalReport& report) {
  std::string out = "model: " + report.model + "  step: " + std::to_string(report.step) +
                    "  condition: " + (report.condition ? "with" : "without") + "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %7s %18s %10s %10s\n", "coverage", "images", "Pre_error (1e-5)", "PSNR",
                "MAE");
  out += line;
  auto row = [&](const std::string& label, const EvalAggregate& a) {
    std::snprintf(line, sizeof line, "%-10s %7d %18s %10s %10s\n", label.c_str(), a.count,
                  format_optional(a.pre_error, "%.3f", kPreErrorUnit).c_str(), format_optional(a.psnr, "%.3f").c_str(),
                  format_optional(a.mae, "%.5f").c_str());
    out += line;
  };
  for (int b = 0; b < kCoverageBins; ++b) row(coverage_bin_label(b), report.bins[static_cast<std::size_t>(b)]);
  row("all", report.overall);
  return out;
}

std::string comparison_table(const std::vector<std::pair<std::string, EvalAggregate>>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.first.size());
  std::string out;
  char line[200];
  std::snprintf(line, sizeof line, "%-*s %8s %8s %18s\n", static_cast<int>(width), "Method", "FID", "LPIPS",
                "Pre_error (1e-5)");
  out += line;
  for (const auto& [label, agg] : rows) {
    std::snprintf(line, sizeof line, "%-*s %8s %8s %18s\n", static_cast<int>(width), label.c_str(), "-", "-",
                  format_optional(agg.pre_error, "%.3f", kPreErrorUnit).c_str());
    out += line;
  }
  return out;
}

MaskCorpus load_mask_corpus(const std::filesystem::path& dir) {
  MaskCorpus corpus;
  const auto manifest = dir / "coverage.tsv";
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_regular_file(manifest)) {
    for (const auto& rec : read_coverage_manifest(manifest)) {
      std::filesystem::path p(rec.path);
      files.push_back(p.is_relative() ? dir / p : p);
    }
  } else if (std::filesystem::is_directory(dir)) {
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    throw InputError("mask corpus not found: " + dir.string());
  }
  if (files.empty()) throw InputError("mask corpus is empty: " + dir.string());
  for (const auto& f : files) {
    corpus.paths.push_back(f.string());
    corpus.masks.push_back(read_mask_png(f));
  }
  return corpus;
}

Tensor<float> reconstruct(const Model& model, const Tensor<float>& x, const Tensor<float>& mask, bool condition) {
  const LatentGrid<float> z = encode_latent(model, x);
  if (!condition) return model.decoder.decode_unconditional(z).value();
  if (!model.cond) throw ConfigError("conditional evaluation needs a stage-1 checkpoint (no conditional branch found)");
  const FeaturePyramid<float> pyramid = model.cond->features(constant(masked_input(x, mask)), mask);
  return model.decoder.decode(z, pyramid, mask).value();
}

EvalReport evaluate_model(const Model& model, const Dataset& data, const MaskCorpus& masks, bool condition,
                          int batch_size) {
  if (data.size() == 0) throw InputError("evaluation dataset is empty");
  if (masks.masks.empty()) throw InputError("mask corpus is empty");
  const int size = model.config.image_size;
  if (data.images.h() != size || data.images.w() != size)
    throw InputError("dataset resolution does not match the checkpoint's image_size " + std::to_string(size));
  for (const auto& m : masks.masks)
    if (m.rows() != size || m.cols() != size) throw InputError("mask resolution does not match image_size");
  if (condition && !model.cond)
    throw ConfigError("conditional evaluation needs a stage-1 checkpoint (no conditional branch found)");

  std::vector<int> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return data.paths[a] < data.paths[b]; });

  EvalReport report;
  report.model = to_string(model.config.latent_mode) + "/" + to_string(model.config.scale_preset) + "/" +
                 to_string(model.config.blend_mode) + "/stage" + std::to_string(model.config.stage);
  report.condition = condition;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<MaskGrid> batch_masks;
    std::vector<std::size_t> mask_ids;
    for (int i : idx) {
      mask_ids.push_back(static_cast<std::size_t>(i) % masks.masks.size());
      batch_masks.push_back(masks.masks[mask_ids.back()]);
    }
    const Tensor<float> x = data.batch(idx);
    const Tensor<float> m = mask_to_tensor<float>(batch_masks);
    const Tensor<float> x_hat = reconstruct(model, x, m, condition);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const int n = static_cast<int>(j);
      EvalRecord rec;
      rec.image = data.paths[static_cast<std::size_t>(idx[j])];
      rec.mask = masks.paths[mask_ids[j]];
      rec.coverage = coverage(batch_masks[j]);
      rec.coverage_bin = coverage_bin(batch_masks[j]);
      rec.pre_error = pre_error(x, x_hat, batch_masks[j], n);
      rec.psnr = psnr(x, x_hat, n);
      rec.mae = mae(x, x_hat, n);
      report.records.push_back(std::move(rec));
    }
  }
  report.finalize();
  return report;
}

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data, const MaskCorpus& masks, bool condition) {
  const Model model = Model::from_checkpoint(ckpt);
  EvalReport report = evaluate_model(model, data, masks, condition);
  report.step = ckpt.step;
  return report;
}

void emit_grid(const std::vector<GridRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw InputError("emit_grid: no rows");
  std::vector<std::vector<Image8>> cells;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cells.push_back({rows[i].input, rows[i].masked, rows[i].output, rows[i].naive});
    labels.push_back(std::to_string(i + 1));
  }
  const Image8 grid = compose_grid(cells, labels, kGridColumns);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_png(path, grid);
}

std::vector<GridRow> grid_rows(const Model& model, const Dataset& data, const MaskCorpus& masks, bool condition,
                               int count) {
  if (masks.masks.empty()) throw InputError("mask corpus is empty");
  const int n = std::min(count, data.size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<MaskGrid> batch_masks;
  for (int i : idx) batch_masks.push_back(masks.masks[static_cast<std::size_t>(i) % masks.masks.size()]);
  const Tensor<float> x = data.batch(idx);
  const Tensor<float> m = mask_to_tensor<float>(batch_masks);
  const Tensor<float> x_hat = reconstruct(model, x, m, condition);
  const Tensor<float> y = masked_input(x, m);
  const Tensor<float> blend = naive_blend(x, x_hat, m);
  std::vector<GridRow> rows;
  for (int i = 0; i < n; ++i)
    rows.push_back({tensor_to_image(x, i), tensor_to_image(y, i), tensor_to_image(x_hat, i), tensor_to_image(blend, i)});
  return rows;
}

#define ASYMVQ_INSTANTIATE_EVAL(S)                                                                   \
  template std::optional<double> pre_error(const Tensor<S>&, const Tensor<S>&, const MaskGrid&, int); \
  template Tensor<S> naive_blend(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);              \
  template double psnr(const Tensor<S>&, const Tensor<S>&, int);                                     \
  template double mae(const Tensor<S>&, const Tensor<S>&, int);

ASYMVQ_INSTANTIATE_EVAL(float)
ASYMVQ_INSTANTIATE_EVAL(double)

}  // namespace asymvq
