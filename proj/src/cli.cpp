#include "asymvq/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "asymvq/errors.hpp"
#include "asymvq/eval.hpp"
#include "asymvq/image_io.hpp"
#include "asymvq/masks.hpp"
#include "asymvq/training.hpp"

namespace asymvq {

std::filesystem::path cache_dir() {
  if (const char* env = std::getenv("ASYMVQ_CACHE"); env && *env) return env;
  return ".asymvq_cache";
}

IngestResult ingest_images(const std::filesystem::path& source, const std::filesystem::path& dest, int image_size) {
  if (!std::filesystem::is_directory(source)) throw InputError("not a directory: " + source.string());
  if (image_size <= 0) throw ConfigError("image_size must be positive");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(source)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::filesystem::create_directories(dest);

  IngestResult result;
  result.manifest = dest / "manifest.txt";
  std::string lines;
  for (const auto& f : files) {
    Image8 img;
    try {
      img = center_crop_resize(read_image(f), image_size);
    } catch (const ImageIoError& e) {
      result.skipped.push_back(f.filename().string() + ": " + e.what());
      continue;
    }
    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", result.written);
    write_png(dest / name, img);
    lines += std::string(name) + "\n";
    ++result.written;
  }
  if (!result.skipped.empty()) {
    lines += "# skipped " + std::to_string(result.skipped.size()) + " unreadable file(s)\n";
    for (const auto& s : result.skipped) lines += "# skipped: " + s + "\n";
  }
  std::ofstream(result.manifest, std::ios::trunc) << lines;
  return result;
}

namespace {

struct TrainFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string base;
  std::string resume;
  std::string dataset;
  std::string out;
};

TrainConfig build_config(const std::string& file, const std::vector<std::string>& overrides) {
  TrainConfig cfg = file.empty() ? TrainConfig{} : load_config(file);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::string step_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06lld.avq", static_cast<long long>(step));
  return buf;
}

// Trains one run into `out_dir`; returns the final checkpoint path.
std::filesystem::path train_into(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir,
                                 const std::optional<Checkpoint>& resume, std::ostream& out) {
  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir / "config.txt", std::ios::trunc) << format_config(cfg);
  TrainOptions options;
  options.loss_csv = out_dir / "losses.csv";
  options.on_checkpoint = [&](const Checkpoint& c) { save_checkpoint(out_dir / step_name(c.step), c); };
  options.on_step = [&](const StepLog& log) {
    if (log.step % 50 == 0 || log.step == cfg.total_steps)
      out << "step " << log.step << " loss " << log.loss_total << " pixel " << log.loss_pixel << '\n' << std::flush;
  };
  TrainResult result;
  if (resume) {
    result = resume_training(*resume, data, options);
  } else if (cfg.stage == 0) {
    result = train_stage0(cfg, data, options);
  } else {
    result = train_stage1(load_checkpoint(cfg.base_checkpoint), cfg, data, options);
  }
  const auto path = out_dir / "final.avq";
  save_checkpoint(path, result.checkpoint);
  return path;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir, const std::string& stem, std::ostream& out) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / (stem + ".json"), std::ios::trunc) << report_to_json(report);
  const std::string text = report_to_text(report);
  std::ofstream(dir / (stem + ".txt"), std::ios::trunc) << text;
  out << text << "report: " << (dir / (stem + ".json")).string() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Asymmetric VQGAN training and evaluation"};
  app.require_subcommand(1);

  // ingest
  std::string ingest_src;
  std::string ingest_out;
  int ingest_size = 64;
  auto* ingest = app.add_subcommand("ingest", "Crop, resize and cache a directory of images");
  ingest->add_option("dataset_dir", ingest_src, "Directory of PNG/JPEG images")->required();
  ingest->add_option("--image-size", ingest_size, "Output side length")->capture_default_str();
  ingest->add_option("--out", ingest_out, "Output directory (default: $ASYMVQ_CACHE/<name>)");

  // train
  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train stage 0 or stage 1");
  train->add_option("--config", tf.config, "Config file (key = value)");
  train->add_option("--set", tf.overrides, "Override a config key (key=value)");
  train->add_option("--base", tf.base, "Stage-0 checkpoint (sets base_checkpoint)");
  train->add_option("--resume", tf.resume, "Continue from a snapshot");
  train->add_option("--dataset", tf.dataset, "Dataset directory or manifest (sets dataset_dir)");
  train->add_option("--out", tf.out, "Output directory (sets out_dir)");

  // genmasks
  MaskSpec mspec;
  std::string mask_kind = "mixed";
  int mask_count = 100;
  int mask_size = 64;
  std::string mask_out;
  auto* genmasks = app.add_subcommand("genmasks", "Generate a mask corpus with a coverage manifest");
  genmasks->add_option("--count", mask_count)->capture_default_str();
  genmasks->add_option("--size", mask_size)->capture_default_str();
  genmasks->add_option("--kind", mask_kind, "irregular | box | mixed | full")->capture_default_str();
  genmasks->add_option("--coverage-lo", mspec.coverage_lo)->capture_default_str();
  genmasks->add_option("--coverage-hi", mspec.coverage_hi)->capture_default_str();
  genmasks->add_option("--seed", mspec.seed)->capture_default_str();
  genmasks->add_option("--out", mask_out)->required();

  // eval
  std::string ev_ckpt;
  std::string ev_data;
  std::string ev_masks;
  std::string ev_out = ".";
  bool with_cond = false;
  bool no_cond = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on images and masks");
  eval->add_option("--checkpoint", ev_ckpt)->required();
  eval->add_option("--dataset", ev_data)->required();
  eval->add_option("--masks", ev_masks)->required();
  eval->add_option("--out", ev_out)->capture_default_str();
  auto* with_flag = eval->add_flag("--with-condition", with_cond, "Decode with the masked-image condition (default)");
  eval->add_flag("--no-condition", no_cond, "Decode without the condition")->excludes(with_flag);

  // ablate
  std::string ab_base;
  std::string ab_config;
  std::vector<std::string> ab_overrides;
  std::string ab_data;
  std::string ab_masks;
  std::string ab_out = "ablation";
  auto* ablate = app.add_subcommand("ablate", "Train addition and concatenation variants from one base");
  ablate->add_option("--base", ab_base)->required();
  ablate->add_option("--config", ab_config);
  ablate->add_option("--set", ab_overrides);
  ablate->add_option("--dataset", ab_data)->required();
  ablate->add_option("--masks", ab_masks)->required();
  std::string ab_eval;
  ablate->add_option("--eval-dataset", ab_eval, "Held-out images (default: --dataset)");
  ablate->add_option("--out", ab_out)->capture_default_str();

  // grid
  std::string gr_ckpt;
  std::string gr_data;
  std::string gr_masks;
  std::string gr_out = "grid.png";
  int gr_rows = 4;
  bool gr_no_cond = false;
  auto* grid = app.add_subcommand("grid", "Write an input / masked / output / naive-blend panel");
  grid->add_option("--checkpoint", gr_ckpt)->required();
  grid->add_option("--dataset", gr_data)->required();
  grid->add_option("--masks", gr_masks)->required();
  grid->add_option("--rows", gr_rows)->capture_default_str();
  grid->add_option("--out", gr_out)->capture_default_str();
  grid->add_flag("--no-condition", gr_no_cond);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) {
      const std::filesystem::path dest =
          ingest_out.empty() ? cache_dir() / std::filesystem::path(ingest_src).filename() : std::filesystem::path(ingest_out);
      const IngestResult r = ingest_images(ingest_src, dest, ingest_size);
      for (const auto& s : r.skipped) err << "warning: skipped " << s << '\n';
      out << r.written << " images, manifest " << r.manifest.string() << '\n';
    } else if (train->parsed()) {
      TrainConfig cfg = build_config(tf.config, tf.overrides);
      if (!tf.base.empty()) cfg.base_checkpoint = tf.base;
      if (!tf.dataset.empty()) cfg.dataset_dir = tf.dataset;
      if (!tf.out.empty()) cfg.out_dir = tf.out;
      std::optional<Checkpoint> resume;
      if (!tf.resume.empty()) {
        resume = load_checkpoint(tf.resume);
        cfg = resume->config;
        if (!tf.dataset.empty()) cfg.dataset_dir = tf.dataset;
        if (!tf.out.empty()) cfg.out_dir = tf.out;
      }
      cfg.validate();
      if (cfg.stage == 1 && cfg.base_checkpoint.empty() && !resume)
        throw ConfigError("stage 1 needs a stage-0 checkpoint: missing key 'base_checkpoint' (or --base)");
      if (cfg.dataset_dir.empty()) throw ConfigError("missing key 'dataset_dir' (or --dataset)");
      const Dataset data = load_dataset(cfg.dataset_dir, cfg.image_size);
      out << train_into(cfg, data, cfg.out_dir, resume, out).string() << '\n';
    } else if (genmasks->parsed()) {
      mspec.kind = parse_mask_kind(mask_kind);
      mspec.validate();
      if (mask_count <= 0 || mask_size <= 0) throw ConfigError("--count and --size must be positive");
      std::filesystem::create_directories(mask_out);
      Rng rng = substream(mspec.seed, "masks");
      std::vector<MaskRecord> records;
      int flagged = 0;
      for (int i = 0; i < mask_count; ++i) {
        const GeneratedMask g = generate_mask(mspec, mask_size, mask_size, rng);
        char name[32];
        std::snprintf(name, sizeof name, "mask_%05d.png", i);
        write_mask_png(std::filesystem::path(mask_out) / name, g.mask);
        records.push_back({name, g.coverage});
        flagged += g.flagged ? 1 : 0;
      }
      write_coverage_manifest(std::filesystem::path(mask_out) / "coverage.tsv", records);
      out << mask_count << " masks (" << flagged << " outside the coverage target) in " << mask_out << '\n';
    } else if (eval->parsed()) {
      const bool condition = !no_cond;
      const Checkpoint ckpt = load_checkpoint(ev_ckpt);
      const Dataset data = load_dataset(ev_data, ckpt.config.image_size);
      const MaskCorpus masks = load_mask_corpus(ev_masks);
      const EvalReport report = evaluate_checkpoint(ckpt, data, masks, condition);
      write_report(report, ev_out, condition ? "eval_with_condition" : "eval_without_condition", out);
    } else if (ablate->parsed()) {
      TrainConfig cfg = build_config(ab_config, ab_overrides);
      cfg.stage = 1;
      cfg.base_checkpoint = ab_base;
      cfg.validate();
      const Checkpoint base = load_checkpoint(ab_base);
      const Dataset data = load_dataset(ab_data, cfg.image_size);
      const Dataset held_out = ab_eval.empty() ? data : load_dataset(ab_eval, cfg.image_size);
      const MaskCorpus masks = load_mask_corpus(ab_masks);
      std::vector<std::pair<std::string, EvalAggregate>> rows;
      for (BlendMode mode : {BlendMode::Addition, BlendMode::Concatenation}) {
        TrainConfig variant = cfg;
        variant.blend_mode = mode;
        const auto dir = std::filesystem::path(ab_out) / to_string(mode);
        variant.out_dir = dir.string();
        TrainOptions options;
        options.loss_csv = dir / "losses.csv";
        std::filesystem::create_directories(dir);
        const TrainResult r = train_stage1(base, variant, data, options);
        save_checkpoint(dir / "final.avq", r.checkpoint);
        const EvalReport report = evaluate_checkpoint(r.checkpoint, held_out, masks, true);
        write_report(report, dir, "eval_with_condition", out);
        rows.emplace_back(to_string(mode), report.overall);
      }
      const std::string table = comparison_table(rows);
      std::ofstream(std::filesystem::path(ab_out) / "ablation.txt", std::ios::trunc) << table;
      out << table;
    } else if (grid->parsed()) {
      const Checkpoint ckpt = load_checkpoint(gr_ckpt);
      const Model model = Model::from_checkpoint(ckpt);
      const Dataset data = load_dataset(gr_data, ckpt.config.image_size);
      const MaskCorpus masks = load_mask_corpus(gr_masks);
      emit_grid(grid_rows(model, data, masks, !gr_no_cond, gr_rows), gr_out);
      out << gr_out << '\n';
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace asymvq
