#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace asymvq {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Runs the `asymvq` command line. Subcommands: ingest, train, genmasks, eval, ablate, grid.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Cache directory: $ASYMVQ_CACHE, or ".asymvq_cache" in the working directory.
std::filesystem::path cache_dir();

struct IngestResult {
  std::filesystem::path manifest;
  int written = 0;
  std::vector<std::string> skipped;
};

/// Center-crops and resizes every PNG/JPEG in `source` into `dest` and writes `dest`/manifest.txt
/// (sorted source order; skipped files listed in a '#' footer).
IngestResult ingest_images(const std::filesystem::path& source, const std::filesystem::path& dest, int image_size);

}  // namespace asymvq
