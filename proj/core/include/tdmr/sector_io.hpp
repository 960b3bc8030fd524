#pragma once

// Sector archive: one file per sector, a single-line JSON header (seed,
// channel params, geometry, ITI weights, normalization constants) followed by
// two rows of little-endian float32 samples (reader 1, reader 2) and one row
// of int8 center-track bits.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tdmr/channel.hpp"

namespace tdmr {

void write_sector(const std::filesystem::path& file, const Sector& sector);
Sector read_sector(const std::filesystem::path& file);

// Loads every "*.sector" file in the directory, sorted by filename.
std::vector<Sector> load_sector_dir(const std::filesystem::path& dir);

// FNV-1a over the raw bytes of every sector file (sorted by filename);
// identifies a dataset in run summaries.
std::uint64_t dataset_digest(const std::filesystem::path& dir);

struct GenConfig {
  int sectors = 20;
  int bits = 39512;
  std::uint64_t seed = 1;
  double cts_percent = 30.0;
  double pw50_over_t = 1.5;
  double jitter_sigma = 0.08;
  // when set, awgn_sigma is calibrated to hit this mean raw BER; otherwise
  // awgn_sigma is used as given
  double raw_ber_target = 0.11;
  double awgn_sigma = -1.0;
  int span_bits = 8;
};

struct GenReport {
  ChannelParams params;
  ReaderGeometry geometry;
  double mean_raw_ber = 0.0;
  std::vector<std::filesystem::path> files;
};

// Generates `sectors` archives into dir (created if needed) and a gen.json
// manifest. Deterministic per seed.
GenReport generate_dataset(const std::filesystem::path& dir, const GenConfig& config);

}  // namespace tdmr
