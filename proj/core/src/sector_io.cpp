#include "tdmr/sector_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tdmr {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "sector archives assume a little-endian host");

json params_to_json(const ChannelParams& p) {
  json j{{"bit_interval", p.bit_interval},
         {"pw50_over_t", p.pw50_over_t},
         {"jitter_sigma", p.jitter_sigma},
         {"awgn_sigma", p.awgn_sigma},
         {"span_bits", p.span_bits}};
  if (p.quantizer_bits) j["quantizer_bits"] = *p.quantizer_bits;
  return j;
}

ChannelParams params_from_json(const json& j) {
  ChannelParams p;
  p.bit_interval = j.at("bit_interval").get<double>();
  p.pw50_over_t = j.at("pw50_over_t").get<double>();
  p.jitter_sigma = j.at("jitter_sigma").get<double>();
  p.awgn_sigma = j.at("awgn_sigma").get<double>();
  p.span_bits = j.at("span_bits").get<int>();
  if (j.contains("quantizer_bits")) p.quantizer_bits = j.at("quantizer_bits").get<int>();
  return p;
}

json geometry_to_json(const ReaderGeometry& g) {
  return json{{"cts_percent", g.cts_percent},
              {"crosstrack_sigma", g.crosstrack_sigma},
              {"track_pitch", g.track_pitch},
              {"n_side_tracks", g.n_side_tracks}};
}

ReaderGeometry geometry_from_json(const json& j) {
  ReaderGeometry g;
  g.cts_percent = j.at("cts_percent").get<double>();
  g.crosstrack_sigma = j.at("crosstrack_sigma").get<double>();
  g.track_pitch = j.at("track_pitch").get<double>();
  g.n_side_tracks = j.at("n_side_tracks").get<int>();
  return g;
}

std::vector<std::filesystem::path> sector_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".sector") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

void write_sector(const std::filesystem::path& file, const Sector& sector) {
  const std::size_t n = sector.frame.size();
  if (sector.bits.size() != n) throw std::invalid_argument("write_sector: bits/samples mismatch");

  json header{{"format", "tdmr-sector-v1"},
              {"bits", n},
              {"seed", sector.meta.seed},
              {"noise_seed", sector.meta.noise_seed},
              {"params", params_to_json(sector.meta.params)},
              {"geometry", geometry_to_json(sector.meta.geometry)},
              {"iti", {sector.meta.iti[0], sector.meta.iti[1]}},
              {"norm_mean", {sector.frame.norm_mean[0], sector.frame.norm_mean[1]}},
              {"norm_std", {sector.frame.norm_std[0], sector.frame.norm_std[1]}},
              {"normalized", sector.frame.normalized}};

  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("write_sector: cannot open " + file.string());
  out << header.dump() << '\n';

  std::vector<float> row(n);
  for (int j = 0; j < kNumReaders; ++j) {
    const auto& samples = sector.frame.samples[static_cast<std::size_t>(j)];
    for (std::size_t k = 0; k < n; ++k) row[k] = static_cast<float>(samples[k]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
  }
  out.write(reinterpret_cast<const char*>(sector.bits.data()),
            static_cast<std::streamsize>(n * sizeof(std::int8_t)));
  if (!out) throw std::runtime_error("write_sector: write failed for " + file.string());
}

Sector read_sector(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("read_sector: cannot open " + file.string());
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw std::runtime_error("read_sector: missing header in " + file.string());
  }
  const json header = json::parse(header_line);
  if (header.at("format").get<std::string>() != "tdmr-sector-v1") {
    throw std::runtime_error("read_sector: unknown format in " + file.string());
  }
  const auto n = header.at("bits").get<std::size_t>();

  Sector sector;
  sector.meta.seed = header.at("seed").get<std::uint64_t>();
  sector.meta.noise_seed = header.at("noise_seed").get<std::uint64_t>();
  sector.meta.params = params_from_json(header.at("params"));
  sector.meta.geometry = geometry_from_json(header.at("geometry"));
  for (int j = 0; j < kNumReaders; ++j) {
    const auto rj = static_cast<std::size_t>(j);
    sector.meta.iti[rj] = header.at("iti").at(rj).get<std::array<double, kNumTracks>>();
    sector.frame.norm_mean[rj] = header.at("norm_mean").at(rj).get<double>();
    sector.frame.norm_std[rj] = header.at("norm_std").at(rj).get<double>();
  }
  sector.frame.normalized = header.at("normalized").get<bool>();

  std::vector<float> row(n);
  for (int j = 0; j < kNumReaders; ++j) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(n * sizeof(float)));
    auto& samples = sector.frame.samples[static_cast<std::size_t>(j)];
    samples.resize(n);
    for (std::size_t k = 0; k < n; ++k) samples[k] = row[k];
  }
  sector.bits.resize(n);
  in.read(reinterpret_cast<char*>(sector.bits.data()),
          static_cast<std::streamsize>(n * sizeof(std::int8_t)));
  if (!in) throw std::runtime_error("read_sector: truncated file " + file.string());
  return sector;
}

std::vector<Sector> load_sector_dir(const std::filesystem::path& dir) {
  std::vector<Sector> sectors;
  for (const auto& file : sector_files(dir)) sectors.push_back(read_sector(file));
  if (sectors.empty()) {
    throw std::runtime_error("load_sector_dir: no .sector files in " + dir.string());
  }
  return sectors;
}

std::uint64_t dataset_digest(const std::filesystem::path& dir) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&h](const char* data, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) {
      h ^= static_cast<unsigned char>(data[i]);
      h *= 1099511628211ull;
    }
  };
  for (const auto& file : sector_files(dir)) {
    std::ifstream in(file, std::ios::binary);
    char buf[1 << 16];
    while (in) {
      in.read(buf, sizeof(buf));
      mix(buf, static_cast<std::size_t>(in.gcount()));
    }
  }
  return h;
}

GenReport generate_dataset(const std::filesystem::path& dir, const GenConfig& config) {
  std::filesystem::create_directories(dir);

  ChannelParams params;
  params.pw50_over_t = config.pw50_over_t;
  params.jitter_sigma = config.jitter_sigma;
  params.span_bits = config.span_bits;

  ReaderGeometry geometry;
  geometry.cts_percent = config.cts_percent;
  geometry.crosstrack_sigma =
      fit_crosstrack_sigma(config.cts_percent, geometry.track_pitch, kReferenceItiWeights);

  if (config.awgn_sigma >= 0.0) {
    params.awgn_sigma = config.awgn_sigma;
  } else {
    params = calibrate_noise(params, geometry, config.raw_ber_target);
  }

  GenReport report;
  report.params = params;
  report.geometry = geometry;

  const ItiWeights iti = iti_weights(geometry);
  double ber_acc = 0.0;
  for (int s = 0; s < config.sectors; ++s) {
    const std::uint64_t track_seed = config.seed * 1000003ull + 2 * static_cast<std::uint64_t>(s);
    const std::uint64_t noise_seed = track_seed + 1;
    TrackEnsemble tracks = gen_tracks(config.bits, track_seed, params);
    AdcFrame frame = synthesize_readback(tracks, params, geometry, noise_seed);
    const auto ber = raw_ber(frame, tracks);
    ber_acc += 0.5 * (ber[0] + ber[1]);

    Sector sector;
    sector.frame = normalize_frame(std::move(frame));
    sector.bits = tracks.bits[kCenterTrack];
    sector.meta = {track_seed, noise_seed, params, geometry, iti};

    char name[32];
    std::snprintf(name, sizeof(name), "s%04d.sector", s);
    const auto file = dir / name;
    write_sector(file, sector);
    report.files.push_back(file);
  }
  report.mean_raw_ber = ber_acc / config.sectors;

  nlohmann::json manifest{{"sectors", config.sectors},
                          {"bits", config.bits},
                          {"seed", config.seed},
                          {"params", params_to_json(params)},
                          {"geometry", geometry_to_json(geometry)},
                          {"mean_raw_ber", report.mean_raw_ber}};
  std::ofstream mf(dir / "gen.json");
  mf << manifest.dump(2) << '\n';
  return report;
}

}  // namespace tdmr
