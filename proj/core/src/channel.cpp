#include "tdmr/channel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace tdmr {

namespace {

constexpr double kTwoSqrtLn2 = 1.6651092223153954;  // 2 sqrt(ln 2)

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Reader center offsets from track 0 center, pitch units.
std::array<double, kNumReaders> reader_offsets(const ReaderGeometry& g) {
  const double half_sep = 0.5 * g.cts_percent / 100.0 * g.track_pitch;
  return {-half_sep, +half_sep};
}

std::array<double, kNumTracks> weights_for_offset(double center, double sigma,
                                                  double pitch) {
  // Track i in -2..2 spans [(i-1/2) pitch, (i+1/2) pitch]; tail mass beyond
  // the outer edges is folded into the outermost tracks so the sum is 1.
  std::array<double, kNumTracks> w{};
  std::array<double, kNumTracks - 1> cdf{};
  for (int e = 0; e < kNumTracks - 1; ++e) {
    const double edge = (e - 1.5) * pitch;
    cdf[static_cast<std::size_t>(e)] = normal_cdf((edge - center) / sigma);
  }
  w[0] = cdf[0];
  for (int i = 1; i < kNumTracks - 1; ++i) {
    w[static_cast<std::size_t>(i)] =
        cdf[static_cast<std::size_t>(i)] - cdf[static_cast<std::size_t>(i - 1)];
  }
  w[kNumTracks - 1] = 1.0 - cdf[kNumTracks - 2];
  return w;
}

}  // namespace

void ChannelParams::validate() const {
  if (!(bit_interval > 0.0)) throw std::invalid_argument("bit_interval must be positive");
  if (!(pw50_over_t > 0.0)) throw std::invalid_argument("pw50_over_t must be positive");
  if (jitter_sigma < 0.0) throw std::invalid_argument("jitter_sigma must be non-negative");
  if (awgn_sigma < 0.0) throw std::invalid_argument("awgn_sigma must be non-negative");
  if (span_bits < 4) throw std::invalid_argument("span_bits must be >= 4");
  if (quantizer_bits && (*quantizer_bits < 1 || *quantizer_bits > 24)) {
    throw std::invalid_argument("quantizer_bits out of range");
  }
}

void ReaderGeometry::validate() const {
  if (!(crosstrack_sigma > 0.0)) throw std::invalid_argument("crosstrack_sigma must be positive");
  if (!(track_pitch > 0.0)) throw std::invalid_argument("track_pitch must be positive");
  if (cts_percent < 0.0) throw std::invalid_argument("cts_percent must be non-negative");
  if (n_side_tracks != 2) throw std::invalid_argument("n_side_tracks must be 2");
}

double transition_response(double t, const ChannelParams& params) {
  return 0.5 * std::erf(kTwoSqrtLn2 * t / (params.pw50_over_t * params.bit_interval));
}

double dibit_response(double t, const ChannelParams& params) {
  return transition_response(t, params) - transition_response(t - params.bit_interval, params);
}

std::vector<double> sampled_dibit(const ChannelParams& params) {
  params.validate();
  const double T = params.bit_interval;
  std::vector<double> table(2 * static_cast<std::size_t>(params.span_bits) + 1);
  for (int k = -params.span_bits; k <= params.span_bits; ++k) {
    table[static_cast<std::size_t>(k + params.span_bits)] =
        dibit_response((k + kSamplingPhase) * T, params);
  }
  return table;
}

ItiWeights iti_weights(const ReaderGeometry& geometry) {
  geometry.validate();
  const auto offsets = reader_offsets(geometry);
  ItiWeights w;
  w[0] = weights_for_offset(offsets[0], geometry.crosstrack_sigma, geometry.track_pitch);
  // symmetric placement: reader 2 = reader 1 reversed, exactly
  w[1] = w[0];
  std::reverse(w[1].begin(), w[1].end());
  return w;
}

double fit_crosstrack_sigma(double cts_percent, double track_pitch,
                            std::span<const double, kNumTracks> reference) {
  for (double r : reference) {
    if (!(r > 0.0)) throw std::invalid_argument("reference weights must be positive");
  }
  const double center = -0.5 * cts_percent / 100.0 * track_pitch;
  auto worst_rel = [&](double sigma) {
    const auto w = weights_for_offset(center, sigma, track_pitch);
    double worst = 0.0;
    for (int i = 0; i < kNumTracks; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      worst = std::max(worst, std::abs(w[idx] - reference[idx]) / reference[idx]);
    }
    return worst;
  };
  // golden-section over a generous sigma bracket
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.05 * track_pitch;
  double hi = 1.5 * track_pitch;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1 = worst_rel(x1);
  double f2 = worst_rel(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-13 * track_pitch; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = worst_rel(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = worst_rel(x2);
    }
  }
  return 0.5 * (lo + hi);
}

TrackEnsemble gen_tracks(int n_bits, std::uint64_t seed, const ChannelParams& params) {
  params.validate();
  if (n_bits < 1) throw std::invalid_argument("gen_tracks: n_bits must be >= 1");
  TrackEnsemble tracks;
  tracks.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  for (auto& track : tracks.bits) {
    track.resize(static_cast<std::size_t>(n_bits));
    for (auto& b : track) b = coin(rng) ? 1 : -1;
  }
  const double half_t = 0.5 * params.bit_interval;
  for (auto& track : tracks.jitter) {
    track.assign(static_cast<std::size_t>(n_bits), 0.0);
    if (params.jitter_sigma > 0.0) {
      std::normal_distribution<double> jit(0.0, params.jitter_sigma * params.bit_interval);
      for (auto& dt : track) {
        do {
          dt = jit(rng);
        } while (!(std::abs(dt) < half_t));  // rejection, no atoms at +-T/2
      }
    }
  }
  return tracks;
}

std::vector<double> pulse_train(std::span<const double> symbols, std::span<const double> jitter,
                                const ChannelParams& params) {
  if (symbols.size() != jitter.size()) {
    throw std::invalid_argument("pulse_train: symbols/jitter size mismatch");
  }
  const auto n = static_cast<std::ptrdiff_t>(symbols.size());
  const double T = params.bit_interval;
  const int reach = params.span_bits + 1;  // +1 covers jitter spill past the span
  auto sym_at = [&](std::ptrdiff_t m) {
    return (m >= 0 && m < n) ? symbols[static_cast<std::size_t>(m)] : -1.0;
  };
  std::vector<double> out(symbols.size(), 0.0);
  // transition superposition: r(t) = sum_m (sym_m - sym_{m-1}) h(t - mT + dt_m),
  // so jitter noise only appears where the written pattern actually moves a
  // transition. The saturated h tails outside the window telescope into the
  // two boundary terms.
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    double acc = 0.5 * sym_at(k - reach - 1) + 0.5 * sym_at(k + reach);
    for (std::ptrdiff_t m = k - reach; m <= k + reach; ++m) {
      const double step = sym_at(m) - sym_at(m - 1);
      if (step == 0.0) continue;
      const double dt = (m >= 0 && m < n) ? jitter[static_cast<std::size_t>(m)] : 0.0;
      acc += step *
             transition_response((static_cast<double>(k - m) + kSamplingPhase) * T + dt, params);
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

AdcFrame synthesize_readback(const TrackEnsemble& tracks, const ChannelParams& params,
                             const ReaderGeometry& geometry, std::uint64_t noise_seed) {
  params.validate();
  const auto weights = iti_weights(geometry);
  const std::size_t n = tracks.size();

  std::array<std::vector<double>, kNumTracks> per_track;
  std::vector<double> symbols(n);
  for (int i = 0; i < kNumTracks; ++i) {
    const auto ti = static_cast<std::size_t>(i);
    for (std::size_t m = 0; m < n; ++m) symbols[m] = tracks.bits[ti][m];
    per_track[ti] = pulse_train(symbols, tracks.jitter[ti], params);
  }

  AdcFrame frame;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> awgn(0.0, 1.0);
  for (int j = 0; j < kNumReaders; ++j) {
    const auto rj = static_cast<std::size_t>(j);
    auto& r = frame.samples[rj];
    r.assign(n, 0.0);
    for (int i = 0; i < kNumTracks; ++i) {
      const auto ti = static_cast<std::size_t>(i);
      const double lam = weights[rj][ti];
      for (std::size_t k = 0; k < n; ++k) r[k] += lam * per_track[ti][k];
    }
    if (params.awgn_sigma > 0.0) {
      for (std::size_t k = 0; k < n; ++k) r[k] += params.awgn_sigma * awgn(rng);
    }
    if (params.quantizer_bits) {
      const int levels = 1 << *params.quantizer_bits;
      double fs = 0.0;
      for (double v : r) fs = std::max(fs, std::abs(v));
      if (fs > 0.0) {
        const double step = 2.0 * fs / levels;
        for (double& v : r) {
          const double idx = std::clamp(std::floor((v + fs) / step), 0.0, levels - 1.0);
          v = -fs + (idx + 0.5) * step;
        }
      }
    }
  }
  return frame;
}

AdcFrame normalize_frame(AdcFrame frame) {
  if (frame.normalized) throw std::invalid_argument("normalize_frame: already normalized");
  for (int j = 0; j < kNumReaders; ++j) {
    const auto rj = static_cast<std::size_t>(j);
    auto& r = frame.samples[rj];
    if (r.empty()) throw std::invalid_argument("normalize_frame: empty stream");
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(r.size());
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(r.size());
    if (!(var > 0.0)) {
      throw std::invalid_argument("normalize_frame: zero-variance stream for reader " +
                                  std::to_string(j + 1));
    }
    const double sd = std::sqrt(var);
    for (double& v : r) v = (v - mean) / sd;
    frame.norm_mean[rj] = mean;
    frame.norm_std[rj] = sd;
  }
  frame.normalized = true;
  return frame;
}

std::array<double, kNumReaders> raw_ber(const AdcFrame& frame, const TrackEnsemble& tracks) {
  const std::size_t n = frame.size();
  if (n != tracks.size()) throw std::invalid_argument("raw_ber: frame/tracks size mismatch");
  std::array<double, kNumReaders> out{};
  const auto& center = tracks.bits[kCenterTrack];
  for (int j = 0; j < kNumReaders; ++j) {
    const auto rj = static_cast<std::size_t>(j);
    std::size_t errors = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const int sign = frame.samples[rj][k] >= 0.0 ? 1 : -1;
      if (sign != center[k]) ++errors;
    }
    out[rj] = static_cast<double>(errors) / static_cast<double>(n);
  }
  return out;
}

ChannelParams calibrate_noise(ChannelParams params, const ReaderGeometry& geometry,
                              double target_raw_ber, const CalibrationOptions& opts) {
  params.validate();
  if (target_raw_ber < 0.0 || target_raw_ber >= 0.5) {
    throw std::invalid_argument("calibrate_noise: target must be in [0, 0.5)");
  }
  if (opts.sectors < 5) throw std::invalid_argument("calibrate_noise: need >= 5 sectors");

  // Clean signals synthesized once; bisection only rescales a fixed unit-noise
  // draw so the BER-vs-sigma map is deterministic.
  ChannelParams clean_params = params;
  clean_params.awgn_sigma = 0.0;
  struct CalibSector {
    AdcFrame clean;
    std::array<std::vector<double>, kNumReaders> unit_noise;
    std::vector<std::int8_t> center_bits;
  };
  std::vector<CalibSector> sectors;
  sectors.reserve(static_cast<std::size_t>(opts.sectors));
  for (int s = 0; s < opts.sectors; ++s) {
    const std::uint64_t seed = opts.seed + 2 * static_cast<std::uint64_t>(s);
    TrackEnsemble tracks = gen_tracks(opts.bits_per_sector, seed, clean_params);
    CalibSector cs;
    cs.clean = synthesize_readback(tracks, clean_params, geometry, /*noise_seed=*/0);
    std::mt19937_64 rng(opts.seed + 2 * static_cast<std::uint64_t>(s) + 1);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (auto& stream : cs.unit_noise) {
      stream.resize(cs.clean.size());
      for (double& v : stream) v = unit(rng);
    }
    cs.center_bits = tracks.bits[kCenterTrack];
    sectors.push_back(std::move(cs));
  }

  auto mean_ber = [&](double sigma) {
    double total = 0.0;
    for (const CalibSector& cs : sectors) {
      for (int j = 0; j < kNumReaders; ++j) {
        const auto rj = static_cast<std::size_t>(j);
        std::size_t errors = 0;
        const std::size_t n = cs.clean.size();
        for (std::size_t k = 0; k < n; ++k) {
          const double v = cs.clean.samples[rj][k] + sigma * cs.unit_noise[rj][k];
          const int sign = v >= 0.0 ? 1 : -1;
          if (sign != cs.center_bits[k]) ++errors;
        }
        total += static_cast<double>(errors) / static_cast<double>(n);
      }
    }
    return total / static_cast<double>(sectors.size() * kNumReaders);
  };

  double lo = 0.0;
  double hi = opts.sigma_hi;
  const double ber_lo = mean_ber(lo);
  const double ber_hi = mean_ber(hi);
  if (std::abs(ber_lo - target_raw_ber) <= opts.tolerance) {
    params.awgn_sigma = lo;
    return params;
  }
  if (ber_lo > target_raw_ber || ber_hi < target_raw_ber) {
    throw std::runtime_error("calibrate_noise: target raw BER unreachable within sigma bracket");
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 60; ++it) {
    mid = 0.5 * (lo + hi);
    const double ber = mean_ber(mid);
    if (std::abs(ber - target_raw_ber) <= opts.tolerance) break;
    if (ber < target_raw_ber) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  params.awgn_sigma = mid;
  return params;
}

WindowedDataset::WindowedDataset(std::span<const Sector> sectors, int d_in, int delay)
    : sectors_(sectors), d_in_(d_in), delay_(delay) {
  if (d_in < 1 || d_in % 2 == 0) {
    throw std::invalid_argument("WindowedDataset: d_in must be odd and positive");
  }
  per_sector_.reserve(sectors.size());
  cumulative_.reserve(sectors.size() + 1);
  cumulative_.push_back(0);
  for (const Sector& s : sectors) {
    if (!s.frame.normalized) {
      throw std::invalid_argument("WindowedDataset: frames must be normalized");
    }
    if (s.frame.size() < static_cast<std::size_t>(d_in)) {
      throw std::invalid_argument("WindowedDataset: d_in exceeds sector length");
    }
    const std::size_t count = s.frame.size() - static_cast<std::size_t>(d_in) + 1;
    per_sector_.push_back(count);
    total_ += count;
    cumulative_.push_back(total_);
  }
}

WindowedDataset::Ref WindowedDataset::at(std::size_t i) const {
  if (i >= total_) throw std::out_of_range("WindowedDataset::at");
  std::size_t s = 0;
  while (cumulative_[s + 1] <= i) ++s;
  const std::size_t within = i - cumulative_[s];
  const std::size_t half = static_cast<std::size_t>(d_in_ - 1) / 2;
  return {s, within + half};
}

void WindowedDataset::gather(std::size_t i, std::span<double> out) const {
  const Ref ref = at(i);
  const auto w = static_cast<std::size_t>(d_in_);
  if (out.size() != 2 * w) throw std::invalid_argument("WindowedDataset::gather: bad span size");
  const Sector& s = sectors_[ref.sector];
  const std::size_t first = ref.center - (w - 1) / 2;
  for (std::size_t j = 0; j < w; ++j) {
    out[j] = s.frame.samples[0][first + j];
    out[w + j] = s.frame.samples[1][first + j];
  }
}

std::int8_t WindowedDataset::label(std::size_t i) const {
  const Ref ref = at(i);
  const Sector& s = sectors_[ref.sector];
  const auto idx = static_cast<std::ptrdiff_t>(ref.center) - delay_;
  if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(s.bits.size())) return -1;  // pad
  return s.bits[static_cast<std::size_t>(idx)];
}

}  // namespace tdmr
