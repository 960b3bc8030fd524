#pragma once

// Two-reader TDMR readback synthesis: erf transition response, dibit ISI,
// per-transition position jitter, Gaussian cross-track ITI mixing over five
// tracks, AWGN per reader, per-sector normalization and sliding-window
// extraction.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace tdmr {

inline constexpr int kNumTracks = 5;
inline constexpr int kCenterTrack = 2;  // index of track 0 in the 5-track array
inline constexpr int kNumReaders = 2;

// Samples are taken at bit-cell centers, i.e. at t = (k + 1/2)T relative to
// the transition instants. This phase makes the sampled dibit symmetric with
// a single dominant cursor (and reduces to a unit impulse as PW50 -> 0).
inline constexpr double kSamplingPhase = 0.5;

struct ChannelParams {
  double bit_interval = 1.0;   // T; the time unit
  double pw50_over_t = 1.5;    // transition width / T
  double jitter_sigma = 0.08;  // std of position jitter, fraction of T
  double awgn_sigma = 0.0;     // electronics noise std, sample amplitude units
  int span_bits = 8;           // dibit truncation half-width in bits
  std::optional<int> quantizer_bits{};  // absent = ideal float sampling

  void validate() const;  // throws std::invalid_argument
};

struct ReaderGeometry {
  double cts_percent = 30.0;  // cross-track separation between readers, % pitch
  double crosstrack_sigma = 0.3397390644964807;  // read pulse std, pitch units
  double track_pitch = 1.0;
  int n_side_tracks = 2;

  void validate() const;
};

// Per-reader ITI weights over tracks -2..2. Stored in the five-track order
// used everywhere else: index 0 = track -2, index 4 = track +2.
using ItiWeights = std::array<std::array<double, kNumTracks>, kNumReaders>;

struct TrackEnsemble {
  std::array<std::vector<std::int8_t>, kNumTracks> bits;  // +-1
  std::array<std::vector<double>, kNumTracks> jitter;     // |dt| < T/2
  std::uint64_t seed = 0;

  std::size_t size() const { return bits[0].size(); }
};

struct AdcFrame {
  std::array<std::vector<double>, kNumReaders> samples;
  std::array<double, kNumReaders> norm_mean{0.0, 0.0};
  std::array<double, kNumReaders> norm_std{1.0, 1.0};
  bool normalized = false;

  std::size_t size() const { return samples[0].size(); }
};

// h(t) = 0.5 erf(2 sqrt(ln 2) t / PW50); odd, saturates at +-0.5.
double transition_response(double t, const ChannelParams& params);

// p(t) = h(t) - h(t - T).
double dibit_response(double t, const ChannelParams& params);

// p evaluated at the sampling instants, lags -span_bits..span_bits.
// sampled_dibit(params)[span_bits + k] = p((k + kSamplingPhase) T).
std::vector<double> sampled_dibit(const ChannelParams& params);

// Gaussian cross-track pulse mass per track; tail mass beyond the outermost
// track edges is folded into tracks -2/+2 so each vector sums to exactly 1.
// Reader 1 sits at -CTS/2 from track 0 center, reader 2 at +CTS/2; reader 2's
// vector is reader 1's reversed.
ItiWeights iti_weights(const ReaderGeometry& geometry);

// Fits crosstrack_sigma so that iti_weights reproduces the given reference
// weight vector (reader 1 order), minimizing the worst relative error.
double fit_crosstrack_sigma(double cts_percent, double track_pitch,
                            std::span<const double, kNumTracks> reference);

// Reader-1 reference weights for the default two-reader 30% CTS setup.
inline constexpr std::array<double, kNumTracks> kReferenceItiWeights = {
    3.54e-05, 0.1514, 0.8207, 0.0279, 5.96e-07};

// i.i.d. equiprobable +-1 bits on five tracks; jitter ~ N(0, jitter_sigma^2)
// redrawn until |dt| < T/2. Deterministic per seed.
TrackEnsemble gen_tracks(int n_bits, std::uint64_t seed, const ChannelParams& params);

// Noiseless readback samples of a single track as a superposition of jittered
// transitions: r(t) = sum_m (symbol[m] - symbol[m-1]) h(t - mT + jitter[m]),
// sampled at cell centers. jitter[m] belongs to the transition between bits
// m-1 and m and has no effect where the pattern does not change, so jitter
// noise is pattern dependent. Positions outside the sector are -1 pads with
// zero jitter; symbols may hold any real amplitudes (synthesis is affine in
// them, and reduces to dibit-table convolution when jitter is zero).
std::vector<double> pulse_train(std::span<const double> symbols, std::span<const double> jitter,
                                const ChannelParams& params);

// Full two-reader synthesis of one sector; AWGN independent per reader,
// optional uniform quantization. Output frame is unnormalized.
AdcFrame synthesize_readback(const TrackEnsemble& tracks, const ChannelParams& params,
                             const ReaderGeometry& geometry, std::uint64_t noise_seed);

// Shift/scale each reader stream to zero mean, unit (population) std.
// Throws if already normalized or if a stream has zero variance.
AdcFrame normalize_frame(AdcFrame frame);

// Per-reader fraction of samples whose sign disagrees with the center-track
// bit (sign(0) counts as +1).
std::array<double, kNumReaders> raw_ber(const AdcFrame& frame, const TrackEnsemble& tracks);

struct CalibrationOptions {
  int sectors = 5;
  int bits_per_sector = 39512;
  std::uint64_t seed = 0x7dc0ffee;
  double sigma_hi = 2.0;
  double tolerance = 0.004;  // on mean raw BER, inside the +-0.005 contract
};

// Bisection on awgn_sigma until the mean raw BER over the calibration
// sectors hits the target. jitter_sigma is left as configured. Throws if the
// target is unreachable within [0, sigma_hi].
ChannelParams calibrate_noise(ChannelParams params, const ReaderGeometry& geometry,
                              double target_raw_ber, const CalibrationOptions& opts = {});

// One loaded sector: normalized samples plus the center-track bits.
struct SectorMeta {
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  ChannelParams params;
  ReaderGeometry geometry;
  ItiWeights iti{};
};

struct Sector {
  AdcFrame frame;
  std::vector<std::int8_t> bits;  // center track
  SectorMeta meta;
};

// Sliding-window view over normalized sectors: window i is centered at sample
// k with 2*d_in samples (d_in per reader) and labeled with the center-track
// bit at k - delay (pad bits -1 if the label index underflows). Edge windows
// whose sample span would leave the sector are dropped, giving
// N - d_in + 1 windows per sector.
class WindowedDataset {
 public:
  WindowedDataset(std::span<const Sector> sectors, int d_in, int delay);

  std::size_t size() const { return total_; }
  int d_in() const { return d_in_; }
  int window_size() const { return 2 * d_in_; }
  int delay() const { return delay_; }
  std::size_t sectors() const { return per_sector_.size(); }
  std::size_t windows_in_sector(std::size_t s) const { return per_sector_[s]; }

  struct Ref {
    std::size_t sector;
    std::size_t center;  // sample index of the window center
  };
  Ref at(std::size_t i) const;

  void gather(std::size_t i, std::span<double> out) const;  // fills window_size()
  std::int8_t label(std::size_t i) const;

 private:
  std::span<const Sector> sectors_;
  std::vector<std::size_t> per_sector_;
  std::vector<std::size_t> cumulative_;
  std::size_t total_ = 0;
  int d_in_;
  int delay_;
};

}  // namespace tdmr
