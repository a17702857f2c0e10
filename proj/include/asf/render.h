// Copyright 2026 The asfield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ASF_RENDER_H_
#define ASF_RENDER_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "asf/propagate.h"

namespace asf {

inline constexpr int kDefaultSampleRate = 44100;
inline constexpr int kFrameLength = 1024;
inline constexpr int kHopLength = kFrameLength / 2;

// Per-band pressure envelopes, sqrt of histogram energy.
struct BandEnvelopes {
  double bin_width = 1e-3;
  std::vector<double> bands;                // centre frequencies, ascending
  std::vector<std::vector<double>> values;  // [band][bin]

  size_t bins() const { return values.empty() ? 0 : values.front().size(); }
};

struct ImpulseResponse {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;
  uint64_t seed = 0;
};

struct Audio {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = kDefaultSampleRate;
};

// Throws InvalidArgument on a negative energy or misaligned histograms.
BandEnvelopes Envelopes(const std::vector<EnergyHistogram>& hists);
BandEnvelopes Envelopes(const BandHistograms& hists);

// Magnitude at `frequency` from per-band values: linear in log-frequency
// between band centres, flat outside the outermost bands.
double InterpolateLogFrequency(const std::vector<double>& bands, const std::vector<double>& values,
                               double frequency);

// Random-phase overlap-add synthesis with 1024-sample Hann frames at 50%
// overlap. Each frame carries the window-weighted envelope energy, taken as
// the mean of the interpolated power spectrum, so band-flat input keeps its
// total energy. Throws InvalidArgument below 16 kHz or with fewer than two
// bands.
ImpulseResponse Synthesize(const BandEnvelopes& env, int sample_rate, uint64_t seed);

struct ConvolveResult {
  Audio audio;
  double gain = 1.0;  // applied peak-normalisation gain
};

// FFT linear convolution, normalised to a -1 dBFS peak. Throws
// InvalidArgument on a sample-rate mismatch or empty input.
ConvolveResult Convolve(const ImpulseResponse& ir, const Audio& dry);

struct BandEnergy {
  double center = 0.0;
  double energy = 0.0;
};

// Energy per ANSI third-octave band (25 Hz to below Nyquist), integrating
// the periodogram between band edges.
std::vector<BandEnergy> ThirdOctaveEnergies(const std::vector<double>& samples, int sample_rate);

// Schroeder backward integration with a T30 fit (-5 to -35 dB), falling back
// to T20 when the decay is shallower. Throws NumericalFailure if the curve
// never reaches -25 dB.
double Rt60(const EnergyHistogram& hist);

// Sabine estimate 0.161 V / (alpha A).
double SabineRt60(double volume, double surface_area, double alpha);

enum class WavFormat { kPcm16, kFloat32 };

// Mono RIFF/WAVE. The reader accepts 16/24/32-bit PCM and 32-bit float and
// averages channels. Throws IoError.
void WriteWav(const std::string& path, const std::vector<double>& samples, int sample_rate,
              WavFormat format = WavFormat::kFloat32);
Audio ReadWav(const std::string& path);

// "time,sample" rows.
void WriteIrCsv(const ImpulseResponse& ir, std::ostream& out);

}  // namespace asf

#endif  // ASF_RENDER_H_
