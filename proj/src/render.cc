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

#include "asf/render.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>

#include "asf/error.h"

namespace asf {

namespace {

constexpr double kPi = std::numbers::pi;

// RAII wrappers over fftw buffers and plans.
struct FftwReal {
  explicit FftwReal(size_t n) : n(n), p(fftw_alloc_real(n)) { std::fill(p, p + n, 0.0); }
  ~FftwReal() { fftw_free(p); }
  FftwReal(const FftwReal&) = delete;
  FftwReal& operator=(const FftwReal&) = delete;
  size_t n;
  double* p;
};

struct FftwComplex {
  explicit FftwComplex(size_t n) : n(n), p(fftw_alloc_complex(n)) {
    std::memset(p, 0, sizeof(fftw_complex) * n);
  }
  ~FftwComplex() { fftw_free(p); }
  FftwComplex(const FftwComplex&) = delete;
  FftwComplex& operator=(const FftwComplex&) = delete;
  size_t n;
  fftw_complex* p;
};

struct Plan {
  explicit Plan(fftw_plan p) : p(p) {}
  ~Plan() { fftw_destroy_plan(p); }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void Execute() const { fftw_execute(p); }
  fftw_plan p;
};

// Periodic Hann; 50% overlapped copies sum to one.
std::vector<double> Hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

std::vector<double> PowerSpectrum(const std::vector<double>& x, size_t nfft) {
  FftwReal in(nfft);
  FftwComplex out(nfft / 2 + 1);
  Plan plan(fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in.p, out.p, FFTW_ESTIMATE));
  std::copy(x.begin(), x.end(), in.p);
  plan.Execute();
  std::vector<double> p(nfft / 2 + 1);
  for (size_t k = 0; k < p.size(); ++k) {
    p[k] = out.p[k][0] * out.p[k][0] + out.p[k][1] * out.p[k][1];
  }
  return p;
}

void PutU16(std::ostream& o, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  o.write(reinterpret_cast<const char*>(b), 2);
}

void PutU32(std::ostream& o, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    const char c = static_cast<char>((v >> (8 * i)) & 0xff);
    o.write(&c, 1);
  }
}

uint32_t GetLe(const unsigned char* p, int bytes) {
  uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

BandEnvelopes Envelopes(const std::vector<EnergyHistogram>& hists) {
  if (hists.empty()) throw InvalidArgument("no histograms to convert");
  BandEnvelopes env;
  env.bin_width = hists.front().bin_width;
  for (const auto& h : hists) {
    if (h.bins.size() != hists.front().bins.size() || h.bin_width != env.bin_width) {
      throw InvalidArgument("band histograms are not aligned");
    }
    if (!env.bands.empty() && !(h.band > env.bands.back())) {
      throw InvalidArgument("band centres must be ascending");
    }
    std::vector<double> v(h.bins.size());
    for (size_t i = 0; i < v.size(); ++i) {
      if (!(h.bins[i] >= 0.0)) throw InvalidArgument("negative histogram energy");
      v[i] = std::sqrt(h.bins[i]);
    }
    env.bands.push_back(h.band);
    env.values.push_back(std::move(v));
  }
  return env;
}

BandEnvelopes Envelopes(const BandHistograms& hists) {
  return Envelopes(std::vector<EnergyHistogram>(hists.begin(), hists.end()));
}

double InterpolateLogFrequency(const std::vector<double>& bands, const std::vector<double>& values,
                               double frequency) {
  if (frequency <= bands.front()) return values.front();
  if (frequency >= bands.back()) return values.back();
  size_t b = 0;
  while (b + 2 < bands.size() && bands[b + 1] <= frequency) ++b;
  const double t = std::log(frequency / bands[b]) / std::log(bands[b + 1] / bands[b]);
  return (1.0 - t) * values[b] + t * values[b + 1];
}

ImpulseResponse Synthesize(const BandEnvelopes& env, int sample_rate, uint64_t seed) {
  if (sample_rate < 16000) throw InvalidArgument("sample rate must be at least 16 kHz");
  if (env.bands.size() < 2) throw InvalidArgument("synthesis needs at least two bands");
  const size_t nbands = env.bands.size();
  const size_t nbins = env.bins();
  const auto length =
      static_cast<int64_t>(std::llround(static_cast<double>(nbins) * env.bin_width * sample_rate));

  ImpulseResponse ir;
  ir.sample_rate = sample_rate;
  ir.seed = seed;
  ir.samples.assign(static_cast<size_t>(length), 0.0);
  if (length == 0) return ir;

  const int n = kFrameLength;
  const int hop = kHopLength;
  const int nk = n / 2;
  const std::vector<double> window = Hann(n);
  const int64_t nframes = (length + hop - 1) / hop;

  // Window-weighted band energy per frame. Each histogram bin is split over
  // the frames covering its centre sample, with weights normalised to one.
  std::vector<std::vector<double>> frame_energy(nframes, std::vector<double>(nbands, 0.0));
  for (size_t i = 0; i < nbins; ++i) {
    const auto s = static_cast<int64_t>(
        std::floor((static_cast<double>(i) + 0.5) * env.bin_width * sample_rate));
    if (s >= length) break;
    const int64_t m_hi = s / hop;
    const int64_t m_lo = std::max<int64_t>(0, m_hi - 1);
    double wsum = 0.0;
    for (int64_t m = m_lo; m <= m_hi && m < nframes; ++m) wsum += window[s - m * hop];
    for (int64_t m = m_lo; m <= m_hi && m < nframes; ++m) {
      const double w = wsum > 0.0 ? window[s - m * hop] / wsum : (m == m_hi ? 1.0 : 0.0);
      if (w == 0.0) continue;
      for (size_t b = 0; b < nbands; ++b) {
        frame_energy[m][b] += w * env.values[b][i] * env.values[b][i];
      }
    }
  }

  std::vector<double> freqs(nk + 1);
  for (int k = 0; k <= nk; ++k) freqs[k] = static_cast<double>(k) * sample_rate / n;

  FftwComplex spec(nk + 1);
  FftwReal frame(n);
  Plan plan(fftw_plan_dft_c2r_1d(n, spec.p, frame.p, FFTW_ESTIMATE));
  Rng rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::vector<double> mag(nk + 1);
  std::vector<double> pressure(nbands);
  std::vector<double> y(n);

  for (int64_t m = 0; m < nframes; ++m) {
    for (size_t b = 0; b < nbands; ++b) pressure[b] = std::sqrt(frame_energy[m][b]);
    double target = 0.0;
    mag[0] = 0.0;
    for (int k = 1; k <= nk; ++k) {
      mag[k] = InterpolateLogFrequency(env.bands, pressure, freqs[k]);
      target += mag[k] * mag[k];
    }
    target /= nk;
    // Phases are drawn for every frame so the stream does not depend on
    // which frames are silent.
    for (int k = 0; k <= nk; ++k) {
      const double ph = phase(rng);
      if (k == 0) {
        spec.p[k][0] = 0.0;
        spec.p[k][1] = 0.0;
      } else if (k == nk) {
        spec.p[k][0] = ph < kPi ? mag[k] : -mag[k];
        spec.p[k][1] = 0.0;
      } else {
        spec.p[k][0] = mag[k] * std::cos(ph);
        spec.p[k][1] = mag[k] * std::sin(ph);
      }
    }
    if (!(target > 0.0)) continue;
    plan.Execute();

    const int64_t start = m * hop;
    const int span = static_cast<int>(std::min<int64_t>(n, length - start));
    for (int i = 0; i < span; ++i) y[i] = frame.p[i] * window[i];

    // Remove the component along the signal already laid down in this span
    // so that frame energies add without cross terms.
    double dot = 0.0;
    double prior = 0.0;
    for (int i = 0; i < span; ++i) {
      dot += y[i] * ir.samples[start + i];
      prior += ir.samples[start + i] * ir.samples[start + i];
    }
    if (prior > 0.0) {
      const double c = dot / prior;
      for (int i = 0; i < span; ++i) y[i] -= c * ir.samples[start + i];
    }
    double energy = 0.0;
    for (int i = 0; i < span; ++i) energy += y[i] * y[i];
    if (!(energy > 0.0)) continue;
    const double g = std::sqrt(target / energy);
    for (int i = 0; i < span; ++i) ir.samples[start + i] += g * y[i];
  }
  return ir;
}

ConvolveResult Convolve(const ImpulseResponse& ir, const Audio& dry) {
  if (ir.sample_rate != dry.sample_rate) {
    throw InvalidArgument("sample-rate mismatch: IR " + std::to_string(ir.sample_rate) +
                          " Hz, dry " + std::to_string(dry.sample_rate) + " Hz");
  }
  if (ir.samples.empty() || dry.samples.empty()) {
    throw InvalidArgument("convolution inputs must be non-empty");
  }
  const size_t out_len = ir.samples.size() + dry.samples.size() - 1;
  size_t nfft = 1;
  while (nfft < out_len) nfft <<= 1;

  FftwReal a(nfft);
  FftwReal b(nfft);
  FftwComplex fa(nfft / 2 + 1);
  FftwComplex fb(nfft / 2 + 1);
  FftwReal out(nfft);
  Plan pa(fftw_plan_dft_r2c_1d(static_cast<int>(nfft), a.p, fa.p, FFTW_ESTIMATE));
  Plan pb(fftw_plan_dft_r2c_1d(static_cast<int>(nfft), b.p, fb.p, FFTW_ESTIMATE));
  Plan inv(fftw_plan_dft_c2r_1d(static_cast<int>(nfft), fa.p, out.p, FFTW_ESTIMATE));
  std::copy(ir.samples.begin(), ir.samples.end(), a.p);
  std::copy(dry.samples.begin(), dry.samples.end(), b.p);
  pa.Execute();
  pb.Execute();
  for (size_t k = 0; k < nfft / 2 + 1; ++k) {
    const std::complex<double> x(fa.p[k][0], fa.p[k][1]);
    const std::complex<double> z(fb.p[k][0], fb.p[k][1]);
    const std::complex<double> prod = x * z;
    fa.p[k][0] = prod.real();
    fa.p[k][1] = prod.imag();
  }
  inv.Execute();

  ConvolveResult res;
  res.audio.sample_rate = dry.sample_rate;
  res.audio.samples.resize(out_len);
  double peak = 0.0;
  for (size_t i = 0; i < out_len; ++i) {
    res.audio.samples[i] = out.p[i] / static_cast<double>(nfft);
    peak = std::max(peak, std::abs(res.audio.samples[i]));
  }
  if (peak > 0.0) {
    res.gain = std::pow(10.0, -1.0 / 20.0) / peak;
    for (double& s : res.audio.samples) s *= res.gain;
  }
  return res;
}

std::vector<BandEnergy> ThirdOctaveEnergies(const std::vector<double>& samples, int sample_rate) {
  if (samples.empty()) return {};
  size_t nfft = 1;
  while (nfft < samples.size()) nfft <<= 1;
  const std::vector<double> p = PowerSpectrum(samples, nfft);
  const double df = static_cast<double>(sample_rate) / static_cast<double>(nfft);
  std::vector<BandEnergy> out;
  for (int i = 14; i <= 43; ++i) {  // nominal 25 Hz .. 20 kHz
    const double fc = 1000.0 * std::pow(10.0, (i - 30) / 10.0);
    const double lo = fc * std::pow(2.0, -1.0 / 6.0);
    const double hi = fc * std::pow(2.0, 1.0 / 6.0);
    if (hi > sample_rate / 2.0) break;
    double e = 0.0;
    for (size_t k = 1; k < p.size(); ++k) {
      const double f = static_cast<double>(k) * df;
      if (f >= lo && f < hi) e += (k == p.size() - 1 ? 1.0 : 2.0) * p[k];
    }
    out.push_back({fc, e / static_cast<double>(nfft)});
  }
  return out;
}

double Rt60(const EnergyHistogram& hist) {
  const size_t n = hist.bins.size();
  std::vector<double> edc(n);
  double acc = 0.0;
  for (size_t i = n; i-- > 0;) {
    acc += hist.bins[i];
    edc[i] = acc;
  }
  if (!(acc > 0.0)) throw NumericalFailure("empty histogram has no decay");
  std::vector<double> db(n);
  for (size_t i = 0; i < n; ++i) {
    db[i] = edc[i] > 0.0 ? 10.0 * std::log10(edc[i] / acc) : -1e9;
  }
  auto fit = [&](double top, double bottom) -> double {
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    int count = 0;
    for (size_t i = 0; i < n; ++i) {
      if (db[i] > top || db[i] < bottom) continue;
      const double t = (static_cast<double>(i) + 0.5) * hist.bin_width;
      sx += t;
      sy += db[i];
      sxx += t * t;
      sxy += t * db[i];
      ++count;
    }
    if (count < 3) return 0.0;
    const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    return slope < 0.0 ? -60.0 / slope : 0.0;
  };
  const double min_db = *std::min_element(db.begin(), db.end());
  if (min_db <= -35.0) {
    const double t30 = fit(-5.0, -35.0);
    if (t30 > 0.0) return t30;
  }
  if (min_db <= -25.0) {
    const double t20 = fit(-5.0, -25.0);
    if (t20 > 0.0) return t20;
  }
  throw NumericalFailure("energy decay curve does not reach -25 dB");
}

double SabineRt60(double volume, double surface_area, double alpha) {
  if (!(volume > 0.0) || !(surface_area > 0.0) || !(alpha > 0.0)) {
    throw InvalidArgument("Sabine needs positive volume, area and absorption");
  }
  return 0.161 * volume / (alpha * surface_area);
}

void WriteWav(const std::string& path, const std::vector<double>& samples, int sample_rate,
              WavFormat format) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw IoError("cannot write " + path);
  const uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const uint16_t fmt_tag = format == WavFormat::kPcm16 ? 1 : 3;
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * (bits / 8));
  o.write("RIFF", 4);
  PutU32(o, 36 + data_bytes);
  o.write("WAVEfmt ", 8);
  PutU32(o, 16);
  PutU16(o, fmt_tag);
  PutU16(o, 1);
  PutU32(o, static_cast<uint32_t>(sample_rate));
  PutU32(o, static_cast<uint32_t>(sample_rate) * (bits / 8));
  PutU16(o, bits / 8);
  PutU16(o, bits);
  o.write("data", 4);
  PutU32(o, data_bytes);
  for (double s : samples) {
    if (format == WavFormat::kPcm16) {
      const double c = std::clamp(s, -1.0, 1.0);
      PutU16(o, static_cast<uint16_t>(static_cast<int16_t>(std::lround(c * 32767.0))));
    } else {
      const float f = static_cast<float>(s);
      uint32_t u;
      std::memcpy(&u, &f, 4);
      PutU32(o, u);
    }
  }
  if (!o) throw IoError("failed writing " + path);
}

Audio ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw IoError(path + " is not a RIFF/WAVE file");
  }
  int fmt_tag = 0;
  int channels = 0;
  int rate = 0;
  int bits = 0;
  const unsigned char* data = nullptr;
  size_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const uint32_t size = GetLe(buf.data() + pos + 4, 4);
    const unsigned char* body = buf.data() + pos + 8;
    if (pos + 8 + size > buf.size()) throw IoError(path + ": truncated chunk");
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0 && size >= 16) {
      fmt_tag = static_cast<int>(GetLe(body, 2));
      channels = static_cast<int>(GetLe(body + 2, 2));
      rate = static_cast<int>(GetLe(body + 4, 4));
      bits = static_cast<int>(GetLe(body + 14, 2));
      if (fmt_tag == 0xFFFE && size >= 26) fmt_tag = static_cast<int>(GetLe(body + 24, 2));
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data = body;
      data_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (data == nullptr || channels < 1 || rate < 1) throw IoError(path + ": missing fmt or data");
  const bool pcm = fmt_tag == 1 && (bits == 16 || bits == 24 || bits == 32);
  const bool flt = fmt_tag == 3 && bits == 32;
  if (!pcm && !flt) throw IoError(path + ": unsupported sample format");
  const int width = bits / 8;
  const size_t frames = data_size / (static_cast<size_t>(width) * channels);
  Audio a;
  a.sample_rate = rate;
  a.samples.assign(frames, 0.0);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * width;
      const uint32_t raw = GetLe(p, width);
      if (flt) {
        float f;
        std::memcpy(&f, &raw, 4);
        acc += f;
      } else {
        const int shift = 32 - bits;
        const auto v = static_cast<int32_t>(raw << shift) >> shift;
        acc += static_cast<double>(v) / static_cast<double>(1u << (bits - 1));
      }
    }
    a.samples[i] = acc / channels;
  }
  return a;
}

void WriteIrCsv(const ImpulseResponse& ir, std::ostream& out) {
  out << "time,sample\n";
  out.precision(12);
  for (size_t i = 0; i < ir.samples.size(); ++i) {
    out << static_cast<double>(i) / ir.sample_rate << ',' << ir.samples[i] << '\n';
  }
}

}  // namespace asf
