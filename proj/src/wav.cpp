// SPDX-License-Identifier: Apache-2.0
#include "maskfe/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace maskfe {

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

WavData wav_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav_read: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0) throw std::runtime_error("wav_read: not RIFF: " + path);
  read_u32(in);
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0) throw std::runtime_error("wav_read: not WAVE: " + path);

  int sample_rate = 0, channels = 0, bits = 0;
  std::vector<int16_t> samples;
  bool got_fmt = false, got_data = false;
  while (in.read(tag, 4)) {
    uint32_t size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      uint16_t format = read_u16(in);
      channels = read_u16(in);
      sample_rate = static_cast<int>(read_u32(in));
      read_u32(in);
      read_u16(in);
      bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      if (format != 1 || bits != 16)
        throw std::runtime_error("wav_read: only 16-bit PCM supported: " + path);
      got_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      samples.resize(size / 2);
      in.read(reinterpret_cast<char*>(samples.data()), static_cast<std::streamsize>(size / 2 * 2));
      got_data = true;
      if (size % 2) in.seekg(1, std::ios::cur);
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
    }
  }
  if (!got_fmt || !got_data) throw std::runtime_error("wav_read: missing fmt or data chunk: " + path);
  if (channels < 1) throw std::runtime_error("wav_read: no channels: " + path);

  WavData w;
  w.sample_rate = sample_rate;
  w.channels.resize(channels);
  const size_t frames = samples.size() / channels;
  for (auto& ch : w.channels) ch.resize(frames);
  for (size_t i = 0; i < frames; ++i)
    for (int c = 0; c < channels; ++c)
      w.channels[c][i] = samples[i * channels + c] / 32768.0;
  return w;
}

void wav_write(const std::string& path, const WavData& data) {
  if (data.channels.empty()) throw std::invalid_argument("wav_write: no channels");
  if (data.sample_rate <= 0) throw std::invalid_argument("wav_write: bad sample rate");
  const size_t frames = data.channels.front().size();
  for (const auto& ch : data.channels)
    if (ch.size() != frames) throw std::invalid_argument("wav_write: channel length mismatch");

  const int channels = static_cast<int>(data.channels.size());
  const uint32_t data_bytes = static_cast<uint32_t>(frames * channels * 2);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav_write: cannot open " + path);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);
  write_u16(out, static_cast<uint16_t>(channels));
  write_u32(out, static_cast<uint32_t>(data.sample_rate));
  write_u32(out, static_cast<uint32_t>(data.sample_rate * channels * 2));
  write_u16(out, static_cast<uint16_t>(channels * 2));
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (size_t i = 0; i < frames; ++i)
    for (int c = 0; c < channels; ++c) {
      long s = std::lround(std::clamp(data.channels[c][i], -1.0, 1.0) * 32768.0);
      s = std::clamp(s, -32768L, 32767L);
      write_u16(out, static_cast<uint16_t>(static_cast<int16_t>(s)));
    }
}

}  // namespace maskfe
