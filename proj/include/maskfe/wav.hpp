// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace maskfe {

struct WavData {
  int sample_rate = 0;
  // One vector per channel, samples in [-1, 1].
  std::vector<std::vector<double>> channels;
};

WavData wav_read(const std::string& path);
void wav_write(const std::string& path, const WavData& data);

}  // namespace maskfe
