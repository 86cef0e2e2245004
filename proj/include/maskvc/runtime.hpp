#pragma once

// Test-time conversion with an all-ones mask. The converter is fully
// convolutional in time, so whole utterances go through in one pass after
// reflect padding to a multiple of the temporal downsampling factor.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "maskvc/checkpoint.hpp"
#include "maskvc/features.hpp"

namespace maskvc {

enum class Direction { kXY, kYX };

Direction parse_direction(std::string_view s);  // "xy" or "yx"
std::string_view direction_name(Direction d);

// Shortest utterance convert() accepts.
inline constexpr int kMinConvertFrames = kConverterStride;

// Normalized in, normalized out; T preserved.
MelSpectrogram convert_normalized(const ConverterParams& g, const MelSpectrogram& mel);

// `mel` must be normalized with the source domain's statistics; the result
// is denormalized with the target domain's.
MelSpectrogram convert(const Checkpoint& ck, const MelSpectrogram& mel, Direction dir);

struct ConvertOptions {
  bool write_wav = false;
  int griffin_lim_iterations = 32;
  std::uint64_t seed = 0;
};

struct ConversionRow {
  std::string file;
  bool ok = false;
  int frames = 0;
  std::string error;
};

struct ConversionReport {
  std::vector<ConversionRow> rows;
  std::size_t failures() const;
  // Header "file,status,frames,error".
  std::string csv() const;
};

// Converts every feature file (*.f32) in dir_in, sorted by name. Inputs that
// are not yet normalized are normalized with the source statistics. Writes
// <name>.f32 (+ .hdr, and <stem>.wav with write_wav) and report.csv to
// dir_out. A failing file is recorded in its row; the others still convert.
ConversionReport convert_corpus(const Checkpoint& ck, const std::filesystem::path& dir_in,
                                const std::filesystem::path& dir_out, Direction dir,
                                const ConvertOptions& opt = {});

}  // namespace maskvc
