#pragma once

// On-disk layout:
//   <root>/index.txt                    one sequence id per line
//   <root>/<id>/frames/00000.ppm ...
//   <root>/<id>/masks/00000.pgm ...

#include <filesystem>
#include <string>
#include <vector>

#include "sampm/synth.hpp"

namespace sampm::data {

inline constexpr const char* kIndexFile = "index.txt";

std::string frame_name(std::size_t index, const char* ext);

void write_sequence(const std::filesystem::path& root, const synth::SequenceSample& s);
/// Writes every sequence and an index listing them in order.
void write_dataset(const std::filesystem::path& root, const std::vector<synth::SequenceSample>& seqs);

std::vector<std::string> read_index(const std::filesystem::path& root);
/// Reads consecutive frames from 00000 until the first missing file.
synth::SequenceSample read_sequence(const std::filesystem::path& root, const std::string& id);
std::vector<synth::SequenceSample> read_dataset(const std::filesystem::path& root);

}  // namespace sampm::data
