#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "noisemix/augment.hpp"
#include "noisemix/classifier.hpp"
#include "noisemix/sampler.hpp"

namespace noisemix {

/// Shortest round-trip decimal ("%.17g").
std::string format_double(double v);

inline constexpr const char* kSampleMagic = "NOISEMIX-SAMPLES";
inline constexpr const char* kModelMagic = "NOISEMIX-MLP";

/// Sample matrix file: one text line "NOISEMIX-SAMPLES W H K count", then count
/// rows of W*H image values followed by K label values, little-endian float64.
struct SampleFile {
    int width = 0;
    int height = 0;
    int num_classes = 0;
    std::vector<Sample> samples;
};

void write_samples(const std::filesystem::path& path, std::span<const Sample> samples);
SampleFile read_samples(const std::filesystem::path& path);

/// Tab-separated provenance sidecar, one line per record.
void write_provenance(const std::filesystem::path& path, std::span<const GenRecord> records);
std::vector<Provenance> read_provenance(const std::filesystem::path& path);
std::string provenance_header();
std::string provenance_line(std::size_t index, const Provenance& p);
Provenance parse_provenance_line(const std::string& line);

/// Montage geometry: one row per record holding the image tile, a one-pixel
/// separator column and the mask tile; rows are separated by one-pixel lines.
struct MontageLayout {
    int width = 0;
    int height = 0;
};
MontageLayout montage_layout(std::size_t records, int tile_width, int tile_height);

inline constexpr unsigned char kSeparatorGray = 128;

/// Binary PGM (P5) montage of images and their masks (white = kept first
/// source, black = cut). Image values are mapped affinely onto 0-255 using the
/// global min/max; the mapping and provenance go into header comments.
void export_grid(std::span<const GenRecord> records, const std::filesystem::path& path);

struct PgmImage {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<std::string> comments;
    std::vector<unsigned char> pixels;
};
PgmImage read_pgm(const std::filesystem::path& path);

/// Model file: text line "NOISEMIX-MLP input hidden K seed", then the flat
/// parameter vector as little-endian float64.
void write_model(const std::filesystem::path& path, const MlpClassifier& model, std::uint64_t seed);
MlpClassifier read_model(const std::filesystem::path& path);

void write_history(const std::filesystem::path& path, std::span<const EpochStats> history);

/// Throws io_error unless a file can be created inside `dir` (created if missing).
void ensure_writable_directory(const std::filesystem::path& dir);

}  // namespace noisemix
