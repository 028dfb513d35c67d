#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bellpulse/types.hpp"

namespace bellpulse::ingest {

/// Time-tag file layout (.btt): 16-byte header (magic "BTT1" + 12 reserved
/// zero bytes) followed by 16-byte little-endian records: u64 picosecond
/// timestamp, u8 channel (1=Out1, 2=Out0, 3=Trigger), 7 reserved zero bytes.
inline constexpr std::size_t kBttHeaderSize = 16;
inline constexpr std::size_t kBttRecordSize = 16;
inline constexpr char kBttMagic[4] = {'B', 'T', 'T', '1'};

struct ParseOptions {
    /// Timestamps may step backwards this many times before parsing fails
    /// (converters can emit small reorderings).
    std::uint64_t max_monotonicity_violations = 1000;
};

struct ParsedStream {
    TimeTagStream records;
    std::uint64_t monotonicity_violations = 0;
};

/// Parses a bare record region (no header). Byte offsets in errors are
/// relative to the start of the span.
ParsedStream parse_timetag_records(std::span<const std::byte> bytes,
                                   const ParseOptions& opts = {});

/// Reads a .btt file (header + records). A zero-length file is an empty
/// stream; anything shorter than the header otherwise is a parse error.
ParsedStream read_timetag_file(const std::filesystem::path& path,
                               const ParseOptions& opts = {});

std::vector<std::byte> serialize_timetag_records(std::span<const TimeTagRecord> records);
void write_timetag_file(const std::filesystem::path& path,
                        std::span<const TimeTagRecord> records);

/// One 30 s (by default) recording at a fixed setting pair.
struct RunManifest {
    std::string run_id;
    double duration_s = 30.0;
    SettingPair settings;
    std::string alice_file;
    std::string bob_file;
};

/// An ordered set of runs scanning an angle schedule.
struct ExperimentManifest {
    std::string condition; // free-form label, e.g. "24m" or "1.5m"
    std::vector<RunManifest> runs;

    void validate() const; // non-empty, unique run ids, positive durations
};

/// Manifest JSON: {"condition": ..., "runs": [{"run_id", "duration_s",
/// "alpha_deg", "beta_deg", "alice_file", "bob_file"}]}. File paths are
/// resolved relative to the manifest's directory.
ExperimentManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const ExperimentManifest& manifest);

struct LoadedRun {
    RunManifest manifest;
    ParsedStream alice;
    ParsedStream bob;
};

struct ExperimentData {
    ExperimentManifest manifest;
    std::vector<LoadedRun> runs;
};

/// Loads every run named by the manifest; a missing or unreadable stream file
/// raises DataError naming the run.
ExperimentData load_experiment(const std::filesystem::path& manifest_path,
                               const ParseOptions& opts = {});

// Lossless fixed-layout serialization for analysis intermediates. Round trips
// are bit-identical (doubles are stored as raw IEEE-754 bits).
void write_detection_events(const std::filesystem::path& path,
                            std::span<const DetectionEvent> events);
std::vector<DetectionEvent> read_detection_events(const std::filesystem::path& path);
void write_coincidence_records(const std::filesystem::path& path,
                               std::span<const CoincidenceRecord> records);
std::vector<CoincidenceRecord> read_coincidence_records(const std::filesystem::path& path);

} // namespace bellpulse::ingest
