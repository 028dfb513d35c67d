#include "bellpulse/ingest.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "bellpulse/errors.hpp"

namespace bellpulse::ingest {
namespace {

using nlohmann::json;

void put_u64le(std::byte* dst, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) dst[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}

std::uint64_t get_u64le(const std::byte* src) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(src[i]) << (8 * i);
    return v;
}

void put_f64le(std::byte* dst, double d) { put_u64le(dst, std::bit_cast<std::uint64_t>(d)); }

double get_f64le(const std::byte* src) { return std::bit_cast<double>(get_u64le(src)); }

std::vector<std::byte> read_all_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open file: " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::byte> bytes(size);
    if (size > 0)
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in)
        throw DataError("read failed: " + path.string());
    return bytes;
}

void write_all_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot open file for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("write failed: " + path.string());
}

ParsedStream parse_records_impl(std::span<const std::byte> bytes, std::uint64_t base_offset,
                                const ParseOptions& opts) {
    if (bytes.size() % kBttRecordSize != 0) {
        const std::uint64_t offset =
            base_offset + (bytes.size() / kBttRecordSize) * kBttRecordSize;
        throw ParseError("truncated time-tag record", offset);
    }
    ParsedStream out;
    out.records.reserve(bytes.size() / kBttRecordSize);
    std::uint64_t prev = 0;
    for (std::size_t pos = 0; pos < bytes.size(); pos += kBttRecordSize) {
        const std::uint64_t t = get_u64le(bytes.data() + pos);
        const auto ch = static_cast<std::uint8_t>(bytes[pos + 8]);
        if (ch < 1 || ch > 3)
            throw ParseError("unknown channel id " + std::to_string(ch),
                             base_offset + pos + 8);
        if (!out.records.empty() && t < prev) {
            ++out.monotonicity_violations;
            if (out.monotonicity_violations > opts.max_monotonicity_violations)
                throw DataError("too many timestamp monotonicity violations (" +
                                std::to_string(out.monotonicity_violations) + ")");
        }
        prev = t;
        out.records.push_back(TimeTagRecord{t, static_cast<Channel>(ch)});
    }
    return out;
}

} // namespace

ParsedStream parse_timetag_records(std::span<const std::byte> bytes, const ParseOptions& opts) {
    return parse_records_impl(bytes, 0, opts);
}

ParsedStream read_timetag_file(const std::filesystem::path& path, const ParseOptions& opts) {
    const auto bytes = read_all_bytes(path);
    if (bytes.empty())
        return {};
    if (bytes.size() < kBttHeaderSize)
        throw ParseError("truncated header in " + path.string(), 0);
    if (std::memcmp(bytes.data(), kBttMagic, sizeof(kBttMagic)) != 0)
        throw ParseError("bad magic in " + path.string() + " (expected BTT1)", 0);
    return parse_records_impl(std::span(bytes).subspan(kBttHeaderSize), kBttHeaderSize, opts);
}

std::vector<std::byte> serialize_timetag_records(std::span<const TimeTagRecord> records) {
    std::vector<std::byte> bytes(records.size() * kBttRecordSize, std::byte{0});
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::byte* rec = bytes.data() + i * kBttRecordSize;
        put_u64le(rec, records[i].time_ps);
        rec[8] = static_cast<std::byte>(records[i].channel);
    }
    return bytes;
}

void write_timetag_file(const std::filesystem::path& path,
                        std::span<const TimeTagRecord> records) {
    std::vector<std::byte> bytes(kBttHeaderSize, std::byte{0});
    std::memcpy(bytes.data(), kBttMagic, sizeof(kBttMagic));
    const auto body = serialize_timetag_records(records);
    bytes.insert(bytes.end(), body.begin(), body.end());
    write_all_bytes(path, bytes);
}

void ExperimentManifest::validate() const {
    if (runs.empty())
        throw ConfigError("experiment manifest has no runs");
    std::set<std::string> ids;
    for (const auto& run : runs) {
        if (run.run_id.empty())
            throw ConfigError("manifest run with empty run_id");
        if (!ids.insert(run.run_id).second)
            throw ConfigError("duplicate run_id in manifest: " + run.run_id);
        if (!(run.duration_s > 0.0))
            throw ConfigError("run " + run.run_id + ": duration_s must be positive");
        if (run.alice_file.empty() || run.bob_file.empty())
            throw ConfigError("run " + run.run_id + ": both stream files are required");
    }
}

ExperimentManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open manifest: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("manifest is not valid JSON: " + std::string(e.what()));
    }
    ExperimentManifest m;
    try {
        m.condition = j.value("condition", std::string{});
        for (const auto& jr : j.at("runs")) {
            RunManifest r;
            r.run_id = jr.at("run_id").get<std::string>();
            r.duration_s = jr.at("duration_s").get<double>();
            r.settings.alpha_deg = jr.at("alpha_deg").get<double>();
            r.settings.beta_deg = jr.at("beta_deg").get<double>();
            r.alice_file = jr.at("alice_file").get<std::string>();
            r.bob_file = jr.at("bob_file").get<std::string>();
            m.runs.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw ParseError("manifest field error: " + std::string(e.what()));
    }
    m.validate();
    return m;
}

void write_manifest(const std::filesystem::path& path, const ExperimentManifest& manifest) {
    manifest.validate();
    json j;
    if (!manifest.condition.empty()) j["condition"] = manifest.condition;
    j["runs"] = json::array();
    for (const auto& r : manifest.runs) {
        j["runs"].push_back({{"run_id", r.run_id},
                             {"duration_s", r.duration_s},
                             {"alpha_deg", r.settings.alpha_deg},
                             {"beta_deg", r.settings.beta_deg},
                             {"alice_file", r.alice_file},
                             {"bob_file", r.bob_file}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw DataError("cannot write manifest: " + path.string());
    out << j.dump(2) << '\n';
}

ExperimentData load_experiment(const std::filesystem::path& manifest_path,
                               const ParseOptions& opts) {
    ExperimentData data;
    data.manifest = read_manifest(manifest_path);
    const auto base = manifest_path.parent_path();
    for (const auto& run : data.manifest.runs) {
        LoadedRun loaded;
        loaded.manifest = run;
        for (auto [file, dest, station] :
             {std::tuple{run.alice_file, &loaded.alice, "alice"},
              std::tuple{run.bob_file, &loaded.bob, "bob"}}) {
            const auto path = base / file;
            if (!std::filesystem::exists(path))
                throw DataError("run " + run.run_id + ": missing " + std::string(station) +
                                " stream file " + path.string());
            *dest = read_timetag_file(path, opts);
        }
        data.runs.push_back(std::move(loaded));
    }
    return data;
}

namespace {

constexpr char kDetMagic[4] = {'B', 'D', 'E', '1'};
constexpr std::size_t kDetRecordSize = 24;
constexpr char kCoincMagic[4] = {'B', 'C', 'R', '1'};
constexpr std::size_t kCoincRecordSize = 40;

} // namespace

void write_detection_events(const std::filesystem::path& path,
                            std::span<const DetectionEvent> events) {
    std::vector<std::byte> bytes(8 + events.size() * kDetRecordSize, std::byte{0});
    std::memcpy(bytes.data(), kDetMagic, 4);
    for (std::size_t i = 0; i < events.size(); ++i) {
        std::byte* rec = bytes.data() + 8 + i * kDetRecordSize;
        put_u64le(rec, static_cast<std::uint64_t>(events[i].pulse_index));
        put_f64le(rec + 8, events[i].offset_ns);
        rec[16] = static_cast<std::byte>(events[i].outcome);
        rec[17] = static_cast<std::byte>(events[i].station);
        rec[18] = static_cast<std::byte>(events[i].in_pulse ? 1 : 0);
    }
    write_all_bytes(path, bytes);
}

std::vector<DetectionEvent> read_detection_events(const std::filesystem::path& path) {
    const auto bytes = read_all_bytes(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kDetMagic, 4) != 0)
        throw ParseError("bad detection-event file " + path.string(), 0);
    if ((bytes.size() - 8) % kDetRecordSize != 0)
        throw ParseError("truncated detection-event record",
                         8 + ((bytes.size() - 8) / kDetRecordSize) * kDetRecordSize);
    std::vector<DetectionEvent> events((bytes.size() - 8) / kDetRecordSize);
    for (std::size_t i = 0; i < events.size(); ++i) {
        const std::byte* rec = bytes.data() + 8 + i * kDetRecordSize;
        events[i].pulse_index = static_cast<std::int64_t>(get_u64le(rec));
        events[i].offset_ns = get_f64le(rec + 8);
        events[i].outcome = static_cast<std::uint8_t>(rec[16]);
        events[i].station = static_cast<Station>(rec[17]);
        events[i].in_pulse = rec[18] != std::byte{0};
    }
    return events;
}

void write_coincidence_records(const std::filesystem::path& path,
                               std::span<const CoincidenceRecord> records) {
    std::vector<std::byte> bytes(8 + records.size() * kCoincRecordSize, std::byte{0});
    std::memcpy(bytes.data(), kCoincMagic, 4);
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::byte* rec = bytes.data() + 8 + i * kCoincRecordSize;
        put_u64le(rec, static_cast<std::uint64_t>(records[i].pulse_index));
        put_f64le(rec + 8, records[i].offset_ns);
        rec[16] = static_cast<std::byte>(records[i].outcome_a);
        rec[17] = static_cast<std::byte>(records[i].outcome_b);
        put_f64le(rec + 24, records[i].settings.alpha_deg);
        put_f64le(rec + 32, records[i].settings.beta_deg);
    }
    write_all_bytes(path, bytes);
}

std::vector<CoincidenceRecord> read_coincidence_records(const std::filesystem::path& path) {
    const auto bytes = read_all_bytes(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCoincMagic, 4) != 0)
        throw ParseError("bad coincidence-record file " + path.string(), 0);
    if ((bytes.size() - 8) % kCoincRecordSize != 0)
        throw ParseError("truncated coincidence record",
                         8 + ((bytes.size() - 8) / kCoincRecordSize) * kCoincRecordSize);
    std::vector<CoincidenceRecord> records((bytes.size() - 8) / kCoincRecordSize);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::byte* rec = bytes.data() + 8 + i * kCoincRecordSize;
        records[i].pulse_index = static_cast<std::int64_t>(get_u64le(rec));
        records[i].offset_ns = get_f64le(rec + 8);
        records[i].outcome_a = static_cast<std::uint8_t>(rec[16]);
        records[i].outcome_b = static_cast<std::uint8_t>(rec[17]);
        records[i].settings.alpha_deg = get_f64le(rec + 24);
        records[i].settings.beta_deg = get_f64le(rec + 32);
    }
    return records;
}

} // namespace bellpulse::ingest
