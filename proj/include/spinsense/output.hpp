// output.hpp: CSV tables with a commented header block, the run manifest,
// its digest and the per-cell checkpoint used to resume long runs.

#pragma once

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

namespace spinsense {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kCheckpointName = ".checkpoint.jsonl";

// Disk or consistency failure while producing outputs.
class OutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------- formatting -----------------------------------

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);  // no "-0"
    return buf;
}

inline std::string format_bool(bool b) { return b ? "true" : "false"; }

using Row = std::vector<std::string>;

struct Column {
    std::string name;
    std::string unit;
};

struct Table {
    std::string name;  // file stem
    std::vector<Column> columns;
    std::vector<Row> rows;

    void add(Row row) {
        if (row.size() != columns.size())
            throw std::invalid_argument("Table::add: row width " + std::to_string(row.size()) + " does not match " +
                                        std::to_string(columns.size()) + " columns of '" + name + "'");
        rows.push_back(std::move(row));
    }

    std::string render(const std::string& experiment, const std::string& digest) const {
        std::ostringstream os;
        os << "# spinsense " << kVersion << "\n";
        os << "# experiment: " << experiment << "\n";
        os << "# manifest_digest: " << digest << "\n";
        os << "# units:";
        for (const auto& c : columns) os << " " << c.name << "=" << c.unit;
        os << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i].name;
        os << "\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
            os << "\n";
        }
        return os.str();
    }
};

// ---------------------------- digest ---------------------------------------

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256_hex: digest computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

// Digest of the resolved config and code version; wall time is excluded so
// reruns produce byte-identical files.
inline std::string manifest_digest(const nlohmann::json& config) {
    const nlohmann::json canon = {{"config", config}, {"version", kVersion}};
    return "sha256:" + sha256_hex(canon.dump());
}

// ---------------------------- files ----------------------------------------

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw OutputError("write_atomic: cannot open '" + tmp.string() + "' for writing");
        out << content;
        out.flush();
        if (!out) throw OutputError("write_atomic: write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw OutputError("write_atomic: cannot rename into '" + path.string() + "'");
    }
}

// Creates the directory and refuses one that already belongs to another run.
inline void prepare_output_dir(const std::filesystem::path& dir, const std::string& digest) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw OutputError("prepare_output_dir: cannot create '" + dir.string() + "': " + ec.message());
    const auto manifest = dir / kManifestName;
    if (!std::filesystem::exists(manifest)) return;
    std::ifstream in(manifest);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception&) {
        throw OutputError("prepare_output_dir: unreadable manifest '" + manifest.string() + "'");
    }
    if (j.value("digest", std::string{}) != digest)
        throw OutputError("prepare_output_dir: '" + dir.string() +
                          "' already holds the manifest of a different run; choose another --out");
}

// ---------------------------- checkpoint -----------------------------------

using CellRows = std::map<std::string, std::vector<Row>>;

// Append-only JSON-lines record of finished sweep cells. The first line holds
// the digest; a file from a different run is ignored and replaced.
class Checkpoint {
public:
    Checkpoint() = default;

    Checkpoint(std::filesystem::path path, std::string digest) : path_(std::move(path)), digest_(std::move(digest)) {
        load();
    }

    bool enabled() const { return !path_.empty(); }
    std::size_t resumed() const { return done_.size(); }

    const CellRows* find(const std::string& key) const {
        auto it = done_.find(key);
        return it == done_.end() ? nullptr : &it->second;
    }

    void record(const std::string& key, const CellRows& rows) {
        done_[key] = rows;
        if (!enabled()) return;
        std::ofstream out(path_, std::ios::app);
        if (!out) throw OutputError("Checkpoint: cannot append to '" + path_.string() + "'");
        if (!header_written_) {
            out << nlohmann::json{{"digest", digest_}}.dump() << "\n";
            header_written_ = true;
        }
        out << nlohmann::json{{"cell", key}, {"rows", rows}}.dump() << "\n";
        if (!out) throw OutputError("Checkpoint: write to '" + path_.string() + "' failed");
    }

    void remove() {
        if (!enabled()) return;
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

private:
    void load() {
        std::ifstream in(path_);
        if (!in) return;
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception&) {
                break;  // torn final line from an interrupted run
            }
            if (first) {
                first = false;
                if (j.value("digest", std::string{}) != digest_) {
                    done_.clear();
                    std::error_code ec;
                    std::filesystem::remove(path_, ec);
                    return;
                }
                header_written_ = true;
                continue;
            }
            done_[j.at("cell").get<std::string>()] = j.at("rows").get<CellRows>();
        }
        if (!done_.empty() || header_written_) rewrite();
    }

    // Drops a torn tail so later appends start on a clean line.
    void rewrite() {
        std::ostringstream os;
        os << nlohmann::json{{"digest", digest_}}.dump() << "\n";
        for (const auto& [k, rows] : done_) os << nlohmann::json{{"cell", k}, {"rows", rows}}.dump() << "\n";
        write_atomic(path_, os.str());
        header_written_ = true;
    }

    std::filesystem::path path_;
    std::string digest_;
    std::map<std::string, CellRows> done_;
    bool header_written_ = false;
};

}  // namespace spinsense
