#pragma once

// Content-addressed cache for Monte-Carlo estimates. Entries are keyed by a
// hash of the full physical/engine configuration; a stored entry is served
// only if every key field, including the engine version, matches exactly.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <json.hpp>

namespace gkprep {

inline constexpr int kEngineVersion = 1;

namespace cache {

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

class EstimateCache {
  public:
    explicit EstimateCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    static std::string hash_key(const nlohmann::json& key) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(key.dump())));
        return buf;
    }

    std::optional<nlohmann::json> get(const nlohmann::json& key) const {
        std::shared_lock lock(mutex_);
        const auto path = entry_path(hash_key(key));
        std::ifstream in(path);
        if (!in) return std::nullopt;
        nlohmann::json entry;
        try {
            in >> entry;
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
        if (!entry.contains("key") || entry["key"] != key) return std::nullopt;
        return entry["value"];
    }

    void put(const nlohmann::json& key, const nlohmann::json& value) {
        std::unique_lock lock(mutex_);
        const std::string hash = hash_key(key);
        nlohmann::json entry{{"key", key}, {"value", value}};
        std::ofstream out(entry_path(hash));
        out << entry.dump(2) << "\n";

        const auto index_file = dir_ / "index.json";
        nlohmann::json index = nlohmann::json::object();
        {
            std::ifstream in(index_file);
            if (in) {
                try {
                    in >> index;
                } catch (const nlohmann::json::exception&) {
                    index = nlohmann::json::object();
                }
            }
        }
        index[hash] = {{"file", "estimate-" + hash + ".json"}, {"key", key}};
        std::ofstream iout(index_file);
        iout << index.dump(2) << "\n";
    }

    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path entry_path(const std::string& hash) const {
        return dir_ / ("estimate-" + hash + ".json");
    }

    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
};

}  // namespace cache
}  // namespace gkprep
