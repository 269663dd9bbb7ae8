#ifndef QQLINEUP_SERVICE_STORE_HPP
#define QQLINEUP_SERVICE_STORE_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "qqlineup/error.hpp"

namespace qqlineup::service {

struct Record {
  std::uint64_t seq = 0;
  std::string kind;
  nlohmann::json body;
};

/// Append-only log of records with gap-free, strictly increasing sequence
/// numbers starting at 1. Not internally synchronized; the service
/// serializes writers.
class RecordStore {
 public:
  virtual ~RecordStore() = default;
  virtual const Record& append(std::string kind, nlohmann::json body) = 0;
  [[nodiscard]] virtual const std::vector<Record>& records() const = 0;
  [[nodiscard]] std::uint64_t next_seq() const { return records().size() + 1; }
};

class MemoryStore : public RecordStore {
 public:
  const Record& append(std::string kind, nlohmann::json body) override {
    records_.push_back(Record{records_.size() + 1, std::move(kind), std::move(body)});
    return records_.back();
  }
  [[nodiscard]] const std::vector<Record>& records() const override { return records_; }

 private:
  std::vector<Record> records_;
};

/// One JSON object per line: {"seq":..,"kind":..,"body":..}. The whole file
/// is loaded at open; appends are flushed immediately.
class JsonLinesStore : public RecordStore {
 public:
  explicit JsonLinesStore(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
      std::ifstream in(path_);
      if (!in) throw IoError("cannot read store '" + path_.string() + "'");
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Record r;
        try {
          auto j = nlohmann::json::parse(line);
          r = Record{j.at("seq").get<std::uint64_t>(), j.at("kind").get<std::string>(), std::move(j.at("body"))};
        } catch (const nlohmann::json::exception& e) {
          throw IoError("store '" + path_.string() + "' line " + std::to_string(lineno) + ": " + e.what());
        }
        if (r.seq != records_.size() + 1)
          throw IoError("store '" + path_.string() + "' has a sequence gap at line " + std::to_string(lineno));
        records_.push_back(std::move(r));
      }
    }
    out_.open(path_, std::ios::app);
    if (!out_) throw IoError("cannot open store '" + path_.string() + "' for appending");
  }

  const Record& append(std::string kind, nlohmann::json body) override {
    Record r{records_.size() + 1, std::move(kind), std::move(body)};
    out_ << nlohmann::json{{"seq", r.seq}, {"kind", r.kind}, {"body", r.body}}.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("failed appending to store '" + path_.string() + "'");
    records_.push_back(std::move(r));
    return records_.back();
  }
  [[nodiscard]] const std::vector<Record>& records() const override { return records_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<Record> records_;
};

}  // namespace qqlineup::service

#endif  // QQLINEUP_SERVICE_STORE_HPP
