#pragma once

#include "entrofact/common.hpp"
#include "entrofact/io.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace entrofact::report {

using nlohmann::json;

enum class Verdict { pass, warn, fail };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::warn: return "warn";
    case Verdict::fail: return "fail";
  }
  return "fail";
}

inline Verdict worst(Verdict a, Verdict b) { return a > b ? a : b; }

// Monte Carlo policy: below 3 sigma pass, 3..4 sigma warn, beyond fail.
inline Verdict from_sigma(double excess) {
  if (excess <= 3.0) return Verdict::pass;
  if (excess <= 4.0) return Verdict::warn;
  return Verdict::fail;
}

inline Verdict from_bool(bool ok) { return ok ? Verdict::pass : Verdict::fail; }

struct Check {
  std::string name;
  Verdict verdict = Verdict::fail;
  double margin = 0.0;  // how far from failing; negative means violated
  json details;
};

class Builder {
 public:
  Builder(std::string experiment, json config, std::uint64_t seed)
      : experiment_(std::move(experiment)), config_(std::move(config)), seed_(seed) {}

  void add(Check check) { checks_.push_back(std::move(check)); }

  void add(const std::string& name, Verdict verdict, double margin,
           json details = json::object()) {
    checks_.push_back(Check{name, verdict, margin, std::move(details)});
  }

  void fitted(const std::string& key, double value) { fitted_[key] = value; }
  void artifact(const std::string& path) { artifacts_.push_back(path); }

  Verdict verdict() const {
    Verdict v = Verdict::pass;
    for (const auto& c : checks_) v = worst(v, c.verdict);
    return v;
  }

  // Deterministic payload: nlohmann::json orders keys, doubles round-trip.
  json payload() const {
    json checks = json::array();
    for (const auto& c : checks_) {
      json row;
      row["name"] = c.name;
      row["verdict"] = to_string(c.verdict);
      row["margin"] = c.margin;
      if (!c.details.empty()) row["details"] = c.details;
      checks.push_back(std::move(row));
    }
    json p;
    p["experiment"] = experiment_;
    p["config"] = config_;
    p["seed"] = seed_;
    p["checks"] = std::move(checks);
    if (!fitted_.empty()) p["fitted"] = fitted_;
    if (!artifacts_.empty()) p["artifacts"] = artifacts_;
    p["verdict"] = to_string(verdict());
    p["replay"] = {{"seed", seed_}};
    return p;
  }

  const std::vector<Check>& checks() const { return checks_; }

 private:
  std::string experiment_;
  json config_;
  std::uint64_t seed_;
  std::vector<Check> checks_;
  json fitted_ = json::object();
  std::vector<std::string> artifacts_;
};

inline void write_report(const std::filesystem::path& path, const json& payload,
                         double wall_ms) {
  auto out = io::open_out(path);
  json doc;
  doc["payload"] = payload;
  doc["wall_clock_ms"] = wall_ms;
  out << doc.dump(2) << "\n";
}

inline int exit_code(Verdict v) {
  switch (v) {
    case Verdict::pass: return 0;
    case Verdict::warn: return 1;
    case Verdict::fail: return 2;
  }
  return 2;
}

}  // namespace entrofact::report
