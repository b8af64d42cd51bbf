#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "mfk/fpe.hpp"
#include "mfk/model.hpp"
#include "mfk/particles.hpp"

namespace mfk {

using ConfigValue = std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;

/// Flat "section.key" -> value store over a fixed schema. Every key has a
/// default; unknown keys and type mismatches raise ConfigError.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);

  /// Keys known to the schema, sorted.
  static std::vector<std::string> known_keys();

  void set(const std::string& key, ConfigValue value);
  /// "section.key=value" with a TOML value; bare words are taken as strings.
  void apply_override(const std::string& assignment);

  bool get_bool(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;
  /// Raw value; throws ConfigError for unknown keys.
  const ConfigValue& value(const std::string& key) const { return lookup(key); }
  std::uint64_t seed() const;

  /// Sorted TOML rendering; equal configs render to equal bytes.
  std::string canonical() const;
  /// 64-bit FNV-1a of canonical(), as 16 hex digits.
  std::string digest() const;

  const std::map<std::string, ConfigValue>& values() const noexcept { return values_; }

 private:
  const ConfigValue& lookup(const std::string& key) const;
  std::map<std::string, ConfigValue> values_;
};

ModelSpec model_from_config(const RunConfig& cfg);
InitialDistribution initial_from_config(const RunConfig& cfg);
IntegratorConfig integrator_from_config(const RunConfig& cfg);
PhaseGrid grid_from_config(const RunConfig& cfg);
FpeConfig fpe_from_config(const RunConfig& cfg);

/// Length-1 lists broadcast to m entries; other lengths must equal m.
std::vector<double> broadcast(const std::vector<double>& values, std::size_t m, const std::string& key);

}  // namespace mfk
