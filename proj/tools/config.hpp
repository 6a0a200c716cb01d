#ifndef PRESCREEN_TOOLS_CONFIG_HPP
#define PRESCREEN_TOOLS_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace prescreen::cli {

struct KeySpec {
  const char* name;
  const char* preset;
  const char* help;
};

// Flat key=value configuration.  Every key is known up front; a file may
// set any subset, command-line flags win, and PRESCREEN_SEED sits in
// between.  Unknown keys are rejected rather than ignored.
class Config {
 public:
  static const std::vector<KeySpec>& keys();

  Config();  // presets only

  // '#' comments and blank lines allowed; everything else is key=value.
  void load_file(const std::string& path);
  void set(const std::string& key, std::string value);
  void apply_env();

  const std::string& raw(const std::string& key) const;
  bool is_set(const std::string& key) const;  // non-empty value

  // Typed readers; all throw InvalidConfig on bad or missing values.
  std::string path(const std::string& key) const;  // required, non-empty
  std::string choice(const std::string& key,
                     const std::vector<std::string>& allowed) const;
  std::uint64_t uint(const std::string& key, std::uint64_t min_value = 0) const;
  double real(const std::string& key, double min_value, double max_value) const;
  std::vector<std::uint32_t> uint_list(const std::string& key,
                                       std::uint32_t min_value) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace prescreen::cli

#endif  // PRESCREEN_TOOLS_CONFIG_HPP
