#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

namespace demoe::cli {

/// Bad invocation detected after flag parsing; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Registers subcommand options and remembers how to print their effective
/// values as a flat key=value file that can be fed back through --config.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& key, T& var, const std::string& help) {
    echo_.emplace_back(key, [&var] { return format(var); });
    return app_->add_option("--" + key, var, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& key, bool& var, const std::string& help) {
    echo_.emplace_back(key, [&var] { return format(var); });
    return app_->add_flag("--" + key, var, help);
  }

  std::string echo() const {
    std::string out;
    for (const auto& [key, get] : echo_) out += key + "=" + get() + "\n";
    return out;
  }

  bool known(const std::string& key) const {
    for (const auto& e : echo_) {
      if (e.first == key) return true;
    }
    return false;
  }

  CLI::App* app() const noexcept { return app_; }

 private:
  template <class T>
  static std::string format(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
      return buf;
    } else if constexpr (std::is_arithmetic_v<T>) {
      return std::to_string(v);
    } else {
      return std::string(v);
    }
  }

  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> echo_;
};

}  // namespace demoe::cli
