#pragma once

// Narrow seam for swapping the MILP engine. A backend takes a problem in
// canonical form and returns a Solution; the built-in branch and bound is
// always registered as "builtin".

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "restore/milp/branch_and_bound.hpp"

namespace restore::milp {

class MilpBackend {
 public:
  virtual ~MilpBackend() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual Solution solve(const MilpProblem& p, const MilpOptions& opt) = 0;
};

class BuiltinBackend final : public MilpBackend {
 public:
  [[nodiscard]] std::string name() const override { return "builtin"; }
  [[nodiscard]] Solution solve(const MilpProblem& p, const MilpOptions& opt) override { return solve_milp(p, opt); }
};

using BackendFactory = std::function<std::unique_ptr<MilpBackend>()>;

namespace detail {

inline std::map<std::string, BackendFactory>& backend_registry() {
  static std::map<std::string, BackendFactory> reg{
      {"builtin", [] { return std::make_unique<BuiltinBackend>(); }}};
  return reg;
}

inline std::mutex& backend_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// Makes `factory` available under `name`, replacing any previous entry.
inline void register_backend(const std::string& name, BackendFactory factory) {
  std::lock_guard lock(detail::backend_mutex());
  detail::backend_registry()[name] = std::move(factory);
}

[[nodiscard]] inline std::unique_ptr<MilpBackend> make_backend(const std::string& name = "builtin") {
  std::lock_guard lock(detail::backend_mutex());
  auto& reg = detail::backend_registry();
  auto it = reg.find(name);
  if (it == reg.end()) throw SolverError("unknown MILP backend '" + name + "'");
  return it->second();
}

}  // namespace restore::milp
