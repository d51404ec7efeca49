#include "nudrew/schedule.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "nudrew/errors.hpp"

namespace nudrew {

DelayPolicy DelayPolicy::finite(int nu) {
  if (nu < 1) throw ValidationError("delay rate nu must be >= 1, got " + std::to_string(nu));
  return DelayPolicy(nu);
}

DelayPolicy DelayPolicy::parse(const std::string& text) {
  if (text == "inf" || text == "infinity" || text == "INF") return infinite();
  int nu = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), nu);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("delay rate must be a positive integer or 'inf', got '" + text + "'");
  }
  return finite(nu);
}

std::string DelayPolicy::to_string() const { return is_infinite() ? "inf" : std::to_string(nu_); }

int tau(const DelayPolicy& policy, int k) {
  if (k < 1) throw ValidationError("hop must be >= 1");
  if (policy.is_infinite()) return 0;
  return std::max(0, k - policy.nu());
}

std::span<const HopSource> LayerSchedule::layer(int l) const {
  if (l < 0 || l >= num_layers()) throw RangeError("layer " + std::to_string(l) + " outside schedule");
  return layers_[static_cast<std::size_t>(l)];
}

std::int64_t LayerSchedule::total_aggregations() const {
  std::int64_t total = 0;
  for (const auto& l : layers_) total += static_cast<std::int64_t>(l.size());
  return total;
}

std::string LayerSchedule::dump() const {
  std::ostringstream os;
  for (int l = 0; l < num_layers(); ++l) {
    for (const auto& h : layers_[static_cast<std::size_t>(l)]) os << l << ' ' << h.k << ' ' << h.source << '\n';
  }
  return os.str();
}

LayerSchedule build_schedule(int num_layers, const DelayPolicy& policy, int k_cap) {
  if (num_layers < 1) throw ValidationError("schedule needs at least one layer");
  if (k_cap < 1) throw ValidationError("k_cap must be >= 1");
  LayerSchedule s(policy);
  s.k_cap_ = k_cap;
  s.layers_.resize(static_cast<std::size_t>(num_layers));
  for (int l = 0; l < num_layers; ++l) {
    const int top = std::min(l + 1, k_cap);
    for (int k = 1; k <= top; ++k) s.layers_[static_cast<std::size_t>(l)].push_back({k, l - tau(policy, k)});
  }
  return s;
}

const Var& DelayBuffer::get(int t) const {
  if (t < 0 || t >= size()) {
    throw RangeError("state for layer " + std::to_string(t) + " has not been pushed (" +
                     std::to_string(size()) + " stored)");
  }
  return states_[static_cast<std::size_t>(t)];
}

}  // namespace nudrew
