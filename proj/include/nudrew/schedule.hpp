#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nudrew/autograd.hpp"

namespace nudrew {

// Delay rate nu >= 1, or infinity (no delay).
class DelayPolicy {
 public:
  static DelayPolicy infinite() { return DelayPolicy(kInfinite); }
  // Throws ValidationError for nu < 1.
  static DelayPolicy finite(int nu);
  // "inf" / "infinity" or a positive integer.
  static DelayPolicy parse(const std::string& text);

  bool is_infinite() const { return nu_ == kInfinite; }
  int nu() const { return nu_; }
  std::string to_string() const;

  friend bool operator==(const DelayPolicy&, const DelayPolicy&) = default;

 private:
  static constexpr int kInfinite = -1;
  explicit DelayPolicy(int nu) : nu_(nu) {}
  int nu_;
};

// tau_nu(k) = max(0, k - nu); zero for the infinite policy.
int tau(const DelayPolicy& policy, int k);

struct HopSource {
  int k = 0;
  // Layer whose node states the hop-k aggregation reads.
  int source = 0;
  friend bool operator==(const HopSource&, const HopSource&) = default;
};

// Per layer l in [0, L): hops k in [1, min(l + 1, k_cap)] reading state l - tau(k).
class LayerSchedule {
 public:
  int num_layers() const { return static_cast<int>(layers_.size()); }
  int k_cap() const { return k_cap_; }
  const DelayPolicy& policy() const { return policy_; }
  std::span<const HopSource> layer(int l) const;
  // Total number of scheduled (layer, hop) aggregations.
  std::int64_t total_aggregations() const;
  // One "layer k source_index" line per entry.
  std::string dump() const;

 private:
  friend LayerSchedule build_schedule(int num_layers, const DelayPolicy& policy, int k_cap);
  explicit LayerSchedule(DelayPolicy policy) : policy_(policy) {}

  DelayPolicy policy_;
  int k_cap_ = 0;
  std::vector<std::vector<HopSource>> layers_;
};

LayerSchedule build_schedule(int num_layers, const DelayPolicy& policy, int k_cap);

// Node states h^(0), h^(1), ... recorded during one forward pass. Entries stay on
// the tape, so gradients reach every past state that is read back.
class DelayBuffer {
 public:
  void push(const Var& state) { states_.push_back(state); }
  // Throws RangeError for a layer that was never pushed.
  const Var& get(int t) const;
  int size() const { return static_cast<int>(states_.size()); }
  const std::vector<Var>& states() const { return states_; }

 private:
  std::vector<Var> states_;
};

}  // namespace nudrew
