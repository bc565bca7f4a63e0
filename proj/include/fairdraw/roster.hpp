#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairdraw/crypto.hpp"

namespace fairdraw {

enum class Role : std::uint8_t { initiator = 0, guarantor = 1 };

struct RosterEntry {
  Role role = Role::guarantor;
  std::string name;
  PublicKey pub;
  bool operator==(const RosterEntry&) const = default;
};

/// Fixed participant set of one deployment: exactly one initiator first,
/// then the guarantors in ascending index order. Names are unique.
struct Roster {
  std::vector<RosterEntry> participants;

  std::size_t guarantor_count() const { return participants.size() - 1; }
  const RosterEntry& initiator() const { return participants.front(); }
  const RosterEntry& guarantor(std::size_t index) const { return participants.at(index + 1); }

  std::optional<std::size_t> index_of(const std::string& name) const;
  const PublicKey* key_of(const std::string& name) const;

  /// Throws std::invalid_argument unless the invariants above hold and the
  /// guarantor count is within 1..16.
  void validate() const;

  bool operator==(const Roster&) const = default;
};

}  // namespace fairdraw
