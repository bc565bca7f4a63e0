#include "fairdraw/roster.hpp"

#include <set>
#include <stdexcept>

namespace fairdraw {

std::optional<std::size_t> Roster::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < participants.size(); ++i)
    if (participants[i].name == name) return i;
  return std::nullopt;
}

const PublicKey* Roster::key_of(const std::string& name) const {
  auto idx = index_of(name);
  return idx ? &participants[*idx].pub : nullptr;
}

void Roster::validate() const {
  if (participants.size() < 2) throw std::invalid_argument("roster needs an initiator and at least one guarantor");
  if (participants.front().role != Role::initiator)
    throw std::invalid_argument("first roster entry must be the initiator");
  // 3 to 5 participants is the recommended deployment size; 1..16 guarantors enforced.
  if (guarantor_count() > 16) throw std::invalid_argument("at most 16 guarantors supported");
  std::set<std::string> names;
  for (std::size_t i = 0; i < participants.size(); ++i) {
    const RosterEntry& e = participants[i];
    if (i > 0 && e.role != Role::guarantor)
      throw std::invalid_argument("only the first roster entry may be the initiator");
    if (e.name.empty()) throw std::invalid_argument("participant name must not be empty");
    if (!names.insert(e.name).second)
      throw std::invalid_argument("duplicate participant name: " + e.name);
    if (e.pub.bytes.empty()) throw std::invalid_argument("missing public key for " + e.name);
  }
}

}  // namespace fairdraw
