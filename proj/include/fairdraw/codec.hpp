#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairdraw/bytes.hpp"
#include "fairdraw/crypto.hpp"
#include "fairdraw/permutation.hpp"

namespace fairdraw {

// Canonical, deterministic byte layout for every protocol structure:
// 1-byte structure tag, then each field in fixed declared order as
// (1-byte field tag, 4-byte big-endian length, payload).
//
// Payload rules:
//   unsigned integers            8-byte big-endian
//   permutation                  4-byte big-endian entry count, then entries
//   salt                         64 raw bytes
//   hash                         32 raw bytes
//   signature block              length-prefixed signer id, length-prefixed
//                                signature bytes (both 4-byte big-endian)
//   aggregate                    4-byte big-endian item count, then
//                                length-prefixed constituent encodings in
//                                ascending guarantor order
//
// Every signature a structure carries verifies over the canonical bytes of
// the structure (tag included) up to, and excluding, the field that holds
// that signature; signatures copied from an inner structure verify over the
// inner structure's own prefix. Decoding is strict: exact field order, exact
// payload sizes, no trailing bytes, in-range values.

enum class StructureTag : std::uint8_t {
  draw_announce = 0x01,
  counter_signed_announce = 0x02,
  announce_aggregate = 0x03,
  initiator_commit = 0x04,
  counter_signed_commit = 0x05,
  commit_aggregate = 0x06,
  guarantor_commit = 0x07,
  guarantor_hash_aggregate = 0x08,
  countersigned_hash_aggregate = 0x09,
  initiator_reveal = 0x0a,
  guarantor_reveal = 0x0b,
  reveal_aggregate = 0x0c,
  abort_notice = 0xe0,  // signed error message; not one of the twelve
};

enum class FieldTag : std::uint8_t {
  upper_bound = 0x10,  // k
  draw_no = 0x11,
  hash = 0x12,
  salt = 0x13,
  number = 0x14,
  permutation = 0x15,
  signature_block = 0x16,
  aggregate = 0x17,
  text = 0x18,  // abort notices only
};

const char* structure_name(StructureTag tag);

struct SignatureBlock {
  std::string signer_id;
  Bytes signature;
  bool operator==(const SignatureBlock&) const = default;
};

// --- the twelve protocol structures ----------------------------------------

struct DrawAnnounce {  // step 1, initiator -> every guarantor
  std::uint64_t k = 0;
  std::uint64_t draw_no = 0;
  SignatureBlock sig;
  bool operator==(const DrawAnnounce&) const = default;
};

struct CounterSignedAnnounce {  // step 2, guarantor -> initiator
  DrawAnnounce announce;
  SignatureBlock guarantor_sig;
  bool operator==(const CounterSignedAnnounce&) const = default;
};

struct AnnounceAggregate {  // step 3, initiator -> every guarantor
  std::vector<CounterSignedAnnounce> entries;  // ascending guarantor index
  SignatureBlock covering_sig;
  bool operator==(const AnnounceAggregate&) const = default;
};

struct InitiatorCommit {  // step 5
  std::uint64_t draw_no = 0;
  CommitmentHash hash;
  SignatureBlock sig;
  bool operator==(const InitiatorCommit&) const = default;
};

struct CounterSignedCommit {  // step 6
  InitiatorCommit commit;
  SignatureBlock guarantor_sig;
  bool operator==(const CounterSignedCommit&) const = default;
};

struct CommitAggregate {  // step 7
  std::vector<CounterSignedCommit> entries;
  SignatureBlock covering_sig;
  bool operator==(const CommitAggregate&) const = default;
};

struct GuarantorCommit {  // step 9
  std::uint64_t draw_no = 0;
  CommitmentHash hash;
  SignatureBlock sig;
  bool operator==(const GuarantorCommit&) const = default;
};

struct GuarantorHashAggregate {  // step 10
  std::vector<GuarantorCommit> entries;
  SignatureBlock covering_sig;
  bool operator==(const GuarantorHashAggregate&) const = default;
};

struct CountersignedHashAggregate {  // step 11; outer signature covers the
  GuarantorHashAggregate inner;      // whole structure including the
  SignatureBlock guarantor_sig;      // initiator's covering signature
  bool operator==(const CountersignedHashAggregate&) const = default;
};

struct InitiatorReveal {  // step 12
  Salt salt;
  std::uint64_t draw_no = 0;
  std::uint64_t number = 0;
  SignatureBlock sig;
  bool operator==(const InitiatorReveal&) const = default;
};

struct GuarantorReveal {  // step 13
  Salt salt;
  std::uint64_t draw_no = 0;
  Permutation perm;
  SignatureBlock sig;
  bool operator==(const GuarantorReveal&) const = default;
};

struct RevealAggregate {  // step 14
  std::vector<GuarantorReveal> entries;
  SignatureBlock covering_sig;
  bool operator==(const RevealAggregate&) const = default;
};

struct AbortNotice {  // signed error message, any step
  std::uint64_t draw_no = 0;
  std::uint64_t phase = 0;
  std::uint64_t cause_code = 0;
  std::string culprit;  // may be empty
  SignatureBlock sig;
  bool operator==(const AbortNotice&) const = default;
};

// --- encoding ---------------------------------------------------------------

Bytes encode(const DrawAnnounce&);
Bytes encode(const CounterSignedAnnounce&);
Bytes encode(const AnnounceAggregate&);
Bytes encode(const InitiatorCommit&);
Bytes encode(const CounterSignedCommit&);
Bytes encode(const CommitAggregate&);
Bytes encode(const GuarantorCommit&);
Bytes encode(const GuarantorHashAggregate&);
Bytes encode(const CountersignedHashAggregate&);
Bytes encode(const InitiatorReveal&);
Bytes encode(const GuarantorReveal&);
Bytes encode(const RevealAggregate&);
Bytes encode(const AbortNotice&);

// --- signing prefixes (the bytes each fresh signature is computed over) -----

namespace signing {
Bytes draw_announce(std::uint64_t k, std::uint64_t draw_no);
Bytes counter_signed_announce(const DrawAnnounce&);
Bytes announce_aggregate(std::span<const CounterSignedAnnounce>);
Bytes initiator_commit(std::uint64_t draw_no, const CommitmentHash&);
Bytes counter_signed_commit(const InitiatorCommit&);
Bytes commit_aggregate(std::span<const CounterSignedCommit>);
Bytes guarantor_commit(std::uint64_t draw_no, const CommitmentHash&);
Bytes hash_aggregate(std::span<const GuarantorCommit>);
Bytes countersigned_hash_aggregate(const GuarantorHashAggregate&);
Bytes initiator_reveal(const Salt&, std::uint64_t draw_no, std::uint64_t number);
Bytes guarantor_reveal(const Salt&, std::uint64_t draw_no, const Permutation&);
Bytes reveal_aggregate(std::span<const GuarantorReveal>);
Bytes abort_notice(std::uint64_t draw_no, std::uint64_t phase, std::uint64_t cause_code,
                   const std::string& culprit);
}  // namespace signing

// --- commitment preimages ----------------------------------------------------
// The committed secret bytes; the commitment itself is
// commit(secret_bytes, salt) = SHA3-256(salt || secret_bytes), matching the
// salt / draw_no / value field order of the reveal structures.

Bytes number_secret_bytes(std::uint64_t draw_no, std::uint64_t number);
Bytes permutation_secret_bytes(std::uint64_t draw_no, const Permutation&);

// --- decoding ----------------------------------------------------------------

StructureTag peek_tag(ConstSpan bytes);  // throws CodecError on empty input

DrawAnnounce decode_draw_announce(ConstSpan);
CounterSignedAnnounce decode_counter_signed_announce(ConstSpan);
AnnounceAggregate decode_announce_aggregate(ConstSpan);
InitiatorCommit decode_initiator_commit(ConstSpan);
CounterSignedCommit decode_counter_signed_commit(ConstSpan);
CommitAggregate decode_commit_aggregate(ConstSpan);
GuarantorCommit decode_guarantor_commit(ConstSpan);
GuarantorHashAggregate decode_guarantor_hash_aggregate(ConstSpan);
CountersignedHashAggregate decode_countersigned_hash_aggregate(ConstSpan);
InitiatorReveal decode_initiator_reveal(ConstSpan);
GuarantorReveal decode_guarantor_reveal(ConstSpan);
RevealAggregate decode_reveal_aggregate(ConstSpan);
AbortNotice decode_abort_notice(ConstSpan);

/// Draw number carried by a structure of any of the twelve kinds (aggregates
/// report the first entry's). Used for stale-traffic rejection.
std::uint64_t draw_no_of(StructureTag tag, ConstSpan bytes);

}  // namespace fairdraw
