#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "fairdraw/bytes.hpp"

namespace fairdraw {

class CryptoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 512-bit commitment salt. Widens the commitment preimage space so that
/// dictionary attacks on the small committed values are infeasible.
struct Salt {
  static constexpr std::size_t kSize = 64;
  std::array<std::uint8_t, kSize> bytes{};
  bool operator==(const Salt&) const = default;
};

struct Hash32 {
  static constexpr std::size_t kSize = 32;
  std::array<std::uint8_t, kSize> bytes{};
  bool operator==(const Hash32&) const = default;
  std::string hex() const { return to_hex(ConstSpan(bytes.data(), bytes.size())); }
};

using CommitmentHash = Hash32;

Hash32 sha3_256(ConstSpan data);

/// Commitment hash over (salt bytes || secret bytes). The salt-first layout
/// is fixed protocol-wide; all parties recompute exactly this.
CommitmentHash commit(ConstSpan secret, const Salt& salt);
bool verify_commitment(const CommitmentHash& h, ConstSpan secret, const Salt& salt);

// ---------------------------------------------------------------------------
// Detached signatures
// ---------------------------------------------------------------------------

enum class SchemeId : std::uint8_t { ed25519 = 1 };

const char* scheme_name(SchemeId id);
std::optional<SchemeId> scheme_from_name(const std::string& name);

struct PublicKey {
  SchemeId scheme = SchemeId::ed25519;
  Bytes bytes;
  bool operator==(const PublicKey&) const = default;
};

struct SecretKey {
  SchemeId scheme = SchemeId::ed25519;
  Bytes bytes;
};

struct KeyPair {
  std::string signer_id;  // human-readable participant name
  PublicKey pub;
  SecretKey sec;
};

class EntropySource;

KeyPair generate_keypair(const std::string& signer_id, EntropySource& src,
                         SchemeId scheme = SchemeId::ed25519);

Bytes sign(const SecretKey& key, ConstSpan message);

/// True iff `sig` was produced by the secret key matching `key` over exactly
/// `message`. Malformed key or signature sizes raise CryptoError instead of
/// returning false.
bool verify(const PublicKey& key, ConstSpan message, ConstSpan sig);

// Key files: 4-byte magic ("FDPK"/"FDSK"), 1-byte scheme id, raw key bytes.
void write_public_key_file(const std::string& path, const PublicKey& key);
PublicKey read_public_key_file(const std::string& path);
void write_secret_key_file(const std::string& path, const SecretKey& key);
SecretKey read_secret_key_file(const std::string& path);

// ---------------------------------------------------------------------------
// Entropy
// ---------------------------------------------------------------------------

/// Random-bit source. The raw stream (seeded: SHAKE256 counter stream
/// standing in for a hardware generator; system: OS entropy) is XOR-combined
/// with a ChaCha20 keystream before any byte is handed out.
///
/// Single-owner: not safe for concurrent use; the protocol layer forks one
/// source per draw.
class EntropySource {
 public:
  enum class Mode { seeded, system };

  static EntropySource seeded(const std::array<std::uint8_t, 32>& seed);
  static EntropySource system();

  Mode mode() const { return mode_; }

  void fill(std::span<std::uint8_t> out);
  std::uint64_t next_u64();

  /// Uniform integer in [0, k) by rejection sampling on 64-bit draws; no
  /// modulo bias. k == 0 is an error.
  std::uint64_t next_below(std::uint64_t k);

  Salt next_salt();
  std::array<std::uint8_t, 32> next_key32();

  /// Derived child source. Seeded mode: pure function of (seed, label);
  /// system mode: an independent system source.
  EntropySource fork(std::uint64_t label) const;

 private:
  EntropySource() = default;
  void refill();

  Mode mode_ = Mode::system;
  std::array<std::uint8_t, 32> seed_{};
  std::array<std::uint8_t, 32> prng_key_{};
  std::uint64_t chunk_ = 0;
  std::array<std::uint8_t, 512> buf_{};
  std::size_t pos_ = sizeof(buf_);  // empty until first refill
};

}  // namespace fairdraw
