#include "fairdraw/crypto.hpp"

#include <openssl/evp.h>
#include <sodium.h>

#include <cstdio>
#include <fstream>
#include <mutex>

namespace fairdraw {

namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw CryptoError("libsodium initialization failed");
  });
}

struct MdCtx {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  ~MdCtx() { EVP_MD_CTX_free(ctx); }
};

}  // namespace

Hash32 sha3_256(ConstSpan data) {
  thread_local MdCtx md;
  Hash32 out;
  unsigned int len = 0;
  if (EVP_DigestInit_ex(md.ctx, EVP_sha3_256(), nullptr) != 1 ||
      EVP_DigestUpdate(md.ctx, data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(md.ctx, out.bytes.data(), &len) != 1 || len != Hash32::kSize) {
    throw CryptoError("SHA3-256 failed");
  }
  return out;
}

static void shake256(ConstSpan data, std::span<std::uint8_t> out) {
  thread_local MdCtx md;
  if (EVP_DigestInit_ex(md.ctx, EVP_shake256(), nullptr) != 1 ||
      EVP_DigestUpdate(md.ctx, data.data(), data.size()) != 1 ||
      EVP_DigestFinalXOF(md.ctx, out.data(), out.size()) != 1) {
    throw CryptoError("SHAKE256 failed");
  }
}

CommitmentHash commit(ConstSpan secret, const Salt& salt) {
  Bytes preimage;
  preimage.reserve(Salt::kSize + secret.size());
  preimage.insert(preimage.end(), salt.bytes.begin(), salt.bytes.end());
  preimage.insert(preimage.end(), secret.begin(), secret.end());
  return sha3_256(as_span(preimage));
}

bool verify_commitment(const CommitmentHash& h, ConstSpan secret, const Salt& salt) {
  return commit(secret, salt) == h;
}

// ---------------------------------------------------------------------------
// Ed25519 detached signatures (libsodium)
// ---------------------------------------------------------------------------

const char* scheme_name(SchemeId id) {
  switch (id) {
    case SchemeId::ed25519:
      return "ed25519";
  }
  return "unknown";
}

std::optional<SchemeId> scheme_from_name(const std::string& name) {
  if (name == "ed25519") return SchemeId::ed25519;
  return std::nullopt;
}

KeyPair generate_keypair(const std::string& signer_id, EntropySource& src, SchemeId scheme) {
  ensure_sodium();
  if (scheme != SchemeId::ed25519) throw CryptoError("unsupported signature scheme");
  std::array<std::uint8_t, crypto_sign_SEEDBYTES> seed{};
  src.fill(seed);
  KeyPair kp;
  kp.signer_id = signer_id;
  kp.pub.scheme = scheme;
  kp.pub.bytes.resize(crypto_sign_PUBLICKEYBYTES);
  kp.sec.scheme = scheme;
  kp.sec.bytes.resize(crypto_sign_SECRETKEYBYTES);
  if (crypto_sign_seed_keypair(kp.pub.bytes.data(), kp.sec.bytes.data(), seed.data()) != 0)
    throw CryptoError("ed25519 keygen failed");
  return kp;
}

Bytes sign(const SecretKey& key, ConstSpan message) {
  ensure_sodium();
  if (key.scheme != SchemeId::ed25519) throw CryptoError("unsupported signature scheme");
  if (key.bytes.size() != crypto_sign_SECRETKEYBYTES) throw CryptoError("malformed secret key");
  Bytes sig(crypto_sign_BYTES);
  if (crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(),
                           key.bytes.data()) != 0)
    throw CryptoError("ed25519 sign failed");
  return sig;
}

bool verify(const PublicKey& key, ConstSpan message, ConstSpan sig) {
  ensure_sodium();
  if (key.scheme != SchemeId::ed25519) throw CryptoError("unsupported signature scheme");
  if (key.bytes.size() != crypto_sign_PUBLICKEYBYTES) throw CryptoError("malformed public key");
  if (sig.size() != crypto_sign_BYTES) throw CryptoError("malformed signature");
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(),
                                     key.bytes.data()) == 0;
}

// ---------------------------------------------------------------------------
// Key files
// ---------------------------------------------------------------------------

static constexpr char kPublicMagic[4] = {'F', 'D', 'P', 'K'};
static constexpr char kSecretMagic[4] = {'F', 'D', 'S', 'K'};

static void write_key_file(const std::string& path, const char magic[4], SchemeId scheme,
                           const Bytes& raw) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CryptoError("cannot write key file: " + path);
  f.write(magic, 4);
  char sid = static_cast<char>(scheme);
  f.write(&sid, 1);
  f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw CryptoError("short write to key file: " + path);
}

static std::pair<SchemeId, Bytes> read_key_file(const std::string& path, const char magic[4]) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CryptoError("cannot read key file: " + path);
  char head[5];
  f.read(head, 5);
  if (f.gcount() != 5 || std::memcmp(head, magic, 4) != 0)
    throw CryptoError("bad key file magic: " + path);
  if (head[4] != static_cast<char>(SchemeId::ed25519))
    throw CryptoError("unknown signature scheme in key file: " + path);
  Bytes raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return {static_cast<SchemeId>(head[4]), std::move(raw)};
}

void write_public_key_file(const std::string& path, const PublicKey& key) {
  write_key_file(path, kPublicMagic, key.scheme, key.bytes);
}

PublicKey read_public_key_file(const std::string& path) {
  auto [scheme, raw] = read_key_file(path, kPublicMagic);
  if (raw.size() != crypto_sign_PUBLICKEYBYTES)
    throw CryptoError("bad public key length in " + path);
  return PublicKey{scheme, std::move(raw)};
}

void write_secret_key_file(const std::string& path, const SecretKey& key) {
  write_key_file(path, kSecretMagic, key.scheme, key.bytes);
}

SecretKey read_secret_key_file(const std::string& path) {
  auto [scheme, raw] = read_key_file(path, kSecretMagic);
  if (raw.size() != crypto_sign_SECRETKEYBYTES)
    throw CryptoError("bad secret key length in " + path);
  return SecretKey{scheme, std::move(raw)};
}

// ---------------------------------------------------------------------------
// EntropySource
// ---------------------------------------------------------------------------

static std::array<std::uint8_t, 32> derive32(const std::array<std::uint8_t, 32>& seed,
                                             const char* label, std::uint64_t n) {
  ByteWriter w;
  w.raw(ConstSpan(seed.data(), seed.size()));
  w.raw(as_span(std::string(label)));
  w.u64(n);
  Hash32 h = sha3_256(as_span(w.bytes()));
  return h.bytes;
}

EntropySource EntropySource::seeded(const std::array<std::uint8_t, 32>& seed) {
  ensure_sodium();
  EntropySource src;
  src.mode_ = Mode::seeded;
  src.seed_ = seed;
  src.prng_key_ = derive32(seed, "fairdraw.prng", 0);
  return src;
}

EntropySource EntropySource::system() {
  ensure_sodium();
  EntropySource src;
  src.mode_ = Mode::system;
  randombytes_buf(src.prng_key_.data(), src.prng_key_.size());
  return src;
}

void EntropySource::refill() {
  // Raw stream for this chunk.
  if (mode_ == Mode::seeded) {
    ByteWriter w;
    w.raw(ConstSpan(seed_.data(), seed_.size()));
    w.raw(as_span(std::string("fairdraw.raw")));
    w.u64(chunk_);
    shake256(as_span(w.bytes()), buf_);
  } else {
    randombytes_buf(buf_.data(), buf_.size());
  }
  // XOR with the ChaCha20 keystream, nonce = chunk counter.
  std::array<std::uint8_t, crypto_stream_chacha20_NONCEBYTES> nonce{};
  for (int i = 0; i < 8; ++i) nonce[i] = static_cast<std::uint8_t>(chunk_ >> (56 - 8 * i));
  std::array<std::uint8_t, sizeof(buf_)> stream{};
  crypto_stream_chacha20(stream.data(), stream.size(), nonce.data(), prng_key_.data());
  for (std::size_t i = 0; i < buf_.size(); ++i) buf_[i] ^= stream[i];
  ++chunk_;
  pos_ = 0;
}

void EntropySource::fill(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    if (pos_ == buf_.size()) refill();
    std::size_t n = std::min(out.size() - done, buf_.size() - pos_);
    std::memcpy(out.data() + done, buf_.data() + pos_, n);
    pos_ += n;
    done += n;
  }
}

std::uint64_t EntropySource::next_u64() {
  std::array<std::uint8_t, 8> b{};
  fill(b);
  std::uint64_t v = 0;
  for (std::uint8_t x : b) v = (v << 8) | x;
  return v;
}

std::uint64_t EntropySource::next_below(std::uint64_t k) {
  if (k == 0) throw std::invalid_argument("next_below: k must be >= 1");
  if (k == 1) return 0;
  // Accept only draws above 2^64 mod k; the accepted range is a multiple of k.
  const std::uint64_t min = (0 - k) % k;
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= min) return r % k;
  }
}

Salt EntropySource::next_salt() {
  Salt s;
  fill(s.bytes);
  return s;
}

std::array<std::uint8_t, 32> EntropySource::next_key32() {
  std::array<std::uint8_t, 32> k{};
  fill(k);
  return k;
}

EntropySource EntropySource::fork(std::uint64_t label) const {
  if (mode_ == Mode::system) return EntropySource::system();
  return EntropySource::seeded(derive32(seed_, "fairdraw.fork", label));
}

}  // namespace fairdraw
