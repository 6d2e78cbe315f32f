#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <vector>

#include "qmg/qkd.hpp"

namespace qmg {

/// Additive manipulation of a DG's outgoing measurements inside a time window.
struct NodeAttack {
  std::set<int> targets;  // DG indices whose outgoing frames are biased
  double d_omega = 0.0;   // rad/s
  double d_p = 0.0;       // W
  double d_q = 0.0;       // var
  double t_start = 0.0;
  double t_end = std::numeric_limits<double>::infinity();

  bool active_on(int sender, double t) const {
    return t >= t_start && t < t_end && targets.count(sender) > 0;
  }
};

struct Triple {
  double omega = 0.0;
  double p = 0.0;
  double q = 0.0;
};

/// Encrypted measurement body: three 64-bit IEEE-754 doubles, each serialized
/// most-significant byte first, in the order omega, P, Q.
inline constexpr int kPayloadBytes = 24;
inline constexpr int kPayloadBits = kPayloadBytes * 8;
using Payload = std::array<std::uint8_t, kPayloadBytes>;

/// Wire frame: [sender:8][seq:32] header in clear, payload encrypted.
struct WireFrame {
  std::uint8_t sender = 0;
  std::uint32_t seq = 0;
  Payload payload{};
};

/// Serialize header + payload, big-endian throughout (29 bytes).
std::array<std::uint8_t, 29> serialize_frame(const WireFrame& frame);

/// Encode a measurement triple, applying the node attack bias when the sender
/// is targeted and t falls inside the attack window.
Payload encode_frame(int sender, double omega, double p, double q, const NodeAttack* attack,
                     double t);

Triple decode_payload(const Payload& payload);

/// One side's FIFO of key bits for a directed link. Bits enter from accepted
/// sessions (bounded by the capacity) and leave 192 at a time; no bit is ever
/// reused.
class KeyBuffer {
 public:
  explicit KeyBuffer(std::size_t cap_bits) : cap_(cap_bits) {}

  /// Append up to `count` bits; returns how many were stored (capacity may
  /// truncate).
  std::size_t push(const std::vector<std::uint8_t>& bits, std::size_t count);
  std::size_t available() const { return bits_.size() - head_; }
  std::size_t capacity() const { return cap_; }

  /// Remove exactly kPayloadBits bits into `out`; false if underfull.
  bool take(std::array<std::uint8_t, kPayloadBits>& out);

  std::uint64_t produced() const { return produced_; }
  std::uint64_t consumed() const { return consumed_; }

 private:
  std::size_t cap_;
  std::vector<std::uint8_t> bits_;
  std::size_t head_ = 0;
  std::uint64_t produced_ = 0;
  std::uint64_t consumed_ = 0;
};

/// XOR the payload with the next 192 key bits (bit i of the stream maps to
/// payload byte i/8, most-significant bit first). Returns nullopt when fewer
/// than 192 bits are available: the frame is undeliverable this step.
std::optional<Payload> otp_encrypt(const Payload& payload, KeyBuffer& keys);

/// Receiver side of the same operation (XOR is an involution).
std::optional<Triple> otp_decrypt(const Payload& ciphertext, KeyBuffer& keys);

/// One directed secure channel: transmitter- and receiver-side key FIFOs,
/// kept index-aligned by pushing the same number of bits to both, plus the
/// frame sequence counter.
class SecureLink {
 public:
  SecureLink(int tx, int rx, std::size_t cap_bits)
      : tx_dg_(tx), rx_dg_(rx), tx_keys_(cap_bits), rx_keys_(cap_bits) {}

  int tx_dg() const { return tx_dg_; }
  int rx_dg() const { return rx_dg_; }

  /// Store a session's key material on both sides (identical counts, so the
  /// two FIFOs consume the same bit indices).
  void push_session_keys(const QkdSessionResult& result);

  /// Encode + encrypt. Nullopt = key starvation, frame undeliverable.
  std::optional<WireFrame> transmit(const Triple& values, const NodeAttack* attack, double t);

  /// Decrypt + decode. Mismatched key bits yield garbage values; that is the
  /// receiver's problem to detect downstream.
  Triple receive(const WireFrame& frame);

  const KeyBuffer& tx_keys() const { return tx_keys_; }
  const KeyBuffer& rx_keys() const { return rx_keys_; }

 private:
  int tx_dg_;
  int rx_dg_;
  std::uint32_t seq_ = 0;
  KeyBuffer tx_keys_;
  KeyBuffer rx_keys_;
};

}  // namespace qmg
