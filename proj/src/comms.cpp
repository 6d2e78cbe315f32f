#include "qmg/comms.hpp"

#include <bit>
#include <cstring>

namespace qmg {

namespace {

void put_u64_be(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
}

std::uint64_t get_u64_be(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | in[i];
  return v;
}

}  // namespace

std::array<std::uint8_t, 29> serialize_frame(const WireFrame& frame) {
  std::array<std::uint8_t, 29> out{};
  out[0] = frame.sender;
  out[1] = static_cast<std::uint8_t>(frame.seq >> 24);
  out[2] = static_cast<std::uint8_t>(frame.seq >> 16);
  out[3] = static_cast<std::uint8_t>(frame.seq >> 8);
  out[4] = static_cast<std::uint8_t>(frame.seq);
  std::memcpy(out.data() + 5, frame.payload.data(), kPayloadBytes);
  return out;
}

Payload encode_frame(int sender, double omega, double p, double q, const NodeAttack* attack,
                     double t) {
  if (attack && attack->active_on(sender, t)) {
    omega += attack->d_omega;
    p += attack->d_p;
    q += attack->d_q;
  }
  Payload out{};
  put_u64_be(out.data(), std::bit_cast<std::uint64_t>(omega));
  put_u64_be(out.data() + 8, std::bit_cast<std::uint64_t>(p));
  put_u64_be(out.data() + 16, std::bit_cast<std::uint64_t>(q));
  return out;
}

Triple decode_payload(const Payload& payload) {
  Triple out;
  out.omega = std::bit_cast<double>(get_u64_be(payload.data()));
  out.p = std::bit_cast<double>(get_u64_be(payload.data() + 8));
  out.q = std::bit_cast<double>(get_u64_be(payload.data() + 16));
  return out;
}

std::size_t KeyBuffer::push(const std::vector<std::uint8_t>& bits, std::size_t count) {
  count = std::min(count, bits.size());
  std::size_t room = cap_ > available() ? cap_ - available() : 0;
  std::size_t stored = std::min(count, room);
  bits_.insert(bits_.end(), bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(stored));
  produced_ += stored;
  return stored;
}

bool KeyBuffer::take(std::array<std::uint8_t, kPayloadBits>& out) {
  if (available() < static_cast<std::size_t>(kPayloadBits)) return false;
  for (int i = 0; i < kPayloadBits; ++i) out[static_cast<std::size_t>(i)] = bits_[head_ + static_cast<std::size_t>(i)];
  head_ += kPayloadBits;
  consumed_ += kPayloadBits;
  if (head_ >= 4096) {
    bits_.erase(bits_.begin(), bits_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
  return true;
}

namespace {

Payload xor_with_bits(const Payload& payload, const std::array<std::uint8_t, kPayloadBits>& bits) {
  Payload out = payload;
  for (int i = 0; i < kPayloadBits; ++i) {
    if (bits[static_cast<std::size_t>(i)])
      out[static_cast<std::size_t>(i / 8)] ^= static_cast<std::uint8_t>(0x80u >> (i % 8));
  }
  return out;
}

}  // namespace

std::optional<Payload> otp_encrypt(const Payload& payload, KeyBuffer& keys) {
  std::array<std::uint8_t, kPayloadBits> bits{};
  if (!keys.take(bits)) return std::nullopt;
  return xor_with_bits(payload, bits);
}

std::optional<Triple> otp_decrypt(const Payload& ciphertext, KeyBuffer& keys) {
  std::array<std::uint8_t, kPayloadBits> bits{};
  if (!keys.take(bits)) return std::nullopt;
  return decode_payload(xor_with_bits(ciphertext, bits));
}

void SecureLink::push_session_keys(const QkdSessionResult& result) {
  // Equal counts on both sides keep the FIFOs index-aligned.
  std::size_t n = std::min(result.key_tx.size(), result.key_rx.size());
  std::size_t room_tx = tx_keys_.capacity() - tx_keys_.available();
  std::size_t room_rx = rx_keys_.capacity() - rx_keys_.available();
  n = std::min({n, room_tx, room_rx});
  tx_keys_.push(result.key_tx, n);
  rx_keys_.push(result.key_rx, n);
}

std::optional<WireFrame> SecureLink::transmit(const Triple& values, const NodeAttack* attack,
                                              double t) {
  Payload plain = encode_frame(tx_dg_, values.omega, values.p, values.q, attack, t);
  std::optional<Payload> cipher = otp_encrypt(plain, tx_keys_);
  if (!cipher) return std::nullopt;
  WireFrame frame;
  frame.sender = static_cast<std::uint8_t>(tx_dg_);
  frame.seq = seq_++;
  frame.payload = *cipher;
  return frame;
}

Triple SecureLink::receive(const WireFrame& frame) {
  std::optional<Triple> decoded = otp_decrypt(frame.payload, rx_keys_);
  // The FIFOs hold identical counts, so a transmitted frame always finds
  // receiver bits.
  if (!decoded) throw std::logic_error("receiver key buffer out of sync");
  return *decoded;
}

}  // namespace qmg
