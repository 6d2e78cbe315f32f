#include "qmg/qkd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qmg {

std::uint8_t measure(const Qubit& q, Basis basis, RandomStream& rng) {
  if (q.basis == basis) return q.bit;
  return rng.next_bit();
}

namespace {

std::vector<std::uint64_t> draw_words(RandomStream& rng, int n_bits) {
  std::vector<std::uint64_t> words(static_cast<std::size_t>((n_bits + 63) / 64));
  for (auto& w : words) w = rng.next_u64();
  return words;
}

inline std::uint8_t word_bit(const std::vector<std::uint64_t>& words, int i) {
  return static_cast<std::uint8_t>((words[static_cast<std::size_t>(i) >> 6] >> (i & 63)) & 1u);
}

}  // namespace

QkdSessionResult run_session(const QkdParams& params, const EveModel& eve, QkdMode mode,
                             RandomStream& rng) {
  const int n = params.n_raw;
  if (n < 16) throw std::invalid_argument("n_raw must be at least 16");

  const auto tx_bits = draw_words(rng, n);
  const auto tx_bases = draw_words(rng, n);
  const auto rx_bases = draw_words(rng, n);

  const bool eve_on = eve.kind == EveKind::intercept_resend && eve.p_intercept > 0.0;
  const bool noise_on = params.p_noise > 0.0;

  QkdSessionResult result;
  result.sifted_tx.reserve(static_cast<std::size_t>(n) / 2 + 64);
  result.sifted_rx.reserve(static_cast<std::size_t>(n) / 2 + 64);

  if (!eve_on && !noise_on) {
    // Undisturbed channel: a matching-basis measurement reproduces the
    // prepared bit exactly, and mismatched positions are discarded by
    // sifting, so only the basis agreement mask is needed.
    for (int i = 0; i < n; ++i) {
      if (word_bit(tx_bases, i) == word_bit(rx_bases, i)) {
        std::uint8_t b = word_bit(tx_bits, i);
        result.sifted_tx.push_back(b);
        result.sifted_rx.push_back(b);
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      Qubit q{static_cast<Basis>(word_bit(tx_bases, i)), word_bit(tx_bits, i)};
      if (eve_on && (eve.p_intercept >= 1.0 || rng.bernoulli(eve.p_intercept))) {
        Basis eve_basis = static_cast<Basis>(rng.next_bit());
        std::uint8_t eve_bit = measure(q, eve_basis, rng);
        q = Qubit{eve_basis, eve_bit};  // collapsed state is re-sent
      }
      if (noise_on && rng.bernoulli(params.p_noise)) q.bit ^= 1u;
      Basis rx_basis = static_cast<Basis>(word_bit(rx_bases, i));
      std::uint8_t rx_bit = measure(q, rx_basis, rng);
      if (word_bit(tx_bases, i) == static_cast<std::uint8_t>(rx_basis)) {
        result.sifted_tx.push_back(word_bit(tx_bits, i));
        result.sifted_rx.push_back(rx_bit);
      }
    }
  }

  if (result.sifted_tx.empty()) throw EmptySiftedKey("sifting yielded zero bits");

  const int sifted_len = static_cast<int>(result.sifted_tx.size());
  if (mode == QkdMode::baseline && params.sacrifice_fraction > 0.0) {
    int zeta = static_cast<int>(std::llround(params.sacrifice_fraction * sifted_len));
    zeta = std::min(zeta, sifted_len);
    if (zeta > 0) {
      // Random sample without replacement: partial Fisher-Yates.
      std::vector<int> order(static_cast<std::size_t>(sifted_len));
      for (int i = 0; i < sifted_len; ++i) order[static_cast<std::size_t>(i)] = i;
      for (int i = 0; i < zeta; ++i) {
        int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(sifted_len - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
      std::vector<bool> sacrificed(static_cast<std::size_t>(sifted_len), false);
      int mismatches = 0;
      for (int i = 0; i < zeta; ++i) {
        int idx = order[static_cast<std::size_t>(i)];
        sacrificed[static_cast<std::size_t>(idx)] = true;
        if (result.sifted_tx[static_cast<std::size_t>(idx)] !=
            result.sifted_rx[static_cast<std::size_t>(idx)])
          ++mismatches;
      }
      result.sacrificed = zeta;
      result.discrepancies = mismatches;
      result.qber_estimate = static_cast<double>(mismatches) / static_cast<double>(zeta);
      for (int i = 0; i < sifted_len; ++i) {
        if (sacrificed[static_cast<std::size_t>(i)]) continue;
        result.key_tx.push_back(result.sifted_tx[static_cast<std::size_t>(i)]);
        result.key_rx.push_back(result.sifted_rx[static_cast<std::size_t>(i)]);
      }
      return result;
    }
  }

  // Fortified mode (or a zero sample): no bits are sacrificed and no
  // estimate is produced; the whole sifted sequence is key material.
  result.key_tx = result.sifted_tx;
  result.key_rx = result.sifted_rx;
  return result;
}

KeyDecision baseline_accept(const QkdSessionResult& result, double threshold) {
  if (!result.qber_estimate) throw std::invalid_argument("result carries no qber estimate");
  return *result.qber_estimate > threshold ? KeyDecision::discard : KeyDecision::accept;
}

}  // namespace qmg
