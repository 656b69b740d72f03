#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "dmine/error.hpp"

namespace dmine {

// Binary NKCS genome.
class BitGenome {
public:
  BitGenome() = default;
  explicit BitGenome(std::size_t n) : alleles_(n, 0) {}
  BitGenome(std::initializer_list<int> bits) {
    alleles_.reserve(bits.size());
    for (int b : bits) alleles_.push_back(b ? 1 : 0);
  }

  std::size_t size() const noexcept { return alleles_.size(); }
  std::uint8_t operator[](std::size_t i) const noexcept { return alleles_[i]; }
  void set(std::size_t i, bool value) { alleles_[i] = value ? 1 : 0; }
  void flip(std::size_t i) { alleles_[i] ^= 1; }
  const std::vector<std::uint8_t>& alleles() const noexcept { return alleles_; }

  std::size_t count() const noexcept {
    std::size_t c = 0;
    for (auto a : alleles_) c += a;
    return c;
  }

  std::string str() const {
    std::string s;
    s.reserve(alleles_.size());
    for (auto a : alleles_) s.push_back(a ? '1' : '0');
    return s;
  }

  // Accepts a string of '0'/'1'. `expected` of 0 skips the length check.
  static BitGenome parse(std::string_view text, std::size_t expected = 0) {
    if (expected != 0 && text.size() != expected)
      throw ValidationError("binary genome has length " + std::to_string(text.size()) +
                            ", expected length " + std::to_string(expected));
    BitGenome g(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] != '0' && text[i] != '1')
        throw ValidationError("binary genome: invalid character '" + std::string(1, text[i]) +
                              "' at position " + std::to_string(i));
      g.alleles_[i] = text[i] == '1';
    }
    return g;
  }

  friend bool operator==(const BitGenome&, const BitGenome&) = default;

private:
  std::vector<std::uint8_t> alleles_;
};

// 12-gene anodic insert genome; genes 3i..3i+2 describe section i (0 = bottom).
class InsertGenome {
public:
  static constexpr std::size_t kGenes = 12;
  static constexpr int kMaxAllele = 3;

  InsertGenome() { genes_.fill(0); }
  InsertGenome(std::initializer_list<int> genes) {
    if (genes.size() != kGenes)
      throw ValidationError("insert genome needs 12 genes, got " + std::to_string(genes.size()));
    std::size_t i = 0;
    for (int g : genes) set(i++, g);
  }

  static constexpr std::size_t size() noexcept { return kGenes; }
  int operator[](std::size_t i) const noexcept { return genes_[i]; }

  void set(std::size_t i, int value) {
    if (value < 0 || value > kMaxAllele)
      throw ValidationError("insert genome: allele " + std::to_string(value) + " at index " +
                            std::to_string(i) + " is outside [0,3]");
    genes_[i] = static_cast<std::uint8_t>(value);
  }

  int sum() const noexcept {
    int s = 0;
    for (auto g : genes_) s += g;
    return s;
  }

  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < kGenes; ++i) {
      if (i) s.push_back(',');
      s.push_back(static_cast<char>('0' + genes_[i]));
    }
    return s;
  }

  // Comma-separated integers, e.g. "1,1,0,1,1,2,0,2,1,0,1,0".
  static InsertGenome parse(std::string_view text) {
    InsertGenome g;
    std::size_t index = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t comma = std::min(text.find(',', pos), text.size());
      std::string_view tok = text.substr(pos, comma - pos);
      while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
      while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
      if (index >= kGenes)
        throw ValidationError("insert genome has more than 12 genes");
      if (tok.size() != 1 || tok[0] < '0' || tok[0] > '9')
        throw ValidationError("insert genome: malformed gene '" + std::string(tok) +
                              "' at index " + std::to_string(index));
      g.set(index++, tok[0] - '0');
      pos = comma + 1;
    }
    if (index != kGenes)
      throw ValidationError("insert genome has " + std::to_string(index) + " genes, expected 12");
    return g;
  }

  friend bool operator==(const InsertGenome&, const InsertGenome&) = default;

private:
  std::array<std::uint8_t, kGenes> genes_{};
};

// One genome per cascade position, index 0 = top of the cascade.
template <class G>
using Cascade = std::vector<G>;

using CascadeConfig = Cascade<BitGenome>;

}  // namespace dmine
