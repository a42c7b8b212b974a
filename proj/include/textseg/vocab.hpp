// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace textseg {

constexpr size_t kPadId = 0;
constexpr size_t kUnkId = 1;

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  // the dataset grammar's word list (pad/unk + selectors + filler)
  static Vocabulary builtin();

  static Vocabulary load_tsv(const std::string& path);
  void save_tsv(const std::string& path) const;

  size_t size() const { return id_to_token_.size(); }
  size_t id_of(const std::string& token) const;  // kUnkId when absent
  const std::string& token_of(size_t id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, size_t> token_to_id_;
};

struct Tokenized {
  std::vector<size_t> ids;     // length L_max, right-padded with kPadId
  std::vector<uint8_t> keep;   // 1 for real tokens, 0 for pads
  bool empty_input = false;    // warning flag: prompt had no tokens
  double unk_fraction = 0.0;   // share of unknown ids among real tokens
};

// lowercase, whitespace split, truncate to l_max, right-pad
Tokenized tokenize(const std::string& text, const Vocabulary& vocab, size_t l_max);

}  // namespace textseg
