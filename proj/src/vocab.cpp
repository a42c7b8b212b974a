// SPDX-License-Identifier: Apache-2.0
#include "textseg/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "textseg/common.hpp"

namespace textseg {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : id_to_token_(std::move(tokens)) {
  if (id_to_token_.size() < 2 || id_to_token_[kPadId] != "<pad>" || id_to_token_[kUnkId] != "<unk>")
    throw VocabError("vocabulary must start with <pad>, <unk>");
  for (size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], i).second)
      throw VocabError("duplicate token '" + id_to_token_[i] + "'");
  }
}

Vocabulary Vocabulary::builtin() {
  return Vocabulary({
      "<pad>", "<unk>",
      // selector grammar
      "both", "all", "upper", "lower", "left", "right",
      "circle", "circles", "square", "squares", "bar", "bars",
      // instruction filler
      "segment", "show", "find", "highlight", "select", "mask", "outline", "trace",
      "please", "the", "region", "area", "in", "this", "image", "picture", "scene",
      "shape", "located", "at", "of",
  });
}

size_t Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(size_t id) const {
  if (id >= id_to_token_.size())
    throw VocabError("id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(id_to_token_.size()));
  return id_to_token_[id];
}

void Vocabulary::save_tsv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  for (size_t i = 0; i < id_to_token_.size(); ++i) f << id_to_token_[i] << "\t" << i << "\n";
  if (!f) throw IoError("short write to " + path);
}

Vocabulary Vocabulary::load_tsv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw VocabError("malformed vocabulary line: " + line);
    std::string tok = line.substr(0, tab);
    size_t id = std::stoul(line.substr(tab + 1));
    if (id != tokens.size()) throw VocabError("vocabulary ids must be dense, got " + line);
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

Tokenized tokenize(const std::string& text, const Vocabulary& vocab, size_t l_max) {
  if (l_max < 1) throw ConfigError("tokenize: l_max must be >= 1");
  Tokenized out;
  out.ids.assign(l_max, kPadId);
  out.keep.assign(l_max, 0);

  std::string lower;
  lower.reserve(text.size());
  for (char c : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  std::istringstream ss(lower);
  std::string word;
  size_t pos = 0, unk = 0, real = 0;
  while (ss >> word && pos < l_max) {
    size_t id = vocab.id_of(word);
    out.ids[pos] = id;
    out.keep[pos] = 1;
    if (id == kUnkId) ++unk;
    ++real;
    ++pos;
  }
  out.empty_input = (real == 0);
  out.unk_fraction = real == 0 ? 0.0 : static_cast<double>(unk) / static_cast<double>(real);
  return out;
}

}  // namespace textseg
