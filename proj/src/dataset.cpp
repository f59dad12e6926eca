#include "prefmem/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "prefmem/errors.hpp"
#include "prefmem/util.hpp"

namespace prefmem {

using nlohmann::json;

json DataPoint::to_json() const {
  json turns = json::array();
  for (const auto& t : extraction_conversation.turns) {
    turns.push_back({{"speaker", t.speaker}, {"text", t.text}});
  }
  return json{
      {"id", id},
      {"user_id", user_id},
      {"ground_truth",
       {{"main", ground_truth.path.main},
        {"sub", ground_truth.path.sub},
        {"detail", ground_truth.path.detail},
        {"value", ground_truth.value},
        {"sentence", ground_truth.source_sentence}}},
      {"extraction_conversation",
       {{"conversation_id", extraction_conversation.conversation_id}, {"turns", turns}}},
      {"retrieval_utterance", retrieval_utterance},
      {"maintenance_utterances",
       {{"equal", maintenance_utterances.equal},
        {"negate", maintenance_utterances.negate},
        {"different", maintenance_utterances.different}}}};
}

DataPoint DataPoint::from_json(const json& j) {
  DataPoint p;
  p.id = j.at("id").get<std::string>();
  p.user_id = j.at("user_id").get<std::string>();
  const json& gt = j.at("ground_truth");
  p.ground_truth.path = CategoryPath{gt.at("main").get<std::string>(),
                                     gt.at("sub").get<std::string>(),
                                     gt.at("detail").get<std::string>()};
  p.ground_truth.value = gt.at("value").get<std::string>();
  p.ground_truth.source_sentence = gt.at("sentence").get<std::string>();
  const json& conv = j.at("extraction_conversation");
  p.extraction_conversation.conversation_id = conv.at("conversation_id").get<std::string>();
  for (const auto& jt : conv.at("turns")) {
    p.extraction_conversation.turns.push_back(
        Turn{jt.at("speaker").get<std::string>(), jt.at("text").get<std::string>()});
  }
  p.ground_truth.conversation_id = p.extraction_conversation.conversation_id;
  p.retrieval_utterance = j.at("retrieval_utterance").get<std::string>();
  const json& mu = j.at("maintenance_utterances");
  if (!mu.contains("equal") || !mu.contains("negate") || !mu.contains("different")) {
    throw ParseError("data point \"" + p.id +
                     "\" must carry equal, negate and different maintenance utterances");
  }
  p.maintenance_utterances.equal = mu.at("equal").get<std::string>();
  p.maintenance_utterances.negate = mu.at("negate").get<std::string>();
  p.maintenance_utterances.different = mu.at("different").get<std::string>();
  return p;
}

namespace {

void validate_point(const DataPoint& p, const CategoryTaxonomy& taxonomy) {
  if (!validate_path(taxonomy, p.ground_truth.path)) {
    throw ValidationError("ground-truth path does not resolve in the taxonomy: " +
                          p.ground_truth.path.str());
  }
  if (util::trim(p.ground_truth.value).empty()) {
    throw ValidationError("ground-truth value is empty");
  }
  if (util::trim(p.retrieval_utterance).empty()) {
    throw ValidationError("retrieval utterance is empty");
  }
  if (util::trim(p.maintenance_utterances.equal).empty() ||
      util::trim(p.maintenance_utterances.negate).empty() ||
      util::trim(p.maintenance_utterances.different).empty()) {
    throw ValidationError("maintenance utterances must all be non-empty");
  }
  validate_transcript(p.extraction_conversation);
}

}  // namespace

CorpusLoadResult load_corpus(const std::filesystem::path& path,
                             const CategoryTaxonomy& taxonomy) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(path)) file = path / "data_points.jsonl";
  if (!std::filesystem::exists(file)) {
    throw StorageError("corpus file not found: " + file.string());
  }

  CorpusLoadResult result;
  std::ifstream in(file);
  std::string line;
  size_t lineno = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    const std::string where = file.filename().string() + ":" + std::to_string(lineno);
    try {
      DataPoint p = DataPoint::from_json(json::parse(line));
      validate_point(p, taxonomy);
      if (!ids.insert(p.id).second) {
        throw ValidationError("duplicate data point id \"" + p.id + "\"");
      }
      result.points.push_back(std::move(p));
    } catch (const json::parse_error& e) {
      result.issues.push_back(where + ": " + e.what());
    } catch (const Error& e) {
      result.issues.push_back(where + ": " + e.what());
    }
  }
  return result;
}

std::string serialize_corpus(const std::vector<DataPoint>& points) {
  std::string out;
  for (const auto& p : points) {
    out += p.to_json().dump();
    out += "\n";
  }
  return out;
}

namespace {

size_t word_count(const std::string& text) { return util::tokenize(text).size(); }

}  // namespace

CorpusStats corpus_stats(const std::vector<DataPoint>& points) {
  if (points.empty()) throw ValidationError("cannot compute statistics of an empty corpus");
  CorpusStats s;
  s.extraction_conversations = points.size();
  s.retrieval_utterances = points.size();
  s.maintenance_utterances = points.size() * 3;

  size_t turns = 0;
  size_t conv_words = 0;
  size_t retrieval_words = 0;
  size_t maintenance_words = 0;
  for (const auto& p : points) {
    turns += p.extraction_conversation.turns.size();
    for (const auto& t : p.extraction_conversation.turns) conv_words += word_count(t.text);
    retrieval_words += word_count(p.retrieval_utterance);
    maintenance_words += word_count(p.maintenance_utterances.equal);
    maintenance_words += word_count(p.maintenance_utterances.negate);
    maintenance_words += word_count(p.maintenance_utterances.different);
  }
  const double n = static_cast<double>(points.size());
  s.avg_turns_per_conversation = static_cast<double>(turns) / n;
  s.avg_words_per_conversation = static_cast<double>(conv_words) / n;
  s.avg_words_per_retrieval_utterance = static_cast<double>(retrieval_words) / n;
  s.avg_words_per_maintenance_utterance =
      static_cast<double>(maintenance_words) / static_cast<double>(s.maintenance_utterances);
  return s;
}

std::pair<std::vector<DataPoint>, std::vector<DataPoint>> split_corpus(
    const std::vector<DataPoint>& points, double first_fraction, double second_fraction,
    uint64_t seed) {
  if (std::abs(first_fraction + second_fraction - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }
  if (first_fraction < 0.0 || second_fraction < 0.0) {
    throw ValidationError("split fractions must be non-negative");
  }

  // Group by main category, in stable (sorted) order.
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < points.size(); ++i) {
    groups[points[i].ground_truth.path.main].push_back(i);
  }

  // Hand-rolled Fisher-Yates so the split is identical across platforms.
  std::mt19937_64 rng(seed);
  for (auto& [_, idx] : groups) {
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return points[a].id < points[b].id; });
    for (size_t i = idx.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng() % i);
      std::swap(idx[i - 1], idx[j]);
    }
  }

  // Largest-remainder allocation: exact global size, near-exact per group.
  const size_t total_first =
      static_cast<size_t>(std::llround(first_fraction * static_cast<double>(points.size())));
  std::vector<std::pair<double, std::string>> remainders;
  std::map<std::string, size_t> take;
  size_t allocated = 0;
  for (const auto& [main, idx] : groups) {
    double exact = first_fraction * static_cast<double>(idx.size());
    size_t base = static_cast<size_t>(std::floor(exact));
    take[main] = base;
    allocated += base;
    remainders.push_back({exact - static_cast<double>(base), main});
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const auto& [_, main] : remainders) {
    if (allocated >= total_first) break;
    if (take[main] < groups[main].size()) {
      ++take[main];
      ++allocated;
    }
  }

  std::vector<DataPoint> first;
  std::vector<DataPoint> second;
  for (const auto& [main, idx] : groups) {
    for (size_t i = 0; i < idx.size(); ++i) {
      (i < take[main] ? first : second).push_back(points[idx[i]]);
    }
  }
  return {std::move(first), std::move(second)};
}

double distinct_n(const std::vector<std::string>& texts, int n) {
  if (n < 1 || n > 3) throw ValidationError("distinct-n supports n in {1,2,3}");
  std::vector<std::string> tokens;
  for (const auto& t : texts) {
    for (auto& tok : util::tokenize(t)) tokens.push_back(std::move(tok));
  }
  if (tokens.size() < static_cast<size_t>(n)) {
    throw ValidationError("distinct-n requires at least n tokens");
  }
  std::set<std::string> unique;
  const size_t total = tokens.size() - static_cast<size_t>(n) + 1;
  for (size_t i = 0; i < total; ++i) {
    std::string gram = tokens[i];
    for (int j = 1; j < n; ++j) {
      gram += ' ';
      gram += tokens[i + static_cast<size_t>(j)];
    }
    unique.insert(std::move(gram));
  }
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

}  // namespace prefmem
