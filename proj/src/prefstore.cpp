#include "prefmem/prefstore.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "prefmem/errors.hpp"
#include "prefmem/util.hpp"

namespace prefmem {

using nlohmann::json;

json Preference::to_json() const {
  return json{{"id", id},
              {"user_id", user_id},
              {"main", path.main},
              {"sub", path.sub},
              {"detail", path.detail},
              {"value", value},
              {"source_sentence", source_sentence},
              {"embedding", embedding.values},
              {"embedding_model", embedding.model_id},
              {"created_at", created_at},
              {"updated_at", updated_at},
              {"origin_conversation_id", origin_conversation_id},
              {"taxonomy_version", taxonomy_version}};
}

Preference Preference::from_json(const json& j) {
  Preference p;
  p.id = j.at("id").get<std::string>();
  p.user_id = j.at("user_id").get<std::string>();
  p.path = CategoryPath{j.at("main").get<std::string>(), j.at("sub").get<std::string>(),
                        j.at("detail").get<std::string>()};
  p.value = j.at("value").get<std::string>();
  p.source_sentence = j.value("source_sentence", "");
  p.embedding.values = j.value("embedding", std::vector<double>{});
  p.embedding.model_id = j.value("embedding_model", "");
  p.created_at = j.value("created_at", "");
  p.updated_at = j.value("updated_at", "");
  p.origin_conversation_id = j.value("origin_conversation_id", "");
  p.taxonomy_version = j.value("taxonomy_version", "");
  return p;
}

namespace {

std::time_t parse_iso8601(const std::string& s) {
  std::tm tm{};
  if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                  &tm.tm_hour, &tm.tm_min, &tm.tm_sec) != 6) {
    return 0;
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  return timegm(&tm);
}

bool valid_user_id(const std::string& user_id) {
  if (user_id.empty() || user_id.size() > 64) return false;
  for (char c : user_id) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') {
      return false;
    }
  }
  return true;
}

}  // namespace

struct PreferenceStore::UserData {
  std::mutex mutex;
  std::string user_id;
  std::vector<Preference> prefs;        // live, insertion-ordered
  std::vector<Preference> quarantined;  // paths stranded by a taxonomy change
  std::set<std::string> optouts;
  struct Idem {
    std::string timestamp;
    json response;
  };
  std::map<std::string, Idem> idem;
  uint64_t seq = 0;
  std::ofstream log;

  void bump_seq(const std::string& id) {
    size_t pos = id.rfind("-p");
    if (pos == std::string::npos) return;
    uint64_t n = std::strtoull(id.c_str() + pos + 2, nullptr, 10);
    if (n >= seq) seq = n + 1;
  }

  std::string next_id() {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06llu", static_cast<unsigned long long>(seq++));
    return user_id + "-p" + buf;
  }

  void append_record(const json& record) {
    log << record.dump() << "\n";
    log.flush();
    if (!log) throw StorageError("failed to append to mutation log of user " + user_id);
  }
};

PreferenceStore::PreferenceStore(std::filesystem::path root, const CategoryTaxonomy& taxonomy,
                                 StoreOptions options)
    : root_(std::move(root)), taxonomy_(taxonomy), options_(std::move(options)) {
  if (!options_.clock) options_.clock = util::utc_now_iso8601;
  std::error_code ec;
  std::filesystem::create_directories(root_ / "users", ec);
  if (ec) throw StorageError("cannot create storage root " + root_.string());
}

std::filesystem::path PreferenceStore::log_path(const std::string& user_id) const {
  return root_ / "users" / (user_id + ".jsonl");
}

std::shared_ptr<PreferenceStore::UserData> PreferenceStore::user_data(
    const std::string& user_id) const {
  if (!valid_user_id(user_id)) throw ValidationError("malformed user id \"" + user_id + "\"");
  // Loading holds the map lock so only one thread replays and compacts a log.
  std::lock_guard<std::mutex> map_lock(users_mutex_);
  if (auto it = users_.find(user_id); it != users_.end()) return it->second;

  auto data = std::make_shared<UserData>();
  data->user_id = user_id;
  const auto path = log_path(user_id);

  // Replay the mutation log.
  std::vector<Preference> replayed;
  if (std::filesystem::exists(path)) {
    std::vector<std::string> lines;
    {
      std::ifstream in(path);
      std::string line;
      while (std::getline(in, line)) lines.push_back(std::move(line));
    }
    while (!lines.empty() && util::trim(lines.back()).empty()) lines.pop_back();
    for (size_t lineno = 1; lineno <= lines.size(); ++lineno) {
      const std::string& line = lines[lineno - 1];
      if (util::trim(line).empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::parse_error&) {
        // A torn final line is an unacknowledged write; drop it. Corruption
        // anywhere else means the log cannot be trusted.
        if (lineno == lines.size()) break;
        throw StorageError("corrupt mutation log " + path.string() + " at line " +
                           std::to_string(lineno));
      }
      const std::string op = rec.value("op", "");
      if (op == "insert") {
        replayed.push_back(Preference::from_json(rec.at("pref")));
      } else if (op == "delete") {
        const std::string id = rec.value("id", "");
        std::erase_if(replayed, [&](const Preference& p) { return p.id == id; });
      } else if (op == "purge") {
        const std::string sub = rec.value("sub", "");
        std::erase_if(replayed, [&](const Preference& p) { return p.path.sub == sub; });
      } else if (op == "optout") {
        for (const auto& s : rec.value("subs", std::vector<std::string>{})) {
          data->optouts.insert(s);
        }
      } else if (op == "idem") {
        data->idem[rec.value("key", "")] =
            UserData::Idem{rec.value("timestamp", ""), rec.value("response", json())};
      } else {
        throw StorageError("unknown op \"" + op + "\" in " + path.string());
      }
    }
  }

  // Revalidate against the active taxonomy; stranded paths are quarantined.
  for (auto& p : replayed) {
    data->bump_seq(p.id);
    if (validate_path(taxonomy_, p.path)) {
      data->prefs.push_back(std::move(p));
    } else {
      data->quarantined.push_back(std::move(p));
    }
  }

  // Drop expired idempotency markers.
  const std::time_t now = parse_iso8601(options_.clock());
  const double ttl_s = options_.idempotency_ttl_hours * 3600.0;
  for (auto it = data->idem.begin(); it != data->idem.end();) {
    if (now != 0 && std::difftime(now, parse_iso8601(it->second.timestamp)) > ttl_s) {
      it = data->idem.erase(it);
    } else {
      ++it;
    }
  }

  // Compact: rewrite the log so it holds only the surviving state.
  {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw StorageError("cannot rewrite mutation log " + path.string());
    for (const auto& p : data->prefs) out << json{{"op", "insert"}, {"pref", p.to_json()}}.dump() << "\n";
    for (const auto& p : data->quarantined) {
      out << json{{"op", "insert"}, {"pref", p.to_json()}}.dump() << "\n";
    }
    if (!data->optouts.empty()) {
      out << json{{"op", "optout"},
                  {"subs", std::vector<std::string>(data->optouts.begin(), data->optouts.end())}}
                 .dump()
          << "\n";
    }
    for (const auto& [key, idem] : data->idem) {
      out << json{{"op", "idem"},
                  {"key", key},
                  {"timestamp", idem.timestamp},
                  {"response", idem.response}}
                 .dump()
          << "\n";
    }
  }

  data->log.open(path, std::ios::app);
  if (!data->log) throw StorageError("cannot open mutation log " + path.string());

  users_.emplace(user_id, data);
  return data;
}

Preference PreferenceStore::insert(const std::string& user_id,
                                   const CandidatePreference& candidate,
                                   const EmbeddingVector& embedding) {
  if (!validate_path(taxonomy_, candidate.path)) {
    throw ValidationError("insert with path not in active taxonomy: " + candidate.path.str());
  }
  if (embedding.dim() != options_.embedding_dim) {
    throw ValidationError("embedding dimension " + std::to_string(embedding.dim()) +
                          " does not match store dimension " +
                          std::to_string(options_.embedding_dim));
  }
  if (util::trim(candidate.value).empty()) {
    throw ValidationError("cannot insert preference with empty value");
  }
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  Preference p;
  p.id = data->next_id();
  p.user_id = user_id;
  p.path = candidate.path;
  p.value = candidate.value;
  p.source_sentence = candidate.source_sentence;
  p.embedding = embedding;
  p.created_at = options_.clock();
  p.updated_at = p.created_at;
  p.origin_conversation_id = candidate.conversation_id;
  p.taxonomy_version = taxonomy_.version;
  data->append_record(json{{"op", "insert"}, {"pref", p.to_json()}});
  data->prefs.push_back(p);
  return p;
}

bool PreferenceStore::erase(const std::string& user_id, const std::string& preference_id) {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  auto it = std::find_if(data->prefs.begin(), data->prefs.end(),
                         [&](const Preference& p) { return p.id == preference_id; });
  if (it == data->prefs.end()) return false;
  data->append_record(json{{"op", "delete"}, {"id", preference_id}});
  data->prefs.erase(it);
  return true;
}

std::optional<Preference> PreferenceStore::get(const std::string& user_id,
                                               const std::string& preference_id) const {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  for (const auto& p : data->prefs) {
    if (p.id == preference_id) return p;
  }
  return std::nullopt;
}

std::vector<Preference> PreferenceStore::by_detail_category(const std::string& user_id,
                                                            const CategoryPath& path) const {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  std::vector<Preference> out;
  for (const auto& p : data->prefs) {
    if (p.path == path) out.push_back(p);
  }
  return out;
}

size_t PreferenceStore::purge_category(const std::string& user_id,
                                       const std::string& sub_category_id) {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  size_t before = data->prefs.size();
  std::erase_if(data->prefs, [&](const Preference& p) { return p.path.sub == sub_category_id; });
  size_t removed = before - data->prefs.size();
  if (removed > 0) {
    data->append_record(json{{"op", "purge"}, {"sub", sub_category_id}});
  }
  return removed;
}

size_t PreferenceStore::count_by_subcategory(const std::string& user_id,
                                             const std::string& sub_category_id) const {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  size_t n = 0;
  for (const auto& p : data->prefs) {
    if (p.path.sub == sub_category_id) ++n;
  }
  return n;
}

StoreSnapshot PreferenceStore::snapshot(const std::string& user_id) const {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  return StoreSnapshot{user_id, data->prefs, taxonomy_.version};
}

size_t PreferenceStore::size(const std::string& user_id) const {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  return data->prefs.size();
}

std::vector<std::string> PreferenceStore::users() const {
  std::set<std::string> ids;
  {
    std::lock_guard<std::mutex> lock(users_mutex_);
    for (const auto& [id, _] : users_) ids.insert(id);
  }
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(root_ / "users", ec)) {
    if (entry.path().extension() == ".jsonl") ids.insert(entry.path().stem().string());
  }
  return {ids.begin(), ids.end()};
}

std::vector<Preference> PreferenceStore::quarantined(const std::string& user_id) const {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  return data->quarantined;
}

size_t PreferenceStore::add_opt_outs(const std::string& user_id,
                                     const std::vector<std::string>& sub_ids) {
  auto data = user_data(user_id);
  size_t purged = 0;
  for (const auto& sub : sub_ids) purged += purge_category(user_id, sub);
  std::lock_guard<std::mutex> lock(data->mutex);
  data->optouts.insert(sub_ids.begin(), sub_ids.end());
  data->append_record(json{{"op", "optout"}, {"subs", sub_ids}});
  return purged;
}

std::set<std::string> PreferenceStore::opt_outs(const std::string& user_id) const {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  return data->optouts;
}

std::optional<json> PreferenceStore::idempotent_response(const std::string& user_id,
                                                         const std::string& key) const {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  auto it = data->idem.find(key);
  if (it == data->idem.end()) return std::nullopt;
  const std::time_t now = parse_iso8601(options_.clock());
  if (now != 0 && std::difftime(now, parse_iso8601(it->second.timestamp)) >
                      options_.idempotency_ttl_hours * 3600.0) {
    return std::nullopt;
  }
  return it->second.response;
}

void PreferenceStore::remember_idempotent(const std::string& user_id, const std::string& key,
                                          const json& response) {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  UserData::Idem idem{options_.clock(), response};
  data->append_record(
      json{{"op", "idem"}, {"key", key}, {"timestamp", idem.timestamp}, {"response", response}});
  data->idem[key] = std::move(idem);
}

json PreferenceStore::export_user(const std::string& user_id) const {
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  json prefs = json::array();
  for (const auto& p : data->prefs) prefs.push_back(p.to_json());
  json quarantined = json::array();
  for (const auto& p : data->quarantined) quarantined.push_back(p.to_json());
  return json{{"user_id", user_id},
              {"taxonomy_version", taxonomy_.version},
              {"preferences", prefs},
              {"quarantined", quarantined},
              {"opt_outs", std::vector<std::string>(data->optouts.begin(), data->optouts.end())}};
}

void PreferenceStore::import_user(const json& doc) {
  const std::string user_id = doc.at("user_id").get<std::string>();
  auto data = user_data(user_id);
  std::lock_guard<std::mutex> lock(data->mutex);
  data->prefs.clear();
  data->quarantined.clear();
  data->optouts.clear();
  data->seq = 0;
  for (const auto& jp : doc.value("preferences", json::array())) {
    Preference p = Preference::from_json(jp);
    data->bump_seq(p.id);
    if (validate_path(taxonomy_, p.path)) {
      data->prefs.push_back(std::move(p));
    } else {
      data->quarantined.push_back(std::move(p));
    }
  }
  for (const auto& jp : doc.value("quarantined", json::array())) {
    Preference p = Preference::from_json(jp);
    data->bump_seq(p.id);
    data->quarantined.push_back(std::move(p));
  }
  for (const auto& s : doc.value("opt_outs", std::vector<std::string>{})) {
    data->optouts.insert(s);
  }
  data->log.close();
  std::ofstream out(log_path(user_id), std::ios::trunc);
  for (const auto& p : data->prefs) out << json{{"op", "insert"}, {"pref", p.to_json()}}.dump() << "\n";
  for (const auto& p : data->quarantined) {
    out << json{{"op", "insert"}, {"pref", p.to_json()}}.dump() << "\n";
  }
  if (!data->optouts.empty()) {
    out << json{{"op", "optout"},
                {"subs", std::vector<std::string>(data->optouts.begin(), data->optouts.end())}}
               .dump()
        << "\n";
  }
  out.close();
  data->log.open(log_path(user_id), std::ios::app);
}

}  // namespace prefmem
