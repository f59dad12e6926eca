#include "doctest.h"

#include <fstream>
#include <map>

#include "prefmem/errors.hpp"
#include "prefmem/prefstore.hpp"
#include "prefmem/util.hpp"
#include "test_support.hpp"

using namespace prefmem;

namespace {

CandidatePreference make_candidate(const CategoryPath& path, const std::string& value) {
  CandidatePreference c;
  c.path = path;
  c.value = value;
  c.source_sentence = "I like " + value + ".";
  c.conversation_id = "conv-x";
  return c;
}

EmbeddingVector unit_embedding(size_t dim = 8) {
  EmbeddingVector v;
  v.values.assign(dim, 0.0);
  v.values[0] = 1.0;
  v.model_id = "test";
  return v;
}

StoreOptions small_options() { return StoreOptions{8, nullptr, 24.0}; }

const CategoryPath kCuisine{"points_of_interest", "restaurant", "favourite_cuisine"};
const CategoryPath kGenres{"entertainment_and_media", "music", "favorite_genres"};
const CategoryPath kArtists{"entertainment_and_media", "music", "favorite_artists_bands"};

}  // namespace

TEST_CASE("insert stores durably and never deduplicates") {
  auto dir = testsupport::fresh_dir("store_insert");
  PreferenceStore store(dir, testsupport::taxonomy(), small_options());
  Preference p = store.insert("u", make_candidate(kCuisine, "Italian"), unit_embedding());
  CHECK(store.size("u") == 1);
  CHECK(p.user_id == "u");
  CHECK(p.taxonomy_version == testsupport::taxonomy().version);
  CHECK_FALSE(p.created_at.empty());

  store.insert("u", make_candidate(kCuisine, "Italian"), unit_embedding());
  CHECK(store.size("u") == 2);  // dedup is maintenance's job, not the store's
}

TEST_CASE("insert validates path and embedding dimension") {
  auto dir = testsupport::fresh_dir("store_validate");
  PreferenceStore store(dir, testsupport::taxonomy(), small_options());
  CHECK_THROWS_AS(store.insert("u", make_candidate({"a", "b", "c"}, "x"), unit_embedding()),
                  ValidationError);
  CHECK_THROWS_AS(store.insert("u", make_candidate(kCuisine, "x"), unit_embedding(5)),
                  ValidationError);
  CHECK_THROWS_AS(store.insert("bad user!", make_candidate(kCuisine, "x"), unit_embedding()),
                  ValidationError);
}

TEST_CASE("erase reports existence and persists") {
  auto dir = testsupport::fresh_dir("store_erase");
  PreferenceStore store(dir, testsupport::taxonomy(), small_options());
  Preference p = store.insert("u", make_candidate(kCuisine, "Italian"), unit_embedding());
  CHECK(store.erase("u", p.id));
  CHECK_FALSE(store.erase("u", p.id));
  CHECK(store.snapshot("u").preferences.empty());
}

TEST_CASE("by_detail_category returns insertion-ordered exact matches") {
  auto dir = testsupport::fresh_dir("store_bydetail");
  PreferenceStore store(dir, testsupport::taxonomy(), small_options());
  store.insert("u", make_candidate(kGenres, "Jazz"), unit_embedding());
  store.insert("u", make_candidate(kArtists, "Melody Raven"), unit_embedding());
  store.insert("u", make_candidate(kGenres, "Rock"), unit_embedding());
  store.insert("u", make_candidate(kGenres, "Rap"), unit_embedding());

  auto genres = store.by_detail_category("u", kGenres);
  REQUIRE(genres.size() == 3);
  CHECK(genres[0].value == "Jazz");
  CHECK(genres[1].value == "Rock");
  CHECK(genres[2].value == "Rap");
  CHECK(store.by_detail_category("nobody", kGenres).empty());

  SUBCASE("detail partitions cover the snapshot exactly") {
    auto snapshot = store.snapshot("u");
    std::map<std::string, size_t> by_path;
    for (const auto& p : snapshot.preferences) ++by_path[p.path.str()];
    size_t unioned = 0;
    for (const auto& [path_str, _] : by_path) {
      (void)path_str;
    }
    unioned = store.by_detail_category("u", kGenres).size() +
              store.by_detail_category("u", kArtists).size();
    CHECK(unioned == snapshot.preferences.size());
  }

  SUBCASE("count_by_subcategory sums the detail counts") {
    CHECK(store.count_by_subcategory("u", "music") == 4);
    CHECK(store.count_by_subcategory("u", "restaurant") == 0);
    CHECK(store.count_by_subcategory("nobody", "music") == 0);
  }
}

TEST_CASE("purge_category removes a whole sub-tree") {
  auto dir = testsupport::fresh_dir("store_purge");
  PreferenceStore store(dir, testsupport::taxonomy(), small_options());
  store.insert("u", make_candidate(kCuisine, "Italian"), unit_embedding());
  store.insert("u", make_candidate({"points_of_interest", "restaurant", "dietary_preferences"},
                                   "Vegan"),
               unit_embedding());
  store.insert("u", make_candidate(kGenres, "Jazz"), unit_embedding());

  CHECK(store.purge_category("u", "restaurant") == 2);
  CHECK(store.by_detail_category("u", kCuisine).empty());
  CHECK(store.count_by_subcategory("u", "restaurant") == 0);
  CHECK(store.size("u") == 1);
  CHECK(store.purge_category("u", "restaurant") == 0);
  CHECK(store.purge_category("u", "climate_control") == 0);
}

TEST_CASE("close and reopen preserves exactly the acknowledged mutations") {
  auto dir = testsupport::fresh_dir("store_durability");
  std::string kept_id;
  {
    PreferenceStore store(dir, testsupport::taxonomy(), small_options());
    Preference a = store.insert("u", make_candidate(kGenres, "Jazz"), unit_embedding());
    Preference b = store.insert("u", make_candidate(kGenres, "Rock"), unit_embedding());
    store.insert("other", make_candidate(kCuisine, "Indian"), unit_embedding());
    store.erase("u", b.id);
    store.add_opt_outs("u", {"restaurant"});
    kept_id = a.id;
  }
  PreferenceStore reopened(dir, testsupport::taxonomy(), small_options());
  auto snapshot = reopened.snapshot("u");
  REQUIRE(snapshot.preferences.size() == 1);
  CHECK(snapshot.preferences[0].id == kept_id);
  CHECK(snapshot.preferences[0].value == "Jazz");
  CHECK(snapshot.preferences[0].embedding.dim() == 8);
  CHECK(reopened.opt_outs("u") == std::set<std::string>{"restaurant"});
  CHECK(reopened.size("other") == 1);

  SUBCASE("compaction rewrites the log to the surviving state") {
    reopened.snapshot("u");  // force load + compaction
    std::ifstream log(dir / "users" / "u.jsonl");
    size_t lines = 0;
    std::string line;
    while (std::getline(log, line)) {
      if (!line.empty()) ++lines;
    }
    CHECK(lines == 2);  // one live insert + one optout record
  }

  SUBCASE("new ids continue after the highest persisted sequence") {
    Preference next = reopened.insert("u", make_candidate(kGenres, "Rap"), unit_embedding());
    CHECK(next.id > kept_id);
  }
}

TEST_CASE("a taxonomy change quarantines stranded paths instead of deleting them") {
  auto dir = testsupport::fresh_dir("store_quarantine");
  {
    PreferenceStore store(dir, testsupport::taxonomy(), small_options());
    store.insert("u", make_candidate(kCuisine, "Italian"), unit_embedding());
    store.insert("u", make_candidate(kGenres, "Jazz"), unit_embedding());
  }
  CategoryTaxonomy reduced = opt_out(testsupport::taxonomy(), {"restaurant"});
  {
    PreferenceStore store(dir, reduced, small_options());
    CHECK(store.size("u") == 1);
    auto quarantined = store.quarantined("u");
    REQUIRE(quarantined.size() == 1);
    CHECK(quarantined[0].value == "Italian");
  }
  // The quarantined record survives on disk; restoring the taxonomy revives it.
  PreferenceStore restored(dir, testsupport::taxonomy(), small_options());
  CHECK(restored.size("u") == 2);
  CHECK(restored.quarantined("u").empty());
}

TEST_CASE("export and import round-trip a user's full state") {
  auto dir = testsupport::fresh_dir("store_export");
  PreferenceStore store(dir, testsupport::taxonomy(), small_options());
  store.insert("u", make_candidate(kGenres, "Jazz"), unit_embedding());
  store.add_opt_outs("u", {"restaurant"});
  auto doc = store.export_user("u");
  CHECK(doc.at("preferences").size() == 1);

  auto dir2 = testsupport::fresh_dir("store_import");
  PreferenceStore other(dir2, testsupport::taxonomy(), small_options());
  other.import_user(doc);
  CHECK(other.size("u") == 1);
  CHECK(other.opt_outs("u") == std::set<std::string>{"restaurant"});
  CHECK(other.export_user("u") == doc);
}

TEST_CASE("idempotency markers replay within the TTL and expire after it") {
  auto dir = testsupport::fresh_dir("store_idem");
  std::string now = "2025-01-01T00:00:00Z";
  StoreOptions options = small_options();
  options.clock = [&now] { return now; };
  PreferenceStore store(dir, testsupport::taxonomy(), options);

  nlohmann::json response = {{"mutations", nlohmann::json::array()}};
  CHECK_FALSE(store.idempotent_response("u", "key-1").has_value());
  store.remember_idempotent("u", "key-1", response);
  CHECK(store.idempotent_response("u", "key-1") == response);

  now = "2025-01-01T23:00:00Z";  // within 24h
  CHECK(store.idempotent_response("u", "key-1").has_value());
  now = "2025-01-02T01:00:00Z";  // past 24h
  CHECK_FALSE(store.idempotent_response("u", "key-1").has_value());
}

TEST_CASE("users() lists everyone with persisted state") {
  auto dir = testsupport::fresh_dir("store_users");
  PreferenceStore store(dir, testsupport::taxonomy(), small_options());
  store.insert("alice", make_candidate(kGenres, "Jazz"), unit_embedding());
  store.insert("bob", make_candidate(kGenres, "Rock"), unit_embedding());
  auto users = store.users();
  CHECK(users == std::vector<std::string>{"alice", "bob"});
}

#include <thread>

TEST_CASE("cross-user mutations run concurrently without corruption") {
  auto dir = testsupport::fresh_dir("store_concurrent");
  PreferenceStore store(dir, testsupport::taxonomy(), small_options());
  constexpr int kThreads = 8;
  constexpr int kInsertsPerThread = 25;
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&store, t] {
      // Half the threads share a user; the rest write their own.
      const std::string user = t % 2 == 0 ? "shared" : "solo_" + std::to_string(t);
      for (int i = 0; i < kInsertsPerThread; ++i) {
        store.insert(user, make_candidate(kGenres, "v" + std::to_string(t * 100 + i)),
                     unit_embedding());
      }
    });
  }
  for (auto& t : threads) t.join();

  size_t total = 0;
  std::set<std::string> ids;
  for (const auto& user : store.users()) {
    for (const auto& p : store.snapshot(user).preferences) {
      CHECK(ids.insert(p.id).second);  // ids unique across the store
      ++total;
    }
  }
  CHECK(total == kThreads * kInsertsPerThread);
  CHECK(store.size("shared") == 4 * kInsertsPerThread);

  // Everything replays after reopen.
  PreferenceStore reopened(dir, testsupport::taxonomy(), small_options());
  size_t replayed = 0;
  for (const auto& user : reopened.users()) replayed += reopened.size(user);
  CHECK(replayed == total);
}

TEST_CASE("a torn final log line is dropped; earlier corruption is fatal") {
  auto dir = testsupport::fresh_dir("store_torn");
  {
    PreferenceStore store(dir, testsupport::taxonomy(), small_options());
    store.insert("u", make_candidate(kGenres, "Jazz"), unit_embedding());
  }
  auto log = dir / "users" / "u.jsonl";
  SUBCASE("torn tail from an interrupted write") {
    std::ofstream(log, std::ios::app) << "{\"op\":\"insert\",\"pref\":{\"id\":\"u-p0";
    PreferenceStore reopened(dir, testsupport::taxonomy(), small_options());
    CHECK(reopened.size("u") == 1);  // acknowledged state survives
  }
  SUBCASE("corruption before the end cannot be trusted") {
    std::string content = util::read_text_file(log.string());
    util::write_text_file(log.string(), "garbage\n" + content);
    CHECK_THROWS_AS(PreferenceStore(dir, testsupport::taxonomy(), small_options()).size("u"),
                    StorageError);
  }
}
