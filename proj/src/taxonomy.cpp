#include "prefmem/taxonomy.hpp"

#include <regex>
#include <set>

#include "json.hpp"
#include "prefmem/errors.hpp"
#include "prefmem/util.hpp"

namespace prefmem {

using nlohmann::json;

std::string to_string(DetailType t) { return t == DetailType::SP ? "SP" : "MP"; }

DetailType detail_type_from_string(const std::string& s) {
  if (s == "SP") return DetailType::SP;
  if (s == "MP") return DetailType::MP;
  throw ParseError("detail category type must be \"SP\" or \"MP\", got \"" + s + "\"");
}

const MainCategory* CategoryTaxonomy::find_main(const std::string& id) const {
  for (const auto& m : mains) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

const SubCategory* CategoryTaxonomy::find_sub(const std::string& main_id,
                                              const std::string& sub_id) const {
  const MainCategory* m = find_main(main_id);
  if (!m) return nullptr;
  for (const auto& s : m->subs) {
    if (s.id == sub_id) return &s;
  }
  return nullptr;
}

const SubCategory* CategoryTaxonomy::find_sub(const std::string& sub_id) const {
  for (const auto& m : mains) {
    for (const auto& s : m.subs) {
      if (s.id == sub_id) return &s;
    }
  }
  return nullptr;
}

const DetailCategory* CategoryTaxonomy::find_detail(const CategoryPath& path) const {
  const SubCategory* s = find_sub(path.main, path.sub);
  if (!s) return nullptr;
  for (const auto& d : s->details) {
    if (d.id == path.detail) return &d;
  }
  return nullptr;
}

size_t CategoryTaxonomy::sub_count() const {
  size_t n = 0;
  for (const auto& m : mains) n += m.subs.size();
  return n;
}

size_t CategoryTaxonomy::detail_count() const {
  size_t n = 0;
  for (const auto& m : mains) {
    for (const auto& s : m.subs) n += s.details.size();
  }
  return n;
}

namespace {

const std::regex kIdentifierPattern("[a-z][a-z0-9_]*");

void check_identifier(const std::string& id, const std::string& where) {
  if (!std::regex_match(id, kIdentifierPattern)) {
    throw ValidationError("malformed identifier \"" + id + "\" in " + where);
  }
}

}  // namespace

void CategoryTaxonomy::validate() const {
  // Identifiers must be unique within their level so that a detail name
  // alone maps back to exactly one path.
  std::set<std::string> main_ids;
  std::set<std::string> sub_ids;
  std::set<std::string> detail_ids;
  for (const auto& m : mains) {
    check_identifier(m.id, "main categories");
    if (!main_ids.insert(m.id).second) {
      throw ValidationError("duplicate main category id \"" + m.id + "\"");
    }
    for (const auto& s : m.subs) {
      check_identifier(s.id, "sub categories of " + m.id);
      if (!sub_ids.insert(s.id).second) {
        throw ValidationError("duplicate sub category id \"" + s.id + "\"");
      }
      for (const auto& d : s.details) {
        check_identifier(d.id, "detail categories of " + s.id);
        if (!detail_ids.insert(d.id).second) {
          throw ValidationError("duplicate detail category id \"" + d.id + "\"");
        }
        if (d.attributes.empty()) {
          throw ValidationError("detail category \"" + d.id + "\" has an empty attribute list");
        }
        std::set<std::string> seen;
        for (const auto& a : d.attributes) {
          if (!seen.insert(util::to_lower(a)).second) {
            throw ValidationError("detail category \"" + d.id + "\" repeats attribute \"" + a +
                                  "\" (attributes are case-insensitively unique)");
          }
        }
      }
    }
  }
}

namespace {

DetailCategory parse_detail(const json& j) {
  DetailCategory d;
  if (!j.is_object()) throw ParseError("detail category entry must be an object");
  d.id = j.value("id", "");
  d.display_name = j.value("display_name", "");
  if (d.id.empty()) throw ParseError("detail category missing \"id\"");
  if (d.display_name.empty()) d.display_name = d.id;
  if (!j.contains("type")) {
    throw ParseError("detail category \"" + d.id + "\" missing SP/MP type tag");
  }
  d.type = detail_type_from_string(j.at("type").get<std::string>());
  if (j.contains("attributes")) {
    d.attributes = j.at("attributes").get<std::vector<std::string>>();
  }
  if (j.contains("examples")) {
    d.examples = j.at("examples").get<std::vector<std::string>>();
  }
  return d;
}

}  // namespace

CategoryTaxonomy load_taxonomy(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("taxonomy document does not parse: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("taxonomy document must be a JSON object");

  CategoryTaxonomy t;
  t.version = doc.value("version", "1");
  for (const auto& jm : doc.value("mains", json::array())) {
    MainCategory m;
    m.id = jm.value("id", "");
    m.display_name = jm.value("display_name", m.id);
    if (m.id.empty()) throw ParseError("main category missing \"id\"");
    for (const auto& js : jm.value("subs", json::array())) {
      SubCategory s;
      s.id = js.value("id", "");
      s.display_name = js.value("display_name", s.id);
      if (s.id.empty()) throw ParseError("sub category missing \"id\" under main \"" + m.id + "\"");
      for (const auto& jd : js.value("details", json::array())) {
        s.details.push_back(parse_detail(jd));
      }
      m.subs.push_back(std::move(s));
    }
    t.mains.push_back(std::move(m));
  }
  if (t.mains.empty()) throw ParseError("taxonomy document defines no main categories");
  t.validate();
  return t;
}

CategoryTaxonomy load_taxonomy_file(const std::filesystem::path& path) {
  return load_taxonomy(util::read_text_file(path.string()));
}

CategoryTaxonomy opt_out(const CategoryTaxonomy& taxonomy,
                         const std::vector<std::string>& excluded_subs) {
  for (const auto& x : excluded_subs) {
    if (!taxonomy.find_sub(x)) {
      throw ValidationError("opt-out references unknown sub category \"" + x + "\"");
    }
  }
  std::set<std::string> excluded(excluded_subs.begin(), excluded_subs.end());
  CategoryTaxonomy out;
  out.version = taxonomy.version;
  for (const auto& m : taxonomy.mains) {
    MainCategory copy;
    copy.id = m.id;
    copy.display_name = m.display_name;
    for (const auto& s : m.subs) {
      if (!excluded.count(s.id)) copy.subs.push_back(s);
    }
    out.mains.push_back(std::move(copy));
  }
  return out;
}

bool validate_path(const CategoryTaxonomy& taxonomy, const CategoryPath& path) {
  return taxonomy.find_detail(path) != nullptr;
}

}  // namespace prefmem
