#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace prefmem {

// Whether a detail category holds a single preference or many.
enum class DetailType { SP, MP };

std::string to_string(DetailType t);
DetailType detail_type_from_string(const std::string& s);

struct DetailCategory {
  std::string id;
  std::string display_name;
  DetailType type = DetailType::MP;
  std::vector<std::string> attributes;  // closed vocabulary, passed to the model as examples
  std::vector<std::string> examples;    // optional override; empty -> attributes are used
};

struct SubCategory {
  std::string id;
  std::string display_name;
  std::vector<DetailCategory> details;
};

struct MainCategory {
  std::string id;
  std::string display_name;
  std::vector<SubCategory> subs;
};

struct CategoryPath {
  std::string main;
  std::string sub;
  std::string detail;

  bool operator==(const CategoryPath&) const = default;
  bool operator<(const CategoryPath& o) const {
    if (main != o.main) return main < o.main;
    if (sub != o.sub) return sub < o.sub;
    return detail < o.detail;
  }
  std::string str() const { return main + "/" + sub + "/" + detail; }
};

// The three-level category hierarchy bounding all extraction.
// Immutable after construction; safe to share across readers.
class CategoryTaxonomy {
 public:
  std::string version;
  std::vector<MainCategory> mains;

  const MainCategory* find_main(const std::string& id) const;
  const SubCategory* find_sub(const std::string& main_id, const std::string& sub_id) const;
  // Sub-category ids are unique across mains, so a sub can be found without its main.
  const SubCategory* find_sub(const std::string& sub_id) const;
  const DetailCategory* find_detail(const CategoryPath& path) const;

  size_t main_count() const { return mains.size(); }
  size_t sub_count() const;
  size_t detail_count() const;

  // Throws ValidationError on duplicate identifiers, empty attribute lists,
  // case-insensitive duplicate attributes, or malformed identifiers.
  void validate() const;
};

// Parses a taxonomy document (JSON text). Rejects duplicates, empty
// attribute lists and detail categories without an SP/MP tag.
CategoryTaxonomy load_taxonomy(const std::string& json_text);
CategoryTaxonomy load_taxonomy_file(const std::filesystem::path& path);

// Returns a copy with the given sub-category trees removed; the input
// taxonomy is left untouched. Unknown sub ids raise ValidationError.
CategoryTaxonomy opt_out(const CategoryTaxonomy& taxonomy,
                         const std::vector<std::string>& excluded_subs);

// True iff the path resolves main -> sub -> detail in this taxonomy.
bool validate_path(const CategoryTaxonomy& taxonomy, const CategoryPath& path);

}  // namespace prefmem
