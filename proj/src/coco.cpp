#include "capforge/coco.hpp"

#include <json.hpp>
#include <set>

#include "capforge/error.hpp"
#include "capforge/text_io.hpp"

namespace capforge {

namespace {

std::string id_string(const nlohmann::json& v, const char* what) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw ParseError(std::string("COCO captions: ") + what + " must be an integer or string");
}

}  // namespace

std::vector<CaptionRecord> import_coco_captions(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("COCO captions: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_array() || !doc.contains("annotations") ||
      !doc["annotations"].is_array()) {
    throw ParseError("COCO captions: expected 'images' and 'annotations' arrays");
  }
  std::set<std::string> image_ids;
  for (const auto& img : doc["images"]) {
    if (!img.is_object() || !img.contains("id")) throw ParseError("COCO captions: image entry without id");
    image_ids.insert(id_string(img["id"], "image id"));
  }
  std::vector<CaptionRecord> records;
  records.reserve(doc["annotations"].size());
  for (const auto& ann : doc["annotations"]) {
    if (!ann.is_object() || !ann.contains("image_id") || !ann.contains("caption") || !ann["caption"].is_string()) {
      throw ParseError("COCO captions: annotation needs image_id and caption");
    }
    std::string id = id_string(ann["image_id"], "annotation image_id");
    if (!image_ids.count(id)) throw ParseError("COCO captions: annotation references unknown image_id " + id);
    TokenList tokens = tokenize(ann["caption"].get<std::string>());
    if (tokens.empty()) throw ParseError("COCO captions: empty caption for image_id " + id);
    records.push_back({std::move(id), std::move(tokens)});
  }
  return records;
}

std::vector<CaptionRecord> parse_captions_any(std::string_view text, bool allow_empty) {
  const std::string_view body = trim(text);
  if (!body.empty() && body.front() == '{') return import_coco_captions(text);
  return parse_corpus(text, allow_empty);
}

}  // namespace capforge
