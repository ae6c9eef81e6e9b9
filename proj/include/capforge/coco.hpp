#pragma once

#include <string_view>
#include <vector>

#include "capforge/vocab.hpp"

namespace capforge {

// COCO caption JSON ({"images": [{id, file_name}], "annotations":
// [{image_id, caption}]}) to one tokenized record per annotation, in
// annotation order. Numeric ids become their decimal strings.
std::vector<CaptionRecord> import_coco_captions(std::string_view json_text);

// COCO JSON when the text starts with '{', otherwise the TAB corpus format.
std::vector<CaptionRecord> parse_captions_any(std::string_view text, bool allow_empty = false);

}  // namespace capforge
