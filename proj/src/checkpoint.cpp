#include "capforge/checkpoint.hpp"

#include <vector>

#include "capforge/error.hpp"
#include "capforge/text_io.hpp"

namespace capforge {

namespace {

constexpr std::string_view kMagic = "CAPFORGE-CHECKPOINT";

class LineCursor {
 public:
  explicit LineCursor(std::string_view text) : lines_(split_lines(text)) {
    // A trailing newline yields no extra line; an unterminated last line
    // stays and may be partial.
    complete_last_ = !text.empty() && text.back() == '\n';
  }

  const std::string& next(std::string_view expecting) {
    if (pos_ >= lines_.size()) throw TruncatedError("checkpoint ends early, expecting " + std::string(expecting));
    // Every line of a complete file is newline-terminated, so an unterminated
    // line past the header was cut short.
    if (pos_ > 0 && pos_ + 1 == lines_.size() && !complete_last_) {
      throw TruncatedError("checkpoint truncated while reading " + std::string(expecting));
    }
    return lines_[pos_++];
  }

 private:
  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
  bool complete_last_ = false;
};

std::int64_t keyed_int(const std::string& field, std::string_view key) {
  if (!field.starts_with(std::string(key) + "=")) {
    throw ParseError("checkpoint: expected " + std::string(key) + "=<int>, got '" + field + "'");
  }
  return parse_int(std::string_view(field).substr(key.size() + 1), key);
}

}  // namespace

std::string format_checkpoint(const Checkpoint& ck) {
  const auto& d = ck.params.dims;
  std::string out = std::string(kMagic) + " v" + std::string(kVersion) + "\n";
  out += "dims V=" + std::to_string(d.vocab) + " m=" + std::to_string(d.embed) + " H=" + std::to_string(d.hidden) +
         " D=" + std::to_string(d.annotation) + " a=" + std::to_string(d.attention) + "\n";
  out += "seed " + std::to_string(ck.seed) + "\n";
  out += "tensors " + std::to_string(ck.params.tensor_names().size()) + "\n";
  DecoderParams::visit(ck.params, [&](const std::string& name, const auto& t) {
    out += "tensor " + name + ' ' + std::to_string(t.rows()) + ' ' + std::to_string(t.cols()) + '\n';
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        if (c) out.push_back(' ');
        out += format_double(t(r, c));
      }
      out.push_back('\n');
    }
  });
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  LineCursor in(text);
  const auto header = split_ws(in.next("version line"));
  if (header.empty() || header[0] != kMagic) throw ParseError("not a checkpoint file (missing version line)");
  if (header.size() != 2 || header[1] != "v" + std::string(kVersion)) {
    throw VersionError("checkpoint version '" + (header.size() > 1 ? header[1] : std::string()) +
                       "' is not supported (expected v" + std::string(kVersion) + ")");
  }

  const auto dims_line = split_ws(in.next("dims line"));
  if (dims_line.size() != 6 || dims_line[0] != "dims") throw ParseError("checkpoint: malformed dims line");
  DecoderDims dims{static_cast<int>(keyed_int(dims_line[1], "V")), static_cast<int>(keyed_int(dims_line[2], "m")),
                   static_cast<int>(keyed_int(dims_line[3], "H")), static_cast<int>(keyed_int(dims_line[4], "D")),
                   static_cast<int>(keyed_int(dims_line[5], "a"))};
  try {
    validate(dims);
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }

  const auto seed_line = split_ws(in.next("seed line"));
  if (seed_line.size() != 2 || seed_line[0] != "seed") throw ParseError("checkpoint: malformed seed line");
  Checkpoint ck;
  const auto seed = parse_int(seed_line[1], "seed");
  if (seed < 0) throw ParseError("checkpoint: negative seed");
  ck.seed = static_cast<std::uint64_t>(seed);

  ck.params = DecoderParams::zeros(dims);
  const auto count_line = split_ws(in.next("tensor count"));
  const auto expected_count = ck.params.tensor_names().size();
  if (count_line.size() != 2 || count_line[0] != "tensors") throw ParseError("checkpoint: malformed tensor count");
  if (parse_int(count_line[1], "tensor count") != static_cast<std::int64_t>(expected_count)) {
    throw ShapeError("checkpoint declares " + count_line[1] + " tensors, dims imply " +
                     std::to_string(expected_count));
  }

  DecoderParams::visit(ck.params, [&](const std::string& name, auto& t) {
    const auto head = split_ws(in.next("tensor " + name));
    if (head.size() != 4 || head[0] != "tensor") throw ParseError("checkpoint: malformed tensor header for " + name);
    if (head[1] != name) throw ParseError("checkpoint: expected tensor " + name + ", found " + head[1]);
    const auto rows = parse_int(head[2], "rows of " + name);
    const auto cols = parse_int(head[3], "cols of " + name);
    if (rows != t.rows() || cols != t.cols()) {
      throw ShapeError("checkpoint tensor " + name + " is " + head[2] + "x" + head[3] + ", dims imply " +
                       std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    }
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      const auto values = split_ws(in.next("row of " + name));
      if (static_cast<Eigen::Index>(values.size()) != t.cols()) {
        throw ParseError("checkpoint: row " + std::to_string(r) + " of " + name + " has " +
                         std::to_string(values.size()) + " values");
      }
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        t(r, c) = parse_double(values[static_cast<std::size_t>(c)], name);
      }
    }
  });
  if (in.next("end marker") != "end") throw ParseError("checkpoint: missing end marker");
  if (!ck.params.all_finite()) throw NonFiniteError("checkpoint contains non-finite parameters");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_atomic(path, format_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace capforge
