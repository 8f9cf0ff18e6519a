#include "framing/jsonl.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "framing/text.hpp"

namespace framing {

json to_json(const RecordError& e) {
  return json{{"line", e.line}, {"field", e.field}, {"message", e.message}};
}

std::vector<RecordError> read_jsonl(const std::filesystem::path& path,
                                    const std::function<void(const json&, std::size_t)>& on_record) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<RecordError> errors;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      errors.push_back({lineno, "", std::string("invalid JSON: ") + e.what()});
      continue;
    }
    if (!rec.is_object()) {
      errors.push_back({lineno, "", "record is not a JSON object"});
      continue;
    }
    try {
      on_record(rec, lineno);
    } catch (const RecordFieldError& e) {
      errors.push_back({lineno, e.field(), e.what()});
    }
  }
  return errors;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::string buf;
  for (const auto& r : records) {
    buf += r.dump();
    buf.push_back('\n');
  }
  write_text(path, buf);
}

void write_json(const std::filesystem::path& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string require_string(const json& rec, const char* field) {
  auto it = rec.find(field);
  if (it == rec.end() || it->is_null()) throw RecordFieldError(field, std::string("missing required field '") + field + "'");
  if (!it->is_string()) throw RecordFieldError(field, std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

long long require_int(const json& rec, const char* field) {
  auto it = rec.find(field);
  if (it == rec.end() || it->is_null()) throw RecordFieldError(field, std::string("missing required field '") + field + "'");
  if (!it->is_number_integer()) throw RecordFieldError(field, std::string("field '") + field + "' must be an integer");
  return it->get<long long>();
}

std::optional<std::string> optional_string(const json& rec, const char* field) {
  auto it = rec.find(field);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw RecordFieldError(field, std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace framing
