#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace framing {

using json = nlohmann::json;

/// Fatal input problem (unreadable file, bad configuration).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One malformed record. Serialized as {line, field, message}.
struct RecordError {
  std::size_t line = 0;
  std::string field;
  std::string message;

  bool operator==(const RecordError&) const = default;
};

json to_json(const RecordError& e);

/// Thrown from a per-record callback to report a field-level problem.
class RecordFieldError : public std::runtime_error {
 public:
  RecordFieldError(std::string field, const std::string& message)
      : std::runtime_error(message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Reads one JSON object per line. Blank lines are skipped. Parse failures
/// and RecordFieldError thrown by `on_record` become RecordErrors; any other
/// exception propagates. Throws InputError if the file cannot be opened.
std::vector<RecordError> read_jsonl(const std::filesystem::path& path,
                                    const std::function<void(const json&, std::size_t)>& on_record);

/// Writes records one per line with a trailing newline.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

void write_json(const std::filesystem::path& path, const json& doc);

json read_json(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

std::string read_text(const std::filesystem::path& path);

// Field accessors that throw RecordFieldError with the field name.
std::string require_string(const json& rec, const char* field);
long long require_int(const json& rec, const char* field);
std::optional<std::string> optional_string(const json& rec, const char* field);

/// Fixed-precision decimal formatting used in TSV/Markdown outputs.
std::string format_fixed(double v, int digits);

}  // namespace framing
