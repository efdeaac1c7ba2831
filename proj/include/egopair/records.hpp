// Serialized training-record shape shared by the planner and the dataset
// builder. Line schema:
//   { "id", "input": [{"type":"image","path"}|{"type":"text","text"}], "target" }

#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "egopair/errors.hpp"

namespace egopair {

struct MessagePart {
  enum class Type { image, text };
  Type type = Type::text;
  std::string value;  // path for image parts, text otherwise

  static MessagePart image(std::string path) {
    return {Type::image, std::move(path)};
  }
  static MessagePart text(std::string t) { return {Type::text, std::move(t)}; }

  friend bool operator==(const MessagePart&, const MessagePart&) = default;
};

struct TrainingRecord {
  std::string id;
  std::vector<MessagePart> input;
  std::string target;

  friend bool operator==(const TrainingRecord&, const TrainingRecord&) = default;
};

inline nlohmann::json to_json(const TrainingRecord& r) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : r.input) {
    if (p.type == MessagePart::Type::image) {
      parts.push_back({{"type", "image"}, {"path", p.value}});
    } else {
      parts.push_back({{"type", "text"}, {"text", p.value}});
    }
  }
  return {{"id", r.id}, {"input", parts}, {"target", r.target}};
}

inline TrainingRecord training_record_from_json(const nlohmann::json& j) {
  TrainingRecord r;
  r.id = j.at("id").get<std::string>();
  for (const auto& p : j.at("input")) {
    const std::string type = p.at("type").get<std::string>();
    if (type == "image") {
      r.input.push_back(MessagePart::image(p.at("path").get<std::string>()));
    } else if (type == "text") {
      r.input.push_back(MessagePart::text(p.at("text").get<std::string>()));
    } else {
      throw SchemaError("input[].type", "expected image or text, got \"" + type + "\"");
    }
  }
  r.target = j.at("target").get<std::string>();
  return r;
}

}  // namespace egopair
