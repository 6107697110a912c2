#include "milab/bag.hpp"

#include <charconv>
#include <utility>

#include "milab/error.hpp"

namespace milab {

std::string InstanceLabel::token() const {
  switch (kind) {
    case Kind::kBackground: return "background";
    case Kind::kSignal: return "class_" + std::to_string(cls) + "_signal";
    case Kind::kMimic: return "class_" + std::to_string(cls) + "_mimic";
  }
  return "background";
}

InstanceLabel InstanceLabel::parse(std::string_view token) {
  if (token == "background") return background();
  constexpr std::string_view prefix = "class_";
  if (token.substr(0, prefix.size()) == prefix) {
    std::string_view rest = token.substr(prefix.size());
    int c = -1;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), c);
    if (ec == std::errc() && c >= 0) {
      std::string_view suffix(ptr, rest.data() + rest.size() - ptr);
      if (suffix == "_signal") return signal(c);
      if (suffix == "_mimic") return mimic(c);
    }
  }
  throw ParseError("unknown instance label '" + std::string(token) + "'");
}

Bag make_bag(Tensor instances, std::size_t label) {
  Bag bag;
  bag.instances = std::move(instances);
  bag.label = label;
  return bag;
}

}  // namespace milab
