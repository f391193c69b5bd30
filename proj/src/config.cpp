#include "tsearch/config.hpp"

#include <fstream>

namespace tsearch {

using nlohmann::json;

SearchConfig config_from_json(const json& j, SearchConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "k") c.k = v.get<int>();
      else if (key == "n") c.n = v.get<int>();
      else if (key == "n_f") c.n_f = v.get<int>();
      else if (key == "c1") c.c1 = v.get<double>();
      else if (key == "c2") c.c2 = v.get<double>();
      else if (key == "w_conf") c.w_conf = v.get<double>();
      else if (key == "w_eval") c.w_eval = v.get<double>();
      else if (key == "parallel_width") c.parallel_width = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "final_selection") {
        auto s = v.get<std::string>();
        if (s == "all_visited") c.final_selection = FinalSelection::all_visited;
        else if (s == "frontier_only") c.final_selection = FinalSelection::frontier_only;
        else throw ConfigError("unknown final_selection '" + s + "'");
      } else if (key == "min_interval_frames") {
        if (v.is_null()) c.min_interval_frames.reset();
        else c.min_interval_frames = v.get<int>();
      } else if (key == "dedup_iou") c.dedup_iou = v.get<double>();
      else if (key == "visited_iou") c.visited_iou = v.get<double>();
      else if (key == "memory_cap") c.memory_cap = v.get<std::size_t>();
      else if (key == "utv_intervals") c.utv_intervals = v.get<int>();
      else if (key == "frame_sampling") {
        auto s = v.get<std::string>();
        if (s == "midpoint") c.frame_sampling = FrameSampling::midpoint;
        else if (s == "seeded_random") c.frame_sampling = FrameSampling::seeded_random;
        else throw ConfigError("unknown frame_sampling '" + s + "'");
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

SearchConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const SearchConfig& c) {
  return json{{"k", c.k},
              {"n", c.n},
              {"n_f", c.n_f},
              {"c1", c.c1},
              {"c2", c.c2},
              {"w_conf", c.w_conf},
              {"w_eval", c.w_eval},
              {"parallel_width", c.parallel_width},
              {"seed", c.seed},
              {"final_selection", to_string(c.final_selection)},
              {"min_interval_frames", c.min_interval_frames ? json(*c.min_interval_frames) : json(nullptr)},
              {"dedup_iou", c.dedup_iou},
              {"visited_iou", c.visited_iou},
              {"memory_cap", c.memory_cap},
              {"utv_intervals", c.utv_intervals},
              {"frame_sampling", to_string(c.frame_sampling)}};
}

}  // namespace tsearch
