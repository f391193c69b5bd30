#include "tsearch/search.hpp"

#include "tsearch/sampling.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <map>
#include <thread>

namespace tsearch {

using nlohmann::json;
using nlohmann::ordered_json;

// ----------------------------------------------------------------------------
// Frontier
// ----------------------------------------------------------------------------

void Frontier::push(NodeId id, double value) {
  heap_.push_back({value, next_seq_++, id});
  std::push_heap(heap_.begin(), heap_.end(), Below{});
}

std::optional<NodeId> Frontier::pop() {
  if (heap_.empty()) return std::nullopt;
  std::pop_heap(heap_.begin(), heap_.end(), Below{});
  const NodeId id = heap_.back().id;
  heap_.pop_back();
  return id;
}

std::optional<NodeId> Frontier::peek() const {
  if (heap_.empty()) return std::nullopt;
  return heap_.front().id;
}

std::vector<NodeId> Frontier::contents() const {
  std::vector<NodeId> out;
  out.reserve(heap_.size());
  for (const auto& e : heap_) out.push_back(e.id);
  return out;
}

// ----------------------------------------------------------------------------
// Trace
// ----------------------------------------------------------------------------

void SearchTrace::add(ordered_json event) { events_.push_back(std::move(event)); }

namespace {

std::string format_scalar(const ordered_json& v) {
  switch (v.type()) {
    case json::value_t::null: return "-";
    case json::value_t::boolean: return v.get<bool>() ? "true" : "false";
    case json::value_t::number_integer: return std::to_string(v.get<std::int64_t>());
    case json::value_t::number_unsigned: return std::to_string(v.get<std::uint64_t>());
    case json::value_t::number_float: return fmt::format("{:.4f}", v.get<double>());
    case json::value_t::string: {
      const auto s = v.get<std::string>();
      if (s.find(' ') != std::string::npos) return json(s).dump();
      return s;
    }
    case json::value_t::array: {
      std::string out;
      for (const auto& e : v) {
        if (!out.empty()) out += ',';
        out += format_scalar(e);
      }
      return out.empty() ? "-" : out;
    }
    default: return v.dump();
  }
}

}  // namespace

std::string SearchTrace::to_text() const {
  std::string out;
  for (const auto& ev : events_) {
    std::string line;
    for (const auto& [key, value] : ev.items()) {
      if (key == "event") {
        line = value.get<std::string>() + line;
      } else {
        line += " " + key + "=" + format_scalar(value);
      }
    }
    out += line + "\n";
  }
  out += fmt::format("calls answer={} evaluate={} propose={} describe={}\n", calls.answer, calls.evaluate,
                     calls.propose, calls.describe);
  return out;
}

ordered_json SearchTrace::to_json() const {
  ordered_json j;
  j["events"] = events_;
  j["calls"] = {{"answer", calls.answer},
                {"evaluate", calls.evaluate},
                {"propose", calls.propose},
                {"describe", calls.describe}};
  return j;
}

SearchTrace SearchTrace::from_json(const ordered_json& j) {
  SearchTrace t;
  for (const auto& ev : j.at("events")) t.events_.push_back(ev);
  const auto& c = j.at("calls");
  t.calls = {c.at("answer").get<int>(), c.at("evaluate").get<int>(), c.at("propose").get<int>(),
             c.at("describe").get<int>()};
  return t;
}

const char* to_string(StopReason reason) {
  return reason == StopReason::confidence_exceeded_c1 ? "confidence_exceeded_c1" : "budget_exhausted";
}

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::us: return "us";
    case Strategy::utv: return "utv";
    case Strategy::ts: return "ts";
    case Strategy::ts_bfs: return "ts-bfs";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "us") return Strategy::us;
  if (name == "utv") return Strategy::utv;
  if (name == "ts") return Strategy::ts;
  if (name == "ts-bfs" || name == "ts_bfs") return Strategy::ts_bfs;
  throw ConfigError("unknown strategy '" + name + "' (expected us, utv, ts or ts-bfs)");
}

// ----------------------------------------------------------------------------
// Shared run machinery
// ----------------------------------------------------------------------------

namespace {

json choice_json(const ModelVerdict& v) {
  return v.parsed_choice ? json(std::string(1, *v.parsed_choice)) : json(nullptr);
}

template <typename Fn>
void parallel_for(std::size_t count, int width, Fn&& fn) {
  if (width <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(width), count);
  workers.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
}

class SearchRun {
 public:
  SearchRun(const VideoSource& video, const Query& query, Backend& backend, const SearchConfig& config)
      : video_(video), query_(query), backend_(backend), config_(config) {
    video.validate();
    query.validate();
    config.validate();
    result_.memory = KeyframeMemory(config.memory_cap);
  }

  SearchResult us();
  SearchResult utv(int num_intervals);
  SearchResult ts();
  SearchResult ts_bfs();

 private:
  Interval whole() const { return {0, video_.total_frames}; }
  SearchTrace& trace() { return result_.trace; }
  std::vector<SearchNode>& nodes() { return result_.nodes; }

  SearchNode& add_node(const Interval& interval, ModelVerdict verdict, std::optional<NodeId> parent,
                       NodeOrigin origin) {
    SearchNode n;
    n.id = static_cast<NodeId>(nodes().size());
    n.interval = interval;
    n.verdict = std::move(verdict);
    n.value = node_value(n.verdict.confidence, n.verdict.self_eval, config_.w_conf, config_.w_eval);
    n.parent_id = parent;
    n.depth = parent ? nodes()[static_cast<std::size_t>(*parent)].depth + 1 : 0;
    n.origin = origin;
    nodes().push_back(std::move(n));
    return nodes().back();
  }

  void log_node(const char* kind, const SearchNode& n) {
    ordered_json ev;
    ev["event"] = kind;
    ev["node"] = n.id;
    if (n.parent_id) ev["parent"] = *n.parent_id;
    if (n.origin != NodeOrigin::root) ev["origin"] = to_string(n.origin);
    ev["depth"] = n.depth;
    ev["interval"] = n.interval.to_string();
    ev["choice"] = choice_json(n.verdict);
    ev["conf"] = n.verdict.confidence;
    ev["eval"] = n.verdict.self_eval ? json(*n.verdict.self_eval) : json(nullptr);
    ev["value"] = n.value;
    trace().add(std::move(ev));
  }

  void log_error(const std::string& stage, std::optional<NodeId> node, const std::string& message) {
    ordered_json ev;
    ev["event"] = "error";
    ev["stage"] = stage;
    if (node) ev["node"] = *node;
    ev["message"] = message;
    trace().add(std::move(ev));
    result_.had_error = true;
  }

  // Describes the node's frames and stores the notes; failures are logged.
  void remember(const SearchNode& node, const FrameSample& frames) {
    ++trace().calls.describe;
    std::vector<KeyframeNote> notes;
    try {
      notes = backend_.describe_keyframes(video_, frames, query_, result_.memory);
    } catch (const BackendError& e) {
      log_error("describe", node.id, e.what());
      return;
    }
    for (auto& note : notes) {
      note.source_value = node.value;
      ordered_json ev;
      ev["event"] = "memory";
      ev["node"] = node.id;
      ev["t"] = note.timestamp;
      ev["text"] = note.text;
      const bool kept = result_.memory.add(std::move(note));
      if (!kept) ev["evicted"] = true;
      trace().add(std::move(ev));
    }
  }

  SearchResult finish(NodeId chosen, StopReason reason, const char* selection) {
    const auto& n = nodes()[static_cast<std::size_t>(chosen)];
    result_.answer = n.verdict;
    result_.chosen_interval = n.interval;
    result_.value = n.value;
    result_.stop_reason = reason;
    ordered_json ev;
    ev["event"] = "final";
    ev["node"] = chosen;
    ev["interval"] = n.interval.to_string();
    ev["choice"] = choice_json(n.verdict);
    ev["conf"] = n.verdict.confidence;
    ev["value"] = n.value;
    ev["reason"] = to_string(reason);
    ev["selection"] = selection;
    trace().add(std::move(ev));
    result_.calls_used = trace().calls.total();
    return std::move(result_);
  }

  void early_return(const SearchNode& n) {
    ordered_json ev;
    ev["event"] = "early_return";
    ev["node"] = n.id;
    ev["conf"] = n.verdict.confidence;
    trace().add(std::move(ev));
  }

  bool has_choices() const { return !query_.options.empty(); }

  // argmax value over `ids`, parseable answers first, lowest id on ties.
  NodeId best_of(const std::vector<NodeId>& ids) const {
    const bool any_parsed = has_choices() && std::any_of(ids.begin(), ids.end(), [&](NodeId id) {
                              return result_.nodes[static_cast<std::size_t>(id)].verdict.parsed_choice.has_value();
                            });
    std::optional<NodeId> best;
    for (NodeId id : ids) {
      const auto& n = result_.nodes[static_cast<std::size_t>(id)];
      if (any_parsed && !n.verdict.parsed_choice) continue;
      if (!best) {
        best = id;
        continue;
      }
      const auto& b = result_.nodes[static_cast<std::size_t>(*best)];
      if (n.value > b.value || (n.value == b.value && id < *best)) best = id;
    }
    return *best;
  }

  std::vector<NodeId> all_ids() const {
    std::vector<NodeId> ids(result_.nodes.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<NodeId>(i);
    return ids;
  }

  const VideoSource& video_;
  const Query& query_;
  Backend& backend_;
  const SearchConfig& config_;
  SearchResult result_;
};

// ----------------------------------------------------------------------------
// Uniform sampling
// ----------------------------------------------------------------------------

SearchResult SearchRun::us() {
  const auto frames = sample_frames(whole(), config_);
  ++trace().calls.answer;
  auto verdict = backend_.answer(video_, frames, query_, result_.memory);
  const auto& root = add_node(whole(), std::move(verdict), std::nullopt, NodeOrigin::root);
  log_node("root", root);
  return finish(root.id, StopReason::budget_exhausted, "single_pass");
}

// ----------------------------------------------------------------------------
// Uniform temporal voting
// ----------------------------------------------------------------------------

SearchResult SearchRun::utv(int num_intervals) {
  if (num_intervals < 1) throw ConfigError("UTV needs at least one interval");
  const auto pieces = uniform_split(whole(), num_intervals);
  std::vector<std::optional<ModelVerdict>> verdicts(pieces.size());
  std::vector<std::exception_ptr> errors(pieces.size());
  parallel_for(pieces.size(), config_.parallel_width, [&](std::size_t i) {
    try {
      verdicts[i] = backend_.answer(video_, sample_frames(pieces[i], config_), query_, result_.memory);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    ++trace().calls.answer;
    if (errors[i]) std::rethrow_exception(errors[i]);
    const auto& n = add_node(pieces[i], std::move(*verdicts[i]), std::nullopt, NodeOrigin::uniform_split);
    log_node("verdict", n);
  }

  double mean = 0.0;
  for (const auto& n : nodes()) mean += n.verdict.confidence;
  mean /= static_cast<double>(nodes().size());

  // Per choice: vote count, best confidence, node holding it (earliest on ties).
  struct Tally {
    int votes = 0;
    double best_conf = -1.0;
    NodeId best_node = 0;
  };
  std::map<char, Tally> tally;
  std::vector<NodeId> kept;
  for (const auto& n : nodes()) {
    if (n.verdict.confidence + 1e-12 < mean) continue;
    kept.push_back(n.id);
    if (!n.verdict.parsed_choice) continue;
    auto& t = tally[*n.verdict.parsed_choice];
    ++t.votes;
    if (n.verdict.confidence > t.best_conf) {
      t.best_conf = n.verdict.confidence;
      t.best_node = n.id;
    }
  }

  std::optional<NodeId> winner;
  int winner_votes = 0;
  for (const auto& [choice, t] : tally) {
    if (!winner) {
      winner = t.best_node;
      winner_votes = t.votes;
      continue;
    }
    const auto& w = nodes()[static_cast<std::size_t>(*winner)];
    const bool better = t.votes > winner_votes ||
                        (t.votes == winner_votes && (t.best_conf > w.verdict.confidence ||
                                                     (t.best_conf == w.verdict.confidence && t.best_node < *winner)));
    if (better) {
      winner = t.best_node;
      winner_votes = t.votes;
    }
  }

  ordered_json ev;
  ev["event"] = "vote";
  ev["mean_conf"] = mean;
  ev["kept"] = kept;
  ev["winner"] = winner ? json(*winner) : json(nullptr);
  ev["votes"] = winner_votes;
  trace().add(std::move(ev));

  if (!winner) {
    // Nothing parseable survived: report the most confident verdict with no choice.
    NodeId best = kept.front();
    for (NodeId id : kept) {
      if (nodes()[static_cast<std::size_t>(id)].verdict.confidence >
          nodes()[static_cast<std::size_t>(best)].verdict.confidence) {
        best = id;
      }
    }
    nodes()[static_cast<std::size_t>(best)].verdict.parsed_choice.reset();
    return finish(best, StopReason::budget_exhausted, "vote");
  }
  return finish(*winner, StopReason::budget_exhausted, "vote");
}

// ----------------------------------------------------------------------------
// Sequential temporal search
// ----------------------------------------------------------------------------

Interval center_half(const Interval& iv) {
  const FrameIndex len = iv.length();
  if (len < 2) return iv;
  const FrameIndex start = iv.start + len / 4;
  return {start, start + std::max<FrameIndex>(1, len / 2)};
}

SearchResult SearchRun::ts() {
  {
    const auto frames = sample_frames(whole(), config_);
    ++trace().calls.answer;
    auto verdict = backend_.answer(video_, frames, query_, result_.memory);
    const auto& root = add_node(whole(), std::move(verdict), std::nullopt, NodeOrigin::root);
    log_node("root", root);
    if (root.verdict.confidence > config_.c1) {
      early_return(root);
      return finish(root.id, StopReason::confidence_exceeded_c1, "early_return");
    }
  }

  const FrameIndex min_len = config_.effective_min_interval();
  NodeId current = 0;
  for (int step = 1; step <= config_.k; ++step) {
    const Interval parent = nodes()[static_cast<std::size_t>(current)].interval;
    const auto parent_frames = sample_frames(parent, config_);

    std::vector<Interval> proposals;
    ++trace().calls.propose;
    try {
      proposals = backend_.propose_intervals(video_, parent_frames, query_, result_.memory, parent, 1);
    } catch (const BackendError& e) {
      log_error("propose", current, e.what());
    }
    std::erase_if(proposals, [&](const Interval& iv) { return iv.length() < min_len; });
    const bool fallback = proposals.empty();
    const Interval next = fallback ? center_half(parent) : proposals.front();
    if (fallback && next.length() < min_len) {
      trace().add(ordered_json{{"event", "zoom_limit"}, {"step", step}, {"node", current}});
      break;
    }
    {
      ordered_json ev;
      ev["event"] = "propose";
      ev["step"] = step;
      ev["from"] = current;
      ev["interval"] = next.to_string();
      ev["source"] = fallback ? "center_half" : "model";
      trace().add(std::move(ev));
    }

    const auto frames = sample_frames(next, config_);
    ++trace().calls.answer;
    ModelVerdict verdict;
    try {
      verdict = backend_.answer(video_, frames, query_, result_.memory);
    } catch (const BackendError& e) {
      log_error("answer", std::nullopt, e.what());
      return finish(best_of(all_ids()), StopReason::budget_exhausted, "best_so_far");
    }
    const auto& node = add_node(next, std::move(verdict), current,
                                fallback ? NodeOrigin::uniform_split : NodeOrigin::heuristic);
    log_node("verdict", node);
    current = node.id;

    if (node.verdict.confidence > config_.c1) {
      early_return(node);
      return finish(node.id, StopReason::confidence_exceeded_c1, "early_return");
    }
    if (node.verdict.confidence > config_.c2) remember(node, frames);
  }

  {
    ordered_json ev;
    ev["event"] = "best_so_far";
    ev["node"] = best_of(all_ids());
    trace().add(std::move(ev));
  }
  return finish(current, StopReason::budget_exhausted, "latest");
}

// ----------------------------------------------------------------------------
// Best-first tree search
// ----------------------------------------------------------------------------

struct ChildOutcome {
  FrameSample frames;
  std::optional<ModelVerdict> verdict;
  std::string answer_error;
  std::string eval_error;
};

SearchResult SearchRun::ts_bfs() {
  Frontier frontier;
  {
    const auto frames = sample_frames(whole(), config_);
    ++trace().calls.answer;
    auto verdict = backend_.answer(video_, frames, query_, result_.memory);
    std::string eval_error;
    ++trace().calls.evaluate;
    try {
      verdict.self_eval = backend_.evaluate(video_, frames, query_, verdict, result_.memory);
    } catch (const BackendError& e) {
      eval_error = e.what();
    }
    const auto& root = add_node(whole(), std::move(verdict), std::nullopt, NodeOrigin::root);
    log_node("root", root);
    if (!eval_error.empty()) log_error("evaluate", root.id, eval_error);
    if (root.verdict.confidence > config_.c1) {
      early_return(root);
      return finish(root.id, StopReason::confidence_exceeded_c1, "early_return");
    }
    frontier.push(root.id, root.value);
  }

  const CandidateOptions candidate_options{config_.n, config_.effective_min_interval(), config_.dedup_iou};

  for (int step = 1; step <= config_.k; ++step) {
    const auto popped_id = frontier.pop();
    if (!popped_id) {
      trace().add(ordered_json{{"event", "frontier_empty"}, {"step", step}});
      break;
    }
    auto& popped = nodes()[static_cast<std::size_t>(*popped_id)];
    popped.status = NodeStatus::expanded;
    const Interval parent = popped.interval;
    trace().add(ordered_json{
        {"event", "pop"}, {"step", step}, {"node", popped.id}, {"interval", parent.to_string()}, {"value", popped.value}});

    const auto parent_frames = sample_frames(parent, config_);
    std::vector<Interval> heuristic;
    ++trace().calls.propose;
    try {
      heuristic = backend_.propose_intervals(video_, parent_frames, query_, result_.memory, parent, config_.n);
    } catch (const BackendError& e) {
      log_error("propose", popped.id, e.what());
    }
    const auto uniform = uniform_split(parent, config_.n);

    // Never re-expand an interval that (nearly) equals one on the path from the root.
    std::vector<Interval> ancestors;
    for (std::optional<NodeId> a = popped.id; a; a = nodes()[static_cast<std::size_t>(*a)].parent_id) {
      ancestors.push_back(nodes()[static_cast<std::size_t>(*a)].interval);
    }
    auto fresh = [&](const Interval& iv) {
      return std::none_of(ancestors.begin(), ancestors.end(),
                          [&](const Interval& a) { return interval_iou(a, iv) > config_.visited_iou; });
    };
    std::vector<Interval> heur_fresh, unif_fresh;
    std::copy_if(heuristic.begin(), heuristic.end(), std::back_inserter(heur_fresh), fresh);
    std::copy_if(uniform.begin(), uniform.end(), std::back_inserter(unif_fresh), fresh);

    SplitMix64 rng(mix_seed({config_.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(parent.start),
                             static_cast<std::uint64_t>(parent.end)}));
    auto selected = select_candidates(heur_fresh, unif_fresh, parent, candidate_options, rng);
    // The pool fallback splits the parent regardless of length; pieces too
    // short to zoom into are dropped here, leaving such nodes terminal.
    std::erase_if(selected, [&](const Candidate& c) {
      return !fresh(c.interval) || c.interval.length() < candidate_options.min_len;
    });

    {
      ordered_json ev;
      ev["event"] = "expand";
      ev["node"] = popped.id;
      json h = json::array(), u = json::array(), s = json::array();
      for (const auto& iv : heuristic) h.push_back(iv.to_string());
      for (const auto& iv : uniform) u.push_back(iv.to_string());
      for (const auto& c : selected) {
        s.push_back(std::string(c.origin == NodeOrigin::heuristic ? "h" : "u") + c.interval.to_string());
      }
      ev["heuristic"] = h;
      ev["uniform"] = u;
      ev["selected"] = s;
      trace().add(std::move(ev));
    }
    if (selected.empty()) {
      popped.status = NodeStatus::terminal;
      continue;
    }

    // Siblings are answered and evaluated against the memory as it stood at
    // expansion time; results merge in child order whatever the width.
    const KeyframeMemory snapshot = result_.memory;
    std::vector<ChildOutcome> outcomes(selected.size());
    parallel_for(selected.size(), config_.parallel_width, [&](std::size_t i) {
      auto& out = outcomes[i];
      out.frames = sample_frames(selected[i].interval, config_);
      try {
        out.verdict = backend_.answer(video_, out.frames, query_, snapshot);
      } catch (const std::exception& e) {
        out.answer_error = e.what();
        return;
      }
      try {
        out.verdict->self_eval = backend_.evaluate(video_, out.frames, query_, *out.verdict, snapshot);
      } catch (const std::exception& e) {
        out.eval_error = e.what();
      }
    });

    // Every sibling in the batch was called, including any after an early return.
    for (const auto& out : outcomes) {
      ++trace().calls.answer;
      if (out.verdict) ++trace().calls.evaluate;
    }

    const NodeId parent_id = popped.id;
    for (std::size_t i = 0; i < selected.size(); ++i) {
      auto& out = outcomes[i];
      if (!out.verdict) {
        log_error("answer", std::nullopt, out.answer_error);
        return finish(best_of(all_ids()), StopReason::budget_exhausted, "best_so_far");
      }
      const auto& child = add_node(selected[i].interval, std::move(*out.verdict), parent_id, selected[i].origin);
      log_node("verdict", child);
      if (!out.eval_error.empty()) log_error("evaluate", child.id, out.eval_error);
      frontier.push(child.id, child.value);
      if (child.verdict.confidence > config_.c1) {
        early_return(child);
        return finish(child.id, StopReason::confidence_exceeded_c1, "early_return");
      }
      if (child.verdict.confidence > config_.c2) remember(child, out.frames);
    }
  }

  if (config_.final_selection == FinalSelection::frontier_only && !frontier.empty()) {
    return finish(best_of(frontier.contents()), StopReason::budget_exhausted, "frontier_only");
  }
  return finish(best_of(all_ids()), StopReason::budget_exhausted, "all_visited");
}

}  // namespace

SearchResult run_uniform_sampling(const VideoSource& video, const Query& query, Backend& backend,
                                  const SearchConfig& config) {
  return SearchRun(video, query, backend, config).us();
}

SearchResult run_uniform_temporal_voting(const VideoSource& video, const Query& query, Backend& backend,
                                         const SearchConfig& config, int num_intervals) {
  return SearchRun(video, query, backend, config).utv(num_intervals);
}

SearchResult run_uniform_temporal_voting(const VideoSource& video, const Query& query, Backend& backend,
                                         const SearchConfig& config) {
  return run_uniform_temporal_voting(video, query, backend, config, config.utv_intervals);
}

SearchResult run_sequential_ts(const VideoSource& video, const Query& query, Backend& backend,
                               const SearchConfig& config) {
  return SearchRun(video, query, backend, config).ts();
}

SearchResult run_ts_bfs(const VideoSource& video, const Query& query, Backend& backend, const SearchConfig& config) {
  return SearchRun(video, query, backend, config).ts_bfs();
}

SearchResult run_strategy(Strategy strategy, const VideoSource& video, const Query& query, Backend& backend,
                          const SearchConfig& config) {
  switch (strategy) {
    case Strategy::us: return run_uniform_sampling(video, query, backend, config);
    case Strategy::utv: return run_uniform_temporal_voting(video, query, backend, config);
    case Strategy::ts: return run_sequential_ts(video, query, backend, config);
    case Strategy::ts_bfs: return run_ts_bfs(video, query, backend, config);
  }
  throw ConfigError("unknown strategy");
}

}  // namespace tsearch
