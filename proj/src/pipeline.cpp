#include "uqgate/pipeline.hpp"

#include <algorithm>
#include <array>

#include "uqgate/cocoa.hpp"
#include "uqgate/error.hpp"
#include "uqgate/vce.hpp"

namespace uqgate::pipeline {

using nlohmann::json;

void to_json(json& j, const ScoringOptions& o) {
  j = {{"method", to_string(o.method)},
       {"backend", consistency::to_string(o.backend)},
       {"nli_symmetry", consistency::to_string(o.symmetry)},
       {"clip_percentile", o.clip_percentile},
       {"has_primary", o.has_primary},
       {"containment", o.judge.containment ? json(*o.judge.containment) : json(nullptr)}};
}

void from_json(const json& j, ScoringOptions& o) {
  o.method = parse_method(j.at("method").get<std::string>());
  o.backend = consistency::parse_backend(j.at("backend").get<std::string>());
  o.symmetry = consistency::parse_symmetry(j.value("nli_symmetry", "average"));
  o.clip_percentile = j.value("clip_percentile", msp::kDefaultClipPercentile);
  o.has_primary = j.value("has_primary", false);
  if (auto it = j.find("containment"); it != j.end() && !it->is_null()) {
    o.judge.containment = it->get<bool>();
  } else {
    o.judge.containment.reset();
  }
}

bool needs_similarity(Method method) {
  return method == Method::consistency || method == Method::cocoa || method == Method::cocoa_or;
}

FilterReason dominant_reason(std::span<const SampleRecord> samples, FilterReason fallback) {
  std::array<int, std::size(kAllFilterReasons)> counts{};
  for (const auto& s : samples) {
    if (s.filter_reason) ++counts[static_cast<std::size_t>(*s.filter_reason)];
  }
  std::size_t best = counts.size();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > 0 && (best == counts.size() || counts[i] > counts[best])) best = i;
  }
  return best == counts.size() ? fallback : kAllFilterReasons[best];
}

namespace {

bool usable(const SampleRecord& s) { return !s.filtered && s.extracted_answer.has_value(); }

struct QuerySamples {
  const SampleRecord* primary = nullptr;   // index 0 when has_primary
  std::vector<SampleRecord> multi;         // regime samples
  std::vector<SampleRecord> all;
};

// Outcome of scoring one query: a score, or the reason it is excluded.
struct Outcome {
  std::optional<UncertaintyScore> score;
  FilterReason reason = FilterReason::malformed_structure;
  std::optional<double> u;  // run-normalized raw value (msp)
  std::optional<cocoa::CocoaInput> cocoa_input;
};

Outcome excluded(FilterReason r) {
  Outcome o;
  o.reason = r;
  return o;
}

Outcome score_one(const QueryRecord& q, QuerySamples& qs, const ScoringOptions& opt,
                  sim::SimilarityClient* client) {
  const SampleRecord& first = qs.all.front();
  switch (opt.method) {
    case Method::vce_single: {
      if (first.filtered) return excluded(*first.filter_reason);
      if (!first.verbalized_confidence) return excluded(FilterReason::unparseable_confidence);
      Outcome o;
      o.score = vce::vce_single(first);
      return o;
    }
    case Method::vce_multi: {
      vce::VceAggregate agg;
      try {
        agg = vce::vce_aggregate(qs.multi, q.dataset);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::AllFiltered) {
          return excluded(dominant_reason(qs.multi, FilterReason::unparseable_confidence));
        }
        if (e.code() == ErrorCode::AllZeroConfidence) return excluded(FilterReason::unparseable_confidence);
        throw;
      }
      UncertaintyScore s;
      s.query_id = q.id;
      s.method = Method::vce_multi;
      s.confidence = agg.confidence;
      s.raw_uncertainty = agg.agreeing_mass;
      s.chosen_answer = agg.majority_answer;
      std::vector<const SampleRecord*> ordered;
      for (const auto& r : qs.multi) ordered.push_back(&r);
      std::stable_sort(ordered.begin(), ordered.end(),
                       [](auto* a, auto* b) { return a->sample_index < b->sample_index; });
      for (const auto* r : ordered) {
        if (usable(*r) && r->verbalized_confidence &&
            vce::answer_key(*r->extracted_answer, q.dataset) == agg.majority_answer) {
          s.chosen_answer = *r->extracted_answer;
          break;
        }
      }
      Outcome o;
      o.score = s;
      return o;
    }
    case Method::msp: {
      if (first.filtered) return excluded(*first.filter_reason);
      if (!first.token_logprobs || first.token_logprobs->empty()) {
        return excluded(FilterReason::malformed_structure);
      }
      Outcome o;
      o.u = msp::sequence_nll(*first.token_logprobs);
      UncertaintyScore s;
      s.query_id = q.id;
      s.method = Method::msp;
      s.raw_uncertainty = o.u;
      s.chosen_answer = first.extracted_answer.value_or("");
      o.score = s;
      return o;
    }
    case Method::consistency: {
      std::vector<const SampleRecord*> kept;
      for (const auto& r : qs.multi) {
        if (usable(r)) kept.push_back(&r);
      }
      std::stable_sort(kept.begin(), kept.end(),
                       [](auto* a, auto* b) { return a->sample_index < b->sample_index; });
      if (kept.size() < 2) return excluded(dominant_reason(qs.multi));
      std::vector<std::string> answers;
      for (const auto* r : kept) answers.push_back(*r->extracted_answer);
      const auto m = consistency::pairwise_similarities(answers, opt.backend, client,
                                                        {opt.symmetry, q.id});
      UncertaintyScore s;
      s.query_id = q.id;
      s.method = Method::consistency;
      s.confidence = std::clamp(consistency::consistency_score(m), 0.0, 1.0);
      s.raw_uncertainty = 1.0 - s.confidence;
      s.chosen_answer = answers.front();
      Outcome o;
      o.score = s;
      return o;
    }
    case Method::cocoa:
    case Method::cocoa_or: {
      if (!qs.primary) fail(ErrorCode::ConfigError, "cocoa needs a primary decode at sample index 0");
      const SampleRecord& star = *qs.primary;
      if (star.filtered) return excluded(*star.filter_reason);
      if (!star.token_logprobs || star.token_logprobs->empty()) {
        return excluded(FilterReason::malformed_structure);
      }
      if (std::none_of(qs.multi.begin(), qs.multi.end(), usable)) {
        return excluded(dominant_reason(qs.multi));
      }
      const auto parts = cocoa::cocoa_components(star, qs.multi, opt.backend, client,
                                                 {opt.symmetry, q.id});
      Outcome o;
      o.cocoa_input = cocoa::CocoaInput{q.id, star.extracted_answer.value_or(""), parts.u, parts.u_cons};
      UncertaintyScore s;
      s.query_id = q.id;
      s.method = opt.method;
      o.score = s;
      return o;
    }
  }
  return excluded(FilterReason::malformed_structure);
}

}  // namespace

ScoringResult score_queries(std::span<const QueryRecord> queries, std::span<const SampleRecord> samples,
                            const ScoringOptions& options, sim::SimilarityClient* client) {
  std::map<std::string, std::vector<SampleRecord>> by_query;
  for (const auto& s : samples) by_query[s.query_id].push_back(s);

  std::vector<Outcome> outcomes;
  outcomes.reserve(queries.size());
  for (const auto& q : queries) {
    auto it = by_query.find(q.id);
    if (it == by_query.end() || it->second.empty()) {
      fail(ErrorCode::CacheCorrupt, "no samples for query '" + q.id + "'");
    }
    QuerySamples qs;
    qs.all = it->second;
    std::stable_sort(qs.all.begin(), qs.all.end(),
                     [](const auto& a, const auto& b) { return a.sample_index < b.sample_index; });
    if (options.has_primary) {
      if (qs.all.front().sample_index != 0) {
        fail(ErrorCode::CacheCorrupt, "query '" + q.id + "' lacks its primary sample");
      }
      qs.primary = &qs.all.front();
      qs.multi.assign(qs.all.begin() + 1, qs.all.end());
    } else {
      qs.multi = qs.all;
    }
    outcomes.push_back(score_one(q, qs, options, client));
  }

  ScoringResult res;
  // Run-level normalization for the likelihood-based methods.
  if (options.method == Method::msp) {
    std::vector<double> us;
    for (const auto& o : outcomes) {
      if (o.u) us.push_back(*o.u);
    }
    if (!us.empty()) {
      res.normalizer = us.size() >= 2 ? msp::fit_normalizer(us, options.clip_percentile)
                                      : msp::NormalizationStats{us[0], us[0], options.clip_percentile, 1};
      for (auto& o : outcomes) {
        if (o.score) o.score->confidence = msp::to_confidence(*o.u, *res.normalizer);
      }
    }
  } else if (options.method == Method::cocoa || options.method == Method::cocoa_or) {
    std::vector<cocoa::CocoaInput> inputs;
    for (const auto& o : outcomes) {
      if (o.cocoa_input) inputs.push_back(*o.cocoa_input);
    }
    if (!inputs.empty()) {
      const auto mode = options.method == Method::cocoa ? cocoa::FusionMode::product
                                                        : cocoa::FusionMode::or_rule;
      if (inputs.size() >= 2) {
        auto run = cocoa::cocoa_score_run(inputs, mode, options.clip_percentile);
        res.normalizer = run.stats;
      } else {
        const double v = mode == cocoa::FusionMode::product ? inputs[0].u * inputs[0].u_cons : inputs[0].u;
        res.normalizer = msp::NormalizationStats{v, v, options.clip_percentile, 1};
      }
      std::size_t k = 0;
      for (auto& o : outcomes) {
        if (o.cocoa_input) o.score = cocoa::cocoa_score(inputs[k++], mode, *res.normalizer);
      }
    }
  }

  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.score) {
      ++res.excluded[std::string(to_string(o.reason))];
      continue;
    }
    UncertaintyScore s = std::move(*o.score);
    try {
      s.correct = judge_correct(s.chosen_answer, queries[i], options.judge).correct;
    } catch (const Error& e) {
      s.correct = false;
      s.judge_flag = e.what();
    }
    validate(s);
    res.scores.push_back(std::move(s));
  }
  return res;
}

}  // namespace uqgate::pipeline
