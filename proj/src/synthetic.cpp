#include "framing/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "framing/classifier.hpp"
#include "framing/random.hpp"
#include "framing/text.hpp"

namespace framing {

namespace {

const std::vector<std::string> kFiller{"the", "a", "of", "and", "to", "in", "is", "that"};

// The nine frames a planted article can carry.
constexpr std::array<Frame, 9> kPlanted = {
    Frame::Economic,         Frame::Morality,           Frame::FairnessAndEquality,
    Frame::LegalityAndCrime, Frame::HealthAndSafety,    Frame::CulturalIdentity,
    Frame::PublicOpinion,    Frame::SecurityAndDefense, Frame::PoliticalAndPolicies,
};

std::string pick(std::mt19937_64& rng, const std::vector<std::string>& v) { return v[uniform_index(rng, v.size())]; }

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

// Eight words: three frame cues, two topic cues, filler, then an optional tag.
std::string cue_sentence(std::mt19937_64& rng, Frame f, const std::vector<std::string>& topic_words,
                         const std::string& tag) {
  const auto& cues = frame_cue_words()[index(f)];
  std::string s = capitalize(pick(rng, cues));
  s += " " + pick(rng, topic_words);
  s += " " + pick(rng, kFiller);
  s += " " + pick(rng, cues);
  s += " " + pick(rng, kFiller);
  s += " " + pick(rng, cues);
  s += " " + pick(rng, topic_words);
  if (!tag.empty()) s += " " + tag;
  s += ".";
  return s;
}

std::string id_number(std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return buf;
}

std::string prefix_of(const std::string& outlet) {
  std::string p;
  for (char c : outlet) {
    if (std::isalnum(static_cast<unsigned char>(c))) p.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return p.empty() ? "outlet" : p;
}

}  // namespace

Dataset vocabulary_sentences(std::mt19937_64& rng, std::size_t n, const std::vector<Frame>& frames,
                             const std::vector<std::vector<std::string>>& vocab, const std::string& topic,
                             const std::string& prefix) {
  Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = uniform_index(rng, frames.size());
    std::string text;
    for (int w = 0; w < 8; ++w) text += (w % 2 ? pick(rng, kFiller) : pick(rng, vocab[k])) + " ";
    out.push_back(TrainingSentence{prefix + std::to_string(i), 0, text, {frames[k]}, topic});
  }
  return out;
}

const std::array<std::vector<std::string>, kFrameCount>& frame_cue_words() {
  static const std::array<std::vector<std::string>, kFrameCount> words = {{
      {"dollars", "budget", "wages", "jobs", "costs", "revenue"},
      {"moral", "sinful", "virtue", "conscience", "righteous", "ethical"},
      {"equality", "unfair", "discrimination", "equity", "injustice", "inequality"},
      {"court", "lawsuit", "crime", "judge", "statute", "prosecutor"},
      {"disease", "safety", "injury", "vaccine", "illness", "epidemic"},
      {"tradition", "heritage", "identity", "customs", "ancestry", "folklore"},
      {"poll", "survey", "voters", "sentiment", "approval", "protesters"},
      {"military", "troops", "defense", "terrorism", "soldiers", "weapons"},
      {"senate", "congress", "lawmakers", "legislation", "partisan", "governor"},
      {"weather", "sports", "recipe", "gardening", "music", "traffic"},
  }};
  return words;
}

std::vector<std::string> topic_cue_words(const std::string& topic) {
  static const std::map<std::string, std::vector<std::string>> known = {
      {"Gun Control", {"firearm", "rifle", "shooting", "holster"}},
      {"Russia-Ukraine", {"kyiv", "moscow", "donbas", "kremlin"}},
      {"Trump & Elections", {"ballot", "campaign", "electoral", "primaries"}},
      {"Healthcare", {"hospital", "insurance", "medicare", "clinic"}},
      {"Immigration", {"border", "asylum", "migrant", "visa"}},
      {"LGBT+ Rights", {"transgender", "marriage", "pride", "queer"}},
      {"Education", {"school", "teacher", "classroom", "tuition"}},
      {"Abortion", {"abortion", "pregnancy", "fetal", "prolife"}},
      {"Israel-Palestine", {"gaza", "israel", "hamas", "westbank"}},
      {"Climate Change", {"emissions", "warming", "carbon", "glacier"}},
      {"Syria & IS", {"syria", "aleppo", "damascus", "jihadist"}},
  };
  if (auto it = known.find(topic); it != known.end()) return it->second;
  std::string base;
  for (char c : topic) {
    if (std::isalnum(static_cast<unsigned char>(c))) base.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (base.size() < 2) base = "topic" + base;
  return {base, base + "issue", base + "debate", base + "news"};
}

const std::array<double, kFrameCount>& retention_profile() {
  // Indexed by index(frame); Other is never planted.
  static const std::array<double, kFrameCount> r = {0.50, 0.15, 0.20, 0.40, 0.45, 0.25, 0.30, 0.35, 0.60, 0.0};
  return r;
}

std::array<double, kFrameCount> scaled_retention(double overall) {
  const auto& base = retention_profile();
  double mean = 0.0;
  for (Frame f : kPlanted) mean += base[index(f)];
  mean /= static_cast<double>(kPlanted.size());
  std::array<double, kFrameCount> out{};
  for (Frame f : kPlanted) {
    out[index(f)] = base[index(f)] * overall / mean;
    if (out[index(f)] < 0.0 || out[index(f)] > 1.0)
      throw std::invalid_argument("planted retention " + std::to_string(overall) + " pushes a frame outside [0, 1]");
  }
  return out;
}

PlantedCorpus make_planted_corpus(const PlantedCorpusConfig& cfg) {
  if (cfg.topics.empty()) throw std::invalid_argument("planted corpus needs at least one topic");
  if (cfg.article_sentences < 2) throw std::invalid_argument("articles need at least two sentences");
  if (cfg.comment_sentences < 1) throw std::invalid_argument("comments need at least one sentence");
  std::mt19937_64 rng(cfg.seed);
  PlantedCorpus c;
  std::size_t comment_no = 0;
  for (std::size_t o = 0; o < cfg.outlets.size(); ++o) {
    const auto& outlet = cfg.outlets[o];
    const auto rates = scaled_retention(outlet.retention);
    c.rates[outlet.name] = rates;
    const std::string prefix = prefix_of(outlet.name);
    for (std::size_t i = 0; i < outlet.articles; ++i) {
      const Frame af = kPlanted[(i + o) % kPlanted.size()];
      const std::string& topic = cfg.topics[(i + i / kPlanted.size()) % cfg.topics.size()];
      const auto twords = topic_cue_words(topic);

      Document a;
      a.doc_id = prefix + "-a" + id_number(i, 5);
      a.kind = DocKind::article;
      a.outlet = outlet.name;
      for (std::size_t s = 0; s < cfg.article_sentences; ++s) {
        const Frame sf = s + 1 < cfg.article_sentences ? af : Frame::Other;
        if (s) a.text += " ";
        a.text += cue_sentence(rng, sf, twords, "");
        c.labels.push_back(SentenceLabel{a.doc_id, s, sf, 0.9, LabelSource::imported});
      }
      c.topics[a.doc_id] = TopicAssignment{a.doc_id, topic, std::nullopt};
      c.planted_frame[a.doc_id] = af;

      for (std::size_t k = 0; k < outlet.comments_per_article; ++k) {
        Frame cf = af;
        if (uniform01(rng) >= rates[index(af)]) {
          std::size_t j = uniform_index(rng, kPlanted.size() - 1);
          if (kPlanted[j] == af) j = kPlanted.size() - 1;
          cf = kPlanted[j];
        }
        Document cm;
        cm.doc_id = prefix + "-c" + id_number(comment_no++, 7);
        cm.kind = DocKind::comment;
        cm.outlet = outlet.name;
        cm.parent_id = a.doc_id;
        for (std::size_t s = 0; s < cfg.comment_sentences; ++s) {
          if (s) cm.text += " ";
          // The id tag keeps comment texts distinct for deduplication.
          cm.text += cue_sentence(rng, cf, twords, s == 0 ? cm.doc_id : "");
          c.labels.push_back(SentenceLabel{cm.doc_id, s, cf, 0.9, LabelSource::imported});
        }
        c.topics[cm.doc_id] = TopicAssignment{cm.doc_id, topic, std::nullopt};
        c.planted_frame[cm.doc_id] = cf;
        c.comments.push_back(std::move(cm));
      }
      c.articles.push_back(std::move(a));
    }
  }
  return c;
}

void write_planted_corpus(const std::filesystem::path& dir, const PlantedCorpus& c) {
  std::vector<json> recs;
  for (const auto& d : c.articles) recs.push_back(to_json(d, false));
  write_jsonl(dir / "articles.jsonl", recs);
  recs.clear();
  for (const auto& d : c.comments) recs.push_back(to_json(d, false));
  write_jsonl(dir / "comments.jsonl", recs);
  write_labels(dir / "labels.jsonl", c.labels);
  write_topics(dir / "topics.jsonl", c.topics);
}

Dataset cue_training_set(std::mt19937_64& rng, std::size_t per_frame, const std::vector<std::string>& topics) {
  if (topics.empty()) throw std::invalid_argument("training set needs at least one topic");
  Dataset out;
  std::size_t n = 0;
  for (std::size_t k = 0; k < per_frame; ++k) {
    for (Frame f : kAllFrames) {
      const std::string& topic = topics[n % topics.size()];
      out.push_back(TrainingSentence{"train-" + id_number(n, 5), 0, cue_sentence(rng, f, topic_cue_words(topic), ""),
                                     {f}, topic});
      ++n;
    }
  }
  return out;
}

std::vector<json> topic_seed_records(const std::vector<std::string>& topics, std::size_t per_topic) {
  std::vector<json> out;
  for (const auto& t : topics) {
    const auto words = topic_cue_words(t);
    for (std::size_t k = 0; k < per_topic; ++k) {
      std::string text;
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (w) text += " ";
        text += words[(w + k) % words.size()];
        text += " " + kFiller[(w + k) % kFiller.size()];
      }
      out.push_back(json{{"doc_id", "seed-" + prefix_of(t) + "-" + std::to_string(k)}, {"topic", t}, {"text", text}});
    }
  }
  return out;
}

std::vector<AnnotationRecord> simulate_annotations(std::mt19937_64& rng, std::size_t units, std::size_t annotators,
                                                   double fidelity) {
  std::vector<AnnotationRecord> out;
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<Frame> truth{frame_at(uniform_index(rng, kFrameCount))};
    if (uniform01(rng) < 0.2) {
      Frame second = frame_at(uniform_index(rng, kFrameCount));
      if (second != truth[0]) truth.push_back(second);
    }
    std::sort(truth.begin(), truth.end());
    for (std::size_t a = 0; a < annotators; ++a) {
      AnnotationRecord r;
      r.unit_id = "unit-" + id_number(u, 5);
      r.annotator_id = "ann" + std::to_string(a + 1);
      r.labels = uniform01(rng) < fidelity ? truth : std::vector<Frame>{frame_at(uniform_index(rng, kFrameCount))};
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace framing
