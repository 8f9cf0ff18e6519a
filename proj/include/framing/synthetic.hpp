#pragma once

// Generators for planted-parameter corpora, classifier training sets, topic
// seeds and annotation sets. Used by the tests, the acceptance checks, the
// shipped fixture and the `synth` CLI verb.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "framing/agreement.hpp"
#include "framing/classifier.hpp"
#include "framing/corpus.hpp"
#include "framing/frame.hpp"
#include "framing/topics.hpp"

namespace framing {

/// Sentences drawn from per-label vocabularies alternating with shared
/// filler words (8 tokens). Label k of `frames` uses vocab[k].
Dataset vocabulary_sentences(std::mt19937_64& rng, std::size_t n, const std::vector<Frame>& frames,
                             const std::vector<std::vector<std::string>>& vocab, const std::string& topic,
                             const std::string& prefix);

/// Six cue words per frame, indexed by index(frame). Disjoint across frames.
const std::array<std::vector<std::string>, kFrameCount>& frame_cue_words();

/// Four cue words per topic of the default topic set; other topics get
/// words derived from their name.
std::vector<std::string> topic_cue_words(const std::string& topic);

/// Per-frame retention profile: Political highest, Morality lowest. Other
/// is never planted as a dominant frame.
const std::array<double, kFrameCount>& retention_profile();

/// The profile scaled so its mean over the nine planted frames equals
/// `overall`. Throws std::invalid_argument when a rate would leave [0, 1].
std::array<double, kFrameCount> scaled_retention(double overall);

struct PlantedOutlet {
  std::string name;
  std::size_t articles = 1000;
  std::size_t comments_per_article = 10;
  double retention = 0.37;  // planted overall rate
};

struct PlantedCorpusConfig {
  std::vector<PlantedOutlet> outlets;
  std::vector<std::string> topics = default_topic_set();
  std::size_t article_sentences = 5;  // the last one is off-frame (Other)
  std::size_t comment_sentences = 3;
  std::uint64_t seed = 1;
};

struct PlantedCorpus {
  std::vector<Document> articles;
  std::vector<Document> comments;
  std::vector<SentenceLabel> labels;  // source imported, score 0.9
  TopicMap topics;                    // comments share their article's topic
  std::map<std::string, Frame> planted_frame;
  std::map<std::string, std::array<double, kFrameCount>> rates;  // by outlet
};

/// Articles cycle through the nine non-Other frames and, shifted by one every
/// nine articles, through the topics so frames and topics cross. Each
/// comment keeps the article frame with the outlet's rate for that frame and
/// otherwise takes one of the eight other frames uniformly. Every article has
/// `article_sentences - 1` sentences on its frame plus one Other sentence, and
/// every comment has `comment_sentences` on its frame, so dominant frames
/// equal the planted ones under the default thresholds.
PlantedCorpus make_planted_corpus(const PlantedCorpusConfig& cfg);

/// Writes articles.jsonl, comments.jsonl, labels.jsonl and topics.jsonl.
void write_planted_corpus(const std::filesystem::path& dir, const PlantedCorpus& c);

/// Training sentences built from the same cue words the corpus uses, spread
/// over `topics`.
Dataset cue_training_set(std::mt19937_64& rng, std::size_t per_frame, const std::vector<std::string>& topics);

/// Seed records {topic, text} for the centroid assigner.
std::vector<json> topic_seed_records(const std::vector<std::string>& topics, std::size_t per_topic);

/// Each unit has a true label set (one frame, or two with probability 0.2);
/// each annotator reproduces it with probability `fidelity` and otherwise
/// picks one frame uniformly.
std::vector<AnnotationRecord> simulate_annotations(std::mt19937_64& rng, std::size_t units, std::size_t annotators,
                                                   double fidelity);

}  // namespace framing
