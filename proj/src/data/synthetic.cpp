#include "rtd/data/synthetic.hpp"

#include <array>
#include <string_view>

#include "rtd/core/errors.hpp"
#include "rtd/core/rng.hpp"

namespace rtd::data {

namespace {

struct Noun {
  std::string_view sg, pl;
};
struct Verb {
  std::string_view s3, base;
};

struct Topic {
  std::vector<Noun> nouns;
  std::vector<Verb> verbs;
  std::vector<std::string_view> adjs;
  std::vector<std::string_view> places;
};

const std::vector<Topic>& full_topics() {
  static const std::vector<Topic> topics = {
      {{{"cat", "cats"}, {"dog", "dogs"}, {"fox", "foxes"}, {"horse", "horses"}, {"bird", "birds"}, {"wolf", "wolves"},
        {"rabbit", "rabbits"}, {"mouse", "mice"}, {"owl", "owls"}, {"deer", "deer"}, {"goat", "goats"}, {"bear", "bears"}},
       {{"chases", "chase"}, {"watches", "watch"}, {"follows", "follow"}, {"feeds", "feed"}, {"hunts", "hunt"},
        {"finds", "find"}, {"hears", "hear"}, {"ignores", "ignore"}},
       {"small", "wild", "hungry", "quiet", "brown", "young", "old", "clever"},
       {"forest", "field", "barn", "meadow"}},
      {{{"cook", "cooks"}, {"knife", "knives"}, {"onion", "onions"}, {"pot", "pots"}, {"bowl", "bowls"}, {"spoon", "spoons"},
        {"tomato", "tomatoes"}, {"loaf", "loaves"}, {"pan", "pans"}, {"plate", "plates"}, {"oven", "ovens"}, {"recipe", "recipes"}},
       {{"cuts", "cut"}, {"stirs", "stir"}, {"bakes", "bake"}, {"boils", "boil"}, {"tastes", "taste"}, {"serves", "serve"},
        {"washes", "wash"}, {"peels", "peel"}},
       {"hot", "fresh", "sweet", "salty", "sharp", "clean", "heavy", "golden"},
       {"kitchen", "market", "bakery", "garden"}},
      {{{"sailor", "sailors"}, {"boat", "boats"}, {"sail", "sails"}, {"rope", "ropes"}, {"wave", "waves"}, {"harbor", "harbors"},
        {"captain", "captains"}, {"anchor", "anchors"}, {"mast", "masts"}, {"island", "islands"}, {"storm", "storms"}, {"ship", "ships"}},
       {{"steers", "steer"}, {"ties", "tie"}, {"raises", "raise"}, {"lowers", "lower"}, {"crosses", "cross"}, {"repairs", "repair"},
        {"spots", "spot"}, {"leaves", "leave"}},
       {"salty", "calm", "rough", "distant", "wooden", "swift", "dark", "broad"},
       {"sea", "bay", "port", "coast"}},
      {{{"singer", "singers"}, {"drum", "drums"}, {"song", "songs"}, {"guitar", "guitars"}, {"piano", "pianos"}, {"band", "bands"},
        {"violin", "violins"}, {"melody", "melodies"}, {"choir", "choirs"}, {"note", "notes"}, {"stage", "stages"}, {"audience", "audiences"}},
       {{"plays", "play"}, {"tunes", "tune"}, {"writes", "write"}, {"hums", "hum"}, {"records", "record"}, {"practices", "practice"},
        {"loves", "love"}, {"performs", "perform"}},
       {"loud", "soft", "slow", "bright", "famous", "gentle", "strange", "lovely"},
       {"studio", "hall", "theater", "club"}},
      {{{"driver", "drivers"}, {"bus", "buses"}, {"street", "streets"}, {"tower", "towers"}, {"bridge", "bridges"}, {"train", "trains"},
        {"shop", "shops"}, {"lamp", "lamps"}, {"car", "cars"}, {"crowd", "crowds"}, {"mayor", "mayors"}, {"station", "stations"}},
       {{"builds", "build"}, {"drives", "drive"}, {"passes", "pass"}, {"opens", "open"}, {"closes", "close"}, {"paints", "paint"},
        {"visits", "visit"}, {"cleans", "clean"}},
       {"busy", "tall", "narrow", "modern", "noisy", "empty", "crowded", "grey"},
       {"city", "square", "avenue", "district"}},
      {{{"scientist", "scientists"}, {"sample", "samples"}, {"lens", "lenses"}, {"theory", "theories"}, {"model", "models"},
        {"result", "results"}, {"engine", "engines"}, {"planet", "planets"}, {"cell", "cells"}, {"signal", "signals"},
        {"laser", "lasers"}, {"crystal", "crystals"}},
       {{"measures", "measure"}, {"tests", "test"}, {"observes", "observe"}, {"explains", "explain"}, {"predicts", "predict"},
        {"heats", "heat"}, {"studies", "study"}, {"counts", "count"}},
       {"precise", "tiny", "bright", "careful", "rare", "frozen", "complex", "simple"},
       {"lab", "institute", "observatory", "library"}},
  };
  return topics;
}

const std::vector<Topic>& micro_topics() {
  static const std::vector<Topic> topics = {
      {{{"cat", "cats"}, {"dog", "dogs"}, {"bird", "birds"}, {"fox", "foxes"}, {"mouse", "mice"}},
       {{"sees", "see"}, {"chases", "chase"}, {"likes", "like"}, {"finds", "find"}},
       {"small", "big", "red", "old"},
       {"park", "house"}},
  };
  return topics;
}

class Grammar {
 public:
  Grammar(const std::vector<Topic>& topics, bool micro, Rng& rng) : topics_(topics), micro_(micro), rng_(rng) {}

  std::string document(std::size_t sentences) {
    topic_ = rng_.below(topics_.size());
    std::string out;
    for (std::size_t i = 0; i < sentences; ++i) {
      if (i) out += ' ';
      out += sentence();
    }
    return out;
  }

 private:
  // Zipf-weighted index in [0, n).
  std::size_t zipf(std::size_t n) {
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += 1.0 / static_cast<double>(i + 1);
    double u = rng_.uniform() * z;
    for (std::size_t i = 0; i < n; ++i) {
      u -= 1.0 / static_cast<double>(i + 1);
      if (u < 0) return i;
    }
    return n - 1;
  }

  const Topic& pick_topic() {
    if (topics_.size() > 1 && rng_.uniform() < 0.15) return topics_[rng_.below(topics_.size())];
    return topics_[topic_];
  }

  bool coin(double p) { return rng_.uniform() < p; }

  std::string noun_phrase(bool plural, bool subject) {
    const Topic& t = pick_topic();
    std::string out;
    if (plural) {
      static constexpr std::array<std::string_view, 3> det = {"the", "some", "these"};
      out += micro_ ? "the" : det[rng_.below(det.size())];
    } else {
      static constexpr std::array<std::string_view, 3> det = {"the", "a", "this"};
      out += micro_ ? (coin(0.5) ? "the" : "a") : det[rng_.below(det.size())];
    }
    if (coin(subject ? 0.35 : 0.45)) {
      out += ' ';
      out += t.adjs[zipf(t.adjs.size())];
    }
    const Noun& n = t.nouns[zipf(t.nouns.size())];
    out += ' ';
    out += plural ? n.pl : n.sg;
    return out;
  }

  std::string place() {
    const Topic& t = topics_[topic_];
    return std::string("the ") + std::string(t.places[rng_.below(t.places.size())]);
  }

  std::string sentence() {
    const Topic& t = topics_[topic_];
    const bool plural = coin(0.4);
    const Verb& v = t.verbs[zipf(t.verbs.size())];
    std::string s;
    const double form = rng_.uniform();
    if (micro_) {
      if (form < 0.6) {
        s = noun_phrase(plural, true) + " " + std::string(plural ? v.base : v.s3) + " " + noun_phrase(coin(0.4), false);
        if (coin(0.4)) s += " in " + place();
      } else {
        s = noun_phrase(plural, true) + (plural ? " are " : " is ") + std::string(t.adjs[zipf(t.adjs.size())]);
      }
      return s + " .";
    }
    if (form < 0.45) {
      if (coin(0.2)) s += "in the morning , ";
      s += noun_phrase(plural, true) + " " + std::string(plural ? v.base : v.s3) + " " + noun_phrase(coin(0.4), false);
      if (coin(0.35)) s += " near " + place();
    } else if (form < 0.6) {
      s = noun_phrase(plural, true) + (plural ? " are " : " is ") + std::string(t.adjs[zipf(t.adjs.size())]) + " and " +
          std::string(t.adjs[zipf(t.adjs.size())]);
    } else if (form < 0.72) {
      s = plural ? "there are some " + std::string(t.nouns[zipf(t.nouns.size())].pl)
                 : "there is a " + std::string(t.nouns[zipf(t.nouns.size())].sg);
      s += " in " + place();
    } else if (form < 0.84) {
      s = noun_phrase(plural, true) + " went to " + place() + " in order to " + std::string(v.base) + " " +
          noun_phrase(coin(0.4), false);
    } else if (form < 0.93) {
      s = noun_phrase(plural, true) + " " + std::string(plural ? v.base : v.s3) + " " + noun_phrase(false, false) +
          " as well as " + noun_phrase(true, false);
    } else {
      s = "at the end of the day , " + noun_phrase(plural, true) + (plural ? " were " : " was ") +
          std::string(t.adjs[zipf(t.adjs.size())]);
    }
    return s + " .";
  }

  const std::vector<Topic>& topics_;
  bool micro_;
  Rng& rng_;
  std::size_t topic_ = 0;
};

}  // namespace

std::vector<std::string> generate_corpus(const SyntheticCorpusConfig& cfg, std::uint64_t seed) {
  RTD_REQUIRE(cfg.min_sentences >= 1 && cfg.min_sentences <= cfg.max_sentences, "synthetic corpus: bad sentence range");
  Rng rng(seed, Stream::kCorpus);
  Grammar g(cfg.micro ? micro_topics() : full_topics(), cfg.micro, rng);
  std::vector<std::string> docs;
  docs.reserve(cfg.documents);
  for (std::size_t d = 0; d < cfg.documents; ++d) {
    const std::size_t n = cfg.min_sentences + rng.below(cfg.max_sentences - cfg.min_sentences + 1);
    docs.push_back(g.document(n));
  }
  return docs;
}

}  // namespace rtd::data
