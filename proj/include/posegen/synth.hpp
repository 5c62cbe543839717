#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "posegen/geometry.hpp"
#include "posegen/rng.hpp"

namespace posegen::synth {

inline constexpr const char* kAbstractPrefix = "Generate the pose of ";

inline std::string abstract_prompt(const std::string& label) {
  return std::string(kAbstractPrefix) + label;
}

/// 11 top-level categories, 50 action labels each, unique across the file.
struct ActionTaxonomy {
  std::vector<std::string> categories;
  std::vector<std::vector<std::string>> sub_actions;  // parallel to categories

  int total() const;
  /// (category, label) pairs in file order.
  std::vector<std::pair<std::string, std::string>> flat() const;
};

/// Parses the versioned taxonomy file (category header line ending in ':',
/// indented labels) and validates counts and uniqueness; validation errors
/// name the offending category or label.
ActionTaxonomy load_taxonomy(const std::string& path);
void validate_taxonomy(const ActionTaxonomy& taxonomy);

/// Label -> parametric pose family, shipped as a tab-separated table.
struct PoseFamilyTable {
  std::map<std::string, std::string> label_to_family;

  const std::string& family_of(const std::string& label) const;  // throws on unknown
};

PoseFamilyTable load_family_table(const std::string& path);

/// Names of the built-in parametric families (squat, reach_up, kick_left, ...).
const std::vector<std::string>& family_names();

/// Base joint rotations of one family; throws on an unknown name.
geometry::PoseParams family_base(const std::string& family);

/// Base pose plus per-component jitter ~ N(0, sigma) clamped to two sigma on
/// every non-root joint. The root stays at the family base.
geometry::PoseParams sample_family_pose(const std::string& family, double sigma,
                                        rng::Engine& eng);

/// Joint facts the captioner states. Every field is re-derivable from the
/// pose, so captions can be checked for contradictions.
struct PoseFacts {
  bool left_elbow_bent = false;
  bool right_elbow_bent = false;
  bool left_knee_bent = false;
  bool right_knee_bent = false;
  bool torso_bent = false;
  bool hands_overhead = false;

  bool operator==(const PoseFacts&) const = default;
};

/// Thresholds: elbow or knee counts as bent above 0.8 rad of rotation; the
/// torso counts as bent when the three spine joints sum past 0.8 rad; hands
/// count as overhead when both wrists sit above the head after forward
/// kinematics with the root zeroed (so facts ignore global orientation).
PoseFacts derive_facts(const geometry::PoseParams& pose);

std::string render_caption(const PoseFacts& facts);

/// Deterministic description of arms, legs and torso from local joint
/// angles only; equals render_caption(derive_facts(pose)).
std::string caption_pose(const geometry::PoseParams& pose);

/// Inverse of render_caption; accepts refined prompts by skipping a leading
/// "In a <label> pose, " clause. Throws on text it did not generate.
PoseFacts parse_caption(const std::string& caption);

/// Facts stated by the caption that disagree with the pose (0 on captioner
/// output by construction).
int count_contradictions(const std::string& caption, const geometry::PoseParams& pose);

/// Prepends "In a <label> pose, ", drops repeated clauses, and collapses
/// whitespace. Idempotent; an existing action-context clause is replaced.
/// Throws std::invalid_argument on an empty caption.
std::string refine_prompt(const std::string& caption, const std::string& label);

// ---------------------------------------------------------------------------
// Stage clients. Each procedural default is deterministic under a fixed
// seed; real external backends plug in behind the same interfaces.

struct PromptSource {
  virtual ~PromptSource() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> labels() = 0;
};

struct ImageSynthesizer {
  virtual ~ImageSynthesizer() = default;
  virtual std::string name() const = 0;
  /// Returns an opaque image handle for the label.
  virtual std::string synthesize(const std::string& label, std::uint64_t seed) = 0;
};

struct PoseEstimator {
  virtual ~PoseEstimator() = default;
  virtual std::string name() const = 0;
  /// Image handle -> SMPL-format pose (any source format is the
  /// implementation's concern).
  virtual geometry::PoseParams estimate(const std::string& image_handle) = 0;
};

struct PoseCaptioner {
  virtual ~PoseCaptioner() = default;
  virtual std::string name() const = 0;
  virtual std::string caption(const geometry::PoseParams& pose) = 0;
};

struct PromptRefiner {
  virtual ~PromptRefiner() = default;
  virtual std::string name() const = 0;
  virtual std::string refine(const std::string& caption, const std::string& label) = 0;
};

class TaxonomyPromptSource : public PromptSource {
 public:
  explicit TaxonomyPromptSource(ActionTaxonomy taxonomy) : taxonomy_(std::move(taxonomy)) {}
  std::string name() const override { return "taxonomy"; }
  std::vector<std::string> labels() override;

 private:
  ActionTaxonomy taxonomy_;
};

/// Identity pass-through: the handle encodes (label, seed) so the procedural
/// estimator can regenerate the pose the "image" depicts.
class ProceduralImageSynthesizer : public ImageSynthesizer {
 public:
  std::string name() const override { return "procedural-image"; }
  std::string synthesize(const std::string& label, std::uint64_t seed) override;
};

class ProceduralPoseEstimator : public PoseEstimator {
 public:
  ProceduralPoseEstimator(PoseFamilyTable table, double sigma = 0.1)
      : table_(std::move(table)), sigma_(sigma) {}
  std::string name() const override { return "procedural-pose"; }
  geometry::PoseParams estimate(const std::string& image_handle) override;

 private:
  PoseFamilyTable table_;
  double sigma_;
};

class RuleBasedCaptioner : public PoseCaptioner {
 public:
  std::string name() const override { return "rule-captioner"; }
  std::string caption(const geometry::PoseParams& pose) override { return caption_pose(pose); }
};

class TemplateRefiner : public PromptRefiner {
 public:
  std::string name() const override { return "template-refiner"; }
  std::string refine(const std::string& caption, const std::string& label) override {
    return refine_prompt(caption, label);
  }
};

/// Refiner backed by a POST /refine JSON endpoint ({"caption","label"} in,
/// {"refined"} out). The template for wiring a real external backend; tests
/// run it against a local mock server. Transport or HTTP errors throw.
class HttpPromptRefiner : public PromptRefiner {
 public:
  HttpPromptRefiner(std::string host, int port) : host_(std::move(host)), port_(port) {}
  std::string name() const override { return "http-refiner"; }
  std::string refine(const std::string& caption, const std::string& label) override;

 private:
  std::string host_;
  int port_;
};

struct StageClients {
  PromptSource* prompts = nullptr;
  ImageSynthesizer* image = nullptr;
  PoseEstimator* pose = nullptr;
  PoseCaptioner* caption = nullptr;
  PromptRefiner* refine = nullptr;
};

struct Triplet {
  std::string id;
  std::string category;
  std::string action_label;
  std::string abstract_prompt;
  std::string detailed_prompt;
  geometry::PoseParams pose;
  std::map<std::string, std::string> provenance;  // stage -> client name
  bool filtered = false;
  std::string reason;
};

/// Runs prompt -> image -> pose -> caption -> refine with the per-label seed
/// derived from (seed, label). A throwing stage marks the triplet filtered
/// with reason "stage:<name>" and stops the pipeline.
Triplet synthesize_triplet(const std::string& label, const StageClients& clients,
                           std::uint64_t seed, const std::string& category = "");

/// Every taxonomy label in file order (optionally capped at `limit`).
std::vector<Triplet> synthesize_corpus(const ActionTaxonomy& taxonomy,
                                       const StageClients& clients, std::uint64_t seed,
                                       int limit = -1);

/// Per-joint rotation-magnitude limits in radians, keyed by joint name with
/// the left_/right_ prefix stripped.
struct FilterRules {
  std::map<std::string, double> joint_limit;
};

FilterRules default_filter_rules();

struct FilterOutcome {
  std::vector<Triplet> kept;
  std::vector<Triplet> rejected;
};

/// Rules in order: stage failures stay rejected; non-finite pose ->
/// "non-finite"; any joint past its limit -> "anatomy:<joint>"; empty
/// detailed prompt -> "empty-caption".
FilterOutcome filter_triplets(std::vector<Triplet> triplets, const FilterRules& rules);

/// JSON-Lines persistence, one triplet per line, pose as 72 numbers.
void save_triplets(const std::vector<Triplet>& triplets, const std::string& path);
std::vector<Triplet> load_triplets(const std::string& path);

/// CSV of id, reason, verdict (verdict left blank for a human pass).
void write_review_csv(const std::vector<Triplet>& triplets, const std::string& path);

/// Append-only store: single writer at a time, readers load the whole file.
class TripletStore {
 public:
  explicit TripletStore(std::string path) : path_(std::move(path)) {}
  void append(const Triplet& triplet);

 private:
  std::string path_;
  std::mutex write_mutex_;
};

}  // namespace posegen::synth
