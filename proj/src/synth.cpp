#include "posegen/synth.hpp"

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

namespace posegen::synth {
namespace {

using geometry::PoseParams;
using geometry::Vec3;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string collapse_spaces(const std::string& s) {
  std::string out;
  bool in_space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t') {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

std::string hex_id(const std::string& label) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = rng::fnv1a(label);
  std::string out(12, '0');
  for (int i = 11; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// SMPL joint indices used by the family bases.
constexpr int kLeftHip = 1, kRightHip = 2, kSpine1 = 3, kLeftKnee = 4, kRightKnee = 5,
              kSpine2 = 6, kNeck = 12, kLeftShoulder = 16, kRightShoulder = 17,
              kLeftElbow = 18, kRightElbow = 19;

// Rotation conventions on this skeleton (y up, z forward, arms along +-x):
// hips flex forward with -x, knees fold with +x, spine bends forward with
// +x and twists with y; shoulders swing arms up with +-z and forward with
// -+y; elbows fold with -+y.
const std::map<std::string, std::vector<std::pair<int, Vec3>>>& family_bases() {
  static const std::map<std::string, std::vector<std::pair<int, Vec3>>> bases = {
      {"stand", {{kLeftShoulder, {0, 0, -0.9}}, {kRightShoulder, {0, 0, 0.9}}}},
      {"tpose", {}},
      {"squat",
       {{kLeftHip, {-1.0, 0, 0}},
        {kRightHip, {-1.0, 0, 0}},
        {kLeftKnee, {1.3, 0, 0}},
        {kRightKnee, {1.3, 0, 0}},
        {kSpine1, {0.3, 0, 0}},
        {kLeftShoulder, {0, -0.7, 0}},
        {kRightShoulder, {0, 0.7, 0}}}},
      {"crouch",
       {{kLeftHip, {-1.2, 0, 0}},
        {kRightHip, {-1.2, 0, 0}},
        {kLeftKnee, {1.9, 0, 0}},
        {kRightKnee, {1.9, 0, 0}},
        {kSpine1, {0.6, 0, 0}},
        {kSpine2, {0.4, 0, 0}},
        {kLeftElbow, {0, -1.1, 0}},
        {kRightElbow, {0, 1.1, 0}}}},
      {"kneel",
       {{kLeftHip, {-0.4, 0, 0}},
        {kRightHip, {-0.4, 0, 0}},
        {kLeftKnee, {2.0, 0, 0}},
        {kRightKnee, {2.0, 0, 0}},
        {kSpine1, {0.2, 0, 0}}}},
      {"sit",
       {{kLeftHip, {-1.5, 0, 0}},
        {kRightHip, {-1.5, 0, 0}},
        {kLeftKnee, {1.5, 0, 0}},
        {kRightKnee, {1.5, 0, 0}},
        {kSpine1, {0.2, 0, 0}},
        {kLeftElbow, {0, -0.5, 0}},
        {kRightElbow, {0, 0.5, 0}}}},
      {"bow",
       {{kSpine1, {1.0, 0, 0}},
        {kSpine2, {0.3, 0, 0}},
        {kLeftShoulder, {0, 0, -0.9}},
        {kRightShoulder, {0, 0, 0.9}}}},
      {"twist",
       {{kSpine1, {0, 0.7, 0}},
        {kSpine2, {0, 0.5, 0}},
        {kLeftElbow, {0, -1.2, 0}},
        {kRightElbow, {0, 0.4, 0}}}},
      {"stretch_side",
       {{kSpine1, {0, 0, 0.8}},
        {kSpine2, {0, 0, 0.5}},
        {kLeftShoulder, {0, 0, 1.3}},
        {kRightShoulder, {0, 0, 0.8}}}},
      {"reach_up",
       {{kLeftShoulder, {0, 0, 1.25}},
        {kRightShoulder, {0, 0, -1.25}},
        {kLeftElbow, {0, -0.2, 0}},
        {kRightElbow, {0, 0.2, 0}}}},
      {"jump",
       {{kLeftShoulder, {0, 0, 1.15}},
        {kRightShoulder, {0, 0, -1.15}},
        {kLeftHip, {-0.5, 0, 0}},
        {kRightHip, {-0.5, 0, 0}},
        {kLeftKnee, {1.05, 0, 0}},
        {kRightKnee, {1.05, 0, 0}},
        {kLeftElbow, {0, -0.3, 0}},
        {kRightElbow, {0, 0.3, 0}}}},
      {"wave_left",
       {{kLeftShoulder, {0, 0, 1.2}},
        {kLeftElbow, {0, -1.1, 0}},
        {kRightShoulder, {0, 0, 0.85}}}},
      {"wave_right",
       {{kRightShoulder, {0, 0, -1.2}},
        {kRightElbow, {0, 1.1, 0}},
        {kLeftShoulder, {0, 0, -0.85}}}},
      {"point_right",
       {{kRightShoulder, {0, 1.1, 0}},
        {kRightElbow, {0, 0.15, 0}},
        {kLeftShoulder, {0, 0, -0.85}},
        {kNeck, {0, 0.25, 0}}}},
      {"clap",
       {{kLeftElbow, {0, -1.3, 0}},
        {kRightElbow, {0, 1.3, 0}},
        {kLeftShoulder, {0, -0.5, 0}},
        {kRightShoulder, {0, 0.5, 0}}}},
      {"push",
       {{kLeftShoulder, {0, -1.0, 0}},
        {kRightShoulder, {0, 1.0, 0}},
        {kLeftElbow, {0, -0.35, 0}},
        {kRightElbow, {0, 0.35, 0}},
        {kSpine1, {0.25, 0, 0}}}},
      {"pull",
       {{kLeftElbow, {0, -1.6, 0}},
        {kRightElbow, {0, 1.6, 0}},
        {kLeftShoulder, {0, 0.4, 0}},
        {kRightShoulder, {0, -0.4, 0}},
        {kSpine1, {0.3, 0, 0}},
        {kLeftKnee, {0.35, 0, 0}},
        {kRightKnee, {0.35, 0, 0}}}},
      {"punch_left",
       {{kLeftShoulder, {0, -1.0, 0}},
        {kLeftElbow, {0, -0.25, 0}},
        {kRightShoulder, {0, 0.3, 0}},
        {kRightElbow, {0, 1.9, 0}},
        {kSpine1, {0, -0.35, 0}},
        {kLeftKnee, {0.4, 0, 0}},
        {kRightKnee, {0.4, 0, 0}}}},
      {"punch_right",
       {{kRightShoulder, {0, 1.0, 0}},
        {kRightElbow, {0, 0.25, 0}},
        {kLeftShoulder, {0, -0.3, 0}},
        {kLeftElbow, {0, -1.9, 0}},
        {kSpine1, {0, 0.35, 0}},
        {kLeftKnee, {0.4, 0, 0}},
        {kRightKnee, {0.4, 0, 0}}}},
      {"throw_right",
       {{kRightShoulder, {0, -1.2, 0}},
        {kRightElbow, {0, 1.2, 0}},
        {kLeftShoulder, {0, -0.6, 0}},
        {kLeftElbow, {0, -0.3, 0}},
        {kSpine1, {0, 0.45, 0}},
        {kSpine2, {0, 0.4, 0}},
        {kLeftHip, {-0.5, 0, 0}},
        {kRightHip, {0.2, 0, 0}}}},
      {"kick_right",
       {{kRightHip, {-1.3, 0, 0}},
        {kRightKnee, {0.35, 0, 0}},
        {kLeftKnee, {0.2, 0, 0}},
        {kLeftShoulder, {0, 0, -0.5}},
        {kRightShoulder, {0, 0, 0.5}},
        {kLeftElbow, {0, -1.0, 0}},
        {kRightElbow, {0, 1.0, 0}}}},
      {"kick_left",
       {{kLeftHip, {-1.3, 0, 0}},
        {kLeftKnee, {0.35, 0, 0}},
        {kRightKnee, {0.2, 0, 0}},
        {kLeftShoulder, {0, 0, -0.5}},
        {kRightShoulder, {0, 0, 0.5}},
        {kLeftElbow, {0, -1.0, 0}},
        {kRightElbow, {0, 1.0, 0}}}},
      {"lunge_right",
       {{kRightHip, {-0.9, 0, 0}},
        {kRightKnee, {1.25, 0, 0}},
        {kLeftHip, {0.25, 0, 0}},
        {kLeftKnee, {0.3, 0, 0}},
        {kSpine1, {0.2, 0, 0}},
        {kLeftShoulder, {0, 0, -0.8}},
        {kRightShoulder, {0, 0, 0.8}}}},
      {"lunge_left",
       {{kLeftHip, {-0.9, 0, 0}},
        {kLeftKnee, {1.25, 0, 0}},
        {kRightHip, {0.25, 0, 0}},
        {kRightKnee, {0.3, 0, 0}},
        {kSpine1, {0.2, 0, 0}},
        {kLeftShoulder, {0, 0, -0.8}},
        {kRightShoulder, {0, 0, 0.8}}}},
      {"balance_left",
       {{kLeftHip, {-1.1, 0, 0}},
        {kLeftKnee, {1.3, 0, 0}},
        {kLeftShoulder, {0, 0, -0.2}},
        {kRightShoulder, {0, 0, 0.2}}}},
      {"balance_right",
       {{kRightHip, {-1.1, 0, 0}},
        {kRightKnee, {1.3, 0, 0}},
        {kLeftShoulder, {0, 0, -0.2}},
        {kRightShoulder, {0, 0, 0.2}}}},
      {"run",
       {{kLeftHip, {-0.8, 0, 0}},
        {kRightHip, {0.45, 0, 0}},
        {kLeftKnee, {1.1, 0, 0}},
        {kRightKnee, {0.55, 0, 0}},
        {kLeftElbow, {0, -1.5, 0}},
        {kRightElbow, {0, 1.5, 0}},
        {kLeftShoulder, {0, -0.35, 0}},
        {kRightShoulder, {0, -0.35, 0}},
        {kSpine1, {0.25, 0, 0}}}},
      {"walk",
       {{kLeftHip, {-0.45, 0, 0}},
        {kRightHip, {0.25, 0, 0}},
        {kLeftKnee, {0.5, 0, 0}},
        {kRightKnee, {0.2, 0, 0}},
        {kLeftElbow, {0, -0.35, 0}},
        {kRightElbow, {0, 0.35, 0}},
        {kLeftShoulder, {0, 0, -0.8}},
        {kRightShoulder, {0, 0, 0.8}}}},
  };
  return bases;
}

constexpr double kBentThreshold = 0.8;  // rad; elbows, knees, spine sum

double angle(const PoseParams& pose, int joint) { return pose.rotations[joint].norm(); }

std::string arms_clause(const PoseFacts& f) {
  if (f.left_elbow_bent && f.right_elbow_bent) return "the elbows are bent";
  if (!f.left_elbow_bent && !f.right_elbow_bent) return "the arms are straight";
  if (f.left_elbow_bent) return "the left elbow is bent and the right arm is straight";
  return "the right elbow is bent and the left arm is straight";
}

std::string legs_clause(const PoseFacts& f) {
  if (f.left_knee_bent && f.right_knee_bent) return "the knees are bent";
  if (!f.left_knee_bent && !f.right_knee_bent) return "the legs are straight";
  if (f.left_knee_bent) return "the left knee is bent and the right leg is straight";
  return "the right knee is bent and the left leg is straight";
}

std::string torso_clause(const PoseFacts& f) {
  return f.torso_bent ? "the torso is bent" : "the torso is upright";
}

const char* kOverheadClause = "the hands are raised overhead";

std::string strip_context_clause(const std::string& text) {
  if (text.rfind("In a ", 0) == 0) {
    const auto pos = text.find(" pose, ");
    if (pos != std::string::npos) return text.substr(pos + 7);
  }
  return text;
}

std::vector<std::string> split_clauses(const std::string& text) {
  std::vector<std::string> clauses;
  std::string current;
  for (char c : text) {
    if (c == '.') {
      const std::string t = trim(collapse_spaces(current));
      if (!t.empty()) clauses.push_back(t);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  const std::string t = trim(collapse_spaces(current));
  if (!t.empty()) clauses.push_back(t);
  return clauses;
}

nlohmann::json triplet_to_json(const Triplet& t) {
  const Eigen::VectorXd flat = t.pose.to_flat();
  nlohmann::json j;
  j["id"] = t.id;
  j["category"] = t.category;
  j["action_label"] = t.action_label;
  j["abstract_prompt"] = t.abstract_prompt;
  j["detailed_prompt"] = t.detailed_prompt;
  j["pose"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  j["provenance"] = t.provenance;
  j["filtered"] = t.filtered;
  j["reason"] = t.reason;
  return j;
}

Triplet triplet_from_json(const nlohmann::json& j) {
  Triplet t;
  t.id = j.at("id").get<std::string>();
  t.category = j.at("category").get<std::string>();
  t.action_label = j.at("action_label").get<std::string>();
  t.abstract_prompt = j.at("abstract_prompt").get<std::string>();
  t.detailed_prompt = j.at("detailed_prompt").get<std::string>();
  const auto flat = j.at("pose").get<std::vector<double>>();
  t.pose = PoseParams::from_flat(
      Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<int>(flat.size())));
  t.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
  t.filtered = j.at("filtered").get<bool>();
  t.reason = j.at("reason").get<std::string>();
  return t;
}

std::string strip_side(const std::string& joint_name) {
  if (joint_name.rfind("left_", 0) == 0) return joint_name.substr(5);
  if (joint_name.rfind("right_", 0) == 0) return joint_name.substr(6);
  return joint_name;
}

}  // namespace

int ActionTaxonomy::total() const {
  int n = 0;
  for (const auto& subs : sub_actions) n += static_cast<int>(subs.size());
  return n;
}

std::vector<std::pair<std::string, std::string>> ActionTaxonomy::flat() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    for (const auto& label : sub_actions[c]) out.emplace_back(categories[c], label);
  }
  return out;
}

ActionTaxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open taxonomy file: " + path);
  ActionTaxonomy tax;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const bool indented = line[0] == ' ' || line[0] == '\t';
    const std::string entry = trim(line);
    if (entry.empty()) continue;
    if (!indented) {
      if (entry.back() != ':')
        throw std::runtime_error("taxonomy: category line must end with ':': " + entry);
      tax.categories.push_back(trim(entry.substr(0, entry.size() - 1)));
      tax.sub_actions.emplace_back();
    } else {
      if (tax.categories.empty())
        throw std::runtime_error("taxonomy: label before any category: " + entry);
      tax.sub_actions.back().push_back(entry);
    }
  }
  validate_taxonomy(tax);
  return tax;
}

void validate_taxonomy(const ActionTaxonomy& taxonomy) {
  if (taxonomy.categories.size() != 11) {
    throw std::runtime_error("taxonomy: expected 11 categories, got " +
                             std::to_string(taxonomy.categories.size()));
  }
  std::set<std::string> seen;
  for (std::size_t c = 0; c < taxonomy.categories.size(); ++c) {
    const auto& subs = taxonomy.sub_actions[c];
    if (subs.size() != 50) {
      throw std::runtime_error("taxonomy: category '" + taxonomy.categories[c] + "' has " +
                               std::to_string(subs.size()) + " labels, expected 50");
    }
    for (const auto& label : subs) {
      if (!seen.insert(label).second)
        throw std::runtime_error("taxonomy: duplicate label '" + label + "'");
    }
  }
}

const std::string& PoseFamilyTable::family_of(const std::string& label) const {
  const auto it = label_to_family.find(label);
  if (it == label_to_family.end())
    throw std::out_of_range("no pose family for label '" + label + "'");
  return it->second;
}

PoseFamilyTable load_family_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pose family table: " + path);
  PoseFamilyTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("pose family table: missing tab: " + line);
    const std::string label = trim(line.substr(0, tab));
    const std::string family = trim(line.substr(tab + 1));
    if (family_bases().find(family) == family_bases().end())
      throw std::runtime_error("pose family table: unknown family '" + family + "'");
    if (!table.label_to_family.emplace(label, family).second)
      throw std::runtime_error("pose family table: duplicate label '" + label + "'");
  }
  return table;
}

const std::vector<std::string>& family_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, joints] : family_bases()) out.push_back(name);
    return out;
  }();
  return names;
}

PoseParams family_base(const std::string& family) {
  const auto it = family_bases().find(family);
  if (it == family_bases().end()) throw std::out_of_range("unknown pose family: " + family);
  PoseParams pose;
  for (const auto& [joint, rotation] : it->second) pose.rotations[joint] = rotation;
  return pose;
}

PoseParams sample_family_pose(const std::string& family, double sigma, rng::Engine& eng) {
  PoseParams pose = family_base(family);
  const double clamp = 2.0 * sigma;
  for (int j = 1; j < geometry::kNumJoints; ++j) {
    for (int axis = 0; axis < 3; ++axis) {
      const double jitter = std::clamp(rng::normal(eng, 0.0, sigma), -clamp, clamp);
      pose.rotations[j](axis) += jitter;
    }
  }
  return pose;
}

PoseFacts derive_facts(const PoseParams& pose) {
  PoseFacts f;
  f.left_elbow_bent = angle(pose, kLeftElbow) > kBentThreshold;
  f.right_elbow_bent = angle(pose, kRightElbow) > kBentThreshold;
  f.left_knee_bent = angle(pose, kLeftKnee) > kBentThreshold;
  f.right_knee_bent = angle(pose, kRightKnee) > kBentThreshold;
  f.torso_bent =
      angle(pose, kSpine1) + angle(pose, kSpine2) + angle(pose, 9) > kBentThreshold;

  PoseParams rooted = pose;
  rooted.rotations[0].setZero();
  const auto joints = geometry::forward_kinematics(rooted, geometry::default_skeleton());
  const double head_y = joints.positions[15].y();
  f.hands_overhead =
      joints.positions[20].y() > head_y && joints.positions[21].y() > head_y;
  return f;
}

std::string render_caption(const PoseFacts& facts) {
  std::string out = arms_clause(facts);
  out += ". " + legs_clause(facts);
  out += ". " + torso_clause(facts);
  if (facts.hands_overhead) out += std::string(". ") + kOverheadClause;
  out += ".";
  return out;
}

std::string caption_pose(const PoseParams& pose) { return render_caption(derive_facts(pose)); }

PoseFacts parse_caption(const std::string& caption) {
  PoseFacts f;
  bool arms = false, legs = false, torso = false;
  for (const auto& clause : split_clauses(strip_context_clause(caption))) {
    if (clause == "the elbows are bent") {
      f.left_elbow_bent = f.right_elbow_bent = true;
      arms = true;
    } else if (clause == "the arms are straight") {
      arms = true;
    } else if (clause == "the left elbow is bent and the right arm is straight") {
      f.left_elbow_bent = true;
      arms = true;
    } else if (clause == "the right elbow is bent and the left arm is straight") {
      f.right_elbow_bent = true;
      arms = true;
    } else if (clause == "the knees are bent") {
      f.left_knee_bent = f.right_knee_bent = true;
      legs = true;
    } else if (clause == "the legs are straight") {
      legs = true;
    } else if (clause == "the left knee is bent and the right leg is straight") {
      f.left_knee_bent = true;
      legs = true;
    } else if (clause == "the right knee is bent and the left leg is straight") {
      f.right_knee_bent = true;
      legs = true;
    } else if (clause == "the torso is bent") {
      f.torso_bent = true;
      torso = true;
    } else if (clause == "the torso is upright") {
      torso = true;
    } else if (clause == kOverheadClause) {
      f.hands_overhead = true;
    } else {
      throw std::invalid_argument("caption clause not recognized: '" + clause + "'");
    }
  }
  if (!arms || !legs || !torso)
    throw std::invalid_argument("caption missing a required clause: " + caption);
  return f;
}

int count_contradictions(const std::string& caption, const PoseParams& pose) {
  const PoseFacts stated = parse_caption(caption);
  const PoseFacts actual = derive_facts(pose);
  int n = 0;
  n += stated.left_elbow_bent != actual.left_elbow_bent;
  n += stated.right_elbow_bent != actual.right_elbow_bent;
  n += stated.left_knee_bent != actual.left_knee_bent;
  n += stated.right_knee_bent != actual.right_knee_bent;
  n += stated.torso_bent != actual.torso_bent;
  n += stated.hands_overhead != actual.hands_overhead;
  return n;
}

std::string refine_prompt(const std::string& caption, const std::string& label) {
  const std::string body = strip_context_clause(trim(caption));
  const auto clauses = split_clauses(body);
  if (clauses.empty()) throw std::invalid_argument("refine_prompt: empty caption");

  std::vector<std::string> unique;
  for (const auto& clause : clauses) {
    if (std::find(unique.begin(), unique.end(), clause) == unique.end())
      unique.push_back(clause);
  }

  std::string out = "In a " + label + " pose, " + unique.front();
  for (std::size_t i = 1; i < unique.size(); ++i) out += ". " + unique[i];
  out += ".";
  return out;
}

std::vector<std::string> TaxonomyPromptSource::labels() {
  std::vector<std::string> out;
  for (const auto& [category, label] : taxonomy_.flat()) out.push_back(label);
  return out;
}

std::string ProceduralImageSynthesizer::synthesize(const std::string& label,
                                                   std::uint64_t seed) {
  std::ostringstream handle;
  handle << "procedural:" << label << '#' << std::hex << seed;
  return handle.str();
}

PoseParams ProceduralPoseEstimator::estimate(const std::string& image_handle) {
  if (image_handle.rfind("procedural:", 0) != 0)
    throw std::invalid_argument("pose estimator: unknown image handle: " + image_handle);
  const auto hash_pos = image_handle.rfind('#');
  if (hash_pos == std::string::npos)
    throw std::invalid_argument("pose estimator: handle lacks a seed: " + image_handle);
  const std::string label = image_handle.substr(11, hash_pos - 11);
  const std::uint64_t seed = std::stoull(image_handle.substr(hash_pos + 1), nullptr, 16);
  rng::Engine eng(seed);
  return sample_family_pose(table_.family_of(label), sigma_, eng);
}

std::string HttpPromptRefiner::refine(const std::string& caption, const std::string& label) {
  httplib::Client client(host_, port_);
  nlohmann::json body;
  body["caption"] = caption;
  body["label"] = label;
  const auto res = client.Post("/refine", body.dump(), "application/json");
  if (!res) throw std::runtime_error("refine endpoint unreachable: " + host_);
  if (res->status != 200)
    throw std::runtime_error("refine endpoint returned status " + std::to_string(res->status));
  return nlohmann::json::parse(res->body).at("refined").get<std::string>();
}

Triplet synthesize_triplet(const std::string& label, const StageClients& clients,
                           std::uint64_t seed, const std::string& category) {
  Triplet t;
  t.id = hex_id(label);
  t.category = category;
  t.action_label = label;

  const auto fail = [&t](const char* stage, const std::exception& e) {
    t.filtered = true;
    t.reason = std::string("stage:") + stage;
    (void)e;
    return t;
  };
  const std::runtime_error unconfigured("client not configured");

  if (!clients.prompts) return fail("prompt", unconfigured);
  t.provenance["prompt"] = clients.prompts->name();
  t.abstract_prompt = abstract_prompt(label);

  const std::uint64_t label_seed = rng::derive_seed(seed, label);
  std::string handle;
  if (!clients.image) return fail("image", unconfigured);
  try {
    handle = clients.image->synthesize(label, label_seed);
    t.provenance["image"] = clients.image->name();
  } catch (const std::exception& e) {
    return fail("image", e);
  }

  if (!clients.pose) return fail("pose", unconfigured);
  try {
    t.pose = clients.pose->estimate(handle);
    t.provenance["pose"] = clients.pose->name();
  } catch (const std::exception& e) {
    return fail("pose", e);
  }

  std::string caption;
  if (!clients.caption) return fail("caption", unconfigured);
  try {
    caption = clients.caption->caption(t.pose);
    t.provenance["caption"] = clients.caption->name();
  } catch (const std::exception& e) {
    return fail("caption", e);
  }

  if (!clients.refine) return fail("refine", unconfigured);
  try {
    t.detailed_prompt = clients.refine->refine(caption, label);
    t.provenance["refine"] = clients.refine->name();
  } catch (const std::exception& e) {
    return fail("refine", e);
  }
  return t;
}

std::vector<Triplet> synthesize_corpus(const ActionTaxonomy& taxonomy,
                                       const StageClients& clients, std::uint64_t seed,
                                       int limit) {
  std::vector<Triplet> out;
  for (const auto& [category, label] : taxonomy.flat()) {
    if (limit >= 0 && static_cast<int>(out.size()) >= limit) break;
    out.push_back(synthesize_triplet(label, clients, seed, category));
  }
  return out;
}

FilterRules default_filter_rules() {
  return FilterRules{{
      {"hip", 2.4},
      {"knee", 2.6},
      {"ankle", 1.2},
      {"foot", 1.0},
      {"spine1", 1.6},
      {"spine2", 1.6},
      {"spine3", 1.6},
      {"neck", 1.4},
      {"head", 1.2},
      {"collar", 0.9},
      {"shoulder", 3.0},
      {"elbow", 2.8},
      {"wrist", 1.8},
      {"hand", 1.6},
  }};
}

FilterOutcome filter_triplets(std::vector<Triplet> triplets, const FilterRules& rules) {
  FilterOutcome out;
  const auto& skel = geometry::default_skeleton();
  for (auto& t : triplets) {
    if (t.filtered) {
      out.rejected.push_back(std::move(t));
      continue;
    }
    std::string reason;
    if (!t.pose.all_finite()) {
      reason = "non-finite";
    } else {
      // The root encodes global orientation and carries no anatomical limit.
      for (int j = 1; j < geometry::kNumJoints && reason.empty(); ++j) {
        const std::string base = strip_side(skel.names[j]);
        const auto it = rules.joint_limit.find(base);
        if (it != rules.joint_limit.end() && t.pose.rotations[j].norm() > it->second)
          reason = "anatomy:" + base;
      }
    }
    if (reason.empty() && trim(t.detailed_prompt).empty()) reason = "empty-caption";

    if (reason.empty()) {
      out.kept.push_back(std::move(t));
    } else {
      t.filtered = true;
      t.reason = reason;
      out.rejected.push_back(std::move(t));
    }
  }
  return out;
}

void save_triplets(const std::vector<Triplet>& triplets, const std::string& path) {
  std::ofstream outf(path);
  if (!outf) throw std::runtime_error("cannot write triplet file: " + path);
  for (const auto& t : triplets) outf << triplet_to_json(t).dump() << '\n';
}

std::vector<Triplet> load_triplets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open triplet file: " + path);
  std::vector<Triplet> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    out.push_back(triplet_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

void write_review_csv(const std::vector<Triplet>& triplets, const std::string& path) {
  std::ofstream outf(path);
  if (!outf) throw std::runtime_error("cannot write review file: " + path);
  outf << "id,reason,verdict\n";
  for (const auto& t : triplets) outf << t.id << ',' << t.reason << ",\n";
}

void TripletStore::append(const Triplet& triplet) {
  const std::lock_guard<std::mutex> lock(write_mutex_);
  std::ofstream outf(path_, std::ios::app);
  if (!outf) throw std::runtime_error("cannot append to triplet file: " + path_);
  outf << triplet_to_json(triplet).dump() << '\n';
}

}  // namespace posegen::synth
