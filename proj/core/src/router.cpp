#include "maskroute/router.hpp"

#include <cstdio>
#include <mutex>
#include <sstream>

#include "maskroute/checkpoint.hpp"
#include "maskroute/config.hpp"
#include "maskroute/crc32.hpp"
#include "maskroute/errors.hpp"
#include "maskroute/mask_io.hpp"

namespace maskroute {

Tensor RoutedModel::forward(const TokenBatch& tokens) const {
  return maskroute::forward(*backbone_, slot_->head, tokens, slot_->masks);
}

std::vector<int> RoutedModel::predict(std::span<const Example> examples) const {
  return maskroute::predict(*backbone_, *slot_, examples);
}

EvalResult RoutedModel::evaluate(std::span<const Example> examples) const {
  return maskroute::evaluate(*backbone_, *slot_, examples);
}

MaskRegistry::MaskRegistry(std::shared_ptr<const Backbone> backbone)
    : backbone_(std::move(backbone)) {
  if (!backbone_) throw ContractError("registry needs a backbone");
  if (!backbone_->frozen()) throw ContractError("registry backbone must be frozen");
}

const TrainedTaskSlot& MaskRegistry::register_task(const std::string& id, const TaskHead& head,
                                                   const TrainConfig& cfg,
                                                   const TaskDataset& data) {
  if (cfg.mode != TrainMode::kMaskFt)
    throw ContractError("register_task trains mask slots; got mode " + to_string(cfg.mode));
  if (contains(id)) throw RegistryError("task '" + id + "' is already registered");
  TrainResult r = train(*backbone_, head, cfg, data);
  return add_slot(id, std::move(r.slot));
}

const TrainedTaskSlot& MaskRegistry::add_slot(const std::string& id, TrainedTaskSlot slot) {
  if (slot.weights) throw ContractError("registry slots run on the shared backbone");
  overrides_from_masks(*backbone_, slot.masks);  // validates names and sizes
  auto owned = std::make_unique<TrainedTaskSlot>(std::move(slot));
  std::unique_lock lock(*mutex_);
  auto [it, inserted] = slots_.emplace(id, std::move(owned));
  if (!inserted) throw RegistryError("task '" + id + "' is already registered");
  return *it->second;
}

const TrainedTaskSlot& MaskRegistry::slot(const std::string& id) const {
  std::shared_lock lock(*mutex_);
  const auto it = slots_.find(id);
  if (it == slots_.end()) throw LookupError("unknown task '" + id + "'");
  return *it->second;
}

RoutedModel MaskRegistry::switch_task(const std::string& id) const {
  return RoutedModel(*backbone_, slot(id), id);
}

bool MaskRegistry::contains(const std::string& id) const {
  std::shared_lock lock(*mutex_);
  return slots_.count(id) != 0;
}

std::size_t MaskRegistry::size() const {
  std::shared_lock lock(*mutex_);
  return slots_.size();
}

std::vector<std::string> MaskRegistry::task_ids() const {
  std::shared_lock lock(*mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : slots_) out.push_back(id);
  return out;
}

StorageReport storage_report(std::uint64_t backbone_params, std::span<const TaskCounts> tasks) {
  if (tasks.empty()) throw RegistryError("storage report needs at least one task");
  if (backbone_params == 0) throw ContractError("backbone has no parameters");
  StorageReport rep;
  rep.backbone_params = backbone_params;
  rep.backbone_bits = 32 * backbone_params;
  rep.deployed_bits = rep.backbone_bits;
  for (const auto& t : tasks) {
    TaskStorage s;
    s.task_id = t.task_id;
    s.mask_bits = t.mask_elements;
    s.head_params = t.head_params;
    s.head_bits = 32 * t.head_params;
    s.score_bytes = 8 * t.score_elements;
    s.overhead_ratio =
        static_cast<double>(s.mask_bits + s.head_bits) / static_cast<double>(rep.backbone_bits);
    rep.deployed_bits += s.mask_bits + s.head_bits;
    rep.independent_bits += rep.backbone_bits + s.head_bits;
    rep.tasks.push_back(std::move(s));
  }
  rep.multi_task_saving =
      1.0 - static_cast<double>(rep.deployed_bits) / static_cast<double>(rep.independent_bits);
  return rep;
}

StorageReport storage_report(const MaskRegistry& registry) {
  std::vector<TaskCounts> counts;
  for (const auto& id : registry.task_ids()) {
    const auto& s = registry.slot(id);
    TaskCounts c{id, 0, s.head.parameter_count(), 0};
    for (const auto& m : s.masks.layers) c.mask_elements += m.numel();
    for (const auto& ls : s.scores) c.score_elements += ls.scores.numel();
    counts.push_back(std::move(c));
  }
  return storage_report(registry.backbone().parameter_count(), counts);
}

std::string StorageReport::to_text() const {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "backbone_params=%llu backbone_bits=%llu\n",
                static_cast<unsigned long long>(backbone_params),
                static_cast<unsigned long long>(backbone_bits));
  os << buf;
  os << "task,mask_bits,head_bits,overhead_ratio,training_score_bytes\n";
  for (const auto& t : tasks) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%llu,%.6f,%llu\n", t.task_id.c_str(),
                  static_cast<unsigned long long>(t.mask_bits),
                  static_cast<unsigned long long>(t.head_bits), t.overhead_ratio,
                  static_cast<unsigned long long>(t.score_bytes));
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "deployed_bits=%llu independent_bits=%llu multi_task_saving=%.6f\n",
                static_cast<unsigned long long>(deployed_bits),
                static_cast<unsigned long long>(independent_bits), multi_task_saving);
  os << buf;
  return os.str();
}

namespace {

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

}  // namespace

void write_registry(const MaskRegistry& registry, const std::filesystem::path& manifest) {
  const auto dir = manifest.has_parent_path() ? manifest.parent_path() : std::filesystem::path(".");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  Config cfg;
  const auto bytes = serialize_backbone(registry.backbone());
  write_file_atomic(dir / "backbone.bin", bytes);
  cfg.set("backbone", "backbone.bin");
  cfg.set("backbone_crc32", hex32(crc32(bytes)));
  std::string ids;
  for (const auto& id : registry.task_ids()) {
    const auto& s = registry.slot(id);
    if (!ids.empty()) ids += ',';
    ids += id;
    save_masks(s.masks, dir / (id + ".mask"));
    save_head(s.head, dir / (id + ".head"));
    cfg.set(id + ".mask", id + ".mask");
    cfg.set(id + ".head", id + ".head");
    if (!s.scores.empty()) {
      save_scores(s.scores, dir / (id + ".scores"));
      cfg.set(id + ".scores", id + ".scores");
    }
    char sp[32];
    std::snprintf(sp, sizeof sp, "%.17g", s.budget.sparsity);
    cfg.set(id + ".sparsity", sp);
    cfg.set(id + ".scope", s.scope.to_string());
  }
  cfg.set("tasks", ids);
  const std::string text = cfg.to_text();
  write_file_atomic(manifest, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                        text.size()));
}

MaskRegistry read_registry(const std::filesystem::path& manifest) {
  const auto dir = manifest.has_parent_path() ? manifest.parent_path() : std::filesystem::path(".");
  const Config cfg = Config::load(manifest);
  const auto backbone_file = cfg.get("backbone");
  if (!backbone_file) throw FormatError(FormatErrorKind::kMalformed, "manifest lacks 'backbone'");
  const auto bytes = read_file(dir / *backbone_file);
  const std::string expected = cfg.get_string("backbone_crc32", "");
  if (hex32(crc32(bytes)) != expected)
    throw FormatError(FormatErrorKind::kBadCrc, "backbone checksum " + hex32(crc32(bytes)) +
                                                    " does not match manifest " + expected);
  auto backbone = std::make_shared<Backbone>(deserialize_backbone(bytes));
  if (!backbone->frozen()) backbone->freeze();
  MaskRegistry reg(std::move(backbone));
  for (const auto& id : split_list(cfg.get_string("tasks", ""))) {
    TrainedTaskSlot slot;
    slot.mode = TrainMode::kMaskFt;
    slot.budget = SparsityBudget(cfg.get_double(id + ".sparsity", 0.0));
    slot.scope = MaskScope::parse(cfg.get_string(id + ".scope", "ffn"));
    const auto mask_file = cfg.get(id + ".mask");
    const auto head_file = cfg.get(id + ".head");
    if (!mask_file || !head_file)
      throw FormatError(FormatErrorKind::kMalformed, "manifest section [" + id + "] incomplete");
    slot.masks = load_masks(dir / *mask_file);
    slot.head = load_head(dir / *head_file);
    if (const auto sf = cfg.get(id + ".scores")) slot.scores = load_scores(dir / *sf);
    reg.add_slot(id, std::move(slot));
  }
  return reg;
}

}  // namespace maskroute
