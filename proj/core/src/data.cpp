#include "maskroute/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "maskroute/config.hpp"
#include "maskroute/errors.hpp"

namespace maskroute {

void GenSpec::validate() const {
  if (n_tasks == 0) throw ConfigError("n_tasks must be positive");
  if (n_classes < 2 || n_classes % 2 != 0)
    throw ConfigError("n_classes must be even and at least 2 (classes come in ordered pairs)");
  if (inventory_size > vocab_size) throw ConfigError("inventory_size exceeds vocab_size");
  if (inventory_size < n_classes + 1)
    throw ConfigError("inventory_size must exceed n_classes (markers plus at least one filler)");
  if (seq_len < 3 * (n_classes / 2)) throw ConfigError("seq_len must be at least 1.5 * n_classes");
  if (train_per_task == 0 || eval_per_task == 0) throw ConfigError("empty split requested");
  if (!(overlap_min >= 0.0 && overlap_max <= 1.0 && overlap_min <= overlap_max))
    throw ConfigError("need 0 <= overlap_min <= overlap_max <= 1");
}

namespace {

struct TaskGenerator {
  const GenSpec& spec;
  std::vector<int> markers_flat;  // a0 b0 a1 b1 ...
  std::vector<int> filler;

  std::vector<int> sequence(int label, Rng& rng) const {
    const std::size_t n_pairs = spec.n_classes / 2;
    const auto planted = static_cast<std::size_t>(label) / 2;
    const bool reversed = label % 2 == 1;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      // Units: the planted bigram, every other marker alone, then fillers.
      std::vector<std::vector<int>> units;
      const int a = markers_flat[2 * planted];
      const int b = markers_flat[2 * planted + 1];
      units.push_back(reversed ? std::vector<int>{b, a} : std::vector<int>{a, b});
      for (std::size_t p = 0; p < n_pairs; ++p) {
        if (p == planted) continue;
        units.push_back({markers_flat[2 * p]});
        units.push_back({markers_flat[2 * p + 1]});
      }
      for (std::size_t i = 2 * n_pairs; i < spec.seq_len; ++i)
        units.push_back({filler[rng.below(filler.size())]});
      rng.shuffle(std::span(units));
      std::vector<int> seq;
      for (const auto& u : units) seq.insert(seq.end(), u.begin(), u.end());
      bool ok = true;
      for (std::size_t i = 0; ok && i + 1 < seq.size(); ++i) {
        for (std::size_t p = 0; p < n_pairs; ++p) {
          if (p == planted) continue;
          const int x = markers_flat[2 * p], y = markers_flat[2 * p + 1];
          if ((seq[i] == x && seq[i + 1] == y) || (seq[i] == y && seq[i + 1] == x)) ok = false;
        }
      }
      if (ok) return seq;
    }
    throw ConfigError("could not place markers; increase seq_len");
  }

  std::vector<Example> split(std::size_t count, Rng& rng,
                             const std::function<int(int)>& relabel) const {
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % spec.n_classes);
    rng.shuffle(std::span(labels));
    std::vector<Example> out;
    out.reserve(count);
    for (const int c : labels) out.push_back({sequence(c, rng), relabel(c)});
    return out;
  }
};

}  // namespace

GeneratedData gen_data(const GenSpec& spec) {
  spec.validate();
  const std::size_t n_pairs = spec.n_classes / 2;
  const std::size_t inv = spec.inventory_size;

  // Token line: a cyclic random ordering of the vocabulary. Task t owns the
  // window of `inv` tokens starting at offsets[t].
  std::vector<int> line(spec.vocab_size);
  std::iota(line.begin(), line.end(), 0);
  Rng line_rng(Rng::derive(spec.seed, "line"));
  line_rng.shuffle(std::span(line));
  std::vector<std::size_t> offsets(spec.n_tasks, 0);
  for (std::size_t t = 1; t < spec.n_tasks; ++t) {
    const double f = spec.n_tasks == 2
                         ? spec.overlap_max
                         : spec.overlap_max + (spec.overlap_min - spec.overlap_max) *
                                                  static_cast<double>(t - 1) /
                                                  static_cast<double>(spec.n_tasks - 2);
    const auto shift = static_cast<std::size_t>(std::llround((1.0 - f) * static_cast<double>(inv)));
    offsets[t] = offsets[t - 1] + shift;
  }

  std::vector<int> roles(spec.vocab_size);
  std::iota(roles.begin(), roles.end(), 0);
  Rng role_rng(Rng::derive(spec.seed, "roles"));
  role_rng.shuffle(std::span(roles));
  std::vector<std::size_t> role_rank(spec.vocab_size);
  for (std::size_t i = 0; i < roles.size(); ++i) role_rank[static_cast<std::size_t>(roles[i])] = i;

  GeneratedData out;
  out.pooled.task_id = "pretrain";
  out.pooled.n_classes = spec.n_tasks * spec.n_classes;
  std::set<int> pooled_inventory;

  for (std::size_t t = 0; t < spec.n_tasks; ++t) {
    const std::string id = "task" + std::to_string(t);
    Rng rng(Rng::derive(spec.seed, id));
    std::vector<int> chosen(inv);
    for (std::size_t i = 0; i < inv; ++i) chosen[i] = line[(offsets[t] + i) % spec.vocab_size];

    TaskDataset task;
    task.task_id = id;
    task.n_classes = spec.n_classes;
    task.inventory = chosen;
    std::sort(task.inventory.begin(), task.inventory.end());

    // Markers are the inventory tokens that come first in the global role
    // order, so tasks sharing tokens tend to share markers.
    std::vector<int> shuffled = chosen;
    std::sort(shuffled.begin(), shuffled.end(),
              [&](int a, int b) { return role_rank[static_cast<std::size_t>(a)] <
                                         role_rank[static_cast<std::size_t>(b)]; });
    TaskGenerator gen{spec, {}, {}};
    gen.markers_flat.assign(shuffled.begin(),
                            shuffled.begin() + static_cast<std::ptrdiff_t>(2 * n_pairs));
    gen.filler.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(2 * n_pairs), shuffled.end());
    std::sort(gen.filler.begin(), gen.filler.end());
    for (std::size_t p = 0; p < n_pairs; ++p) {
      const int a = gen.markers_flat[2 * p], b = gen.markers_flat[2 * p + 1];
      task.markers.emplace_back(a, b);
      task.markers.emplace_back(b, a);
    }

    const auto same = [](int c) { return c; };
    Rng train_rng(Rng::derive(spec.seed, id + "/train"));
    Rng eval_rng(Rng::derive(spec.seed, id + "/eval"));
    task.train = gen.split(spec.train_per_task, train_rng, same);
    task.eval = gen.split(spec.eval_per_task, eval_rng, same);

    const auto pooled_label = [&](int c) {
      return static_cast<int>(t * spec.n_classes) + c;
    };
    Rng pre_rng(Rng::derive(spec.seed, id + "/pretrain"));
    Rng pre_eval_rng(Rng::derive(spec.seed, id + "/pretrain-eval"));
    auto pre = gen.split(spec.pretrain_per_task, pre_rng, pooled_label);
    auto pre_eval = gen.split(spec.pretrain_eval_per_task, pre_eval_rng, pooled_label);
    out.pooled.train.insert(out.pooled.train.end(), pre.begin(), pre.end());
    out.pooled.eval.insert(out.pooled.eval.end(), pre_eval.begin(), pre_eval.end());
    pooled_inventory.insert(task.inventory.begin(), task.inventory.end());

    InventoryVector iv{id, std::vector<std::uint8_t>(spec.vocab_size, 0)};
    for (const int tok : task.inventory) iv.bits[static_cast<std::size_t>(tok)] = 1;
    out.inventories.push_back(std::move(iv));

    const double oracle = bigram_oracle_accuracy(task, task.eval);
    if (!(oracle > 0.95))
      throw ConfigError("generator self-check failed for " + id + ": bigram oracle accuracy " +
                        std::to_string(oracle));
    out.tasks.push_back(std::move(task));
  }
  out.pooled.inventory.assign(pooled_inventory.begin(), pooled_inventory.end());
  Rng mix(Rng::derive(spec.seed, "pretrain-mix"));
  mix.shuffle(std::span(out.pooled.train));
  return out;
}

double bigram_oracle_accuracy(const TaskDataset& task, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> counts(task.markers.size());
  for (const auto& ex : examples) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i + 1 < ex.tokens.size(); ++i) {
      for (std::size_t c = 0; c < task.markers.size(); ++c) {
        if (ex.tokens[i] == task.markers[c].first && ex.tokens[i + 1] == task.markers[c].second)
          ++counts[c];
      }
    }
    const auto best = std::max_element(counts.begin(), counts.end()) - counts.begin();
    if (best == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

TokenBatch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices,
                      std::vector<int>& labels) {
  TokenBatch batch;
  batch.batch = indices.size();
  if (indices.empty()) return batch;
  batch.seq_len = examples[indices[0]].tokens.size();
  batch.ids.reserve(batch.batch * batch.seq_len);
  for (const auto i : indices) {
    if (i >= examples.size()) throw IndexError("example index out of range");
    const auto& ex = examples[i];
    if (ex.tokens.size() != batch.seq_len) throw ShapeError("examples differ in length");
    batch.ids.insert(batch.ids.end(), ex.tokens.begin(), ex.tokens.end());
    labels.push_back(ex.label);
  }
  return batch;
}

BatchSampler::BatchSampler(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed)
    : order_(n_examples), batch_size_(batch_size), rng_(seed) {
  if (n_examples == 0 || batch_size == 0) throw ConfigError("sampler needs examples and a batch");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng_.shuffle(std::span(order_));
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> out;
  out.reserve(batch_size_);
  while (out.size() < batch_size_) {
    if (cursor_ == order_.size()) {
      rng_.shuffle(std::span(order_));
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory

namespace {

std::string join_ints(std::span<const int> v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<int> parse_ints(std::string_view text, char sep, std::string_view what) {
  std::vector<int> out;
  for (const auto& item : split_list(text, sep))
    out.push_back(static_cast<int>(parse_u64(item, what)));
  return out;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot write " + file.string());
  out << text;
  if (!out) throw FormatError(FormatErrorKind::kIo, "write failed: " + file.string());
}

void describe_task(Config& cfg, const TaskDataset& t) {
  cfg.set(t.task_id + ".n_classes", std::to_string(t.n_classes));
  cfg.set(t.task_id + ".inventory", join_ints(t.inventory, ','));
  std::string markers;
  for (std::size_t i = 0; i < t.markers.size(); ++i) {
    if (i) markers += ',';
    markers += std::to_string(t.markers[i].first) + ":" + std::to_string(t.markers[i].second);
  }
  cfg.set(t.task_id + ".markers", markers);
}

TaskDataset read_task(const Config& cfg, const std::filesystem::path& dir, const std::string& id) {
  TaskDataset t;
  t.task_id = id;
  if (!cfg.has(id + ".n_classes"))
    throw FormatError(FormatErrorKind::kMalformed, "dataset.cfg lacks section [" + id + "]");
  t.n_classes = cfg.get_size(id + ".n_classes", 0);
  t.inventory = parse_ints(cfg.get_string(id + ".inventory", ""), ',', "inventory");
  for (const auto& m : split_list(cfg.get_string(id + ".markers", ""))) {
    const auto colon = m.find(':');
    if (colon == std::string::npos) throw FormatError(FormatErrorKind::kMalformed, "bad marker " + m);
    t.markers.emplace_back(static_cast<int>(parse_u64(m.substr(0, colon), "marker")),
                           static_cast<int>(parse_u64(m.substr(colon + 1), "marker")));
  }
  t.train = read_examples(dir / (id + ".train.tsv"));
  t.eval = read_examples(dir / (id + ".eval.tsv"));
  return t;
}

}  // namespace

void write_examples(const std::filesystem::path& file, std::span<const Example> examples) {
  std::string text;
  for (const auto& ex : examples) {
    text += join_ints(ex.tokens, ' ');
    text += '\t';
    text += std::to_string(ex.label);
    text += '\n';
  }
  write_text(file, text);
}

std::vector<Example> read_examples(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot read " + file.string());
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(FormatErrorKind::kMalformed,
                        file.string() + ":" + std::to_string(line_no) + ": missing tab");
    try {
      Example ex;
      ex.tokens = parse_ints(std::string_view(line).substr(0, tab), ' ', "token");
      ex.label = static_cast<int>(parse_u64(std::string_view(line).substr(tab + 1), "label"));
      out.push_back(std::move(ex));
    } catch (const ConfigError& e) {
      throw FormatError(FormatErrorKind::kMalformed,
                        file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_inventories(const std::filesystem::path& file, std::span<const InventoryVector> inv) {
  std::string text;
  for (const auto& v : inv) {
    text += v.task_id;
    for (const auto b : v.bits) {
      text += ' ';
      text += b ? '1' : '0';
    }
    text += '\n';
  }
  write_text(file, text);
}

std::vector<InventoryVector> read_inventories(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot read " + file.string());
  std::vector<InventoryVector> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    InventoryVector v;
    if (!(ss >> v.task_id)) continue;
    std::string tok;
    while (ss >> tok) {
      if (tok != "0" && tok != "1")
        throw FormatError(FormatErrorKind::kNonBinary,
                          file.string() + ":" + std::to_string(line_no) + ": entry '" + tok + "'");
      v.bits.push_back(tok == "1" ? 1 : 0);
    }
    if (!out.empty() && out.front().bits.size() != v.bits.size())
      throw FormatError(FormatErrorKind::kMalformed,
                        file.string() + ":" + std::to_string(line_no) + ": dimension differs");
    out.push_back(std::move(v));
  }
  return out;
}

void write_dataset_dir(const GeneratedData& data, std::size_t vocab_size,
                       const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError(FormatErrorKind::kIo, "cannot create " + dir.string());
  Config cfg;
  cfg.set("vocab_size", std::to_string(vocab_size));
  const std::size_t seq_len =
      data.tasks.empty() || data.tasks[0].train.empty() ? 0 : data.tasks[0].train[0].tokens.size();
  cfg.set("seq_len", std::to_string(seq_len));
  std::string ids;
  for (const auto& t : data.tasks) {
    if (!ids.empty()) ids += ',';
    ids += t.task_id;
    describe_task(cfg, t);
    write_examples(dir / (t.task_id + ".train.tsv"), t.train);
    write_examples(dir / (t.task_id + ".eval.tsv"), t.eval);
  }
  cfg.set("tasks", ids);
  describe_task(cfg, data.pooled);
  write_examples(dir / "pretrain.train.tsv", data.pooled.train);
  write_examples(dir / "pretrain.eval.tsv", data.pooled.eval);
  write_inventories(dir / "inventories.txt", data.inventories);
  write_text(dir / "dataset.cfg", cfg.to_text());
}

DatasetDir read_dataset_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "dataset.cfg"))
    throw FormatError(FormatErrorKind::kIo, "no dataset.cfg in " + dir.string());
  const Config cfg = Config::load(dir / "dataset.cfg");
  DatasetDir out;
  out.vocab_size = cfg.get_size("vocab_size", 0);
  out.seq_len = cfg.get_size("seq_len", 0);
  for (const auto& id : split_list(cfg.get_string("tasks", "")))
    out.tasks.push_back(read_task(cfg, dir, id));
  out.pooled = read_task(cfg, dir, "pretrain");
  out.inventories = read_inventories(dir / "inventories.txt");
  return out;
}

const TaskDataset& DatasetDir::task(std::string_view id) const {
  for (const auto& t : tasks)
    if (t.task_id == id) return t;
  throw LookupError("unknown task '" + std::string(id) + "'");
}

}  // namespace maskroute
