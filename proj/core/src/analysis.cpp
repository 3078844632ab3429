#include "maskroute/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "maskroute/errors.hpp"
#include "maskroute/router.hpp"

namespace maskroute {

double binary_cosine(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size())
    throw ShapeError("cosine of vectors of length " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] != 0;
    nb += b[i] != 0;
    both += (a[i] != 0) && (b[i] != 0);
  }
  if (na == 0 || nb == 0) return 0.0;
  return static_cast<double>(both) / std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
}

double mask_cosine(const LayerMask& a, const LayerMask& b) {
  if (a.numel() != b.numel())
    throw ShapeError("masks " + a.name + " " + shape_str(a.shape) + " and " + b.name + " " +
                     shape_str(b.shape) + " differ in size");
  return binary_cosine(a.bits, b.bits);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ShapeError("correlation needs two vectors of equal length >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw UndefinedCorrelationError("correlation undefined: a vector has zero variance");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ShapeError("correlation needs two vectors of equal length >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace {

std::vector<const TaskMasks*> sorted_tasks(std::span<const TaskMasks> tasks) {
  std::vector<const TaskMasks*> out;
  for (const auto& t : tasks) out.push_back(&t);
  std::sort(out.begin(), out.end(),
            [](const TaskMasks* a, const TaskMasks* b) { return a->task_id < b->task_id; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i]->task_id == out[i - 1]->task_id)
      throw RegistryError("duplicate task '" + out[i]->task_id + "'");
  return out;
}

std::vector<std::string> common_layers(const std::vector<const TaskMasks*>& tasks) {
  std::vector<std::string> names;
  if (tasks.empty()) return names;
  for (const auto& m : tasks.front()->masks.layers) names.push_back(m.name);
  for (const auto* t : tasks) {
    const auto& layers = t->masks.layers;
    bool same = layers.size() == names.size();
    for (std::size_t i = 0; same && i < names.size(); ++i) same = layers[i].name == names[i];
    if (!same)
      throw MaskError("task " + t->task_id + " masks different layers than " +
                      tasks.front()->task_id);
  }
  return names;
}

}  // namespace

SimilarityMatrix similarity_matrix(std::span<const TaskMasks> tasks) {
  const auto sorted = sorted_tasks(tasks);
  SimilarityMatrix sm;
  sm.layers = common_layers(sorted);
  for (const auto* t : sorted) sm.task_ids.push_back(t->task_id);
  const std::size_t n = sorted.size();
  for (std::size_t l = 0; l < sm.layers.size(); ++l) {
    std::vector<double> v(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        const double c = mask_cosine(sorted[i]->masks.layers[l], sorted[j]->masks.layers[l]);
        v[i * n + j] = v[j * n + i] = c;
      }
    }
    sm.values.push_back(std::move(v));
  }
  return sm;
}

CorrelationReport correlation_report(std::span<const TaskMasks> tasks,
                                     std::span<const InventoryVector> inventories,
                                     std::size_t layer) {
  if (tasks.size() < 3)
    throw InsufficientPairsError("correlation needs at least 3 tasks, got " +
                                 std::to_string(tasks.size()));
  const SimilarityMatrix sm = similarity_matrix(tasks);
  if (layer >= sm.layers.size())
    throw IndexError("layer " + std::to_string(layer) + " out of range; tasks mask " +
                     std::to_string(sm.layers.size()) + " layers");

  const std::size_t n = sm.task_ids.size();
  std::vector<const InventoryVector*> inv(n, nullptr);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& v : inventories)
      if (v.task_id == sm.task_ids[i]) inv[i] = &v;
    if (!inv[i]) throw LookupError("no inventory for task '" + sm.task_ids[i] + "'");
  }

  CorrelationReport rep;
  rep.layer_index = layer;
  rep.layer = sm.layers[layer];
  std::vector<double> inv_cos;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double ic = binary_cosine(inv[i]->bits, inv[j]->bits);
      rep.pairs.push_back({sm.task_ids[i], sm.task_ids[j], sm.at(layer, i, j), ic});
      inv_cos.push_back(ic);
    }
  }
  for (std::size_t l = 0; l < sm.layers.size(); ++l) {
    std::vector<double> mc;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) mc.push_back(sm.at(l, i, j));
    LayerCorrelation lc{sm.layers[l], std::nullopt, std::nullopt};
    try {
      lc.pearson = pearson(mc, inv_cos);
      lc.spearman = spearman(mc, inv_cos);
    } catch (const UndefinedCorrelationError&) {
      if (l == layer) throw;
    }
    if (l == layer) {
      rep.pearson = *lc.pearson;
      rep.spearman = *lc.spearman;
    }
    rep.per_layer.push_back(std::move(lc));
  }
  return rep;
}

CorrelationReport correlation_report(const MaskRegistry& registry,
                                     std::span<const InventoryVector> inventories,
                                     std::size_t layer) {
  std::vector<TaskMasks> tasks;
  for (const auto& id : registry.task_ids()) tasks.push_back({id, registry.slot(id).masks});
  return correlation_report(tasks, inventories, layer);
}

std::string CorrelationReport::csv() const {
  std::ostringstream os;
  os << "pair_id,layer,mask_cos,inventory_cos\n";
  char buf[256];
  for (const auto& p : pairs) {
    std::snprintf(buf, sizeof buf, "%s|%s,%s,%.12f,%.12f\n", p.task_a.c_str(), p.task_b.c_str(),
                  layer.c_str(), p.mask_cos, p.inventory_cos);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "summary,%s,pearson=%.12f,spearman=%.12f\n", layer.c_str(),
                pearson, spearman);
  os << buf;
  return os.str();
}

std::string CorrelationReport::per_layer_csv() const {
  std::ostringstream os;
  os << "layer,pearson,spearman\n";
  char buf[128];
  for (const auto& l : per_layer) {
    os << l.layer << ',';
    if (l.pearson) {
      std::snprintf(buf, sizeof buf, "%.12f,%.12f", *l.pearson, *l.spearman);
      os << buf;
    } else {
      os << "NA,NA";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace maskroute
