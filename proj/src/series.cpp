#include "crnsynth/series.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace crnsynth {

namespace {

void enumerate_degree(int nv, int deg, std::vector<int>& cur, int pos, std::vector<std::vector<int>>& out) {
  if (pos == nv - 1) {
    cur[pos] = deg;
    out.push_back(cur);
    return;
  }
  for (int e = deg; e >= 0; --e) {
    cur[pos] = e;
    enumerate_degree(nv, deg - e, cur, pos + 1, out);
  }
  cur[pos] = 0;
}

}  // namespace

MonomialBasis::MonomialBasis(std::vector<std::string> names, int order) : names_(std::move(names)), order_(order) {
  if (names_.empty()) throw std::invalid_argument("series basis needs at least one variable");
  if (order_ < 0) throw std::invalid_argument("negative truncation order");
  const int nv = nvars();
  std::vector<std::vector<int>> all;
  std::vector<int> cur(nv, 0);
  for (int d = 0; d <= order_; ++d) enumerate_degree(nv, d, cur, 0, all);
  size_ = static_cast<int>(all.size());
  exps_.reserve(all.size() * nv);
  for (int k = 0; k < size_; ++k) {
    exps_.insert(exps_.end(), all[k].begin(), all[k].end());
    degree_.push_back(std::accumulate(all[k].begin(), all[k].end(), 0));
    index_.emplace(all[k], k);
  }
  parent_.assign(size_, -1);
  parent_var_.assign(size_, -1);
  times_var_.assign(static_cast<size_t>(size_) * nv, -1);
  deriv_.resize(nv);
  for (int k = 0; k < size_; ++k) {
    for (int v = 0; v < nv; ++v) {
      std::vector<int> e = all[k];
      e[v] += 1;
      times_var_[static_cast<size_t>(k) * nv + v] = index_of(e);
    }
    if (k > 0) {
      for (int v = 0; v < nv; ++v) {
        if (all[k][v] > 0) {
          std::vector<int> e = all[k];
          e[v] -= 1;
          parent_[k] = index_of(e);
          parent_var_[k] = v;
          break;
        }
      }
    }
    for (int v = 0; v < nv; ++v) {
      if (all[k][v] == 0) continue;
      std::vector<int> e = all[k];
      e[v] -= 1;
      deriv_[v].push_back({k, index_of(e), all[k][v]});
    }
  }
  products_.resize(size_);
  for (int i = 0; i < size_; ++i) {
    for (int j = 0; j < size_; ++j) {
      if (degree_[i] + degree_[j] > order_) continue;
      std::vector<int> e(nv);
      for (int v = 0; v < nv; ++v) e[v] = all[i][v] + all[j][v];
      products_[i].push_back({j, index_of(e)});
    }
  }
}

std::shared_ptr<const MonomialBasis> MonomialBasis::get(const std::vector<std::string>& names, int order) {
  static std::mutex mu;
  static std::map<std::pair<std::vector<std::string>, int>, std::shared_ptr<const MonomialBasis>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(names, order);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto b = std::make_shared<const MonomialBasis>(names, order);
  cache.emplace(key, b);
  return b;
}

int MonomialBasis::var(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::out_of_range("unknown series variable '" + name + "'");
  return static_cast<int>(it - names_.begin());
}

bool MonomialBasis::has_var(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

int MonomialBasis::index_of(const std::vector<int>& e) const {
  auto it = index_.find(e);
  return it == index_.end() ? -1 : it->second;
}

}  // namespace crnsynth
