#include "symlms/multiset.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace symlms {

namespace {

void enumerate(int dim, int degree, std::vector<int>& cur,
               std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == degree) {
    out.push_back(cur);
    return;
  }
  const int lo = cur.empty() ? 0 : cur.back();
  for (int p = lo; p < dim; ++p) {
    cur.push_back(p);
    enumerate(dim, degree, cur, out);
    cur.pop_back();
  }
}

}  // namespace

MultisetTable::MultisetTable(int dim, int degree) : dim_(dim), degree_(degree) {
  if (dim < 1 || degree < 0) throw std::invalid_argument("MultisetTable: dim >= 1, degree >= 0 required");
  std::vector<int> cur;
  enumerate(dim, degree, cur, members_);
  t_power_.reserve(members_.size());
  for (const auto& m : members_) t_power_.push_back(std::accumulate(m.begin(), m.end(), 0));

  // Extension transitions into the next level, looked up by binary search on
  // the lexicographic order.
  std::vector<std::vector<int>> next;
  enumerate(dim, degree + 1, cur, next);
  extend_.assign(members_.size(), std::vector<int>(dim, -1));
  for (int i = 0; i < static_cast<int>(members_.size()); ++i) {
    for (int p = 0; p < dim; ++p) {
      std::vector<int> ext = members_[i];
      ext.insert(std::upper_bound(ext.begin(), ext.end(), p), p);
      const auto it = std::lower_bound(next.begin(), next.end(), ext);
      extend_[i][p] = static_cast<int>(it - next.begin());
    }
  }
}

const MultisetTable& MultisetTable::get(int dim, int degree) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<MultisetTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{dim, degree}];
  if (!slot) slot.reset(new MultisetTable(dim, degree));
  return *slot;
}

}  // namespace symlms
