#include "dsakv/lru.hpp"

namespace dsakv {

Access LruState::access(const CacheKey& key) {
    auto it = index_.find(key);
    if (it == index_.end()) return Access::miss;
    order_.splice(order_.begin(), order_, it->second);
    return Access::hit;
}

std::vector<CacheKey> LruState::insert(std::span<const CacheKey> keys) {
    std::vector<CacheKey> evicted;
    for (const CacheKey& key : keys) {
        auto it = index_.find(key);
        if (it != index_.end()) {
            order_.splice(order_.begin(), order_, it->second);
            continue;
        }
        order_.push_front(key);
        index_.emplace(key, order_.begin());
    }
    while (order_.size() > capacity_) {
        evicted.push_back(order_.back());
        index_.erase(order_.back());
        order_.pop_back();
    }
    return evicted;
}

}  // namespace dsakv
