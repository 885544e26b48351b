#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <list>
#include <span>
#include <unordered_map>
#include <vector>

namespace dsakv {

/// One KV entry in the reserved LL-cache region.
struct CacheKey {
    std::uint32_t tenant = 0;
    std::uint32_t layer = 0;
    std::uint32_t token = 0;

    bool operator==(const CacheKey&) const = default;
    auto operator<=>(const CacheKey&) const = default;
};

struct CacheKeyHash {
    std::size_t operator()(const CacheKey& k) const noexcept {
        std::uint64_t h = (std::uint64_t{k.tenant} << 48) ^ (std::uint64_t{k.layer} << 32) ^ k.token;
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
        return static_cast<std::size_t>(h);
    }
};

enum class Access { hit, miss };

/// Fully-associative LRU set of KV tokens. Lookup and insertion are separate so a caller
/// can decide what a fetch brings in.
class LruState {
public:
    explicit LruState(std::size_t capacity) : capacity_(capacity) {}

    /// Hit moves `key` to most-recent; a miss leaves the state untouched.
    Access access(const CacheKey& key);

    /// Inserts keys in order as most-recent (re-inserting a resident key refreshes it),
    /// then evicts from the LRU end until the capacity holds. Returns evicted keys, oldest first.
    std::vector<CacheKey> insert(std::span<const CacheKey> keys);

    bool contains(const CacheKey& key) const { return index_.count(key) != 0; }
    std::size_t size() const { return order_.size(); }
    std::size_t capacity() const { return capacity_; }

    /// Resident keys from most- to least-recently used.
    std::vector<CacheKey> recency_order() const { return {order_.begin(), order_.end()}; }

private:
    std::size_t capacity_;
    std::list<CacheKey> order_;  // front = most recent
    std::unordered_map<CacheKey, std::list<CacheKey>::iterator, CacheKeyHash> index_;
};

}  // namespace dsakv
