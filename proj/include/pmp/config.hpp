#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pmp/net.hpp"

namespace pmp {

// Flat "key = value" text, one pair per line, '#' starts a comment.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text);
KvMap read_kv_file(const std::string& path);
std::string kv_to_text(const KvMap& kv);
void write_kv_file(const std::string& path, const KvMap& kv);

// typed getters; a present key that fails to parse throws
std::string kv_str(const KvMap& kv, const std::string& key, const std::string& fallback);
int64_t kv_i64(const KvMap& kv, const std::string& key, int64_t fallback);
uint64_t kv_u64(const KvMap& kv, const std::string& key, uint64_t fallback);
double kv_f64(const KvMap& kv, const std::string& key, double fallback);
bool kv_bool(const KvMap& kv, const std::string& key, bool fallback);
std::vector<int64_t> kv_i64_list(const KvMap& kv, const std::string& key,
                                 std::vector<int64_t> fallback);
std::vector<double> kv_f64_list(const KvMap& kv, const std::string& key,
                                std::vector<double> fallback);

// Network architecture keys. Absent keys keep the given base value, so a
// partial file acts as an override set.
NetConfig net_config_from_kv(const KvMap& kv, NetConfig base = NetConfig());
KvMap net_config_to_kv(const NetConfig& cfg);

}  // namespace pmp
