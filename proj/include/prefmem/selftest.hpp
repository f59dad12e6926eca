#pragma once

#include <filesystem>
#include <ostream>

namespace prefmem {

struct SelftestOptions {
  std::filesystem::path data_dir;    // bundled taxonomy + fixture corpus + playbook
  std::filesystem::path out_dir;     // scratch storage and rendered reports
  std::filesystem::path golden_dir;  // expected report bytes; empty skips comparison
  bool update_golden = false;        // rewrite golden files instead of comparing
};

// Runs the offline fixture flow end to end (ingest -> maintain -> retrieve
// -> eval) on the mock backend, renders the reports, and compares them
// byte-for-byte against the golden files. No network is involved: the
// gateway is constructed with a live-backend factory that aborts the run.
// Prints one line per step; returns 0 iff everything passed.
int run_selftest(const SelftestOptions& options, std::ostream& log);

}  // namespace prefmem
