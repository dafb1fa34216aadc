// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "emert/kernels.hpp"

namespace emert::kernels {
namespace {

const KernelTable* resolve() {
  if (const char* env = std::getenv("EMERT_KERNELS")) {
    if (std::string(env) == "scalar") return &scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{resolve()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void force(Isa isa) {
  const KernelTable* t = nullptr;
  switch (isa) {
    case Isa::kScalar: t = &scalar_table(); break;
    case Isa::kAvx2: t = avx2_table(); break;
    case Isa::kNeon: t = neon_table(); break;
  }
  if (t == nullptr)
    throw std::runtime_error("kernel variant " + std::string(isa_name(isa)) +
                             " is not available on this machine");
  slot().store(t, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

}  // namespace emert::kernels
