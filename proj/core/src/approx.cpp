#include "minconv/approx.hpp"

#include "minconv/op_audit.hpp"

namespace minconv {

namespace audit {

namespace {
thread_local OpCounts* g_active = nullptr;
}  // namespace

OpCounts* active_counts() noexcept { return g_active; }

Scope::Scope(OpCounts& sink) noexcept : previous_(g_active) { g_active = &sink; }

Scope::~Scope() { g_active = previous_; }

}  // namespace audit
}  // namespace minconv
