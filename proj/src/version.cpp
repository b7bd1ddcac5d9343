// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unigrpo/version.hpp"

#ifndef UNIGRPO_BUILD_ID
#define UNIGRPO_BUILD_ID "unknown"
#endif

namespace unigrpo {

std::string_view build_id() { return UNIGRPO_BUILD_ID; }

}  // namespace unigrpo
