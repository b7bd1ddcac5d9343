// Copyright 2026 The UniGRPO Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

namespace unigrpo {

// `git describe`-style identifier baked in at configure time.
std::string_view build_id();

}  // namespace unigrpo
