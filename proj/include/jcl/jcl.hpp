// Copyright 2026 The jcl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header for the library (without the JSON config layer, which
// lives in jcl/io.hpp).

#pragma once

#include "jcl/adversary.hpp"
#include "jcl/core.hpp"
#include "jcl/harness.hpp"
#include "jcl/normal.hpp"
#include "jcl/quitting.hpp"
#include "jcl/rng.hpp"
#include "jcl/stats.hpp"
#include "jcl/strategy.hpp"
#include "jcl/strong.hpp"
#include "jcl/weak.hpp"
