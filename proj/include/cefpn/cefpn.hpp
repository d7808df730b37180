// Copyright 2026 The cefpn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "cefpn/backbone.hpp"
#include "cefpn/cost_model.hpp"
#include "cefpn/errors.hpp"
#include "cefpn/gradcheck.hpp"
#include "cefpn/harness.hpp"
#include "cefpn/layers.hpp"
#include "cefpn/neck.hpp"
#include "cefpn/neck_config.hpp"
#include "cefpn/neck_params.hpp"
#include "cefpn/ops.hpp"
#include "cefpn/random.hpp"
#include "cefpn/tape.hpp"
#include "cefpn/tensor.hpp"
