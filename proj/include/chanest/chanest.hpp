// SPDX-License-Identifier: Apache-2.0
//
// chanest: structured tensor channel estimation for MU-MIMO uplink
// Copyright (C) 2026 The chanest authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

// Umbrella header.

#ifndef CHANEST_CHANEST_HPP
#define CHANEST_CHANEST_HPP

#include "chanest/airlink.hpp"
#include "chanest/als_ref.hpp"
#include "chanest/bench.hpp"
#include "chanest/channel_model.hpp"
#include "chanest/common.hpp"
#include "chanest/linalg.hpp"
#include "chanest/tensor_core.hpp"
#include "chanest/version.hpp"
#include "chanest/vsd_fort.hpp"

#endif // CHANEST_CHANEST_HPP
