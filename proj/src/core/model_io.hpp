// Copyright 2026 The odet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "binary_io.hpp"
#include "odet/kernel.hpp"

namespace odet::detail {

inline constexpr char kKernelMagic[] = "OKRR1";
inline constexpr std::uint32_t kKindNystrom = 1;
inline constexpr std::uint32_t kKindRidge = 2;

void write_nystrom(ByteWriter& w, const NystromModel& model);
void write_ridge(ByteWriter& w, const RidgeModel& model);
NystromModel read_nystrom(ByteReader& r);
RidgeModel read_ridge(ByteReader& r);

void write_hyper(ByteWriter& w, const KernelHyperParams& h);
KernelHyperParams read_hyper(ByteReader& r);

}  // namespace odet::detail
