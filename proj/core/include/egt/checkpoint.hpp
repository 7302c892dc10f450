// Copyright 2026 The EGT Authors.
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

#ifndef EGT_CHECKPOINT_HPP_
#define EGT_CHECKPOINT_HPP_

#include <filesystem>
#include <string>

#include "egt/model.hpp"

namespace egt {

// EGT1 checkpoint:
//
//   EGT1
//   model head=<cosine|relation> beta=<value>
//   network name=<encoder|relation> input=<d0,d1,...> layers=<n>
//   layer <kind> [weight=<shape> bias=<shape>] [window=<w>] [stride=<s>] [padding=<p>]
//   ...
//   end
//
// followed by little-endian float32 parameter blocks, network by network and
// layer by layer, weight before bias. Parameters are rounded to float32.
std::string encode_checkpoint(const FewShotModel& model);
FewShotModel decode_checkpoint(const std::string& bytes,
                               const std::string& source = "checkpoint");

void save_checkpoint(const FewShotModel& model, const std::filesystem::path& path);
FewShotModel load_checkpoint(const std::filesystem::path& path);

}  // namespace egt

#endif  // EGT_CHECKPOINT_HPP_
