// Copyright 2026 The ReplyBank Authors
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

#ifndef REPLYBANK_COMMON_H_
#define REPLYBANK_COMMON_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace replybank {

using ResponseId = std::int32_t;
using ClassId = std::int32_t;
using ClusterId = std::int32_t;

// Bad input: malformed files, out-of-range values, violated preconditions.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem or stream failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> SplitWhitespace(std::string_view text);
std::vector<std::string_view> SplitTabs(std::string_view line);
std::string JoinTokens(const std::vector<std::string>& tokens);

std::string ReadFile(const std::string& path);
// Writes via a temporary file and rename so readers never see a torn file.
void WriteFileAtomic(const std::string& path, std::string_view contents);

std::string Sha256Hex(std::string_view data);
std::string Sha256File(const std::string& path);

}  // namespace replybank

#endif  // REPLYBANK_COMMON_H_
