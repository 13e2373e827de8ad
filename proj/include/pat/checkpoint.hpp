#pragma once

#include <string>

#include "pat/nn.hpp"

namespace pat {
inline namespace PAT_ABI {

// "PATCKPT1", u64 LE manifest length, JSON [{name, shape}], then binary32 LE
// payloads in manifest order.
void save_checkpoint(const std::string& path, const ParamStore& store);

// Loads into an already-shaped store. Everything is validated before any
// tensor is written, so a failed load leaves the store untouched.
void load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace PAT_ABI
}  // namespace pat
