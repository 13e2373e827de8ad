#pragma once

#include <string>

#include "pat/episodes.hpp"

namespace pat {

// Layout under `dir`:
//   manifest.jsonl   one {"image","mask","class_id","class_name","split"} object per line
//   classes.json     optional generator parameters per class
//   images/*.pgm|ppm, masks/*.pgm
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

}  // namespace pat
