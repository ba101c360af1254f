#pragma once

#include <string>
#include <variant>

#include "kdd/distiller.hpp"
#include "kdd/teacher.hpp"

namespace kdd {

// Plain-text checkpoint, versioned by the magic line `KD-DEBIAS-CKPT 1`.
// Header is `key=value` pairs, then a blank line, then one `[section]` per
// parameter table with one whitespace-separated row per entity. Values are
// written with enough digits to round-trip doubles exactly.

void save_checkpoint(const std::string& path, const TeacherModel& model);
void save_checkpoint(const std::string& path, const StudentModel& model);

using AnyModel = std::variant<TeacherModel, StudentModel>;

// Errors name the offending file and line.
AnyModel load_checkpoint(const std::string& path);

}  // namespace kdd
