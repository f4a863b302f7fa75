#pragma once

#include "rcspa/process.hpp"

#include <string>

namespace rcspa {

inline constexpr int kSpecSchemaVersion = 1;

/**
 * Process spec documents (JSON):
 *
 *   {
 *     "schema_version": 1,
 *     "name": "gw",
 *     "d0": 1,                       optional, must match x0
 *     "x0": [5],
 *     "x0_types": ["integer"],
 *     "steps": [
 *       {"dim": 1, "types": ["integer"],
 *        "innovation": {"kind": "constant", "params": [0]},
 *        "contributions": [
 *          {"from_step": 0, "from_coord": 1, "kind": "iid-sum",
 *           "unit": {"kind": "poisson", "params": [1.5]}}]}
 *     ]
 *   }
 *
 * CGF nodes may carry "children" (compound-poisson, independent, sum, scale,
 * tilted). from_coord is 1-based. Errors are ParseError with the field path.
 */
ProcessSpec parse_spec(const std::string& text);
ProcessSpec load_spec_file(const std::string& path);
std::string serialize_spec(const ProcessSpec& process);

}  // namespace rcspa
