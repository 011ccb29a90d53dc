#pragma once

/// @file json_io.hpp
/// @brief JSON shapes shared by the service and the CLI reports.

#include <string>

#include "amulet/decoder.hpp"
#include "json.hpp"

namespace amulet::json_io {

using json = nlohmann::json;

/// {"kind": "greedy"|"temperature"|"top_k"|"top_p", "temperature", "k", "p", "seed"}
json to_json(const SamplingStrategy& s);
SamplingStrategy sampling_from_json(const json& j, SamplingStrategy base = {});

/// {"method": "amulet", "alpha", "lambda", "eta", "iterations", "beta", ...}
json to_json(const Method& m);
/// Reads "method" plus any parameter keys present; missing keys keep the
/// values of `base` (or defaults when the method kind changes).
Method method_from_json(const json& j, const Method& base);

/// Per-token diagnostics as written to trace files and SSE events.
json to_json(const StepRecord& r, bool include_trace = false);

/// Request body of POST /sessions/{id}/generate. Keys are optional; `base`
/// supplies anything not given.
GenerationRequest request_from_json(const json& j, const GenerationRequest& base);
json to_json(const GenerationRequest& r);

}  // namespace amulet::json_io
