#pragma once

#include <string>

#include "rap/graph/message_graph.hpp"
#include "rap/wire/frame.hpp"

namespace rap::wire {

/// service_response carrying a graph call result. Failures put
/// "<status>: <detail>" in the text field.
WireFrame response_frame(std::string id, std::string service, const CallResult& result);

/// Inverse of response_frame. Unprefixed failure text maps to provider_fault.
CallResult call_result_from(const WireFrame& response);

}  // namespace rap::wire
